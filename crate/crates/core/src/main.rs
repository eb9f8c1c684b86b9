fn main() {
    std::process::exit(fdrboot::cli::main_with_args(std::env::args_os()));
}

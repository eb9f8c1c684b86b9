//! Compiles the guide's code blocks as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/thresholds.md")]
mod thresholds {}

#[doc = include_str!("../../../book/src/classical.md")]
mod classical {}

#[doc = include_str!("../../../book/src/null-draws.md")]
mod null_draws {}

#[doc = include_str!("../../../book/src/dueling-bootstrap.md")]
mod dueling_bootstrap {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}

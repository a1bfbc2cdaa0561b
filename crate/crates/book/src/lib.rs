//! The guide in `book/` has no way to run its listings, so each chapter is
//! pulled in here as module docs and `cargo test --doc` runs them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/field.md")]
pub mod field {}

#[doc = include_str!("../../../book/src/mix-columns.md")]
pub mod mix_columns {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/keys.md")]
pub mod keys {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}

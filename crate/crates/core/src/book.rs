//! Doc-test bridge for the guide under `book/`.
//!
//! mdBook cannot run chapter snippets against this crate, so each chapter
//! is attached to a hidden module here and `cargo test --doc` compiles and
//! runs every Rust block in the book. One module per chapter keeps test
//! failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/logged-data.md")]
mod logged_data {}

#[doc = include_str!("../../../book/src/policies.md")]
mod policies {}

#[doc = include_str!("../../../book/src/estimators.md")]
mod estimators {}

#[doc = include_str!("../../../book/src/bounds.md")]
mod bounds {}

#[doc = include_str!("../../../book/src/learning.md")]
mod learning {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}

//! Pattern matching and destructive rewriting over operator terms.

pub mod bench;
pub mod declarative;
pub mod differential;
pub mod frontend;
pub mod machine;
pub mod pattern;
pub mod rewrite;
pub mod term;

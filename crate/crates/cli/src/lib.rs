//! Problem files, the expression grammar and the commands behind the `pmp`
//! binary.

pub mod commands;
pub mod error;
pub mod expr;
pub mod problem;

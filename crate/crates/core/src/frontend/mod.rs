//! Frontend: concrete syntax in and out.
//!
//! `.chor` source is UTF-8. Statements end with `;`, blocks use `{}`,
//! fractional permission amounts are written `num\den`, and the
//! choreography-level keywords (`\endpoint`, `\chor`, `\msg`, `\sender`,
//! `\receiver`, `\forall`) are single tokens. `&&` binds tighter than `**`,
//! which binds tighter than the right-associative `==>`; comparisons do not
//! chain. Comments are dropped, except that `//!` pragma lines are carried
//! through the AST and re-emitted by the pretty-printer.

pub mod json;
pub mod lexer;
pub mod parser;
pub mod pretty;

pub use json::{from_json, to_json, JsonError, SCHEMA_VERSION};
pub use parser::parse;
pub use pretty::pretty;

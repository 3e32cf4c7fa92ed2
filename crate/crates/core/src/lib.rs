//! Source-to-source automatic differentiation for a small C-like numeric
//! language.
//!
//! Functions are parsed into a typed AST ([`ast`]), transformed into
//! derivative functions in forward mode ([`ad::forward`]) or into
//! tape-based gradient functions in reverse mode ([`ad::reverse`]), and run
//! by a tree-walking interpreter ([`eval`]). [`numdiff`] provides the
//! central finite-difference baseline that [`bench`] and [`fitting`]
//! compare against.

pub mod ad;
pub mod ast;
pub mod bench;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod lexer;
pub mod models;
pub mod numdiff;
pub mod parser;
pub mod point;
pub mod printer;
pub mod validate;

pub use ast::Program;
pub use error::{ParseError, Pos};
pub use eval::{call, call_counted, Array, CompiledProgram, EvalError, EvalStats, Interpreter, Tape, Value};
pub use parser::{parse, parse_with_map};
pub use printer::print;
pub use validate::{validate, DiagKind, Diagnostic};

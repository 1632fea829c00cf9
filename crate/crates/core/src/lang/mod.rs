//! Syntax, values and traces.

pub mod ast;
pub mod parser;
pub mod printer;
pub mod trace;
pub mod value;

pub use ast::{Builtin, DistKind, Expr, Line, Program, Stmt, Var, DENSITY_VAR};
pub use parser::{parse, parse_expr, ParseError};
pub use printer::{expr_to_string, pretty_print};
pub use trace::Trace;
pub use value::Value;

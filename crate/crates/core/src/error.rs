use std::fmt;

use thiserror::Error;

/// 1-based line/column in source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: {message} (expected {expected})")]
    Syntax { pos: Pos, message: String, expected: String },
    #[error("{pos}: type error: {message} in `{expr}`")]
    Type { pos: Pos, message: String, expr: String },
    #[error("{pos}: function `{function}` can reach its end without returning")]
    MissingReturn { pos: Pos, function: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::Type { pos, .. }
            | ParseError::MissingReturn { pos, .. } => *pos,
        }
    }

    /// Render as `file:line:col: message`.
    pub fn render(&self, file: &str) -> String {
        let pos = self.pos();
        let msg = match self {
            ParseError::Syntax { message, expected, .. } => {
                format!("{message} (expected {expected})")
            }
            ParseError::Type { message, expr, .. } => format!("{message} in `{expr}`"),
            ParseError::MissingReturn { function, .. } => {
                format!("function `{function}` can reach its end without returning")
            }
        };
        format!("{file}:{}:{}: {msg}", pos.line, pos.col)
    }
}

use crate::error::{ParseError, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Double(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Star,
    Slash,
    Plus,
    Minus,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    SlashAssign,
    PlusPlus,
    MinusMinus,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Colon2,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Double(v) => format!("number `{v:?}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Assign => "=",
            Tok::PlusAssign => "+=",
            Tok::MinusAssign => "-=",
            Tok::StarAssign => "*=",
            Tok::SlashAssign => "/=",
            Tok::PlusPlus => "++",
            Tok::MinusMinus => "--",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Colon2 => "::",
            Tok::Ident(_) | Tok::Int(_) | Tok::Double(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! advance {
        ($n:expr) => {{
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance!(2);
            loop {
                if i >= chars.len() {
                    return Err(ParseError::Syntax {
                        pos,
                        message: "unterminated block comment".into(),
                        expected: "`*/`".into(),
                    });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance!(2);
                    break;
                }
                advance!(1);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance!(1);
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Ident(s), pos });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance!(1);
            }
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                advance!(1);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance!(1);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    advance!(j - i);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance!(1);
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Double(text.parse().map_err(|_| bad_number(pos, &text))?)
            } else {
                Tok::Int(text.parse().map_err(|_| bad_number(pos, &text))?)
            };
            out.push(Token { tok, pos });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('+', Some('=')) => (Tok::PlusAssign, 2),
            ('-', Some('=')) => (Tok::MinusAssign, 2),
            ('*', Some('=')) => (Tok::StarAssign, 2),
            ('/', Some('=')) => (Tok::SlashAssign, 2),
            ('+', Some('+')) => (Tok::PlusPlus, 2),
            ('-', Some('-')) => (Tok::MinusMinus, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            (':', Some(':')) => (Tok::Colon2, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Semi, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('=', _) => (Tok::Assign, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            _ => {
                return Err(ParseError::Syntax {
                    pos,
                    message: format!("unexpected character `{c}`"),
                    expected: "a token".into(),
                })
            }
        };
        advance!(len);
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

fn bad_number(pos: Pos, text: &str) -> ParseError {
    ParseError::Syntax {
        pos,
        message: format!("numeric literal `{text}` out of range"),
        expected: "a representable number".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("x += 1e-8 * 2.0 - 3;"),
            vec![
                Tok::Ident("x".into()),
                Tok::PlusAssign,
                Tok::Double(1e-8),
                Tok::Star,
                Tok::Double(2.0),
                Tok::Minus,
                Tok::Int(3),
                Tok::Semi,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_are_skipped_and_positions_tracked() {
        let t = tokenize("// c\n  /* a\n b */ i++").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("i".into()));
        assert_eq!(t[0].pos, Pos { line: 3, col: 7 });
        assert_eq!(t[1].tok, Tok::PlusPlus);
    }

    #[test]
    fn stray_character_is_an_error() {
        assert!(matches!(tokenize("a @ b"), Err(ParseError::Syntax { .. })));
    }
}

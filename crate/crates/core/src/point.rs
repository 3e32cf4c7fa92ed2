//! Textual argument lists: `name=value` pairs separated by commas, where a
//! value is a number or a bracketed list of numbers, e.g.
//! `p=[1, 2, 3], dim=3`.

use thiserror::Error;

use crate::ast::{FuncDef, Type};
use crate::eval::Value;
use crate::printer::literal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PointError {
    #[error("point syntax at column {col}: {message}")]
    Syntax { col: usize, message: String },
    #[error("`{0}` is given more than once")]
    Duplicate(String),
    #[error("`{function}` has no parameter `{name}`")]
    UnknownParameter { function: String, name: String },
    #[error("missing value for `{0}`")]
    Missing(String),
    #[error("`{name}` expects {expected}")]
    WrongKind { name: String, expected: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointValue {
    /// A number and whether it was written as an integer.
    Num(f64, bool),
    List(Vec<f64>),
}

struct Cursor<'a> {
    src: &'a str,
    at: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.at..].starts_with(char::is_whitespace) {
            self.at += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.at..].chars().next()
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, PointError> {
        Err(PointError::Syntax { col: self.at + 1, message: message.into() })
    }

    fn eat(&mut self, c: char) -> Result<(), PointError> {
        if self.peek() == Some(c) {
            self.at += 1;
            Ok(())
        } else {
            self.fail(format!("expected `{c}`"))
        }
    }

    fn name(&mut self) -> Result<String, PointError> {
        self.skip_ws();
        let rest = &self.src[self.at..];
        let len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
        if len == 0 || rest.starts_with(|c: char| c.is_ascii_digit()) {
            return self.fail("expected a parameter name");
        }
        self.at += len;
        Ok(rest[..len].to_string())
    }

    fn number(&mut self) -> Result<(f64, bool), PointError> {
        self.skip_ws();
        let rest = &self.src[self.at..];
        let len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || "+-.".contains(c))).unwrap_or(rest.len());
        let text = &rest[..len];
        if let Ok(i) = text.parse::<i64>() {
            self.at += len;
            return Ok((i as f64, true));
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.at += len;
                Ok((v, false))
            }
            _ => self.fail(format!("`{text}` is not a finite number")),
        }
    }

    fn value(&mut self) -> Result<PointValue, PointError> {
        if self.peek() != Some('[') {
            let (v, int) = self.number()?;
            return Ok(PointValue::Num(v, int));
        }
        self.at += 1;
        let mut items = Vec::new();
        if self.peek() == Some(']') {
            self.at += 1;
            return Ok(PointValue::List(items));
        }
        loop {
            items.push(self.number()?.0);
            match self.peek() {
                Some(',') => self.at += 1,
                Some(']') => {
                    self.at += 1;
                    return Ok(PointValue::List(items));
                }
                _ => return self.fail("expected `,` or `]`"),
            }
        }
    }
}

/// Parse `name=value, ...` into pairs in source order. The empty string is
/// the empty point.
pub fn parse_point(src: &str) -> Result<Vec<(String, PointValue)>, PointError> {
    let mut c = Cursor { src, at: 0 };
    let mut out: Vec<(String, PointValue)> = Vec::new();
    if c.peek().is_none() {
        return Ok(out);
    }
    loop {
        let name = c.name()?;
        c.eat('=')?;
        let v = c.value()?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(PointError::Duplicate(name));
        }
        out.push((name, v));
        match c.peek() {
            None => return Ok(out),
            Some(',') => c.at += 1,
            Some(_) => return c.fail("expected `,` between bindings"),
        }
    }
}

/// Arguments for `f` in parameter order. Omitted parameters take their
/// default; an omitted int parameter with no default takes the common
/// length of the array arguments.
pub fn bind_point(f: &FuncDef, src: &str) -> Result<Vec<Value>, PointError> {
    let mut given = parse_point(src)?;
    if let Some((name, _)) = given.iter().find(|(n, _)| !f.params.iter().any(|p| p.name == *n)) {
        return Err(PointError::UnknownParameter { function: f.name.clone(), name: name.clone() });
    }
    let lengths: Vec<usize> = given.iter().filter_map(|(_, v)| if let PointValue::List(l) = v { Some(l.len()) } else { None }).collect();
    let inferred = match lengths.split_first() {
        Some((first, rest)) if rest.iter().all(|l| l == first) => Some(*first as i64),
        _ => None,
    };
    f.params
        .iter()
        .map(|p| {
            let v = given.iter().position(|(n, _)| *n == p.name).map(|i| given.swap_remove(i).1);
            let wrong = |expected| PointError::WrongKind { name: p.name.clone(), expected };
            match (p.ty, v) {
                (Type::Double, Some(PointValue::Num(v, _))) => Ok(Value::D(v)),
                (Type::Int, Some(PointValue::Num(v, true))) => Ok(Value::I(v as i64)),
                (Type::DoubleArray, Some(PointValue::List(l))) => Ok(Value::array(&l)),
                (Type::Double, Some(_)) => Err(wrong("a number")),
                (Type::Int, Some(_)) => Err(wrong("an integer")),
                (Type::DoubleArray, Some(_)) => Err(wrong("a bracketed list")),
                (_, None) => match (p.default, p.ty) {
                    (Some(d), Type::Int) => Ok(Value::I(d.as_f64() as i64)),
                    (Some(d), _) => Ok(Value::D(d.as_f64())),
                    (None, Type::Int) => inferred.map(Value::I).ok_or_else(|| PointError::Missing(p.name.clone())),
                    (None, _) => Err(PointError::Missing(p.name.clone())),
                },
                _ => Err(wrong("a value it can hold")),
            }
        })
        .collect()
}

/// Render arguments back into point syntax.
pub fn format_point(f: &FuncDef, args: &[Value]) -> String {
    f.params
        .iter()
        .zip(args)
        .map(|(p, v)| {
            let v = match v {
                Value::D(d) => literal(crate::ast::Literal::Double(*d)),
                Value::I(i) => i.to_string(),
                Value::Arr(a) => format!("[{}]", a.to_vec().iter().map(|x| literal(crate::ast::Literal::Double(*x))).collect::<Vec<_>>().join(", ")),
            };
            format!("{}={v}", p.name)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use proptest::prelude::*;

    fn func(src: &str) -> FuncDef {
        parse(src).unwrap().functions.remove(0)
    }

    #[test]
    fn parses_numbers_and_lists() {
        let p = parse_point(" p = [1, 2.5,-3e2] , dim=3,s=-0.5").unwrap();
        assert_eq!(
            p,
            vec![
                ("p".into(), PointValue::List(vec![1.0, 2.5, -300.0])),
                ("dim".into(), PointValue::Num(3.0, true)),
                ("s".into(), PointValue::Num(-0.5, false)),
            ]
        );
        assert_eq!(parse_point("").unwrap(), vec![]);
        assert_eq!(parse_point("a=[]").unwrap(), vec![("a".into(), PointValue::List(vec![]))]);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["p", "p=", "p=[1,", "p=[1 2]", "=1", "1=2", "a=1 b=2", "a=nan", "a=1,", "a=1,a=2"] {
            assert!(parse_point(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_point("a=1,a=2"), Err(PointError::Duplicate("a".into())));
    }

    #[test]
    fn binds_in_parameter_order() {
        let f = func("double sum(double* p, int dim) { return p[0]; }");
        let args = bind_point(&f, "dim=3, p=[1,2,3]").unwrap();
        assert_eq!(args, vec![Value::array(&[1.0, 2.0, 3.0]), Value::I(3)]);
        assert_eq!(bind_point(&f, "p=[1,2]").unwrap()[1], Value::I(2));
        assert!(matches!(bind_point(&f, "p=[1], q=2"), Err(PointError::UnknownParameter { .. })));
        assert!(matches!(bind_point(&f, "p=1"), Err(PointError::WrongKind { .. })));
        assert!(matches!(bind_point(&f, "p=[1], dim=1.5"), Err(PointError::WrongKind { .. })));
        assert_eq!(bind_point(&f, "dim=1"), Err(PointError::Missing("p".into())));
    }

    #[test]
    fn defaults_fill_omitted_parameters() {
        let f = func("double bw(double x, double gamma, double x0 = 0) { return x; }");
        assert_eq!(bind_point(&f, "x=1,gamma=2").unwrap(), vec![Value::D(1.0), Value::D(2.0), Value::D(0.0)]);
        assert_eq!(bind_point(&f, "x=1,gamma=2,x0=3").unwrap()[2], Value::D(3.0));
    }

    proptest! {
        #[test]
        fn format_then_bind_is_identity(p in prop::collection::vec(-1e9f64..1e9, 0..6), s in -1e9f64..1e9) {
            let f = func("double g(double* p, double s, int n) { return s; }");
            let args = vec![Value::array(&p), Value::D(s), Value::I(p.len() as i64)];
            prop_assert_eq!(bind_point(&f, &format_point(&f, &args)).unwrap(), args);
        }
    }
}

//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr     := term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := '-' factor | power
//! power    := atom ('^' exponent)?
//! atom     := number | ident | func '(' expr ')' | '(' expr ')'
//! func     := sqrt | exp | log | sin | cos | abs
//! exponent := ['-'] integer | '(' ['-'] integer '/' '2' ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-y1^2` is `-(y1^2)`. Identifiers
//! are `x<k>`/`y<k>` (1-based, bounded by the declared dimension) or
//! declared parameter names. `sqrt(e)` is parsed as `e^(1/2)`.

use thiserror::Error;

use super::{Expr, Exponent, Func};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("coordinate `{name}` out of range at {position}: index {index} not in 1..={dim}")]
    IndexOutOfRange {
        name: String,
        index: usize,
        dim: usize,
        position: usize,
    },
    #[error("invalid parameter name `{name}`: {reason}")]
    InvalidParameterName { name: String, reason: String },
}

const FUNC_NAMES: [&str; 6] = ["sqrt", "exp", "log", "sin", "cos", "abs"];

/// Parse `source` against dimension `dim` with the given parameter names.
pub fn parse(source: &str, dim: usize, params: &[String]) -> Result<Expr, ParseError> {
    for name in params {
        if coordinate_of(name).is_some() {
            return Err(ParseError::InvalidParameterName {
                name: name.clone(),
                reason: "shadows a coordinate".into(),
            });
        }
        if FUNC_NAMES.contains(&name.as_str()) {
            return Err(ParseError::InvalidParameterName {
                name: name.clone(),
                reason: "shadows a builtin function".into(),
            });
        }
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0, dim, params, end: source.len() };
    let e = parser.expr()?;
    parser.expect_end()?;
    Ok(e)
}

/// `x<k>` / `y<k>` with a positive decimal index.
fn coordinate_of(name: &str) -> Option<(char, usize)> {
    let mut chars = name.chars();
    let head = chars.next()?;
    if head != 'x' && head != 'y' {
        return None;
    }
    let rest = chars.as_str();
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse::<usize>().ok().map(|k| (head, k))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn tokenize(source: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            b'-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            b'*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            b'/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            b'^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // scientific suffix only when digits follow
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    expected: "a numeric literal".into(),
                    found: format!("`{text}`"),
                })?;
                out.push((Tok::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Tok::Ident(source[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError::Syntax {
                    position: i,
                    expected: "a token".into(),
                    found: format!("`{}`", &source[i..i + 1]),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    params: &'a [String],
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn syntax_error(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            position: self.here(),
            expected: expected.into(),
            found: self
                .peek()
                .map(Tok::describe)
                .unwrap_or_else(|| "end of input".into()),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax_error(expected))
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.syntax_error("end of input"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    terms.push(Expr::negate(self.term()?));
                }
                _ => break,
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = match acc.kind() {
                        super::ExprKind::Product(fs) => {
                            let mut fs = fs.clone();
                            fs.push(rhs);
                            Expr::product(fs)
                        }
                        _ => Expr::product(vec![acc, rhs]),
                    };
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::quotient(acc, rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::negate(self.factor()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.exponent()?;
            return Ok(Expr::power(base, exp));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        let negative = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= f64::from(i32::MAX) => {
                let k = *v as i32;
                self.pos += 1;
                Ok(if negative { -k } else { k })
            }
            _ => Err(self.syntax_error("an integer exponent")),
        }
    }

    fn exponent(&mut self) -> Result<Exponent, ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let num = self.integer()?;
            if self.peek() == Some(&Tok::Slash) {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Num(v)) if *v == 2.0 => self.pos += 1,
                    _ => return Err(self.syntax_error("denominator `2`")),
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(Exponent::half(num))
            } else {
                self.expect(Tok::RParen, "`)`")?;
                Ok(Exponent::integer(num))
            }
        } else {
            Ok(Exponent::integer(self.integer()?))
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let position = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::constant(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) && FUNC_NAMES.contains(&name.as_str()) {
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(match name.as_str() {
                        "sqrt" => Expr::sqrt(arg),
                        "exp" => Expr::call(Func::Exp, arg),
                        "log" => Expr::call(Func::Log, arg),
                        "sin" => Expr::call(Func::Sin, arg),
                        "cos" => Expr::call(Func::Cos, arg),
                        "abs" => Expr::call(Func::Abs, arg),
                        _ => unreachable!(),
                    });
                }
                if let Some((leg, index)) = coordinate_of(&name) {
                    if index < 1 || index > self.dim {
                        return Err(ParseError::IndexOutOfRange {
                            name,
                            index,
                            dim: self.dim,
                            position,
                        });
                    }
                    return Ok(match leg {
                        'x' => Expr::base_coord(index),
                        _ => Expr::fiber_coord(index),
                    });
                }
                if self.params.iter().any(|p| p == &name) {
                    return Ok(Expr::param(name));
                }
                Err(ParseError::UnknownIdentifier { name, position })
            }
            Some(_) => {
                self.pos -= 1;
                Err(self.syntax_error("a number, identifier or `(`"))
            }
            None => Err(self.syntax_error("a number, identifier or `(`")),
        }
    }
}

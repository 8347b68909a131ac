//! Recursive-descent parser for rate-equation strings.
//!
//! Grammar (loosest to tightest binding):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          (right-associative)
//! atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`. Identifiers must
//! be registered in the symbol table; function names form a closed set.

use super::{Expr, ExprError, Func, Number, SymbolTable};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(Number),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, pos: usize, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: pos,
            message: message.into(),
        }
    }

    fn tokenize(mut self) -> Result<Vec<(usize, Token)>, ExprError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let start = self.pos;
            let c = self.src[self.pos];
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.pos += 1;
                }
                b'+' => {
                    out.push((start, Token::Plus));
                    self.pos += 1;
                }
                b'-' => {
                    out.push((start, Token::Minus));
                    self.pos += 1;
                }
                b'*' => {
                    out.push((start, Token::Star));
                    self.pos += 1;
                }
                b'/' => {
                    out.push((start, Token::Slash));
                    self.pos += 1;
                }
                b'^' => {
                    out.push((start, Token::Caret));
                    self.pos += 1;
                }
                b'(' => {
                    out.push((start, Token::LParen));
                    self.pos += 1;
                }
                b')' => {
                    out.push((start, Token::RParen));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'.' => {
                    out.push((start, self.lex_number()?));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let mut end = self.pos + 1;
                    while end < self.src.len()
                        && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                    {
                        end += 1;
                    }
                    let name = std::str::from_utf8(&self.src[self.pos..end])
                        .expect("ascii identifier")
                        .to_string();
                    self.pos = end;
                    out.push((start, Token::Ident(name)));
                }
                other => {
                    return Err(self.error(start, format!("unexpected character `{}`", other as char)))
                }
            }
        }
        Ok(out)
    }

    fn lex_number(&mut self) -> Result<Token, ExprError> {
        let start = self.pos;
        let mut saw_dot = false;
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b'0'..=b'9' => self.pos += 1,
                b'.' if !saw_dot => {
                    saw_dot = true;
                    self.pos += 1;
                }
                b'e' | b'E' => {
                    let mut next = self.pos + 1;
                    if next < self.src.len() && (self.src[next] == b'+' || self.src[next] == b'-') {
                        next += 1;
                    }
                    if next < self.src.len() && self.src[next].is_ascii_digit() {
                        self.pos = next + 1;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                    break;
                }
                _ => break,
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        literal_to_number(text).ok_or_else(|| self.error(start, format!("invalid number `{text}`")))
    }
}

/// Exact conversion of a decimal literal into a rational where it fits,
/// falling back to f64.
fn literal_to_number(text: &str) -> Option<Token> {
    if text == "." {
        return None;
    }
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits: String = format!("{int_part}{frac_part}");
    let scale = exp - frac_part.len() as i64;
    if let Ok(num) = digits.parse::<i64>() {
        if let Some(n) = apply_pow10(num, scale) {
            return Some(Token::Number(n));
        }
    }
    let value: f64 = text.parse().ok()?;
    value.is_finite().then(|| Token::Number(Number::float(value)))
}

fn apply_pow10(num: i64, scale: i64) -> Option<Number> {
    if scale.unsigned_abs() > 18 {
        return None;
    }
    let pow = 10i64.checked_pow(scale.unsigned_abs() as u32)?;
    if scale >= 0 {
        Some(Number::integer(num.checked_mul(pow)?))
    } else {
        Some(Number::rational(num, pow))
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    table: &'a SymbolTable,
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.idx)
            .map(|(p, _)| *p)
            .unwrap_or(self.src_len)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).map(|(_, t)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: self.pos(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.idx += 1;
                    terms.push(self.term()?);
                }
                Some(Token::Minus) => {
                    self.idx += 1;
                    terms.push(Expr::neg(self.term()?));
                }
                _ => break,
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.idx += 1;
                    factors.push(self.unary()?);
                }
                Some(Token::Slash) => {
                    self.idx += 1;
                    let denom = self.unary()?;
                    factors.push(Expr::power(denom, Expr::int(-1)));
                }
                _ => break,
            }
        }
        Ok(Expr::product(factors))
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.idx += 1;
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.idx += 1;
            let exponent = self.unary()?;
            return Ok(Expr::power(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Token::Number(n)) => Ok(Expr::Const(n)),
            Some(Token::Ident(name)) => {
                if matches!(self.peek(), Some(Token::LParen)) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| self.error(format!("unknown function `{name}`")))?;
                    self.idx += 1;
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::RParen) => Ok(Expr::func(func, arg)),
                        _ => Err(self.error("expected `)`")),
                    }
                } else if self.table.contains(&name) {
                    Ok(Expr::symbol(name))
                } else {
                    Err(ExprError::UnknownSymbol { name })
                }
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(self.error("expected `)`")),
                }
            }
            Some(tok) => Err(self.error(format!("unexpected token {tok:?}"))),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

/// Parse an equation string against a symbol table.
pub fn parse(source: &str, table: &SymbolTable) -> Result<Expr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = Lexer::new(source).tokenize()?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        table,
        src_len: source.len(),
    };
    let expr = parser.expr()?;
    if parser.idx != parser.tokens.len() {
        return Err(parser.error("trailing input"));
    }
    Ok(expr)
}

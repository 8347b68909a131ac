//! Algebraic expression trees over state/parameter/time symbols.
//!
//! Expressions are built by [`parse`], evaluated numerically ([`Expr::evaluate`]
//! or the compiled [`Tape`]), differentiated symbolically, and compared through
//! a sum-of-products canonical form ([`canonical_equal`]).

mod canonical;
mod deriv;
mod display;
mod eval;
mod parse;

pub use canonical::{canonical_equal, canonicalize, expand_to_terms, is_zero, SignedTerm};
pub use eval::Tape;
pub use parse::parse;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedMul, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Reserved name of the independent (time) variable.
pub const TIME_SYMBOL: &str = "t";

/// The closed set of supported unary functions.
pub const FUNCTION_NAMES: [&str; 6] = ["exp", "log", "sqrt", "abs", "sin", "cos"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown symbol `{name}`")]
    UnknownSymbol { name: String },
    #[error("missing binding for symbol `{name}`")]
    MissingBinding { name: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid symbol name `{0}`")]
    InvalidName(String),
    #[error("duplicate symbol name `{0}`")]
    DuplicateName(String),
}

/// Numeric constant: exact rational when the source literal (or fold) allows,
/// float otherwise. Comparisons use the f64 value of both variants so that
/// `1/2` and `0.5` are the same constant.
#[derive(Clone, Copy, Debug)]
pub enum Number {
    Rational(Rational64),
    Float(f64),
}

impl Number {
    pub fn integer(n: i64) -> Self {
        Number::Rational(Rational64::from_integer(n))
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Number::Rational(Rational64::new(num, den))
    }

    pub fn float(v: f64) -> Self {
        debug_assert!(!v.is_nan(), "NaN constant");
        // normalize -0.0 so comparison semantics stay consistent
        Number::Float(if v == 0.0 { 0.0 } else { v })
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Number::Rational(r) => r
                .to_f64()
                .unwrap_or_else(|| *r.numer() as f64 / *r.denom() as f64),
            Number::Float(v) => v,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(v) => v == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        self.total_cmp(&Number::integer(1)) == Ordering::Equal
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(v) => v < 0.0,
        }
    }

    /// Exact integer value, when this constant is one (floats included if integral).
    pub fn as_i64(self) -> Option<i64> {
        match self {
            Number::Rational(r) => (*r.denom() == 1).then(|| *r.numer()),
            Number::Float(v) => (v.fract() == 0.0 && v.abs() < 2f64.powi(53)).then_some(v as i64),
        }
    }

    pub fn total_cmp(&self, other: &Number) -> Ordering {
        if let (Number::Rational(a), Number::Rational(b)) = (self, other) {
            return a.cmp(b);
        }
        self.as_f64().total_cmp(&other.as_f64())
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(r) => Number::Rational(r),
                None => Number::float(self.as_f64() + other.as_f64()),
            },
            _ => Number::float(self.as_f64() + other.as_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(r) => Number::Rational(r),
                None => Number::float(self.as_f64() * other.as_f64()),
            },
            _ => Number::float(self.as_f64() * other.as_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => Number::Rational(-r),
            Number::Float(v) => Number::float(-v),
        }
    }

    /// Reciprocal; `None` for zero.
    pub fn recip(self) -> Option<Number> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Number::Rational(r) => Number::Rational(r.recip()),
            Number::Float(v) => Number::float(1.0 / v),
        })
    }

    pub fn div(self, other: Number) -> Option<Number> {
        other.recip().map(|r| self.mul(r))
    }

    /// Integer power; `None` when the result is undefined (0 to a negative power).
    pub fn powi(self, n: i64) -> Option<Number> {
        if n == 0 {
            return Some(Number::integer(1));
        }
        if self.is_zero() && n < 0 {
            return None;
        }
        if let Number::Rational(r) = self {
            if n.unsigned_abs() <= 32 {
                let mut acc = Rational64::from_integer(1);
                let base = if n > 0 { r } else { r.recip() };
                let mut ok = true;
                for _ in 0..n.unsigned_abs() {
                    match acc.checked_mul(&base) {
                        Some(v) => acc = v,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    return Some(Number::Rational(acc));
                }
            }
        }
        Some(Number::float(
            self.as_f64().powi(n.clamp(i32::MIN as i64, i32::MAX as i64) as i32),
        ))
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}
impl Eq for Number {}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}
impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

/// Unary functions of the expression language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }
}

/// Algebraic expression tree.
///
/// Construction goes through the smart constructors ([`Expr::sum`],
/// [`Expr::product`], [`Expr::power`], ...) which flatten nested sums and
/// products, fold constants, and apply the 0/1 identities. Division is
/// multiplication by `power(-1)`, negation a product with `-1`, so the tree
/// has a uniform shape for differentiation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(Number),
    Symbol(String),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(Number::integer(n))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::Const(Number::rational(num, den))
    }

    pub fn float(v: f64) -> Expr {
        Expr::Const(Number::float(v))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn symbol(name: impl Into<String>) -> Expr {
        Expr::Symbol(name.into())
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn as_const(&self) -> Option<Number> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Flattening sum constructor folding constants and dropping zeros.
    pub fn sum(operands: Vec<Expr>) -> Expr {
        let mut constant = Number::integer(0);
        let mut terms = Vec::with_capacity(operands.len());
        let mut stack: Vec<Expr> = operands.into_iter().rev().collect();
        while let Some(op) = stack.pop() {
            match op {
                Expr::Sum(inner) => stack.extend(inner.into_iter().rev()),
                Expr::Const(c) => constant = constant.add(c),
                other => terms.push(other),
            }
        }
        if !constant.is_zero() {
            terms.push(Expr::Const(constant));
        }
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.pop().unwrap(),
            _ => Expr::Sum(terms),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, Expr::neg(b)])
    }

    /// Flattening product constructor; constants fold into a single leading
    /// coefficient, a zero coefficient collapses the whole product.
    pub fn product(operands: Vec<Expr>) -> Expr {
        let mut coeff = Number::integer(1);
        let mut factors = Vec::with_capacity(operands.len());
        let mut stack: Vec<Expr> = operands.into_iter().rev().collect();
        while let Some(op) = stack.pop() {
            match op {
                Expr::Product(inner) => stack.extend(inner.into_iter().rev()),
                Expr::Const(c) => coeff = coeff.mul(c),
                other => factors.push(other),
            }
        }
        if coeff.is_zero() {
            return Expr::zero();
        }
        if !coeff.is_one() {
            factors.insert(0, Expr::Const(coeff));
        }
        match factors.len() {
            0 => Expr::one(),
            1 => factors.pop().unwrap(),
            _ => Expr::Product(factors),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, b])
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::product(vec![Expr::int(-1), e])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, Expr::power(b, Expr::int(-1))])
    }

    pub fn power(base: Expr, exponent: Expr) -> Expr {
        if let Some(n) = exponent.as_const().and_then(Number::as_i64) {
            if n == 0 {
                return Expr::one();
            }
            if n == 1 {
                return base;
            }
            if let Some(c) = base.as_const() {
                if let Some(folded) = c.powi(n) {
                    return Expr::Const(folded);
                }
            }
            // (b^m)^n with integer m folds to b^(m*n)
            if let Expr::Power(inner_base, inner_exp) = &base {
                if let Some(m) = inner_exp.as_const().and_then(Number::as_i64) {
                    if let Some(mn) = m.checked_mul(n) {
                        return Expr::power((**inner_base).clone(), Expr::int(mn));
                    }
                }
            }
        }
        if let Some(c) = base.as_const() {
            if c.is_one() {
                return Expr::one();
            }
        }
        Expr::Power(Box::new(base), Box::new(exponent))
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        Expr::Func(f, Box::new(arg))
    }

    /// Free symbols of the expression, sorted.
    pub fn free_symbols(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Symbol(s) => {
                out.insert(s.as_str());
            }
            Expr::Sum(ops) | Expr::Product(ops) => {
                for op in ops {
                    op.collect_symbols(out);
                }
            }
            Expr::Power(b, e) => {
                b.collect_symbols(out);
                e.collect_symbols(out);
            }
            Expr::Func(_, a) => a.collect_symbols(out),
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Symbol(s) => s == name,
            Expr::Sum(ops) | Expr::Product(ops) => ops.iter().any(|o| o.depends_on(name)),
            Expr::Power(b, e) => b.depends_on(name) || e.depends_on(name),
            Expr::Func(_, a) => a.depends_on(name),
        }
    }

    /// Replace every occurrence of a symbol by an expression.
    pub fn substitute(&self, name: &str, value: &Expr) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Symbol(s) => {
                if s == name {
                    value.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Sum(ops) => Expr::sum(ops.iter().map(|o| o.substitute(name, value)).collect()),
            Expr::Product(ops) => {
                Expr::product(ops.iter().map(|o| o.substitute(name, value)).collect())
            }
            Expr::Power(b, e) => Expr::power(b.substitute(name, value), e.substitute(name, value)),
            Expr::Func(f, a) => Expr::func(*f, a.substitute(name, value)),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Expr::Const(_) => 0,
            Expr::Symbol(_) => 1,
            Expr::Func(..) => 2,
            Expr::Power(..) => 3,
            Expr::Product(_) => 4,
            Expr::Sum(_) => 5,
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Expr::Const(a), Expr::Const(b)) => a.cmp(b),
            (Expr::Symbol(a), Expr::Symbol(b)) => a.cmp(b),
            (Expr::Func(fa, aa), Expr::Func(fb, ab)) => fa.cmp(fb).then_with(|| aa.cmp(ab)),
            (Expr::Power(ba, ea), Expr::Power(bb, eb)) => ba.cmp(bb).then_with(|| ea.cmp(eb)),
            (Expr::Product(a), Expr::Product(b)) | (Expr::Sum(a), Expr::Sum(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Ordered state and parameter names plus the reserved time symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    states: Vec<String>,
    params: Vec<String>,
}

impl SymbolTable {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        params: impl IntoIterator<Item = S>,
    ) -> Result<SymbolTable, ExprError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let params: Vec<String> = params.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for name in states.iter().chain(&params) {
            if !valid_name(name) {
                return Err(ExprError::InvalidName(name.clone()));
            }
            if name == TIME_SYMBOL || FUNCTION_NAMES.contains(&name.as_str()) {
                return Err(ExprError::InvalidName(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(ExprError::DuplicateName(name.clone()));
            }
        }
        Ok(SymbolTable { states, params })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        name == TIME_SYMBOL
            || self.states.iter().any(|s| s == name)
            || self.params.iter().any(|p| p == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    /// Slot of a symbol in the numeric evaluation layout:
    /// states first, then parameters, time last.
    pub fn slot(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.state_index(name) {
            return Some(i);
        }
        if let Some(i) = self.param_index(name) {
            return Some(self.n_states() + i);
        }
        (name == TIME_SYMBOL).then(|| self.n_states() + self.n_params())
    }

    pub fn n_slots(&self) -> usize {
        self.n_states() + self.n_params() + 1
    }

    /// Extend the table with additional parameters (used when birth/death
    /// processes introduce new rates).
    pub fn with_params<S: Into<String>>(
        &self,
        new_params: impl IntoIterator<Item = S>,
    ) -> Result<SymbolTable, ExprError> {
        let mut params = self.params.clone();
        params.extend(new_params.into_iter().map(Into::into));
        SymbolTable::new(self.states.clone(), params)
    }
}

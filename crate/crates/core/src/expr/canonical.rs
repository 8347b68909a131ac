//! Sum-of-products canonical form.
//!
//! Every expression is rewritten as a fraction of two expanded multivariate
//! polynomials over *atoms* (symbols, function applications with canonical
//! arguments, and powers with non-integer exponents). Equality of `a` and `b`
//! is then decided by cross-multiplying: `num_a·den_b == num_b·den_a`, which
//! handles the different ways a quotient can be written without needing
//! polynomial GCDs.

use std::collections::BTreeMap;

use super::{Expr, Func, Number};

/// Signed canonical monomial produced by [`expand_to_terms`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedTerm {
    pub negative: bool,
    /// Canonical monomial with a positive leading coefficient.
    pub monomial: Expr,
}

impl SignedTerm {
    pub fn signed_expr(&self) -> Expr {
        if self.negative {
            Expr::neg(self.monomial.clone())
        } else {
            self.monomial.clone()
        }
    }
}

/// Product of atoms with non-zero integer exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Monomial(BTreeMap<Expr, i64>);

impl Monomial {
    fn one() -> Monomial {
        Monomial::default()
    }

    fn atom(e: Expr, exp: i64) -> Monomial {
        let mut m = BTreeMap::new();
        if exp != 0 {
            m.insert(e, exp);
        }
        Monomial(m)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (atom, exp) in &other.0 {
            let e = out.entry(atom.clone()).or_insert(0);
            *e += exp;
            if *e == 0 {
                out.remove(atom);
            }
        }
        Monomial(out)
    }

    /// Divide by `other`, allowing negative exponents in the result.
    fn div(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (atom, exp) in &other.0 {
            let e = out.entry(atom.clone()).or_insert(0);
            *e -= exp;
            if *e == 0 {
                out.remove(atom);
            }
        }
        Monomial(out)
    }
}

/// Expanded polynomial: canonical monomials mapped to non-zero coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Poly(BTreeMap<Monomial, Number>);

impl Poly {
    fn zero() -> Poly {
        Poly::default()
    }

    fn constant(c: Number) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        Poly(terms)
    }

    fn one() -> Poly {
        Poly::constant(Number::integer(1))
    }

    fn atom(e: Expr, exp: i64) -> Poly {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::atom(e, exp), Number::integer(1));
        Poly(terms)
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn is_one(&self) -> bool {
        self.0.len() == 1
            && self
                .0
                .get(&Monomial::one())
                .is_some_and(|c| c.is_one())
    }

    fn insert_term(&mut self, mono: Monomial, coeff: Number) {
        if coeff.is_zero() {
            return;
        }
        match self.0.entry(mono) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(coeff);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.0 {
            out.insert_term(m.clone(), *c);
        }
        out
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                out.insert_term(ma.mul(mb), ca.mul(*cb));
            }
        }
        out
    }

    fn pow(&self, n: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    fn scale(&self, c: Number) -> Poly {
        let mut out = Poly::zero();
        for (m, v) in &self.0 {
            out.insert_term(m.clone(), v.mul(c));
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Fraction {
    num: Poly,
    den: Poly,
}

impl Fraction {
    fn from_poly(p: Poly) -> Fraction {
        Fraction {
            num: p,
            den: Poly::one(),
        }
    }

    fn add(&self, other: &Fraction) -> Fraction {
        if self.den == other.den {
            return Fraction {
                num: self.num.add(&other.num),
                den: self.den.clone(),
            };
        }
        Fraction {
            num: self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
    }

    fn mul(&self, other: &Fraction) -> Fraction {
        Fraction {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    fn powi(&self, n: i64) -> Fraction {
        let abs = n.unsigned_abs().min(u32::MAX as u64) as u32;
        let (num, den) = if n >= 0 {
            (self.num.pow(abs), self.den.pow(abs))
        } else {
            (self.den.pow(abs), self.num.pow(abs))
        };
        Fraction { num, den }
    }
}

// Beyond this exponent a sum base is kept as an atomic power instead of being
// expanded; keeps pathological inputs from exploding.
const SUM_EXPAND_LIMIT: i64 = 16;

fn as_fraction(e: &Expr) -> Fraction {
    match e {
        Expr::Const(c) => Fraction::from_poly(Poly::constant(*c)),
        Expr::Symbol(s) => Fraction::from_poly(Poly::atom(Expr::symbol(s.clone()), 1)),
        Expr::Sum(ops) => {
            let mut acc = Fraction::from_poly(Poly::zero());
            for op in ops {
                acc = acc.add(&as_fraction(op));
            }
            acc
        }
        Expr::Product(ops) => {
            let mut acc = Fraction::from_poly(Poly::one());
            for op in ops {
                acc = acc.mul(&as_fraction(op));
            }
            acc
        }
        Expr::Power(base, exponent) => {
            let exp_canon = canonicalize(exponent);
            if let Some(n) = exp_canon.as_const().and_then(Number::as_i64) {
                let fb = as_fraction(base);
                let expandable = |p: &Poly| p.0.len() <= 1 || n.abs() <= SUM_EXPAND_LIMIT;
                if expandable(&fb.num) && expandable(&fb.den) {
                    return fb.powi(n);
                }
                // exponent too large to expand: keep the canonical base atomic
                return Fraction::from_poly(Poly::atom(canonicalize(base), n));
            }
            Fraction::from_poly(Poly::atom(
                Expr::Power(Box::new(canonicalize(base)), Box::new(exp_canon)),
                1,
            ))
        }
        Expr::Func(Func::Sqrt, arg) => sqrt_atom(arg),
        Expr::Func(f, arg) => {
            Fraction::from_poly(Poly::atom(Expr::func(*f, canonicalize(arg)), 1))
        }
    }
}

/// `sqrt` atoms extract perfect-square rational content so that e.g.
/// `sqrt(4*x)/2` and `sqrt(x)` agree: the quadratic formula used for
/// reproduction numbers produces the former shape.
fn sqrt_atom(arg: &Expr) -> Fraction {
    let fa = as_fraction(arg);
    let (scale, reduced) = extract_square_content(&fa);
    let atom = Expr::func(Func::Sqrt, rebuild_fraction(&reduced));
    Fraction::from_poly(Poly::atom(atom, 1).scale(scale))
}

fn rational_content(p: &Poly) -> Option<num_rational::Rational64> {
    use num_integer::Integer;
    let mut num_gcd: i64 = 0;
    let mut den_lcm: i64 = 1;
    for c in p.0.values() {
        match c {
            Number::Rational(r) => {
                num_gcd = num_gcd.gcd(r.numer());
                den_lcm = den_lcm.checked_mul(*r.denom() / den_lcm.gcd(r.denom()))?;
            }
            Number::Float(_) => return None,
        }
    }
    if num_gcd == 0 {
        return None;
    }
    Some(num_rational::Rational64::new(num_gcd, den_lcm))
}

fn square_part(mut n: i64) -> i64 {
    if n <= 3 {
        return 1;
    }
    let mut root = 1i64;
    let mut d = 2i64;
    while d.saturating_mul(d) <= n && d < 1_000_000 {
        while n % (d * d) == 0 {
            n /= d * d;
            root *= d;
        }
        d += 1;
    }
    root
}

fn extract_square_content(f: &Fraction) -> (Number, Fraction) {
    let (Some(cn), Some(cd)) = (rational_content(&f.num), rational_content(&f.den)) else {
        return (Number::integer(1), f.clone());
    };
    let content = cn / cd;
    let sp = square_part(content.numer().abs());
    let sq = square_part(*content.denom());
    if sp == 1 && sq == 1 {
        return (Number::integer(1), f.clone());
    }
    let scale = num_rational::Rational64::new(sp, sq);
    let inv_sq = Number::Rational((scale * scale).recip());
    (
        Number::Rational(scale),
        Fraction {
            num: f.num.scale(inv_sq),
            den: f.den.clone(),
        },
    )
}

fn rebuild_monomial(mono: &Monomial, coeff: Number) -> Expr {
    let mut factors = Vec::with_capacity(mono.0.len() + 1);
    if !coeff.is_one() {
        factors.push(Expr::Const(coeff));
    }
    for (atom, exp) in &mono.0 {
        factors.push(Expr::power(atom.clone(), Expr::int(*exp)));
    }
    Expr::product(factors)
}

fn rebuild_poly(p: &Poly) -> Expr {
    if p.is_zero() {
        return Expr::zero();
    }
    Expr::sum(
        p.0.iter()
            .map(|(m, c)| rebuild_monomial(m, *c))
            .collect(),
    )
}

fn rebuild_fraction(f: &Fraction) -> Expr {
    if f.den.is_one() {
        return rebuild_poly(&f.num);
    }
    Expr::div(rebuild_poly(&f.num), rebuild_poly(&f.den))
}

fn normalize_scale(f: Fraction) -> Fraction {
    if f.den.is_one() || f.den.is_zero() {
        return f;
    }
    let lead = *f.den.0.values().next().expect("non-empty denominator");
    match lead.recip() {
        Some(inv) => Fraction {
            num: f.num.scale(inv),
            den: f.den.scale(inv),
        },
        None => f,
    }
}

/// Rewrite into the canonical sum-of-products form (expanded, operands sorted,
/// coefficients folded). Two algebraically equal expressions canonicalize to
/// structurally equal trees, up to quotients that differ by a polynomial factor.
pub fn canonicalize(e: &Expr) -> Expr {
    rebuild_fraction(&normalize_scale(as_fraction(e)))
}

/// Decide algebraic equality via the canonical form.
pub fn canonical_equal(a: &Expr, b: &Expr) -> bool {
    let fa = as_fraction(a);
    let fb = as_fraction(b);
    if fa.den.is_zero() || fb.den.is_zero() {
        // degenerate (division by symbolic zero); compare shapes
        return canonicalize(a) == canonicalize(b);
    }
    fa.num.mul(&fb.den) == fb.num.mul(&fa.den)
}

/// True when the expression is identically zero.
pub fn is_zero(e: &Expr) -> bool {
    let f = as_fraction(e);
    f.num.is_zero() && !f.den.is_zero()
}

/// Expand into signed canonical monomials whose signed sum equals the input.
///
/// Works term by term on the canonical fraction; when the denominator is a
/// single monomial it is folded into each term (so `beta*S*I/N - gamma*I`
/// yields `+beta*S*I/N` and `-gamma*I`), otherwise the whole inverse
/// denominator rides along as an atomic factor.
pub fn expand_to_terms(e: &Expr) -> Vec<SignedTerm> {
    let f = normalize_scale(as_fraction(e));
    if f.num.is_zero() {
        return Vec::new();
    }
    let single_den = if f.den.is_one() {
        Some((Monomial::one(), Number::integer(1)))
    } else if f.den.0.len() == 1 {
        let (m, c) = f.den.0.iter().next().expect("single term");
        Some((m.clone(), *c))
    } else {
        None
    };
    let mut out = Vec::with_capacity(f.num.0.len());
    for (mono, coeff) in &f.num.0 {
        let (mono, coeff) = match &single_den {
            Some((dm, dc)) => (
                mono.div(dm),
                coeff.div(*dc).expect("denominator coefficient is non-zero"),
            ),
            None => (mono.clone(), *coeff),
        };
        let negative = coeff.is_negative();
        let magnitude = if negative { coeff.neg() } else { coeff };
        let mut expr = rebuild_monomial(&mono, magnitude);
        if single_den.is_none() {
            expr = Expr::div(expr, rebuild_poly(&f.den));
        }
        out.push(SignedTerm {
            negative,
            monomial: expr,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::super::{parse, SymbolTable};
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new(
            vec!["S", "I", "R"],
            vec!["beta", "gamma", "N", "a", "b", "c", "x"],
        )
        .unwrap()
    }

    fn eq(t: &SymbolTable, lhs: &str, rhs: &str) -> bool {
        canonical_equal(&parse(lhs, t).unwrap(), &parse(rhs, t).unwrap())
    }

    #[test]
    fn commutativity() {
        let t = table();
        assert!(eq(&t, "S*beta*I/N", "beta*I*S/N"));
    }

    #[test]
    fn paper_i_equation_two_printed_forms() {
        let t = table();
        assert!(eq(&t, "I*(S*beta/N-gamma)", "I*S*beta/N - gamma*I"));
    }

    #[test]
    fn distinguishes_plus_minus() {
        let t = table();
        assert!(!eq(&t, "x+1", "x-1"));
    }

    #[test]
    fn division_forms_agree() {
        let t = table();
        assert!(eq(&t, "a/(b*(c+b))", "a/(b*c+b^2)"));
        assert!(eq(&t, "a/b/c", "a/(b*c)"));
        assert!(!eq(&t, "a/b", "a/c"));
    }

    #[test]
    fn rational_constants_fold() {
        let t = table();
        assert!(eq(&t, "1.0/3.0*x", "x/3"));
        assert!(eq(&t, "0.5*a", "a/2"));
    }

    #[test]
    fn sqrt_square_content_extraction() {
        let t = table();
        assert!(eq(&t, "sqrt(4*x)/2", "sqrt(x)"));
        assert!(eq(&t, "sqrt(x/4)", "sqrt(x)/2"));
        assert!(eq(&t, "sqrt(9*x^2/4)", "3/2*sqrt(x^2)"));
        assert!(!eq(&t, "sqrt(4*x)", "sqrt(x)"));
    }

    #[test]
    fn expand_sir_i_equation() {
        let t = table();
        let e = parse("beta*S*I/N - gamma*I", &t).unwrap();
        let terms = expand_to_terms(&e);
        assert_eq!(terms.len(), 2);
        let positives: Vec<_> = terms.iter().filter(|s| !s.negative).collect();
        let negatives: Vec<_> = terms.iter().filter(|s| s.negative).collect();
        assert_eq!(positives.len(), 1);
        assert_eq!(negatives.len(), 1);
        assert!(canonical_equal(
            &positives[0].monomial,
            &parse("beta*S*I/N", &t).unwrap()
        ));
        assert!(canonical_equal(
            &negatives[0].monomial,
            &parse("gamma*I", &t).unwrap()
        ));
    }

    #[test]
    fn expand_single_symbol() {
        let t = table();
        let terms = expand_to_terms(&parse("x", &t).unwrap());
        assert_eq!(terms.len(), 1);
        assert!(!terms[0].negative);
        assert_eq!(terms[0].monomial, Expr::symbol("x"));
    }

    #[test]
    fn expand_zero_is_empty() {
        let t = table();
        assert!(expand_to_terms(&parse("a - a", &t).unwrap()).is_empty());
    }

    #[test]
    fn expanded_product_reassembles() {
        let t = table();
        let e = parse("(a-b)*c", &t).unwrap();
        let terms = expand_to_terms(&e);
        assert_eq!(terms.len(), 2);
        let reassembled = Expr::sum(terms.iter().map(SignedTerm::signed_expr).collect());
        // evaluation oracle at randomized points
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..20 {
            let mut b = HashMap::new();
            for name in ["a", "b", "c"] {
                b.insert(name.to_string(), next());
            }
            let lhs = e.evaluate(&b).unwrap();
            let rhs = reassembled.evaluate(&b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let t = table();
        for src in [
            "beta*S*I/N - gamma*I",
            "(a+b)^2/(c*b)",
            "sqrt(a*b/(c+a))",
            "exp(a+b)*x^2",
        ] {
            let e = parse(src, &t).unwrap();
            let c1 = canonicalize(&e);
            let c2 = canonicalize(&c1);
            assert_eq!(c1, c2, "canonicalize not idempotent for {src}");
        }
    }

    #[test]
    fn zero_detection() {
        let t = table();
        assert!(is_zero(&parse("a*b - b*a", &t).unwrap()));
        assert!(is_zero(&parse("(a+b)^2 - a^2 - 2*a*b - b^2", &t).unwrap()));
        assert!(!is_zero(&parse("a - b", &t).unwrap()));
    }
}

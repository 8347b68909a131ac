//! Text and LaTeX renderers. The text form round-trips through the parser
//! (`parse(print(e))` is canonically equal to `e`); operand order is whatever
//! the tree holds, not a promised output order.

use std::fmt;

use super::{Expr, Func, Number};

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) => {
                if *r.denom() == 1 {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Number::Float(v) => write!(f, "{v}"),
        }
    }
}

// binding strength used for parenthesization
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_POWER: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Sum(_) => PREC_SUM,
        Expr::Product(_) => PREC_PRODUCT,
        Expr::Power(..) => PREC_POWER,
        Expr::Func(..) | Expr::Symbol(_) => PREC_ATOM,
        Expr::Const(c) => {
            let simple = match c {
                Number::Rational(r) => !c.is_negative() && *r.denom() == 1,
                Number::Float(v) => *v >= 0.0,
            };
            if simple {
                PREC_ATOM
            } else {
                PREC_SUM // negative or fractional literals always need parens inside tighter contexts
            }
        }
    }
}

fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    if precedence(e) < min_prec {
        out.push('(');
        write_expr(e, 0, out);
        out.push(')');
        return;
    }
    match e {
        Expr::Const(c) => out.push_str(&c.to_string()),
        Expr::Symbol(s) => out.push_str(s),
        Expr::Sum(ops) => {
            for (i, op) in ops.iter().enumerate() {
                let (negative, inner) = split_sign(op);
                if i == 0 {
                    if negative {
                        out.push('-');
                    }
                } else {
                    out.push_str(if negative { " - " } else { " + " });
                }
                write_expr(&inner, PREC_PRODUCT, out);
            }
        }
        Expr::Product(_) => {
            let (negative, positive) = split_sign(e);
            if negative {
                out.push('-');
                write_expr(&positive, PREC_PRODUCT, out);
                return;
            }
            let ops = match &positive {
                Expr::Product(ops) => ops.clone(),
                other => vec![other.clone()],
            };
            let mut numerator = String::new();
            let mut denominator: Vec<String> = Vec::new();
            let mut first = true;
            for op in &ops {
                if let Expr::Power(base, exp) = op {
                    if let Some(n) = exp.as_const().and_then(Number::as_i64) {
                        if n < 0 {
                            let mut piece = String::new();
                            let positive = Expr::power((**base).clone(), Expr::int(-n));
                            write_expr(&positive, PREC_POWER, &mut piece);
                            denominator.push(piece);
                            continue;
                        }
                    }
                }
                if !first {
                    numerator.push('*');
                }
                write_expr(op, PREC_PRODUCT, &mut numerator);
                first = false;
            }
            if numerator.is_empty() {
                numerator.push('1');
            }
            out.push_str(&numerator);
            for piece in denominator {
                out.push('/');
                out.push_str(&piece);
            }
        }
        Expr::Power(base, exp) => {
            write_expr(base, PREC_ATOM, out);
            out.push('^');
            match exp.as_const().and_then(Number::as_i64) {
                Some(n) => out.push_str(&n.to_string()),
                None => {
                    out.push('(');
                    write_expr(exp, 0, out);
                    out.push(')');
                }
            }
        }
        Expr::Func(f, arg) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(arg, 0, out);
            out.push(')');
        }
    }
}

/// Split a leading minus off a term for `a - b` style rendering.
fn split_sign(e: &Expr) -> (bool, Expr) {
    match e {
        Expr::Const(c) if c.is_negative() => (true, Expr::Const(c.neg())),
        Expr::Product(ops) => {
            if let Some(Expr::Const(c)) = ops.first() {
                if c.is_negative() {
                    let mut rest = ops[1..].to_vec();
                    let coeff = c.neg();
                    if !coeff.is_one() {
                        rest.insert(0, Expr::Const(coeff));
                    }
                    return (true, Expr::product(rest));
                }
            }
            (false, e.clone())
        }
        _ => (false, e.clone()),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(self, 0, &mut out);
        f.write_str(&out)
    }
}

const GREEK: [&str; 16] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "kappa", "lambda", "mu",
    "nu", "xi", "rho", "sigma", "omega",
];

fn latex_symbol(name: &str) -> String {
    let (head, sub) = match name.split_once('_') {
        Some((h, s)) => (h, Some(s)),
        None => (name, None),
    };
    let head = if GREEK.contains(&head) {
        format!("\\{head}")
    } else {
        head.to_string()
    };
    match sub {
        Some(s) => format!("{head}_{{{s}}}"),
        None => head,
    }
}

fn latex_inner(e: &Expr, min_prec: u8, out: &mut String) {
    if precedence(e) < min_prec {
        out.push_str("\\left(");
        latex_inner(e, 0, out);
        out.push_str("\\right)");
        return;
    }
    match e {
        Expr::Const(c) => out.push_str(&match c {
            Number::Rational(r) if *r.denom() != 1 => {
                format!("\\frac{{{}}}{{{}}}", r.numer(), r.denom())
            }
            other => other.to_string(),
        }),
        Expr::Symbol(s) => out.push_str(&latex_symbol(s)),
        Expr::Sum(ops) => {
            for (i, op) in ops.iter().enumerate() {
                let (negative, inner) = split_sign(op);
                if i == 0 {
                    if negative {
                        out.push('-');
                    }
                } else {
                    out.push_str(if negative { " - " } else { " + " });
                }
                latex_inner(&inner, PREC_PRODUCT, out);
            }
        }
        Expr::Product(_) => {
            let (negative, positive) = split_sign(e);
            if negative {
                out.push('-');
                latex_inner(&positive, PREC_PRODUCT, out);
                return;
            }
            let ops = match &positive {
                Expr::Product(ops) => ops.clone(),
                other => vec![other.clone()],
            };
            let mut numerator: Vec<String> = Vec::new();
            let mut denominator: Vec<String> = Vec::new();
            for op in &ops {
                if let Expr::Power(base, exp) = op {
                    if let Some(n) = exp.as_const().and_then(Number::as_i64) {
                        if n < 0 {
                            let mut piece = String::new();
                            let positive = Expr::power((**base).clone(), Expr::int(-n));
                            latex_inner(&positive, PREC_PRODUCT, &mut piece);
                            denominator.push(piece);
                            continue;
                        }
                    }
                }
                let mut piece = String::new();
                latex_inner(op, PREC_PRODUCT, &mut piece);
                numerator.push(piece);
            }
            let num = if numerator.is_empty() {
                "1".to_string()
            } else {
                numerator.join(" ")
            };
            if denominator.is_empty() {
                out.push_str(&num);
            } else {
                out.push_str(&format!("\\frac{{{num}}}{{{}}}", denominator.join(" ")));
            }
        }
        Expr::Power(base, exp) => {
            latex_inner(base, PREC_ATOM, out);
            out.push_str("^{");
            latex_inner(exp, 0, out);
            out.push('}');
        }
        Expr::Func(f, arg) => {
            let mut inner = String::new();
            latex_inner(arg, 0, &mut inner);
            out.push_str(&match f {
                Func::Exp => format!("e^{{{inner}}}"),
                Func::Log => format!("\\log\\left({inner}\\right)"),
                Func::Sqrt => format!("\\sqrt{{{inner}}}"),
                Func::Abs => format!("\\left|{inner}\\right|"),
                Func::Sin => format!("\\sin\\left({inner}\\right)"),
                Func::Cos => format!("\\cos\\left({inner}\\right)"),
            });
        }
    }
}

impl Expr {
    pub fn to_latex(&self) -> String {
        let mut out = String::new();
        latex_inner(self, 0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::{canonical_equal, parse, SymbolTable};


    fn table() -> SymbolTable {
        SymbolTable::new(
            vec!["S", "I", "R"],
            vec!["beta", "gamma", "N", "a", "b", "x", "mu_h"],
        )
        .unwrap()
    }

    #[test]
    fn print_parse_round_trip() {
        let t = table();
        for src in [
            "beta*S*I/N",
            "-I*S*beta/N",
            "I*(S*beta/N - gamma)",
            "(a+b)^2",
            "-(a+b)^2",
            "a - b - x",
            "1/x",
            "x^-2*a",
            "sqrt(a*b)/x",
            "exp(-2*t)*a",
            "2/3*x",
            "x^(1/2)",
            "(-3)^x",
        ] {
            let e = parse(src, &t).unwrap();
            let printed = e.to_string();
            let reparsed = parse(&printed, &t)
                .unwrap_or_else(|err| panic!("reparse of `{printed}` (from `{src}`): {err}"));
            assert!(
                canonical_equal(&e, &reparsed),
                "round trip failed: `{src}` printed as `{printed}`"
            );
        }
    }

    #[test]
    fn latex_uses_greek_and_fractions() {
        let t = table();
        let e = parse("beta*S*I/N", &t).unwrap();
        let tex = e.to_latex();
        assert!(tex.contains("\\beta"), "{tex}");
        assert!(tex.contains("\\frac"), "{tex}");
        let e2 = parse("mu_h*S", &t).unwrap();
        assert!(e2.to_latex().contains("\\mu_{h}"));
    }
}

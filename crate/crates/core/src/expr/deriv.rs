//! Symbolic differentiation. Results pass through the smart constructors, so
//! constant folding and the 0/1 identities are applied on the way out.

use super::{Expr, Func, Number};

impl Expr {
    /// Exact partial derivative with respect to `wrt`.
    pub fn differentiate(&self, wrt: &str) -> Expr {
        if !self.depends_on(wrt) {
            return Expr::zero();
        }
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Symbol(s) => {
                if s == wrt {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Sum(ops) => Expr::sum(ops.iter().map(|o| o.differentiate(wrt)).collect()),
            Expr::Product(ops) => {
                // product rule over n factors
                let mut terms = Vec::with_capacity(ops.len());
                for (i, op) in ops.iter().enumerate() {
                    if !op.depends_on(wrt) {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(ops.len());
                    for (j, other) in ops.iter().enumerate() {
                        if i == j {
                            factors.push(op.differentiate(wrt));
                        } else {
                            factors.push(other.clone());
                        }
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Expr::Power(base, exponent) => {
                if let Some(n) = exponent.as_const() {
                    // d(b^n) = n * b^(n-1) * b'
                    let reduced = Expr::power(
                        (**base).clone(),
                        Expr::Const(n.add(Number::integer(-1))),
                    );
                    Expr::product(vec![Expr::Const(n), reduced, base.differentiate(wrt)])
                } else {
                    // d(b^e) = b^e * (e' * log b + e * b'/b)
                    let log_term = Expr::product(vec![
                        exponent.differentiate(wrt),
                        Expr::func(Func::Log, (**base).clone()),
                    ]);
                    let ratio_term = Expr::product(vec![
                        (**exponent).clone(),
                        base.differentiate(wrt),
                        Expr::power((**base).clone(), Expr::int(-1)),
                    ]);
                    Expr::product(vec![self.clone(), Expr::sum(vec![log_term, ratio_term])])
                }
            }
            Expr::Func(f, arg) => {
                let inner = arg.differentiate(wrt);
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => Expr::power((**arg).clone(), Expr::int(-1)),
                    Func::Sqrt => Expr::product(vec![
                        Expr::rational(1, 2),
                        Expr::power(self.clone(), Expr::int(-1)),
                    ]),
                    // d|x| = x/|x| (sign), undefined at 0
                    Func::Abs => Expr::product(vec![
                        (**arg).clone(),
                        Expr::power(self.clone(), Expr::int(-1)),
                    ]),
                    Func::Sin => Expr::func(Func::Cos, (**arg).clone()),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, (**arg).clone())),
                };
                Expr::product(vec![outer, inner])
            }
        }
    }
}

//! Numeric evaluation: a checked tree walk for one-off use and a compiled
//! postfix tape for the solver inner loops.

use std::collections::HashMap;

use super::{Expr, ExprError, Func, SymbolTable};

fn apply_func(f: Func, x: f64) -> Result<f64, ExprError> {
    match f {
        Func::Exp => Ok(x.exp()),
        Func::Log => {
            if x <= 0.0 {
                Err(ExprError::Domain(format!("log of non-positive value {x}")))
            } else {
                Ok(x.ln())
            }
        }
        Func::Sqrt => {
            if x < 0.0 {
                Err(ExprError::Domain(format!("sqrt of negative value {x}")))
            } else {
                Ok(x.sqrt())
            }
        }
        Func::Abs => Ok(x.abs()),
        Func::Sin => Ok(x.sin()),
        Func::Cos => Ok(x.cos()),
    }
}

fn apply_power(base: f64, exponent: f64) -> Result<f64, ExprError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(ExprError::Domain("division by zero".into()));
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exponent as i32));
    }
    if base < 0.0 {
        return Err(ExprError::Domain(format!(
            "negative base {base} raised to non-integer power {exponent}"
        )));
    }
    Ok(base.powf(exponent))
}

impl Expr {
    /// Evaluate with named bindings. Division by zero, logs of non-positive
    /// values and similar produce a domain error instead of NaN.
    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(c.as_f64()),
            Expr::Symbol(s) => bindings
                .get(s)
                .copied()
                .ok_or_else(|| ExprError::MissingBinding { name: s.clone() }),
            Expr::Sum(ops) => {
                let mut acc = 0.0;
                for op in ops {
                    acc += op.evaluate(bindings)?;
                }
                Ok(acc)
            }
            Expr::Product(ops) => {
                let mut acc = 1.0;
                for op in ops {
                    acc *= op.evaluate(bindings)?;
                }
                Ok(acc)
            }
            Expr::Power(b, e) => apply_power(b.evaluate(bindings)?, e.evaluate(bindings)?),
            Expr::Func(f, a) => apply_func(*f, a.evaluate(bindings)?),
        }
    }
}

#[derive(Clone, Debug)]
enum Instr {
    Const(f64),
    Load(u32),
    Add(u16),
    Mul(u16),
    Powi(i32),
    Powf,
    Call(Func),
}

/// Expression compiled to a postfix tape against a slot layout
/// (states, then parameters, then time — see [`SymbolTable::slot`]).
#[derive(Clone, Debug)]
pub struct Tape {
    instrs: Vec<Instr>,
    max_stack: usize,
}

impl Tape {
    pub fn compile(expr: &Expr, table: &SymbolTable) -> Result<Tape, ExprError> {
        let mut instrs = Vec::new();
        compile_into(expr, table, &mut instrs)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for instr in &instrs {
            match instr {
                Instr::Const(_) | Instr::Load(_) => depth += 1,
                Instr::Add(n) | Instr::Mul(n) => depth = depth - *n as usize + 1,
                Instr::Powf => depth -= 1,
                Instr::Powi(_) | Instr::Call(_) => {}
            }
            max_stack = max_stack.max(depth);
        }
        Ok(Tape { instrs, max_stack })
    }

    pub fn max_stack(&self) -> usize {
        self.max_stack
    }

    /// Evaluate against a slot buffer, reusing the caller's stack.
    pub fn eval(&self, slots: &[f64], stack: &mut Vec<f64>) -> Result<f64, ExprError> {
        stack.clear();
        for instr in &self.instrs {
            match instr {
                Instr::Const(v) => stack.push(*v),
                Instr::Load(i) => stack.push(slots[*i as usize]),
                Instr::Add(n) => {
                    let at = stack.len() - *n as usize;
                    let sum = stack[at..].iter().sum::<f64>();
                    stack.truncate(at);
                    stack.push(sum);
                }
                Instr::Mul(n) => {
                    let at = stack.len() - *n as usize;
                    let prod = stack[at..].iter().product::<f64>();
                    stack.truncate(at);
                    stack.push(prod);
                }
                Instr::Powi(n) => {
                    let base = stack.last_mut().expect("tape stack underflow");
                    if *base == 0.0 && *n < 0 {
                        return Err(ExprError::Domain("division by zero".into()));
                    }
                    *base = base.powi(*n);
                }
                Instr::Powf => {
                    let e = stack.pop().expect("tape stack underflow");
                    let b = stack.pop().expect("tape stack underflow");
                    stack.push(apply_power(b, e)?);
                }
                Instr::Call(f) => {
                    let x = stack.last_mut().expect("tape stack underflow");
                    *x = apply_func(*f, *x)?;
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        Ok(stack[0])
    }
}

fn compile_into(expr: &Expr, table: &SymbolTable, out: &mut Vec<Instr>) -> Result<(), ExprError> {
    match expr {
        Expr::Const(c) => out.push(Instr::Const(c.as_f64())),
        Expr::Symbol(s) => {
            let slot = table
                .slot(s)
                .ok_or_else(|| ExprError::UnknownSymbol { name: s.clone() })?;
            out.push(Instr::Load(slot as u32));
        }
        Expr::Sum(ops) => {
            for op in ops {
                compile_into(op, table, out)?;
            }
            out.push(Instr::Add(ops.len() as u16));
        }
        Expr::Product(ops) => {
            for op in ops {
                compile_into(op, table, out)?;
            }
            out.push(Instr::Mul(ops.len() as u16));
        }
        Expr::Power(b, e) => {
            compile_into(b, table, out)?;
            match e.as_const().and_then(super::Number::as_i64) {
                Some(n) if i32::try_from(n).is_ok() => out.push(Instr::Powi(n as i32)),
                _ => {
                    compile_into(e, table, out)?;
                    out.push(Instr::Powf);
                }
            }
        }
        Expr::Func(f, a) => {
            compile_into(a, table, out)?;
            out.push(Instr::Call(*f));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new(vec!["S", "I", "R"], vec!["beta", "gamma", "N"]).unwrap()
    }

    #[test]
    fn evaluates_paper_rate_by_hand_arithmetic() {
        // values from the worked solve example: N = 7781984, beta = 3.6
        let t = table();
        let e = parse("beta*S*I/N", &t).unwrap();
        let mut b = HashMap::new();
        b.insert("beta".into(), 3.6);
        b.insert("S".into(), 505_828.96);
        b.insert("I".into(), 20.5);
        b.insert("N".into(), 7_781_984.0);
        let expected = 3.6 * 505_828.96 * 20.5 / 7_781_984.0;
        assert!((e.evaluate(&b).unwrap() - expected).abs() <= 1e-12 * expected.abs());
    }

    #[test]
    fn constant_with_empty_bindings() {
        let t = table();
        let e = parse("5", &t).unwrap();
        assert_eq!(e.evaluate(&HashMap::new()).unwrap(), 5.0);
    }

    #[test]
    fn exp_of_zero_is_one() {
        let t = table();
        let e = parse("exp(0)", &t).unwrap();
        assert_eq!(e.evaluate(&HashMap::new()).unwrap(), 1.0);
    }

    #[test]
    fn missing_binding_reported() {
        let t = table();
        let e = parse("beta*S", &t).unwrap();
        let mut b = HashMap::new();
        b.insert("beta".into(), 1.0);
        assert!(matches!(
            e.evaluate(&b),
            Err(ExprError::MissingBinding { name }) if name == "S"
        ));
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let t = table();
        let e = parse("S/I", &t).unwrap();
        let mut b = HashMap::new();
        b.insert("S".into(), 1.0);
        b.insert("I".into(), 0.0);
        assert!(matches!(e.evaluate(&b), Err(ExprError::Domain(_))));
    }

    #[test]
    fn log_of_non_positive_is_domain_error() {
        let t = table();
        let e = parse("log(S)", &t).unwrap();
        for v in [0.0, -1.0] {
            let mut b = HashMap::new();
            b.insert("S".into(), v);
            assert!(matches!(e.evaluate(&b), Err(ExprError::Domain(_))));
        }
    }

    #[test]
    fn tape_matches_tree_walk() {
        let t = table();
        let sources = [
            "beta*S*I/N",
            "gamma*I - beta*S*I/N",
            "exp(-gamma*t)*S + sqrt(N)",
            "(S + I)^3/N^2",
            "S^-1*N",
        ];
        let mut stack = Vec::new();
        for (case, src) in sources.iter().enumerate() {
            let e = parse(src, &t).unwrap();
            let tape = Tape::compile(&e, &t).unwrap();
            // slots: S I R beta gamma N t
            let slots = [3.0, 2.0, 1.0, 0.5, 0.25, 10.0, 1.5];
            let mut b = HashMap::new();
            for (name, v) in ["S", "I", "R", "beta", "gamma", "N", "t"].iter().zip(slots) {
                b.insert(name.to_string(), v);
            }
            let via_tree = e.evaluate(&b).unwrap();
            let via_tape = tape.eval(&slots, &mut stack).unwrap();
            assert!(
                (via_tree - via_tape).abs() <= 1e-14 * via_tree.abs().max(1.0),
                "case {case}: {via_tree} vs {via_tape}"
            );
        }
    }

    #[test]
    fn tape_reports_domain_errors() {
        let t = table();
        let e = parse("1/S", &t).unwrap();
        let tape = Tape::compile(&e, &t).unwrap();
        let slots = [0.0; 7];
        let mut stack = Vec::new();
        assert!(matches!(
            tape.eval(&slots, &mut stack),
            Err(ExprError::Domain(_))
        ));
    }
}

//! Floating-point evaluation of expressions.

use alloc::collections::BTreeMap;
use alloc::format;

use num_complex::Complex;
// f64::sqrt is a std method; routing through Float keeps the crate no_std.
use num_traits::Float;

use super::{Atom, Expr, FuncSym, Var};
use crate::error::AlgError;
use crate::scalar::s_to_f64;

/// Variable bindings and the numeric value of `hbar`.
#[derive(Clone, Debug)]
pub struct EvalEnv {
    vars: BTreeMap<Var, f64>,
    pub hbar: f64,
}

impl EvalEnv {
    pub fn new(hbar: f64) -> Self {
        EvalEnv {
            vars: BTreeMap::new(),
            hbar,
        }
    }

    pub fn bind(mut self, name: &str, value: f64) -> Self {
        self.vars.insert(Var::new(name), value);
        self
    }

    pub fn set(&mut self, v: &Var, value: f64) {
        self.vars.insert(v.clone(), value);
    }

    pub fn get(&self, v: &Var) -> Option<f64> {
        self.vars.get(v).copied()
    }
}

const REAL_TOL: f64 = 1e-9;

fn expect_real(z: Complex<f64>, what: &Expr) -> Result<f64, AlgError> {
    if z.im.abs() > REAL_TOL * (1.0 + z.re.abs()) {
        Err(AlgError::NonRealArgument(format!("{what}")))
    } else {
        Ok(z.re)
    }
}

impl Expr {
    /// Evaluate to a complex double.  Named function symbols have no
    /// numeric definition and make evaluation fail; `sgn`/`abs`/`sqrtabs`
    /// require (numerically) real arguments.
    pub fn eval_f64(&self, env: &EvalEnv) -> Result<Complex<f64>, AlgError> {
        let mut acc = Complex::new(0.0, 0.0);
        for (m, c) in self.terms() {
            let mut term = s_to_f64(c);
            for (a, e) in m.factors() {
                let base = eval_atom(a, env)?;
                term *= powi(base, *e);
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Evaluate an expression expected to be real.
    pub fn eval_real(&self, env: &EvalEnv) -> Result<f64, AlgError> {
        let z = self.eval_f64(env)?;
        expect_real(z, self)
    }
}

fn powi(z: Complex<f64>, e: i64) -> Complex<f64> {
    if e == 0 {
        return Complex::new(1.0, 0.0);
    }
    let base = if e < 0 { z.inv() } else { z };
    let mut acc = Complex::new(1.0, 0.0);
    let mut cur = base;
    let mut k = e.unsigned_abs();
    while k > 0 {
        if k & 1 == 1 {
            acc *= cur;
        }
        k >>= 1;
        if k > 0 {
            cur *= cur;
        }
    }
    acc
}

fn eval_atom(a: &Atom, env: &EvalEnv) -> Result<Complex<f64>, AlgError> {
    Ok(match a {
        Atom::Hbar => Complex::new(env.hbar, 0.0),
        Atom::Var(v) => Complex::new(
            env.get(v)
                .ok_or_else(|| AlgError::UnboundVariable(v.name().into()))?,
            0.0,
        ),
        Atom::Func { sym, order, arg } => {
            let z = arg.eval_f64(env)?;
            match sym {
                FuncSym::Sin => z.sin(),
                FuncSym::Cos => z.cos(),
                FuncSym::Exp => z.exp(),
                FuncSym::Named(n) => {
                    let _ = order;
                    return Err(AlgError::UnknownFunction(n.as_ref().into()));
                }
            }
        }
        Atom::Sgn(u) => {
            let r = expect_real(u.eval_f64(env)?, u)?;
            Complex::new(
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                },
                0.0,
            )
        }
        Atom::SqrtAbs(u) => {
            let r = expect_real(u.eval_f64(env)?, u)?;
            Complex::new(Float::sqrt(r.abs()), 0.0)
        }
        Atom::Abs(u) => {
            let r = expect_real(u.eval_f64(env)?, u)?;
            Complex::new(r.abs(), 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{abs_of, func_of, sgn_of, sqrtabs_of, int_mul};

    #[test]
    fn evaluates_polynomials() {
        let e = crate::expr::parse_expr("x^2*p - 3/2*hbar").unwrap();
        let env = EvalEnv::new(0.5).bind("x", 2.0).bind("p", -1.0);
        let z = e.eval_f64(&env).unwrap();
        assert!((z.re - (-4.0 - 0.75)).abs() < 1e-14);
        assert_eq!(z.im, 0.0);
    }

    #[test]
    fn evaluates_halfinteger_atoms() {
        let x = Expr::var("x");
        let env = EvalEnv::new(1.0).bind("x", -2.0);
        assert_eq!(sgn_of(&x).eval_real(&env).unwrap(), -1.0);
        assert_eq!(abs_of(&x).eval_real(&env).unwrap(), 2.0);
        let s = sqrtabs_of(&int_mul(2, &x)).eval_real(&env).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn evaluates_builtins_and_rejects_named() {
        let t = Expr::var("t");
        let env = EvalEnv::new(1.0).bind("t", 0.3);
        let c = func_of(&crate::expr::FuncSym::Cos, 0, &t)
            .eval_real(&env)
            .unwrap();
        assert!((c - 0.3f64.cos()).abs() < 1e-15);

        let f = func_of(&crate::expr::FuncSym::named("phi"), 1, &t);
        assert!(matches!(
            f.eval_f64(&env),
            Err(AlgError::UnknownFunction(_))
        ));
        let unbound = Expr::var("q");
        assert!(matches!(
            unbound.eval_f64(&env),
            Err(AlgError::UnboundVariable(_))
        ));
    }
}

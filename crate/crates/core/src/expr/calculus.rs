//! Differentiation and substitution.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Zero;

use super::canon::{abs_of, func_of, sgn_of, sqrtabs_of, MonoBuilder};
use super::{Atom, Expr, Monomial, Var};
use crate::error::AlgError;
use crate::scalar::{rat_i64, Rat, Scalar};

impl Expr {
    /// Partial derivative with respect to `v`.
    ///
    /// `sgn` is treated as locally constant (its distributional derivative
    /// is dropped), `d|u| = sgn(u) du` and `d sqrt(|u|) = sgn(u) du /
    /// (2 sqrt(|u|))`, all almost everywhere.  `hbar` is a constant.
    pub fn differentiate(&self, v: &Var) -> Expr {
        let mut acc = Expr::zero();
        for (m, c) in self.terms() {
            for (idx, (a, e)) in m.factors().iter().enumerate() {
                let da = atom_derivative(a, v);
                if da.is_zero() {
                    continue;
                }
                // c * e * a^(e-1) * da * (other factors)
                let mut bld = MonoBuilder::new();
                for (j, (aj, ej)) in m.factors().iter().enumerate() {
                    if j == idx {
                        bld.push(aj.clone(), ej - 1);
                    } else {
                        bld.push(aj.clone(), *ej);
                    }
                }
                let (rest, extra) = bld.finish();
                let coef = c * &Scalar::new(rat_i64(*e), Rat::zero()) * extra;
                acc = acc.add(&Expr::from_term(rest, coef).mul(&da));
            }
        }
        acc
    }

    /// Simultaneous substitution of variables by expressions.
    ///
    /// Fails only when a substitution forces division by a non-monomial
    /// (a sum raised to a negative power).
    pub fn substitute(&self, map: &BTreeMap<Var, Expr>) -> Result<Expr, AlgError> {
        let mut acc = Expr::zero();
        for (m, c) in self.terms() {
            let mut term = Expr::from_scalar(c.clone());
            for (a, e) in m.factors() {
                let factor = substitute_atom(a, map)?.pow(*e)?;
                term = term.mul(&factor);
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// Substitute a single variable.
    pub fn substitute_var(&self, v: &Var, by: &Expr) -> Result<Expr, AlgError> {
        let mut map = BTreeMap::new();
        map.insert(v.clone(), by.clone());
        self.substitute(&map)
    }

    /// Repeated derivative along a multi-index over `frame`.
    pub fn derive_multi(&self, frame: &[Var], orders: &[u16]) -> Expr {
        let mut cur = self.clone();
        for (v, k) in frame.iter().zip(orders) {
            for _ in 0..*k {
                if cur.is_zero() {
                    return cur;
                }
                cur = cur.differentiate(v);
            }
        }
        cur
    }
}

fn atom_derivative(a: &Atom, v: &Var) -> Expr {
    match a {
        Atom::Hbar => Expr::zero(),
        Atom::Var(w) => {
            if w == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Atom::Func { sym, order, arg } => {
            let inner = arg.differentiate(v);
            if inner.is_zero() {
                return Expr::zero();
            }
            inner.mul(&func_of(sym, order + 1, arg))
        }
        Atom::Sgn(_) => Expr::zero(),
        Atom::SqrtAbs(u) => {
            let du = u.differentiate(v);
            if du.is_zero() {
                return Expr::zero();
            }
            // d sqrt|u| = sgn(u) u' / (2 sqrt|u|)
            let inv = Expr::from_atom(a.clone())
                .pow(-1)
                .expect("sqrtabs atom is invertible");
            du.mul(&sgn_of(u)).mul(&inv).mul_rat(1, 2)
        }
        Atom::Abs(u) => {
            let du = u.differentiate(v);
            if du.is_zero() {
                return Expr::zero();
            }
            du.mul(&sgn_of(u))
        }
    }
}

fn substitute_atom(a: &Atom, map: &BTreeMap<Var, Expr>) -> Result<Expr, AlgError> {
    Ok(match a {
        Atom::Hbar => Expr::hbar(),
        Atom::Var(w) => match map.get(w) {
            Some(e) => e.clone(),
            None => Expr::var_of(w),
        },
        Atom::Func { sym, order, arg } => func_of(sym, *order, &arg.substitute(map)?),
        Atom::Sgn(u) => sgn_of(&u.substitute(map)?),
        Atom::SqrtAbs(u) => sqrtabs_of(&u.substitute(map)?),
        Atom::Abs(u) => abs_of(&u.substitute(map)?),
    })
}

/// Rename variables according to `pairs` (simultaneous, so swaps work).
pub fn rename_vars(e: &Expr, pairs: &[(Var, Var)]) -> Expr {
    let map: BTreeMap<Var, Expr> = pairs
        .iter()
        .map(|(from, to)| (from.clone(), Expr::var_of(to)))
        .collect();
    e.substitute(&map)
        .expect("renaming variables cannot fail")
}

/// Build a substitution map from parallel slices.
pub fn subst_map(vars: &[Var], values: &[Expr]) -> BTreeMap<Var, Expr> {
    assert_eq!(vars.len(), values.len());
    vars.iter().cloned().zip(values.iter().cloned()).collect()
}

/// All monomials `x^a p^b ...` of total degree `<= deg` over `vars`,
/// in a deterministic order.  Used by validation routines.
pub fn monomials_up_to(vars: &[Var], deg: u32) -> Vec<Expr> {
    let mut out = Vec::new();
    let mut exps = alloc::vec![0u32; vars.len()];
    loop {
        let total: u32 = exps.iter().sum();
        if total <= deg {
            let mut m = Expr::one();
            for (v, e) in vars.iter().zip(&exps) {
                m = m.mul(&Expr::var_of(v).pow(*e as i64).unwrap());
            }
            out.push(m);
        }
        // odometer over exponents 0..=deg
        let mut i = 0;
        loop {
            if i == exps.len() {
                return out;
            }
            exps[i] += 1;
            if exps[i] > deg {
                exps[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

impl Monomial {
    /// Exponent of a plain variable atom.
    pub fn var_exponent(&self, v: &Var) -> i64 {
        self.exponent(&Atom::Var(v.clone()))
    }
}

impl Expr {
    /// `true` when the expression does not mention `v` at all.
    pub fn free_of(&self, v: &Var) -> bool {
        !self
            .variables()
            .contains(v)
    }

    /// Coefficient of `v^k` when the expression is a polynomial in `v` with
    /// `v`-free coefficients; `None` when `v` occurs inside another atom.
    pub fn poly_coefficient(&self, v: &Var, k: i64) -> Option<Expr> {
        let va = Atom::Var(v.clone());
        let mut pairs = Vec::new();
        for (m, c) in self.terms() {
            let mut strip = MonoBuilder::new();
            let mut seen = 0i64;
            for (a, e) in m.factors() {
                if a == &va {
                    seen = *e;
                } else {
                    if super::canon::atom_mentions(a, core::slice::from_ref(v)) {
                        return None;
                    }
                    strip.push(a.clone(), *e);
                }
            }
            if seen == k {
                let (mm, extra) = strip.finish();
                pairs.push((mm, c * &extra));
            }
        }
        Some(Expr::from_terms(pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{int_mul, FuncSym};

    fn v(n: &str) -> Var {
        Var::new(n)
    }

    fn x() -> Expr {
        Expr::var("x")
    }

    fn p() -> Expr {
        Expr::var("p")
    }

    #[test]
    fn polynomial_derivatives() {
        let e = x().pow(2).unwrap().mul(&p());
        assert_eq!(e.differentiate(&v("x")), int_mul(2, &x().mul(&p())));
        assert_eq!(e.differentiate(&v("p")), x().pow(2).unwrap());
        assert!(e.differentiate(&v("y")).is_zero());
        assert!(Expr::hbar().differentiate(&v("x")).is_zero());
    }

    #[test]
    fn product_and_chain_rules() {
        // d/dx phi(x^2) = 2x phi'(x^2)
        let arg = x().pow(2).unwrap();
        let f = func_of(&FuncSym::named("phi"), 0, &arg);
        let df = f.differentiate(&v("x"));
        let expect = int_mul(2, &x()).mul(&func_of(&FuncSym::named("phi"), 1, &arg));
        assert_eq!(df, expect);

        // d/dt sin(w t) = w cos(w t)
        let wt = Expr::var("w").mul(&Expr::var("t"));
        let ds = func_of(&FuncSym::Sin, 0, &wt).differentiate(&v("t"));
        assert_eq!(ds, Expr::var("w").mul(&func_of(&FuncSym::Cos, 0, &wt)));
    }

    #[test]
    fn halfinteger_derivatives() {
        // d|x| = sgn(x), d sgn(x) = 0
        assert_eq!(abs_of(&x()).differentiate(&v("x")), sgn_of(&x()));
        assert!(sgn_of(&x()).differentiate(&v("x")).is_zero());
        // f = sqrt|2x|: f² = 2|x| forces f' * f = sgn(x)
        let f = sqrtabs_of(&int_mul(2, &x()));
        let fp = f.differentiate(&v("x"));
        assert_eq!(fp.mul(&f), sgn_of(&x()));
        assert_eq!(fp, sgn_of(&x()).mul(&f.pow(-1).unwrap()));
        // The signed square-root map g = sgn(x)·sqrt|2x| has g' = 1/sqrt|2x|.
        let g = sgn_of(&x()).mul(&f);
        assert_eq!(g.differentiate(&v("x")), f.pow(-1).unwrap());
    }

    #[test]
    fn substitution_expands() {
        let e = (&x() + &p()).pow(2).unwrap();
        let out = e.substitute_var(&v("x"), &(&Expr::var("y") - &p())).unwrap();
        assert_eq!(out, Expr::var("y").pow(2).unwrap());

        // substitution into function arguments and sign atoms
        let f = func_of(&FuncSym::named("phi"), 1, &x()).mul(&sgn_of(&x()));
        let out = f.substitute_var(&v("x"), &p().neg()).unwrap();
        assert_eq!(
            out,
            func_of(&FuncSym::named("phi"), 1, &p().neg())
                .mul(&sgn_of(&p()))
                .neg()
        );
    }

    #[test]
    fn substitution_failure_mode() {
        // p -> x + 1 inside p^-1 forces division by a sum
        let e = p().pow(-1).unwrap();
        let r = e.substitute_var(&v("p"), &(&x() + &Expr::one()));
        assert!(matches!(r, Err(AlgError::NonMonomialDivisor(_))));
    }

    #[test]
    fn swap_rename() {
        let e = x().mul(&p().pow(2).unwrap());
        let swapped = rename_vars(&e, &[(v("x"), v("p")), (v("p"), v("x"))]);
        assert_eq!(swapped, p().mul(&x().pow(2).unwrap()));
    }

    #[test]
    fn poly_coefficients() {
        let e = &x().pow(2).unwrap().mul(&p()) + &int_mul(3, &x());
        assert_eq!(e.poly_coefficient(&v("x"), 2), Some(p()));
        assert_eq!(e.poly_coefficient(&v("x"), 1), Some(Expr::from_int(3)));
        assert_eq!(e.poly_coefficient(&v("x"), 0), Some(Expr::zero()));
        // x inside sgn makes extraction refuse
        let s = sgn_of(&x()).mul(&p());
        assert_eq!(s.poly_coefficient(&v("x"), 0), None);
    }

    #[test]
    fn monomial_enumeration() {
        let vs = [v("x"), v("p")];
        let ms = monomials_up_to(&vs, 2);
        assert_eq!(ms.len(), 6); // 1, x, x^2, p, xp, p^2
    }
}

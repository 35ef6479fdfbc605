//! Canonicalization: monomial assembly and the `sgn`/`abs`/`sqrtabs`/function
//! smart constructors.
//!
//! The invariants maintained for stored atoms:
//!
//! - `Sgn` inners are a single variable/function atom or a primitive sum
//!   (content-free, leading sign positive, no common monomial factor);
//!   exponents are always exactly 1.
//! - `SqrtAbs` inners are a single variable/function atom, a squarefree
//!   integer constant `> 1`, or a primitive sum; exponents are always 1.
//! - `Abs` inners are primitive sums; single-term absolute values rewrite
//!   to `term * sgn(term)`.
//!
//! `MonoBuilder` is the single place where atom powers merge, and it
//! re-applies the reduction rules whenever exponents combine.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{Atom, Expr, FuncSym, Monomial, Var};
use crate::scalar::{rat_content, Rat, Scalar};

/// Accumulates atom powers into a canonical monomial, applying the
/// almost-everywhere reduction rules; square extraction may contribute a
/// scalar factor which is returned alongside the monomial.
pub(crate) struct MonoBuilder {
    map: BTreeMap<Atom, i64>,
    coef: Scalar,
}

impl MonoBuilder {
    pub(crate) fn new() -> Self {
        MonoBuilder {
            map: BTreeMap::new(),
            coef: Scalar::one(),
        }
    }

    pub(crate) fn push_monomial(&mut self, m: &Monomial, scale_exp: i64) {
        for (a, e) in m.factors() {
            self.push(a.clone(), e * scale_exp);
        }
    }

    /// Merge `atom^exp` into the product.
    pub(crate) fn push(&mut self, atom: Atom, exp: i64) {
        if exp == 0 {
            return;
        }
        match &atom {
            Atom::Sgn(_) => {
                let cur = self.map.remove(&atom).unwrap_or(0);
                if (cur + exp).rem_euclid(2) == 1 {
                    self.map.insert(atom, 1);
                }
            }
            Atom::SqrtAbs(inner) => {
                let inner = inner.clone();
                let cur = self.map.remove(&atom).unwrap_or(0);
                let tot = cur + exp;
                let k = tot.div_euclid(2);
                if tot.rem_euclid(2) == 1 {
                    self.map.insert(atom, 1);
                }
                if k != 0 {
                    self.push_abs_of_canonical_inner(&inner, k);
                }
            }
            _ => {
                let cur = self.map.remove(&atom).unwrap_or(0);
                let tot = cur + exp;
                if tot != 0 {
                    self.map.insert(atom, tot);
                }
            }
        }
    }

    /// `|inner|^k` where `inner` is an inner already stored in a `SqrtAbs`
    /// atom (single atom, constant, or primitive sum).
    fn push_abs_of_canonical_inner(&mut self, inner: &Expr, k: i64) {
        if let Some(c) = inner.as_scalar() {
            self.coef = &self.coef * &super::scalar_pow(c, k);
            return;
        }
        match inner.terms() {
            [(m, c)] if c.is_one() && m.factors().len() == 1 && m.factors()[0].1 == 1 => {
                let a = m.factors()[0].0.clone();
                if !atom_is_positive(&a) {
                    self.push(sgn_atom_of(&a), k);
                }
                self.push(a, k);
            }
            _ => self.push(Atom::Abs(Arc::new(inner.clone())), k),
        }
    }

    pub(crate) fn finish(self) -> (Monomial, Scalar) {
        (
            Monomial {
                factors: self.map.into_iter().collect(),
            },
            self.coef,
        )
    }
}

/// `sgn(atom)` for a single sign-carrying atom.
fn sgn_atom_of(a: &Atom) -> Atom {
    match a {
        Atom::Var(_) | Atom::Func { .. } => Atom::Sgn(Arc::new(Expr::from_atom(a.clone()))),
        Atom::Sgn(u) => Atom::Sgn(u.clone()),
        Atom::Hbar | Atom::SqrtAbs(_) | Atom::Abs(_) => {
            unreachable!("sgn of an atom that is positive by construction")
        }
    }
}

fn atom_is_positive(a: &Atom) -> bool {
    matches!(a, Atom::Hbar | Atom::SqrtAbs(_) | Atom::Abs(_))
}

/// Decomposition of a nonzero expression as `sign * content * monomial *
/// primitive`: `content` is a positive rational, `monomial` collects the
/// common atom powers, and `primitive` has positive leading sign, unit
/// content and no common monomial factor.  For a single-term input the
/// primitive is `1` or a complex unit remainder.
pub(crate) struct Factored {
    pub sign: i32,
    pub content: Rat,
    pub monomial: Monomial,
    pub primitive: Expr,
}

pub(crate) fn factor_common(e: &Expr) -> Factored {
    assert!(!e.is_zero(), "factor_common of zero");
    // Common monomial: per atom, the minimum exponent over all terms,
    // treating absence as exponent 0.
    let mut mins: BTreeMap<Atom, i64> = BTreeMap::new();
    let first = &e.terms()[0].0;
    for (a, ex) in first.factors() {
        mins.insert(a.clone(), *ex);
    }
    for (m, _) in e.terms().iter().skip(1) {
        let mut seen: BTreeSet<&Atom> = BTreeSet::new();
        for (a, ex) in m.factors() {
            seen.insert(a);
            match mins.get_mut(a) {
                Some(cur) => {
                    if *ex < *cur {
                        *cur = *ex;
                    }
                }
                None => {
                    mins.insert(a.clone(), (*ex).min(0));
                }
            }
        }
        mins.retain(|a, cur| seen.contains(a) || *cur <= 0);
    }
    mins.retain(|_, v| *v != 0);

    let content = rat_content(
        e.terms()
            .iter()
            .flat_map(|(_, c)| [&c.re, &c.im])
            .filter(|r| !r.is_zero()),
    );
    let lead = &e.terms()[0].1;
    let sign = if lead.re.is_zero() {
        if lead.im.is_positive() {
            1
        } else {
            -1
        }
    } else if lead.re.is_positive() {
        1
    } else {
        -1
    };

    let scale = {
        let mut s = content.clone();
        if sign < 0 {
            s = -s;
        }
        Scalar::new(s, Rat::zero())
    };
    let mut pairs = Vec::with_capacity(e.num_terms());
    for (m, c) in e.terms() {
        let mut bld = MonoBuilder::new();
        bld.push_monomial(m, 1);
        for (a, ex) in &mins {
            bld.push(a.clone(), -ex);
        }
        let (mm, extra) = bld.finish();
        pairs.push((mm, c / &scale * extra));
    }
    let primitive = Expr::from_terms(pairs);
    let mut bld = MonoBuilder::new();
    for (a, ex) in mins {
        bld.push(a, ex);
    }
    let (monomial, extra) = bld.finish();
    debug_assert!(extra.is_one());
    Factored {
        sign,
        content,
        monomial,
        primitive,
    }
}

/// `sgn` of a monomial: the product of `sgn(atom)` over odd-exponent atoms,
/// with positive atoms contributing nothing and `|sgn| = 1` absorbed.
fn sgn_of_monomial(m: &Monomial) -> Expr {
    let mut bld = MonoBuilder::new();
    for (a, e) in m.factors() {
        if e % 2 != 0 && !atom_is_positive(a) {
            bld.push(sgn_atom_of(a), 1);
        }
    }
    let (mm, extra) = bld.finish();
    Expr::from_term(mm, extra)
}

/// Canonical `sgn(u)`: multiplicative over factors, insensitive to positive
/// constants, with `sgn(u)^2 = 1` almost everywhere.
pub fn sgn_of(u: &Expr) -> Expr {
    if u.is_zero() {
        return Expr::zero();
    }
    if let Some(c) = u.as_scalar() {
        if let Some(s) = crate::scalar::s_real_sign(c) {
            return Expr::from_int(s as i64);
        }
        // sgn of a non-real constant has no canonical reduction.
        return Expr::from_atom(Atom::Sgn(Arc::new(Expr::from_scalar(c.clone()))));
    }
    let f = factor_common(u);
    let mut out = sgn_of_monomial(&f.monomial).scale(&crate::scalar::s_i64(f.sign as i64));
    if !f.primitive.is_one() {
        match f.primitive.terms() {
            [(m, c)] if m.is_one() => {
                // Complex unit remainder; keep it opaque.
                out = out.mul(&Expr::from_atom(Atom::Sgn(Arc::new(Expr::from_scalar(
                    c.clone(),
                )))));
            }
            _ => {
                out = out.mul(&Expr::from_atom(Atom::Sgn(Arc::new(f.primitive.clone()))));
            }
        }
    }
    out
}

/// Canonical `|u|`.
pub fn abs_of(u: &Expr) -> Expr {
    if u.is_zero() {
        return Expr::zero();
    }
    let f = factor_common(u);
    let mut bld = MonoBuilder::new();
    for (a, e) in f.monomial.factors() {
        match a {
            Atom::Sgn(_) => {} // |sgn| = 1 a.e.
            _ if atom_is_positive(a) => bld.push(a.clone(), *e),
            _ => {
                bld.push(a.clone(), *e);
                if e % 2 != 0 {
                    bld.push(sgn_atom_of(a), 1);
                }
            }
        }
    }
    let mut scale = f.content.clone();
    if !f.primitive.is_one() {
        match f.primitive.terms() {
            [(m, c)] if m.is_one() => {
                // |a+bi| = sqrt(a^2 + b^2), exactly when possible.
                let mod2 = &c.re * &c.re + &c.im * &c.im;
                let (root, rem) = rat_sqrt_split(&mod2);
                scale *= root;
                if !rem.is_one() {
                    bld.push(
                        Atom::SqrtAbs(Arc::new(Expr::from_scalar(Scalar::new(
                            Rat::from_integer(rem),
                            Rat::zero(),
                        )))),
                        1,
                    );
                }
            }
            _ => bld.push(Atom::Abs(Arc::new(f.primitive.clone())), 1),
        }
    }
    let (m, extra) = bld.finish();
    Expr::from_term(m, extra).scale_rat(&scale)
}

/// Canonical `sqrt(|u|)`.
pub fn sqrtabs_of(u: &Expr) -> Expr {
    if u.is_zero() {
        return Expr::zero();
    }
    let f = factor_common(u);
    let mut bld = MonoBuilder::new();
    for (a, e) in f.monomial.factors() {
        if matches!(a, Atom::Sgn(_)) {
            continue;
        }
        let k = e.div_euclid(2);
        let r = e.rem_euclid(2);
        if k != 0 {
            bld.push(a.clone(), k);
            if k % 2 != 0 && !atom_is_positive(a) {
                bld.push(sgn_atom_of(a), 1);
            }
        }
        if r == 1 {
            match a {
                // sqrt(|w|^(2k+1)) leaves sqrt(|w|) with the same inner.
                Atom::Abs(inner) => bld.push(Atom::SqrtAbs(inner.clone()), 1),
                _ => bld.push(Atom::SqrtAbs(Arc::new(Expr::from_atom(a.clone()))), 1),
            }
        }
    }
    let (mut root, rem) = rat_sqrt_split(&f.content);
    if !rem.is_one() {
        bld.push(
            Atom::SqrtAbs(Arc::new(Expr::from_scalar(Scalar::new(
                Rat::from_integer(rem),
                Rat::zero(),
            )))),
            1,
        );
    }
    if !f.primitive.is_one() {
        match f.primitive.terms() {
            [(m, c)] if m.is_one() => {
                // sqrt(|c|) for a unit-content complex constant: exact when
                // |c|^2 is a fourth power pattern, opaque otherwise.
                let mod2 = &c.re * &c.re + &c.im * &c.im;
                let (r1, rem1) = rat_sqrt_split(&mod2);
                if rem1.is_one() {
                    let (r2, rem2) = rat_sqrt_split(&r1);
                    root *= r2;
                    if !rem2.is_one() {
                        bld.push(
                            Atom::SqrtAbs(Arc::new(Expr::from_scalar(Scalar::new(
                                Rat::from_integer(rem2),
                                Rat::zero(),
                            )))),
                            1,
                        );
                    }
                } else {
                    bld.push(
                        Atom::SqrtAbs(Arc::new(Expr::from_scalar(c.clone()))),
                        1,
                    );
                }
            }
            _ => bld.push(Atom::SqrtAbs(Arc::new(f.primitive.clone())), 1),
        }
    }
    let (m, extra) = bld.finish();
    Expr::from_term(m, extra).scale_rat(&root)
}

/// `k`-th derivative of `sym` applied to `arg`, canonicalized.
///
/// Built-in symbols fold the derivative order into the symbol itself and
/// normalize argument parity; named symbols stay formal.
pub fn func_of(sym: &FuncSym, order: u32, arg: &Expr) -> Expr {
    match sym {
        FuncSym::Named(_) => Expr::from_atom(Atom::Func {
            sym: sym.clone(),
            order,
            arg: Arc::new(arg.clone()),
        }),
        FuncSym::Exp => {
            if arg.is_zero() {
                return Expr::one();
            }
            Expr::from_atom(Atom::Func {
                sym: FuncSym::Exp,
                order: 0,
                arg: Arc::new(arg.clone()),
            })
        }
        FuncSym::Sin | FuncSym::Cos => {
            // d^k sin = [sin, cos, -sin, -cos][k mod 4]; cos sits two steps
            // along the same cycle.
            let offset = if *sym == FuncSym::Sin { 0 } else { 1 };
            let idx = (order as usize + offset) % 4;
            let (base_is_sin, mut sign) = match idx {
                0 => (true, 1i64),
                1 => (false, 1),
                2 => (true, -1),
                _ => (false, -1),
            };
            if arg.is_zero() {
                return if base_is_sin {
                    Expr::zero()
                } else {
                    Expr::from_int(sign)
                };
            }
            // sin(-u) = -sin(u), cos(-u) = cos(u).
            let mut inner = arg.clone();
            let lead = &arg.terms()[0].1;
            let neg_lead = if lead.re.is_zero() {
                lead.im.is_negative()
            } else {
                lead.re.is_negative()
            };
            if neg_lead {
                inner = inner.neg();
                if base_is_sin {
                    sign = -sign;
                }
            }
            Expr::from_atom(Atom::Func {
                sym: if base_is_sin { FuncSym::Sin } else { FuncSym::Cos },
                order: 0,
                arg: Arc::new(inner),
            })
            .scale(&crate::scalar::s_i64(sign))
        }
    }
}

/// Exact square root of a nonnegative rational, if it is a perfect square.
pub(crate) fn rat_sqrt_exact(r: &Rat) -> Option<Rat> {
    let (root, rem) = rat_sqrt_split(r);
    if rem.is_one() {
        Some(root)
    } else {
        None
    }
}

/// Write a positive rational as `root^2 * rem` with `rem` a squarefree
/// integer (squarefree up to a bounded trial division, which is exact for
/// the small constants arising here and deterministic in general).
pub(crate) fn rat_sqrt_split(r: &Rat) -> (Rat, BigInt) {
    assert!(r.is_positive(), "sqrt of non-positive rational");
    let (ns, nr) = int_sqrt_split(r.numer());
    let (ds, dr) = int_sqrt_split(r.denom());
    // sqrt(n/d) = (ns/(ds*dr)) * sqrt(nr*dr)
    let root = Rat::new(ns, ds * &dr);
    (root, nr * dr)
}

fn int_sqrt_split(n: &BigInt) -> (BigInt, BigInt) {
    let mut rem = n.clone();
    let mut root = BigInt::one();
    let mut d = BigInt::from(2u32);
    let bound = BigInt::from(100_000u32);
    while &d * &d <= rem && d <= bound {
        let d2 = &d * &d;
        while (&rem % &d2).is_zero() {
            rem /= &d2;
            root *= &d;
        }
        d += 1;
    }
    (root, rem)
}

/// True when `atom` mentions any of `vars` anywhere inside.
pub(crate) fn atom_mentions(atom: &Atom, vars: &[Var]) -> bool {
    match atom {
        Atom::Hbar => false,
        Atom::Var(v) => vars.contains(v),
        Atom::Func { arg, .. } => expr_mentions(arg, vars),
        Atom::Sgn(u) | Atom::SqrtAbs(u) | Atom::Abs(u) => expr_mentions(u, vars),
    }
}

fn expr_mentions(e: &Expr, vars: &[Var]) -> bool {
    e.terms()
        .iter()
        .any(|(m, _)| m.factors().iter().any(|(a, _)| atom_mentions(a, vars)))
}

/// Eliminate even sine powers through `sin^2(u) = 1 - cos^2(u)`.
///
/// Canonical arithmetic keeps `sin^2 + cos^2` as two independent monomials,
/// so determinant and bracket checks on rotation-like maps need this rewrite
/// to recognize the constant. Odd sine powers keep one bare factor; negative
/// powers are left untouched.
pub fn trig_reduce(e: &Expr) -> Expr {
    let mut out = Expr::zero();
    let mut work: Vec<(Monomial, Scalar)> = e.terms().to_vec();
    while let Some((m, c)) = work.pop() {
        let target = m.factors().iter().find_map(|(a, k)| match a {
            Atom::Func { sym: FuncSym::Sin, order: 0, arg } if *k >= 2 => {
                Some((a.clone(), *k, arg.as_ref().clone()))
            }
            _ => None,
        });
        match target {
            None => out = out.add(&Expr::from_term(m, c)),
            Some((atom, k, arg)) => {
                let mut bld = MonoBuilder::new();
                for (a, ex) in m.factors() {
                    if *a == atom {
                        if k > 2 {
                            bld.push(a.clone(), k - 2);
                        }
                    } else {
                        bld.push(a.clone(), *ex);
                    }
                }
                let (rest, extra) = bld.finish();
                let rest = Expr::from_term(rest, &c * &extra);
                let cos2 = func_of(&FuncSym::Cos, 0, &arg).pow(2).expect("square");
                let piece = rest.mul(&(&Expr::one() - &cos2));
                work.extend(piece.terms().iter().cloned());
            }
        }
    }
    out
}

pub(crate) fn collect_vars(atom: &Atom, out: &mut BTreeSet<Var>) {
    match atom {
        Atom::Hbar => {}
        Atom::Var(v) => {
            out.insert(v.clone());
        }
        Atom::Func { arg, .. } => {
            for (m, _) in arg.terms() {
                for (a, _) in m.factors() {
                    collect_vars(a, out);
                }
            }
        }
        Atom::Sgn(u) | Atom::SqrtAbs(u) | Atom::Abs(u) => {
            for (m, _) in u.terms() {
                for (a, _) in m.factors() {
                    collect_vars(a, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::int_mul;
    use crate::scalar::rat;

    fn x() -> Expr {
        Expr::var("x")
    }

    fn p() -> Expr {
        Expr::var("p")
    }

    #[test]
    fn trig_reduce_pythagorean() {
        let u = Expr::var("w").mul(&Expr::var("t"));
        let s = func_of(&FuncSym::Sin, 0, &u);
        let c = func_of(&FuncSym::Cos, 0, &u);
        let one = &s.pow(2).unwrap() + &c.pow(2).unwrap();
        assert!(trig_reduce(&one).is_one());
        // (sin^2 + cos^2)^2 expands to quartics and still reduces to 1
        assert!(trig_reduce(&one.mul(&one)).is_one());
        // odd powers keep one bare sine factor
        let expect = &s - &s.mul(&c.pow(2).unwrap());
        assert_eq!(trig_reduce(&s.pow(3).unwrap()), expect);
        // mixed-argument sines reduce independently
        let s2 = func_of(&FuncSym::Sin, 0, &x());
        let c2 = func_of(&FuncSym::Cos, 0, &x());
        let mixed = s.pow(2).unwrap().mul(&s2.pow(2).unwrap());
        let red = trig_reduce(&mixed);
        let expect2 = (&Expr::one() - &c.pow(2).unwrap())
            .mul(&(&Expr::one() - &c2.pow(2).unwrap()));
        assert_eq!(red, expect2);
    }

    #[test]
    fn sgn_squares_to_one() {
        let s = sgn_of(&x());
        assert!(s.mul(&s).is_one());
        assert_eq!(s.pow(3).unwrap(), s);
        assert_eq!(s.pow(-1).unwrap(), s);
    }

    #[test]
    fn sgn_splits_constants_and_factors() {
        assert_eq!(sgn_of(&int_mul(-2, &x())), sgn_of(&x()).neg());
        assert_eq!(sgn_of(&x().mul(&p())), sgn_of(&x()).mul(&sgn_of(&p())));
        assert!(sgn_of(&x().pow(2).unwrap()).is_one());
        assert_eq!(sgn_of(&x().pow(3).unwrap()), sgn_of(&x()));
        assert!(sgn_of(&Expr::from_int(5)).is_one());
        assert_eq!(sgn_of(&Expr::from_int(-5)), Expr::from_int(-1));
        assert_eq!(sgn_of(&Expr::hbar()), Expr::one());
        assert_eq!(sgn_of(&x().mul(&sgn_of(&p()))), sgn_of(&x()).mul(&sgn_of(&p())));
    }

    #[test]
    fn sgn_of_sum_extracts_content() {
        let u = &int_mul(2, &x()) + &Expr::from_int(2);
        let v = &x() + &Expr::one();
        assert_eq!(sgn_of(&u), sgn_of(&v));
        assert_eq!(sgn_of(&u.neg()), sgn_of(&v).neg());
        // common monomial factors split out of sums too
        let w = &x().mul(&p()) + &x();
        assert_eq!(sgn_of(&w), sgn_of(&x()).mul(&sgn_of(&(&p() + &Expr::one()))));
    }

    #[test]
    fn abs_rewrites_to_sgn() {
        assert_eq!(abs_of(&x()), x().mul(&sgn_of(&x())));
        assert_eq!(abs_of(&x().pow(2).unwrap()), x().pow(2).unwrap());
        assert_eq!(
            abs_of(&int_mul(-3, &x())),
            int_mul(3, &x()).mul(&sgn_of(&x()))
        );
        let inv = abs_of(&x()).pow(-1).unwrap();
        assert_eq!(inv, x().pow(-1).unwrap().mul(&sgn_of(&x())));
        let u = &int_mul(-2, &x()) + &Expr::from_int(-2);
        let v = &x() + &Expr::one();
        assert_eq!(abs_of(&u), abs_of(&v).scale(&crate::scalar::s_i64(2)));
        // |sgn(x) * x| = |x|
        assert_eq!(abs_of(&x().mul(&sgn_of(&x()))), abs_of(&x()));
    }

    #[test]
    fn abs_of_complex_constants() {
        let iu = Expr::i().mul(&x());
        assert_eq!(abs_of(&iu), abs_of(&x()));
        let z = Expr::from_scalar(Scalar::new(rat(3, 1), rat(4, 1))).mul(&x());
        assert_eq!(abs_of(&z), abs_of(&x()).scale(&crate::scalar::s_i64(5)));
    }

    #[test]
    fn sqrtabs_squares_back() {
        for u in [x(), int_mul(2, &x()), x().mul(&p()), &x() + &Expr::one()] {
            let r = sqrtabs_of(&u);
            assert_eq!(r.mul(&r), abs_of(&u), "sqrt(|u|)^2 == |u| for {u}");
        }
    }

    #[test]
    fn sqrtabs_extracts_squares() {
        assert_eq!(sqrtabs_of(&int_mul(4, &x())), int_mul(2, &sqrtabs_of(&x())));
        assert_eq!(sqrtabs_of(&x().pow(2).unwrap()), abs_of(&x()));
        assert_eq!(
            sqrtabs_of(&x().pow(3).unwrap()),
            x().mul(&sgn_of(&x())).mul(&sqrtabs_of(&x()))
        );
        assert_eq!(
            sqrtabs_of(&x().pow(2).unwrap().mul_rat(9, 4)),
            abs_of(&x()).mul_rat(3, 2)
        );
    }

    #[test]
    fn sqrtabs_inverse_power() {
        let inv = sqrtabs_of(&x()).pow(-1).unwrap();
        let expect = x()
            .pow(-1)
            .unwrap()
            .mul(&sgn_of(&x()))
            .mul(&sqrtabs_of(&x()));
        assert_eq!(inv, expect);
        assert!(inv.mul(&sqrtabs_of(&x())).is_one());
        // |2x|^-1 = 1/2 x^-1 sgn(x)
        let a = abs_of(&int_mul(2, &x())).pow(-1).unwrap();
        assert_eq!(
            a,
            x().pow(-1).unwrap().mul(&sgn_of(&x())).mul_rat(1, 2)
        );
    }

    #[test]
    fn sqrt_two_arithmetic() {
        let r2 = sqrtabs_of(&Expr::from_int(2));
        assert_eq!(r2.mul(&r2), Expr::from_int(2));
        assert_eq!(sqrtabs_of(&Expr::from_int(8)), int_mul(2, &r2));
        assert_eq!(r2.pow(-1).unwrap(), r2.mul_rat(1, 2));
        assert_eq!(sqrtabs_of(&Expr::from_int(36)), Expr::from_int(6));
    }

    #[test]
    fn builtin_parity() {
        let t = Expr::var("t");
        assert_eq!(
            func_of(&FuncSym::Sin, 0, &t.neg()),
            func_of(&FuncSym::Sin, 0, &t).neg()
        );
        assert_eq!(
            func_of(&FuncSym::Cos, 0, &t.neg()),
            func_of(&FuncSym::Cos, 0, &t)
        );
        assert_eq!(func_of(&FuncSym::Sin, 1, &t), func_of(&FuncSym::Cos, 0, &t));
        assert_eq!(
            func_of(&FuncSym::Sin, 2, &t),
            func_of(&FuncSym::Sin, 0, &t).neg()
        );
        assert_eq!(
            func_of(&FuncSym::Cos, 1, &t),
            func_of(&FuncSym::Sin, 0, &t).neg()
        );
        assert_eq!(func_of(&FuncSym::Cos, 0, &Expr::zero()), Expr::one());
        assert_eq!(func_of(&FuncSym::Sin, 0, &Expr::zero()), Expr::zero());
        assert_eq!(func_of(&FuncSym::Exp, 0, &Expr::zero()), Expr::one());
    }

    #[test]
    fn factoring_is_exact() {
        let e = &int_mul(6, &x().mul(&p())) + &int_mul(-4, &x().pow(2).unwrap());
        let f = factor_common(&e);
        assert_eq!(f.content, rat(2, 1));
        let rebuilt = Expr::from_term(f.monomial.clone(), Scalar::one())
            .mul(&f.primitive)
            .scale_rat(&f.content)
            .scale(&crate::scalar::s_i64(f.sign as i64));
        assert_eq!(rebuilt, e);
    }

    #[test]
    fn negative_common_powers_factor_out() {
        // x + 1/x = x^-1 (x^2 + 1)
        let e = &x() + &x().pow(-1).unwrap();
        let f = factor_common(&e);
        assert_eq!(
            Expr::from_term(f.monomial.clone(), Scalar::one()),
            x().pow(-1).unwrap()
        );
        assert_eq!(f.primitive, &x().pow(2).unwrap() + &Expr::one());
    }
}

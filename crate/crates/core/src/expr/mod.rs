//! Canonical symbolic expressions for phase-space symbols.
//!
//! An [`Expr`] is a finite sum of terms `coefficient * monomial`, where the
//! coefficient is an exact complex rational and a [`Monomial`] is a product
//! of integer powers of [`Atom`]s.  Atoms are variables, the formal
//! parameter `hbar`, applied function symbols like `phi''(xp)`, and the
//! half-integer building blocks `sgn(u)`, `sqrtabs(u) = sqrt(|u|)` and
//! `abs(u)`.
//!
//! Every constructor and operation maintains one canonical form, so
//! structural equality (`==`) decides mathematical equality within the
//! supported fragment.  The almost-everywhere identities
//!
//! ```text
//! sgn(u)^2 = 1      |u| = u*sgn(u)       sqrt(|u|)^2 = |u|
//! sgn(u*v) = sgn(u)*sgn(v)               |u*v| = |u|*|v|
//! ```
//!
//! are applied eagerly; distributional contributions (derivatives of `sgn`)
//! are dropped by design, matching the usual phase-space calculus away from
//! the singular set.

mod calculus;
mod canon;
mod display;
mod eval;
mod parse;

pub use calculus::{monomials_up_to, rename_vars, subst_map};
pub use canon::{abs_of, func_of, sgn_of, sqrtabs_of, trig_reduce};
pub(crate) use canon::{rat_sqrt_exact, MonoBuilder};
pub use eval::EvalEnv;
pub use parse::{parse_expr, parse_rat};

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::{One, Zero};

use crate::error::AlgError;
use crate::scalar::{rat_i64, s_cmp, s_i64, s_inv, s_pow, Scalar};

/// An interned variable name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

/// A function symbol: one of the built-in analytic functions or an
/// uninterpreted named symbol such as `phi`.
///
/// Equality and ordering are by name only.  Derivatives of built-ins
/// simplify (`sin -> cos -> -sin`), derivatives of named symbols stack up
/// as a formal order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum FuncSym {
    Sin,
    Cos,
    Exp,
    Named(Arc<str>),
}

impl FuncSym {
    pub fn named(name: &str) -> Self {
        FuncSym::Named(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        match self {
            FuncSym::Sin => "sin",
            FuncSym::Cos => "cos",
            FuncSym::Exp => "exp",
            FuncSym::Named(n) => n,
        }
    }
}

/// A multiplicative building block of a monomial.
///
/// The `sgn`/`sqrtabs`/`abs` inners are kept in a restricted canonical shape
/// (see [`canon`]): they are content-free, sign-normalized and carry no
/// monomial factor, which the smart constructors [`sgn_of`], [`abs_of`] and
/// [`sqrtabs_of`] enforce.  Atoms must only be built through those.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Atom {
    /// The formal deformation parameter; treated as a positive constant.
    Hbar,
    Var(Var),
    /// `order`-th derivative of `sym`, applied to `arg`.
    Func {
        sym: FuncSym,
        order: u32,
        arg: Arc<Expr>,
    },
    /// Sign of the inner expression (values -1, 0, 1; squares to 1 a.e.).
    Sgn(Arc<Expr>),
    /// `sqrt(|inner|)`.
    SqrtAbs(Arc<Expr>),
    /// `|inner|` of an irreducible sum.
    Abs(Arc<Expr>),
}

/// A product of atom powers with nonzero exponents, sorted by atom.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Default)]
pub struct Monomial {
    factors: Vec<(Atom, i64)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[(Atom, i64)] {
        &self.factors
    }

    /// Exponent of `atom` in this monomial (0 when absent).
    pub fn exponent(&self, atom: &Atom) -> i64 {
        self.factors
            .iter()
            .find(|(a, _)| a == atom)
            .map_or(0, |(_, e)| *e)
    }

    /// Total degree in the given variables, counting only plain variable
    /// atoms (function arguments and sign-like inners do not contribute).
    pub fn degree_in(&self, vars: &[Var]) -> i64 {
        self.factors
            .iter()
            .map(|(a, e)| match a {
                Atom::Var(v) if vars.contains(v) => *e,
                _ => 0,
            })
            .sum()
    }
}

/// A canonical sum of scalar-weighted monomials.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Expr {
    terms: Vec<(Monomial, Scalar)>,
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.terms.iter();
        let mut b = other.terms.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((ma, ca)), Some((mb, cb))) => {
                    let ord = ma.cmp(mb).then_with(|| s_cmp(ca, cb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    }
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn one() -> Self {
        Expr::from_scalar(Scalar::one())
    }

    pub fn from_scalar(s: Scalar) -> Self {
        if s.is_zero() {
            Expr::zero()
        } else {
            Expr {
                terms: alloc::vec![(Monomial::one(), s)],
            }
        }
    }

    pub fn from_int(n: i64) -> Self {
        Expr::from_scalar(s_i64(n))
    }

    pub fn from_rat(n: i64, d: i64) -> Self {
        Expr::from_scalar(crate::scalar::s_rat(n, d))
    }

    /// The imaginary unit as an expression.
    pub fn i() -> Self {
        Expr::from_scalar(crate::scalar::s_i())
    }

    pub fn var(name: &str) -> Self {
        Expr::from_atom(Atom::Var(Var::new(name)))
    }

    pub fn var_of(v: &Var) -> Self {
        Expr::from_atom(Atom::Var(v.clone()))
    }

    pub fn hbar() -> Self {
        Expr::from_atom(Atom::Hbar)
    }

    pub(crate) fn from_atom(a: Atom) -> Self {
        Expr {
            terms: alloc::vec![(
                Monomial {
                    factors: alloc::vec![(a, 1)],
                },
                Scalar::one()
            )],
        }
    }

    pub(crate) fn from_term(m: Monomial, c: Scalar) -> Self {
        if c.is_zero() {
            Expr::zero()
        } else {
            Expr {
                terms: alloc::vec![(m, c)],
            }
        }
    }

    /// Build from arbitrary (monomial, coefficient) pairs: merges duplicates,
    /// drops zeros, sorts.
    pub(crate) fn from_terms(pairs: Vec<(Monomial, Scalar)>) -> Self {
        let mut map: BTreeMap<Monomial, Scalar> = BTreeMap::new();
        for (m, c) in pairs {
            if c.is_zero() {
                continue;
            }
            match map.entry(m) {
                alloc::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(c);
                }
                alloc::collections::btree_map::Entry::Occupied(mut e) => {
                    let s = e.get() + &c;
                    if s.is_zero() {
                        e.remove();
                    } else {
                        *e.get_mut() = s;
                    }
                }
            }
        }
        Expr {
            terms: map.into_iter().collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_scalar().is_some_and(|s| s.is_one())
    }

    /// When the expression is a constant, its value.
    pub fn as_scalar(&self) -> Option<&Scalar> {
        match self.terms.as_slice() {
            [] => None,
            [(m, c)] if m.is_one() => Some(c),
            _ => None,
        }
    }

    /// Zero is a constant too; this variant treats it as such.
    pub fn to_scalar(&self) -> Option<Scalar> {
        if self.is_zero() {
            return Some(Scalar::zero());
        }
        self.as_scalar().cloned()
    }

    pub fn terms(&self) -> &[(Monomial, Scalar)] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Coefficient of an exact monomial (zero when absent).
    pub fn coefficient(&self, m: &Monomial) -> Scalar {
        self.terms
            .iter()
            .find(|(mm, _)| mm == m)
            .map_or_else(Scalar::zero, |(_, c)| c.clone())
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        // Merge two sorted term lists.
        let mut out: Vec<(Monomial, Scalar)> =
            Vec::with_capacity(self.terms.len() + rhs.terms.len());
        let mut a = self.terms.iter().peekable();
        let mut b = rhs.terms.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => break,
                (Some(_), None) => out.push(a.next().unwrap().clone()),
                (None, Some(_)) => out.push(b.next().unwrap().clone()),
                (Some((ma, _)), Some((mb, _))) => match ma.cmp(mb) {
                    Ordering::Less => out.push(a.next().unwrap().clone()),
                    Ordering::Greater => out.push(b.next().unwrap().clone()),
                    Ordering::Equal => {
                        let (m, ca) = a.next().unwrap();
                        let (_, cb) = b.next().unwrap();
                        let s = ca + cb;
                        if !s.is_zero() {
                            out.push((m.clone(), s));
                        }
                    }
                },
            }
        }
        Expr { terms: out }
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, s: &Scalar) -> Expr {
        if s.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn scale_rat(&self, r: &crate::scalar::Rat) -> Expr {
        self.scale(&Scalar::new(r.clone(), crate::scalar::Rat::zero()))
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        let mut pairs = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let mut bld = canon::MonoBuilder::new();
                bld.push_monomial(ma, 1);
                bld.push_monomial(mb, 1);
                let (m, extra) = bld.finish();
                pairs.push((m, ca * cb * extra));
            }
        }
        Expr::from_terms(pairs)
    }

    /// Integer power.  Nonnegative exponents expand products; negative
    /// exponents require a single invertible term.
    pub fn pow(&self, e: i64) -> Result<Expr, AlgError> {
        if e == 0 {
            return Ok(Expr::one());
        }
        let base = if e < 0 { self.invert_monomial()? } else { self.clone() };
        let mut acc = Expr::one();
        let mut cur = base;
        let mut k = e.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&cur);
            }
            k >>= 1;
            if k > 0 {
                cur = cur.mul(&cur);
            }
        }
        Ok(acc)
    }

    /// Divide by a single-term expression.
    pub fn div(&self, rhs: &Expr) -> Result<Expr, AlgError> {
        Ok(self.mul(&rhs.invert_monomial()?))
    }

    fn invert_monomial(&self) -> Result<Expr, AlgError> {
        match self.terms.as_slice() {
            [] => Err(AlgError::DivisionByZero),
            [(m, c)] => {
                let mut bld = canon::MonoBuilder::new();
                bld.push_monomial(m, -1);
                let (mi, extra) = bld.finish();
                let ci = s_inv(c).ok_or(AlgError::DivisionByZero)?;
                Ok(Expr::from_term(mi, ci * extra))
            }
            _ => Err(AlgError::NonMonomialDivisor(alloc::format!("{self}"))),
        }
    }

    /// `self * n/d`.
    pub fn mul_rat(&self, n: i64, d: i64) -> Expr {
        self.scale(&crate::scalar::s_rat(n, d))
    }

    /// Largest power of `hbar` dividing no term... rather: the maximum
    /// `hbar` exponent appearing across terms (0 for `hbar`-free).
    pub fn hbar_degree(&self) -> i64 {
        self.terms
            .iter()
            .map(|(m, _)| m.exponent(&Atom::Hbar))
            .max()
            .unwrap_or(0)
    }

    /// True when no atom involves `hbar`.
    pub fn hbar_free(&self) -> bool {
        self.terms.iter().all(|(m, _)| m.exponent(&Atom::Hbar) == 0)
    }

    /// Split into (hbar exponent -> hbar-free part).  Fails on negative
    /// `hbar` powers.
    pub fn split_hbar(&self) -> Result<BTreeMap<u32, Expr>, AlgError> {
        let mut out: BTreeMap<u32, Vec<(Monomial, Scalar)>> = BTreeMap::new();
        for (m, c) in &self.terms {
            let k = m.exponent(&Atom::Hbar);
            if k < 0 {
                return Err(AlgError::InvalidHbarPower(k));
            }
            let stripped = Monomial {
                factors: m
                    .factors
                    .iter()
                    .filter(|(a, _)| *a != Atom::Hbar)
                    .cloned()
                    .collect(),
            };
            out.entry(k as u32).or_default().push((stripped, c.clone()));
        }
        Ok(out
            .into_iter()
            .map(|(k, pairs)| (k, Expr::from_terms(pairs)))
            .collect())
    }

    /// Multiply by `hbar^k`.
    pub fn mul_hbar_pow(&self, k: u32) -> Expr {
        if k == 0 || self.is_zero() {
            return self.clone();
        }
        let h = Expr::from_term(
            Monomial {
                factors: alloc::vec![(Atom::Hbar, k as i64)],
            },
            Scalar::one(),
        );
        self.mul(&h)
    }

    /// Total degree in `vars` (see [`Monomial::degree_in`]); `None` for the
    /// zero expression.
    pub fn degree_in(&self, vars: &[Var]) -> Option<i64> {
        self.terms.iter().map(|(m, _)| m.degree_in(vars)).max()
    }

    /// True when every term is a product of nonnegative powers of the given
    /// variables, `hbar`, and atoms free of those variables.
    pub fn polynomial_in(&self, vars: &[Var]) -> bool {
        self.terms.iter().all(|(m, _)| {
            m.factors.iter().all(|(a, e)| match a {
                Atom::Var(v) if vars.contains(v) => *e >= 0,
                Atom::Var(_) | Atom::Hbar => true,
                other => !canon::atom_mentions(other, vars) && *e >= 0,
            })
        })
    }

    /// The square root of a single-term expression all of whose atom
    /// exponents are even and whose coefficient is the square of a rational,
    /// taken with the positive branch.  `None` when not of that shape.
    pub fn sqrt_monomial(&self) -> Option<Expr> {
        let (m, c) = match self.terms.as_slice() {
            [(m, c)] => (m, c),
            _ => return None,
        };
        if !crate::scalar::s_is_real(c) || !num_traits::Signed::is_positive(&c.re) {
            return None;
        }
        let root = canon::rat_sqrt_exact(&c.re)?;
        let mut bld = canon::MonoBuilder::new();
        for (a, e) in &m.factors {
            if e % 2 != 0 {
                return None;
            }
            bld.push(a.clone(), e / 2);
        }
        let (half, extra) = bld.finish();
        Some(Expr::from_term(
            half,
            Scalar::new(root, crate::scalar::Rat::zero()) * extra,
        ))
    }

    /// All variables occurring anywhere in the expression, including inside
    /// function arguments and sign-like inners.
    pub fn variables(&self) -> alloc::collections::BTreeSet<Var> {
        let mut out = alloc::collections::BTreeSet::new();
        for (m, _) in &self.terms {
            for (a, _) in &m.factors {
                canon::collect_vars(a, &mut out);
            }
        }
        out
    }

    /// Convenience: `sum * n/d * hbar^k` terms assembled from parts.
    pub fn linear_combination(parts: &[(Expr, Scalar)]) -> Expr {
        let mut acc = Expr::zero();
        for (e, c) in parts {
            acc = acc.add(&e.scale(c));
        }
        acc
    }
}

impl core::ops::Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl core::ops::Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl core::ops::Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl core::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

/// `n * e` for test ergonomics.
pub fn int_mul(n: i64, e: &Expr) -> Expr {
    e.scale(&s_i64(n))
}

/// `hbar^k` as an expression.
pub fn hbar_pow(k: u32) -> Expr {
    Expr::one().mul_hbar_pow(k)
}

/// `(n/d) * i * hbar` — the ubiquitous `i*hbar/2` shapes.
pub fn i_hbar_rat(n: i64, d: i64) -> Expr {
    Expr::hbar().scale(&crate::scalar::s_i_rat(n, d))
}

/// Product of `e/1` rational factorials: `n!` as a scalar helper.
pub fn factorial_rat(n: u64) -> crate::scalar::Rat {
    let mut acc = rat_i64(1);
    for k in 2..=n {
        acc *= rat_i64(k as i64);
    }
    acc
}

/// Binomial coefficient as an exact rational.
pub fn binomial_rat(n: u64, k: u64) -> crate::scalar::Rat {
    if k > n {
        return crate::scalar::Rat::zero();
    }
    let mut acc = rat_i64(1);
    for j in 0..k {
        acc *= rat_i64((n - j) as i64);
        acc /= rat_i64((j + 1) as i64);
    }
    acc
}

/// Scalar power helper re-exported for sibling modules.
pub(crate) fn scalar_pow(z: &Scalar, e: i64) -> Scalar {
    s_pow(z, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{s_rat, Rat};

    fn x() -> Expr {
        Expr::var("x")
    }

    fn p() -> Expr {
        Expr::var("p")
    }

    #[test]
    fn ring_basics() {
        let e = (&(&x() + &p()) * &(&x() - &p())).sub(&(&x().mul(&x()) - &p().mul(&p())));
        assert!(e.is_zero());
        assert_eq!(x().mul(&x()), x().pow(2).unwrap());
        assert!((&x() - &x()).is_zero());
    }

    #[test]
    fn pow_expands_sums() {
        let s = (&x() + &Expr::one()).pow(3).unwrap();
        let expect = &(&x().pow(3).unwrap() + &int_mul(3, &x().pow(2).unwrap()))
            + &(&int_mul(3, &x()) + &Expr::one());
        assert_eq!(s, expect);
    }

    #[test]
    fn negative_pow_needs_monomial() {
        assert!(x().pow(-2).is_ok());
        let s = &x() + &Expr::one();
        assert!(matches!(s.pow(-1), Err(AlgError::NonMonomialDivisor(_))));
        let q = x().pow(-2).unwrap().mul(&x().pow(2).unwrap());
        assert!(q.is_one());
    }

    #[test]
    fn hbar_split() {
        let e = &(&x().mul_hbar_pow(2) + &p()) + &hbar_pow(1).scale(&s_rat(1, 2));
        let parts = e.split_hbar().unwrap();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[&0], p());
        assert_eq!(parts[&1], Expr::from_rat(1, 2));
        assert_eq!(parts[&2], x());
    }

    #[test]
    fn sqrt_of_even_monomial() {
        let m = x().pow(2).unwrap().scale(&s_rat(9, 4));
        let r = m.sqrt_monomial().unwrap();
        assert_eq!(r, x().scale(&s_rat(3, 2)));
        assert!(x().sqrt_monomial().is_none());
        let odd = x().pow(2).unwrap().scale(&s_rat(2, 1));
        assert!(odd.sqrt_monomial().is_none());
    }

    #[test]
    fn scalar_queries() {
        assert_eq!(
            Expr::from_rat(3, 4).as_scalar(),
            Some(&Scalar::new(Rat::new(3.into(), 4.into()), Rat::zero()))
        );
        assert!(Expr::zero().as_scalar().is_none());
        assert_eq!(Expr::zero().to_scalar(), Some(Scalar::zero()));
        assert!(x().as_scalar().is_none());
    }
}

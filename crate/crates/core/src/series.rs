//! Formal power series in the deformation parameter ℏ.
//!
//! An [`HbarSeries`] is Σ_k c_k ℏ^k with each coefficient c_k an ℏ-free
//! [`Expr`]. A series is either *exact* (all coefficients beyond the stored
//! ones are zero) or *truncated at grade K* (coefficients of grade > K are
//! unknown, typically because an upstream expansion was cut off there).
//! Arithmetic tracks the tightest truncation that is still fully known:
//! multiplying a series truncated at K by one whose lowest grade is g yields
//! a product known through grade K + g.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::AlgError;
use crate::expr::{Expr, Var};
use crate::scalar::{s_i, Scalar};

/// A polynomial segment of a power series in ℏ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HbarSeries {
    /// `coeffs[k]` multiplies ℏ^k; every entry is ℏ-free.
    coeffs: Vec<Expr>,
    /// `None`: exact. `Some(k)`: grades above `k` are unknown.
    trunc: Option<u32>,
}

fn opt_min(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(p), Some(q)) => Some(p.min(q)),
    }
}

/// Saturating "truncation + grade" where `None` plays the role of infinity.
fn opt_add(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (Some(p), Some(q)) => Some(p.saturating_add(q)),
        _ => None,
    }
}

impl HbarSeries {
    fn normalized(mut coeffs: Vec<Expr>, trunc: Option<u32>) -> Self {
        if let Some(k) = trunc {
            coeffs.truncate(k as usize + 1);
        }
        while coeffs.last().is_some_and(Expr::is_zero) {
            coeffs.pop();
        }
        HbarSeries { coeffs, trunc }
    }

    /// The exact zero series.
    pub fn zero() -> Self {
        HbarSeries { coeffs: Vec::new(), trunc: None }
    }

    /// The exact constant series 1.
    pub fn one() -> Self {
        Self::from_hbar_free(Expr::one())
    }

    /// An exact grade-0 series from an ℏ-free expression.
    ///
    /// Panics if the expression mentions ℏ; use [`HbarSeries::from_expr`]
    /// for general input.
    pub fn from_hbar_free(e: Expr) -> Self {
        assert!(e.hbar_free(), "coefficient must not mention hbar");
        Self::normalized(alloc::vec![e], None)
    }

    /// The exact series `e · ℏ^k` for ℏ-free `e`.
    pub fn monomial(k: u32, e: Expr) -> Self {
        assert!(e.hbar_free(), "coefficient must not mention hbar");
        let mut coeffs = alloc::vec![Expr::zero(); k as usize];
        coeffs.push(e);
        Self::normalized(coeffs, None)
    }

    /// Splits an expression into graded coefficients; exact.
    ///
    /// Fails if the expression contains a negative power of ℏ.
    pub fn from_expr(e: &Expr) -> Result<Self, AlgError> {
        let graded: BTreeMap<u32, Expr> = e.split_hbar()?;
        let top = graded.keys().next_back().copied().unwrap_or(0);
        let mut coeffs = alloc::vec![Expr::zero(); top as usize + 1];
        for (k, c) in graded {
            coeffs[k as usize] = c;
        }
        Ok(Self::normalized(coeffs, None))
    }

    /// Reassembles the known part as a single expression.
    pub fn to_expr(&self) -> Expr {
        let mut out = Expr::zero();
        for (k, c) in self.coeffs.iter().enumerate() {
            out = &out + &c.mul_hbar_pow(k as u32);
        }
        out
    }

    /// `None` when exact, `Some(k)` when grades above `k` are unknown.
    pub fn truncation(&self) -> Option<u32> {
        self.trunc
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_none()
    }

    /// True when every known coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest grade with a nonzero coefficient, `None` for a zero known part.
    pub fn grade_min(&self) -> Option<u32> {
        self.coeffs.iter().position(|c| !c.is_zero()).map(|k| k as u32)
    }

    /// The coefficient of ℏ^k, or `None` when that grade is unknown.
    pub fn coeff(&self, k: u32) -> Option<Expr> {
        if self.trunc.is_some_and(|t| k > t) {
            return None;
        }
        Some(self.coeffs.get(k as usize).cloned().unwrap_or_else(Expr::zero))
    }

    /// Iterates the nonzero known coefficients as `(grade, expr)`.
    pub fn known_coeffs(&self) -> impl Iterator<Item = (u32, &Expr)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| (k as u32, c))
    }

    /// Forgets everything above grade `k`.
    pub fn truncate(&self, k: u32) -> Self {
        Self::normalized(self.coeffs.clone(), Some(opt_min(self.trunc, Some(k)).unwrap()))
    }

    pub fn neg(&self) -> Self {
        let coeffs = self.coeffs.iter().map(Expr::neg).collect();
        Self::normalized(coeffs, self.trunc)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for k in 0..n {
            let a = self.coeffs.get(k).cloned().unwrap_or_else(Expr::zero);
            let b = other.coeffs.get(k).cloned().unwrap_or_else(Expr::zero);
            coeffs.push(&a + &b);
        }
        Self::normalized(coeffs, opt_min(self.trunc, other.trunc))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        // Unknown tails enter the product at: known(a)·unknown(b) from
        // grade_a + trunc_b + 1, symmetrically for the other factor, and
        // unknown·unknown from trunc_a + trunc_b + 2. The product is known
        // strictly below the earliest onset.
        let t1 = match (self.grade_min(), other.trunc) {
            (Some(g), Some(k)) => Some(g.saturating_add(k)),
            _ => None,
        };
        let t2 = match (other.grade_min(), self.trunc) {
            (Some(g), Some(k)) => Some(g.saturating_add(k)),
            _ => None,
        };
        let t3 = opt_add(opt_add(self.trunc, other.trunc), Some(1));
        let trunc = opt_min(opt_min(t1, t2), t3);
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::normalized(Vec::new(), trunc);
        }
        let n = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = alloc::vec![Expr::zero(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                coeffs[i + j] = &coeffs[i + j] + &(a * b);
            }
        }
        Self::normalized(coeffs, trunc)
    }

    /// Multiplies every coefficient by an ℏ-free expression.
    pub fn scale(&self, e: &Expr) -> Self {
        assert!(e.hbar_free(), "scale factor must not mention hbar");
        let coeffs = self.coeffs.iter().map(|c| c * e).collect();
        Self::normalized(coeffs, self.trunc)
    }

    pub fn scale_scalar(&self, s: &Scalar) -> Self {
        let coeffs = self.coeffs.iter().map(|c| c.scale(s)).collect();
        Self::normalized(coeffs, self.trunc)
    }

    /// Multiplies by iℏ (shifts every grade up by one).
    pub fn mul_i_hbar(&self) -> Self {
        let mut coeffs = alloc::vec![Expr::zero()];
        coeffs.extend(self.coeffs.iter().map(|c| c.scale(&s_i())));
        Self::normalized(coeffs, self.trunc.map(|k| k.saturating_add(1)))
    }

    /// Divides by iℏ. The grade-0 coefficient must vanish.
    pub fn div_i_hbar(&self) -> Result<Self, AlgError> {
        if self.coeffs.first().is_some_and(|c| !c.is_zero()) {
            return Err(AlgError::NotGraded("division by i*hbar needs a vanishing grade-0 part"));
        }
        if self.trunc == Some(0) {
            return Err(AlgError::NotGraded("division by i*hbar of an order-0 truncation"));
        }
        let minus_i = s_i().conj();
        let coeffs: Vec<Expr> =
            self.coeffs.iter().skip(1).map(|c| c.scale(&minus_i)).collect();
        Ok(Self::normalized(coeffs, self.trunc.map(|k| k - 1)))
    }

    /// Differentiates every coefficient with respect to `v`.
    pub fn differentiate(&self, v: &Var) -> Self {
        let coeffs = self.coeffs.iter().map(|c| c.differentiate(v)).collect();
        Self::normalized(coeffs, self.trunc)
    }

    /// Substitutes into every coefficient. Replacement expressions must be
    /// ℏ-free so the grading is preserved.
    pub fn substitute(&self, map: &BTreeMap<Var, Expr>) -> Result<Self, AlgError> {
        for e in map.values() {
            if !e.hbar_free() {
                return Err(AlgError::NotGraded("substitution into a graded coefficient"));
            }
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            coeffs.push(c.substitute(map)?);
        }
        Ok(Self::normalized(coeffs, self.trunc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn roundtrip_and_grading() {
        let a = HbarSeries::from_expr(&e("x + hbar^2*p - 1/2*hbar^2")).unwrap();
        assert!(a.is_exact());
        assert_eq!(a.grade_min(), Some(0));
        assert_eq!(a.coeff(0).unwrap(), e("x"));
        assert_eq!(a.coeff(1).unwrap(), Expr::zero());
        assert_eq!(a.coeff(2).unwrap(), e("p - 1/2"));
        assert_eq!(a.coeff(9).unwrap(), Expr::zero());
        assert_eq!(a.to_expr(), e("x + hbar^2*(p - 1/2)"));
    }

    #[test]
    fn negative_hbar_power_rejected() {
        let bad = e("x").mul_hbar_pow(2).pow(-1);
        assert!(bad.is_ok());
        assert!(HbarSeries::from_expr(&bad.unwrap()).is_err());
    }

    #[test]
    fn product_tracks_truncation() {
        // (1 + ℏx) known through grade 1, times exact ℏ²p: the unknown tail
        // of the first factor only enters at grade 1 + 2 = 3 + 1.
        let a = HbarSeries::from_expr(&e("1 + hbar*x")).unwrap().truncate(1);
        let b = HbarSeries::from_expr(&e("hbar^2*p")).unwrap();
        let prod = a.mul(&b);
        assert_eq!(prod.truncation(), Some(3));
        assert_eq!(prod.coeff(2).unwrap(), e("p"));
        assert_eq!(prod.coeff(3).unwrap(), e("x*p"));
        assert_eq!(prod.coeff(4), None);
    }

    #[test]
    fn zero_annihilates_even_truncated() {
        let a = HbarSeries::from_expr(&e("1 + hbar*x")).unwrap().truncate(1);
        let z = HbarSeries::zero();
        let prod = a.mul(&z);
        assert!(prod.is_zero());
        assert!(prod.is_exact());
    }

    #[test]
    fn i_hbar_shifts() {
        let a = HbarSeries::from_expr(&e("x + hbar*p")).unwrap();
        let up = a.mul_i_hbar();
        assert_eq!(up.to_expr(), e("i*hbar*x + i*hbar^2*p"));
        assert_eq!(up.div_i_hbar().unwrap(), a);
        assert!(a.div_i_hbar().is_err());
    }

    #[test]
    fn add_takes_tightest_truncation() {
        let a = HbarSeries::from_expr(&e("x")).unwrap().truncate(4);
        let b = HbarSeries::from_expr(&e("hbar^2*p")).unwrap();
        let s = a.add(&b);
        assert_eq!(s.truncation(), Some(4));
        assert_eq!(s.coeff(2).unwrap(), e("p"));
        assert_eq!(s.coeff(5), None);
    }
}

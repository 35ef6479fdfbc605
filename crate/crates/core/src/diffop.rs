//! Differential operators with symbolic coefficients.
//!
//! A [`DiffOp`] is a finite sum Σ_α c_α(ξ, ℏ) ∂^α over a fixed ordered
//! *frame* of variables ξ = (ξ_1, …, ξ_n); the multi-index α ranges over
//! ℕ^n and the coefficients are expressions in the frame variables, any
//! parameters, and ℏ. Composition follows the Leibniz rule
//!
//! ```text
//! (f ∂^α) ∘ (g ∂^β) = Σ_{γ ≤ α} C(α, γ) f (∂^γ g) ∂^{α−γ+β}.
//! ```
//!
//! Like [`HbarSeries`], an operator is either exact or known only through a
//! stated ℏ-grade; truncation propagates through sums, compositions, and
//! the graded exponential/inverse used to build unitary-equivalence maps.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use core::fmt;

use num_traits::One;

use crate::error::AlgError;
use crate::expr::{binomial_rat, Atom, Expr, Var};
use crate::scalar::Scalar;
use crate::series::HbarSeries;

/// Builds a differentiation frame from variable names.
pub fn frame_of(names: &[&str]) -> Arc<[Var]> {
    names.iter().map(|n| Var::new(n)).collect()
}

/// A linear differential operator over a fixed variable frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOp {
    frame: Arc<[Var]>,
    /// Multi-index (one order per frame variable) → nonzero coefficient.
    terms: BTreeMap<Vec<u16>, Expr>,
    /// `None`: exact. `Some(k)`: contributions of ℏ-grade above `k` unknown.
    trunc: Option<u32>,
}

pub(crate) fn opt_min(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(p), Some(q)) => Some(p.min(q)),
    }
}

pub(crate) fn opt_add(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (Some(p), Some(q)) => Some(p.saturating_add(q)),
        _ => None,
    }
}

/// Lowest ℏ-degree across the terms of an expression, `None` when zero.
pub(crate) fn expr_grade_min(e: &Expr) -> Option<u32> {
    e.terms()
        .iter()
        .map(|(m, _)| {
            let k = m.exponent(&Atom::Hbar);
            debug_assert!(k >= 0, "operator coefficient with negative hbar power");
            k as u32
        })
        .min()
}

/// Drops monomials of ℏ-degree above `k`; reports whether anything fell.
pub(crate) fn expr_truncate_hbar(e: &Expr, k: u32) -> (Expr, bool) {
    let mut kept = Vec::new();
    let mut dropped = false;
    for (m, c) in e.terms() {
        if m.exponent(&Atom::Hbar) <= k as i64 {
            kept.push((m.clone(), c.clone()));
        } else {
            dropped = true;
        }
    }
    if !dropped {
        return (e.clone(), false);
    }
    let sum = kept
        .into_iter()
        .fold(Expr::zero(), |acc, (m, c)| &acc + &Expr::from_term(m, c));
    (sum, true)
}

impl DiffOp {
    fn normalized(
        frame: Arc<[Var]>,
        terms: BTreeMap<Vec<u16>, Expr>,
        trunc: Option<u32>,
    ) -> Self {
        let n = frame.len();
        let mut out = BTreeMap::new();
        for (alpha, c) in terms {
            assert_eq!(alpha.len(), n, "multi-index length must match frame");
            if c.is_zero() {
                continue;
            }
            let c = match trunc {
                Some(k) => expr_truncate_hbar(&c, k).0,
                None => c,
            };
            if !c.is_zero() {
                out.insert(alpha, c);
            }
        }
        DiffOp { frame, terms: out, trunc }
    }

    pub fn zero(frame: Arc<[Var]>) -> Self {
        DiffOp { frame, terms: BTreeMap::new(), trunc: None }
    }

    /// The identity operator (multiplication by 1).
    pub fn identity(frame: Arc<[Var]>) -> Self {
        Self::mul_op(frame, Expr::one())
    }

    /// Multiplication by a fixed expression, `f ↦ e·f`.
    pub fn mul_op(frame: Arc<[Var]>, e: Expr) -> Self {
        let n = frame.len();
        let mut terms = BTreeMap::new();
        terms.insert(alloc::vec![0u16; n], e);
        Self::normalized(frame, terms, None)
    }

    /// The first-order derivative ∂ in frame slot `i`.
    pub fn deriv(frame: Arc<[Var]>, i: usize) -> Self {
        let n = frame.len();
        assert!(i < n, "derivative slot out of frame");
        let mut alpha = alloc::vec![0u16; n];
        alpha[i] = 1;
        Self::deriv_multi(frame, alpha)
    }

    /// The monomial derivative ∂^α.
    pub fn deriv_multi(frame: Arc<[Var]>, alpha: Vec<u16>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(alpha, Expr::one());
        Self::normalized(frame, terms, None)
    }

    pub fn from_terms(
        frame: Arc<[Var]>,
        terms: impl IntoIterator<Item = (Vec<u16>, Expr)>,
    ) -> Self {
        let mut map: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
        for (alpha, c) in terms {
            let slot = map.entry(alpha).or_insert_with(Expr::zero);
            *slot = &*slot + &c;
        }
        Self::normalized(frame, map, None)
    }

    pub fn frame(&self) -> &Arc<[Var]> {
        &self.frame
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u16>, Expr> {
        &self.terms
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
        self.terms.is_empty()
    }

    /// Highest total derivative order |α| among the known terms.
    pub fn order(&self) -> u16 {
        self.terms
            .keys()
            .map(|a| a.iter().sum::<u16>())
            .max()
            .unwrap_or(0)
    }

    /// Lowest ℏ-grade present in the known part, `None` when zero.
    pub fn grade_min(&self) -> Option<u32> {
        self.terms.values().filter_map(expr_grade_min).min()
    }

    /// The ℏ-free operator multiplying ℏ^k, or `None` when grade `k` lies
    /// beyond this operator's truncation.
    pub fn hbar_layer(&self, k: u32) -> Option<DiffOp> {
        if self.trunc.is_some_and(|t| k > t) {
            return None;
        }
        let mut terms = BTreeMap::new();
        for (alpha, c) in &self.terms {
            let graded = c.split_hbar().expect("nonnegative hbar powers in operator");
            if let Some(layer) = graded.get(&k) {
                terms.insert(alpha.clone(), layer.clone());
            }
        }
        Some(Self::normalized(self.frame.clone(), terms, None))
    }

    /// Forgets contributions of ℏ-grade above `k`.
    pub fn truncate(&self, k: u32) -> Self {
        Self::normalized(
            self.frame.clone(),
            self.terms.clone(),
            Some(opt_min(self.trunc, Some(k)).unwrap()),
        )
    }

    fn check_frame(&self, other: &Self) {
        assert!(
            self.frame == other.frame,
            "operator frame mismatch: [{}] vs [{}]",
            join_names(&self.frame),
            join_names(&other.frame)
        );
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(a, c)| (a.clone(), c.neg())).collect();
        DiffOp { frame: self.frame.clone(), terms, trunc: self.trunc }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_frame(other);
        let mut terms = self.terms.clone();
        for (alpha, c) in &other.terms {
            let slot = terms.entry(alpha.clone()).or_insert_with(Expr::zero);
            *slot = &*slot + c;
        }
        Self::normalized(self.frame.clone(), terms, opt_min(self.trunc, other.trunc))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let terms = self.terms.iter().map(|(a, c)| (a.clone(), c.scale(s))).collect();
        Self::normalized(self.frame.clone(), terms, self.trunc)
    }

    /// Left multiplication by an expression: `(e·) ∘ self`.
    pub fn left_mul(&self, e: &Expr) -> Self {
        if e.is_zero() {
            return DiffOp::zero(self.frame.clone());
        }
        let terms = self.terms.iter().map(|(a, c)| (a.clone(), e * c)).collect();
        let shift = expr_grade_min(e).unwrap_or(0);
        let trunc = self.trunc.map(|k| k.saturating_add(shift));
        Self::normalized(self.frame.clone(), terms, trunc)
    }

    /// Operator composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        self.check_frame(other);
        // Unknown tails enter at grade_known(a) + trunc_b + 1 and
        // symmetrically, and unknown·unknown at trunc_a + trunc_b + 2.
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

        let n = self.frame.len();
        let mut out: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
        for (alpha, f) in &self.terms {
            for (beta, g) in &other.terms {
                // Sum over γ ≤ α (componentwise).
                let mut gamma = alloc::vec![0u16; n];
                loop {
                    let dg = g.derive_multi(&self.frame, &gamma);
                    if !dg.is_zero() {
                        let mut coef_rat = crate::scalar::Rat::one();
                        for i in 0..n {
                            coef_rat *= binomial_rat(alpha[i] as u64, gamma[i] as u64);
                        }
                        let contrib = (f * &dg).scale_rat(&coef_rat);
                        let mut idx = Vec::with_capacity(n);
                        for i in 0..n {
                            idx.push(alpha[i] - gamma[i] + beta[i]);
                        }
                        let slot = out.entry(idx).or_insert_with(Expr::zero);
                        *slot = &*slot + &contrib;
                    }
                    // Odometer over the box γ ≤ α.
                    let mut i = 0;
                    loop {
                        if i == n {
                            break;
                        }
                        if gamma[i] < alpha[i] {
                            gamma[i] += 1;
                            break;
                        }
                        gamma[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                }
            }
        }
        Self::normalized(self.frame.clone(), out, trunc)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.compose(other).sub(&other.compose(self))
    }

    /// Applies the operator to an expression, returning a graded result
    /// that remembers how far it is known.
    pub fn apply(&self, f: &Expr) -> Result<HbarSeries, AlgError> {
        let mut sum = Expr::zero();
        for (alpha, c) in &self.terms {
            let df = f.derive_multi(&self.frame, alpha);
            if !df.is_zero() {
                sum = &sum + &(c * &df);
            }
        }
        let f_grade = HbarSeries::from_expr(f)?.grade_min();
        let trunc = match (self.trunc, f_grade) {
            (Some(k), Some(g)) => Some(k.saturating_add(g)),
            _ => None,
        };
        let series = HbarSeries::from_expr(&sum)?;
        Ok(match trunc {
            Some(k) => series.truncate(k),
            None => series,
        })
    }

    /// The known part of `self` applied to `f`, as a plain expression.
    pub fn apply_expr(&self, f: &Expr) -> Result<Expr, AlgError> {
        Ok(self.apply(f)?.to_expr())
    }

    /// The graded exponential Σ_j self^j / j!, valid through ℏ-grade `k`.
    ///
    /// Requires a generator of ℏ-grade ≥ 1 so each grade receives finitely
    /// many contributions. The result is exact when the series terminates
    /// before the cutoff bites (a nilpotent exact generator); otherwise it
    /// is truncated at `k`.
    pub fn exp_graded(&self, k: u32) -> Result<DiffOp, AlgError> {
        if !self.is_zero() && self.grade_min().is_none_or(|g| g == 0) {
            return Err(AlgError::NotGraded(
                "graded exponential needs a generator of hbar-grade >= 1",
            ));
        }
        let target = opt_min(Some(k), self.trunc).unwrap();
        let mut acc = DiffOp::identity(self.frame.clone());
        let mut term = DiffOp::identity(self.frame.clone());
        let mut cut = false;
        let mut j: i64 = 0;
        loop {
            j += 1;
            let raw = term.compose(self).scale(&crate::scalar::s_rat(1, j));
            let (next, dropped) = raw.truncate_tracking(target);
            cut |= dropped;
            term = next;
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
        }
        let exact = !cut && self.is_exact();
        Ok(DiffOp { trunc: if exact { None } else { Some(target) }, ..acc })
    }

    /// Inverts `1 + N` with N of ℏ-grade ≥ 1, via the alternating Neumann
    /// series Σ_j (−N)^j, through grade `k`.
    pub fn neumann_inverse(&self, k: u32) -> Result<DiffOp, AlgError> {
        let ident = DiffOp::identity(self.frame.clone());
        let n_part = self.sub(&ident);
        if !n_part.is_zero() && n_part.grade_min().is_none_or(|g| g == 0) {
            return Err(AlgError::NotGraded(
                "inversion needs the form 1 + N with N of hbar-grade >= 1",
            ));
        }
        let target = opt_min(Some(k), self.trunc).unwrap();
        let mut acc = ident.clone();
        let mut term = ident;
        let mut cut = false;
        loop {
            let raw = term.compose(&n_part).neg();
            let (next, dropped) = raw.truncate_tracking(target);
            cut |= dropped;
            term = next;
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
        }
        let exact = !cut && self.is_exact();
        Ok(DiffOp { trunc: if exact { None } else { Some(target) }, ..acc })
    }

    /// The conjugation series e^{self} ∘ b ∘ e^{−self} = Σ_j ad^j(b)/j!,
    /// through ℏ-grade `k`. Requires a generator of ℏ-grade ≥ 1.
    pub fn hadamard_conjugate(&self, b: &DiffOp, k: u32) -> Result<DiffOp, AlgError> {
        self.check_frame(b);
        if !self.is_zero() && self.grade_min().is_none_or(|g| g == 0) {
            return Err(AlgError::NotGraded(
                "conjugation needs a generator of hbar-grade >= 1",
            ));
        }
        let target = opt_min(Some(k), opt_min(self.trunc, b.trunc)).unwrap();
        let mut acc = b.clone();
        let mut term = b.clone();
        let mut cut = false;
        let mut j: i64 = 0;
        loop {
            j += 1;
            let raw = self.commutator(&term).scale(&crate::scalar::s_rat(1, j));
            let (next, dropped) = raw.truncate_tracking(target);
            cut |= dropped;
            term = next;
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
        }
        let exact = !cut && self.is_exact() && b.is_exact();
        Ok(DiffOp { trunc: if exact { None } else { Some(target) }, ..acc })
    }

    /// Drops grades above `k`, reporting whether a nonzero term fell.
    fn truncate_tracking(&self, k: u32) -> (DiffOp, bool) {
        let mut dropped = false;
        let mut terms = BTreeMap::new();
        for (alpha, c) in &self.terms {
            let (kept, fell) = expr_truncate_hbar(c, k);
            dropped |= fell;
            if !kept.is_zero() {
                terms.insert(alpha.clone(), kept);
            }
        }
        (
            DiffOp {
                frame: self.frame.clone(),
                terms,
                trunc: Some(opt_min(self.trunc, Some(k)).unwrap()),
            },
            dropped,
        )
    }
}

fn join_names(frame: &[Var]) -> String {
    let mut s = String::new();
    for (k, v) in frame.iter().enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        s.push_str(v.name());
    }
    s
}

impl fmt::Display for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (alpha, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({c})")?;
            for (i, a) in alpha.iter().enumerate() {
                if *a == 0 {
                    continue;
                }
                write!(f, "*D({})", self.frame[i].name())?;
                if *a > 1 {
                    write!(f, "^{a}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::scalar::s_i64;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn xp_frame() -> Arc<[Var]> {
        frame_of(&["x", "p"])
    }

    #[test]
    fn leibniz_commutator() {
        let fr = xp_frame();
        let dx = DiffOp::deriv(fr.clone(), 0);
        let mul_x = DiffOp::mul_op(fr.clone(), e("x"));
        let comm = dx.commutator(&mul_x);
        assert_eq!(comm, DiffOp::identity(fr));
    }

    #[test]
    fn composition_associates() {
        let fr = xp_frame();
        let a = DiffOp::from_terms(
            fr.clone(),
            [(alloc::vec![1, 0], e("x*p")), (alloc::vec![0, 2], e("1 + x"))],
        );
        let b = DiffOp::from_terms(
            fr.clone(),
            [(alloc::vec![0, 1], e("p^2")), (alloc::vec![0, 0], e("x^3"))],
        );
        let c = DiffOp::from_terms(fr.clone(), [(alloc::vec![1, 1], e("x - p"))]);
        assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
    }

    #[test]
    fn apply_matches_manual_derivatives() {
        let fr = xp_frame();
        // (x ∂p^2)(p^3) = 6 x p.
        let op = DiffOp::from_terms(fr, [(alloc::vec![0, 2], e("x"))]);
        assert_eq!(op.apply_expr(&e("p^3")).unwrap(), e("6*x*p"));
    }

    #[test]
    fn graded_exponential() {
        let fr = xp_frame();
        // exp(ℏ² ∂p³) through grade 5 keeps two correction terms.
        let gen = DiffOp::from_terms(fr.clone(), [(alloc::vec![0, 3], e("hbar^2"))]);
        let s = gen.exp_graded(5).unwrap();
        let expect = DiffOp::from_terms(
            fr,
            [
                (alloc::vec![0, 0], e("1")),
                (alloc::vec![0, 3], e("hbar^2")),
                (alloc::vec![0, 6], e("1/2*hbar^4")),
            ],
        );
        assert_eq!(s.terms(), expect.terms());
        assert_eq!(s.truncation(), Some(5));
    }

    #[test]
    fn exponential_of_nilpotent_is_exact() {
        // x·∂p is not nilpotent, but ℏ ∂p applied twice on grade grounds
        // still truncates; a genuinely terminating case: generator with
        // coefficient killed by its own derivative, A = ℏ x ∂p, A² = ℏ²x²∂p²,
        // never zero. Use instead A = ℏ p ∂x on a frame where ∂x p = 0 and
        // cap high enough that truncation never bites... A^j = ℏ^j p^j ∂x^j
        // grows forever, so exactness only occurs for the zero generator.
        let fr = xp_frame();
        let z = DiffOp::zero(fr.clone());
        let s = z.exp_graded(3).unwrap();
        assert_eq!(s, DiffOp::identity(fr));
        assert!(s.is_exact());
    }

    #[test]
    fn neumann_inverts() {
        let fr = xp_frame();
        let n = DiffOp::from_terms(fr.clone(), [(alloc::vec![0, 1], e("hbar*x"))]);
        let op = DiffOp::identity(fr.clone()).add(&n);
        let inv = op.neumann_inverse(3).unwrap();
        let prod = op.compose(&inv);
        // Identity through grade 3.
        let diff = prod.sub(&DiffOp::identity(fr));
        for k in 0..=3 {
            let layer = diff.hbar_layer(k).unwrap();
            assert!(layer.is_zero(), "grade {k} residue: {layer}");
        }
    }

    #[test]
    fn conjugation_terminates_exactly_on_nilpotent_orbit() {
        let fr = xp_frame();
        // ad_{ℏ∂x}(x·) = ℏ, ad² = 0: the series ends by itself, exactly.
        let gen = DiffOp::from_terms(fr.clone(), [(alloc::vec![1, 0], e("hbar"))]);
        let b = DiffOp::mul_op(fr.clone(), e("x"));
        let conj = gen.hadamard_conjugate(&b, 10).unwrap();
        let expect = DiffOp::mul_op(fr, e("x + hbar"));
        assert_eq!(conj, expect);
        assert!(conj.is_exact());
    }

    #[test]
    fn grade_zero_generator_rejected() {
        let fr = xp_frame();
        let bad = DiffOp::from_terms(fr, [(alloc::vec![1, 0], e("x"))]);
        assert!(bad.exp_graded(3).is_err());
        assert!(bad.hadamard_conjugate(&bad.clone(), 3).is_err());
    }

    #[test]
    fn layers_and_truncation() {
        let fr = xp_frame();
        let op = DiffOp::from_terms(
            fr.clone(),
            [(alloc::vec![1, 0], e("x + hbar^2*p")), (alloc::vec![0, 1], e("hbar"))],
        );
        let l0 = op.hbar_layer(0).unwrap();
        assert_eq!(l0, DiffOp::from_terms(fr.clone(), [(alloc::vec![1, 0], e("x"))]));
        let l1 = op.hbar_layer(1).unwrap();
        assert_eq!(l1, DiffOp::from_terms(fr.clone(), [(alloc::vec![0, 1], e("1"))]));
        let cut = op.truncate(1);
        assert_eq!(cut.hbar_layer(2), None);
        assert_eq!(
            cut.terms(),
            DiffOp::from_terms(
                fr,
                [(alloc::vec![1, 0], e("x")), (alloc::vec![0, 1], e("hbar"))]
            )
            .terms()
        );
    }

    #[test]
    fn apply_respects_truncation() {
        let fr = xp_frame();
        let op = DiffOp::from_terms(fr, [(alloc::vec![0, 1], e("hbar"))]).truncate(2);
        let out = op.apply(&e("hbar*p")).unwrap();
        // Operator unknown above ℏ²; input starts at grade 1, so the result
        // is known through grade 3.
        assert_eq!(out.truncation(), Some(3));
        assert_eq!(out.coeff(2).unwrap(), e("1"));
    }

    #[test]
    #[should_panic(expected = "frame mismatch")]
    fn mismatched_frames_panic() {
        let a = DiffOp::identity(frame_of(&["x", "p"]));
        let b = DiffOp::identity(frame_of(&["xp", "pp"]));
        let _ = a.add(&b);
    }

    #[test]
    fn scale_and_display() {
        let fr = xp_frame();
        let op = DiffOp::from_terms(fr, [(alloc::vec![0, 2], e("x"))]).scale(&s_i64(3));
        assert_eq!(alloc::format!("{op}"), "(3*x)*D(p)^2");
    }
}

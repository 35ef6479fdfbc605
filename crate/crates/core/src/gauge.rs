//! Gauge maps between the Moyal algebra and a transformed star algebra,
//! and the operator ordering built on top of them.
//!
//! A canonical coordinate change T induces a star product ⋆' on the primed
//! frame (see [`crate::cantrans`]).  The two deformations of the same
//! classical algebra are isomorphic: there is a differential operator
//! S = 1 + ℏ S_1 + ℏ² S_2 + ... with
//!
//! ```text
//! S (f ⋆ g) = (S f) ⋆' (S g),     S x'_i = x'_i,     S p'_i = p'_i,
//! ```
//!
//! where ⋆ is the Moyal product written in the primed variables.  On the
//! operator side S intertwines the coordinate left-multiplications:
//! S q̂_i = q̂'_i S and S p̂_i = p̂'_i S, which is the form solved and
//! verified here, order by order in ℏ.
//!
//! The second half of the module is the symbol-to-operator dictionary: a
//! phase-space symbol polynomial in the momenta is rewritten as a
//! normal-ordered [`OperatorPoly`] (all position factors to the left) by
//! the grade shift exp(-(iℏ/2) Σ_i ∂_{x_i}∂_{p_i}), which converts Weyl
//! ordering into normal ordering.  Composing with the inverse gauge map
//! gives the ordering rule induced by a coordinate change, and
//! [`transform_observable`] packages the whole chain A ↦ A∘T ↦ operator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::cantrans::{phi_arg, standard_vars, transformed_star, Transformation};
use crate::diffop::{expr_grade_min, expr_truncate_hbar, opt_min, DiffOp};
use crate::error::AlgError;
use crate::expr::{
    abs_of, binomial_rat, factorial_rat, int_mul, sgn_of, subst_map, trig_reduce, Atom, Expr,
    MonoBuilder, Var,
};
use crate::scalar::{rat, rat_i64, s_i_rat, s_pow, Rat, Scalar};
use crate::series::HbarSeries;
use crate::starprod::StarProduct;

/// A normal-ordered operator polynomial: a finite sum of terms
/// c_β(q̂, ℏ) p̂^β with every position factor standing to the left of every
/// momentum factor.  Coefficients are expressions in the position
/// variables (absolute values, signs and function symbols included) and
/// free parameters; the momenta appear only through the multi-index β.
///
/// Products are re-normalized with the canonical commutator: moving p̂^β
/// across a position-dependent factor g costs
///
/// ```text
/// p̂^β g(q̂) = Σ_{δ≤β} C(β,δ) (-iℏ)^{|δ|} (∂^δ g)(q̂) p̂^{β-δ}.
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPoly {
    xs: Vec<Var>,
    ps: Vec<Var>,
    terms: BTreeMap<Vec<u16>, Expr>,
    /// `None`: exact. `Some(k)`: contributions of ℏ-grade above `k` unknown.
    trunc: Option<u32>,
}

impl OperatorPoly {
    fn normalized(
        xs: Vec<Var>,
        ps: Vec<Var>,
        terms: BTreeMap<Vec<u16>, Expr>,
        trunc: Option<u32>,
    ) -> Self {
        let n = ps.len();
        let mut out = BTreeMap::new();
        for (beta, c) in terms {
            assert_eq!(beta.len(), n, "momentum multi-index length must match");
            if !c.is_zero() {
                out.insert(beta, c);
            }
        }
        OperatorPoly {
            xs,
            ps,
            terms: out,
            trunc,
        }
    }

    /// Builds from explicit (β, coefficient) pairs; coefficients must not
    /// mention the momentum variables.
    pub fn new(
        xs: Vec<Var>,
        ps: Vec<Var>,
        terms: impl IntoIterator<Item = (Vec<u16>, Expr)>,
    ) -> Result<Self, AlgError> {
        let mut map: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
        for (beta, c) in terms {
            if beta.len() != ps.len() {
                return Err(AlgError::FrameMismatch);
            }
            if c.variables().iter().any(|v| ps.contains(v)) {
                return Err(AlgError::Unsupported(
                    "normal-ordered coefficient mentions a momentum variable".to_string(),
                ));
            }
            let slot = map.entry(beta).or_insert_with(Expr::zero);
            *slot = &*slot + &c;
        }
        Ok(Self::normalized(xs, ps, map, None))
    }

    /// The single term c(q̂) p̂^β.
    pub fn term(xs: Vec<Var>, ps: Vec<Var>, coef: Expr, beta: Vec<u16>) -> Result<Self, AlgError> {
        Self::new(xs, ps, [(beta, coef)])
    }

    pub fn zero(xs: Vec<Var>, ps: Vec<Var>) -> Self {
        Self::normalized(xs, ps, BTreeMap::new(), None)
    }

    pub fn xs(&self) -> &[Var] {
        &self.xs
    }

    pub fn ps(&self) -> &[Var] {
        &self.ps
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u16>, Expr> {
        &self.terms
    }

    pub fn truncation(&self) -> Option<u32> {
        self.trunc
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Lowest ℏ-grade present across the coefficients.
    pub fn grade_min(&self) -> Option<u32> {
        self.terms.values().filter_map(expr_grade_min).min()
    }

    /// Forgets contributions of ℏ-grade above `k`.
    pub fn truncate(&self, k: u32) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(b, c)| (b.clone(), expr_truncate_hbar(c, k).0))
            .collect();
        Self::normalized(
            self.xs.clone(),
            self.ps.clone(),
            terms,
            Some(opt_min(self.trunc, Some(k)).unwrap()),
        )
    }

    fn check_frame(&self, other: &Self) {
        assert!(
            self.xs == other.xs && self.ps == other.ps,
            "operator polynomial frame mismatch"
        );
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Scalar::one())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_frame(other);
        let mut terms = self.terms.clone();
        for (b, c) in &other.terms {
            let slot = terms.entry(b.clone()).or_insert_with(Expr::zero);
            *slot = &*slot + c;
        }
        Self::normalized(
            self.xs.clone(),
            self.ps.clone(),
            terms,
            opt_min(self.trunc, other.trunc),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(b, c)| (b.clone(), c.scale(s)))
            .collect();
        Self::normalized(self.xs.clone(), self.ps.clone(), terms, self.trunc)
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(b, c)| (b.clone(), c.scale_rat(r)))
            .collect();
        Self::normalized(self.xs.clone(), self.ps.clone(), terms, self.trunc)
    }

    /// Operator product, re-normal-ordered.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_frame(other);
        // Same truncation bookkeeping as operator composition: unknown
        // tails of one factor enter at the known onset of the other, and
        // the reordering commutators push unknown*unknown one grade up.
        let t1 = match (self.grade_min(), other.trunc) {
            (Some(g), Some(k)) => Some(g.saturating_add(k)),
            _ => None,
        };
        let t2 = match (other.grade_min(), self.trunc) {
            (Some(g), Some(k)) => Some(g.saturating_add(k)),
            _ => None,
        };
        let t3 = match (self.trunc, other.trunc) {
            (Some(a), Some(b)) => Some(a.saturating_add(b).saturating_add(1)),
            _ => None,
        };
        let trunc = opt_min(opt_min(t1, t2), t3);

        let n = self.ps.len();
        let mut out: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
        for (beta, f) in &self.terms {
            for (gamma, g) in &other.terms {
                // Sum over δ ≤ β (componentwise).
                let mut delta = alloc::vec![0u16; n];
                loop {
                    let dg = g.derive_multi(&self.xs, &delta);
                    if !dg.is_zero() {
                        let mut coef = Rat::one();
                        let mut order = 0u32;
                        for i in 0..n {
                            coef *= binomial_rat(beta[i] as u64, delta[i] as u64);
                            order += delta[i] as u32;
                        }
                        let phase = s_pow(&s_i_rat(-1, 1), order as i64);
                        let contrib = (f * &dg)
                            .scale_rat(&coef)
                            .scale(&phase)
                            .mul_hbar_pow(order);
                        let mut idx = Vec::with_capacity(n);
                        for i in 0..n {
                            idx.push(beta[i] - delta[i] + gamma[i]);
                        }
                        let slot = out.entry(idx).or_insert_with(Expr::zero);
                        *slot = &*slot + &contrib;
                    }
                    let mut i = 0;
                    loop {
                        if i == n {
                            break;
                        }
                        if delta[i] < beta[i] {
                            delta[i] += 1;
                            break;
                        }
                        delta[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                }
            }
        }
        Self::normalized(self.xs.clone(), self.ps.clone(), out, trunc)
    }

    /// The position representation: q̂_i acts as multiplication by x_i and
    /// p̂_i as -iℏ ∂_{x_i}, giving a differential operator on functions of
    /// the position variables alone.
    pub fn position_rep(&self) -> DiffOp {
        let frame: Arc<[Var]> = self.xs.clone().into();
        let mut terms = BTreeMap::new();
        for (beta, c) in &self.terms {
            let order: u32 = beta.iter().map(|b| *b as u32).sum();
            let phase = s_pow(&s_i_rat(-1, 1), order as i64);
            terms.insert(beta.clone(), c.scale(&phase).mul_hbar_pow(order));
        }
        let op = DiffOp::from_terms(frame, terms);
        match self.trunc {
            Some(k) => op.truncate(k),
            None => op,
        }
    }

    /// Substitutes concrete commuting operators for q̂_i and p̂_j, keeping
    /// the normal order: each term c_β(q̂) p̂^β becomes c_β(Q) ∘ P^β.
    /// Coefficients must be polynomial in the positions.
    pub fn realize(&self, qs: &[DiffOp], ps: &[DiffOp]) -> Result<DiffOp, AlgError> {
        if qs.len() != self.xs.len() || ps.len() != self.ps.len() || qs.is_empty() {
            return Err(AlgError::FrameMismatch);
        }
        let frame = qs[0].frame().clone();
        let mut acc = DiffOp::zero(frame.clone());
        for (beta, coef) in &self.terms {
            let mut pchain = DiffOp::identity(frame.clone());
            for (j, b) in beta.iter().enumerate() {
                for _ in 0..*b {
                    pchain = pchain.compose(&ps[j]);
                }
            }
            for (m, c) in coef.terms() {
                let mut factor = DiffOp::identity(frame.clone());
                let mut rest = MonoBuilder::new();
                for (atom, e) in m.factors() {
                    if let Atom::Var(v) = atom {
                        if let Some(i) = self.xs.iter().position(|x| x == v) {
                            if *e < 0 {
                                return Err(AlgError::Unsupported(
                                    "cannot realize a negative position power".to_string(),
                                ));
                            }
                            for _ in 0..*e {
                                factor = factor.compose(&qs[i]);
                            }
                            continue;
                        }
                    }
                    rest.push(atom.clone(), *e);
                }
                let (mono, extra) = rest.finish();
                let rest_expr = Expr::from_term(mono, extra * c.clone());
                if rest_expr.variables().iter().any(|v| self.xs.contains(v)) {
                    return Err(AlgError::Unsupported(
                        "cannot realize a non-polynomial function of position".to_string(),
                    ));
                }
                acc = acc.add(&factor.compose(&pchain).left_mul(&rest_expr));
            }
        }
        Ok(acc)
    }
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (beta, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({c})")?;
            for (i, b) in beta.iter().enumerate() {
                if *b == 0 {
                    continue;
                }
                write!(f, "*P({})", self.ps[i].name())?;
                if *b > 1 {
                    write!(f, "^{b}")?;
                }
            }
        }
        Ok(())
    }
}

/// Rewrites a phase-space symbol as the normal-ordered operator whose Weyl
/// symbol it is.  The normal symbol is exp(-(iℏ/2) Σ_i ∂_{x_i}∂_{p_i})
/// applied to the input, after which the momentum powers are read off
/// directly.  The symbol must be polynomial in the momenta; positions may
/// enter through absolute values, signs and function atoms.
pub fn weyl_order(a: &Expr, xs: &[Var], ps: &[Var]) -> Result<OperatorPoly, AlgError> {
    if xs.len() != ps.len() || xs.is_empty() {
        return Err(AlgError::FrameMismatch);
    }
    for (m, _) in a.terms() {
        for (atom, e) in m.factors() {
            match atom {
                Atom::Var(v) if ps.contains(v) => {
                    if *e < 0 {
                        return Err(AlgError::Unsupported(
                            "symbol has a negative momentum power".to_string(),
                        ));
                    }
                }
                Atom::Func { arg, .. } | Atom::Sgn(arg) | Atom::SqrtAbs(arg) | Atom::Abs(arg)
                    if arg.variables().iter().any(|v| ps.contains(v)) =>
                {
                    return Err(AlgError::Unsupported(
                        "momentum appears inside a function atom".to_string(),
                    ));
                }
                _ => {}
            }
        }
    }
    // Grade shift: each application of L = Σ_i ∂_{x_i}∂_{p_i} lowers the
    // momentum degree, so the series terminates.
    let mut normal = a.clone();
    let mut cur = a.clone();
    let mut j: i64 = 0;
    loop {
        j += 1;
        let mut lap = Expr::zero();
        for (xv, pv) in xs.iter().zip(ps) {
            lap = &lap + &cur.differentiate(pv).differentiate(xv);
        }
        if lap.is_zero() {
            break;
        }
        cur = lap
            .scale(&s_i_rat(-1, 2))
            .scale_rat(&rat(1, j))
            .mul_hbar_pow(1);
        normal = &normal + &cur;
    }
    let mut terms: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
    for (m, c) in normal.terms() {
        let mut beta = alloc::vec![0u16; ps.len()];
        let mut rest = MonoBuilder::new();
        for (atom, e) in m.factors() {
            if let Atom::Var(v) = atom {
                if let Some(slot) = ps.iter().position(|p| p == v) {
                    beta[slot] = *e as u16;
                    continue;
                }
            }
            rest.push(atom.clone(), *e);
        }
        let (mono, extra) = rest.finish();
        let coef = Expr::from_term(mono, extra * c.clone());
        let slot = terms.entry(beta).or_insert_with(Expr::zero);
        *slot = &*slot + &coef;
    }
    Ok(OperatorPoly::normalized(
        xs.to_vec(),
        ps.to_vec(),
        terms,
        None,
    ))
}

/// Complex conjugation of a symbol: conjugates every coefficient, leaving
/// the (real-valued) atoms alone.
pub fn conjugate_expr(e: &Expr) -> Expr {
    let pairs = e
        .terms()
        .iter()
        .map(|(m, c)| (m.clone(), c.conj()))
        .collect();
    Expr::from_terms(pairs)
}

/// The gauge isomorphism associated with a canonical transformation: an
/// invertible operator S = 1 + ℏ S_1 + ... on the primed frame carrying
/// the Moyal product into the transformed product.
#[derive(Clone, Debug)]
pub struct GaugeIso {
    s: DiffOp,
    s_inv: DiffOp,
    transformation: Transformation,
}

impl GaugeIso {
    /// The trivial gauge map S = 1 (exact), correct whenever the
    /// transformed star product coincides with the Moyal form, as it does
    /// for linear canonical transformations.
    pub fn identity(t: &Transformation) -> Self {
        let frame: Arc<[Var]> = t.primed().to_vec().into();
        GaugeIso {
            s: DiffOp::identity(frame.clone()),
            s_inv: DiffOp::identity(frame),
            transformation: t.clone(),
        }
    }

    /// Wraps an explicitly known S of the form 1 + (grade ≥ 1); the
    /// inverse is generated through grade `k`.
    pub fn new(t: &Transformation, s: DiffOp, k: u32) -> Result<Self, AlgError> {
        if s.frame().as_ref() != t.primed() {
            return Err(AlgError::FrameMismatch);
        }
        let s_inv = s.neumann_inverse(k)?;
        Ok(GaugeIso {
            s,
            s_inv,
            transformation: t.clone(),
        })
    }

    /// Exponentiates a generator of ℏ-grade ≥ 1 through grade `k`;
    /// S = exp(G) and S⁻¹ = exp(-G).
    pub fn from_exponent(t: &Transformation, generator: &DiffOp, k: u32) -> Result<Self, AlgError> {
        if generator.frame().as_ref() != t.primed() {
            return Err(AlgError::FrameMismatch);
        }
        Ok(GaugeIso {
            s: generator.exp_graded(k)?,
            s_inv: generator.neg().exp_graded(k)?,
            transformation: t.clone(),
        })
    }

    pub fn s(&self) -> &DiffOp {
        &self.s
    }

    pub fn inverse(&self) -> &DiffOp {
        &self.s_inv
    }

    pub fn transformation(&self) -> &Transformation {
        &self.transformation
    }

    /// Grade through which the map is known; `None` when exact.
    pub fn order(&self) -> Option<u32> {
        self.s.truncation()
    }

    pub fn apply(&self, f: &Expr) -> Result<HbarSeries, AlgError> {
        self.s.apply(f)
    }

    pub fn apply_inverse(&self, f: &Expr) -> Result<HbarSeries, AlgError> {
        self.s_inv.apply(f)
    }
}

/// Outcome of the intertwining checks for a gauge map.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeReport {
    /// Grade through which each identity was tested.
    pub order: u32,
    /// S q̂_i = q̂'_i S and S p̂_i = p̂'_i S for every coordinate.
    pub conjugation: bool,
    /// S(f ⋆ g) = (S f) ⋆' (S g) on sampled polynomial pairs.
    pub homomorphism: bool,
    /// S fixes the coordinates themselves.
    pub fixed_points: bool,
    /// Failure notes, empty when everything passes.
    pub detail: Vec<String>,
}

impl GaugeReport {
    pub fn all_pass(&self) -> bool {
        self.conjugation && self.homomorphism && self.fixed_points
    }
}

impl fmt::Display for GaugeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = |ok| if ok { "pass" } else { "FAIL" };
        write!(
            f,
            "gauge checks through hbar^{}: conjugation {}, homomorphism {}, fixed points {}",
            self.order,
            word(self.conjugation),
            word(self.homomorphism),
            word(self.fixed_points)
        )?;
        for d in &self.detail {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

fn op_vanishes_through(op: &DiffOp, k: u32) -> bool {
    op.terms()
        .values()
        .all(|c| trig_reduce(&expr_truncate_hbar(c, k).0).is_zero())
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic small polynomial in `vars`: a handful of terms with
/// integer coefficients in [-3, 3] and per-variable exponents kept low so
/// the star-product tables stay small.
fn sample_poly(state: &mut u64, vars: &[Var]) -> Expr {
    let max_pow = if vars.len() <= 2 { 3 } else { 2 };
    let mut e = Expr::zero();
    for _ in 0..4 {
        let mut term = Expr::from_int((splitmix64(state) % 7) as i64 - 3);
        for v in vars {
            let pow = (splitmix64(state) % max_pow) as i64;
            term = &term * &Expr::var_of(v).pow(pow).expect("nonnegative power");
        }
        e = &e + &term;
    }
    e
}

/// Verifies that the stored S is a gauge map for the stored transformation
/// through ℏ-grade `k`: the coordinate intertwinings S q̂_i = q̂'_i S, the
/// homomorphism property on sampled polynomial pairs, and the fixed points
/// S x'_i = x'_i, S p'_i = p'_i.  Diagnostic: construction errors are
/// folded into a failing report rather than returned.
pub fn verify_gauge(iso: &GaugeIso, k: u32) -> GaugeReport {
    let mut report = GaugeReport {
        order: k,
        conjugation: true,
        homomorphism: true,
        fixed_points: true,
        detail: Vec::new(),
    };
    let t = iso.transformation();
    let star_t = match transformed_star(t) {
        Ok(sp) => sp,
        Err(e) => {
            report.conjugation = false;
            report.homomorphism = false;
            report.fixed_points = false;
            report.detail.push(format!("no transformed star product: {e}"));
            return report;
        }
    };
    let moyal = StarProduct::moyal_in(star_t.xs().to_vec(), star_t.ps().to_vec());

    match (moyal.coordinate_ops(k), star_t.coordinate_ops(k)) {
        (Ok((mq, mp)), Ok((tq, tp))) => {
            let pairs = mq
                .iter()
                .zip(&tq)
                .chain(mp.iter().zip(&tp))
                .zip(t.primed())
                .map(|((m, o), v)| (m, o, v));
            for (m, o, v) in pairs {
                let lhs = iso.s.compose(m);
                let rhs = o.compose(&iso.s);
                let diff = lhs.sub(&rhs);
                if !op_vanishes_through(&diff, k) {
                    report.conjugation = false;
                    report
                        .detail
                        .push(format!("conjugation fails for {}: residual {diff}", v.name()));
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => {
            report.conjugation = false;
            report.detail.push(format!("coordinate operators failed: {e}"));
        }
    }

    let mut state: u64 = 0xa076_1d64_78bd_642f ^ u64::from(k);
    for trial in 0..3 {
        let f = sample_poly(&mut state, t.primed());
        let g = sample_poly(&mut state, t.primed());
        let outcome = (|| -> Result<Option<String>, AlgError> {
            let fg = moyal.star_expr(&f, &g, k)?;
            let lhs = iso.s.apply(&fg)?;
            let sf = iso.s.apply(&f)?.to_expr();
            let sg = iso.s.apply(&g)?.to_expr();
            let rhs = star_t.star(&sf, &sg, k)?;
            let diff = lhs.sub(&rhs);
            for grade in 0..=k {
                match diff.coeff(grade) {
                    Some(c) => {
                        if !trig_reduce(&c).is_zero() {
                            return Ok(Some(format!(
                                "trial {trial}: residual at grade {grade}: {c}"
                            )));
                        }
                    }
                    None => {
                        return Ok(Some(format!("trial {trial}: unknown at grade {grade}")));
                    }
                }
            }
            Ok(None)
        })();
        match outcome {
            Ok(None) => {}
            Ok(Some(note)) => {
                report.homomorphism = false;
                report.detail.push(format!("homomorphism fails, {note}"));
            }
            Err(e) => {
                report.homomorphism = false;
                report.detail.push(format!("homomorphism check errored: {e}"));
            }
        }
    }

    for v in t.primed() {
        let xv = Expr::var_of(v);
        match iso.s.apply(&xv) {
            Ok(series) => {
                let diff = series.sub(&HbarSeries::from_hbar_free(xv));
                let moved = diff
                    .known_coeffs()
                    .any(|(g, c)| g <= k && !trig_reduce(c).is_zero());
                if moved {
                    report.fixed_points = false;
                    report
                        .detail
                        .push(format!("coordinate {} is not fixed", v.name()));
                }
            }
            Err(e) => {
                report.fixed_points = false;
                report.detail.push(format!("fixed-point check errored: {e}"));
            }
        }
    }
    report
}

/// Coefficient-wise derivative of an operator (no chain rule through the
/// derivative slots: this is [∂_v, op] as a multiplication-side action).
fn coeff_derive(op: &DiffOp, v: &Var) -> DiffOp {
    DiffOp::from_terms(
        op.frame().clone(),
        op.terms()
            .iter()
            .map(|(a, c)| (a.clone(), c.differentiate(v))),
    )
}

/// Lowers one derivative slot: Σ c_α α_i ∂^{α - e_i}.
fn ladder(op: &DiffOp, slot: usize) -> DiffOp {
    DiffOp::from_terms(
        op.frame().clone(),
        op.terms().iter().filter(|(idx, _)| idx[slot] > 0).map(|(idx, c)| {
            let mut down = idx.clone();
            down[slot] -= 1;
            (down, c.scale_rat(&rat_i64(idx[slot] as i64)))
        }),
    )
}

fn reduce_coeffs(op: &DiffOp) -> DiffOp {
    DiffOp::from_terms(
        op.frame().clone(),
        op.terms()
            .iter()
            .map(|(a, c)| (a.clone(), trig_reduce(c))),
    )
}

/// Solves the intertwining equations S q̂_i = q̂'_i S, S p̂_j = p̂'_j S for
/// S = 1 + ℏ S_1 + ... + ℏ^k S_k directly, order by order.
///
/// At grade k the commutator with the zeroth-order coordinate operators
/// turns both equations into ladder identities that determine every
/// coefficient of S_k by division; the grade is over-determined, and any
/// disagreement between the position and momentum routes (or a residual
/// left after back-substitution) is reported as [`AlgError::GaugeInconsistent`]
/// with the offending term.  Each grade is determined uniquely once the
/// function part is normalized away (S_k has no pure multiplication term,
/// so S 1 = 1); there is no degenerate direction to report.
pub fn solve_gauge(t: &Transformation, k: u32) -> Result<GaugeIso, AlgError> {
    let star_t = transformed_star(t)?;
    let n = star_t.n();
    let frame = star_t.frame().clone();
    let moyal = StarProduct::moyal_in(star_t.xs().to_vec(), star_t.ps().to_vec());
    let (mq, mp) = moyal.coordinate_ops(k)?;
    let (tq, tp) = star_t.coordinate_ops(k)?;

    // Grade layers of the perturbations q̂'_i - q̂_i and p̂'_j - p̂_j.
    let layers = |a: &[DiffOp], b: &[DiffOp]| -> Result<Vec<Vec<DiffOp>>, AlgError> {
        let mut out = Vec::with_capacity(n);
        for (op, base) in a.iter().zip(b) {
            let d = reduce_coeffs(&op.sub(base));
            if d.hbar_layer(0).is_some_and(|l| !l.is_zero()) {
                return Err(AlgError::GaugeInconsistent {
                    order: 0,
                    detail: "coordinate operator differs at grade 0".to_string(),
                });
            }
            let mut per = Vec::with_capacity(k as usize);
            for g in 1..=k {
                per.push(d.hbar_layer(g).ok_or_else(|| {
                    AlgError::Unsupported("operator layer beyond truncation".to_string())
                })?);
            }
            out.push(per);
        }
        Ok(out)
    };
    let dq = layers(&tq, &mq)?;
    let dp = layers(&tp, &mp)?;

    let xs: Vec<Var> = star_t.xs().to_vec();
    let ps: Vec<Var> = star_t.ps().to_vec();
    let mut s_layers: Vec<DiffOp> = alloc::vec![DiffOp::identity(frame.clone())];

    for grade in 1..=k {
        let prev = &s_layers[(grade - 1) as usize];
        let mut r1: Vec<DiffOp> = Vec::with_capacity(n);
        let mut r2: Vec<DiffOp> = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = coeff_derive(prev, &ps[i]).scale(&s_i_rat(1, 2));
            for g in 1..=grade {
                acc = acc.add(&dq[i][(g - 1) as usize].compose(&s_layers[(grade - g) as usize]));
            }
            r1.push(reduce_coeffs(&acc));
            let mut acc = coeff_derive(prev, &xs[i]).scale(&s_i_rat(-1, 2));
            for g in 1..=grade {
                acc = acc.add(&dp[i][(g - 1) as usize].compose(&s_layers[(grade - g) as usize]));
            }
            r2.push(reduce_coeffs(&acc));
        }

        let mut candidates: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
        let mut insert = |target: Vec<u16>, value: Expr| -> Result<(), AlgError> {
            if let Some(existing) = candidates.get(&target) {
                if !trig_reduce(&(existing - &value)).is_zero() {
                    return Err(AlgError::GaugeInconsistent {
                        order: grade,
                        detail: format!(
                            "coefficient at derivative index {target:?} is over-determined: \
                             {existing} vs {value}"
                        ),
                    });
                }
            } else {
                candidates.insert(target, value);
            }
            Ok(())
        };
        for (i, r) in r1.iter().enumerate() {
            for (idx, c) in r.terms() {
                let mut target = idx.clone();
                target[i] += 1;
                insert(target, c.scale_rat(&rat(1, idx[i] as i64 + 1)))?;
            }
        }
        for (j, r) in r2.iter().enumerate() {
            for (idx, c) in r.terms() {
                let mut target = idx.clone();
                target[n + j] += 1;
                insert(target, c.scale_rat(&rat(1, idx[n + j] as i64 + 1)))?;
            }
        }
        let s_k = DiffOp::from_terms(frame.clone(), candidates);

        // Back-substitute: every ladder identity must hold exactly.
        for (i, r) in r1.iter().enumerate() {
            let resid = reduce_coeffs(&ladder(&s_k, i).sub(r));
            if !resid.is_zero() {
                return Err(AlgError::GaugeInconsistent {
                    order: grade,
                    detail: format!("position equation {i} leaves residual {resid}"),
                });
            }
        }
        for (j, r) in r2.iter().enumerate() {
            let resid = reduce_coeffs(&ladder(&s_k, n + j).sub(r));
            if !resid.is_zero() {
                return Err(AlgError::GaugeInconsistent {
                    order: grade,
                    detail: format!("momentum equation {j} leaves residual {resid}"),
                });
            }
        }
        s_layers.push(s_k);
    }

    let mut s = DiffOp::identity(frame.clone());
    for (g, layer) in s_layers.iter().enumerate().skip(1) {
        let lifted = DiffOp::from_terms(
            frame.clone(),
            layer
                .terms()
                .iter()
                .map(|(a, c)| (a.clone(), c.mul_hbar_pow(g as u32))),
        );
        s = s.add(&lifted);
    }
    GaugeIso::new(t, s.truncate(k), k)
}

/// Exact rational constants (A_n, B_n) of the gauge generator for the
/// square-root point transformation,
///
/// ```text
/// S = exp( Σ_{n≥1} (-1)^n (ℏ/2)^{2n} [ A_n sgn(x')|2x'|^{1-2n} ∂_x' ∂_p'^{2n}
///                                      - B_n |2x'|^{-2n} ∂_p'^{2n} ] ),
/// ```
///
/// determined by matching the expansion of the exponential against the
/// closed-form transformed coordinate operators grade by grade.
pub fn anbn_constants(nmax: usize) -> (Vec<Rat>, Vec<Rat>) {
    let mut a: Vec<Rat> = Vec::with_capacity(nmax);
    let mut b: Vec<Rat> = Vec::with_capacity(nmax);
    if nmax == 0 {
        return (a, b);
    }
    // aux[k-1][m-1] holds the k-th power coefficient at grade 2m-1; it
    // vanishes for k > m because the generator starts at grade 2.
    let mut a_aux: Vec<Vec<Rat>> = alloc::vec![alloc::vec![Rat::zero(); nmax]; nmax];
    let mut b_aux = a_aux.clone();
    for n in 1..=nmax {
        for k in 2..=n {
            let mut sa = Rat::zero();
            let mut sb = Rat::zero();
            for m in 1..n {
                let a_nm = &a[n - m - 1];
                let b_nm = &b[n - m - 1];
                let a_prev = &a_aux[k - 2][m - 1];
                let b_prev = &b_aux[k - 2][m - 1];
                sa = &sa + &(&rat_i64(4 * (n as i64 - 2 * m as i64)) * &(a_nm * a_prev));
                sb = &sb + &(&rat_i64(4 * (n as i64 - m as i64)) * &(b_nm * a_prev));
                sb = &sb - &(&rat_i64(4 * m as i64) * &(a_nm * b_prev));
            }
            a_aux[k - 1][n - 1] = sa;
            b_aux[k - 1][n - 1] = sb;
        }
        let mut suma = Rat::zero();
        let mut sumb = Rat::zero();
        for k in 2..=n {
            let f = factorial_rat(k as u64);
            suma = &suma + &(&a_aux[k - 1][n - 1] / &f);
            sumb = &sumb + &(&b_aux[k - 1][n - 1] / &f);
        }
        let two_n = rat_i64(2 * n as i64);
        a.push(&(&rat_i64(1) - &suma) / &two_n);
        b.push(&(&rat_i64(2 * n as i64 - 1) - &sumb) / &two_n);
        a_aux[0][n - 1] = &two_n * &a[n - 1];
        b_aux[0][n - 1] = &two_n * &b[n - 1];
    }
    (a, b)
}

/// Gauge generator for the nonlinear shear built from type-1 generating
/// data (a⁻¹u, φ): the exponent of
///
/// ```text
/// S = exp( Σ_{n≥1} (-1)^{n+1} (ℏ/2)^{2n} / (2n+1)!  φ^{(2n+1)}(x') ∂_{p'}^{2n+1} ).
/// ```
///
/// Exact for polynomial φ (the series terminates); truncated at grade `k`
/// otherwise.
pub fn shear_gauge_generator(phi: &Expr, k: u32) -> Result<DiffOp, AlgError> {
    let (_, primed) = standard_vars(1);
    let frame: Arc<[Var]> = primed.clone().into();
    let u = phi_arg();
    let at_x = subst_map(
        core::slice::from_ref(&u),
        core::slice::from_ref(&Expr::var_of(&primed[0])),
    );
    let polynomial = phi.degree_in(core::slice::from_ref(&u)).is_some();
    let mut terms: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
    let mut cur = phi.clone();
    let mut ord = 0u32;
    let mut truncated = false;
    let mut n = 1u32;
    loop {
        let grade = 2 * n;
        if !polynomial && grade > k {
            truncated = true;
            break;
        }
        while ord < 2 * n + 1 {
            cur = cur.differentiate(&u);
            ord += 1;
        }
        if polynomial && cur.is_zero() {
            break;
        }
        debug_assert!(grade < 62, "shear generator grade overflow");
        let mut c = rat(1, 1i64 << grade) / factorial_rat(u64::from(2 * n + 1));
        if n.is_multiple_of(2) {
            c = -c;
        }
        let coef = cur.substitute(&at_x)?.scale_rat(&c).mul_hbar_pow(grade);
        terms.insert(alloc::vec![0, (2 * n + 1) as u16], coef);
        n += 1;
    }
    let op = DiffOp::from_terms(frame, terms);
    Ok(if truncated { op.truncate(k) } else { op })
}

/// Gauge generator for the square-root point transformation
/// x = sgn(x')√|2x'|, p = √|2x'| p', built from [`anbn_constants`]: the
/// exponent terms through grade 2·nmax, truncated there.
pub fn sqrt_gauge_generator(nmax: usize) -> Result<DiffOp, AlgError> {
    let (a, b) = anbn_constants(nmax);
    let (_, primed) = standard_vars(1);
    let frame: Arc<[Var]> = primed.clone().into();
    let x = Expr::var_of(&primed[0]);
    let sgn_x = sgn_of(&x);
    let abs_2x = abs_of(&int_mul(2, &x));
    let mut terms: BTreeMap<Vec<u16>, Expr> = BTreeMap::new();
    for n in 1..=nmax {
        let grade = 2 * n as u32;
        debug_assert!(grade < 62, "generator grade overflow");
        let mut base = rat(1, 1i64 << grade);
        if n % 2 == 1 {
            base = -base;
        }
        let ca = (&sgn_x * &abs_2x.pow(1 - 2 * n as i64)?)
            .scale_rat(&(&base * &a[n - 1]))
            .mul_hbar_pow(grade);
        terms.insert(alloc::vec![1, grade as u16], ca);
        let cb = abs_2x
            .pow(-2 * (n as i64))?
            .scale_rat(&(&-base * &b[n - 1]))
            .mul_hbar_pow(grade);
        terms.insert(alloc::vec![0, grade as u16], cb);
    }
    Ok(DiffOp::from_terms(frame, terms).truncate(2 * nmax as u32))
}

/// Exact gauge generator for the anharmonic-chain flow at time `t` with
/// coupling `kappa` and first mass `m1`:
///
/// ```text
/// (ℏ²/8)(κ/m₁) t² ∂_{x'}∂_{y'}² + (ℏ²/4) κ t ∂_{p'_1}∂_{y'}²
///   + (ℏ²/12)(κ²/m₁) t³ p'_2 ∂_{y'}³
/// ```
///
/// on the two-degree-of-freedom primed frame (y' is the second position).
pub fn anharmonic_gauge_generator(
    kappa: &Expr,
    m1: &Expr,
    tv: &Expr,
) -> Result<DiffOp, AlgError> {
    let (_, primed) = standard_vars(2);
    let frame: Arc<[Var]> = primed.clone().into();
    let t2 = tv.pow(2)?;
    let t3 = tv.pow(3)?;
    let c1 = kappa
        .div(m1)?
        .mul(&t2)
        .mul_rat(1, 8)
        .mul_hbar_pow(2);
    let c2 = kappa.mul(tv).mul_rat(1, 4).mul_hbar_pow(2);
    let c3 = kappa
        .pow(2)?
        .div(m1)?
        .mul(&t3)
        .mul(&Expr::var_of(&primed[3]))
        .mul_rat(1, 12)
        .mul_hbar_pow(2);
    Ok(DiffOp::from_terms(
        frame,
        [
            (alloc::vec![1, 2, 0, 0], c1),
            (alloc::vec![0, 2, 1, 0], c2),
            (alloc::vec![0, 3, 0, 0], c3),
        ],
    ))
}

/// The ordering rule induced by a gauge map: pulls the symbol back through
/// S⁻¹ and normal-orders the result, so that the returned operator
/// represents left star multiplication by `a` in the transformed algebra.
pub fn s_order(iso: &GaugeIso, a: &Expr) -> Result<OperatorPoly, AlgError> {
    let t = iso.transformation();
    let n = t.n();
    let sa = iso.apply_inverse(a)?;
    let mut op = weyl_order(&sa.to_expr(), &t.primed()[..n], &t.primed()[n..])?;
    op.trunc = opt_min(op.trunc, sa.truncation());
    Ok(op)
}

/// Carries an observable through a canonical transformation: returns the
/// pulled-back symbol A' = A ∘ T together with its normal-ordered operator
/// under the gauge ordering of `iso`.
pub fn transform_observable(
    a: &Expr,
    t: &Transformation,
    iso: &GaugeIso,
) -> Result<(Expr, OperatorPoly), AlgError> {
    if iso.transformation().primed() != t.primed() {
        return Err(AlgError::FrameMismatch);
    }
    let map = subst_map(t.unprimed(), t.forward());
    let a_prime = a.substitute(&map)?;
    let op = s_order(iso, &a_prime)?;
    Ok((a_prime, op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantrans::{build_transformation, quantum_flow, GeneratingFunction};
    use crate::expr::{i_hbar_rat, sqrtabs_of};

    fn vars1() -> (Var, Var) {
        let (_, primed) = standard_vars(1);
        (primed[0].clone(), primed[1].clone())
    }

    fn cubic_shear() -> Transformation {
        let u = Expr::var_of(&phi_arg());
        build_transformation(&GeneratingFunction::F1 {
            phi1: u.clone(),
            phi2: u.pow(3).unwrap(),
            phi1_inverse: Some(u),
        })
        .unwrap()
    }

    fn sqrt_point_map() -> Transformation {
        let u = Expr::var_of(&phi_arg());
        let phi1 = &sgn_of(&u) * &sqrtabs_of(&int_mul(2, &u));
        let inv = sgn_of(&u).mul(&u.pow(2).unwrap()).mul_rat(1, 2);
        build_transformation(&GeneratingFunction::F4 {
            phi1,
            phi2: Expr::zero(),
            phi1_inverse: Some(inv),
        })
        .unwrap()
    }

    #[test]
    fn anbn_golden_values() {
        let (a, b) = anbn_constants(4);
        let want_a = [rat(1, 2), rat(1, 4), rat(1, 4), rat(7, 24)];
        let want_b = [rat(1, 2), rat(3, 4), rat(5, 4), rat(49, 24)];
        assert_eq!(a, want_a);
        assert_eq!(b, want_b);
        let (a8, b8) = anbn_constants(8);
        assert_eq!(a8.len(), 8);
        assert_eq!(b8.len(), 8);
        assert_eq!(a8[..4], want_a);
        assert_eq!(b8[..4], want_b);
    }

    #[test]
    fn weyl_order_of_xp_splits_symmetrically() {
        let x = Var::new("x");
        let p = Var::new("p");
        let sym = &Expr::var_of(&x) * &Expr::var_of(&p);
        let op = weyl_order(&sym, core::slice::from_ref(&x), core::slice::from_ref(&p)).unwrap();
        assert_eq!(op.terms().len(), 2);
        assert_eq!(op.terms()[&alloc::vec![1]], Expr::var_of(&x));
        assert_eq!(op.terms()[&alloc::vec![0]], i_hbar_rat(-1, 2));
    }

    #[test]
    fn weyl_order_matches_symmetrization() {
        // (1/2^n) Σ_k C(n,k) q̂^k p̂^m q̂^{n-k} is the Weyl operator of x^n p^m.
        let x = Var::new("x");
        let p = Var::new("p");
        let xs = alloc::vec![x.clone()];
        let ps = alloc::vec![p.clone()];
        for n in 0..=3u16 {
            for m in 0..=3u16 {
                let sym = Expr::var_of(&x)
                    .pow(n as i64)
                    .unwrap()
                    .mul(&Expr::var_of(&p).pow(m as i64).unwrap());
                let direct = weyl_order(&sym, &xs, &ps).unwrap();
                let phat = OperatorPoly::term(
                    xs.clone(),
                    ps.clone(),
                    Expr::one(),
                    alloc::vec![m],
                )
                .unwrap();
                let mut sum = OperatorPoly::zero(xs.clone(), ps.clone());
                for k in 0..=n {
                    let qk = OperatorPoly::term(
                        xs.clone(),
                        ps.clone(),
                        Expr::var_of(&x).pow(k as i64).unwrap(),
                        alloc::vec![0],
                    )
                    .unwrap();
                    let qrest = OperatorPoly::term(
                        xs.clone(),
                        ps.clone(),
                        Expr::var_of(&x).pow((n - k) as i64).unwrap(),
                        alloc::vec![0],
                    )
                    .unwrap();
                    sum = sum.add(
                        &qk.mul(&phat)
                            .mul(&qrest)
                            .scale_rat(&binomial_rat(n as u64, k as u64)),
                    );
                }
                debug_assert!(n < 16);
                let averaged = sum.scale_rat(&rat(1, 1i64 << n));
                assert_eq!(direct, averaged, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn operator_product_keeps_canonical_commutator() {
        let (x, p) = (Var::new("x"), Var::new("p"));
        let xs = alloc::vec![x.clone()];
        let ps = alloc::vec![p.clone()];
        let qhat =
            OperatorPoly::term(xs.clone(), ps.clone(), Expr::var_of(&x), alloc::vec![0]).unwrap();
        let phat =
            OperatorPoly::term(xs.clone(), ps.clone(), Expr::one(), alloc::vec![1]).unwrap();
        let comm = qhat.mul(&phat).sub(&phat.mul(&qhat));
        let want =
            OperatorPoly::term(xs, ps, i_hbar_rat(1, 1), alloc::vec![0]).unwrap();
        assert_eq!(comm, want);
    }

    #[test]
    fn position_representation_realizes_momentum() {
        let (x, p) = (Var::new("x"), Var::new("p"));
        let sym = Expr::var_of(&p).pow(2).unwrap();
        let op = weyl_order(&sym, core::slice::from_ref(&x), core::slice::from_ref(&p)).unwrap();
        let rep = op.position_rep();
        let frame: Arc<[Var]> = alloc::vec![x].into();
        let want = DiffOp::from_terms(
            frame,
            [(alloc::vec![2], Expr::from_int(-1).mul_hbar_pow(2))],
        );
        assert_eq!(rep, want);
    }

    #[test]
    fn weyl_operator_agrees_with_left_star_multiplication() {
        // Realizing the Weyl operator of A in the Moyal coordinate
        // operators must reproduce left star multiplication by A.
        let moyal = StarProduct::moyal(1);
        let (qs, ps) = moyal.coordinate_ops(12).unwrap();
        let xs = moyal.xs().to_vec();
        let pvars = moyal.ps().to_vec();
        for n in 0..=4u16 {
            for m in 0..=(4 - n) {
                let sym = Expr::var_of(&xs[0])
                    .pow(n as i64)
                    .unwrap()
                    .mul(&Expr::var_of(&pvars[0]).pow(m as i64).unwrap());
                let weyl = weyl_order(&sym, &xs, &pvars).unwrap();
                let realized = weyl.realize(&qs, &ps).unwrap();
                let left = moyal.left_mult_operator(&sym, 12).unwrap();
                assert!(
                    realized.sub(&left).is_zero(),
                    "x^{n} p^{m}: {realized} vs {left}"
                );
            }
        }
    }

    #[test]
    fn identity_gauge_for_linear_transformation() {
        let t = build_transformation(&GeneratingFunction::Linear {
            a: Expr::from_int(2),
            b: Expr::one(),
            c: Expr::one(),
            d: Expr::one(),
        })
        .unwrap();
        let iso = GaugeIso::identity(&t);
        let report = verify_gauge(&iso, 4);
        assert!(report.all_pass(), "{report}");
    }

    #[test]
    fn cubic_shear_gauge_verifies() {
        let t = cubic_shear();
        let u = Expr::var_of(&phi_arg());
        let gen = shear_gauge_generator(&u.pow(3).unwrap(), 6).unwrap();
        // φ = u³ has a single surviving term (ℏ²/4) ∂_p'³ and the
        // generator is exact.
        let (xp, pp) = vars1();
        let frame: Arc<[Var]> = alloc::vec![xp, pp].into();
        let want = DiffOp::from_terms(
            frame,
            [(alloc::vec![0u16, 3], Expr::from_rat(1, 4).mul_hbar_pow(2))],
        );
        assert_eq!(gen, want);
        assert!(gen.is_exact());
        let iso = GaugeIso::from_exponent(&t, &gen, 4).unwrap();
        let report = verify_gauge(&iso, 4);
        assert!(report.all_pass(), "{report}");
    }

    #[test]
    fn wrong_generator_is_flagged() {
        let t = cubic_shear();
        let u = Expr::var_of(&phi_arg());
        let gen = shear_gauge_generator(&u.pow(3).unwrap(), 6).unwrap().neg();
        let iso = GaugeIso::from_exponent(&t, &gen, 4).unwrap();
        let report = verify_gauge(&iso, 4);
        assert!(!report.conjugation);
        assert!(!report.homomorphism);
        // A pure momentum-derivative exponent still fixes both coordinates.
        assert!(report.fixed_points);
    }

    #[test]
    fn solve_gauge_recovers_cubic_shear_map() {
        let t = cubic_shear();
        let solved = solve_gauge(&t, 4).unwrap();
        let u = Expr::var_of(&phi_arg());
        let gen = shear_gauge_generator(&u.pow(3).unwrap(), 4).unwrap();
        let iso = GaugeIso::from_exponent(&t, &gen, 4).unwrap();
        let diff = solved.s().sub(iso.s());
        assert!(op_vanishes_through(&diff, 4), "difference {diff}");
        assert!(verify_gauge(&solved, 4).all_pass());
    }

    #[test]
    fn solve_gauge_point_map_low_order() {
        // For a point transformation built from an abstract monotone φ the
        // first correction is
        //   S_2 = (1/24)(φ')⁻² [ (3φ''² - φ'φ''') p' ∂_p'³
        //                        + 3φ''φ' ∂_x'∂_p'² + 3φ''² ∂_p'² ].
        let u = Expr::var_of(&phi_arg());
        let phi = crate::expr::func_of(&crate::expr::FuncSym::Named("phi".into()), 0, &u);
        let psi = crate::expr::func_of(&crate::expr::FuncSym::Named("psi".into()), 0, &u);
        let t = build_transformation(&GeneratingFunction::F4 {
            phi1: phi.clone(),
            phi2: Expr::zero(),
            phi1_inverse: Some(psi),
        })
        .unwrap();
        let solved = solve_gauge(&t, 2).unwrap();
        let (xp, pp) = vars1();
        let x = Expr::var_of(&xp);
        let d1 = phi.differentiate(&phi_arg());
        let mut at_x = BTreeMap::new();
        at_x.insert(phi_arg(), x.clone());
        let d1 = d1.substitute(&at_x).unwrap();
        let d2 = {
            let d = phi.differentiate(&phi_arg()).differentiate(&phi_arg());
            d.substitute(&at_x).unwrap()
        };
        let d3 = {
            let d = phi
                .differentiate(&phi_arg())
                .differentiate(&phi_arg())
                .differentiate(&phi_arg());
            d.substitute(&at_x).unwrap()
        };
        let inv2 = d1.pow(-2).unwrap();
        let pvar = Expr::var_of(&pp);
        let c_ppp = inv2
            .mul(&(&d2.pow(2).unwrap().mul_rat(3, 1) - &d1.mul(&d3)))
            .mul(&pvar)
            .mul_rat(1, 24);
        let c_xpp = inv2.mul(&d2).mul(&d1).mul_rat(3, 24);
        let c_pp = inv2.mul(&d2.pow(2).unwrap()).mul_rat(3, 24);
        let frame: Arc<[Var]> = alloc::vec![xp, pp].into();
        let want = DiffOp::from_terms(
            frame,
            [
                (alloc::vec![0u16, 3], c_ppp),
                (alloc::vec![1, 2], c_xpp),
                (alloc::vec![0, 2], c_pp),
            ],
        );
        let got = solved.s().hbar_layer(2).unwrap();
        assert!(got.sub(&want).is_zero(), "layer {got}");
    }

    #[test]
    fn solve_gauge_rejects_noncanonical_scaling() {
        let (unp, pri) = standard_vars(1);
        let t = Transformation::new(
            1,
            pri.clone(),
            unp,
            alloc::vec![Expr::var_of(&pri[0]).mul_rat(2, 1), Expr::var_of(&pri[1])],
            None,
            "scale",
        )
        .unwrap();
        match solve_gauge(&t, 2) {
            Err(AlgError::GaugeInconsistent { order, .. }) => assert_eq!(order, 1),
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_point_map_gauge_verifies_at_low_order() {
        let t = sqrt_point_map();
        let gen = sqrt_gauge_generator(1).unwrap();
        let iso = GaugeIso::from_exponent(&t, &gen, 2).unwrap();
        let report = verify_gauge(&iso, 2);
        assert!(report.all_pass(), "{report}");
    }

    #[test]
    fn anharmonic_chain_gauge_verifies() {
        let (unp, pri) = standard_vars(2);
        let m1 = Expr::var("m1");
        let m2 = Expr::var("m2");
        let kc = Expr::var("k");
        let tvar = Var::new("t");
        let h = Expr::var_of(&unp[2])
            .pow(2)
            .unwrap()
            .mul(&m1.pow(-1).unwrap())
            .mul_rat(1, 2)
            .add(
                &Expr::var_of(&unp[3])
                    .pow(2)
                    .unwrap()
                    .mul(&m2.pow(-1).unwrap())
                    .mul_rat(1, 2),
            )
            .add(&kc.mul(&Expr::var_of(&unp[0])).mul(&Expr::var_of(&unp[3]).pow(2).unwrap()));
        let t = quantum_flow(&h, &unp, &pri, &tvar).unwrap();
        let gen = anharmonic_gauge_generator(&kc, &m1, &Expr::var_of(&tvar)).unwrap();
        let iso = GaugeIso::from_exponent(&t, &gen, 2).unwrap();
        let report = verify_gauge(&iso, 2);
        assert!(report.all_pass(), "{report}");
    }

    #[test]
    fn gauge_map_commutes_with_conjugation() {
        let t = cubic_shear();
        let solved = solve_gauge(&t, 4).unwrap();
        let mut state: u64 = 7;
        for _ in 0..4 {
            let f = sample_poly(&mut state, t.primed());
            let sf = solved.apply(&f).unwrap();
            let sconj = solved.apply(&conjugate_expr(&f)).unwrap();
            for (g, c) in sf.known_coeffs() {
                let other = sconj.coeff(g).unwrap();
                assert_eq!(conjugate_expr(c), other);
            }
        }
    }

    #[test]
    fn transform_observable_through_linear_map() {
        let (b, d) = (Expr::one(), Expr::from_int(1));
        let t = build_transformation(&GeneratingFunction::Linear {
            a: Expr::from_int(2),
            b: b.clone(),
            c: Expr::one(),
            d: d.clone(),
        })
        .unwrap();
        let iso = GaugeIso::identity(&t);
        let (unp, pri) = standard_vars(1);
        let a_sym = Expr::var_of(&unp[0]);
        let (a_prime, op) = transform_observable(&a_sym, &t, &iso).unwrap();
        let want_sym = &Expr::var_of(&pri[0]).mul(&d) - &Expr::var_of(&pri[1]).mul(&b);
        assert_eq!(a_prime, want_sym);
        assert_eq!(op.terms()[&alloc::vec![0]], Expr::var_of(&pri[0]).mul(&d));
        assert_eq!(op.terms()[&alloc::vec![1]], b.neg());
    }

    #[test]
    fn oscillator_through_sqrt_map_orders_to_golden_form() {
        // H = p²/2 + ω²x²/2 pulled through the square-root point map gives
        // |x'|p'² + ω²|x'|; the gauge ordering adds the quantum potential
        // (ℏ²/16)|x'|⁻¹ and normal ordering produces the sign term.
        let t = sqrt_point_map();
        let gen = sqrt_gauge_generator(1).unwrap();
        let iso = GaugeIso::from_exponent(&t, &gen, 2).unwrap();
        let (unp, pri) = standard_vars(1);
        let w = Expr::var("w");
        let h = Expr::var_of(&unp[1])
            .pow(2)
            .unwrap()
            .mul_rat(1, 2)
            .add(&w.pow(2).unwrap().mul(&Expr::var_of(&unp[0]).pow(2).unwrap()).mul_rat(1, 2));
        let (h_prime, op) = transform_observable(&h, &t, &iso).unwrap();
        let xp = Expr::var_of(&pri[0]);
        let ppv = Expr::var_of(&pri[1]);
        let want_sym = &abs_of(&xp).mul(&ppv.pow(2).unwrap()) + &w.pow(2).unwrap().mul(&abs_of(&xp));
        assert_eq!(h_prime, want_sym);
        assert_eq!(op.terms()[&alloc::vec![2]], abs_of(&xp));
        assert_eq!(
            op.terms()[&alloc::vec![1]],
            sgn_of(&xp).mul(&i_hbar_rat(-1, 1))
        );
        let want_zero = w
            .pow(2)
            .unwrap()
            .mul(&abs_of(&xp))
            .add(&abs_of(&xp).pow(-1).unwrap().mul_rat(1, 16).mul_hbar_pow(2));
        assert_eq!(op.terms()[&alloc::vec![0]], want_zero);

        // The same operator in symmetric form: ½(|q̂|p̂² + p̂²|q̂|) + ω²|q̂|
        // + (ℏ²/16)|q̂|⁻¹.
        let xs = pri[..1].to_vec();
        let ps = pri[1..].to_vec();
        let absq =
            OperatorPoly::term(xs.clone(), ps.clone(), abs_of(&xp), alloc::vec![0]).unwrap();
        let p2 = OperatorPoly::term(xs.clone(), ps.clone(), Expr::one(), alloc::vec![2]).unwrap();
        let sym_form = absq
            .mul(&p2)
            .add(&p2.mul(&absq))
            .scale_rat(&rat(1, 2))
            .add(&OperatorPoly::term(xs, ps, want_zero, alloc::vec![0]).unwrap());
        assert_eq!(op.terms(), sym_form.terms());
    }

    #[test]
    fn weyl_order_rejects_momentum_in_atoms() {
        let (x, p) = (Var::new("x"), Var::new("p"));
        let bad = abs_of(&Expr::var_of(&p));
        assert!(matches!(
            weyl_order(&bad, core::slice::from_ref(&x), core::slice::from_ref(&p)),
            Err(AlgError::Unsupported(_))
        ));
        let neg = Expr::var_of(&p).pow(-1).unwrap();
        assert!(matches!(
            weyl_order(&neg, &[x], &[p]),
            Err(AlgError::Unsupported(_))
        ));
    }
}

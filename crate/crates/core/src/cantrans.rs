//! Canonical transformations and the star products they induce.
//!
//! A transformation is stored as the substitution rule old = T(new): each
//! original phase-space coordinate written as a function of the new ones,
//! together with the inverse map when a closed form exists. Pushing the
//! flat derivations `∂` through T with the inverse Jacobian produces the
//! derivations `D` of the transformed star product, which is the Moyal
//! formula with `∂` replaced by `D`. Coordinate transformations therefore
//! act on the quantum algebra without touching its (x, p)-dependence: the
//! whole deformation moves into the derivations.
//!
//! Transformations come from four one-dimensional generating-function
//! shapes, their 2N-dimensional type-1 analogue, linear symplectic maps,
//! explicit component lists, and exact quantum Hamiltonian flows. The flow
//! map at time t is itself a canonical transformation, recovered here in
//! closed form for nilpotent bracket chains and for quadratic oscillator
//! Hamiltonians.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffop::DiffOp;
use crate::error::AlgError;
use crate::expr::{
    monomials_up_to, rename_vars, subst_map, trig_reduce, EvalEnv, Expr, FuncSym, Var,
};
use crate::starprod::StarProduct;

/// Formal argument of generating-function data: `phi1`, `phi2` and
/// `phi1_inverse` are expressions in `u` (or `u1`, `u2`, ... for the
/// 2N-dimensional type-1 shape).
pub fn phi_arg() -> Var {
    Var::new("u")
}

/// Formal argument list for N-component generating data.
pub fn phi_args(n: usize) -> Vec<Var> {
    if n == 1 {
        vec![phi_arg()]
    } else {
        (1..=n).map(|i| Var::new(&format!("u{i}"))).collect()
    }
}

/// Standard coordinate names: `(unprimed, primed)`, each laid out as all
/// positions followed by all momenta.
pub fn standard_vars(n: usize) -> (Vec<Var>, Vec<Var>) {
    if n == 1 {
        (
            vec![Var::new("x"), Var::new("p")],
            vec![Var::new("xp"), Var::new("pp")],
        )
    } else {
        let mut unprimed = Vec::with_capacity(2 * n);
        let mut primed = Vec::with_capacity(2 * n);
        for i in 1..=n {
            unprimed.push(Var::new(&format!("x{i}")));
            primed.push(Var::new(&format!("xp{i}")));
        }
        for i in 1..=n {
            unprimed.push(Var::new(&format!("p{i}")));
            primed.push(Var::new(&format!("pp{i}")));
        }
        (unprimed, primed)
    }
}

/// A canonical coordinate change on 2N-dimensional phase space.
///
/// `forward` expresses the old coordinates through the new (primed) ones;
/// any further symbols appearing in the components are treated as constant
/// parameters. `inverse`, when present, expresses the new coordinates
/// through the old.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformation {
    n: usize,
    primed: Vec<Var>,
    unprimed: Vec<Var>,
    forward: Vec<Expr>,
    inverse: Option<Vec<Expr>>,
    label: String,
    singular_locus: Option<String>,
}

/// Outcome of the inverse round-trip check.
#[derive(Clone, Debug, PartialEq)]
pub enum InverseCheck {
    /// forward ∘ inverse normalized to the identity symbolically.
    ExactSymbolic,
    /// Checked at 100 deterministic sample points; the worst deviation.
    Numeric { max_abs_error: f64 },
    /// Not checkable (no inverse stored, or components not evaluable).
    Skipped { reason: String },
}

impl InverseCheck {
    pub fn passes(&self, tol: f64) -> bool {
        match self {
            InverseCheck::ExactSymbolic => true,
            InverseCheck::Numeric { max_abs_error } => *max_abs_error <= tol,
            InverseCheck::Skipped { .. } => false,
        }
    }
}

impl Transformation {
    pub fn new(
        n: usize,
        primed: Vec<Var>,
        unprimed: Vec<Var>,
        forward: Vec<Expr>,
        inverse: Option<Vec<Expr>>,
        label: &str,
    ) -> Result<Self, AlgError> {
        if n == 0 || primed.len() != 2 * n || unprimed.len() != 2 * n || forward.len() != 2 * n {
            return Err(AlgError::Unsupported(
                "transformation needs 2N coordinates per frame and 2N forward components"
                    .to_string(),
            ));
        }
        if let Some(inv) = &inverse {
            if inv.len() != 2 * n {
                return Err(AlgError::Unsupported(
                    "inverse component list has wrong length".to_string(),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for v in primed.iter().chain(unprimed.iter()) {
            if !seen.insert(v.clone()) {
                return Err(AlgError::FrameMismatch);
            }
        }
        for f in &forward {
            if unprimed.iter().any(|v| f.variables().contains(v)) {
                return Err(AlgError::FrameMismatch);
            }
        }
        if let Some(inv) = &inverse {
            for g in inv {
                if primed.iter().any(|v| g.variables().contains(v)) {
                    return Err(AlgError::FrameMismatch);
                }
            }
        }
        Ok(Self {
            n,
            primed,
            unprimed,
            forward,
            inverse,
            label: label.to_string(),
            singular_locus: None,
        })
    }

    /// Identity map on the standard frames.
    pub fn identity(n: usize) -> Self {
        let (unprimed, primed) = standard_vars(n);
        let forward = primed.iter().map(Expr::var_of).collect();
        let inverse = unprimed.iter().map(Expr::var_of).collect();
        Self::new(n, primed, unprimed, forward, Some(inverse), "id")
            .expect("identity frames are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// New coordinates, positions first.
    pub fn primed(&self) -> &[Var] {
        &self.primed
    }

    /// Old coordinates, positions first.
    pub fn unprimed(&self) -> &[Var] {
        &self.unprimed
    }

    pub fn forward(&self) -> &[Expr] {
        &self.forward
    }

    pub fn inverse(&self) -> Option<&[Expr]> {
        self.inverse.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn singular_locus(&self) -> Option<&str> {
        self.singular_locus.as_deref()
    }

    pub fn with_singular_locus(mut self, locus: &str) -> Self {
        self.singular_locus = Some(locus.to_string());
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// Substitute a parameter (a symbol outside both frames) by an
    /// expression in both component lists.
    pub fn specialize(&self, v: &Var, by: &Expr) -> Result<Self, AlgError> {
        if self.primed.contains(v) || self.unprimed.contains(v) {
            return Err(AlgError::FrameMismatch);
        }
        let forward = self
            .forward
            .iter()
            .map(|f| f.substitute_var(v, by))
            .collect::<Result<Vec<_>, _>>()?;
        let inverse = match &self.inverse {
            None => None,
            Some(inv) => Some(
                inv.iter()
                    .map(|g| g.substitute_var(v, by))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(Self {
            forward,
            inverse,
            ..self.clone()
        })
    }

    /// Function composition `self ∘ other`: `other` is applied first, so
    /// the composite maps `other`'s new coordinates to `self`'s old ones.
    /// `self`'s primed slots are identified with `other`'s unprimed slots
    /// positionally.
    pub fn compose(&self, other: &Self) -> Result<Self, AlgError> {
        if self.n != other.n {
            return Err(AlgError::FrameMismatch);
        }
        let map = subst_map(&self.primed, &other.forward);
        let forward = self
            .forward
            .iter()
            .map(|f| f.substitute(&map))
            .collect::<Result<Vec<_>, _>>()?;
        let inverse = match (&self.inverse, &other.inverse) {
            (Some(a_inv), Some(b_inv)) => {
                let map = subst_map(&other.unprimed, a_inv);
                Some(
                    b_inv
                        .iter()
                        .map(|g| g.substitute(&map))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            _ => None,
        };
        Self::new(
            self.n,
            other.primed.clone(),
            self.unprimed.clone(),
            forward,
            inverse,
            &format!("{}*{}", self.label, other.label),
        )
    }

    /// The inverse transformation on the same frames: coordinate names are
    /// reused, so the forward components of the result are the stored
    /// inverse components renamed into the primed frame.
    pub fn invert(&self) -> Result<Self, AlgError> {
        let inv = self.inverse.as_ref().ok_or_else(|| {
            AlgError::Unsupported(format!("{} has no closed-form inverse", self.label))
        })?;
        let to_primed: Vec<(Var, Var)> = self
            .unprimed
            .iter()
            .cloned()
            .zip(self.primed.iter().cloned())
            .collect();
        let to_unprimed: Vec<(Var, Var)> = self
            .primed
            .iter()
            .cloned()
            .zip(self.unprimed.iter().cloned())
            .collect();
        let forward = inv.iter().map(|g| rename_vars(g, &to_primed)).collect();
        let inverse = Some(
            self.forward
                .iter()
                .map(|f| rename_vars(f, &to_unprimed))
                .collect(),
        );
        let mut out = Self::new(
            self.n,
            self.primed.clone(),
            self.unprimed.clone(),
            forward,
            inverse,
            &format!("inv[{}]", self.label),
        )?;
        out.singular_locus = self.singular_locus.clone();
        Ok(out)
    }

    /// Round-trip check forward ∘ inverse = identity: first symbolically
    /// (up to trigonometric reduction), then numerically at 100
    /// deterministic sample points with generic parameter values.
    pub fn verify_inverse(&self) -> InverseCheck {
        let Some(inv) = &self.inverse else {
            return InverseCheck::Skipped {
                reason: "no closed-form inverse stored".to_string(),
            };
        };
        let map = subst_map(&self.primed, inv);
        let mut symbolic_ok = true;
        for (i, f) in self.forward.iter().enumerate() {
            match f.substitute(&map) {
                Ok(e) if trig_reduce(&e) == Expr::var_of(&self.unprimed[i]) => {}
                _ => {
                    symbolic_ok = false;
                    break;
                }
            }
        }
        if symbolic_ok {
            return InverseCheck::ExactSymbolic;
        }

        let mut params = BTreeSet::new();
        for e in self.forward.iter().chain(inv.iter()) {
            params.extend(e.variables());
        }
        for v in self.primed.iter().chain(self.unprimed.iter()) {
            params.remove(v);
        }
        let mut state = 0x1f3a_5c79_u64;
        let mut max_err = 0.0_f64;
        for _ in 0..100 {
            let mut env = EvalEnv::new(0.0);
            for v in &self.unprimed {
                env.set(v, sample_unit(&mut state));
            }
            for v in &params {
                env.set(v, sample_unit(&mut state));
            }
            let mut primed_env = EvalEnv::new(0.0);
            for v in &params {
                primed_env.set(v, env.get(v).expect("bound above"));
            }
            for (j, g) in inv.iter().enumerate() {
                match g.eval_real(&env) {
                    Ok(val) if val.is_finite() => primed_env.set(&self.primed[j], val),
                    Ok(_) | Err(_) => {
                        return InverseCheck::Skipped {
                            reason: "inverse components are not numerically evaluable"
                                .to_string(),
                        }
                    }
                }
            }
            for (i, f) in self.forward.iter().enumerate() {
                let expect = env.get(&self.unprimed[i]).expect("bound above");
                match f.eval_real(&primed_env) {
                    Ok(val) if val.is_finite() => max_err = max_err.max((val - expect).abs()),
                    Ok(_) | Err(_) => {
                        return InverseCheck::Skipped {
                            reason: "forward components are not numerically evaluable"
                                .to_string(),
                        }
                    }
                }
            }
        }
        InverseCheck::Numeric {
            max_abs_error: max_err,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Deterministic sample in [0.3, 1.7]: bounded away from coordinate
// singularities and from zero.
fn sample_unit(state: &mut u64) -> f64 {
    let u = (splitmix64(state) >> 11) as f64 / (1u64 << 53) as f64;
    0.3 + 1.4 * u
}

/// Generating data for a canonical transformation.
///
/// The four classical one-degree-of-freedom shapes are, with `phi2` an
/// additive gauge term:
///
/// - type 1: F = phi1(x') x + phi2(x')
/// - type 2: F = phi1(p') x + phi2(p')   (momentum as the new variable)
/// - type 3: F = phi1(p') p + phi2(p')
/// - type 4: F = phi1(x') p + phi2(x')
///
/// `phi1` must be strictly monotone where sampling can decide it, and its
/// derivative must be invertible in the monomial arithmetic used here.
/// `phi1_inverse`, when supplied, enables the closed-form inverse map.
#[derive(Clone, Debug)]
pub enum GeneratingFunction {
    F1 {
        phi1: Expr,
        phi2: Expr,
        phi1_inverse: Option<Expr>,
    },
    F2 {
        phi1: Expr,
        phi2: Expr,
        phi1_inverse: Option<Expr>,
    },
    F3 {
        phi1: Expr,
        phi2: Expr,
        phi1_inverse: Option<Expr>,
    },
    F4 {
        phi1: Expr,
        phi2: Expr,
        phi1_inverse: Option<Expr>,
    },
    /// x = d x' - b p', p = -c x' + a p' with a d - b c = 1.
    Linear { a: Expr, b: Expr, c: Expr, d: Expr },
    /// x = -p', p = x'.
    Interchange,
    /// Components given directly on the standard frames.
    Explicit {
        n: usize,
        forward: Vec<Expr>,
        inverse: Option<Vec<Expr>>,
        label: String,
    },
    /// 2N-dimensional type 1: F = sum_j phi1_j(x') x_j + phi2(x').
    F1Vec {
        phi1: Vec<Expr>,
        phi2: Expr,
        phi1_inverse: Option<Vec<Expr>>,
    },
}

/// Strict-monotonicity probe for a scalar `phi1` in the formal argument:
/// the derivative is sampled at 1000 points of [-5, 5] and must keep a
/// uniform sign. `None` when the data is not numerically decidable
/// (foreign parameters, abstract function symbols).
fn phi1_monotone_sample(phi1: &Expr, u: &Var) -> Option<bool> {
    let vars = phi1.variables();
    if vars.iter().any(|v| v != u) {
        return None;
    }
    let d = phi1.differentiate(u);
    let mut pos = false;
    let mut neg = false;
    let mut valid = 0u32;
    for k in 0..1000 {
        let t = -5.0 + 10.0 * ((k as f64 + 0.5) / 1000.0);
        let mut env = EvalEnv::new(0.0);
        env.set(u, t);
        if let Ok(v) = d.eval_real(&env) {
            if v.is_finite() {
                valid += 1;
                if v > 1e-12 {
                    pos = true;
                } else if v < -1e-12 {
                    neg = true;
                }
            }
        }
    }
    if valid < 100 {
        return None;
    }
    Some((pos || neg) && !(pos && neg))
}

type PhiAt = alloc::boxed::Box<dyn Fn(&Var) -> Result<Expr, AlgError>>;

struct PhiData {
    of: PhiAt,
}

fn phi_closures(phi: &Expr, u: &Var) -> PhiData {
    let phi = phi.clone();
    let u = u.clone();
    PhiData {
        of: alloc::boxed::Box::new(move |v: &Var| phi.substitute_var(&u, &Expr::var_of(v))),
    }
}

/// Builds the transformation generated by `g` on the standard frames.
///
/// Errors when `phi1` fails the monotonicity probe, when its derivative is
/// not invertible as a monomial, or when a linear block has determinant
/// different from 1.
pub fn build_transformation(g: &GeneratingFunction) -> Result<Transformation, AlgError> {
    let u = phi_arg();
    let (unprimed, primed) = standard_vars(1);
    let (x, p) = (unprimed[0].clone(), unprimed[1].clone());
    let (xp, pp) = (primed[0].clone(), primed[1].clone());

    let scalar_parts = |phi1: &Expr,
                        phi2: &Expr|
     -> Result<(PhiData, PhiData, PhiData), AlgError> {
        if phi1.differentiate(&u).is_zero() {
            return Err(AlgError::Unsupported(
                "phi1 must depend on its argument".to_string(),
            ));
        }
        if phi1_monotone_sample(phi1, &u) == Some(false) {
            return Err(AlgError::Unsupported(
                "phi1 is not strictly monotone on the sampled window".to_string(),
            ));
        }
        Ok((
            phi_closures(phi1, &u),
            phi_closures(&phi1.differentiate(&u), &u),
            phi_closures(&phi2.differentiate(&u), &u),
        ))
    };

    match g {
        GeneratingFunction::F1 {
            phi1,
            phi2,
            phi1_inverse,
        } => {
            let (f1, d1, d2) = scalar_parts(phi1, phi2)?;
            // x = -(phi1')^{-1}(x') (p' + phi2'(x')), p = phi1(x')
            let inv_d1 = (d1.of)(&xp)?.pow(-1)?;
            let fwd_x = inv_d1
                .mul(&(&Expr::var_of(&pp) + &(d2.of)(&xp)?))
                .neg();
            let fwd_p = (f1.of)(&xp)?;
            let inverse = match phi1_inverse {
                None => None,
                Some(psi) => {
                    // x' = psi(p); p' = -phi1'(x') x - phi2'(x') at x' = psi(p)
                    let inv_x = psi.substitute_var(&u, &Expr::var_of(&p))?;
                    let mixed = (d1.of)(&u)?
                        .mul(&Expr::var_of(&x))
                        .neg()
                        .sub(&(d2.of)(&u)?);
                    Some(vec![inv_x.clone(), mixed.substitute_var(&u, &inv_x)?])
                }
            };
            Transformation::new(1, primed, unprimed, vec![fwd_x, fwd_p], inverse, "T1")
        }
        GeneratingFunction::F2 {
            phi1,
            phi2,
            phi1_inverse,
        } => {
            let (f1, d1, d2) = scalar_parts(phi1, phi2)?;
            // x = phi1(p'), p = -(phi1')^{-1}(p') (x' + phi2'(p'))
            let inv_d1 = (d1.of)(&pp)?.pow(-1)?;
            let fwd_x = (f1.of)(&pp)?;
            let fwd_p = inv_d1
                .mul(&(&Expr::var_of(&xp) + &(d2.of)(&pp)?))
                .neg();
            let inverse = match phi1_inverse {
                None => None,
                Some(psi) => {
                    // p' = psi(x); x' = -phi1'(p') p - phi2'(p') at p' = psi(x)
                    let inv_p = psi.substitute_var(&u, &Expr::var_of(&x))?;
                    let mixed = (d1.of)(&u)?
                        .mul(&Expr::var_of(&p))
                        .neg()
                        .sub(&(d2.of)(&u)?);
                    Some(vec![mixed.substitute_var(&u, &inv_p)?, inv_p])
                }
            };
            Transformation::new(1, primed, unprimed, vec![fwd_x, fwd_p], inverse, "T2")
        }
        GeneratingFunction::F3 {
            phi1,
            phi2,
            phi1_inverse,
        } => {
            let (f1, d1, d2) = scalar_parts(phi1, phi2)?;
            // x = (phi1')^{-1}(p') (x' - phi2'(p')), p = phi1(p')
            let inv_d1 = (d1.of)(&pp)?.pow(-1)?;
            let fwd_x = inv_d1.mul(&(&Expr::var_of(&xp) - &(d2.of)(&pp)?));
            let fwd_p = (f1.of)(&pp)?;
            let inverse = match phi1_inverse {
                None => None,
                Some(psi) => {
                    // p' = psi(p); x' = x phi1'(p') + phi2'(p') at p' = psi(p)
                    let inv_p = psi.substitute_var(&u, &Expr::var_of(&p))?;
                    let mixed = (d1.of)(&u)?.mul(&Expr::var_of(&x)).add(&(d2.of)(&u)?);
                    Some(vec![mixed.substitute_var(&u, &inv_p)?, inv_p])
                }
            };
            Transformation::new(1, primed, unprimed, vec![fwd_x, fwd_p], inverse, "T3")
        }
        GeneratingFunction::F4 {
            phi1,
            phi2,
            phi1_inverse,
        } => {
            let (f1, d1, d2) = scalar_parts(phi1, phi2)?;
            // x = phi1(x'), p = (phi1')^{-1}(x') (p' - phi2'(x'))
            let inv_d1 = (d1.of)(&xp)?.pow(-1)?;
            let fwd_x = (f1.of)(&xp)?;
            let fwd_p = inv_d1.mul(&(&Expr::var_of(&pp) - &(d2.of)(&xp)?));
            let inverse = match phi1_inverse {
                None => None,
                Some(psi) => {
                    // x' = psi(x); p' = p phi1'(x') + phi2'(x') at x' = psi(x)
                    let inv_x = psi.substitute_var(&u, &Expr::var_of(&x))?;
                    let mixed = (d1.of)(&u)?.mul(&Expr::var_of(&p)).add(&(d2.of)(&u)?);
                    Some(vec![inv_x.clone(), mixed.substitute_var(&u, &inv_x)?])
                }
            };
            Transformation::new(1, primed, unprimed, vec![fwd_x, fwd_p], inverse, "T4")
        }
        GeneratingFunction::Linear { a, b, c, d } => {
            let det = &a.mul(d) - &b.mul(c);
            if !trig_reduce(&det).is_one() {
                return Err(AlgError::Unsupported(
                    "linear block needs a d - b c = 1 exactly".to_string(),
                ));
            }
            let fwd_x = &d.mul(&Expr::var_of(&xp)) - &b.mul(&Expr::var_of(&pp));
            let fwd_p = &a.mul(&Expr::var_of(&pp)) - &c.mul(&Expr::var_of(&xp));
            let inv_x = &a.mul(&Expr::var_of(&x)) + &b.mul(&Expr::var_of(&p));
            let inv_p = &c.mul(&Expr::var_of(&x)) + &d.mul(&Expr::var_of(&p));
            Transformation::new(
                1,
                primed,
                unprimed,
                vec![fwd_x, fwd_p],
                Some(vec![inv_x, inv_p]),
                "linear",
            )
        }
        GeneratingFunction::Interchange => build_transformation(&GeneratingFunction::Linear {
            a: Expr::zero(),
            b: Expr::one(),
            c: Expr::from_int(-1),
            d: Expr::zero(),
        })
        .map(|t| t.with_label("interchange")),
        GeneratingFunction::Explicit {
            n,
            forward,
            inverse,
            label,
        } => {
            let (unprimed, primed) = standard_vars(*n);
            Transformation::new(*n, primed, unprimed, forward.clone(), inverse.clone(), label)
        }
        GeneratingFunction::F1Vec {
            phi1,
            phi2,
            phi1_inverse,
        } => build_f1_vector(phi1, phi2, phi1_inverse.as_deref()),
    }
}

// 2N-dimensional type-1 map: p_j = phi1_j(x'), and the positions solve
// p'_i = -sum_j (d phi1_j / d x'_i) x_j - d phi2 / d x'_i, giving
// x_j = -sum_i (J^{-1})_{ij} (p'_i + d phi2/d x'_i) with J_{ij} = d_j phi1_i.
fn build_f1_vector(
    phi1: &[Expr],
    phi2: &Expr,
    phi1_inverse: Option<&[Expr]>,
) -> Result<Transformation, AlgError> {
    let n = phi1.len();
    if n == 0 || n > 2 {
        return Err(AlgError::Unsupported(
            "vector type-1 data supports N = 1 or N = 2".to_string(),
        ));
    }
    let args = phi_args(n);
    let (unprimed, primed) = standard_vars(n);
    let xp = &primed[..n];
    let ppv = &primed[n..];
    let xv = &unprimed[..n];
    let pv = &unprimed[n..];

    let to_primed = |e: &Expr| -> Result<Expr, AlgError> {
        let exprs: Vec<Expr> = xp.iter().map(Expr::var_of).collect();
        e.substitute(&subst_map(&args, &exprs))
    };

    let jac: Vec<Vec<Expr>> = phi1
        .iter()
        .map(|f| args.iter().map(|a| f.differentiate(a)).collect())
        .collect();
    let det = trig_reduce(&mat_det(&jac));
    if det.is_zero() {
        return Err(AlgError::SingularJacobian(
            "phi1 has a singular Jacobian".to_string(),
        ));
    }
    let det_inv = det.pow(-1).map_err(|_| {
        AlgError::SingularJacobian(format!("phi1 Jacobian determinant {det} is not a monomial"))
    })?;
    let adj = mat_adjugate(&jac);

    let mut forward = vec![Expr::zero(); 2 * n];
    for j in 0..n {
        let mut acc = Expr::zero();
        for i in 0..n {
            let jinv_ij = adj[i][j].mul(&det_inv);
            let rhs = &Expr::var_of(&ppv[i]) + &phi2.differentiate(&args[i]);
            acc = acc.add(&jinv_ij.mul(&rhs));
        }
        forward[j] = to_primed(&acc.neg())?;
    }
    for j in 0..n {
        forward[n + j] = to_primed(&phi1[j])?;
    }

    let inverse = match phi1_inverse {
        None => None,
        Some(psi) => {
            if psi.len() != n {
                return Err(AlgError::Unsupported(
                    "phi1_inverse needs one component per degree of freedom".to_string(),
                ));
            }
            // x'_k = psi_k(p); p'_i = -sum_j (d_i phi1_j) x_j - d_i phi2
            let psi_of_p: Vec<Expr> = psi
                .iter()
                .map(|f| {
                    let exprs: Vec<Expr> = pv.iter().map(Expr::var_of).collect();
                    f.substitute(&subst_map(&args, &exprs))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let back = subst_map(&args, &psi_of_p);
            let mut inv = psi_of_p.clone();
            for arg in args.iter().take(n) {
                let mut acc = phi2.differentiate(arg).neg();
                for j in 0..n {
                    acc = acc.sub(&phi1[j].differentiate(arg).mul(&Expr::var_of(&xv[j])));
                }
                inv.push(acc.substitute(&back)?);
            }
            Some(inv)
        }
    };
    Transformation::new(n, primed, unprimed, forward, inverse, "T1[2N]")
}

/// Jacobian of the forward map: `J[i][j] = d forward_i / d primed_j`.
pub fn jacobian(t: &Transformation) -> Vec<Vec<Expr>> {
    t.forward()
        .iter()
        .map(|f| t.primed().iter().map(|v| f.differentiate(v)).collect())
        .collect()
}

/// Pushforward of the flat derivations through `t`: the derivations
/// `D_i = sum_j (J^{-1})_{ji} ∂_{primed_j}` satisfying `D_i (f ∘ T) =
/// (∂_i f) ∘ T`. Returned split into position and momentum lists.
///
/// The Jacobian determinant must normalize to an invertible monomial;
/// otherwise the map is reported singular.
pub fn pushforward_derivations(
    t: &Transformation,
) -> Result<(Vec<DiffOp>, Vec<DiffOp>), AlgError> {
    let dim = 2 * t.n();
    let frame: Arc<[Var]> = t.primed().to_vec().into();
    let jac = jacobian(t);
    let det = trig_reduce(&mat_det(&jac));
    if det.is_zero() {
        return Err(AlgError::SingularJacobian(format!(
            "{} has identically singular Jacobian",
            t.label()
        )));
    }
    let det_inv = if det.is_one() {
        Expr::one()
    } else {
        det.pow(-1).map_err(|_| {
            AlgError::SingularJacobian(format!(
                "Jacobian determinant {det} is not an invertible monomial"
            ))
        })?
    };
    let adj = mat_adjugate(&jac);
    let mut ops = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut terms = Vec::new();
        for (j, row) in adj.iter().enumerate() {
            let coef = trig_reduce(&row[i].mul(&det_inv));
            if coef.is_zero() {
                continue;
            }
            let mut idx = vec![0u16; dim];
            idx[j] = 1;
            terms.push((idx, coef));
        }
        ops.push(DiffOp::from_terms(frame.clone(), terms));
    }
    let dp = ops.split_off(t.n());
    Ok((ops, dp))
}

/// Checks the defining property of pushforward derivations on all
/// monomials of total degree at most 3, plus pairwise commutativity.
pub fn validate_derivations(
    t: &Transformation,
    dx: &[DiffOp],
    dp: &[DiffOp],
) -> Result<(), AlgError> {
    let fwd = subst_map(t.unprimed(), t.forward());
    let all: Vec<&DiffOp> = dx.iter().chain(dp.iter()).collect();
    for f in monomials_up_to(t.unprimed(), 3) {
        let ft = f.substitute(&fwd)?;
        for (i, d) in all.iter().enumerate() {
            let lhs = d.apply_expr(&ft)?;
            let rhs = f.differentiate(&t.unprimed()[i]).substitute(&fwd)?;
            if !trig_reduce(&(&lhs - &rhs)).is_zero() {
                return Err(AlgError::Unsupported(format!(
                    "derivation rule fails on {f} along {}",
                    t.unprimed()[i]
                )));
            }
        }
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if !all[i].commutator(all[j]).is_zero() {
                return Err(AlgError::Unsupported(format!(
                    "pushforward derivations {i} and {j} do not commute"
                )));
            }
        }
    }
    Ok(())
}

/// The star product induced by `t`: the Moyal formula written in the
/// pushforward derivations, acting on functions of the primed frame.
pub fn transformed_star(t: &Transformation) -> Result<StarProduct, AlgError> {
    let (dx, dp) = pushforward_derivations(t)?;
    StarProduct::new(
        t.primed()[..t.n()].to_vec(),
        t.primed()[t.n()..].to_vec(),
        dx,
        dp,
        &format!("star[{}]", t.label()),
    )
}

/// Canonicity diagnosis of a transformation.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicityReport {
    /// Grade-0 brackets are symplectically normal and det J = 1.
    pub classical: bool,
    /// Coordinate star brackets keep the Heisenberg form through the
    /// checked grade.
    pub quantum: bool,
    /// Highest ℏ grade checked.
    pub order: u32,
    /// Human-readable failure notes, empty when both checks pass.
    pub detail: String,
}

/// Checks whether `t` is a (quantum) canonical transformation: the
/// determinant of the Jacobian must be 1, the grade-0 coordinate brackets
/// must be the Poisson normal form, and the full star brackets of the
/// coordinates must stay `[x'_i, p'_j] = δ_ij`, `[x'_i, x'_j] = [p'_i,
/// p'_j] = 0` through ℏ^k. Diagnostic, never fails: construction errors
/// are folded into a negative report.
pub fn canonicity_check(t: &Transformation, k: u32) -> CanonicityReport {
    let mut notes: Vec<String> = Vec::new();
    let jac = jacobian(t);
    let det = trig_reduce(&mat_det(&jac));
    let det_one = det.is_one();
    if !det_one {
        notes.push(format!("det J = {det}, expected 1"));
    }
    let sp = match transformed_star(t) {
        Ok(sp) => sp,
        Err(e) => {
            notes.push(format!("no transformed star product: {e}"));
            return CanonicityReport {
                classical: false,
                quantum: false,
                order: k,
                detail: notes.join("; "),
            };
        }
    };
    let dim = 2 * t.n();
    let mut classical_brackets = true;
    let mut quantum = true;
    for a in 0..dim {
        for b in a + 1..dim {
            let fa = Expr::var_of(&t.primed()[a]);
            let fb = Expr::var_of(&t.primed()[b]);
            let expected = if b == a + t.n() {
                Expr::one()
            } else {
                Expr::zero()
            };
            let br = match sp.bracket(&fa, &fb, k + 1) {
                Ok(s) => s,
                Err(e) => {
                    notes.push(format!("bracket({fa}, {fb}) failed: {e}"));
                    classical_brackets = false;
                    quantum = false;
                    continue;
                }
            };
            for g in 0..=k {
                let Some(c) = br.coeff(g) else { break };
                let want = if g == 0 { expected.clone() } else { Expr::zero() };
                if !trig_reduce(&(&c - &want)).is_zero() {
                    if g == 0 {
                        classical_brackets = false;
                    }
                    quantum = false;
                    notes.push(format!(
                        "bracket({fa}, {fb}) grade {g} is {c}, expected {want}"
                    ));
                }
            }
        }
    }
    CanonicityReport {
        classical: det_one && classical_brackets,
        quantum,
        order: k,
        detail: notes.join("; "),
    }
}

/// Left-multiplication operators of the primed coordinates in the
/// transformed star product, truncated at grade `k`: the images of the
/// position and momentum operators under the coordinate change.
pub fn primed_operators(
    t: &Transformation,
    k: u32,
) -> Result<(Vec<DiffOp>, Vec<DiffOp>), AlgError> {
    transformed_star(t)?.coordinate_ops(k)
}

/// Exact quantum flow of `h` at time `t`: the canonical transformation
/// whose inverse components are the Heisenberg evolutions Q_i(ξ, t) with
/// Q_i(ξ, 0) = ξ_i and dQ_i/dt = [Q_i, h]/(iℏ). The forward components
/// are the same evolutions at time -t written in the primed frame.
///
/// Closed forms are produced for Hamiltonians with nilpotent bracket
/// chains (polynomial flows, the anharmonic chain couplings included) and
/// for homogeneous quadratic Hamiltonians whose evolution matrix A
/// satisfies A^2 = λI (trigonometric for λ < 0, hyperbolic for λ > 0).
/// Anything else is reported unsupported.
pub fn quantum_flow(
    h: &Expr,
    unprimed: &[Var],
    primed: &[Var],
    tvar: &Var,
) -> Result<Transformation, AlgError> {
    if !unprimed.len().is_multiple_of(2) || unprimed.is_empty() || primed.len() != unprimed.len() {
        return Err(AlgError::FrameMismatch);
    }
    let n = unprimed.len() / 2;
    if h.variables().contains(tvar)
        || primed.contains(tvar)
        || unprimed.contains(tvar)
        || h.degree_in(unprimed).is_none()
    {
        return Err(AlgError::Unsupported(
            "flow needs a polynomial Hamiltonian and a fresh time symbol".to_string(),
        ));
    }
    let sp = StarProduct::moyal_in(unprimed[..n].to_vec(), unprimed[n..].to_vec());
    let t_expr = Expr::var_of(tvar);

    let components = nilpotent_flow(&sp, h, unprimed, &t_expr)
        .map(Some)
        .or_else(|e| match e {
            AlgError::Unsupported(_) => Ok(None),
            other => Err(other),
        })?;
    let components = match components {
        Some(c) => c,
        None => quadratic_flow(&sp, h, unprimed, &t_expr)?,
    };

    let pairs: Vec<(Var, Var)> = unprimed
        .iter()
        .cloned()
        .zip(primed.iter().cloned())
        .collect();
    let neg_t = t_expr.neg();
    let forward = components
        .iter()
        .map(|q| Ok(rename_vars(&q.substitute_var(tvar, &neg_t)?, &pairs)))
        .collect::<Result<Vec<_>, AlgError>>()?;
    Transformation::new(
        n,
        primed.to_vec(),
        unprimed.to_vec(),
        forward,
        Some(components),
        "flow",
    )
}

// Taylor flow Q = sum_j t^j ad^j(ξ)/j! for Hamiltonians whose iterated
// bracket chains terminate.
fn nilpotent_flow(
    sp: &StarProduct,
    h: &Expr,
    unprimed: &[Var],
    t_expr: &Expr,
) -> Result<Vec<Expr>, AlgError> {
    let mut components = Vec::with_capacity(unprimed.len());
    for v in unprimed {
        let mut q = Expr::var_of(v);
        let mut chain = Expr::var_of(v);
        let mut t_pow = Expr::one();
        let mut factorial = crate::scalar::rat_i64(1);
        for j in 1..=64u32 {
            let br = sp.bracket(&chain, h, 48)?;
            if !br.is_exact() {
                return Err(AlgError::Unsupported(
                    "bracket chain does not terminate".to_string(),
                ));
            }
            chain = br.to_expr();
            if chain.is_zero() {
                break;
            }
            // A chain whose phase-space degree keeps climbing will never
            // terminate; catalog flows stay at tiny degree, so cut early
            // instead of grinding through ever-larger polynomials.
            if j == 64 || chain.degree_in(unprimed).is_some_and(|d| d > 24) {
                return Err(AlgError::Unsupported(
                    "bracket chain does not terminate".to_string(),
                ));
            }
            t_pow = t_pow.mul(t_expr);
            factorial = &factorial * &crate::scalar::rat_i64(j as i64);
            let inv_fact = &crate::scalar::rat_i64(1) / &factorial;
            q = q.add(&chain.mul(&t_pow).scale_rat(&inv_fact));
        }
        components.push(q);
    }
    Ok(components)
}

// Closed-form flow for linear Heisenberg equations dξ/dt = A ξ with
// A^2 = λ I: trigonometric when λ = -Ω^2, hyperbolic when λ = +Ω^2.
fn quadratic_flow(
    sp: &StarProduct,
    h: &Expr,
    unprimed: &[Var],
    t_expr: &Expr,
) -> Result<Vec<Expr>, AlgError> {
    let dim = unprimed.len();
    let unsupported =
        || AlgError::Unsupported("Hamiltonian outside the exact-flow catalog".to_string());
    let mut a_mat: Vec<Vec<Expr>> = Vec::with_capacity(dim);
    for v in unprimed {
        let rhs = sp.bracket(&Expr::var_of(v), h, 8)?;
        if !rhs.is_exact() {
            return Err(unsupported());
        }
        let rhs = rhs.to_expr();
        let mut row = Vec::with_capacity(dim);
        let mut recomposed = Expr::zero();
        for w in unprimed {
            let c = rhs.differentiate(w);
            if w != v && unprimed.iter().any(|z| c.variables().contains(z)) {
                return Err(unsupported());
            }
            recomposed = recomposed.add(&c.mul(&Expr::var_of(w)));
            row.push(c);
        }
        if recomposed != rhs {
            return Err(unsupported());
        }
        a_mat.push(row);
    }
    let a2 = mat_mul(&a_mat, &a_mat);
    let lambda = a2[0][0].clone();
    for (i, row) in a2.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let want = if i == j { lambda.clone() } else { Expr::zero() };
            if *e != want {
                return Err(unsupported());
            }
        }
    }

    // scalar coefficients of Φ_t = C(t) I + S(t) A
    let (c_t, s_t) = if lambda.is_zero() {
        (Expr::one(), t_expr.clone())
    } else if let Some(omega) = sqrt_monomial(&lambda.neg()) {
        let arg = omega.mul(t_expr);
        let cos = crate::expr::func_of(&FuncSym::Cos, 0, &arg);
        let sin = crate::expr::func_of(&FuncSym::Sin, 0, &arg);
        (cos, sin.mul(&omega.pow(-1)?))
    } else if let Some(omega) = sqrt_monomial(&lambda) {
        let arg = omega.mul(t_expr);
        let ep = crate::expr::func_of(&FuncSym::Exp, 0, &arg);
        let em = crate::expr::func_of(&FuncSym::Exp, 0, &arg.neg());
        let cosh = (&ep + &em).mul_rat(1, 2);
        let sinh = (&ep - &em).mul(&omega.pow(-1)?).mul_rat(1, 2);
        (cosh, sinh)
    } else {
        return Err(unsupported());
    };

    let mut components = Vec::with_capacity(dim);
    for (i, v) in unprimed.iter().enumerate() {
        let mut q = c_t.mul(&Expr::var_of(v));
        for (j, w) in unprimed.iter().enumerate() {
            if !a_mat[i][j].is_zero() {
                q = q.add(&s_t.mul(&a_mat[i][j]).mul(&Expr::var_of(w)));
            }
        }
        components.push(q);
    }
    Ok(components)
}

// Symbolic square root of a single-term expression with even exponents
// and a perfect-square rational coefficient.
fn sqrt_monomial(e: &Expr) -> Option<Expr> {
    use crate::scalar::{Rat, Scalar};
    use num_traits::{Signed, Zero};
    if e.terms().len() != 1 {
        return None;
    }
    let (m, c) = &e.terms()[0];
    if !c.im.is_zero() || !c.re.is_positive() {
        return None;
    }
    let root = crate::expr::rat_sqrt_exact(&c.re)?;
    let mut out = Expr::from_scalar(Scalar::new(root, Rat::zero()));
    for (a, k) in m.factors() {
        if k % 2 != 0 {
            return None;
        }
        out = out.mul(&Expr::from_atom(a.clone()).pow(k / 2).ok()?);
    }
    Some(out)
}

/// Verifies that `t` is the flow map of `h`: the inverse components must
/// satisfy the Heisenberg equation dQ/dt = [Q, h]/(iℏ) identically and
/// reduce to the coordinates at t = 0. Exact polynomial/trigonometric
/// comparison, no sampling.
pub fn verify_flow(t: &Transformation, h: &Expr, tvar: &Var) -> Result<bool, AlgError> {
    let inv = t.inverse().ok_or_else(|| {
        AlgError::Unsupported("flow verification needs inverse components".to_string())
    })?;
    let n = t.n();
    let sp = StarProduct::moyal_in(t.unprimed()[..n].to_vec(), t.unprimed()[n..].to_vec());
    for (i, q) in inv.iter().enumerate() {
        let lhs = q.differentiate(tvar);
        let br = sp.bracket(q, h, 48)?;
        if !br.is_exact() {
            return Err(AlgError::Unsupported(
                "bracket of a flow component does not terminate".to_string(),
            ));
        }
        if !trig_reduce(&(&lhs - &br.to_expr())).is_zero() {
            return Ok(false);
        }
        if q.substitute_var(tvar, &Expr::zero())? != Expr::var_of(&t.unprimed()[i]) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn mat_minor(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// Determinant by Laplace expansion along the first row; fine for the
/// 2x2 and 4x4 matrices arising from N ≤ 2.
pub fn mat_det(m: &[Vec<Expr>]) -> Expr {
    let dim = m.len();
    if dim == 0 {
        return Expr::one();
    }
    if dim == 1 {
        return m[0][0].clone();
    }
    let mut acc = Expr::zero();
    for j in 0..dim {
        if m[0][j].is_zero() {
            continue;
        }
        let cofactor = mat_det(&mat_minor(m, 0, j));
        let term = m[0][j].mul(&cofactor);
        acc = if j % 2 == 0 {
            acc.add(&term)
        } else {
            acc.sub(&term)
        };
    }
    acc
}

// Adjugate matrix: adj[i][j] = (-1)^{i+j} det(minor with row j, col i
// removed), so that J^{-1} = adj / det.
fn mat_adjugate(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let dim = m.len();
    let mut adj = vec![vec![Expr::zero(); dim]; dim];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let d = mat_det(&mat_minor(m, j, i));
            *slot = if (i + j) % 2 == 0 { d } else { d.neg() };
        }
    }
    adj
}

fn mat_mul(a: &[Vec<Expr>], b: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let dim = a.len();
    let mut out = vec![vec![Expr::zero(); dim]; dim];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            for (k, bk) in b.iter().enumerate() {
                *slot = slot.add(&a[i][k].mul(&bk[j]));
            }
        }
    }
    out
}

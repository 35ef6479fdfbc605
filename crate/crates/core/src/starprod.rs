//! Star products from commuting derivation pairs.
//!
//! A [`StarProduct`] on N degrees of freedom is determined by coordinate
//! variables (x_1, …, x_N, p_1, …, p_N) and 2N pairwise-commuting first-order
//! derivations D_{x_i}, D_{p_i}. The product is the bidifferential series
//!
//! ```text
//! f ⋆ g = Σ_{α,β} (iℏ/2)^{|α|} (−iℏ/2)^{|β|} / (α! β!)
//!         (D_x^α D_p^β f) · (D_p^α D_x^β g),
//! ```
//!
//! which for D = ∂ is the Moyal product. Pushing the derivations through a
//! canonical transformation yields the transformed product on new variables;
//! construction checks the derivation axioms so every instance is associative
//! by the same argument.
//!
//! Exactness is detected: when every derivative of one factor dies at some
//! total order, the series is a finite sum and the result is marked exact;
//! otherwise it is truncated at the requested ℏ-grade.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::diffop::DiffOp;
use crate::error::AlgError;
use crate::expr::{factorial_rat, Expr, Var};
use num_traits::Zero;

use crate::scalar::{rat, s_i, s_pow, Scalar};
use crate::series::HbarSeries;

/// Derivative table keyed by mixed multi-index, plus the level (if any) at
/// which every entry vanished.
type DerivTable = (BTreeMap<Vec<u16>, Expr>, Option<u32>);

/// Star-basis expansion: ((n, m), c) pairs with f = sum of c * SM(n, m).
type StarBasis = Vec<((u16, u16), Expr)>;

/// A star product built from pairwise-commuting derivations.
#[derive(Debug, Clone)]
pub struct StarProduct {
    xs: Vec<Var>,
    ps: Vec<Var>,
    frame: Arc<[Var]>,
    dx: Vec<DiffOp>,
    dp: Vec<DiffOp>,
    label: String,
}

/// All multi-indices of the given length summing to `total`.
fn multi_indices(len: usize, total: u16) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = alloc::vec![0u16; len];
    fn rec(out: &mut Vec<Vec<u16>>, cur: &mut Vec<u16>, slot: usize, rest: u16) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            out.push(cur.clone());
            return;
        }
        for v in 0..=rest {
            cur[slot] = v;
            rec(out, cur, slot + 1, rest - v);
        }
    }
    if len == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(&mut out, &mut cur, 0, total);
    out
}

impl StarProduct {
    /// Builds a star product, validating the derivation axioms: one
    /// first-order exact ℏ-free operator per coordinate, all pairs
    /// commuting.
    pub fn new(
        xs: Vec<Var>,
        ps: Vec<Var>,
        dx: Vec<DiffOp>,
        dp: Vec<DiffOp>,
        label: &str,
    ) -> Result<Self, AlgError> {
        let n = xs.len();
        if n == 0 || ps.len() != n || dx.len() != n || dp.len() != n {
            return Err(AlgError::Unsupported(String::from(
                "star product needs matching nonempty coordinate and derivation lists",
            )));
        }
        let mut frame: Vec<Var> = xs.clone();
        frame.extend(ps.iter().cloned());
        {
            let mut seen = alloc::collections::BTreeSet::new();
            for v in &frame {
                if !seen.insert(v.clone()) {
                    return Err(AlgError::Unsupported(String::from(
                        "duplicate coordinate variable",
                    )));
                }
            }
        }
        let frame: Arc<[Var]> = frame.into();
        let all: Vec<&DiffOp> = dx.iter().chain(dp.iter()).collect();
        for d in &all {
            if d.frame() != &frame {
                return Err(AlgError::FrameMismatch);
            }
            if !d.is_exact() {
                return Err(AlgError::Unsupported(String::from(
                    "derivations must be exact operators",
                )));
            }
            for (alpha, c) in d.terms() {
                if alpha.iter().sum::<u16>() != 1 {
                    return Err(AlgError::Unsupported(String::from(
                        "derivations must be strictly first order",
                    )));
                }
                if !c.hbar_free() {
                    return Err(AlgError::NotGraded("derivation coefficients must not mention hbar"));
                }
            }
        }
        for (i, a) in all.iter().enumerate() {
            for b in all.iter().skip(i + 1) {
                let comm = a.commutator(b);
                if !comm.is_zero() {
                    return Err(AlgError::Unsupported(alloc::format!(
                        "derivations do not commute: [{a}, {b}] = {comm}"
                    )));
                }
            }
        }
        Ok(StarProduct { xs, ps, frame, dx, dp, label: String::from(label) })
    }

    /// The Moyal product on N degrees of freedom, with variables
    /// (x, p) for N = 1 and (x1…xN, p1…pN) otherwise.
    pub fn moyal(n: usize) -> Self {
        assert!(n > 0, "need at least one degree of freedom");
        let (xs, ps): (Vec<Var>, Vec<Var>) = if n == 1 {
            (alloc::vec![Var::new("x")], alloc::vec![Var::new("p")])
        } else {
            (1..=n)
                .map(|i| (Var::new(&alloc::format!("x{i}")), Var::new(&alloc::format!("p{i}"))))
                .unzip()
        };
        Self::moyal_in(xs, ps)
    }

    /// The Moyal product over explicitly named variables (plain partial
    /// derivatives as derivations).
    pub fn moyal_in(xs: Vec<Var>, ps: Vec<Var>) -> Self {
        let n = xs.len();
        let mut frame: Vec<Var> = xs.clone();
        frame.extend(ps.iter().cloned());
        let frame: Arc<[Var]> = frame.into();
        let dx: Vec<DiffOp> = (0..n).map(|i| DiffOp::deriv(frame.clone(), i)).collect();
        let dp: Vec<DiffOp> = (0..n).map(|i| DiffOp::deriv(frame.clone(), n + i)).collect();
        Self::new(xs, ps, dx, dp, "moyal").expect("partial derivatives satisfy the axioms")
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn frame(&self) -> &Arc<[Var]> {
        &self.frame
    }

    pub fn xs(&self) -> &[Var] {
        &self.xs
    }

    pub fn ps(&self) -> &[Var] {
        &self.ps
    }

    pub fn dx(&self, i: usize) -> &DiffOp {
        &self.dx[i]
    }

    pub fn dp(&self, i: usize) -> &DiffOp {
        &self.dp[i]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Mixed-derivative table: key γ = (a, b) holds D_x^a D_p^b f for all
    /// |γ| ≤ `k`, stopping early at the first empty level. Returns the table
    /// and the level at which every entry vanished, if any.
    fn table(&self, f: &Expr, k: u32) -> Result<DerivTable, AlgError> {
        let n = self.n();
        let m = 2 * n;
        let mut t = BTreeMap::new();
        t.insert(alloc::vec![0u16; m], f.clone());
        if f.is_zero() {
            return Ok((t, Some(0)));
        }
        for level in 1..=k {
            let mut all_zero = true;
            for gamma in multi_indices(m, level as u16) {
                let i = gamma.iter().position(|&v| v > 0).unwrap();
                let mut prev = gamma.clone();
                prev[i] -= 1;
                let base = &t[&prev];
                let val = if base.is_zero() {
                    Expr::zero()
                } else {
                    let d = if i < n { &self.dx[i] } else { &self.dp[i - n] };
                    d.apply_expr(base)?
                };
                if !val.is_zero() {
                    all_zero = false;
                }
                t.insert(gamma, val);
            }
            if all_zero {
                return Ok((t, Some(level)));
            }
        }
        Ok((t, None))
    }

    /// The star product f ⋆ g through ℏ-grade `k`; exact when the
    /// bidifferential series terminates by itself.
    pub fn star(&self, f: &Expr, g: &Expr, k: u32) -> Result<HbarSeries, AlgError> {
        let n = self.n();
        let (tf, died_f) = self.table(f, k)?;
        let (tg, died_g) = self.table(g, k)?;
        let death = match (died_f, died_g) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, b) => b,
        };
        let max_level = death.map_or(k, |d| k.min(d.saturating_sub(1)));
        let mut total = Expr::zero();
        for level in 0..=max_level {
            for gamma in multi_indices(2 * n, level as u16) {
                let ff = &tf[&gamma];
                if ff.is_zero() {
                    continue;
                }
                let mut swapped = gamma[n..].to_vec();
                swapped.extend_from_slice(&gamma[..n]);
                let gg = &tg[&swapped];
                if gg.is_zero() {
                    continue;
                }
                let a_tot: u16 = gamma[..n].iter().sum();
                let b_tot: u16 = gamma[n..].iter().sum();
                // (i/2)^|α| (−i/2)^|β| / (α! β!), with ℏ^level appended.
                let mut c = s_pow(&s_i(), a_tot as i64);
                c *= s_pow(&s_i().conj(), b_tot as i64);
                let mut denom = rat(1, 2).pow(level as i32);
                for &e in &gamma {
                    denom /= factorial_rat(e as u64);
                }
                c *= Scalar::new(denom, crate::scalar::Rat::zero());
                let term = (ff * gg).scale(&c).mul_hbar_pow(level);
                total = &total + &term;
            }
        }
        let series = HbarSeries::from_expr(&total)?;
        Ok(match death {
            Some(_) => series,
            None => series.truncate(k),
        })
    }

    /// The known part of f ⋆ g as a plain expression.
    pub fn star_expr(&self, f: &Expr, g: &Expr, k: u32) -> Result<Expr, AlgError> {
        Ok(self.star(f, g, k)?.to_expr())
    }

    /// f ⋆ g − g ⋆ f.
    pub fn star_commutator(&self, f: &Expr, g: &Expr, k: u32) -> Result<HbarSeries, AlgError> {
        Ok(self.star(f, g, k)?.sub(&self.star(g, f, k)?))
    }

    /// The deformed Poisson bracket ⟦f, g⟧ = (f ⋆ g − g ⋆ f)/(iℏ).
    pub fn bracket(&self, f: &Expr, g: &Expr, k: u32) -> Result<HbarSeries, AlgError> {
        self.star_commutator(f, g, k)?.div_i_hbar()
    }

    /// Time derivative of an observable under a Hamiltonian: ⟦f, h⟧.
    pub fn heisenberg_rhs(&self, f: &Expr, h: &Expr, k: u32) -> Result<HbarSeries, AlgError> {
        self.bracket(f, h, k)
    }

    /// The left-multiplication operator L_f = f ⋆ (·) as a differential
    /// operator, through ℏ-grade `k` (exact when the series terminates).
    pub fn left_mult_operator(&self, f: &Expr, k: u32) -> Result<DiffOp, AlgError> {
        let n = self.n();
        let (tf, died) = self.table(f, k)?;
        let max_level = died.map_or(k, |d| k.min(d.saturating_sub(1)));
        // Composite operators D_p^α D_x^β, memoized by (α, β).
        let mut ops: BTreeMap<Vec<u16>, DiffOp> = BTreeMap::new();
        ops.insert(alloc::vec![0u16; 2 * n], DiffOp::identity(self.frame.clone()));
        let mut acc = DiffOp::zero(self.frame.clone());
        for level in 0..=max_level {
            for gamma in multi_indices(2 * n, level as u16) {
                if level > 0 {
                    let i = gamma.iter().position(|&v| v > 0).unwrap();
                    let mut prev = gamma.clone();
                    prev[i] -= 1;
                    // First half of the key is the D_p power, second the D_x.
                    let d = if i < n { &self.dp[i] } else { &self.dx[i - n] };
                    let next = d.compose(&ops[&prev]);
                    ops.insert(gamma.clone(), next);
                }
                let ff = &tf[&gamma];
                if ff.is_zero() {
                    continue;
                }
                let a_tot: u16 = gamma[..n].iter().sum();
                let b_tot: u16 = gamma[n..].iter().sum();
                let mut c = s_pow(&s_i(), a_tot as i64);
                c *= s_pow(&s_i().conj(), b_tot as i64);
                let mut denom = rat(1, 2).pow(level as i32);
                for &e in &gamma {
                    denom /= factorial_rat(e as u64);
                }
                c *= Scalar::new(denom, crate::scalar::Rat::zero());
                let coef = ff.scale(&c).mul_hbar_pow(level);
                acc = acc.add(&ops[&gamma].left_mul(&coef));
            }
        }
        Ok(match died {
            Some(_) => acc,
            None => acc.truncate(k),
        })
    }

    /// The coordinate left-multiplication operators (q̂_i, p̂_j) for this
    /// product, through ℏ-grade `k`.
    pub fn coordinate_ops(&self, k: u32) -> Result<(Vec<DiffOp>, Vec<DiffOp>), AlgError> {
        let mut qs = Vec::with_capacity(self.n());
        let mut ms = Vec::with_capacity(self.n());
        for v in &self.xs {
            qs.push(self.left_mult_operator(&Expr::var_of(v), k)?);
        }
        for v in &self.ps {
            ms.push(self.left_mult_operator(&Expr::var_of(v), k)?);
        }
        Ok((qs, ms))
    }

    /// True when the coordinate functions behave like Darboux coordinates
    /// for the derivations: D_{x}(x) = D_{p}(p) = 1 and the cross terms
    /// vanish. This is what the star-monomial recurrences rely on.
    fn coordinates_are_flat(&self) -> Result<bool, AlgError> {
        let n = self.n();
        for i in 0..n {
            let xi = Expr::var_of(&self.xs[i]);
            let pi = Expr::var_of(&self.ps[i]);
            for j in 0..n {
                let dxj_x = self.dx[j].apply_expr(&xi)?;
                let dpj_x = self.dp[j].apply_expr(&xi)?;
                let dxj_p = self.dx[j].apply_expr(&pi)?;
                let dpj_p = self.dp[j].apply_expr(&pi)?;
                let delta = if i == j { Expr::one() } else { Expr::zero() };
                if dxj_x != delta || dpj_p != delta || !dpj_x.is_zero() || !dxj_p.is_zero() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// The star monomial SM(n, m) = x^{⋆n} ⋆ p^{⋆m} for one degree of
    /// freedom, built by the two-term recurrences
    ///
    /// ```text
    /// SM(n+1, m) = x·SM(n, m) + (iℏ/2) m SM(n, m−1)
    /// SM(n, m+1) = p·SM(n, m) + (iℏ/2) n SM(n−1, m)
    /// ```
    pub fn star_monomial(&self, nx: u16, mp: u16) -> Result<Expr, AlgError> {
        self.require_flat_1d("star monomials")?;
        let x = Expr::var_of(&self.xs[0]);
        let p = Expr::var_of(&self.ps[0]);
        // Column m = 0 is x^n; then climb in p.
        let mut col: Vec<Expr> = Vec::with_capacity(nx as usize + 1);
        col.push(Expr::one());
        for _ in 0..nx {
            col.push(&x * col.last().unwrap());
        }
        for _ in 0..mp {
            let mut next: Vec<Expr> = Vec::with_capacity(col.len());
            for (k, cur) in col.iter().enumerate() {
                let mut e = &p * cur;
                if k > 0 {
                    let lift = col[k - 1].scale(&crate::scalar::s_i_rat(k as i64, 2));
                    e = &e + &lift.mul_hbar_pow(1);
                }
                next.push(e);
            }
            col = next;
        }
        Ok(col[nx as usize].clone())
    }

    fn require_flat_1d(&self, what: &str) -> Result<(), AlgError> {
        if self.n() != 1 {
            return Err(AlgError::Unsupported(alloc::format!(
                "{what} are implemented for one degree of freedom"
            )));
        }
        if !self.coordinates_are_flat()? {
            return Err(AlgError::Unsupported(alloc::format!(
                "{what} need derivations acting as plain partials on the coordinates"
            )));
        }
        Ok(())
    }

    /// Expands a polynomial in the star-monomial basis: returns pairs
    /// ((n, m), c) with f = Σ c_{nm} SM(n, m), coefficients free of the
    /// coordinates. Inverse of assembling with [`StarProduct::star_monomial`].
    pub fn to_star_basis(&self, f: &Expr) -> Result<StarBasis, AlgError> {
        self.require_flat_1d("star-basis expansions")?;
        let xv = self.xs[0].clone();
        let pv = self.ps[0].clone();
        if !f.polynomial_in(&[xv.clone(), pv.clone()]) {
            return Err(AlgError::Unsupported(String::from(
                "star-basis expansion needs a polynomial in the coordinates",
            )));
        }
        let mut rest = f.clone();
        let mut out: BTreeMap<(u16, u16), Expr> = BTreeMap::new();
        while !rest.is_zero() {
            // Leading monomial: highest total degree, then highest x-degree.
            let mut lead: Option<(i64, i64)> = None;
            for (m, _) in rest.terms() {
                let dx = m.var_exponent(&xv);
                let dp = m.var_exponent(&pv);
                let key = (dx + dp, dx);
                if lead.is_none_or(|(t, a)| key > (t, a)) {
                    lead = Some(key);
                }
            }
            let (tot, dx) = lead.unwrap();
            let dp = tot - dx;
            let c = rest
                .poly_coefficient(&xv, dx)
                .and_then(|e| e.poly_coefficient(&pv, dp))
                .ok_or_else(|| {
                    AlgError::Unsupported(String::from("coordinate inside a nonpolynomial atom"))
                })?;
            let sm = self.star_monomial(dx as u16, dp as u16)?;
            rest = &rest - &(&c * &sm);
            let slot = out.entry((dx as u16, dp as u16)).or_insert_with(Expr::zero);
            *slot = &*slot + &c;
        }
        Ok(out.into_iter().filter(|(_, c)| !c.is_zero()).collect())
    }
}

//! Phase-space grids: Wigner functions of sampled states and expectation
//! values taken against them.
//!
//! The cross-Wigner of two states is
//!   (f1* (x) f2)(x, p) = (2 pi hbar)^(-1/2) integral dy e^(-i p y / hbar)
//!                         conj(f1)(x - y/2) f2(x + y/2),
//! evaluated on the state's own midpoint x-grid. The y-integral is a pure
//! DFT once y is restricted to even multiples of dx, which fixes the
//! conjugate momentum lattice p_j = pi hbar j / (2L). With this pairing
//! the diagonal Wigner function of a normalized state integrates to
//! sqrt(2 pi hbar), so expectations carry the matching (2 pi hbar)^(-1/2).

use moyal::expr::{EvalEnv, Expr, Var};
use moyal::starprod::StarProduct;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{CliError, Result};
use crate::grid::{angular_freqs, GridState, Packet};

/// A complex field W(x, p) on a rectangular phase-space lattice,
/// stored row-major with x as the slow index.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    values: Vec<Complex64>,
    xs: Vec<f64>,
    ps: Vec<f64>,
    hbar: f64,
}

impl PhaseGrid {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn np(&self) -> usize {
        self.ps.len()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    pub fn dp(&self) -> f64 {
        self.ps[1] - self.ps[0]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.np() + j]
    }

    /// Plain double-midpoint integral of the field.
    pub fn total_integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * Complex64::from(self.dx() * self.dp())
    }

    /// Largest |Im W| over the lattice, the purity diagnostic.
    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// L2 norm with the area element.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx() * self.dp()).sqrt()
    }

    /// Apply a Fourier multiplier along the p axis: each row i is
    /// transformed, multiplied by f(i, kappa), and transformed back.
    /// This realizes constant-coefficient-in-p differential operators.
    pub fn apply_p_multiplier(&mut self, f: impl Fn(usize, f64) -> Complex64) {
        let np = self.np();
        let freqs = angular_freqs(np, self.dp());
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(np);
        let inv = planner.plan_fft_inverse(np);
        let scale = 1.0 / np as f64;
        for i in 0..self.nx() {
            let row = &mut self.values[i * np..(i + 1) * np];
            fwd.process(row);
            for (z, &k) in row.iter_mut().zip(&freqs) {
                *z *= f(i, k) * scale;
            }
            inv.process(row);
        }
    }

    /// Spectral partial derivative d^a/dx^a d^b/dp^b of the field.
    pub fn derivative(&self, a: u32, b: u32) -> PhaseGrid {
        let mut out = self.clone();
        let (nx, np) = (self.nx(), self.np());
        let mut planner = FftPlanner::new();
        if b > 0 {
            let fwd = planner.plan_fft_forward(np);
            let inv = planner.plan_fft_inverse(np);
            let freqs = angular_freqs(np, self.dp());
            let scale = 1.0 / np as f64;
            for i in 0..nx {
                let row = &mut out.values[i * np..(i + 1) * np];
                fwd.process(row);
                for (z, &k) in row.iter_mut().zip(&freqs) {
                    *z *= Complex64::new(0.0, k).powu(b) * scale;
                }
                inv.process(row);
            }
        }
        if a > 0 {
            let fwd = planner.plan_fft_forward(nx);
            let inv = planner.plan_fft_inverse(nx);
            let freqs = angular_freqs(nx, self.dx());
            let scale = 1.0 / nx as f64;
            let mut col = vec![Complex64::new(0.0, 0.0); nx];
            for j in 0..np {
                for i in 0..nx {
                    col[i] = out.values[i * np + j];
                }
                fwd.process(&mut col);
                for (z, &k) in col.iter_mut().zip(&freqs) {
                    *z *= Complex64::new(0.0, k).powu(a) * scale;
                }
                inv.process(&mut col);
                for i in 0..nx {
                    out.values[i * np + j] = col[i];
                }
            }
        }
        out
    }
}

/// Cross-Wigner transform of two states on a shared grid. The momentum
/// lattice is p_j = pi hbar j / (2L) for j = -M/2 .. M/2 - 1, ascending.
pub fn wigner_product(f1: &GridState, f2: &GridState) -> Result<PhaseGrid> {
    if !f1.compatible(f2) {
        return Err(CliError::Grid("wigner product on mismatched grids".into()));
    }
    let m = f1.len();
    let half = (m / 2) as i64;
    let dx = f1.dx();
    let hbar = f1.hbar();
    let dp = PI * hbar / (2.0 * f1.half_width());
    let prefactor = 2.0 * dx / (2.0 * PI * hbar).sqrt();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let mut values = vec![Complex64::new(0.0, 0.0); m * m];
    let mut row = vec![Complex64::new(0.0, 0.0); m];
    let a = f1.samples();
    let b = f2.samples();
    for n in 0..m as i64 {
        row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        // y = 2 m dx; both shifted indices must stay on the lattice.
        let lo = (-half).max(-n).max(n - (m as i64 - 1));
        let hi = (half - 1).min(n).min(m as i64 - 1 - n);
        for mm in lo..=hi {
            let v = a[(n - mm) as usize].conj() * b[(n + mm) as usize];
            row[(mm.rem_euclid(m as i64)) as usize] = v;
        }
        fft.process(&mut row);
        let out = &mut values[(n as usize) * m..(n as usize + 1) * m];
        for (jj, slot) in out.iter_mut().enumerate() {
            let j = jj as i64 - half;
            *slot = row[j.rem_euclid(m as i64) as usize] * prefactor;
        }
    }
    let xs = (0..m).map(|i| f1.x(i)).collect();
    let ps = (0..m).map(|j| (j as i64 - half) as f64 * dp).collect();
    Ok(PhaseGrid {
        values,
        xs,
        ps,
        hbar,
    })
}

/// Diagonal Wigner function of a single state.
pub fn wigner(f: &GridState) -> Result<PhaseGrid> {
    wigner_product(f, f)
}

/// Closed-form cross-Wigner of two Gaussian packets at one phase point.
/// The y-integral is a complex Gaussian integral done exactly.
pub fn cross_wigner_gauss(g1: &Packet, g2: &Packet, x: f64, p: f64, hbar: f64) -> Complex64 {
    let (s1, s2) = (g1.sigma * g1.sigma, g2.sigma * g2.sigma);
    let alpha = (1.0 / s1 + 1.0 / s2) / 8.0;
    let beta = Complex64::new(
        (x - g1.x0) / (2.0 * s1) - (x - g2.x0) / (2.0 * s2),
        ((g1.p0 + g2.p0) / 2.0 - p) / hbar,
    );
    let gamma = Complex64::new(
        -(x - g1.x0).powi(2) / (2.0 * s1) - (x - g2.x0).powi(2) / (2.0 * s2),
        (g2.p0 - g1.p0) * x / hbar,
    );
    let prefactor = (2.0 * PI * hbar).sqrt().recip()
        * (PI * s1).powf(-0.25)
        * (PI * s2).powf(-0.25)
        * (PI / alpha).sqrt();
    prefactor * (beta * beta / (4.0 * alpha) + gamma).exp()
}

/// Phase-space expectation of the symbol `a` in the state `psi`:
///   <a> = (2 pi hbar)^(-1/2) integral (a star W_psi) dx dp,
/// with the star product realized through the left-multiplication
/// operator of `a` truncated at grade `k` (exact once `k` reaches the
/// polynomial degree of `a`). Coefficients are evaluated on the lattice;
/// derivatives of W are spectral.
pub fn expectation(a: &Expr, psi: &GridState, xvar: &Var, pvar: &Var, k: u32) -> Result<Complex64> {
    let sp = StarProduct::moyal_in(vec![xvar.clone()], vec![pvar.clone()]);
    let op = sp.left_mult_operator(a, k)?;
    let w = wigner(psi)?;
    let hbar = psi.hbar();
    let (nx, np) = (w.nx(), w.np());

    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, coeff) in op.terms() {
        let (da, db) = (u32::from(idx[0]), u32::from(idx[1]));
        let wd = w.derivative(da, db);
        let mut env = EvalEnv::new(hbar);
        for i in 0..nx {
            env.set(xvar, w.xs()[i]);
            for j in 0..np {
                env.set(pvar, w.ps()[j]);
                let c = coeff.eval_f64(&env)?;
                acc += c * wd.value(i, j);
            }
        }
    }
    Ok(acc * w.dx() * w.dp() / (2.0 * PI * hbar).sqrt())
}

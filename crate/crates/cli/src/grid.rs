//! Sampled wave functions on a uniform midpoint grid.
//!
//! States live on x_i = -L + (i + 1/2) dx with dx = 2L/M. The midpoint
//! offset keeps x = 0 off the lattice, so weights like |x|^(-1/2) that
//! appear around singular coordinate maps stay finite at every sample.
//! All transforms assume the state has decayed to numerical noise at the
//! edges; [`GridState::boundary_decay`] measures how true that is.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{CliError, Result};

/// A Gaussian wave packet: center `x0`, mean momentum `p0`, width `sigma`.
///
/// Normalized so the L2 norm is exactly 1 in the continuum.
#[derive(Clone, Copy, Debug)]
pub struct Packet {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
}

impl Packet {
    pub fn new(x0: f64, p0: f64, sigma: f64) -> Self {
        Packet { x0, p0, sigma }
    }

    /// Pointwise value (pi s^2)^(-1/4) e^(-(x-x0)^2 / 2s^2) e^(i p0 x / hbar).
    pub fn eval(&self, x: f64, hbar: f64) -> Complex64 {
        let s2 = self.sigma * self.sigma;
        let amp = (PI * s2).powf(-0.25) * (-(x - self.x0).powi(2) / (2.0 * s2)).exp();
        amp * Complex64::new(0.0, self.p0 * x / hbar).exp()
    }

    /// |psi(x)|^2, independent of `p0` and `hbar`.
    pub fn abs2(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (PI * s2).powf(-0.5) * (-(x - self.x0).powi(2) / s2).exp()
    }
}

/// A complex wave function sampled on the midpoint grid of [-L, L].
#[derive(Clone, Debug)]
pub struct GridState {
    samples: Vec<Complex64>,
    half_width: f64,
    hbar: f64,
}

impl GridState {
    pub fn new(samples: Vec<Complex64>, half_width: f64, hbar: f64) -> Result<Self> {
        if samples.len() < 8 || samples.len() % 2 != 0 {
            return Err(CliError::Grid(format!(
                "need an even number of samples >= 8, got {}",
                samples.len()
            )));
        }
        if !(half_width > 0.0) || !(hbar > 0.0) {
            return Err(CliError::Grid(format!(
                "half width and hbar must be positive, got L={half_width}, hbar={hbar}"
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CliError::Grid("non-finite sample".into()));
        }
        Ok(GridState { samples, half_width, hbar })
    }

    /// Sample a closed form on the grid.
    pub fn from_fn(
        half_width: f64,
        m: usize,
        hbar: f64,
        mut f: impl FnMut(f64) -> Complex64,
    ) -> Result<Self> {
        let dx = 2.0 * half_width / m as f64;
        let samples = (0..m)
            .map(|i| f(-half_width + (i as f64 + 0.5) * dx))
            .collect();
        GridState::new(samples, half_width, hbar)
    }

    /// Sample a normalized Gaussian packet.
    pub fn gaussian(half_width: f64, m: usize, hbar: f64, packet: &Packet) -> Result<Self> {
        GridState::from_fn(half_width, m, hbar, |x| packet.eval(x, hbar))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.len() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.dx()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    /// Same grid geometry and hbar.
    pub fn compatible(&self, other: &Self) -> bool {
        self.len() == other.len()
            && (self.half_width - other.half_width).abs() < 1e-12
            && (self.hbar - other.hbar).abs() < 1e-15
    }

    /// L2 norm by the midpoint rule.
    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx()).sqrt()
    }

    /// Inner product <self, other> = integral conj(self) * other dx.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if !self.compatible(other) {
            return Err(CliError::Grid("inner product on mismatched grids".into()));
        }
        let s: Complex64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.dx())
    }

    /// Largest edge magnitude relative to the peak magnitude. A state the
    /// transforms can trust keeps this below 1e-12.
    pub fn boundary_decay(&self) -> f64 {
        let peak = self
            .samples
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let edge = self.samples[0].norm().max(self.samples[self.len() - 1].norm());
        edge / peak
    }

    /// Spectral derivative d^k/dx^k through the periodic Fourier basis.
    /// Accurate only while the state decays below noise at the edges.
    pub fn derivative(&self, k: u32) -> Self {
        let m = self.len();
        let mut data = self.samples.clone();
        fft_in_place(&mut data, false);
        let freqs = angular_freqs(m, self.dx());
        for (z, &w) in data.iter_mut().zip(&freqs) {
            *z *= Complex64::new(0.0, w).powu(k);
        }
        fft_in_place(&mut data, true);
        GridState {
            samples: data,
            half_width: self.half_width,
            hbar: self.hbar,
        }
    }

    /// Pointwise scale.
    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for z in out.samples.iter_mut() {
            *z *= c;
        }
        out
    }
}

/// Relative L2 distance ||a - b|| / ||b||.
pub fn rel_l2_distance(a: &GridState, b: &GridState) -> Result<f64> {
    if !a.compatible(b) {
        return Err(CliError::Grid("distance on mismatched grids".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (za, zb) in a.samples().iter().zip(b.samples()) {
        num += (za - zb).norm_sqr();
        den += zb.norm_sqr();
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// Angular frequencies of the length-`m` DFT with sample spacing `d`,
/// in FFT storage order (non-negative first, then negative).
pub fn angular_freqs(m: usize, d: f64) -> Vec<f64> {
    let base = 2.0 * PI / (m as f64 * d);
    (0..m)
        .map(|j| {
            let j = if j <= m / 2 { j as i64 } else { j as i64 - m as i64 };
            base * j as f64
        })
        .collect()
}

/// In-place FFT; the inverse includes the 1/M normalization.
pub fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
    if inverse {
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Continuous Fourier transform on the shared grid geometry,
///   (F phi)(x') = (2 pi hbar)^(-1/2) integral e^(sign i x x' / hbar) phi(x) dx,
/// evaluated at every output midpoint with a Bluestein chirp-z transform.
///
/// This routine exists as an independent spectral cross-check for the
/// direct quadrature kernels: it shares no code path with them beyond the
/// FFT itself.
pub fn czt_fourier(state: &GridState, sign: f64) -> GridState {
    let m = state.len();
    let dx = state.dx();
    let hbar = state.hbar();
    let l = state.half_width();
    let theta = sign * dx * dx / hbar;
    let lambda = -sign * l * dx / hbar;

    // x_n x'_k = (n^2 + k^2 - (n-k)^2)/2 dx^2 + (n+k+1)/2 dx^2 - L dx (n+k+1) + L^2
    // after inserting midpoints; Bluestein splits the nm cross term.
    let chirp = |n: i64| -> Complex64 {
        Complex64::new(0.0, theta * (n * n) as f64 / 2.0).exp()
    };
    let len = (2 * m - 1).next_power_of_two();
    let mut u = vec![Complex64::new(0.0, 0.0); len];
    let mut v = vec![Complex64::new(0.0, 0.0); len];
    for n in 0..m {
        let lin = Complex64::new(0.0, (theta / 2.0 + lambda) * n as f64).exp();
        u[n] = state.samples()[n] * dx * lin * chirp(n as i64);
    }
    for k in 0..m as i64 {
        let w = chirp(k).conj();
        v[k as usize] = w;
        if k > 0 {
            v[len - k as usize] = w;
        }
    }
    fft_in_place(&mut u, false);
    fft_in_place(&mut v, false);
    for (a, b) in u.iter_mut().zip(&v) {
        *a *= b;
    }
    fft_in_place(&mut u, true);

    let global = Complex64::new(0.0, theta / 4.0 + lambda + sign * l * l / hbar).exp();
    let norm = 1.0 / (2.0 * PI * hbar).sqrt();
    let samples = (0..m)
        .map(|k| {
            let outer = Complex64::new(0.0, (theta / 2.0 + lambda) * k as f64).exp();
            u[k] * chirp(k as i64) * outer * global * norm
        })
        .collect();
    GridState {
        samples,
        half_width: l,
        hbar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet() -> Packet {
        Packet::new(0.4, -0.7, 0.9)
    }

    #[test]
    fn gaussian_is_normalized_on_the_grid() {
        let g = GridState::gaussian(14.0, 1024, 1.0, &packet()).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-12, "norm {}", g.norm());
        assert!(g.boundary_decay() < 1e-12);
    }

    #[test]
    fn spectral_derivative_matches_closed_form() {
        let p = packet();
        let hbar = 1.0;
        let g = GridState::gaussian(14.0, 1024, hbar, &p).unwrap();
        let d = g.derivative(1);
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let x = g.x(i);
            // psi' = (-(x-x0)/s^2 + i p0/hbar) psi
            let expect =
                Complex64::new(-(x - p.x0) / (p.sigma * p.sigma), p.p0 / hbar) * g.samples()[i];
            worst = worst.max((d.samples()[i] - expect).norm());
        }
        assert!(worst < 1e-10, "max derivative error {worst}");
    }

    #[test]
    fn czt_fourier_of_gaussian_matches_closed_form() {
        let p = packet();
        let hbar = 1.0;
        let g = GridState::gaussian(16.0, 1024, hbar, &p).unwrap();
        let f = czt_fourier(&g, -1.0);
        // integral e^(-(x-x0)^2/2s^2 + i(p0 - x')x/hbar) dx completed exactly.
        let s2 = p.sigma * p.sigma;
        let mut worst = 0.0f64;
        for k in 0..f.len() {
            let xp = f.x(k);
            let freq = (p.p0 - xp) / hbar;
            let amp = (2.0 * PI * hbar).sqrt().recip()
                * (PI * s2).powf(-0.25)
                * (2.0 * PI * s2).sqrt()
                * (-s2 * freq * freq / 2.0).exp();
            let expect = amp * Complex64::new(0.0, freq * p.x0).exp();
            worst = worst.max((f.samples()[k] - expect).norm());
        }
        assert!(worst < 1e-12, "max transform error {worst}");
    }

    #[test]
    fn czt_fourier_preserves_the_norm() {
        let g = GridState::gaussian(16.0, 2048, 0.7, &packet()).unwrap();
        let f = czt_fourier(&g, -1.0);
        assert!((f.norm() - g.norm()).abs() < 1e-10);
    }

    #[test]
    fn rejects_inconsistent_grids() {
        assert!(GridState::new(vec![Complex64::new(1.0, 0.0); 7], 1.0, 1.0).is_err());
        let g = GridState::gaussian(10.0, 64, 1.0, &packet()).unwrap();
        let h = GridState::gaussian(12.0, 64, 1.0, &packet()).unwrap();
        assert!(g.inner(&h).is_err());
    }
}

//! Covariance of the star tensor product under unitary kernels.
//!
//! For a canonical map T with unitary kernel U and gauge operator S, the
//! tensor product of transformed states reproduces the original one
//! composed with the map:
//!   (phi* (x) psi)(T(x', p')) = S [ (U phi)* (x) (U psi) ] (x', p').
//! The left side is resampled from the closed-form cross-Wigner transform
//! of Gaussian packets; the right side is built entirely on the lattice:
//! transform the states, take their tensor, then apply S as a Fourier
//! multiplier along p row by row. The relative L2 distance between the two
//! fields is the reported residual, so the check is end-to-end: kernel
//! quadrature, lattice tensor, and gauge multiplier all have to agree.

use moyal::diffop::DiffOp;
use moyal::expr::{EvalEnv, Var};
use num_complex::Complex64;

use crate::error::{CliError, Result};
use crate::grid::{GridState, Packet};
use crate::wigner::{cross_wigner_gauss, wigner_product};

/// Relative L2 residual of the intertwining identity.
///
/// `u1`, `u2` are the transformed states; `map` sends a primed phase point
/// to the original coordinates; `gauge` is the truncated gauge operator
/// with its position variable (None for an identity gauge).
pub fn check_tensor_intertwining(
    g1: &Packet,
    g2: &Packet,
    u1: &GridState,
    u2: &GridState,
    map: impl Fn(f64, f64) -> (f64, f64),
    gauge: Option<(&DiffOp, &Var)>,
) -> Result<f64> {
    let hbar = u1.hbar();
    let mut w = wigner_product(u1, u2)?;

    if let Some((s, xvar)) = gauge {
        let mut orders: Vec<u32> = Vec::new();
        let mut coeffs = Vec::new();
        for (idx, coeff) in s.terms() {
            if idx.len() != 2 {
                return Err(CliError::Scenario(
                    "gauge operator must live on a one-dimensional phase frame".into(),
                ));
            }
            if idx[0] != 0 {
                return Err(CliError::Scenario(
                    "gauge operator with x-derivatives cannot act as a p-multiplier".into(),
                ));
            }
            orders.push(u32::from(idx[1]));
            coeffs.push(coeff);
        }
        let mut env = EvalEnv::new(hbar);
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(w.nx());
        for &x in w.xs() {
            env.set(xvar, x);
            let row: std::result::Result<Vec<Complex64>, moyal::AlgError> =
                coeffs.iter().map(|c| c.eval_f64(&env)).collect();
            rows.push(row.map_err(CliError::Algebra)?);
        }
        w.apply_p_multiplier(|i, k| {
            orders
                .iter()
                .zip(&rows[i])
                .map(|(&b, c)| c * Complex64::new(0.0, k).powu(b))
                .sum()
        });
    }

    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..w.nx() {
        for j in 0..w.np() {
            let (x, p) = map(w.xs()[i], w.ps()[j]);
            let lhs = cross_wigner_gauss(g1, g2, x, p, hbar);
            num += (lhs - w.value(i, j)).norm_sqr();
            den += lhs.norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(CliError::Numeric("vanishing reference tensor".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::{apply_linear, apply_ut1, CurveData};
    use moyal::cantrans::{build_transformation, GeneratingFunction};
    use moyal::expr::parse_expr;
    use moyal::gauge::{shear_gauge_generator, GaugeIso};

    fn packets() -> (Packet, Packet) {
        (Packet::new(0.0, 0.0, 1.0), Packet::new(0.3, -0.2, 1.0))
    }

    #[test]
    fn identity_map_reproduces_the_closed_form_tensor() {
        let (g1, g2) = packets();
        let f1 = GridState::gaussian(14.0, 512, 1.0, &g1).unwrap();
        let f2 = GridState::gaussian(14.0, 512, 1.0, &g2).unwrap();
        let r = check_tensor_intertwining(&g1, &g2, &f1, &f2, |x, p| (x, p), None).unwrap();
        assert!(r < 1e-10, "identity residual {r}");
    }

    #[test]
    fn linear_map_intertwines_with_identity_gauge() {
        let (a, b, c, d) = (2.0, 1.0, 1.0, 1.0);
        let (g1, g2) = packets();
        let f1 = GridState::gaussian(16.0, 1024, 1.0, &g1).unwrap();
        let f2 = GridState::gaussian(16.0, 1024, 1.0, &g2).unwrap();
        let u1 = apply_linear(&f1, a, b, d).unwrap();
        let u2 = apply_linear(&f2, a, b, d).unwrap();
        let r = check_tensor_intertwining(
            &g1,
            &g2,
            &u1,
            &u2,
            |xp, pp| (d * xp - b * pp, -c * xp + a * pp),
            None,
        )
        .unwrap();
        assert!(r < 1e-8, "linear residual {r}");
    }

    #[test]
    fn cubic_shear_intertwines_through_its_gauge_operator() {
        // T1 with phi1 = u/a, phi2 = u^3 at a = 3/25: the gauge operator
        // exp((hbar^2/4) d_p^3) is needed for the identity to close.
        let a = 0.12;
        let (l, m) = (10.0, 2048);
        let t = build_transformation(&GeneratingFunction::F1 {
            phi1: parse_expr("25/3*u").unwrap(),
            phi2: parse_expr("u^3").unwrap(),
            phi1_inverse: Some(parse_expr("3/25*u").unwrap()),
        })
        .unwrap();
        let generator = shear_gauge_generator(&parse_expr("u^3").unwrap(), 4).unwrap();
        let iso = GaugeIso::from_exponent(&t, &generator, 4).unwrap();

        let (g1, g2) = packets();
        let f1 = GridState::gaussian(l, m, 1.0, &g1).unwrap();
        let f2 = GridState::gaussian(l, m, 1.0, &g2).unwrap();
        let curve = CurveData::from_fns(l, m, |x| x / a, |_| 1.0 / a, |x| x * x * x);
        let u1 = apply_ut1(&f1, &curve).unwrap();
        let u2 = apply_ut1(&f2, &curve).unwrap();

        let xvar = t.primed()[0].clone();
        let r = check_tensor_intertwining(
            &g1,
            &g2,
            &u1,
            &u2,
            |xp, pp| (-a * (pp + 3.0 * xp * xp), xp / a),
            Some((iso.s(), &xvar)),
        )
        .unwrap();
        assert!(r < 1e-6, "cubic shear residual {r}");
    }
}

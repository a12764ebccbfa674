//! The gauge `φ` that turns the second-order part of `L` into a signed
//! weighted dissipation, its closed form, the change of unknown `v = u/φ`,
//! and the coefficient shift produced by conjugating with `⟨D⟩^s`.
//!
//! With `ρ = ∂xφ/φ` the gauge solves `6 a3 ∂xφ = (3 ∂x a3 − c_δ⟨x⟩^{-2δ} − 2 a2) φ`,
//! so `ρ = P / (6 a3)` with `P = 3 a3' − c_δ w − 2 a2`, `w = ⟨x⟩^{-2δ}`.
//! Higher derivatives follow from `φ''/φ = ρ' + ρ²` and
//! `φ'''/φ = ρ'' + 3ρρ' + ρ³`.

use serde::{Deserialize, Serialize};

use crate::coefficients::{check_nondegeneracy, Coefficient, CoefficientSet, Window};
use crate::error::{Error, Result};
use crate::grid::{cumulative_integral, ensure_same_grid, japanese, Field, SpatialGrid};

pub const DEFAULT_DELTA: f64 = 0.75;

/// `⟨x⟩^{-2δ}` and its first two derivatives.
pub(crate) fn decay_weight(x: f64, delta: f64) -> [f64; 3] {
    let r = 1.0 + x * x;
    [
        r.powf(-delta),
        -2.0 * delta * x * r.powf(-delta - 1.0),
        -2.0 * delta * r.powf(-delta - 1.0) + 4.0 * delta * (delta + 1.0) * x * x * r.powf(-delta - 2.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeProfile {
    pub grid: SpatialGrid,
    pub t: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub d3phi: Vec<f64>,
    pub dtphi: Vec<f64>,
    /// `∂xφ/φ` and its first two derivatives.
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
    pub d2rho: Vec<f64>,
    pub delta: f64,
    pub cdelta: u8,
    pub min_phi: f64,
    pub max_phi: f64,
}

pub fn build_gauge(
    coeffs: &CoefficientSet,
    t: f64,
    grid: &SpatialGrid,
    delta: f64,
    cdelta: u8,
) -> Result<GaugeProfile> {
    if delta.is_nan() || delta <= 0.5 {
        return Err(Error::InvalidParameter(format!("gauge delta must exceed 1/2, got {delta}")));
    }
    if cdelta > 1 {
        return Err(Error::InvalidParameter(format!("c_delta must be 0 or 1, got {cdelta}")));
    }
    check_nondegeneracy(
        coeffs,
        Window::at_time((-grid.half_length(), grid.half_length() - grid.spacing()), t),
        (1.0 / grid.spacing()).max(8.0),
    )?;
    let c = cdelta as f64;
    let n = grid.len();
    let (a2, a3) = (coeffs.a(2), coeffs.a(3));
    let mut out = GaugeProfile {
        grid: *grid,
        t,
        phi: vec![0.0; n],
        dphi: vec![0.0; n],
        d2phi: vec![0.0; n],
        d3phi: vec![0.0; n],
        dtphi: vec![0.0; n],
        rho: vec![0.0; n],
        drho: vec![0.0; n],
        d2rho: vec![0.0; n],
        delta,
        cdelta,
        min_phi: 0.0,
        max_phi: 0.0,
    };
    let mut exponent = vec![0.0; n];
    let mut dt_integrand = vec![0.0; n];
    let mut half_log = vec![0.0; n];
    let a3_origin = a3.value(t, 0.0);
    let dta3_origin = a3.dt(t, 0.0);
    for i in 0..n {
        let x = grid.x(i);
        let b = [a3.value(t, x), a3.dx(t, x, 1), a3.dx(t, x, 2), a3.dx(t, x, 3)];
        let d = [a2.value(t, x), a2.dx(t, x, 1), a2.dx(t, x, 2)];
        let w = decay_weight(x, delta);
        let p = 3.0 * b[1] - c * w[0] - 2.0 * d[0];
        let p1 = 3.0 * b[2] - c * w[1] - 2.0 * d[1];
        let p2 = 3.0 * b[3] - c * w[2] - 2.0 * d[2];
        let rho = p / (6.0 * b[0]);
        let q = p1 * b[0] - p * b[1];
        let drho = q / (6.0 * b[0] * b[0]);
        let d2rho = ((p2 * b[0] - p * b[2]) * b[0] - 2.0 * b[1] * q) / (6.0 * b[0].powi(3));
        out.rho[i] = rho;
        out.drho[i] = drho;
        out.d2rho[i] = d2rho;
        exponent[i] = (2.0 * d[0] + c * w[0]) / (6.0 * b[0]);
        half_log[i] = 0.5 * (b[0] / a3_origin).ln();
        let (dta3, dta2) = (a3.dt(t, x), a2.dt(t, x));
        dt_integrand[i] = (dta2 * b[0] - d[0] * dta3) / (3.0 * b[0] * b[0])
            - c * w[0] * dta3 / (6.0 * b[0] * b[0]);
    }
    let integral = cumulative_integral(&exponent, grid)?;
    let dt_integral = cumulative_integral(&dt_integrand, grid)?;
    for i in 0..n {
        let x = grid.x(i);
        let phi = if i == grid.origin_index() {
            1.0
        } else {
            (half_log[i] - integral[i]).exp()
        };
        let (r, r1, r2) = (out.rho[i], out.drho[i], out.d2rho[i]);
        out.phi[i] = phi;
        out.dphi[i] = r * phi;
        out.d2phi[i] = (r1 + r * r) * phi;
        out.d3phi[i] = (r2 + 3.0 * r * r1 + r.powi(3)) * phi;
        let dt_log = 0.5 * (a3.dt(t, x) / a3.value(t, x) - dta3_origin / a3_origin) - dt_integral[i];
        out.dtphi[i] = dt_log * phi;
    }
    out.min_phi = out.phi.iter().cloned().fold(f64::INFINITY, f64::min);
    out.max_phi = out.phi.iter().cloned().fold(0.0, f64::max);
    Ok(out)
}

/// `max|6 a3 ∂xφ − (3 ∂x a3 − c_δ w − 2 a2) φ| / max(|φ| (|a2| + |∂x a3| + 1))`.
pub fn gauge_ode_residual(g: &GaugeProfile, coeffs: &CoefficientSet) -> f64 {
    let c = g.cdelta as f64;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 0..g.grid.len() {
        let x = g.grid.x(i);
        let a2 = coeffs.a(2).value(g.t, x);
        let a3 = coeffs.a(3).value(g.t, x);
        let da3 = coeffs.a(3).dx(g.t, x, 1);
        let w = japanese(x).powf(-2.0 * g.delta);
        let r = 6.0 * a3 * g.dphi[i] - (3.0 * da3 - c * w - 2.0 * a2) * g.phi[i];
        worst = worst.max(r.abs());
        scale = scale.max(g.phi[i].abs() * (a2.abs() + da3.abs() + 1.0));
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `v = u / φ`.
    Forward,
    /// `u = φ v`.
    Inverse,
}

pub fn apply_gauge(u: &Field, g: &GaugeProfile, direction: Direction) -> Result<Field> {
    ensure_same_grid(&u.grid, &g.grid)?;
    let values = u
        .values
        .iter()
        .zip(&g.phi)
        .map(|(v, p)| match direction {
            Direction::Forward => v / p,
            Direction::Inverse => v * p,
        })
        .collect();
    Ok(Field {
        grid: u.grid,
        values,
        t: u.t,
    })
}

/// Coefficients of `L_φ = φ^{-1} (∂t + L) φ − ∂t`, sampled on the gauge grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugedOperator {
    /// `[A0, A1, A2, A3]`.
    pub a: [Vec<f64>; 4],
    /// `A0 − ½(∂x A1 − ∂x² A2 + ∂x³ A3)`.
    pub b0: Vec<f64>,
}

pub fn gauged_operator(g: &GaugeProfile, coeffs: &CoefficientSet) -> GaugedOperator {
    let n = g.grid.len();
    let c = g.cdelta as f64;
    let t = g.t;
    let mut a: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut b0 = vec![0.0; n];
    for i in 0..n {
        let x = g.grid.x(i);
        let e = |j: usize, m: usize| coeffs.eval(j, t, x, m, 0);
        let (r, r1, r2) = (g.rho[i], g.drho[i], g.d2rho[i]);
        let w = decay_weight(x, g.delta);
        let phi2 = r1 + r * r;
        let phi3 = r2 + 3.0 * r * r1 + r.powi(3);
        a[3][i] = e(3, 0);
        a[2][i] = e(2, 0) + 3.0 * e(3, 0) * r;
        a[1][i] = e(1, 0) + 2.0 * e(2, 0) * r + 3.0 * e(3, 0) * phi2;
        a[0][i] = e(0, 0)
            + g.dtphi[i] / g.phi[i]
            + e(1, 0) * r
            + e(2, 0) * phi2
            + e(3, 0) * phi3;
        let da1 = e(1, 1)
            + 2.0 * e(2, 1) * r
            + 2.0 * e(2, 0) * r1
            + 3.0 * e(3, 1) * phi2
            + 3.0 * e(3, 0) * (r2 + 2.0 * r * r1);
        // (a3 ρ)'' = P''/6.
        let d2a2 = e(2, 2) + 0.5 * (3.0 * e(3, 3) - c * w[2] - 2.0 * e(2, 2));
        b0[i] = a[0][i] - 0.5 * (da1 - d2a2 + e(3, 3));
    }
    GaugedOperator { a, b0 }
}

/// Adds the first-order terms generated by `⟨D⟩^s L ⟨D⟩^{-s}`:
/// `a2 += s ∂x a3`, `a1 += s ∂x a2 + s(s−1)/2 ∂x² a3`.
pub fn hs_corrected_coefficients(coeffs: &CoefficientSet, s: f64) -> CoefficientSet {
    if s == 0.0 {
        return coeffs.clone();
    }
    let (a3, a2, a1) = (coeffs.a(3).clone(), coeffs.a(2).clone(), coeffs.a(1).clone());
    let new_a2 = Coefficient::combination(
        format!("{} + {s}·a3'", a2.label()),
        vec![(1.0, a2.clone(), 0), (s, a3.clone(), 1)],
    );
    let new_a1 = Coefficient::combination(
        format!("{} + {s}·a2' + {}·a3''", a1.label(), s * (s - 1.0) / 2.0),
        vec![(1.0, a1, 0), (s, a2, 1), (s * (s - 1.0) / 2.0, a3, 2)],
    );
    let mut out = coeffs.replace(2, new_a2).replace(1, new_a1);
    out.name = format!("{}+hs({s})", coeffs.name);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{mizohata_integral, preset, ProfileSpec};
    use crate::grid::{derivative, l2_norm};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn set(a3: Coefficient, a2: Coefficient) -> CoefficientSet {
        CoefficientSet::new("t", a3, a2, Coefficient::zero(), Coefficient::zero())
    }

    fn sin_plus_two() -> Coefficient {
        Coefficient::trig(2.0, 1.0, 1.0, 0.0, 0.0)
    }

    #[test]
    fn closed_form_examples() {
        let g = SpatialGrid::new(10.0, 2048).unwrap();
        let flat = build_gauge(&set(Coefficient::constant(1.0), Coefficient::zero()), 0.0, &g, 0.75, 0).unwrap();
        assert!(flat.phi.iter().all(|p| *p == 1.0));
        assert_eq!(flat.min_phi, 1.0);

        let cos = set(Coefficient::constant(1.0), ProfileSpec::cos(3.0).build().unwrap());
        let p = build_gauge(&cos, 0.0, &g, 0.75, 0).unwrap();
        let h = g.spacing();
        for i in 0..g.len() {
            assert_abs_diff_eq!(p.phi[i], (-g.x(i).sin()).exp(), epsilon = h * h);
        }

        let var = set(sin_plus_two(), Coefficient::zero());
        let p = build_gauge(&var, 0.0, &g, 0.75, 0).unwrap();
        for i in 0..g.len() {
            let x = g.x(i);
            assert_abs_diff_eq!(p.phi[i], ((2.0 + x.sin()) / 2.0).sqrt(), epsilon = 1e-14);
        }
        assert_eq!(p.phi[g.origin_index()], 1.0);
    }

    #[test]
    fn analytic_derivatives_agree_with_stencils() {
        let g = SpatialGrid::new(10.0, 2048).unwrap();
        let coeffs = preset("drifting-dispersion").unwrap().build().unwrap();
        let p = build_gauge(&coeffs, 0.3, &g, 0.75, 1).unwrap();
        let field = Field::from_values(
            g,
            p.phi.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
            0.3,
        )
        .unwrap();
        // φ is not periodic; compare away from the wrap.
        for (order, analytic) in [(1, &p.dphi), (2, &p.d2phi), (3, &p.d3phi)] {
            let d = derivative(&field, order).unwrap();
            let err = (200..g.len() - 200)
                .map(|i| (d.values[i].re - analytic[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "order {order}: {err}");
        }
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let g = SpatialGrid::new(10.0, 1024).unwrap();
        let coeffs = preset("drifting-dispersion").unwrap().build().unwrap();
        let (t, e) = (0.4, 1e-4);
        let p = build_gauge(&coeffs, t, &g, 0.75, 1).unwrap();
        let lo = build_gauge(&coeffs, t - e, &g, 0.75, 1).unwrap();
        let hi = build_gauge(&coeffs, t + e, &g, 0.75, 1).unwrap();
        for i in (0..g.len()).step_by(37) {
            let fd = (hi.phi[i] - lo.phi[i]) / (2.0 * e);
            assert_abs_diff_eq!(p.dtphi[i], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn residual_examples() {
        let g = SpatialGrid::new(20.0, 2048).unwrap();
        let flat = set(Coefficient::constant(1.0), Coefficient::zero());
        let p = build_gauge(&flat, 0.0, &g, 0.75, 0).unwrap();
        assert_eq!(gauge_ode_residual(&p, &flat), 0.0);
        for p in crate::coefficients::presets() {
            let c = p.build().unwrap();
            let gauge = build_gauge(&c, 0.0, &g, 0.75, 1).unwrap();
            assert!(gauge_ode_residual(&gauge, &c) < 1e-8, "{}", p.name);
        }
        let trig = preset("trig-diffusion").unwrap().build().unwrap();
        let mut p = build_gauge(&trig, 0.0, &g, 0.75, 1).unwrap();
        p.phi[g.origin_index()] += 0.1;
        assert!(gauge_ode_residual(&p, &trig) > 1e-3);
    }

    #[test]
    fn cdelta_monotonicity() {
        let g = SpatialGrid::new(20.0, 1024).unwrap();
        let c = preset("trig-diffusion").unwrap().build().unwrap();
        let p0 = build_gauge(&c, 0.0, &g, 0.75, 0).unwrap();
        let p1 = build_gauge(&c, 0.0, &g, 0.75, 1).unwrap();
        for i in 0..g.len() {
            let x = g.x(i);
            if x > 0.0 {
                assert!(p1.phi[i] <= p0.phi[i]);
            } else if x < 0.0 {
                assert!(p1.phi[i] >= p0.phi[i]);
            }
        }
    }

    #[test]
    fn apply_gauge_round_trip_and_bounds() {
        let g = SpatialGrid::new(20.0, 512).unwrap();
        let c = preset("trig-diffusion").unwrap().build().unwrap();
        let p = build_gauge(&c, 0.0, &g, 0.75, 1).unwrap();
        let u = Field::from_fn(g, 0.0, |x| Complex64::new((-x * x / 8.0).exp(), x.sin()));
        let v = apply_gauge(&u, &p, Direction::Forward).unwrap();
        let back = apply_gauge(&v, &p, Direction::Inverse).unwrap();
        for (a, b) in back.values.iter().zip(&u.values) {
            assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-300));
        }
        let (nu, nv) = (l2_norm(&u), l2_norm(&v));
        assert!(nv >= nu / p.max_phi && nv <= nu / p.min_phi);
        let flat = build_gauge(&set(Coefficient::constant(1.0), Coefficient::zero()), 0.0, &g, 0.75, 0).unwrap();
        assert_eq!(apply_gauge(&u, &flat, Direction::Forward).unwrap().values, u.values);
        let other = SpatialGrid::new(10.0, 512).unwrap();
        assert!(apply_gauge(&Field::zeros(other, 0.0), &p, Direction::Forward).is_err());
    }

    #[test]
    fn hs_correction_examples() {
        let var = set(sin_plus_two(), Coefficient::zero());
        let same = hs_corrected_coefficients(&var, 0.0);
        assert_eq!(same.a(2).value(0.0, 0.3), 0.0);
        let one = hs_corrected_coefficients(&var, 1.0);
        for x in [-2.0, 0.1, 1.3] {
            assert_abs_diff_eq!(one.a(2).value(0.0, x), f64::cos(x), epsilon = 1e-15);
            assert_eq!(one.a(1).value(0.0, x), 0.0);
        }
        let drift = set(Coefficient::constant(1.0), Coefficient::rational(1.0, 2.0, true));
        let two = hs_corrected_coefficients(&drift, 2.0);
        for x in [-2.0, 0.1, 1.3] {
            assert_abs_diff_eq!(two.a(2).value(0.0, x) - drift.a(2).value(0.0, x), 0.0);
            assert_abs_diff_eq!(two.a(1).value(0.0, x), 2.0 * drift.a(2).dx(0.0, x, 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn hs_correction_round_trip() {
        let c = preset("drifting-dispersion").unwrap().build().unwrap();
        let s = 1.7;
        let back = hs_corrected_coefficients(&hs_corrected_coefficients(&c, s), -s);
        for x in [-3.0, -0.5, 0.0, 2.2] {
            for m in 0..3 {
                assert_abs_diff_eq!(back.a(2).dx(0.2, x, m), c.a(2).dx(0.2, x, m), epsilon = 1e-15);
                assert_abs_diff_eq!(back.a(1).dx(0.2, x, m), c.a(1).dx(0.2, x, m), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn corrected_a2_satisfies_weak_diffusion_identity() {
        let g = SpatialGrid::new(20.0, 2048).unwrap();
        for (sign, s) in [(1.0, 1.5), (-1.0, 0.5)] {
            let a3 = Coefficient::trig(2.0 * sign, sign, 1.0, 0.0, 0.0);
            let c = set(a3, Coefficient::zero());
            let m = mizohata_integral(&hs_corrected_coefficients(&c, s), 0.0, &g).unwrap();
            let h = g.spacing();
            for i in 0..g.len() {
                let x = g.x(i);
                let expected = s * sign * ((2.0 + x.sin()) / 2.0).ln();
                assert_abs_diff_eq!(m[i], expected, epsilon = 2.0 * h * h);
            }
        }
    }
}

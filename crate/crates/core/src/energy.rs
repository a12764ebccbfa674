//! Integration-by-parts energy identity
//! `Re(Lv, v) = ((−a2 + 3/2 ∂x a3) ∂x v, ∂x v) + (b0 v, v)` with
//! `b0 = a0 − ½(∂x a1 − ∂x² a2 + ∂x³ a3)`, checked by quadrature, and the
//! signed gradient term of the gauged equation.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::gauge::{gauged_operator, GaugeProfile};
use crate::grid::{
    apply_stencil, ensure_same_grid, inner, japanese, l2_norm, spectral_fraction_above,
    weighted_quadratic, Field, SpatialGrid,
};
use crate::solver::apply_l;

/// Spectral energy allowed above two thirds of the Nyquist wavenumber.
pub const BANDWIDTH_LIMIT: f64 = 1e-8;

/// Relative size of the mismatch denominator floor against `‖v‖·‖Lv‖`.
pub const MISMATCH_FLOOR: f64 = 1e-6;

/// `b0` sampled on the grid.
pub fn zeroth_order_coefficient(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let x = grid.x(i);
            coeffs.eval(0, t, x, 0, 0)
                - 0.5 * (coeffs.eval(1, t, x, 1, 0) - coeffs.eval(2, t, x, 2, 0) + coeffs.eval(3, t, x, 3, 0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `Re(Lv, v)`.
    pub lhs: f64,
    pub rhs_grad_term: f64,
    pub rhs_zero_term: f64,
    pub mismatch: f64,
}

fn check_bandwidth(v: &Field) -> Result<()> {
    let high = spectral_fraction_above(v, 2.0 / 3.0);
    if high > BANDWIDTH_LIMIT {
        return Err(Error::Resolution(format!(
            "spectral energy fraction {high:.3e} above 2/3 Nyquist exceeds {BANDWIDTH_LIMIT:.0e}"
        )));
    }
    Ok(())
}

pub fn energy_identity_check(v: &Field, coeffs: &CoefficientSet, t: f64) -> Result<EnergyReport> {
    check_bandwidth(v)?;
    let g = v.grid;
    let h = g.spacing();
    let lv = apply_l(v, coeffs, t);
    let lhs = inner(&lv, v)?.re;
    let dv = apply_stencil(&v.values, 1, h);
    let grad_weight: Vec<f64> = (0..g.len())
        .map(|i| {
            let x = g.x(i);
            -coeffs.eval(2, t, x, 0, 0) + 1.5 * coeffs.eval(3, t, x, 1, 0)
        })
        .collect();
    let rhs_grad_term = weighted_quadratic(&grad_weight, &dv, h);
    let rhs_zero_term = weighted_quadratic(&zeroth_order_coefficient(coeffs, t, &g), &v.values, h);
    let floor = MISMATCH_FLOOR * l2_norm(v) * l2_norm(&lv);
    let scale = lhs.abs().max(rhs_grad_term.abs()).max(rhs_zero_term.abs()).max(floor);
    let diff = (lhs - rhs_grad_term - rhs_zero_term).abs();
    Ok(EnergyReport {
        t,
        lhs,
        rhs_grad_term,
        rhs_zero_term,
        mismatch: if scale > 0.0 { diff / scale } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub t: f64,
    /// `2 a2 + 6 a3 ∂xφ/φ − 3 ∂x a3`.
    pub bracket: Vec<f64>,
    /// `(bracket ∂x v, ∂x v)`.
    pub gradient_term: f64,
    /// `(b̃0 v, v)` for the gauged operator.
    pub zero_term: f64,
    /// `d/dt ‖v‖² = (bracket ∂x v, ∂x v) − 2 (b̃0 v, v)`.
    pub rate: f64,
    pub b0_sup: f64,
    /// `2 ‖b̃0‖_∞ ‖v‖²`.
    pub bound: f64,
    /// `max |bracket + c_δ ⟨x⟩^{-2δ}|`.
    pub bracket_error: f64,
}

pub fn gauged_dissipation_rate(
    v: &Field,
    coeffs: &CoefficientSet,
    g: &GaugeProfile,
    t: f64,
) -> Result<DissipationReport> {
    ensure_same_grid(&v.grid, &g.grid)?;
    if (g.t - t).abs() > 1e-12 * (1.0 + t.abs()) {
        return Err(Error::GridMismatch(format!("gauge built at t = {}, requested t = {t}", g.t)));
    }
    let grid = v.grid;
    let h = grid.spacing();
    let c = g.cdelta as f64;
    let mut bracket = vec![0.0; grid.len()];
    let mut bracket_error = 0.0f64;
    for (i, b) in bracket.iter_mut().enumerate() {
        let x = grid.x(i);
        *b = 2.0 * coeffs.eval(2, t, x, 0, 0) + 6.0 * coeffs.eval(3, t, x, 0, 0) * g.dphi[i] / g.phi[i]
            - 3.0 * coeffs.eval(3, t, x, 1, 0);
        bracket_error = bracket_error.max((*b + c * japanese(x).powf(-2.0 * g.delta)).abs());
    }
    let op = gauged_operator(g, coeffs);
    let dv = apply_stencil(&v.values, 1, h);
    let gradient_term = weighted_quadratic(&bracket, &dv, h);
    let zero_term = weighted_quadratic(&op.b0, &v.values, h);
    let b0_sup = op.b0.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    Ok(DissipationReport {
        t,
        rate: gradient_term - 2.0 * zero_term,
        bound: 2.0 * b0_sup * l2_norm(v).powi(2),
        bracket,
        gradient_term,
        zero_term,
        b0_sup,
        bracket_error,
    })
}

//! Geometric-optics wave packets `u = a3^{1/3} e^{i(yξ + tξ³)} A(x) ψ(y + 3ξ²t)`
//! with amplitude `A(x) = exp((1/3) ∫_x^{x0} a2/a3)`, their predicted growth,
//! and the end-to-end ill-posedness experiment.
//!
//! Travel distances are measured in the straightened coordinate `y`, which
//! coincides with `x` when `a3 ≡ 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::{find_witness, CoefficientSet, Witness};
use crate::error::{Error, Result};
use crate::grid::{l2_norm, Field, SpatialGrid};
use crate::solver::{apply_l, solve_ivp, NormRecord, SolveConfig, SolveStatus};
use crate::transform::{gauss_legendre, space_reflection, straightening_map};

/// Minimum number of grid points across the support `[x0 − η, x0 + η]`.
pub const MIN_POINTS_ACROSS: f64 = 16.0;
/// Largest admissible packet width.
pub const ETA_CAP: f64 = 0.3;
/// Panel width of the composite quadratures along rays.
const PANEL: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    /// `exp(−1/(1 − s²))` on `(−1, 1)`.
    #[default]
    Exponential,
}

impl BumpKind {
    fn profile(self, s: f64) -> f64 {
        match self {
            BumpKind::Exponential => {
                if s.abs() < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_resolution(eta: f64, grid: &SpatialGrid) -> Result<()> {
    let across = 2.0 * eta / grid.spacing();
    if across < MIN_POINTS_ACROSS {
        return Err(Error::Resolution(format!(
            "bump of width η = {eta} spans {across:.1} points; at least {MIN_POINTS_ACROSS} are required"
        )));
    }
    Ok(())
}

/// Normalizing constant making the discrete `L²` norm of `ψ0((x − x0)/η)` one.
fn bump_constant(kind: BumpKind, eta: f64, x0: f64, grid: &SpatialGrid) -> f64 {
    let h = grid.spacing();
    let mass: f64 = (0..grid.len())
        .map(|i| kind.profile((grid.x(i) - x0) / eta).powi(2))
        .sum::<f64>()
        * h;
    1.0 / mass.sqrt()
}

/// `ψ(x) = c ψ0((x − x0)/η)` with unit discrete `L²` norm.
pub fn bump(eta: f64, x0: f64, grid: &SpatialGrid) -> Result<Field> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("η must lie in (0, 1], got {eta}")));
    }
    check_resolution(eta, grid)?;
    let kind = BumpKind::Exponential;
    let c = bump_constant(kind, eta, x0, grid);
    Ok(Field::from_real_fn(*grid, 0.0, |x| c * kind.profile((x - x0) / eta)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PacketSpec {
    pub x0: f64,
    pub xi: f64,
    pub eta: f64,
    /// Travel distance `N` in the straightened coordinate.
    #[serde(rename = "N")]
    pub travel: f64,
    #[serde(default)]
    pub bump_kind: BumpKind,
}

impl PacketSpec {
    pub fn new(x0: f64, xi: f64, eta: f64, travel: f64) -> Self {
        Self {
            x0,
            xi,
            eta,
            travel,
            bump_kind: BumpKind::Exponential,
        }
    }

    /// `t_n = N / (3ξ²)`.
    pub fn horizon(&self) -> f64 {
        self.travel / (3.0 * self.xi * self.xi)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.xi.is_finite() && self.xi >= 1.0) {
            return bad(format!("ξ must be at least 1, got {}", self.xi));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("η must lie in (0, 1], got {}", self.eta));
        }
        if !(self.travel.is_finite() && self.travel > 0.0) {
            return bad(format!("travel distance N must be positive, got {}", self.travel));
        }
        if !self.x0.is_finite() {
            return bad("packet anchor x0 must be finite".into());
        }
        Ok(())
    }

    /// `[x_end − 1, x0 + 1]` with `x_end` the end of the ray after distance `N`.
    pub fn support(&self, coeffs: &CoefficientSet) -> Result<(f64, f64)> {
        let ray = trace_ray(coeffs, 0.0, self.x0, self.travel)?;
        Ok((ray.end - 1.0, self.x0 + 1.0))
    }

    /// Checks that the swept support stays `margin · 2L` away from the ends.
    pub fn check_inside(&self, coeffs: &CoefficientSet, grid: &SpatialGrid, margin: f64) -> Result<()> {
        let (a, b) = self.support(coeffs)?;
        if !grid.contains_with_margin(a, b, margin) {
            return Err(Error::Window(format!(
                "packet support [{a}, {b}] leaves the safe interior of [-{L}, {L}) at margin {margin}",
                L = grid.half_length()
            )));
        }
        Ok(())
    }
}

/// A ray traced left from `x0` over a straightened distance.
#[derive(Debug, Clone, Copy)]
struct Ray {
    end: f64,
    /// `∫_end^{x0} a2/a3`.
    exponent: f64,
}

fn require_positive(coeffs: &CoefficientSet) -> Result<()> {
    if coeffs.dispersion_sign() < 0.0 {
        return Err(Error::InvalidParameter(
            "packets require a3 > 0; apply space_reflection first".into(),
        ));
    }
    Ok(())
}

/// Marches left from `x0` until `∫_end^{x0} a3^{-1/3} = distance`.
fn trace_ray(coeffs: &CoefficientSet, t: f64, x0: f64, distance: f64) -> Result<Ray> {
    require_positive(coeffs)?;
    let a3 = coeffs.a(3);
    let a2 = coeffs.a(2);
    let speed = |x: f64| {
        let v = a3.value(t, x);
        if v > 0.0 {
            Ok(v.powf(-1.0 / 3.0))
        } else {
            Err(Error::DegenerateDispersion {
                t,
                x,
                value: v,
                reason: "a3 must stay positive along the ray",
            })
        }
    };
    let slowness = |x: f64| a3.value(t, x).powf(-1.0 / 3.0);
    let ratio = |x: f64| a2.value(t, x) / a3.value(t, x);
    let mut x = x0;
    let mut covered = 0.0;
    let mut exponent = 0.0;
    if distance <= 0.0 {
        return Ok(Ray { end: x0, exponent: 0.0 });
    }
    for _ in 0..100_000_000usize {
        speed(x)?;
        let step = gauss_legendre(&slowness, x - PANEL, x);
        if covered + step >= distance {
            let rest = distance - covered;
            // Bisection on the partial panel; the integrand is positive.
            let (mut lo, mut hi) = (x - PANEL, x);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if gauss_legendre(&slowness, mid, x) > rest {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let end = 0.5 * (lo + hi);
            exponent += gauss_legendre(&ratio, end, x);
            return Ok(Ray { end, exponent });
        }
        covered += step;
        exponent += gauss_legendre(&ratio, x - PANEL, x);
        x -= PANEL;
    }
    Err(Error::Window("ray tracing did not terminate".into()))
}

/// `∫_0^{x} f` by composite Gauss–Legendre panels.
fn integrate_from_origin(f: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let panels = (x.abs() / PANEL).ceil().max(1.0) as usize;
    let w = x / panels as f64;
    (0..panels).map(|k| gauss_legendre(f, k as f64 * w, (k + 1) as f64 * w)).sum()
}

/// Packet field at time `t`.
pub fn build_packet(spec: &PacketSpec, coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<Field> {
    spec.validate()?;
    require_positive(coeffs)?;
    check_resolution(spec.eta, grid)?;
    spec.check_inside(coeffs, grid, 0.0)?;
    let vc = straightening_map(coeffs, t, grid)?;
    let a3_0 = coeffs.a(3);
    let y0 = integrate_from_origin(&|x: f64| a3_0.value(0.0, x).powf(-1.0 / 3.0), spec.x0);
    let ratio = |x: f64| coeffs.a(2).value(t, x) / coeffs.a(3).value(t, x);
    let m0 = integrate_from_origin(&ratio, spec.x0);
    let m = crate::transform::cumulative_gauss(&ratio, grid);
    let c = bump_constant(spec.bump_kind, spec.eta, spec.x0, grid);
    let shift = 3.0 * spec.xi * spec.xi * t;
    let values = (0..grid.len())
        .map(|i| {
            let y = vc.y_of_x[i];
            let envelope = spec.bump_kind.profile((y + shift - y0) / spec.eta);
            if envelope == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let amplitude = ((m0 - m[i]) / 3.0).exp() * c * envelope / vc.dydx[i];
            let phase = y * spec.xi + t * spec.xi.powi(3);
            Complex64::from_polar(amplitude, phase)
        })
        .collect();
    Ok(Field { grid: *grid, values, t })
}

/// `exp((1/3) ∫ a2/a3)` along the ray of straightened length `3ξ²t` ending at `x0`.
pub fn predicted_growth(spec: &PacketSpec, coeffs: &CoefficientSet, t: f64) -> Result<f64> {
    growth_with_frozen_coefficients(spec, coeffs, t, t)
}

/// Predicted growth at time `t` with the coefficients evaluated at `t_coeff`.
pub fn growth_with_frozen_coefficients(
    spec: &PacketSpec,
    coeffs: &CoefficientSet,
    t: f64,
    t_coeff: f64,
) -> Result<f64> {
    spec.validate()?;
    let distance = 3.0 * spec.xi * spec.xi * t;
    if t < 0.0 || distance > spec.travel * (1.0 + 1e-12) {
        return Err(Error::Window(format!(
            "3ξ²t = {distance} exceeds the analysed travel distance N = {}",
            spec.travel
        )));
    }
    Ok((trace_ray(coeffs, t_coeff, spec.x0, distance)?.exponent / 3.0).exp())
}

/// Largest `η ≤ 0.3` with `η · sup|c2| ≤ tolerance` on `[x0 − N − 1, x0 + 1]`.
pub fn eta_selection(coeffs: &CoefficientSet, x0: f64, travel: f64, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0 && tolerance <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "η tolerance must lie in (0, 0.5], got {tolerance}"
        )));
    }
    let (a, b) = (x0 - travel - 1.0, x0 + 1.0);
    let samples = ((b - a) / PANEL).ceil() as usize;
    let sup = (0..=samples)
        .map(|k| {
            let x = a + (b - a) * k as f64 / samples as f64;
            (coeffs.a(2).value(0.0, x) * coeffs.a(3).value(0.0, x).abs().powf(-2.0 / 3.0)).abs()
        })
        .fold(0.0, f64::max);
    Ok(if sup > 0.0 {
        (tolerance / sup).min(ETA_CAP)
    } else {
        ETA_CAP
    })
}

/// Smallest `η` meeting the bump resolution requirement on `grid`.
pub fn resolution_floor(grid: &SpatialGrid) -> f64 {
    MIN_POINTS_ACROSS * grid.spacing() / 2.0
}

/// `‖(∂t + L) u_packet‖` at time `t`, with `∂t` by centered differences.
pub fn packet_residual(spec: &PacketSpec, coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<f64> {
    let tau = 1e-4 * spec.horizon();
    let ahead = build_packet(spec, coeffs, t + tau, grid)?;
    let behind = build_packet(spec, coeffs, (t - tau).max(0.0), grid)?;
    let span = t + tau - (t - tau).max(0.0);
    let now = build_packet(spec, coeffs, t, grid)?;
    let lu = apply_l(&now, coeffs, t);
    let g = Field {
        grid: *grid,
        values: ahead
            .values
            .iter()
            .zip(&behind.values)
            .zip(&lu.values)
            .map(|((a, b), l)| (a - b) / span + l)
            .collect(),
        t,
    };
    Ok(l2_norm(&g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IllposednessSettings {
    pub xi: f64,
    #[serde(default = "default_tolerance")]
    pub eta_tolerance: f64,
    /// Upper bound on the step; the experiment also enforces `dt ≤ t_n/200`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_margin")]
    pub boundary_margin: f64,
    /// Number of times at which the packet residual is sampled.
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
}

fn default_tolerance() -> f64 {
    0.1
}

fn default_margin() -> f64 {
    0.1
}

fn default_residual_samples() -> usize {
    9
}

impl Default for IllposednessSettings {
    fn default() -> Self {
        Self {
            xi: 16.0,
            eta_tolerance: default_tolerance(),
            dt: None,
            boundary_margin: default_margin(),
            residual_samples: default_residual_samples(),
        }
    }
}

/// Steps per packet horizon enforced by the experiment.
pub const STEPS_PER_HORIZON: f64 = 200.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IllposednessReport {
    pub n: u32,
    /// The problem was reflected `x ↦ −x` to make `a3` positive.
    pub reflected: bool,
    /// Witness in the coordinates of the input coefficients.
    pub witness: Option<Witness>,
    pub predicted_factor: Option<f64>,
    pub spec: Option<PacketSpec>,
    pub t_n: Option<f64>,
    pub dt: Option<f64>,
    /// `η` was raised to the grid resolution floor.
    pub eta_under_resolved: bool,
    pub observed_initial_norm: Option<f64>,
    pub observed_final_norm: Option<f64>,
    pub predicted_growth: Option<f64>,
    pub ratio_lhs: Option<f64>,
    /// `min(n, predictedGrowth / 2)`.
    pub ratio_rhs_bound: Option<f64>,
    pub verdict: bool,
    /// `∫_0^{t_n} ‖u‖ dt` against `‖u(0)‖ / n`.
    pub time_integral: Option<f64>,
    pub time_integral_reference: Option<f64>,
    /// Range of `‖u(t)‖ / (‖u(0)‖ · predicted(t))` along the run.
    pub tracking: Option<(f64, f64)>,
    /// `‖u_packet(t_n)‖ / ‖u_packet(0)‖` from the ansatz itself.
    pub ansatz_ratio: Option<f64>,
    /// `∫_0^{t_n} ‖(∂t + L) u_packet‖ dt`.
    pub ansatz_residual: Option<f64>,
    /// `|log predicted(t_n)| − |log` of the same with coefficients frozen at 0.
    pub frozen_coefficient_discrepancy: Option<f64>,
    pub status: Option<SolveStatus>,
    /// The run completed without numerical abort.
    pub valid: bool,
    pub message: String,
    #[serde(skip)]
    pub norm_history: Vec<NormRecord>,
}

impl IllposednessReport {
    fn no_witness(n: u32, reflected: bool, message: String) -> Self {
        Self {
            n,
            reflected,
            witness: None,
            predicted_factor: None,
            spec: None,
            t_n: None,
            dt: None,
            eta_under_resolved: false,
            observed_initial_norm: None,
            observed_final_norm: None,
            predicted_growth: None,
            ratio_lhs: None,
            ratio_rhs_bound: None,
            verdict: false,
            time_integral: None,
            time_integral_reference: None,
            tracking: None,
            ansatz_ratio: None,
            ansatz_residual: None,
            frozen_coefficient_discrepancy: None,
            status: None,
            valid: true,
            message,
            norm_history: Vec::new(),
        }
    }
}

/// Finds a witness with predicted factor `≥ 16n` in `search_window`, launches
/// a packet there and measures its growth up to `t_n = N/(3ξ²)`.
pub fn illposedness_experiment(
    coeffs: &CoefficientSet,
    n: u32,
    search_window: (f64, f64),
    grid: &SpatialGrid,
    settings: &IllposednessSettings,
) -> Result<IllposednessReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("target factor n must be positive".into()));
    }
    let reflected = coeffs.dispersion_sign() < 0.0;
    let (working, window) = if reflected {
        (space_reflection(coeffs), (-search_window.1, -search_window.0))
    } else {
        (coeffs.clone(), search_window)
    };
    let target = 3.0 * (16.0 * n as f64).ln();
    let Some(witness) = find_witness(&working, 0.0, window, target)? else {
        return Ok(IllposednessReport::no_witness(
            n,
            reflected,
            format!("no interval in {search_window:?} reaches predicted factor 16n = {}", 16 * n),
        ));
    };
    let a3 = working.a(3);
    let travel = {
        let (a, b) = (witness.x0 - witness.travel, witness.x0);
        let panels = ((b - a) / PANEL).ceil().max(1.0) as usize;
        let w = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                gauss_legendre(
                    &|x: f64| a3.value(0.0, x).powf(-1.0 / 3.0),
                    a + k as f64 * w,
                    a + (k + 1) as f64 * w,
                )
            })
            .sum::<f64>()
    };
    let mut eta = eta_selection(&working, witness.x0, witness.travel, settings.eta_tolerance)?;
    let floor = resolution_floor(grid);
    let eta_under_resolved = eta < floor;
    if eta_under_resolved {
        eta = floor;
    }
    let spec = PacketSpec::new(witness.x0, settings.xi, eta, travel);
    spec.validate()?;
    spec.check_inside(&working, grid, settings.boundary_margin)?;
    let t_n = spec.horizon();
    let dt = settings
        .dt
        .unwrap_or(f64::INFINITY)
        .min(t_n / STEPS_PER_HORIZON);

    let u0 = build_packet(&spec, &working, 0.0, grid)?;
    let mut config = SolveConfig::new(dt, t_n);
    config.boundary_margin = settings.boundary_margin;
    let traj = solve_ivp(&u0, &working, &config)?;

    let predicted = predicted_growth(&spec, &working, t_n)?;
    let frozen = growth_with_frozen_coefficients(&spec, &working, t_n, 0.0)?;
    let initial = traj.initial_norm;
    let final_norm = traj.final_norm();
    let ratio = final_norm / initial;
    let bound = (n as f64).min(predicted / 2.0);
    let valid = traj.status.is_completed();

    let time_integral = traj
        .norm_history
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].l2 + w[1].l2))
        .sum::<f64>();
    let tracking = traj
        .norm_history
        .iter()
        .map(|r| {
            let p = predicted_growth(&spec, &working, r.t.min(t_n))?;
            Ok(r.l2 / (initial * p))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));

    let packet_end = build_packet(&spec, &working, t_n, grid)?;
    let samples = settings.residual_samples.max(2);
    let residuals = (0..samples)
        .map(|k| packet_residual(&spec, &working, t_n * k as f64 / (samples - 1) as f64, grid))
        .collect::<Result<Vec<f64>>>()?;
    let ansatz_residual = residuals
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]) * t_n / (samples - 1) as f64)
        .sum::<f64>();

    let mut reported = witness;
    if reflected {
        reported.x0 = -reported.x0;
    }
    let message = match &traj.status {
        SolveStatus::Completed => format!("ratio {ratio:.4} against threshold {bound:.4}"),
        SolveStatus::BoundaryContamination { t, fraction } => format!(
            "experiment invalid: boundary mass {fraction:.3e} at t = {t:.4e} exceeds the abort limit"
        ),
        SolveStatus::NonFinite { t } => format!("experiment invalid: non-finite state at t = {t:.4e}"),
    };
    Ok(IllposednessReport {
        n,
        reflected,
        witness: Some(reported),
        predicted_factor: Some(witness.value),
        spec: Some(spec),
        t_n: Some(t_n),
        dt: Some(traj.dt),
        eta_under_resolved,
        observed_initial_norm: Some(initial),
        observed_final_norm: Some(final_norm),
        predicted_growth: Some(predicted),
        ratio_lhs: Some(ratio),
        ratio_rhs_bound: Some(bound),
        verdict: valid && ratio >= bound,
        time_integral: Some(time_integral),
        time_integral_reference: Some(initial / n as f64),
        tracking: Some(tracking),
        ansatz_ratio: Some(l2_norm(&packet_end) / l2_norm(&u0)),
        ansatz_residual: Some(ansatz_residual),
        frozen_coefficient_discrepancy: Some((predicted.ln() - frozen.ln()).abs()),
        status: Some(traj.status.clone()),
        valid,
        message,
        norm_history: traj.norm_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{preset, Coefficient};
    use crate::grid::hs_norm;
    use approx::assert_abs_diff_eq;

    fn constant_set(a3: f64, a2: f64) -> CoefficientSet {
        CoefficientSet::new(
            "c",
            Coefficient::constant(a3),
            Coefficient::constant(a2),
            Coefficient::zero(),
            Coefficient::zero(),
        )
    }

    #[test]
    fn bump_norm_support_and_resolution() {
        let g = SpatialGrid::new(8.0, 1024).unwrap();
        for (eta, x0) in [(1.0, 0.0), (0.3, 1.7), (0.25, -2.013)] {
            let b = bump(eta, x0, &g).unwrap();
            assert_abs_diff_eq!(l2_norm(&b), 1.0, epsilon = 1e-12);
            for i in 0..g.len() {
                if (g.x(i) - x0).abs() >= eta {
                    assert_eq!(b.values[i].norm(), 0.0);
                }
            }
        }
        assert!(matches!(bump(0.1, 0.0, &g), Err(Error::Resolution(_))));
    }

    #[test]
    fn bump_h1_norm_scales_like_inverse_width() {
        let g = SpatialGrid::new(8.0, 4096).unwrap();
        let c: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&eta| hs_norm(&bump(eta, 0.0, &g).unwrap(), 1.0) * eta)
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo < 1.5, "{c:?}");
    }

    #[test]
    fn airy_packet_at_time_zero() {
        let g = SpatialGrid::new(16.0, 2048).unwrap();
        let airy = preset("airy").unwrap().build().unwrap();
        let spec = PacketSpec::new(0.5, 8.0, 0.3, 4.0);
        let u = build_packet(&spec, &airy, 0.0, &g).unwrap();
        assert_abs_diff_eq!(l2_norm(&u), 1.0, epsilon = 1e-8);
        let b = bump(0.3, 0.5, &g).unwrap();
        for i in 0..g.len() {
            let expected = Complex64::from_polar(b.values[i].re, 8.0 * g.x(i));
            assert!((u.values[i] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn anti_diffusion_packet_modulus_and_norm() {
        let g = SpatialGrid::new(16.0, 2048).unwrap();
        let c = constant_set(1.0, 1.0);
        let b = bump(0.3, 0.0, &g).unwrap();
        let u8 = build_packet(&PacketSpec::new(0.0, 8.0, 0.3, 6.0), &c, 0.0, &g).unwrap();
        let u32 = build_packet(&PacketSpec::new(0.0, 32.0, 0.3, 6.0), &c, 0.0, &g).unwrap();
        for i in 0..g.len() {
            let expected = (-g.x(i) / 3.0).exp() * b.values[i].re;
            assert!((u8.values[i].norm() - expected).abs() < 1e-12);
            assert!((u8.values[i].norm() - u32.values[i].norm()).abs() < 1e-15);
        }
        // Oracle: Simpson quadrature of e^{-2x/3} ψ² on the support.
        let cst = 1.0 / l2_norm(&Field::from_real_fn(g, 0.0, |x| BumpKind::Exponential.profile(x / 0.3)));
        let m = 4000;
        let dx = 0.6 / m as f64;
        let simpson: f64 = (0..=m)
            .map(|k| {
                let x = -0.3 + k as f64 * dx;
                let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * (-2.0 * x / 3.0).exp() * (cst * BumpKind::Exponential.profile(x / 0.3)).powi(2)
            })
            .sum::<f64>()
            * dx
            / 3.0;
        assert_abs_diff_eq!(l2_norm(&u8), simpson.sqrt(), epsilon = 1e-6);
        assert!((0.5..=2.0).contains(&l2_norm(&u8)));
    }

    #[test]
    fn predicted_growth_examples() {
        let airy = preset("airy").unwrap().build().unwrap();
        let spec = PacketSpec::new(0.0, 16.0, 0.1, 6.0);
        for t in [0.0, 0.003, spec.horizon()] {
            assert_eq!(predicted_growth(&spec, &airy, t).unwrap(), 1.0);
        }
        let anti = constant_set(1.0, 1.0);
        assert_abs_diff_eq!(
            predicted_growth(&spec, &anti, spec.horizon()).unwrap(),
            2f64.exp(),
            epsilon = 1e-10
        );
        let cos = preset("trig-diffusion").unwrap().build().unwrap();
        let long = PacketSpec::new(3.0, 16.0, 0.1, 40.0);
        for k in 0..=20 {
            let t = long.horizon() * k as f64 / 20.0;
            assert!(predicted_growth(&long, &cos, t).unwrap() <= (2.0f64 / 3.0).exp() + 1e-12);
        }
        assert!(matches!(
            predicted_growth(&spec, &anti, 1.01 * spec.horizon()),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn predicted_growth_follows_straightened_distance() {
        // a3 = 8, a2 = 4: y = x/2 and a2/a3 = 1/2, so a ray of y-length 6
        // spans 12 in x and the exponent is 12 · 1/2 / 3 = 2.
        let c = constant_set(8.0, 4.0);
        let spec = PacketSpec::new(0.0, 16.0, 0.1, 6.0);
        assert_abs_diff_eq!(predicted_growth(&spec, &c, spec.horizon()).unwrap(), 2f64.exp(), epsilon = 1e-10);
    }

    #[test]
    fn eta_selection_examples() {
        assert_eq!(eta_selection(&constant_set(1.0, 0.0), 0.0, 6.0, 0.1).unwrap(), 0.3);
        assert_abs_diff_eq!(eta_selection(&constant_set(1.0, 1.0), 0.0, 6.0, 0.1).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(eta_selection(&constant_set(1.0, 10.0), 0.0, 6.0, 0.1).unwrap(), 0.01, epsilon = 1e-15);
        assert!(eta_selection(&constant_set(1.0, 1.0), 0.0, 6.0, 0.7).is_err());
    }

    #[test]
    fn horizon_scaling_keeps_predicted_growth() {
        let anti = constant_set(1.0, 1.0);
        let a = PacketSpec::new(0.0, 8.0, 0.1, 6.0);
        let b = PacketSpec { xi: 16.0, ..a.clone() };
        assert_abs_diff_eq!(b.horizon(), a.horizon() / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            predicted_growth(&a, &anti, a.horizon()).unwrap(),
            predicted_growth(&b, &anti, b.horizon()).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn airy_packet_residual_matches_envelope_terms() {
        // (∂t + ∂x³) e^{iS} ψ(x + 3ξ²t) = e^{iS} (3iξ ψ'' + ψ''').
        let g = SpatialGrid::new(16.0, 4096).unwrap();
        let airy = preset("airy").unwrap().build().unwrap();
        for xi in [4.0, 8.0] {
            let spec = PacketSpec::new(4.0, xi, 0.5, 6.0);
            let t = 0.5 * spec.horizon();
            let r = packet_residual(&spec, &airy, t, &g).unwrap();
            let psi = bump(0.5, 4.0 - 3.0 * xi * xi * t, &g).unwrap();
            let d2 = crate::grid::derivative(&psi, 2).unwrap();
            let d3 = crate::grid::derivative(&psi, 3).unwrap();
            let one = Complex64::new(1.0, 0.0);
            let oracle = l2_norm(&d2.combine(Complex64::new(0.0, 3.0 * xi), &d3, one).unwrap());
            assert!((r - oracle).abs() < 1e-2 * oracle, "{xi}: {r} vs {oracle}");
        }
    }

    #[test]
    fn bounded_and_zero_diffusion_have_no_witness() {
        let g = SpatialGrid::new(32.0, 2048).unwrap();
        let s = IllposednessSettings::default();
        for name in ["trig-diffusion", "airy"] {
            let c = preset(name).unwrap().build().unwrap();
            let r = illposedness_experiment(&c, 2, (-20.0, 20.0), &g, &s).unwrap();
            assert!(r.witness.is_none() && !r.verdict, "{name}");
        }
    }

    #[test]
    fn zero_diffusion_packet_conserves_norm() {
        let g = SpatialGrid::new(16.0, 2048).unwrap();
        let airy = preset("airy").unwrap().build().unwrap();
        let spec = PacketSpec::new(3.0, 4.0, 0.5, 6.0);
        let u0 = build_packet(&spec, &airy, 0.0, &g).unwrap();
        let traj = solve_ivp(&u0, &airy, &SolveConfig::new(spec.horizon() / 200.0, spec.horizon())).unwrap();
        assert!((traj.final_norm() / traj.initial_norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn packet_support_must_fit() {
        let g = SpatialGrid::new(8.0, 1024).unwrap();
        let airy = preset("airy").unwrap().build().unwrap();
        let spec = PacketSpec::new(0.0, 8.0, 0.3, 20.0);
        assert!(matches!(build_packet(&spec, &airy, 0.0, &g), Err(Error::Window(_))));
    }
}

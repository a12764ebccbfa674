//! Crank–Nicolson time stepping of `∂t u + L u = f` on the periodic grid,
//! with the norm, smoothing and boundary-mass diagnostics recorded along the
//! way.
//!
//! One step solves `(I + dt/2·L(t+dt)) u⁺ = (I − dt/2·L(t)) u + dt·f(t+dt/2)`.
//! The scheme is exactly norm preserving for skew-adjoint discrete operators
//! and is its own inverse under `t ↦ T − t`, `a_j ↦ −a_j`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::{CyclicBanded, CyclicFactor};
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{
    apply_stencil, hs_norm, l2_norm, weighted_smoothing_seminorm, Field, SpatialGrid, STENCILS,
};

/// Source term `f(t, x)`.
pub type Forcing = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

/// Initial data must keep less than this fraction of its mass near `±L`.
pub const INITIAL_BOUNDARY_LIMIT: f64 = 1e-8;
/// Runs abort once the boundary fraction exceeds this.
pub const BOUNDARY_ABORT_LIMIT: f64 = 1e-4;

/// `L u = Σ a_j ∂x^j u` with fourth-order stencils.
pub fn apply_l(u: &Field, coeffs: &CoefficientSet, t: f64) -> Field {
    let g = u.grid;
    let h = g.spacing();
    let a = coeffs.sample_all(t, &g);
    let mut out: Vec<Complex64> = u.values.iter().zip(&a[0]).map(|(v, a0)| v * a0).collect();
    for (j, aj) in a.iter().enumerate().skip(1) {
        if aj.iter().all(|v| *v == 0.0) {
            continue;
        }
        let d = apply_stencil(&u.values, j, h);
        for ((o, dv), c) in out.iter_mut().zip(&d).zip(aj) {
            *o += dv * c;
        }
    }
    Field {
        grid: g,
        values: out,
        t,
    }
}

/// Matrix of the discrete `L(t)` as cyclic banded rows.
pub fn operator_matrix(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> CyclicBanded {
    let h = grid.spacing();
    let a = coeffs.sample_all(t, grid);
    let mut m = CyclicBanded::zeros(grid.len());
    for (i, row) in m.rows.iter_mut().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            let c = aj[i] / h.powi(j as i32);
            if c == 0.0 {
                continue;
            }
            for (k, s) in STENCILS[j].iter().enumerate() {
                row[k] += c * s;
            }
        }
    }
    m
}

/// Loop integral `∮ a2/|a3| dx` over the periodic cell. Near-grid-scale
/// modes circulate the torus at speed `~ |a3|/h²` and gain a factor
/// `exp(c·∮ a2/|a3|)` per lap, so a positive value makes the truncated
/// problem ill posed even when the problem on the line is not.
pub fn torus_defect(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> f64 {
    let a2 = coeffs.a(2).sample(t, grid, 0);
    let a3 = coeffs.a(3).sample(t, grid, 0);
    a2.iter().zip(&a3).map(|(b, c)| b / c.abs()).sum::<f64>() * grid.spacing()
}

/// Margin of the loop integral left after the absorbing layer.
pub const ABSORPTION_SLACK: f64 = 1.0;

/// Forward diffusion `σ(x)` over the outer `margin` zone, shaped like `|a3|`
/// times a ramp that is flat at the seam, with
/// `∮ σ/|a3| = max(torus_defect, 0) + ABSORPTION_SLACK`.
pub fn absorbing_profile(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid, margin: f64) -> Vec<f64> {
    let l = grid.half_length();
    let pad = margin * 2.0 * l;
    let ramp: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = (grid.x(i).abs() - (l - pad)) / pad;
            if r <= 0.0 {
                0.0
            } else {
                (0.5 * std::f64::consts::PI * r.min(1.0)).sin().powi(2)
            }
        })
        .collect();
    let weight = ramp.iter().sum::<f64>() * grid.spacing();
    let strength = torus_defect(coeffs, t, grid).max(0.0) + ABSORPTION_SLACK;
    let a3 = coeffs.a(3).sample(t, grid, 0);
    ramp.iter().zip(&a3).map(|(w, c)| strength * c.abs() * w / weight).collect()
}

fn with_absorption(mut op: CyclicBanded, sigma: &[f64], h: f64) -> CyclicBanded {
    for (row, s) in op.rows.iter_mut().zip(sigma) {
        for (k, c) in STENCILS[2].iter().enumerate() {
            row[k] -= s / (h * h) * c;
        }
    }
    op
}

fn shifted(op: &CyclicBanded, scale: f64) -> CyclicBanded {
    let mut m = op.clone();
    for row in m.rows.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
        row[3] += 1.0;
    }
    m
}

/// Reusable Crank–Nicolson propagator. For autonomous coefficients and a
/// fixed step the implicit matrix is factored once.
pub struct Stepper<'a> {
    coeffs: &'a CoefficientSet,
    grid: SpatialGrid,
    forcing: Option<Forcing>,
    /// Margin of the absorbing layer, if any.
    absorbing: Option<f64>,
    autonomous: bool,
    /// `L(t)` from the previous step, reused as the explicit operator.
    cached_operator: Option<(f64, CyclicBanded)>,
    cached_factor: Option<(f64, f64, CyclicFactor)>,
}

impl<'a> Stepper<'a> {
    pub fn new(coeffs: &'a CoefficientSet, grid: SpatialGrid, forcing: Option<Forcing>) -> Self {
        Self {
            coeffs,
            grid,
            forcing,
            absorbing: None,
            autonomous: coeffs.is_autonomous(),
            cached_operator: None,
            cached_factor: None,
        }
    }

    /// Adds forward diffusion in the outer `margin` zone.
    pub fn with_absorbing_layer(mut self, margin: f64) -> Self {
        self.absorbing = Some(margin);
        self
    }

    fn assemble(&self, t: f64) -> CyclicBanded {
        let op = operator_matrix(self.coeffs, t, &self.grid);
        match self.absorbing {
            Some(m) => with_absorption(op, &absorbing_profile(self.coeffs, t, &self.grid, m), self.grid.spacing()),
            None => op,
        }
    }

    fn operator(&mut self, t: f64) -> CyclicBanded {
        match &self.cached_operator {
            Some((s, op)) if *s == t || self.autonomous => op.clone(),
            _ => {
                let op = self.assemble(t);
                self.cached_operator = Some((t, op.clone()));
                op
            }
        }
    }

    /// Advances samples from `t` to `t + dt`.
    pub fn advance(&mut self, u: &[Complex64], t: f64, dt: f64) -> Result<Vec<Complex64>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let explicit = self.operator(t);
        let lu = explicit.matvec(u);
        let mut rhs: Vec<Complex64> = u.iter().zip(&lu).map(|(v, l)| v - l * (0.5 * dt)).collect();
        if let Some(f) = &self.forcing {
            let tm = t + 0.5 * dt;
            for (i, r) in rhs.iter_mut().enumerate() {
                *r += f(tm, self.grid.x(i)) * dt;
            }
        }
        let t1 = t + dt;
        let reuse = matches!(
            &self.cached_factor,
            Some((s, d, _)) if *d == dt && (self.autonomous || *s == t1)
        );
        if !reuse {
            let implicit_op = if self.autonomous {
                explicit
            } else {
                let op = self.assemble(t1);
                self.cached_operator = Some((t1, op.clone()));
                op
            };
            let factor = shifted(&implicit_op, 0.5 * dt).factor().map_err(|e| match e {
                Error::SingularSystem { row, .. } => Error::SingularSystem { row, t: t1 },
                other => other,
            })?;
            self.cached_factor = Some((t1, dt, factor));
        } else if !self.autonomous {
            let op = self.assemble(t1);
            self.cached_operator = Some((t1, op));
        }
        let (_, _, factor) = self.cached_factor.as_ref().expect("factor cached above");
        Ok(factor.solve(&rhs))
    }
}

/// One Crank–Nicolson step from `u.t` to `u.t + dt`.
pub fn step(u: &Field, coeffs: &CoefficientSet, forcing: Option<Forcing>, dt: f64) -> Result<Field> {
    let mut s = Stepper::new(coeffs, u.grid, forcing);
    let values = s.advance(&u.values, u.t, dt)?;
    Ok(Field {
        grid: u.grid,
        values,
        t: u.t + dt,
    })
}

#[derive(Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub boundary_margin: f64,
    pub smoothing_delta: f64,
    /// Sobolev orders recorded in the norm history.
    pub hs_orders: Vec<f64>,
    /// Keep a copy of the field at every recorded time.
    pub keep_snapshots: bool,
    /// Stop when the boundary mass exceeds [`BOUNDARY_ABORT_LIMIT`]. Disable
    /// only for problems posed on the torus itself.
    #[serde(default = "yes")]
    pub abort_on_boundary: bool,
    /// Damp outgoing and circulating content in the boundary zone, see
    /// [`absorbing_profile`]. Disable only for problems posed on the torus.
    #[serde(default = "yes")]
    pub absorbing_layer: bool,
    #[serde(skip)]
    pub forcing: Option<Forcing>,
}

impl std::fmt::Debug for SolveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveConfig")
            .field("dt", &self.dt)
            .field("horizon", &self.horizon)
            .field("record_every", &self.record_every)
            .field("boundary_margin", &self.boundary_margin)
            .field("smoothing_delta", &self.smoothing_delta)
            .field("hs_orders", &self.hs_orders)
            .field("keep_snapshots", &self.keep_snapshots)
            .field("abort_on_boundary", &self.abort_on_boundary)
            .field("absorbing_layer", &self.absorbing_layer)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

fn yes() -> bool {
    true
}

impl SolveConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            record_every: 1,
            boundary_margin: 0.1,
            smoothing_delta: 0.75,
            hs_orders: vec![1.0],
            keep_snapshots: false,
            abort_on_boundary: true,
            absorbing_layer: true,
            forcing: None,
        }
    }

    /// `min(1e-3, h)`.
    pub fn default_dt(grid: &SpatialGrid) -> f64 {
        grid.spacing().min(1e-3)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.dt > self.horizon {
            return bad(format!("dt ({}) must not exceed the horizon T ({})", self.dt, self.horizon));
        }
        if self.record_every == 0 || self.record_every as f64 * self.dt > self.horizon {
            return bad(format!(
                "recordEvery·dt must lie in (0, T], got {}·{}",
                self.record_every, self.dt
            ));
        }
        if !(self.boundary_margin > 0.0 && self.boundary_margin < 0.5) {
            return bad(format!("boundary margin must lie in (0, 0.5), got {}", self.boundary_margin));
        }
        if self.smoothing_delta.is_nan() || self.smoothing_delta <= 0.5 {
            return bad(format!("smoothing delta must exceed 1/2, got {}", self.smoothing_delta));
        }
        Ok(())
    }

    /// Number of steps and the step actually used, `T / steps`.
    pub fn schedule(&self) -> (usize, f64) {
        let steps = (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize;
        (steps, self.horizon / steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub t: f64,
    pub l2: f64,
    /// `‖u‖_{H^s}` for each configured order.
    pub hs: Vec<f64>,
    /// `∫_0^t ‖⟨x⟩^{-δ} ∂x u‖² dt'` so far.
    pub smoothing: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolveStatus {
    Completed,
    BoundaryContamination { t: f64, fraction: f64 },
    NonFinite { t: f64 },
}

impl SolveStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, SolveStatus::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub norm_history: Vec<NormRecord>,
    pub hs_orders: Vec<f64>,
    pub smoothing_accumulator: f64,
    /// `(t, fraction)` at every step.
    pub boundary_mass_history: Vec<(f64, f64)>,
    /// `sup_t ‖u(t)‖ / ‖u(0)‖` over all steps.
    pub growth_ratio: f64,
    pub initial_norm: f64,
    pub dt: f64,
    pub steps_taken: usize,
    pub status: SolveStatus,
    /// State at the last completed step.
    pub final_field: Field,
}

impl Trajectory {
    pub fn final_norm(&self) -> f64 {
        l2_norm(&self.final_field)
    }
}

/// Runs Crank–Nicolson from `u0.t` to `u0.t + T`.
pub fn solve_ivp(u0: &Field, coeffs: &CoefficientSet, config: &SolveConfig) -> Result<Trajectory> {
    config.validate()?;
    if !u0.is_finite() {
        return Err(Error::InvalidParameter("initial data contains non-finite values".into()));
    }
    let fraction = u0.boundary_mass_fraction(config.boundary_margin);
    if fraction >= INITIAL_BOUNDARY_LIMIT {
        return Err(Error::BoundaryMass {
            fraction,
            limit: INITIAL_BOUNDARY_LIMIT,
        });
    }
    let (steps, dt) = config.schedule();
    let delta = config.smoothing_delta;
    let record = |u: &Field, smoothing: f64, mass: f64| NormRecord {
        t: u.t,
        l2: l2_norm(u),
        hs: config.hs_orders.iter().map(|s| hs_norm(u, *s)).collect(),
        smoothing,
        boundary_mass: mass,
    };

    let initial_norm = l2_norm(u0);
    let mut stepper = Stepper::new(coeffs, u0.grid, config.forcing.clone());
    if config.absorbing_layer {
        stepper = stepper.with_absorbing_layer(config.boundary_margin);
    }
    let mut u = u0.clone();
    let mut smoothing = 0.0;
    let mut prev_density = weighted_smoothing_seminorm(&u, delta)?.powi(2);
    let mut sup_norm = initial_norm;
    let mut norm_history = vec![record(&u, 0.0, fraction)];
    let mut snapshots = if config.keep_snapshots {
        vec![u.clone()]
    } else {
        Vec::new()
    };
    let mut boundary = vec![(u.t, fraction)];
    let mut status = SolveStatus::Completed;
    let mut taken = 0;

    for k in 1..=steps {
        let t0 = u0.t + (k - 1) as f64 * dt;
        let t1 = u0.t + k as f64 * dt;
        let values = stepper.advance(&u.values, t0, dt)?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            status = SolveStatus::NonFinite { t: t1 };
            break;
        }
        u = Field {
            grid: u.grid,
            values,
            t: t1,
        };
        taken = k;
        let density = weighted_smoothing_seminorm(&u, delta)?.powi(2);
        smoothing += 0.5 * dt * (prev_density + density);
        prev_density = density;
        let norm = l2_norm(&u);
        sup_norm = sup_norm.max(norm);
        let mass = u.boundary_mass_fraction(config.boundary_margin);
        boundary.push((t1, mass));
        let contaminated = config.abort_on_boundary && mass > BOUNDARY_ABORT_LIMIT;
        if k % config.record_every == 0 || k == steps || contaminated {
            norm_history.push(record(&u, smoothing, mass));
            if config.keep_snapshots {
                snapshots.push(u.clone());
            }
        }
        if contaminated {
            status = SolveStatus::BoundaryContamination { t: t1, fraction: mass };
            break;
        }
    }

    Ok(Trajectory {
        snapshots,
        norm_history,
        hs_orders: config.hs_orders.clone(),
        smoothing_accumulator: smoothing,
        boundary_mass_history: boundary,
        growth_ratio: if initial_norm > 0.0 {
            sup_norm / initial_norm
        } else {
            1.0
        },
        initial_norm,
        dt,
        steps_taken: taken,
        status,
        final_field: u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    /// `sup_t ‖u(t)‖ / ‖u(0)‖`.
    pub k: f64,
    /// Least-squares slope of `log ‖u(t)‖` against `t`.
    pub c_fit: f64,
}

pub fn estimate_growth_constant(traj: &Trajectory) -> Result<GrowthEstimate> {
    let pts: Vec<(f64, f64)> = traj
        .norm_history
        .iter()
        .filter(|r| r.l2 > 0.0)
        .map(|r| (r.t, r.l2.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::EmptyTrajectory);
    }
    Ok(GrowthEstimate {
        k: traj.growth_ratio,
        c_fit: sxy / sxx,
    })
}

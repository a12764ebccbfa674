//! Runs one configured experiment and collects its report and artifacts.

use kdvlab::coefficients::{check_nondegeneracy, classify_condition, find_witness, CoefficientSet, Trend};
use kdvlab::energy::{energy_identity_check, gauged_dissipation_rate};
use kdvlab::gauge::{apply_gauge, build_gauge, gauge_ode_residual, Direction};
use kdvlab::grid::l2_norm;
use kdvlab::solver::{estimate_growth_constant, solve_ivp, torus_defect, NormRecord, SolveStatus, Trajectory};
use kdvlab::transform::Reduction;
use kdvlab::wavepacket::{build_packet, bump, illposedness_experiment};
use kdvlab::{Error, Field, SpatialGrid, Window};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, InitialData, Kind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub const DEFAULT_ENERGY_MISMATCH: f64 = 1e-4;
pub const DEFAULT_GAUGE_RESIDUAL: f64 = 1e-8;
pub const DEFAULT_BRACKET_ERROR: f64 = 1e-8;
pub const DEFAULT_REDUCTION_MISMATCH: f64 = 1e-3;
pub const ROUND_TRIP_LIMIT: f64 = 1e-8;
/// Relative slack on `d/dt‖v‖² ≤ 2‖b̃0‖∞‖v‖²`, which holds exactly at `t`.
pub const DISSIPATION_SLACK: f64 = 1e-8;

/// Failure before a verdict could be reached, with its exit status.
#[derive(Debug)]
pub struct RunError {
    pub code: i32,
    pub message: String,
}

impl RunError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SingularSystem { .. } | Error::NonMonotone { .. } | Error::EmptyTrajectory => EXIT_ABORT,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// A checked invariant; `pass` is decided where the check is built.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub limit: Value,
    pub pass: bool,
}

fn bound(name: &str, value: f64, limit: f64) -> Check {
    Check {
        name: name.into(),
        value: json!(value),
        limit: json!(limit),
        pass: value <= limit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Passed,
    FailedInvariant,
    NumericalAbort,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Passed => EXIT_OK,
            Verdict::FailedInvariant => EXIT_INVARIANT,
            Verdict::NumericalAbort => EXIT_ABORT,
        }
    }
}

/// Norm history for `norms.csv`.
pub struct NormTable {
    pub hs_orders: Vec<f64>,
    pub records: Vec<NormRecord>,
}

pub struct Outcome {
    pub result: Value,
    pub checks: Vec<Check>,
    /// Why the run stopped early, if it did.
    pub abort: Option<String>,
    pub norms: Option<NormTable>,
    pub snapshots: Vec<Field>,
    /// Extra CSV artifacts as `(file name, contents)`.
    pub tables: Vec<(&'static str, String)>,
}

impl Outcome {
    fn new(result: Value) -> Self {
        Self {
            result,
            checks: Vec::new(),
            abort: None,
            norms: None,
            snapshots: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.abort.is_some() {
            Verdict::NumericalAbort
        } else if self.checks.iter().all(|c| c.pass) {
            Verdict::Passed
        } else {
            Verdict::FailedInvariant
        }
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome, RunError> {
    config.validate().map_err(RunError::validation)?;
    let coeffs = config.coefficient_set().map_err(RunError::validation)?;
    let grid = config.grid().map_err(RunError::validation)?;
    match config.kind {
        Kind::Solve => run_solve(config, &coeffs, &grid),
        Kind::EnergyCheck => run_energy(config, &coeffs, &grid),
        Kind::GaugeCheck => run_gauge(config, &coeffs, &grid),
        Kind::Classify => run_classify(config, &coeffs),
        Kind::ReduceAndCompare => run_reduce(config, &coeffs, &grid),
        Kind::Illposedness => run_illposedness(config, &coeffs, &grid),
    }
}

pub fn initial_field(
    config: &ExperimentConfig,
    coeffs: &CoefficientSet,
    grid: &SpatialGrid,
) -> Result<Field, RunError> {
    let data = config
        .initial
        .as_ref()
        .ok_or_else(|| RunError::validation("missing [initial] section"))?;
    let field = match data {
        InitialData::Bump { eta, x0 } => bump(*eta, *x0, grid)?,
        InitialData::Gaussian { centre, width, xi } => {
            if !(*width > 0.0) {
                return Err(RunError::validation(format!("initial.width must be positive, got {width}")));
            }
            Field::from_fn(*grid, 0.0, |x| {
                Complex64::from_polar((-((x - centre) / width).powi(2)).exp(), xi * x)
            })
        }
        InitialData::Packet(spec) => build_packet(spec, coeffs, 0.0, grid)?,
        InitialData::Random { count, spread, max_xi } => {
            if *count == 0 {
                return Err(RunError::validation("initial.count must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let terms: Vec<(f64, f64, f64, Complex64)> = (0..*count)
                .map(|_| {
                    let centre = rng.random_range(-*spread..=*spread);
                    let width = rng.random_range(1.0..=2.5);
                    let xi = rng.random_range(-*max_xi..=*max_xi);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (centre, width, xi, Complex64::from_polar(1.0, phase))
                })
                .collect();
            Field::from_fn(*grid, 0.0, |x| {
                terms
                    .iter()
                    .map(|(c, w, xi, p)| p * Complex64::from_polar((-((x - c) / w).powi(2)).exp(), xi * x))
                    .sum()
            })
        }
    };
    Ok(field)
}

fn status_abort(status: &SolveStatus) -> Option<String> {
    match status {
        SolveStatus::Completed => None,
        SolveStatus::BoundaryContamination { t, fraction } => Some(format!(
            "boundary mass {fraction:.3e} exceeds the abort limit at t = {t:.6e}"
        )),
        SolveStatus::NonFinite { t } => Some(format!("non-finite state at t = {t:.6e}")),
    }
}

fn trajectory_summary(traj: &Trajectory) -> Value {
    let max_mass = traj.boundary_mass_history.iter().map(|b| b.1).fold(0.0, f64::max);
    json!({
        "status": traj.status,
        "growthRatio": traj.growth_ratio,
        "initialNorm": traj.initial_norm,
        "finalNorm": traj.final_norm(),
        "finalTime": traj.final_field.t,
        "dt": traj.dt,
        "stepsTaken": traj.steps_taken,
        "smoothingAccumulator": traj.smoothing_accumulator,
        "maxBoundaryMass": max_mass,
        "growthFit": estimate_growth_constant(traj).ok(),
    })
}

fn run_solve(config: &ExperimentConfig, coeffs: &CoefficientSet, grid: &SpatialGrid) -> Result<Outcome, RunError> {
    let section = config.solve.as_ref().expect("validated");
    let u0 = initial_field(config, coeffs, grid)?;
    let traj = solve_ivp(&u0, coeffs, &section.to_solve_config())?;
    let mut out = Outcome::new(json!({
        "torusDefect": torus_defect(coeffs, 0.0, grid),
        "trajectory": trajectory_summary(&traj),
    }));
    if let Some(limit) = config.expect.growth_deviation {
        out.checks.push(bound("growthDeviation", (traj.growth_ratio - 1.0).abs(), limit));
    }
    if let Some(limit) = config.expect.max_growth {
        out.checks.push(bound("maxGrowth", traj.growth_ratio, limit));
    }
    out.abort = status_abort(&traj.status);
    out.norms = Some(NormTable {
        hs_orders: traj.hs_orders.clone(),
        records: traj.norm_history.clone(),
    });
    out.snapshots = traj.snapshots;
    Ok(out)
}

fn check_times(config: &ExperimentConfig) -> Vec<f64> {
    config
        .gauge
        .as_ref()
        .map(|g| g.times.clone())
        .unwrap_or_else(|| vec![0.0])
}

fn run_energy(config: &ExperimentConfig, coeffs: &CoefficientSet, grid: &SpatialGrid) -> Result<Outcome, RunError> {
    let v = initial_field(config, coeffs, grid)?;
    let reports = check_times(config)
        .into_iter()
        .map(|t| energy_identity_check(&v, coeffs, t))
        .collect::<kdvlab::Result<Vec<_>>>()?;
    let worst = reports.iter().map(|r| r.mismatch).fold(0.0, f64::max);
    let mut out = Outcome::new(json!({ "energy": reports, "maxMismatch": worst }));
    out.checks.push(bound(
        "energyMismatch",
        worst,
        config.expect.energy_mismatch.unwrap_or(DEFAULT_ENERGY_MISMATCH),
    ));
    Ok(out)
}

fn run_gauge(config: &ExperimentConfig, coeffs: &CoefficientSet, grid: &SpatialGrid) -> Result<Outcome, RunError> {
    let (delta, cdelta) = config.gauge.as_ref().map_or((0.75, 1), |g| (g.delta, g.cdelta));
    let u = initial_field(config, coeffs, grid)?;
    let mut rows = Vec::new();
    let (mut residual, mut bracket, mut excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for t in check_times(config) {
        let g = build_gauge(coeffs, t, grid, delta, cdelta)?;
        let v = apply_gauge(&Field { t, ..u.clone() }, &g, Direction::Forward)?;
        let r = gauged_dissipation_rate(&v, coeffs, &g, t)?;
        let res = gauge_ode_residual(&g, coeffs);
        let n2 = l2_norm(&v).powi(2);
        residual = residual.max(res);
        bracket = bracket.max(r.bracket_error);
        excess = excess.max((r.rate - r.bound) / n2);
        rows.push(json!({
            "t": t,
            "odeResidual": res,
            "minPhi": g.min_phi,
            "maxPhi": g.max_phi,
            "bracketError": r.bracket_error,
            "gradientTerm": r.gradient_term,
            "zeroTerm": r.zero_term,
            "rate": r.rate,
            "bound": r.bound,
            "b0Sup": r.b0_sup,
        }));
    }
    let mut out = Outcome::new(json!({ "delta": delta, "cdelta": cdelta, "gauge": rows }));
    out.checks.push(bound(
        "gaugeResidual",
        residual,
        config.expect.gauge_residual.unwrap_or(DEFAULT_GAUGE_RESIDUAL),
    ));
    if cdelta == 1 {
        out.checks.push(bound(
            "bracketError",
            bracket,
            config.expect.bracket_error.unwrap_or(DEFAULT_BRACKET_ERROR),
        ));
        out.checks.push(bound("dissipationExcess", excess, DISSIPATION_SLACK));
    }
    Ok(out)
}

fn run_classify(config: &ExperimentConfig, coeffs: &CoefficientSet) -> Result<Outcome, RunError> {
    let section = config.classify.as_ref().expect("validated");
    let report = classify_condition(coeffs, section.t, &section.windows, section.threshold)?;
    let outer = section.windows[section.windows.len() - 1];
    let shortest = match section.target_increment {
        Some(target) => find_witness(coeffs, section.t, outer, target)?,
        None => None,
    };
    let mut table = String::from("x,M\n");
    for (x, m) in report.x.iter().zip(&report.m) {
        table.push_str(&format!("{},{}\n", crate::output::number(*x), crate::output::number(*m)));
    }
    let mut out = Outcome::new(json!({
        "t": report.t,
        "windows": report.windows,
        "supAbs": report.sup_abs,
        "trend": report.trend,
        "witness": report.witness,
        "shortestWitness": shortest,
        "heuristic": report.heuristic,
    }));
    if let Some(expected) = config.expect.trend {
        let name = |t: Trend| json!(t);
        out.checks.push(Check {
            name: "trend".into(),
            value: name(report.trend),
            limit: name(expected),
            pass: report.trend == expected,
        });
    }
    out.tables.push(("mizohata.csv", table));
    Ok(out)
}

fn run_reduce(config: &ExperimentConfig, coeffs: &CoefficientSet, grid: &SpatialGrid) -> Result<Outcome, RunError> {
    let section = config.solve.as_ref().expect("validated");
    let solve = section.to_solve_config();
    let r = Reduction::new(coeffs, 0.0, grid)?;
    let u0 = initial_field(config, coeffs, grid)?;
    let v0 = r.forward(&u0)?;
    let x_run = solve_ivp(&u0, coeffs, &solve)?;
    let y_run = solve_ivp(&v0, &r.reduced, &solve)?;
    let v_a = r.forward(&x_run.final_field)?;
    let v_b = &y_run.final_field;
    let diff = v_a.combine(Complex64::new(1.0, 0.0), v_b, Complex64::new(-1.0, 0.0))?;
    let mismatch = l2_norm(&diff) / l2_norm(v_b);
    let round_trip = r.change.composition_error(coeffs);
    let (a, b) = (grid.x(0), grid.x(grid.len() - 1));
    let nd = check_nondegeneracy(coeffs, Window::at_time((a, b), 0.0), 1.0 / grid.spacing())?;
    let comparable = [(&u0, &v0), (&x_run.final_field, &v_a)].iter().all(|(u, v)| {
        let (nu, nv) = (l2_norm(u).powi(2), l2_norm(v).powi(2));
        nd.lambda * nv <= nu * (1.0 + 1e-9) && nu <= nd.upper * nv * (1.0 + 1e-9)
    });
    let mut out = Outcome::new(json!({
        "reflected": r.reflected,
        "yHalfLength": r.change.y_grid.half_length(),
        "mismatch": mismatch,
        "roundTrip": round_trip,
        "lambda": nd.lambda,
        "upper": nd.upper,
        "comparable": comparable,
        "original": trajectory_summary(&x_run),
        "reduced": trajectory_summary(&y_run),
    }));
    out.checks.push(bound(
        "reductionMismatch",
        mismatch,
        config.expect.reduction_mismatch.unwrap_or(DEFAULT_REDUCTION_MISMATCH),
    ));
    out.checks.push(bound("roundTrip", round_trip, ROUND_TRIP_LIMIT));
    out.checks.push(Check {
        name: "normComparability".into(),
        value: json!(comparable),
        limit: json!(true),
        pass: comparable,
    });
    out.abort = status_abort(&x_run.status).or_else(|| status_abort(&y_run.status).map(|m| format!("reduced run: {m}")));
    out.norms = Some(NormTable {
        hs_orders: x_run.hs_orders.clone(),
        records: x_run.norm_history.clone(),
    });
    out.snapshots = x_run.snapshots;
    out.tables.push(("change.csv", r.change.to_csv()));
    Ok(out)
}

fn run_illposedness(
    config: &ExperimentConfig,
    coeffs: &CoefficientSet,
    grid: &SpatialGrid,
) -> Result<Outcome, RunError> {
    let section = config.illposedness.as_ref().expect("validated");
    let report = illposedness_experiment(coeffs, section.n, section.window, grid, &section.settings())?;
    let mut out = Outcome::new(json!({
        "torusDefect": torus_defect(coeffs, 0.0, grid),
        "illposedness": report,
    }));
    if report.witness.is_some() {
        out.checks.push(Check {
            name: "growthVerdict".into(),
            value: json!(report.ratio_lhs),
            limit: json!(report.ratio_rhs_bound),
            pass: report.verdict,
        });
    }
    if !report.valid {
        out.abort = Some(report.message.clone());
    }
    out.norms = Some(NormTable {
        hs_orders: vec![1.0],
        records: report.norm_history,
    });
    Ok(out)
}

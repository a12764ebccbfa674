//! Experiment configuration files (TOML). See `docs/config.md`.

use std::path::Path;

use kdvlab::coefficients::{preset, CoefficientSet, ProfileSpec};
use kdvlab::solver::SolveConfig;
use kdvlab::wavepacket::{IllposednessSettings, PacketSpec};
use kdvlab::SpatialGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    EnergyCheck,
    GaugeCheck,
    Classify,
    ReduceAndCompare,
    Illposedness,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<String>,
    pub coefficients: CoefficientsConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub gauge: Option<GaugeSection>,
    #[serde(default)]
    pub classify: Option<ClassifySection>,
    #[serde(default)]
    pub illposedness: Option<IllposednessSection>,
    #[serde(default)]
    pub expect: Expectations,
}

/// A preset, optionally with individual coefficients replaced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub preset: String,
    #[serde(default)]
    pub a0: Option<ProfileSpec>,
    #[serde(default)]
    pub a1: Option<ProfileSpec>,
    #[serde(default)]
    pub a2: Option<ProfileSpec>,
    #[serde(default)]
    pub a3: Option<ProfileSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_length: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolveSection {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_orders")]
    pub s: Vec<f64>,
    #[serde(default = "default_margin")]
    pub boundary_margin: f64,
    #[serde(default)]
    pub snapshots: bool,
    /// Treat the grid as a torus: no absorbing layer and no boundary abort.
    #[serde(default)]
    pub periodic: bool,
}

fn one() -> usize {
    1
}

fn default_delta() -> f64 {
    0.75
}

fn default_orders() -> Vec<f64> {
    vec![1.0]
}

fn default_margin() -> f64 {
    0.1
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// Normalized smooth bump of half-width `eta` centred at `x0`.
    Bump { eta: f64, x0: f64 },
    /// `exp(−((x − centre)/width)²) e^{iξx}`.
    Gaussian {
        centre: f64,
        width: f64,
        #[serde(default)]
        xi: f64,
    },
    /// Geometric-optics packet built for the configured coefficients.
    Packet(PacketSpec),
    /// Sum of `count` Gaussians with seeded random centres, widths,
    /// frequencies and phases.
    Random {
        count: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "default_max_xi")]
        max_xi: f64,
    },
}

fn default_spread() -> f64 {
    5.0
}

fn default_max_xi() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GaugeSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one_u8")]
    pub cdelta: u8,
    /// Times at which the checks are evaluated.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
}

fn one_u8() -> u8 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClassifySection {
    #[serde(default)]
    pub t: f64,
    /// Nested windows `[a, b]`, innermost first.
    pub windows: Vec<(f64, f64)>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Optional target increment for a shortest-interval witness search.
    #[serde(default)]
    pub target_increment: Option<f64>,
}

fn default_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IllposednessSection {
    pub n: u32,
    pub window: (f64, f64),
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_eta_tolerance")]
    pub eta_tolerance: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_margin")]
    pub boundary_margin: f64,
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
}

fn default_xi() -> f64 {
    16.0
}

fn default_eta_tolerance() -> f64 {
    0.1
}

fn default_residual_samples() -> usize {
    9
}

impl IllposednessSection {
    pub fn settings(&self) -> IllposednessSettings {
        IllposednessSettings {
            xi: self.xi,
            eta_tolerance: self.eta_tolerance,
            dt: self.dt,
            boundary_margin: self.boundary_margin,
            residual_samples: self.residual_samples,
        }
    }
}

/// Invariants checked after the run; a violation exits with status 4.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Expectations {
    /// Bound on `|sup_t ‖u‖/‖u0‖ − 1|`.
    #[serde(default)]
    pub growth_deviation: Option<f64>,
    /// Bound on `sup_t ‖u‖/‖u0‖`.
    #[serde(default)]
    pub max_growth: Option<f64>,
    #[serde(default)]
    pub energy_mismatch: Option<f64>,
    #[serde(default)]
    pub gauge_residual: Option<f64>,
    #[serde(default)]
    pub bracket_error: Option<f64>,
    #[serde(default)]
    pub reduction_mismatch: Option<f64>,
    /// Expected classification trend, `bounded` or `growing`.
    #[serde(default)]
    pub trend: Option<kdvlab::coefficients::Trend>,
}

pub type ValidationResult<T> = std::result::Result<T, String>;

impl ExperimentConfig {
    pub fn load(path: &Path) -> ValidationResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> ValidationResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> ValidationResult<()> {
        self.coefficient_set()?;
        self.grid()?;
        if let Some(s) = &self.solve {
            s.to_solve_config().validate().map_err(|e| e.to_string())?;
        }
        let need = |present: bool, section: &str| {
            if present {
                Ok(())
            } else {
                Err(format!("experiment kind {:?} requires a [{section}] section", self.kind))
            }
        };
        match self.kind {
            Kind::Solve | Kind::ReduceAndCompare => {
                need(self.solve.is_some(), "solve")?;
                need(self.initial.is_some(), "initial")?;
            }
            Kind::EnergyCheck | Kind::GaugeCheck => need(self.initial.is_some(), "initial")?,
            Kind::Classify => {
                let c = self.classify.as_ref().ok_or("experiment kind Classify requires a [classify] section")?;
                if c.windows.len() < 2 {
                    return Err("classify.windows must list at least two nested windows".into());
                }
            }
            Kind::Illposedness => {
                let s = self
                    .illposedness
                    .as_ref()
                    .ok_or("experiment kind Illposedness requires an [illposedness] section")?;
                if s.n == 0 {
                    return Err("illposedness.n must be positive".into());
                }
                if s.window.0 >= s.window.1 {
                    return Err("illposedness.window must satisfy a < b".into());
                }
            }
        }
        if let Some(g) = &self.gauge {
            if g.delta <= 0.5 {
                return Err(format!("gauge.delta must exceed 1/2, got {}", g.delta));
            }
            if g.cdelta > 1 {
                return Err(format!("gauge.cdelta must be 0 or 1, got {}", g.cdelta));
            }
        }
        Ok(())
    }

    pub fn coefficient_set(&self) -> ValidationResult<CoefficientSet> {
        let c = &self.coefficients;
        let p = preset(&c.preset).ok_or_else(|| format!("unknown preset {:?}; see list-presets", c.preset))?;
        let mut profiles = p.profiles.clone();
        for (j, o) in [&c.a0, &c.a1, &c.a2, &c.a3].into_iter().enumerate() {
            if let Some(spec) = o {
                profiles[j] = spec.clone();
            }
        }
        let overridden = [&c.a0, &c.a1, &c.a2, &c.a3].iter().any(|o| o.is_some());
        let name = if overridden {
            format!("{}*", p.name)
        } else {
            p.name.to_string()
        };
        CoefficientSet::from_profiles(name, &profiles).map_err(|e| e.to_string())
    }

    pub fn grid(&self) -> ValidationResult<SpatialGrid> {
        SpatialGrid::new(self.grid.half_length, self.grid.n).map_err(|e| e.to_string())
    }
}

impl SolveSection {
    pub fn to_solve_config(&self) -> SolveConfig {
        let mut c = SolveConfig::new(self.dt, self.horizon);
        c.record_every = self.record_every;
        c.smoothing_delta = self.delta;
        c.hs_orders = self.s.clone();
        c.boundary_margin = self.boundary_margin;
        c.keep_snapshots = self.snapshots;
        c.abort_on_boundary = !self.periodic;
        c.absorbing_layer = !self.periodic;
        c
    }
}

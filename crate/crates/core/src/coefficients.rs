//! Coefficients `a_j(t, x)` of `∂t u + Σ a_j ∂x^j u = f`, their derivatives,
//! and finite-window proxies for the structural assumptions: non-degenerate
//! dispersion and the weak-diffusion (Mizohata-type) integral.
//!
//! Every coefficient is an evaluator `(t, x, dx_order, dt_order) -> f64`, so
//! transformed sets (adjoint, reversal, reduction) can request any mixed
//! derivative of the originals without finite differencing.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumulative_integral, SpatialGrid};

type EvalFn = dyn Fn(f64, f64, usize, usize) -> f64 + Send + Sync;

/// Step used by finite-difference fallbacks and by [`validate_derivatives`].
const FD_STEP: f64 = 1e-3;

/// Default floor for `|a3|` in [`check_nondegeneracy`].
pub const DEFAULT_DISPERSION_FLOOR: f64 = 1e-8;

/// One real coefficient together with all of its mixed derivatives.
#[derive(Clone)]
pub struct Coefficient {
    label: String,
    autonomous: bool,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("label", &self.label)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl Coefficient {
    /// Wraps a raw evaluator. `eval(t, x, m, q)` must return `∂x^m ∂t^q a(t, x)`.
    pub fn from_evaluator(
        label: impl Into<String>,
        autonomous: bool,
        eval: impl Fn(f64, f64, usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            autonomous,
            eval: Arc::new(eval),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_evaluator(format!("{c}"), true, move |_, _, m, q| {
            if m == 0 && q == 0 {
                c
            } else {
                0.0
            }
        })
    }

    /// `mean + amplitude·sin(k x + ω t + phase)`.
    pub fn trig(mean: f64, amplitude: f64, k: f64, omega: f64, phase: f64) -> Self {
        let label = format!("{mean} + {amplitude}·sin({k}x + {omega}t + {phase})");
        Self::from_evaluator(label, omega == 0.0 || amplitude == 0.0, move |t, x, m, q| {
            let base = if m == 0 && q == 0 { mean } else { 0.0 };
            let theta = k * x + omega * t + phase + (m + q) as f64 * FRAC_PI_2;
            base + amplitude * k.powi(m as i32) * omega.powi(q as i32) * theta.sin()
        })
    }

    /// `amplitude·⟨x⟩^{-power}`, or `amplitude·x·⟨x⟩^{-power}` when `odd`.
    pub fn rational(amplitude: f64, power: f64, odd: bool) -> Self {
        let label = if odd {
            format!("{amplitude}·x·<x>^-{power}")
        } else {
            format!("{amplitude}·<x>^-{power}")
        };
        let table = RationalDerivatives::new(power / 2.0, 6);
        Self::from_evaluator(label, true, move |_, x, m, q| {
            if q > 0 {
                return 0.0;
            }
            let v = if odd {
                let mut v = x * table.eval(x, m);
                if m > 0 {
                    v += m as f64 * table.eval(x, m - 1);
                }
                v
            } else {
                table.eval(x, m)
            };
            amplitude * v
        })
    }

    /// Value function with an explicit table of supplied derivatives keyed by
    /// `(dx_order, dt_order)`. Missing entries fall back to a fourth-order
    /// centered difference of the nearest supplied lower derivative.
    pub fn with_derivatives(
        label: impl Into<String>,
        autonomous: bool,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        derivatives: Vec<((usize, usize), Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>)>,
    ) -> Self {
        let mut table: BTreeMap<(usize, usize), Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>> =
            derivatives.into_iter().collect();
        table.insert((0, 0), Arc::new(value));
        let table = Arc::new(table);
        fn lookup(
            table: &BTreeMap<(usize, usize), Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
            autonomous: bool,
            t: f64,
            x: f64,
            m: usize,
            q: usize,
        ) -> f64 {
            if let Some(f) = table.get(&(m, q)) {
                return f(t, x);
            }
            if q > 0 {
                if autonomous {
                    return 0.0;
                }
                return central_difference(|s| lookup(table, autonomous, s, x, m, q - 1), t);
            }
            central_difference(|s| lookup(table, autonomous, t, s, m - 1, q), x)
        }
        Self::from_evaluator(label, autonomous, move |t, x, m, q| {
            lookup(&table, autonomous, t, x, m, q)
        })
    }

    /// Samples on a uniform table, interpolated by local six-point Lagrange
    /// polynomials. Derivatives are those of the interpolant; time derivatives
    /// vanish.
    pub fn tabulated(label: impl Into<String>, origin: f64, spacing: f64, values: Vec<f64>) -> Self {
        let values = Arc::new(values);
        Self::from_evaluator(label, true, move |_, x, m, q| {
            if q > 0 {
                return 0.0;
            }
            let n = values.len();
            let s = (x - origin) / spacing;
            let base = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
            let local = s - base as f64;
            let w = lagrange_derivative_weights(local, m);
            let scale = spacing.powi(m as i32).recip();
            (0..6).map(|j| w[j] * values[base + j]).sum::<f64>() * scale
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, dx: usize, dt: usize) -> f64 {
        (self.eval)(t, x, dx, dt)
    }

    #[inline]
    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x, 0, 0)
    }

    #[inline]
    pub fn dx(&self, t: f64, x: f64, order: usize) -> f64 {
        self.eval(t, x, order, 0)
    }

    #[inline]
    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x, 0, 1)
    }

    /// `∂x^dx a` sampled on the grid nodes.
    pub fn sample(&self, t: f64, grid: &SpatialGrid, dx: usize) -> Vec<f64> {
        (0..grid.len()).map(|i| self.eval(t, grid.x(i), dx, 0)).collect()
    }

    /// `Σ c_i ∂x^{shift_i} b_i`.
    pub fn combination(label: impl Into<String>, terms: Vec<(f64, Coefficient, usize)>) -> Self {
        let autonomous = terms.iter().all(|(_, c, _)| c.autonomous);
        Self::from_evaluator(label, autonomous, move |t, x, m, q| {
            terms
                .iter()
                .map(|(c, b, shift)| if *c == 0.0 { 0.0 } else { c * b.eval(t, x, m + shift, q) })
                .sum()
        })
    }

    /// `scale · a(t_sign·t + t_shift, x_sign·x)` with derivatives remapped.
    pub fn remapped(&self, scale: f64, t_sign: f64, t_shift: f64, x_sign: f64) -> Self {
        let inner = self.clone();
        let label = format!("remap({})", self.label);
        Self::from_evaluator(label, self.autonomous, move |t, x, m, q| {
            let chain = x_sign.powi(m as i32) * t_sign.powi(q as i32);
            scale * chain * inner.eval(t_sign * t + t_shift, x_sign * x, m, q)
        })
    }
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP;
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// `d^k/dx^k (1 + x²)^{-q} = P_k(x) (1 + x²)^{-q-k}` with
/// `P_{k+1} = P_k' (1 + x²) - 2 (q + k) x P_k`.
#[derive(Clone)]
struct RationalDerivatives {
    q: f64,
    polys: Vec<Vec<f64>>,
}

impl RationalDerivatives {
    fn new(q: f64, max_order: usize) -> Self {
        let mut polys = vec![vec![1.0]];
        for k in 0..max_order {
            let next = Self::advance(&polys[k], q, k);
            polys.push(next);
        }
        Self { q, polys }
    }

    fn advance(p: &[f64], q: f64, k: usize) -> Vec<f64> {
        let mut next = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate().skip(1) {
            let d = i as f64 * c;
            next[i - 1] += d;
            next[i + 1] += d;
        }
        for (i, c) in p.iter().enumerate() {
            next[i + 1] -= 2.0 * (q + k as f64) * c;
        }
        next
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        let owned;
        let poly = if k < self.polys.len() {
            &self.polys[k]
        } else {
            let mut p = self.polys.last().cloned().unwrap_or_else(|| vec![1.0]);
            for j in self.polys.len() - 1..k {
                p = Self::advance(&p, self.q, j);
            }
            owned = p;
            &owned
        };
        let value = poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        value * (1.0 + x * x).powf(-self.q - k as f64)
    }
}

/// Weights of the `m`-th derivative of the six-point Lagrange interpolant on
/// nodes `0..6`, evaluated at local coordinate `s`.
fn lagrange_derivative_weights(s: f64, m: usize) -> [f64; 6] {
    let mut w = [0.0; 6];
    for (j, wj) in w.iter_mut().enumerate() {
        // Monomial coefficients of ℓ_j.
        let mut poly = vec![1.0];
        let mut denom = 1.0;
        for k in 0..6 {
            if k == j {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= k as f64 * c;
            }
            poly = next;
            denom *= j as f64 - k as f64;
        }
        for _ in 0..m {
            poly = poly.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        }
        *wj = poly.iter().rev().fold(0.0, |acc, c| acc * s + c) / denom;
    }
    w
}

/// Serializable description of one coefficient profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    Trig {
        #[serde(default)]
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Rational {
        amplitude: f64,
        power: f64,
        #[serde(default)]
        odd: bool,
    },
}

fn one() -> f64 {
    1.0
}

impl ProfileSpec {
    pub fn build(&self) -> Result<Coefficient> {
        let finite = |v: f64, what: &str| -> Result<f64> {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidParameter(format!("profile {what} must be finite")))
            }
        };
        Ok(match *self {
            ProfileSpec::Constant { value } => Coefficient::constant(finite(value, "value")?),
            ProfileSpec::Trig {
                mean,
                amplitude,
                wavenumber,
                frequency,
                phase,
            } => Coefficient::trig(
                finite(mean, "mean")?,
                finite(amplitude, "amplitude")?,
                finite(wavenumber, "wavenumber")?,
                finite(frequency, "frequency")?,
                finite(phase, "phase")?,
            ),
            ProfileSpec::Rational {
                amplitude,
                power,
                odd,
            } => {
                if !(power.is_finite() && power >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "rational profile power must be nonnegative, got {power}"
                    )));
                }
                Coefficient::rational(finite(amplitude, "amplitude")?, power, odd)
            }
        })
    }

    pub fn cos(amplitude: f64) -> Self {
        ProfileSpec::Trig {
            mean: 0.0,
            amplitude,
            wavenumber: 1.0,
            frequency: 0.0,
            phase: FRAC_PI_2,
        }
    }

    pub fn zero() -> Self {
        ProfileSpec::Constant { value: 0.0 }
    }
}

/// The four coefficients `[a0, a1, a2, a3]` plus metadata.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub name: String,
    a: [Coefficient; 4],
    sign: f64,
}

impl CoefficientSet {
    /// Declared dispersion sign is taken from `a3(0, 0)`.
    pub fn new(
        name: impl Into<String>,
        a3: Coefficient,
        a2: Coefficient,
        a1: Coefficient,
        a0: Coefficient,
    ) -> Self {
        let s = a3.value(0.0, 0.0);
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        Self {
            name: name.into(),
            a: [a0, a1, a2, a3],
            sign,
        }
    }

    pub fn with_declared_sign(mut self, sign: f64) -> Self {
        self.sign = if sign < 0.0 { -1.0 } else { 1.0 };
        self
    }

    pub fn from_profiles(name: impl Into<String>, profiles: &[ProfileSpec; 4]) -> Result<Self> {
        Ok(Self::new(
            name,
            profiles[3].build()?,
            profiles[2].build()?,
            profiles[1].build()?,
            profiles[0].build()?,
        ))
    }

    /// `a_j`.
    #[inline]
    pub fn a(&self, j: usize) -> &Coefficient {
        &self.a[j]
    }

    pub fn coefficients(&self) -> &[Coefficient; 4] {
        &self.a
    }

    /// `+1` or `-1`.
    pub fn dispersion_sign(&self) -> f64 {
        self.sign
    }

    pub fn is_autonomous(&self) -> bool {
        self.a.iter().all(Coefficient::is_autonomous)
    }

    #[inline]
    pub fn eval(&self, j: usize, t: f64, x: f64, dx: usize, dt: usize) -> f64 {
        self.a[j].eval(t, x, dx, dt)
    }

    /// `a_j(t, x_i)` for `j = 0..4`.
    pub fn sample_all(&self, t: f64, grid: &SpatialGrid) -> [Vec<f64>; 4] {
        std::array::from_fn(|j| self.a[j].sample(t, grid, 0))
    }

    /// Same set with one coefficient replaced.
    pub fn replace(&self, j: usize, c: Coefficient) -> Self {
        let mut out = self.clone();
        out.a[j] = c;
        if j == 3 {
            let s = out.a[3].value(0.0, 0.0);
            out.sign = if s < 0.0 { -1.0 } else { 1.0 };
        }
        out
    }

    /// Sup norm of all coefficient values sampled on the grid.
    pub fn sup_norm(&self, t: f64, grid: &SpatialGrid) -> f64 {
        self.sample_all(t, grid)
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Rectangle `[x0, x1] × [t0, t1]` on which assumptions are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl Window {
    pub fn new(x: (f64, f64), t: (f64, f64)) -> Self {
        Self { x, t }
    }

    pub fn at_time(x: (f64, f64), t: f64) -> Self {
        Self { x, t: (t, t) }
    }

    fn samples(range: (f64, f64), density: f64) -> Vec<f64> {
        let len = range.1 - range.0;
        let count = ((len * density).ceil() as usize).max(1);
        (0..=count)
            .map(|i| range.0 + len * i as f64 / count as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyBounds {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub upper: f64,
    pub window: Window,
}

pub fn check_nondegeneracy(
    coeffs: &CoefficientSet,
    window: Window,
    sample_density: f64,
) -> Result<NondegeneracyBounds> {
    check_nondegeneracy_with_floor(coeffs, window, sample_density, DEFAULT_DISPERSION_FLOOR)
}

pub fn check_nondegeneracy_with_floor(
    coeffs: &CoefficientSet,
    window: Window,
    sample_density: f64,
    floor: f64,
) -> Result<NondegeneracyBounds> {
    if sample_density.is_nan() || sample_density < 8.0 {
        return Err(Error::InvalidParameter(format!(
            "sample density must be at least 8 per unit length, got {sample_density}"
        )));
    }
    if !(window.x.0 <= window.x.1 && window.t.0 <= window.t.1) {
        return Err(Error::InvalidParameter("window bounds must be ordered".into()));
    }
    let sign = coeffs.dispersion_sign();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &t in &Window::samples(window.t, sample_density) {
        for &x in &Window::samples(window.x, sample_density) {
            let v = coeffs.a(3).value(t, x);
            if !v.is_finite() {
                return Err(Error::DegenerateDispersion {
                    t,
                    x,
                    value: v,
                    reason: "non-finite value",
                });
            }
            if v * sign <= 0.0 {
                return Err(Error::DegenerateDispersion {
                    t,
                    x,
                    value: v,
                    reason: "sign differs from declared sign",
                });
            }
            if v.abs() < floor {
                return Err(Error::DegenerateDispersion {
                    t,
                    x,
                    value: v,
                    reason: "magnitude below floor",
                });
            }
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
    }
    Ok(NondegeneracyBounds {
        lambda: lo,
        upper: hi,
        window,
    })
}

fn grid_window(grid: &SpatialGrid, t: f64) -> Window {
    Window::at_time(
        (-grid.half_length(), grid.half_length() - grid.spacing()),
        t,
    )
}

/// `M(x_i, t) = ∫_0^{x_i} a2 / |a3|`.
pub fn mizohata_integral(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<Vec<f64>> {
    let density = (1.0 / grid.spacing()).max(8.0);
    check_nondegeneracy(coeffs, grid_window(grid, t), density)?;
    let integrand: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.x(i);
            coeffs.a(2).value(t, x) / coeffs.a(3).value(t, x).abs()
        })
        .collect();
    cumulative_integral(&integrand, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Bounded,
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Packet anchor: the end of the interval the packet starts from.
    pub x0: f64,
    /// Interval length.
    #[serde(rename = "N")]
    pub travel: f64,
    /// `exp((M(b) - M(a)) / 3)` over the interval `[a, b]`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSup {
    pub window: (f64, f64),
    pub sup_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MizohataReport {
    pub t: f64,
    /// Abscissae of the tabulated `M`.
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub windows: Vec<WindowSup>,
    pub sup_abs: f64,
    pub trend: Trend,
    pub witness: Option<Witness>,
    /// Finite data cannot decide divergence; the trend is a heuristic.
    pub heuristic: bool,
}

/// Spacing of the table built by [`classify_condition`].
pub const CLASSIFY_SPACING: f64 = 1.0 / 64.0;

/// Tabulates `M` on the union of the windows (and the origin) with the
/// trapezoid rule at [`CLASSIFY_SPACING`].
pub fn mizohata_table(
    coeffs: &CoefficientSet,
    t: f64,
    range: (f64, f64),
    spacing: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lo = range.0.min(0.0);
    let hi = range.1.max(0.0);
    let left = (-lo / spacing).ceil() as usize;
    let right = (hi / spacing).ceil() as usize;
    let xs: Vec<f64> = (0..=left + right)
        .map(|i| (i as f64 - left as f64) * spacing)
        .collect();
    check_nondegeneracy(
        coeffs,
        Window::at_time((xs[0], xs[xs.len() - 1]), t),
        (1.0 / spacing).max(8.0),
    )?;
    let f: Vec<f64> = xs
        .iter()
        .map(|&x| coeffs.a(2).value(t, x) / coeffs.a(3).value(t, x).abs())
        .collect();
    let mut m = vec![0.0; xs.len()];
    for i in left + 1..xs.len() {
        m[i] = m[i - 1] + 0.5 * spacing * (f[i - 1] + f[i]);
    }
    for i in (0..left).rev() {
        m[i] = m[i + 1] - 0.5 * spacing * (f[i] + f[i + 1]);
    }
    Ok((xs, m))
}

/// Classifies growth of `sup|M|` over nested windows and, when growing,
/// returns the interval in the largest window maximizing `M(b) - M(a)`.
pub fn classify_condition(
    coeffs: &CoefficientSet,
    t: f64,
    windows: &[(f64, f64)],
    threshold: f64,
) -> Result<MizohataReport> {
    if windows.len() < 2 {
        return Err(Error::InvalidParameter("at least two nested windows are required".into()));
    }
    for w in windows.windows(2) {
        if !(w[1].0 <= w[0].0 && w[1].1 >= w[0].1) {
            return Err(Error::InvalidParameter("windows must be nested and increasing".into()));
        }
    }
    for w in windows {
        if w.0 >= w.1 {
            return Err(Error::InvalidParameter(format!("empty window {w:?}")));
        }
    }
    let outer = windows[windows.len() - 1];
    let (xs, m) = mizohata_table(coeffs, t, outer, CLASSIFY_SPACING)?;
    let sups: Vec<WindowSup> = windows
        .iter()
        .map(|&w| WindowSup {
            window: w,
            sup_abs: xs
                .iter()
                .zip(&m)
                .filter(|(x, _)| **x >= w.0 - 1e-12 && **x <= w.1 + 1e-12)
                .fold(0.0, |s, (_, v)| s.max(v.abs())),
        })
        .collect();
    let growing = sups[sups.len() - 1].sup_abs - sups[0].sup_abs > threshold;
    let witness = if growing {
        largest_increment(&xs, &m, outer).map(|(a, b, inc)| {
            witness_for(coeffs, a, b, inc)
        })
    } else {
        None
    };
    Ok(MizohataReport {
        t,
        sup_abs: sups[sups.len() - 1].sup_abs,
        windows: sups,
        trend: if growing { Trend::Growing } else { Trend::Bounded },
        witness,
        x: xs,
        m,
        heuristic: true,
    })
}

fn witness_for(coeffs: &CoefficientSet, a: f64, b: f64, increment: f64) -> Witness {
    // With a3 < 0 the reflected problem has its packet start at the left end.
    let x0 = if coeffs.dispersion_sign() > 0.0 { b } else { a };
    Witness {
        x0,
        travel: b - a,
        value: (increment / 3.0).exp(),
    }
}

/// `max_{a < b} M(b) - M(a)` restricted to `window`.
fn largest_increment(xs: &[f64], m: &[f64], window: (f64, f64)) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    let mut low: Option<(f64, f64)> = None;
    for (x, v) in xs.iter().zip(m) {
        if *x < window.0 - 1e-12 || *x > window.1 + 1e-12 {
            continue;
        }
        if let Some((xa, va)) = low {
            let inc = v - va;
            if inc > 0.0 && best.is_none_or(|b| inc > b.2) {
                best = Some((xa, *x, inc));
            }
        }
        if low.is_none_or(|(_, va)| *v < va) {
            low = Some((*x, *v));
        }
    }
    best
}

/// Shortest interval `[a, b]` inside `window` with `M(b) - M(a) ≥ target`.
pub fn find_witness(
    coeffs: &CoefficientSet,
    t: f64,
    window: (f64, f64),
    target_increment: f64,
) -> Result<Option<Witness>> {
    let (xs, m) = mizohata_table(coeffs, t, window, CLASSIFY_SPACING)?;
    let idx: Vec<usize> = (0..xs.len())
        .filter(|&i| xs[i] >= window.0 - 1e-12 && xs[i] <= window.1 + 1e-12)
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for (p, &ib) in idx.iter().enumerate() {
        for &ia in idx[..p].iter().rev() {
            if let Some((ba, bb)) = best {
                if ib - ia >= bb - ba {
                    break;
                }
            }
            if m[ib] - m[ia] >= target_increment {
                best = Some((ia, ib));
                break;
            }
        }
    }
    Ok(best.map(|(ia, ib)| witness_for(coeffs, xs[ia], xs[ib], m[ib] - m[ia])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub name: String,
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
    pub max_mismatch: f64,
    pub tolerance: f64,
}

/// Derivatives consumed downstream, as `(j, dx, dt)`.
const REQUIRED_DERIVATIVES: [(usize, usize, usize); 8] = [
    (3, 1, 0),
    (3, 2, 0),
    (3, 3, 0),
    (2, 1, 0),
    (2, 2, 0),
    (1, 1, 0),
    (3, 0, 1),
    (2, 0, 1),
];

/// Compares each derivative evaluator against a centered difference of its
/// parent on the window. The mismatch is `max|fd - analytic| / max(1, sup|analytic|)`.
pub fn validate_derivatives(
    coeffs: &CoefficientSet,
    window: Window,
    tolerance: f64,
) -> Result<DerivativeReport> {
    let xs = Window::samples(window.x, 8.0);
    let ts = Window::samples(window.t, 8.0);
    let mut checks = Vec::new();
    for (j, m, q) in REQUIRED_DERIVATIVES {
        let c = coeffs.a(j);
        let (mut err, mut scale) = (0.0f64, 1.0f64);
        for &t in &ts {
            for &x in &xs {
                let analytic = c.eval(t, x, m, q);
                let fd = if q > 0 {
                    central_difference(|s| c.eval(s, x, m, q - 1), t)
                } else {
                    central_difference(|s| c.eval(t, s, m - 1, q), x)
                };
                err = err.max((fd - analytic).abs());
                scale = scale.max(analytic.abs());
            }
        }
        let name = if q > 0 {
            format!("dt a{j}")
        } else {
            format!("dx^{m} a{j}")
        };
        checks.push(DerivativeCheck {
            name,
            mismatch: err / scale,
        });
    }
    let worst = checks
        .iter()
        .cloned()
        .fold(None::<DerivativeCheck>, |w, c| match w {
            Some(w) if w.mismatch >= c.mismatch => Some(w),
            _ => Some(c),
        })
        .expect("at least one derivative is checked");
    if worst.mismatch > tolerance {
        return Err(Error::InconsistentDerivative {
            name: worst.name,
            mismatch: worst.mismatch,
            tolerance,
        });
    }
    Ok(DerivativeReport {
        max_mismatch: worst.mismatch,
        checks,
        tolerance,
    })
}

/// A named preset and the structural assumptions it exhibits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub assumptions: &'static str,
    /// Profiles for `[a0, a1, a2, a3]`.
    pub profiles: [ProfileSpec; 4],
}

impl Preset {
    pub fn build(&self) -> Result<CoefficientSet> {
        CoefficientSet::from_profiles(self.name, &self.profiles)
    }
}

fn c(value: f64) -> ProfileSpec {
    ProfileSpec::Constant { value }
}

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "airy",
            description: "a3 = 1, a2 = a1 = a0 = 0",
            assumptions: "A1+A3, a2 = 0",
            profiles: [c(0.0), c(0.0), c(0.0), c(1.0)],
        },
        Preset {
            name: "good-diffusion",
            description: "a3 = 1, a2 = -1",
            assumptions: "A1+A3 (dissipative)",
            profiles: [c(0.0), c(0.0), c(-1.0), c(1.0)],
        },
        Preset {
            name: "anti-diffusion-constant",
            description: "a3 = 1, a2 = 1",
            assumptions: "A1+A3N witness family",
            profiles: [c(0.0), c(0.0), c(1.0), c(1.0)],
        },
        Preset {
            name: "trig-diffusion",
            description: "a3 = 1, a2 = cos x",
            assumptions: "A1+A3 (bounded Mizohata integral)",
            profiles: [c(0.0), c(0.0), ProfileSpec::cos(1.0), c(1.0)],
        },
        Preset {
            name: "variable-dispersion",
            description: "a3 = 2 + sin x, a2 = a1 = a0 = 0",
            assumptions: "A1+A3, lambda = 1, Lambda = 3",
            profiles: [
                c(0.0),
                c(0.0),
                c(0.0),
                ProfileSpec::Trig {
                    mean: 2.0,
                    amplitude: 1.0,
                    wavenumber: 1.0,
                    frequency: 0.0,
                    phase: 0.0,
                },
            ],
        },
        Preset {
            name: "decaying-diffusion",
            description: "a3 = 1, a2 = <x>^-2",
            assumptions: "A1+A3 (integrable a2)",
            profiles: [
                c(0.0),
                c(0.0),
                ProfileSpec::Rational {
                    amplitude: 1.0,
                    power: 2.0,
                    odd: false,
                },
                c(1.0),
            ],
        },
        Preset {
            name: "rational-drift",
            description: "a3 = 1, a1 = x <x>^-2",
            assumptions: "A1+A3, a2 = 0",
            profiles: [
                c(0.0),
                ProfileSpec::Rational {
                    amplitude: 1.0,
                    power: 2.0,
                    odd: true,
                },
                c(0.0),
                c(1.0),
            ],
        },
        Preset {
            name: "negative-dispersion",
            description: "a3 = -1, a2 = cos x",
            assumptions: "A1 (a3 < 0)+A3",
            profiles: [c(0.0), c(0.0), ProfileSpec::cos(1.0), c(-1.0)],
        },
        Preset {
            name: "drifting-dispersion",
            description: "a3 = 2 + 0.5 sin(x - t), a2 = 0.5 cos x, a0 = 0.1",
            assumptions: "A1+A3, time dependent",
            profiles: [
                c(0.1),
                c(0.0),
                ProfileSpec::cos(0.5),
                ProfileSpec::Trig {
                    mean: 2.0,
                    amplitude: 0.5,
                    wavenumber: 1.0,
                    frequency: -1.0,
                    phase: 0.0,
                },
            ],
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

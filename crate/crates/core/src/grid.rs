//! Uniform periodic grid on `[-L, L)`, fourth-order finite differences,
//! trapezoidal quadrature and the norms used by the diagnostics.
//!
//! The grid always has an even number of points, so `x = 0` is the node with
//! index `n / 2`. Integrals anchored at the origin start there.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `⟨x⟩ = sqrt(1 + x²)`.
#[inline]
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Centered periodic stencils over offsets `-3..=3`, scaled so that the
/// derivative of order `j` is `Σ c[k] u[i + k - 3] / h^j`.
pub(crate) const STENCILS: [[f64; 7]; 4] = [
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [
        0.0,
        1.0 / 12.0,
        -8.0 / 12.0,
        0.0,
        8.0 / 12.0,
        -1.0 / 12.0,
        0.0,
    ],
    [
        0.0,
        -1.0 / 12.0,
        16.0 / 12.0,
        -30.0 / 12.0,
        16.0 / 12.0,
        -1.0 / 12.0,
        0.0,
    ],
    [
        1.0 / 8.0,
        -1.0,
        13.0 / 8.0,
        0.0,
        -13.0 / 8.0,
        1.0,
        -1.0 / 8.0,
    ],
];

/// Half-width of the widest stencil.
pub(crate) const STENCIL_RADIUS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    half_length: f64,
    points: usize,
}

impl SpatialGrid {
    /// Grid on `[-half_length, half_length)` with `points` nodes.
    pub fn new(half_length: f64, points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid half-length must be positive and finite, got {half_length}"
            )));
        }
        if points < 16 || points % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid point count must be even and at least 16, got {points}"
            )));
        }
        Ok(Self {
            half_length,
            points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Index of the node at `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.points / 2
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Largest wavenumber represented on the grid, `π / h`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Signed discrete wavenumbers `π k / L` in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points as isize;
        (0..n)
            .map(|k| {
                let k = if k < n / 2 { k } else { k - n };
                std::f64::consts::PI * k as f64 / self.half_length
            })
            .collect()
    }

    /// True when `[a, b]` stays at least `margin * 2L` away from both ends.
    pub fn contains_with_margin(&self, a: f64, b: f64, margin: f64) -> bool {
        let pad = margin * 2.0 * self.half_length;
        a >= -self.half_length + pad && b <= self.half_length - pad
    }
}

/// Complex samples of a function on a [`SpatialGrid`] at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: SpatialGrid,
    pub values: Vec<Complex64>,
    pub t: f64,
}

impl Field {
    pub fn zeros(grid: SpatialGrid, t: f64) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            t,
        }
    }

    pub fn from_values(grid: SpatialGrid, values: Vec<Complex64>, t: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, values, t })
    }

    pub fn from_fn(grid: SpatialGrid, t: f64, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self { grid, values, t }
    }

    pub fn from_real_fn(grid: SpatialGrid, t: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, t, |x| Complex64::new(f(x), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * alpha).collect(),
            t: self.t,
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: Complex64, other: &Field, beta: Complex64) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
            t: self.t,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Fraction of `Σ|u|²` carried by nodes within `margin * 2L` of either end.
    pub fn boundary_mass_fraction(&self, margin: f64) -> f64 {
        let pad = margin * 2.0 * self.grid.half_length;
        let lo = -self.grid.half_length + pad;
        let hi = self.grid.half_length - pad;
        let (mut edge, mut total) = (0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let m = v.norm_sqr();
            total += m;
            let x = self.grid.x(i);
            if x < lo || x >= hi {
                edge += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Periodic six-point Lagrange interpolation at an arbitrary abscissa.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let h = self.grid.spacing();
        let n = self.grid.len() as isize;
        let s = (x + self.grid.half_length) / h;
        let base = s.floor();
        let frac = s - base;
        let base = base as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, w) in lagrange6_weights(frac).iter().enumerate() {
            let idx = (base - 2 + j as isize).rem_euclid(n) as usize;
            acc += self.values[idx] * *w;
        }
        acc
    }
}

/// Weights of the six-point Lagrange interpolant on nodes `-2..=3` at `s ∈ [0, 1)`.
pub(crate) fn lagrange6_weights(s: f64) -> [f64; 6] {
    let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    let mut w = [0.0; 6];
    for (j, wj) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for (k, xk) in nodes.iter().enumerate() {
            if k != j {
                p *= (s - xk) / (nodes[j] - xk);
            }
        }
        *wj = p;
    }
    w
}

pub(crate) fn ensure_same_grid(a: &SpatialGrid, b: &SpatialGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "grid (L={}, n={}) vs (L={}, n={})",
            a.half_length(),
            a.len(),
            b.half_length(),
            b.len()
        )));
    }
    Ok(())
}

/// Fourth-order centered periodic approximation of `∂x^order`.
pub fn derivative(field: &Field, order: usize) -> Result<Field> {
    if !(1..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let values = apply_stencil(&field.values, order, field.grid.spacing());
    Ok(Field {
        grid: field.grid,
        values,
        t: field.t,
    })
}

pub(crate) fn apply_stencil(values: &[Complex64], order: usize, h: f64) -> Vec<Complex64> {
    let n = values.len();
    let c = &STENCILS[order];
    let scale = h.powi(order as i32).recip();
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, ck) in c.iter().enumerate() {
                if *ck != 0.0 {
                    let j = (i + n + k - STENCIL_RADIUS) % n;
                    acc += values[j] * *ck;
                }
            }
            acc * scale
        })
        .collect()
}

/// `(u, v) = h Σ u_i conj(v_i)`.
pub fn inner(u: &Field, v: &Field) -> Result<Complex64> {
    ensure_same_grid(&u.grid, &v.grid)?;
    Ok(inner_slices(&u.values, &v.values) * u.grid.spacing())
}

pub(crate) fn inner_slices(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

/// `(w u, u)` for a real weight sampled on the grid.
pub(crate) fn weighted_quadratic(weight: &[f64], u: &[Complex64], h: f64) -> f64 {
    weight
        .iter()
        .zip(u)
        .map(|(w, v)| w * v.norm_sqr())
        .sum::<f64>()
        * h
}

pub fn l2_norm(field: &Field) -> f64 {
    (field.grid.spacing() * field.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// Discrete `H^s` norm with Fourier multiplier `⟨ξ_k⟩^s`, `ξ_k = π k / L`.
pub fn hs_norm(field: &Field, s: f64) -> f64 {
    if s == 0.0 {
        return l2_norm(field);
    }
    let spectrum = fft(&field.values);
    let n = field.len() as f64;
    let h = field.grid.spacing();
    let sum: f64 = spectrum
        .iter()
        .zip(field.grid.wavenumbers())
        .map(|(c, k)| (1.0 + k * k).powf(s) * c.norm_sqr())
        .sum();
    (h * sum / n).sqrt()
}

pub(crate) fn fft(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Fraction of spectral energy at `|ξ| > cutoff * nyquist`.
pub fn spectral_fraction_above(field: &Field, cutoff: f64) -> f64 {
    let spectrum = fft(&field.values);
    let limit = cutoff * field.grid.nyquist();
    let (mut high, mut total) = (0.0, 0.0);
    for (c, k) in spectrum.iter().zip(field.grid.wavenumbers()) {
        let e = c.norm_sqr();
        total += e;
        if k.abs() > limit {
            high += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// `‖⟨x⟩^{-δ} ∂x u‖` at a single time.
pub fn weighted_smoothing_seminorm(field: &Field, delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= 0.5 {
        return Err(Error::InvalidParameter(format!(
            "smoothing weight exponent must exceed 1/2, got {delta}"
        )));
    }
    let du = apply_stencil(&field.values, 1, field.grid.spacing());
    let weight: Vec<f64> = (0..field.len())
        .map(|i| japanese(field.grid.x(i)).powf(-2.0 * delta))
        .collect();
    Ok(weighted_quadratic(&weight, &du, field.grid.spacing()).sqrt())
}

/// Trapezoidal antiderivative anchored at `x = 0`.
pub fn cumulative_integral(samples: &[f64], grid: &SpatialGrid) -> Result<Vec<f64>> {
    if samples.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples for a grid of {} points",
            samples.len(),
            grid.len()
        )));
    }
    let h = grid.spacing();
    let o = grid.origin_index();
    let mut out = vec![0.0; samples.len()];
    for i in o + 1..samples.len() {
        out[i] = out[i - 1] + 0.5 * h * (samples[i - 1] + samples[i]);
    }
    for i in (0..o).rev() {
        out[i] = out[i + 1] - 0.5 * h * (samples[i] + samples[i + 1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(1.0, 15).is_err());
        assert!(SpatialGrid::new(1.0, 8).is_err());
        assert!(SpatialGrid::new(-1.0, 32).is_err());
        let g = SpatialGrid::new(2.0, 32).unwrap();
        assert_eq!(g.x(g.origin_index()), 0.0);
        assert_abs_diff_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = SpatialGrid::new(5.0, 64).unwrap();
        let u = Field::from_real_fn(g, 0.0, |_| 3.5);
        for order in 1..=3 {
            let d = derivative(&u, order).unwrap();
            assert!(d.max_abs() < 1e-10, "order {order}");
        }
        assert_eq!(derivative(&u, 0), Err(Error::UnsupportedOrder(0)));
        assert_eq!(derivative(&u, 4), Err(Error::UnsupportedOrder(4)));
    }

    #[test]
    fn derivative_of_resolved_exponential_is_fourth_order() {
        // e^{ikπx/L} has exact derivative (ikπ/L)^j e^{ikπx/L}.
        let l = PI;
        let mut prev = [0.0; 3];
        for (pass, n) in [64usize, 128].into_iter().enumerate() {
            let g = SpatialGrid::new(l, n).unwrap();
            let k = 3.0 * PI / l;
            let u = Field::from_fn(g, 0.0, |x| Complex64::new(0.0, k * x).exp());
            for order in 1..=3 {
                let d = derivative(&u, order).unwrap();
                let factor = Complex64::new(0.0, k).powi(order as i32);
                let err = d
                    .values
                    .iter()
                    .zip(&u.values)
                    .map(|(a, b)| (a - factor * b).norm())
                    .fold(0.0, f64::max)
                    / factor.norm();
                if pass == 1 {
                    let ratio = prev[order - 1] / err;
                    assert!(ratio > 14.0 && ratio < 18.0, "order {order}: ratio {ratio}");
                }
                prev[order - 1] = err;
            }
        }
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = SpatialGrid::new(PI, 256).unwrap();
        let u = Field::from_real_fn(g, 0.0, f64::sin);
        let d = derivative(&u, 2).unwrap();
        let err = (0..g.len())
            .map(|i| (d.values[i] - c(-g.x(i).sin())).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = SpatialGrid::new(7.5, 96).unwrap();
        let zero = Field::zeros(g, 0.0);
        assert_eq!(l2_norm(&zero), 0.0);
        assert_eq!(hs_norm(&zero, 2.0), 0.0);
        let one = Field::from_real_fn(g, 0.0, |_| 1.0);
        assert_abs_diff_eq!(l2_norm(&one), 15.0f64.sqrt(), epsilon = 1e-13);
        let u = Field::from_real_fn(g, 0.0, |x| (-x * x).exp() * (1.0 + x));
        assert_abs_diff_eq!(hs_norm(&u, 0.0), l2_norm(&u), epsilon = 1e-14);
    }

    #[test]
    fn hs_norm_of_modulated_packet() {
        // Direct DFT oracle and the ⟨ξ0⟩ heuristic for a narrow-band packet.
        let g = SpatialGrid::new(40.0, 1024).unwrap();
        let xi0 = 20.0;
        let u = Field::from_fn(g, 0.0, |x| {
            Complex64::new(0.0, xi0 * x).exp() * (-(x / 3.0).powi(2)).exp()
        });
        let n = g.len();
        let mut direct = 0.0;
        for (m, k) in g.wavenumbers().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let phase = -2.0 * PI * (m * j) as f64 / n as f64;
                acc += u.values[j] * Complex64::new(0.0, phase).exp();
            }
            direct += (1.0 + k * k) * acc.norm_sqr();
        }
        let direct = (g.spacing() * direct / n as f64).sqrt();
        let h1 = hs_norm(&u, 1.0);
        assert_abs_diff_eq!(h1, direct, epsilon = 1e-9 * direct);
        let heuristic = japanese(xi0) * l2_norm(&u);
        assert!((h1 / heuristic - 1.0).abs() < 0.1);
    }

    #[test]
    fn smoothing_seminorm_of_cutoff_line() {
        // u = x χ(x) with χ ≡ 1 on |x| ≤ 30 and a smooth ramp to 0 before ±40.
        let g = SpatialGrid::new(40.0, 4096).unwrap();
        let ramp = |x: f64| -> f64 {
            let s = ((x.abs() - 30.0) / 8.0).clamp(0.0, 1.0);
            if s <= 0.0 {
                1.0
            } else if s >= 1.0 {
                0.0
            } else {
                let a = (-1.0 / s).exp();
                let b = (-1.0 / (1.0 - s)).exp();
                b / (a + b)
            }
        };
        let u = Field::from_real_fn(g, 0.0, |x| x * ramp(x));
        let got = weighted_smoothing_seminorm(&u, 0.75).unwrap();
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, m: usize| -> f64 {
            let dx = (b - a) / m as f64;
            let mut s = 0.0;
            for i in 0..=m {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * dx);
            }
            s * dx / 3.0
        };
        // Cutoff-free region: χ ≡ 1, so the integrand is ⟨x⟩^{-1.5}.
        let core = simpson(&|x| japanese(x).powf(-1.5), -30.0, 30.0, 6000).sqrt();
        // Whole line, with the ramp differentiated by a fine central difference.
        let du = |x: f64| {
            let e = 1e-5;
            ((x + e) * ramp(x + e) - (x - e) * ramp(x - e)) / (2.0 * e)
        };
        let full = simpson(&|x| japanese(x).powf(-1.5) * du(x).powi(2), -40.0, 40.0, 64000).sqrt();
        assert!(got > core, "got {got}, core {core}");
        assert!((got / full - 1.0).abs() < 1e-4, "got {got}, full {full}");
        let doubled = weighted_smoothing_seminorm(&u.scaled(c(2.0)), 0.75).unwrap();
        assert_eq!(doubled, 2.0 * got);
        let flat = Field::from_real_fn(g, 0.0, |_| 4.0);
        assert!(weighted_smoothing_seminorm(&flat, 0.75).unwrap() < 1e-12);
        assert!(weighted_smoothing_seminorm(&flat, 0.5).is_err());
    }

    #[test]
    fn cumulative_integral_examples() {
        let g = SpatialGrid::new(PI, 200).unwrap();
        let ones = vec![1.0; g.len()];
        let f = cumulative_integral(&ones, &g).unwrap();
        for (i, fi) in f.iter().enumerate() {
            assert_abs_diff_eq!(*fi, g.x(i), epsilon = 1e-12);
        }
        let zeros = vec![0.0; g.len()];
        assert!(cumulative_integral(&zeros, &g).unwrap().iter().all(|v| *v == 0.0));
        let cos: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
        let f = cumulative_integral(&cos, &g).unwrap();
        let err = f
            .iter()
            .enumerate()
            .map(|(i, v)| (v - g.x(i).sin()).abs())
            .fold(0.0, f64::max);
        let h = g.spacing();
        assert!(err < h * h, "err {err}");
        assert!(err > 1e-3 * h * h);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_accurate_between() {
        let g = SpatialGrid::new(10.0, 256).unwrap();
        let u = Field::from_real_fn(g, 0.0, |x| (-(x * x) / 4.0).exp());
        for i in [0, 17, 128, 255] {
            assert_abs_diff_eq!(u.interpolate(g.x(i)).re, u.values[i].re, epsilon = 1e-14);
        }
        let x = 0.3217;
        assert_abs_diff_eq!(u.interpolate(x).re, (-(x * x) / 4.0).exp(), epsilon = 1e-7);
    }

    #[test]
    fn boundary_mass_flags_edges() {
        let g = SpatialGrid::new(10.0, 200).unwrap();
        let centred = Field::from_real_fn(g, 0.0, |x| (-(x * x)).exp());
        assert!(centred.boundary_mass_fraction(0.1) < 1e-20);
        let edge = Field::from_real_fn(g, 0.0, |x| (-(x - 9.5).powi(2)).exp());
        assert!(edge.boundary_mass_fraction(0.1) > 0.5);
    }
}

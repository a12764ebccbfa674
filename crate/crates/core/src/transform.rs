//! Reduction to constant dispersion through `y(x, t) = ∫_0^x a3^{-1/3}`,
//! transport of fields between the `x` and `y` grids, the reduced
//! coefficients, and the adjoint, time-reversal and reflection symmetries.
//!
//! With `p = ∂x y = a3^{-1/3}` and `u = v(y) / p`, the equation for `v` has
//! `c3 = 1`, `c2 = a2 p²` and no other second-order contribution because
//! `p' − q p² = 0` for `q = p'/p²`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coefficients::{check_nondegeneracy, Coefficient, CoefficientSet, Window};
use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, Field, SpatialGrid};

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub(crate) const GL3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Tolerance on `|y(x(y_j)) − y_j|` when inverting the map.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

pub(crate) fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    GL3.iter().map(|(s, w)| w * f(a + s * len)).sum::<f64>() * len
}

/// Antiderivative anchored at `x = 0`, cell-wise three-point Gauss–Legendre.
pub(crate) fn cumulative_gauss(f: &impl Fn(f64) -> f64, grid: &SpatialGrid) -> Vec<f64> {
    let n = grid.len();
    let o = grid.origin_index();
    let mut out = vec![0.0; n];
    for i in o + 1..n {
        out[i] = out[i - 1] + gauss_legendre(f, grid.x(i - 1), grid.x(i));
    }
    for i in (0..o).rev() {
        out[i] = out[i + 1] - gauss_legendre(f, grid.x(i), grid.x(i + 1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableChange {
    pub t: f64,
    pub x_grid: SpatialGrid,
    pub y_of_x: Vec<f64>,
    pub y_grid: SpatialGrid,
    pub x_of_y: Vec<f64>,
    /// `∂x y = a3^{-1/3}` at the `x` nodes.
    pub dydx: Vec<f64>,
    /// `∂x y` at the points `x(y_j)`.
    pub dydx_at_y: Vec<f64>,
}

impl VariableChange {
    /// `max_j |y(x(y_j)) − y_j|` recomputed from the table.
    pub fn composition_error(&self, coeffs: &CoefficientSet) -> f64 {
        let f = |x: f64| coeffs.a(3).value(self.t, x).powf(-1.0 / 3.0);
        self.x_of_y
            .iter()
            .enumerate()
            .map(|(j, x)| (self.y_at(&f, *x) - self.y_grid.x(j)).abs())
            .fold(0.0, f64::max)
    }

    /// `y(x)` at an arbitrary abscissa inside `[-L, L]`.
    fn y_at(&self, f: &impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = self.x_grid.spacing();
        let n = self.x_grid.len();
        let i = (((x - self.x_grid.x(0)) / h).floor().max(0.0) as usize).min(n - 1);
        self.y_of_x[i] + gauss_legendre(f, self.x_grid.x(i), x)
    }

    /// Rows `x, y(x), dy/dx` then `y, x(y)`, as CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("grid,index,abscissa,image,jacobian\n");
        for i in 0..self.x_grid.len() {
            let _ = writeln!(s, "x,{i},{},{},{}", self.x_grid.x(i), self.y_of_x[i], self.dydx[i]);
        }
        for j in 0..self.y_grid.len() {
            let _ = writeln!(s, "y,{j},{},{},{}", self.y_grid.x(j), self.x_of_y[j], self.dydx_at_y[j]);
        }
        s
    }
}

fn require_positive_dispersion(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<()> {
    if coeffs.dispersion_sign() < 0.0 {
        return Err(Error::InvalidParameter(
            "straightening requires a3 > 0; apply space_reflection first".into(),
        ));
    }
    check_nondegeneracy(
        coeffs,
        Window::at_time((-grid.half_length(), grid.half_length()), t),
        (1.0 / grid.spacing()).max(8.0),
    )?;
    Ok(())
}

pub fn straightening_map(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<VariableChange> {
    require_positive_dispersion(coeffs, t, grid)?;
    let a3 = coeffs.a(3);
    let f = |x: f64| a3.value(t, x).powf(-1.0 / 3.0);
    let y_of_x = cumulative_gauss(&f, grid);
    for i in 1..y_of_x.len() {
        if y_of_x[i] <= y_of_x[i - 1] {
            return Err(Error::NonMonotone { x: grid.x(i) });
        }
    }
    let dydx: Vec<f64> = (0..grid.len()).map(|i| f(grid.x(i))).collect();
    let l = grid.half_length();
    let y_right = y_of_x[grid.len() - 1] + gauss_legendre(&f, grid.x(grid.len() - 1), l);
    let y_grid = SpatialGrid::new((-y_of_x[0]).min(y_right), grid.len())?;

    // Table including the right end point for bracketing.
    let mut xs = grid.nodes();
    xs.push(l);
    let mut ys = y_of_x.clone();
    ys.push(y_right);
    let mut slopes = dydx.clone();
    slopes.push(f(l));
    let guess = Pchip::new(&ys, &xs);

    let mut vc = VariableChange {
        t,
        x_grid: *grid,
        y_of_x,
        y_grid,
        x_of_y: Vec::with_capacity(grid.len()),
        dydx,
        dydx_at_y: Vec::with_capacity(grid.len()),
    };
    for j in 0..y_grid.len() {
        let target = y_grid.x(j);
        let x = if j == y_grid.origin_index() {
            0.0
        } else {
            invert(&vc, &f, &xs, &ys, &guess, target)?
        };
        vc.x_of_y.push(x);
        vc.dydx_at_y.push(f(x));
    }
    Ok(vc)
}

/// Safeguarded Newton iteration on `y(x) − target` inside the bracketing cell.
fn invert(
    vc: &VariableChange,
    f: &impl Fn(f64) -> f64,
    xs: &[f64],
    ys: &[f64],
    guess: &Pchip,
    target: f64,
) -> Result<f64> {
    let k = ys.partition_point(|y| *y <= target).clamp(1, ys.len() - 1);
    let (mut lo, mut hi) = (xs[k - 1], xs[k]);
    let mut x = guess.eval(target).clamp(lo, hi);
    for _ in 0..200 {
        let r = vc.y_at(f, x) - target;
        if r.abs() <= INVERSION_TOLERANCE * 1e-2 || hi - lo < 1e-15 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - r / f(x);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let r = vc.y_at(f, x) - target;
    if r.abs() <= INVERSION_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::NonMonotone { x })
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson).
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            d,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|v| *v <= x).clamp(1, self.xs.len() - 1) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let (h00, h10) = ((1.0 + 2.0 * s) * (1.0 - s).powi(2), s * (1.0 - s).powi(2));
        let (h01, h11) = (s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        h00 * self.ys[k] + h10 * h * self.d[k] + h01 * self.ys[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// `v(y_j) = a3^{-1/3}(x(y_j)) u(x(y_j))`.
pub fn pushforward(u: &Field, vc: &VariableChange) -> Result<Field> {
    ensure_same_grid(&u.grid, &vc.x_grid)?;
    let values = vc
        .x_of_y
        .iter()
        .zip(&vc.dydx_at_y)
        .map(|(x, p)| u.interpolate(*x) * *p)
        .collect();
    Ok(Field {
        grid: vc.y_grid,
        values,
        t: u.t,
    })
}

/// `u(x_i) = a3^{1/3}(x_i) v(y(x_i))`.
pub fn pullback(v: &Field, vc: &VariableChange) -> Result<Field> {
    ensure_same_grid(&v.grid, &vc.y_grid)?;
    let values = vc
        .y_of_x
        .iter()
        .zip(&vc.dydx)
        .map(|(y, p)| v.interpolate(*y) / *p)
        .collect();
    Ok(Field {
        grid: vc.x_grid,
        values,
        t: v.t,
    })
}

/// Coefficients of the reduced equation on `vc.y_grid`, frozen at `t`.
pub fn reduced_coefficients(coeffs: &CoefficientSet, t: f64, vc: &VariableChange) -> Result<CoefficientSet> {
    require_positive_dispersion(coeffs, t, &vc.x_grid)?;
    let a3 = coeffs.a(3);
    let yt_density = |x: f64| -a3.dt(t, x) * a3.value(t, x).powf(-4.0 / 3.0) / 3.0;
    let n = vc.y_grid.len();
    let mut c = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let yt_table = cumulative_gauss(&yt_density, &vc.x_grid);
    let h = vc.x_grid.spacing();
    for (j, &x) in vc.x_of_y.iter().enumerate() {
        let e = |k: usize, m: usize| coeffs.eval(k, t, x, m, 0);
        let (b0, b1, b2, b3) = (e(3, 0), e(3, 1), e(3, 2), e(3, 3));
        let p = b0.powf(-1.0 / 3.0);
        let dp = -b0.powf(-4.0 / 3.0) * b1 / 3.0;
        let q = -b0.powf(-2.0 / 3.0) * b1 / 3.0;
        let dq = -(b0.powf(-2.0 / 3.0) * b2 - 2.0 / 3.0 * b0.powf(-5.0 / 3.0) * b1 * b1) / 3.0;
        let d2q = -(b0.powf(-2.0 / 3.0) * b3 - 2.0 * b0.powf(-5.0 / 3.0) * b1 * b2
            + 10.0 / 9.0 * b0.powf(-8.0 / 3.0) * b1.powi(3))
            / 3.0;
        let i = (((x - vc.x_grid.x(0)) / h).floor().max(0.0) as usize).min(vc.x_grid.len() - 1);
        let yt = yt_table[i] + gauss_legendre(&yt_density, vc.x_grid.x(i), x);
        let (a2, a1, a0) = (e(2, 0), e(1, 0), e(0, 0));
        c[2][j] = a2 * p * p;
        c[1][j] = yt - b0 * p * (2.0 * dq * p + q * dp) - a2 * p * p * q + a1 * p;
        c[0][j] = a3.dt(t, x) / (3.0 * b0) - b0 * p * d2q - a2 * p * dq - a1 * p * q + a0;
    }
    let origin = -vc.y_grid.half_length();
    let hy = vc.y_grid.spacing();
    let [c0, c1, c2] = c;
    let mut out = CoefficientSet::new(
        format!("{}-reduced", coeffs.name),
        Coefficient::constant(1.0),
        Coefficient::tabulated("c2", origin, hy, c2),
        Coefficient::tabulated("c1", origin, hy, c1),
        Coefficient::tabulated("c0", origin, hy, c0),
    );
    out.name = format!("{}-reduced@{t}", coeffs.name);
    Ok(out)
}

/// Formal adjoint `L*`.
pub fn adjoint(coeffs: &CoefficientSet) -> CoefficientSet {
    let [a0, a1, a2, a3] = coeffs.coefficients().clone();
    let b3 = Coefficient::combination("-a3", vec![(-1.0, a3.clone(), 0)]);
    let b2 = Coefficient::combination("a2 - 3a3'", vec![(1.0, a2.clone(), 0), (-3.0, a3.clone(), 1)]);
    let b1 = Coefficient::combination(
        "-a1 + 2a2' - 3a3''",
        vec![(-1.0, a1.clone(), 0), (2.0, a2.clone(), 1), (-3.0, a3.clone(), 2)],
    );
    let b0 = Coefficient::combination(
        "a0 - a1' + a2'' - a3'''",
        vec![(1.0, a0, 0), (-1.0, a1, 1), (1.0, a2, 2), (-1.0, a3, 3)],
    );
    CoefficientSet::new(format!("{}*", coeffs.name), b3, b2, b1, b0)
        .with_declared_sign(-coeffs.dispersion_sign())
}

/// `b_j(t, x) = −a_j(T − t, x)`.
pub fn time_reversal(coeffs: &CoefficientSet, horizon: f64) -> CoefficientSet {
    let b: [Coefficient; 4] = std::array::from_fn(|j| coeffs.a(j).remapped(-1.0, -1.0, horizon, 1.0));
    let [b0, b1, b2, b3] = b;
    CoefficientSet::new(format!("{}-reversed", coeffs.name), b3, b2, b1, b0)
        .with_declared_sign(-coeffs.dispersion_sign())
}

/// `b_j(t, x) = (−1)^j a_j(t, −x)`.
pub fn space_reflection(coeffs: &CoefficientSet) -> CoefficientSet {
    let b: [Coefficient; 4] = std::array::from_fn(|j| {
        let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
        coeffs.a(j).remapped(sign, 1.0, 0.0, -1.0)
    });
    let [b0, b1, b2, b3] = b;
    CoefficientSet::new(format!("{}-reflected", coeffs.name), b3, b2, b1, b0)
        .with_declared_sign(-coeffs.dispersion_sign())
}

/// `u(x) ↦ u(−x)` on a grid symmetric about the origin node.
pub fn reflect_field(u: &Field) -> Field {
    let n = u.len();
    Field {
        grid: u.grid,
        values: (0..n).map(|i| u.values[(n - i) % n]).collect(),
        t: u.t,
    }
}

/// Reduction data for one time, with the reflection applied when `a3 < 0`.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub reflected: bool,
    /// The set that was straightened (reflected when needed).
    pub working: CoefficientSet,
    pub change: VariableChange,
    pub reduced: CoefficientSet,
}

impl Reduction {
    pub fn new(coeffs: &CoefficientSet, t: f64, grid: &SpatialGrid) -> Result<Self> {
        let reflected = coeffs.dispersion_sign() < 0.0;
        let working = if reflected {
            space_reflection(coeffs)
        } else {
            coeffs.clone()
        };
        let change = straightening_map(&working, t, grid)?;
        let reduced = reduced_coefficients(&working, t, &change)?;
        Ok(Self {
            reflected,
            working,
            change,
            reduced,
        })
    }

    /// Field on the original `x` grid to the `y` grid.
    pub fn forward(&self, u: &Field) -> Result<Field> {
        if self.reflected {
            pushforward(&reflect_field(u), &self.change)
        } else {
            pushforward(u, &self.change)
        }
    }

    /// Field on the `y` grid back to the original `x` grid.
    pub fn backward(&self, v: &Field) -> Result<Field> {
        let u = pullback(v, &self.change)?;
        Ok(if self.reflected { reflect_field(&u) } else { u })
    }
}

//! Direct solver for complex cyclic banded systems with half-bandwidth 3.
//!
//! The matrix is split as `[[A11, A12], [A21, A22]]` with `A22` the trailing
//! 3×3 block. `A11` is then a plain band matrix (the periodic corners live in
//! `A12` and `A21`) and is factored by banded LU with partial pivoting. The
//! border is eliminated through the 3×3 Schur complement.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Half-bandwidth of every stencil handled here.
pub const HALF_BANDWIDTH: usize = 3;
const KL: usize = HALF_BANDWIDTH;
const KU: usize = HALF_BANDWIDTH;
/// Rows per column in band storage; upper fill from pivoting adds `KL`.
const LDAB: usize = 2 * KL + KU + 1;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Row `i` holds the entries at columns `(i + k - 3) mod n` for `k = 0..7`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicBanded {
    pub rows: Vec<[Complex64; 7]>,
}

impl CyclicBanded {
    pub fn zeros(n: usize) -> Self {
        Self {
            rows: vec![[ZERO; 7]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Entry `(i, j)`; zero outside the cyclic band.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let n = self.len();
        let d = (j + n - i) % n;
        let k = if d <= KU {
            d + KL
        } else if n - d <= KL {
            KL - (n - d)
        } else {
            return ZERO;
        };
        self.rows[i][k]
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = ZERO;
                for (k, a) in self.rows[i].iter().enumerate() {
                    acc += a * x[(i + n + k - KL) % n];
                }
                acc
            })
            .collect()
    }

    pub fn factor(&self) -> Result<CyclicFactor> {
        CyclicFactor::new(self)
    }
}

/// Banded LU of a non-cyclic `m × m` band matrix, LINPACK layout.
#[derive(Debug, Clone)]
struct BandLu {
    m: usize,
    ab: Vec<Complex64>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        j * LDAB + (i + KL + KU - j)
    }

    fn factor(m: usize, entry: impl Fn(usize, usize) -> Complex64) -> std::result::Result<Self, usize> {
        let mut ab = vec![ZERO; m * LDAB];
        for j in 0..m {
            let lo = j.saturating_sub(KU);
            let hi = (j + KL).min(m - 1);
            for i in lo..=hi {
                ab[Self::idx(i, j)] = entry(i, j);
            }
        }
        let mut piv = vec![0; m];
        for j in 0..m {
            let last = (j + KL).min(m - 1);
            let mut p = j;
            let mut best = ab[Self::idx(j, j)].norm();
            for i in j + 1..=last {
                let v = ab[Self::idx(i, j)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(j);
            }
            piv[j] = p;
            let right = (j + KL + KU).min(m - 1);
            if p != j {
                for k in j..=right {
                    ab.swap(Self::idx(p, k), Self::idx(j, k));
                }
            }
            let pivot = ab[Self::idx(j, j)];
            for i in j + 1..=last {
                let l = ab[Self::idx(i, j)] / pivot;
                ab[Self::idx(i, j)] = l;
                if l != ZERO {
                    for k in j + 1..=right {
                        let u = ab[Self::idx(j, k)];
                        ab[Self::idx(i, k)] -= l * u;
                    }
                }
            }
        }
        Ok(Self { m, ab, piv })
    }

    fn solve_in_place(&self, b: &mut [Complex64]) {
        let m = self.m;
        for j in 0..m {
            let p = self.piv[j];
            if p != j {
                b.swap(p, j);
            }
            let bj = b[j];
            if bj != ZERO {
                for i in j + 1..=(j + KL).min(m - 1) {
                    b[i] -= self.ab[Self::idx(i, j)] * bj;
                }
            }
        }
        for j in (0..m).rev() {
            let mut acc = b[j];
            for k in j + 1..=(j + KL + KU).min(m - 1) {
                acc -= self.ab[Self::idx(j, k)] * b[k];
            }
            b[j] = acc / self.ab[Self::idx(j, j)];
        }
    }
}

/// Dense 3×3 LU with partial pivoting.
#[derive(Debug, Clone)]
struct SmallLu {
    a: [[Complex64; 3]; 3],
    piv: [usize; 3],
}

impl SmallLu {
    fn factor(mut a: [[Complex64; 3]; 3]) -> Option<Self> {
        let mut piv = [0; 3];
        for j in 0..3 {
            let p = (j..3)
                .max_by(|&x, &y| a[x][j].norm().total_cmp(&a[y][j].norm()))
                .unwrap_or(j);
            if a[p][j].norm() == 0.0 || !a[p][j].norm().is_finite() {
                return None;
            }
            piv[j] = p;
            a.swap(p, j);
            for i in j + 1..3 {
                let l = a[i][j] / a[j][j];
                a[i][j] = l;
                for k in j + 1..3 {
                    let u = a[j][k];
                    a[i][k] -= l * u;
                }
            }
        }
        Some(Self { a, piv })
    }

    fn solve(&self, mut b: [Complex64; 3]) -> [Complex64; 3] {
        for j in 0..3 {
            b.swap(j, self.piv[j]);
            for i in j + 1..3 {
                let bj = b[j];
                b[i] -= self.a[i][j] * bj;
            }
        }
        for j in (0..3).rev() {
            let mut acc = b[j];
            for k in j + 1..3 {
                acc -= self.a[j][k] * b[k];
            }
            b[j] = acc / self.a[j][j];
        }
        b
    }
}

/// Reusable factorization of a [`CyclicBanded`] matrix.
#[derive(Debug, Clone)]
pub struct CyclicFactor {
    n: usize,
    lu: BandLu,
    /// `A11^{-1} A12`, column-wise.
    y: [Vec<Complex64>; 3],
    /// Nonzeros of `A21` as `(column, value)` per border row.
    a21: [Vec<(usize, Complex64)>; 3],
    schur: SmallLu,
}

impl CyclicFactor {
    fn new(a: &CyclicBanded) -> Result<Self> {
        let n = a.len();
        if n < 2 * LDAB {
            return Err(Error::InvalidParameter(format!(
                "cyclic banded system needs at least {} rows, got {n}",
                2 * LDAB
            )));
        }
        let m = n - KL;
        let lu = BandLu::factor(m, |i, j| a.get(i, j))
            .map_err(|row| Error::SingularSystem { row, t: f64::NAN })?;
        let y: [Vec<Complex64>; 3] = std::array::from_fn(|c| {
            let mut col: Vec<Complex64> = (0..m).map(|i| a.get(i, m + c)).collect();
            lu.solve_in_place(&mut col);
            col
        });
        let a21: [Vec<(usize, Complex64)>; 3] = std::array::from_fn(|r| {
            (0..m)
                .map(|j| (j, a.get(m + r, j)))
                .filter(|(_, v)| *v != ZERO)
                .collect()
        });
        let mut s = [[ZERO; 3]; 3];
        for (r, row) in s.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                let mut v = a.get(m + r, m + c);
                for &(j, aj) in &a21[r] {
                    v -= aj * y[c][j];
                }
                *entry = v;
            }
        }
        let schur = SmallLu::factor(s).ok_or(Error::SingularSystem { row: m, t: f64::NAN })?;
        Ok(Self { n, lu, y, a21, schur })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = self.n - KL;
        let mut z = b[..m].to_vec();
        self.lu.solve_in_place(&mut z);
        let mut rhs = [ZERO; 3];
        for (r, v) in rhs.iter_mut().enumerate() {
            let mut acc = b[m + r];
            for &(j, aj) in &self.a21[r] {
                acc -= aj * z[j];
            }
            *v = acc;
        }
        let x2 = self.schur.solve(rhs);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi -= self.y[0][i] * x2[0] + self.y[1][i] * x2[1] + self.y[2][i] * x2[2];
        }
        z.extend_from_slice(&x2);
        z
    }
}

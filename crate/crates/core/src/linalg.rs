//! Dense complex kernels: Householder QR, the triangular reformulation of the
//! detection metric, and the batched successor evaluation.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{initial_radius_sq, Constellation, MimoInstance};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative pivot tolerance for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Builds a matrix from real entries, row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), cols, |r, c| Complex64::new(rows[r][c], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product; panics on a length mismatch.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Copy of the block `[r0, r0+rows) × [c0, c0+cols)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `H = Q R` with `Q` unitary (N×N) and `R` upper triangular (N×M).
///
/// The diagonal of `R` is real and nonnegative.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: CMatrix,
    pub r: CMatrix,
}

impl QrFactors {
    /// Least-squares solution of `H x ≈ b` by back substitution on the
    /// leading M×M block of `R`.
    pub fn solve_least_squares(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.q.rows();
        let m = self.r.cols();
        if b.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has {} entries, expected {n}",
                b.len()
            )));
        }
        let qb = self.q.adjoint().mul_vec(b);
        let mut x = vec![ZERO; m];
        for i in (0..m).rev() {
            let mut acc = qb[i];
            for j in i + 1..m {
                acc -= self.r[(i, j)] * x[j];
            }
            x[i] = acc / self.r[(i, i)];
        }
        Ok(x)
    }
}

/// Householder QR of an N×M matrix with `M ≤ N`.
///
/// Fails with [`Error::RankDeficient`] when a pivot drops below
/// `1e-12 · max|h_ij|`.
pub fn qr_decompose(h: &CMatrix) -> Result<QrFactors> {
    let (n, m) = (h.rows(), h.cols());
    if m == 0 || m > n {
        return Err(Error::Dimension(format!(
            "QR needs 1 <= cols <= rows, got {n}x{m}"
        )));
    }
    let tol = RANK_TOLERANCE * h.max_abs();
    let mut r = h.clone();
    let mut q = CMatrix::identity(n);
    let mut v = vec![ZERO; n];

    for k in 0..m {
        let norm = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm <= tol || norm == 0.0 {
            return Err(Error::RankDeficient { column: k, pivot: norm });
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * norm;

        let len = n - k;
        for i in 0..len {
            v[i] = r[(k + i, k)];
        }
        v[0] -= alpha;
        let vnorm_sq: f64 = v[..len].iter().map(|c| c.norm_sqr()).sum();
        let beta = 2.0 / vnorm_sq;

        // R ← (I − β v vᴴ) R on the trailing block.
        for j in k + 1..m {
            let w: Complex64 = (0..len).map(|i| v[i].conj() * r[(k + i, j)]).sum();
            let w = w * beta;
            for i in 0..len {
                r[(k + i, j)] -= v[i] * w;
            }
        }
        r[(k, k)] = alpha;
        for i in k + 1..n {
            r[(i, k)] = ZERO;
        }

        // Q ← Q (I − β v vᴴ).
        for row in 0..n {
            let w: Complex64 = (0..len).map(|t| q[(row, k + t)] * v[t]).sum();
            let w = w * beta;
            for t in 0..len {
                q[(row, k + t)] -= w * v[t].conj();
            }
        }
    }

    // Rotate each diagonal entry onto the positive real axis: Q R = (Q D)(D* R).
    for k in 0..m {
        let d = r[(k, k)];
        let mag = d.norm();
        let phase = d / mag;
        for j in k..m {
            r[(k, j)] *= phase.conj();
        }
        r[(k, k)] = Complex64::new(mag, 0.0);
        for row in 0..n {
            q[(row, k)] *= phase;
        }
    }

    Ok(QrFactors { q, r })
}

/// How the initial squared radius of a search is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusPolicy {
    /// `N · M · 10^(-snr/10)`.
    Formula,
    /// No initial bound.
    Infinite,
    /// A fixed squared radius.
    Explicit(f64),
}

/// The detection problem in triangular form: minimise `‖ȳ − R s‖²`.
#[derive(Debug, Clone)]
pub struct PreprocessedProblem {
    r: CMatrix,
    y_bar: Vec<Complex64>,
    radius_sq: f64,
    constellation: Constellation,
    offset: f64,
    // r[row][row] * point[a], laid out row-major by (row, a).
    diag_points: Vec<Complex64>,
}

impl PreprocessedProblem {
    /// Builds a problem from an M×M upper-triangular `r` and rotated observation.
    pub fn from_parts(
        r: CMatrix,
        y_bar: Vec<Complex64>,
        constellation: Constellation,
        radius_sq: f64,
    ) -> Result<Self> {
        let m = r.rows();
        if m == 0 || r.cols() != m || y_bar.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "need a square R matching ȳ, got {}x{} and {}",
                r.rows(),
                r.cols(),
                y_bar.len()
            )));
        }
        if radius_sq.is_nan() || radius_sq < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "squared radius must be nonnegative, got {radius_sq}"
            )));
        }
        let q = constellation.len();
        let mut diag_points = Vec::with_capacity(m * q);
        for row in 0..m {
            let d = r[(row, row)];
            diag_points.extend(constellation.points().iter().map(|p| d * p));
        }
        Ok(PreprocessedProblem {
            r,
            y_bar,
            radius_sq,
            constellation,
            offset: 0.0,
            diag_points,
        })
    }

    /// Number of transmit antennas (tree depth).
    pub fn m(&self) -> usize {
        self.r.rows()
    }

    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn y_bar(&self) -> &[Complex64] {
        &self.y_bar
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// `‖(Qᴴ y)_{M..N}‖²`, the part of `‖y − H s‖²` no choice of `s` can change.
    pub fn metric_offset(&self) -> f64 {
        self.offset
    }

    pub fn with_radius_sq(mut self, radius_sq: f64) -> Self {
        self.radius_sq = radius_sq;
        self
    }

    #[inline]
    pub(crate) fn diag_points(&self, row: usize) -> &[Complex64] {
        let q = self.constellation.len();
        &self.diag_points[row * q..(row + 1) * q]
    }

    /// `‖ȳ − R s‖²` for a full vector of symbol indices (antenna order).
    pub fn metric(&self, symbols: &[usize]) -> f64 {
        let s: Vec<Complex64> = symbols.iter().map(|&i| self.constellation.point(i)).collect();
        let rs = self.r.mul_vec(&s);
        self.y_bar.iter().zip(&rs).map(|(y, v)| (y - v).norm_sqr()).sum()
    }
}

/// QR-transforms an instance and fixes the initial radius.
pub fn preprocess(instance: &MimoInstance, policy: RadiusPolicy) -> Result<PreprocessedProblem> {
    let m = instance.n_tx;
    let factors = qr_decompose(&instance.h)?;
    let rotated = factors.q.adjoint().mul_vec(&instance.y);
    let offset = rotated[m..].iter().map(|v| v.norm_sqr()).sum();
    let radius_sq = match policy {
        RadiusPolicy::Formula => initial_radius_sq(m, instance.n_rx, instance.snr_db),
        RadiusPolicy::Infinite => f64::INFINITY,
        RadiusPolicy::Explicit(r) => r,
    };
    let mut problem = PreprocessedProblem::from_parts(
        factors.r.block(0, 0, m, m),
        rotated[..m].to_vec(),
        instance.constellation.clone(),
        radius_sq,
    )?;
    problem.offset = offset;
    Ok(problem)
}

/// Column norms of `B = Y* − R_sub V`.
///
/// `r_sub` is the trailing |v|×|v| block of `R`, `y_star` the trailing |v|
/// entries of `ȳ` and each column of `v` one candidate suffix (antenna order).
pub fn batch_evaluate(r_sub: &CMatrix, y_star: &[Complex64], v: &CMatrix) -> Result<Vec<f64>> {
    let d = r_sub.rows();
    if r_sub.cols() != d || y_star.len() != d || v.rows() != d {
        return Err(Error::ShapeMismatch(format!(
            "R' is {}x{}, Y* has {} rows and V is {}x{}",
            r_sub.rows(),
            r_sub.cols(),
            y_star.len(),
            v.rows(),
            v.cols()
        )));
    }
    let k = v.cols();
    // B starts as Y* broadcast across columns, then accumulates −R' V row by row.
    let mut b = CMatrix::from_fn(d, k, |r, _| y_star[r]);
    for row in 0..d {
        for inner in row..d {
            let coef = r_sub[(row, inner)];
            if coef == ZERO {
                continue;
            }
            let src = v.row(inner);
            let dst = &mut b.data[row * k..(row + 1) * k];
            for (acc, s) in dst.iter_mut().zip(src) {
                *acc -= coef * s;
            }
        }
    }
    let mut out = vec![0.0; k];
    for row in 0..d {
        for (o, e) in out.iter_mut().zip(b.row(row)) {
            *o += e.norm_sqr();
        }
    }
    Ok(out)
}

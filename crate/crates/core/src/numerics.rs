//! Small dense linear algebra, a bracketed scalar root finder and seeded
//! random streams.
//!
//! Everything here is sized for d up to a few hundred. Matrices are stored
//! row-major in a flat `Vec<f64>`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square symmetric matrix with mirrored storage.
///
/// Every write goes to both `(i, j)` and `(j, i)`, so the two triangles are
/// always bitwise equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymmetricMatrix needs dim >= 1");
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.add_diag(1.0);
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds from full rows, symmetrizing as `(a + aᵀ) / 2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            assert_eq!(rows[i].len(), dim, "row {i} has the wrong length");
            for j in 0..=i {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `self += scale · x xᵀ`
    pub fn add_outer(&mut self, x: &[f64], scale: f64) {
        assert_eq!(x.len(), self.dim);
        let d = self.dim;
        for i in 0..d {
            let xi = scale * x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..=i {
                let v = self.data[i * d + j] + xi * x[j];
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
    }

    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += c;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Row-major T×d matrix; rows are the covariate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `XᵀX` over the first `n` rows.
    pub fn gram_prefix(&self, n: usize) -> SymmetricMatrix {
        let mut g = SymmetricMatrix::zeros(self.cols.max(1));
        for i in 0..n.min(self.rows) {
            g.add_outer(self.row(i), 1.0);
        }
        g
    }

    /// `Xᵀv`
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += vi * x;
            }
        }
        out
    }
}

/// Lower Cholesky factor with a reusable buffer.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(dim: usize) -> Self {
        Self { dim, l: vec![0.0; dim * dim] }
    }

    pub fn factor(m: &SymmetricMatrix) -> Result<Self> {
        let mut c = Self::new(m.dim());
        c.refactor(m)?;
        Ok(c)
    }

    /// Factors `m` in place of the previous factor.
    ///
    /// A pivot at or below `1e-14 · trace(m) / dim` is treated as rank collapse.
    pub fn refactor(&mut self, m: &SymmetricMatrix) -> Result<()> {
        let d = m.dim();
        if self.dim != d {
            self.dim = d;
            self.l = vec![0.0; d * d];
        }
        let floor = 1e-14 * m.trace() / d as f64;
        let l = &mut self.l;
        for j in 0..d {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > floor) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { row: j, pivot: diag });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let d = self.dim;
        assert_eq!(b.len(), d);
        let l = &self.l;
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * d + k] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `xᵀ m⁻¹ x` via the forward solve only.
    pub fn inv_quad(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let l = &self.l;
        let mut y = x.to_vec();
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
            acc += y[i] * y[i];
        }
        acc
    }
}

pub fn solve_spd(m: &SymmetricMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: rhs.len() });
    }
    Ok(Cholesky::factor(m)?.solve(rhs))
}

/// Positive semidefiniteness by pivoted-free Cholesky, allowing pivots down
/// to `-tol · max(1, max |m_ii|)`. Near-zero pivots zero out their column.
pub fn is_psd(m: &SymmetricMatrix, tol: f64) -> bool {
    let d = m.dim();
    let scale = (0..d).map(|i| m.get(i, i).abs()).fold(1.0, f64::max);
    let eps = tol * scale;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag < -eps {
            return false;
        }
        if diag <= eps {
            // Semidefinite direction: the rest of the column must vanish too.
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if s.abs() > eps.sqrt() * scale.sqrt() {
                    return false;
                }
            }
            continue;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    true
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.
pub fn symmetric_eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut a: Vec<f64> = (0..d * d).map(|k| m.get(k / d, k % d)).collect();
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; d];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * frob {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_eigenvalue(m: &SymmetricMatrix) -> f64 {
    symmetric_eigenvalues(m)[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once `|dfn(u)| <= ftol_rel · (1 + |dfn(0)|)`.
    pub ftol_rel: f64,
    /// Stop once the bracket is at most this wide.
    pub xtol: f64,
    /// Give up bracketing beyond this magnitude.
    pub max_abs: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { ftol_rel: 1e-10, xtol: 1e-13, max_abs: 1e9 }
    }
}

/// Minimizer of a strictly convex coercive function given its derivative.
pub fn minimize_scalar_convex<F: FnMut(f64) -> f64>(dfn: F, bracket_hint: f64) -> Result<f64> {
    minimize_scalar_convex_with(dfn, bracket_hint, RootOptions::default())
}

/// Expanding bracket, then Illinois steps guarded by bisection.
///
/// A secant proposal is used only when it lands strictly inside the current
/// bracket, and a bisection is forced whenever the previous step failed to at
/// least halve the bracket. Convergence is therefore never slower than
/// bisection.
pub fn minimize_scalar_convex_with<F: FnMut(f64) -> f64>(
    mut dfn: F,
    bracket_hint: f64,
    opts: RootOptions,
) -> Result<f64> {
    let f_zero = dfn(0.0);
    let ftol = opts.ftol_rel * (1.0 + f_zero.abs());
    if f_zero.abs() <= ftol && bracket_hint == 0.0 {
        return Ok(0.0);
    }
    let hint = if bracket_hint.is_finite() { bracket_hint } else { 0.0 };
    let f_hint = if hint == 0.0 { f_zero } else { dfn(hint) };
    if f_hint.abs() <= ftol {
        return Ok(hint);
    }

    let mut step = 0.25 * (1.0 + hint.abs());
    let (mut lo, mut flo, mut hi, mut fhi);
    if f_hint > 0.0 {
        hi = hint;
        fhi = f_hint;
        loop {
            lo = hi - step;
            flo = dfn(lo);
            if flo <= 0.0 {
                break;
            }
            hi = lo;
            fhi = flo;
            step *= 2.0;
            if lo < -opts.max_abs || !flo.is_finite() {
                return Err(Error::BracketFailure { limit: opts.max_abs });
            }
        }
    } else {
        lo = hint;
        flo = f_hint;
        loop {
            hi = lo + step;
            fhi = dfn(hi);
            if fhi >= 0.0 {
                break;
            }
            lo = hi;
            flo = fhi;
            step *= 2.0;
            if hi > opts.max_abs || !fhi.is_finite() {
                return Err(Error::BracketFailure { limit: opts.max_abs });
            }
        }
    }
    if flo.abs() <= ftol {
        return Ok(lo);
    }
    if fhi.abs() <= ftol {
        return Ok(hi);
    }

    // Illinois-weighted copies of the endpoint values, used only for the
    // secant proposal; the true values decide the final answer.
    let (mut wlo, mut whi) = (flo, fhi);
    let mut last_side = 0i8;
    let mut force_bisect = false;
    for _ in 0..400 {
        let width = hi - lo;
        let mid = lo + 0.5 * width;
        if width <= opts.xtol || mid <= lo || mid >= hi {
            break;
        }
        let x = if force_bisect {
            mid
        } else {
            let s = hi - whi * (hi - lo) / (whi - wlo);
            if s > lo && s < hi {
                s
            } else {
                mid
            }
        };
        let fx = dfn(x);
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            wlo = fx;
            if last_side == -1 {
                whi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            fhi = fx;
            whi = fx;
            if last_side == 1 {
                wlo *= 0.5;
            }
            last_side = 1;
        }
        force_bisect = hi - lo > 0.5 * width;
    }
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// ChaCha8 keystream addressed by `(seed, stream_id)`.
///
/// Distinct stream ids give independent sequences under one seed, which is
/// how replications are assigned randomness independent of scheduling.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }

    /// ±1 with equal probability.
    #[inline]
    pub fn rademacher(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_and_diagonal_systems() {
        let x = solve_spd(&SymmetricMatrix::identity(2), &[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        let x = solve_spd(&SymmetricMatrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut m = SymmetricMatrix::zeros(2);
        m.add_outer(&[1.0, 1.0], 1.0);
        assert!(matches!(solve_spd(&m, &[1.0, 1.0]), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(solve_spd(&SymmetricMatrix::zeros(3), &[0.0; 3]), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn min_eigenvalue_of_simple_matrices() {
        assert_relative_eq!(min_eigenvalue(&SymmetricMatrix::from_diag(&[1.0, 5.0])), 1.0);
        assert_relative_eq!(min_eigenvalue(&SymmetricMatrix::identity(4)), 1.0);
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = SymmetricMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_relative_eq!(min_eigenvalue(&m), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn roots_of_linear_derivatives() {
        assert_eq!(minimize_scalar_convex(|u| u, 0.0).unwrap(), 0.0);
        assert_relative_eq!(minimize_scalar_convex(|u| u - 3.0, 0.0).unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(minimize_scalar_convex(|u| u + 7.5, 2.0).unwrap(), -7.5, epsilon = 1e-12);
    }

    #[test]
    fn non_coercive_objective_fails_to_bracket() {
        let r = minimize_scalar_convex(|u: f64| -1.0 - u.abs().min(0.0), 0.0);
        assert!(matches!(r, Err(Error::BracketFailure { .. })));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let va: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }
}

//! Dense linear algebra: row-major matrices, jittered Cholesky solves and a
//! symmetric eigensolver (Householder tridiagonalization followed by implicit
//! QL iterations).

use std::ops::{Index, IndexMut};

use crate::error::{check_dim, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps row-major `data`, checking its length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec_unchecked(idx.len(), self.cols, data)
    }

    /// Selects the given columns, in order.
    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Self::from_vec_unchecked(self.rows, idx.len(), data)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij − a_ji|`, relative to `max(1, max|a|)`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / self.max_abs().max(1.0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= rel_tol
    }

    /// Replaces `A` by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a·x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Diagonal jitter schedule: the multipliers are applied to the mean of the
/// diagonal, tried in order until the factorization succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterPolicy {
    pub multipliers: Vec<f64>,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            multipliers: vec![0.0, 1e-10, 1e-8, 1e-6, 1e-4],
        }
    }
}

impl JitterPolicy {
    /// Only the plain factorization, no jitter.
    pub fn none() -> Self {
        Self {
            multipliers: vec![0.0],
        }
    }
}

/// Lower-triangular factor `L` with `L·Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DenseMatrix,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// Jitter that was added to the diagonal (0 unless the raw factorization failed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Solves `(A + jitter·I) x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), b.len())?;
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / l[(i, i)];
        }
        // back substitution with Lᵀ, column-oriented over rows of L
        for i in (0..n).rev() {
            y[i] /= l[(i, i)];
            let yi = y[i];
            let row = &l.row(i)[..i];
            for (yk, lk) in y[..i].iter_mut().zip(row) {
                *yk -= lk * yi;
            }
        }
        Ok(y)
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.dim(), b.rows())?;
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `log det(A + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// Factorizes a symmetric matrix, escalating diagonal jitter as needed.
pub fn cholesky_factor(a: &DenseMatrix, policy: &JitterPolicy) -> Result<CholeskyFactor> {
    cholesky_factor_shifted(a, 0.0, policy)
}

/// Factorizes `A + shift·I`; jitter is applied on top of the shift and the
/// jitter base is the mean diagonal of the shifted matrix.
pub fn cholesky_factor_shifted(
    a: &DenseMatrix,
    shift: f64,
    policy: &JitterPolicy,
) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    if a.data().iter().any(|v| !v.is_finite()) || !shift.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let n = a.rows();
    let mean_diag = if n == 0 {
        1.0
    } else {
        a.diag().iter().map(|d| (d + shift).abs()).sum::<f64>() / n as f64
    };
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut last = 0.0;
    for &m in &policy.multipliers {
        let jitter = m * base;
        last = jitter;
        if let Some(lower) = try_cholesky(a, shift + jitter) {
            return Ok(CholeskyFactor { lower, jitter });
        }
    }
    Err(Error::NotFactorizable(last))
}

/// Row-oriented Cholesky–Crout on the lower triangle; `None` when a pivot is
/// not strictly positive. Rows are produced in blocks so each finished row of
/// `L` is streamed from memory once per block instead of once per row.
fn try_cholesky(a: &DenseMatrix, diag_add: f64) -> Option<DenseMatrix> {
    const BLOCK: usize = 64;
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    let mut i0 = 0;
    while i0 < n {
        let b = BLOCK.min(n - i0);
        let (done, rest) = l.data.split_at_mut(i0 * n);
        let block = &mut rest[..b * n];
        for j in 0..i0 {
            let lj = &done[j * n..j * n + j];
            let pivot = done[j * n + j];
            let mut r = 0;
            while r + 4 <= b {
                let rows = [0, 1, 2, 3].map(|q| &block[(r + q) * n..(r + q) * n + j]);
                let dots = dot4(lj, rows);
                for (q, d) in dots.iter().enumerate() {
                    block[(r + q) * n + j] = (a[(i0 + r + q, j)] - d) / pivot;
                }
                r += 4;
            }
            for r in r..b {
                let s = a[(i0 + r, j)] - dot(&block[r * n..r * n + j], lj);
                block[r * n + j] = s / pivot;
            }
        }
        for r in 0..b {
            let i = i0 + r;
            let (above, row) = block.split_at_mut(r * n);
            let li = &mut row[..n];
            for j in i0..i {
                let lj = &above[(j - i0) * n..(j - i0) * n + j];
                let s = a[(i, j)] - dot(&li[..j], lj);
                li[j] = s / above[(j - i0) * n + j];
            }
            let s = a[(i, i)] + diag_add - dot(&li[..i], &li[..i]);
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            li[i] = s.sqrt();
        }
        i0 += b;
    }
    Some(l)
}

/// Four dot products against a shared left operand.
#[inline]
fn dot4(x: &[f64], rows: [&[f64]; 4]) -> [f64; 4] {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were just detected.
        return unsafe { dot4_fma(x, rows) };
    }
    dot4_lanes::<false>(x, rows)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot4_fma(x: &[f64], rows: [&[f64]; 4]) -> [f64; 4] {
    dot4_lanes::<true>(x, rows)
}

/// Eight lanes per row; `FUSED` selects `mul_add`, which is only cheap when
/// compiled with hardware FMA.
#[inline(always)]
fn dot4_lanes<const FUSED: bool>(x: &[f64], rows: [&[f64]; 4]) -> [f64; 4] {
    const LANES: usize = 8;
    let m = x.len();
    let [r0, r1, r2, r3] = rows.map(|r| &r[..m]);
    let mut acc = [[0.0f64; LANES]; 4];
    let head = m - m % LANES;
    for k in (0..head).step_by(LANES) {
        let xc: &[f64; LANES] = x[k..k + LANES].try_into().unwrap();
        for (a, r) in acc.iter_mut().zip([r0, r1, r2, r3]) {
            let rc: &[f64; LANES] = r[k..k + LANES].try_into().unwrap();
            for t in 0..LANES {
                a[t] = if FUSED { rc[t].mul_add(xc[t], a[t]) } else { a[t] + rc[t] * xc[t] };
            }
        }
    }
    let mut out = acc.map(|a| ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7])));
    for k in head..m {
        for (o, r) in out.iter_mut().zip([r0, r1, r2, r3]) {
            *o += r[k] * x[k];
        }
    }
    out
}

/// Eigenvalues sorted descending, with the matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    /// `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.values.len();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }
}

const EIGEN_ITER_CAP: usize = 60;

/// Full symmetric eigendecomposition.
pub fn eigen_sym(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen_sym input"));
    }
    let asym = a.asymmetry();
    if asym > 1e-8 {
        return Err(Error::NotSymmetric(asym));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut v = a.clone();
    v.symmetrize();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    // QL rotations act on pairs of columns of V; work on Vᵀ so they touch rows.
    let mut vt = v.transpose();
    tridiagonal_ql(&mut d, &mut e, &mut vt)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let src = vt.row(k);
        for i in 0..n {
            vectors[(i, col)] = src[i];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Householder reduction to tridiagonal form, accumulating the orthogonal
/// transform in `v` (EISPACK tred2 ordering).
fn tridiagonalize(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = v.rows();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    let vkj = v[(k, j)];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal `(d, e)`; `vt` holds the
/// eigenvectors as rows.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], vt: &mut DenseMatrix) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > EIGEN_ITER_CAP {
                    return Err(Error::NoConvergence(EIGEN_ITER_CAP));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[(l + 2)..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(vt, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
fn rotate_rows(vt: &mut DenseMatrix, i: usize, c: f64, s: f64) {
    let n = vt.cols();
    let (top, bottom) = vt.data.split_at_mut((i + 1) * n);
    let ri = &mut top[i * n..];
    let ri1 = &mut bottom[..n];
    for (a, b) in ri.iter_mut().zip(ri1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// Greedy pivoted partial Cholesky of a PSD matrix given by its diagonal and a
/// column oracle: returns `L` (`n×r`) with `A ≈ L·Lᵀ`, stopping once the
/// largest residual diagonal entry is at most `rel_tol·max(diag)` or `r`
/// reaches `max_rank`.
pub fn pivoted_cholesky(
    diag: &[f64],
    mut column: impl FnMut(usize, &mut [f64]),
    rel_tol: f64,
    max_rank: usize,
) -> Result<DenseMatrix> {
    let n = diag.len();
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pivoted Cholesky diagonal"));
    }
    let mut resid = diag.to_vec();
    let stop = rel_tol * diag.iter().copied().fold(0.0, f64::max);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut buf = vec![0.0; n];
    while cols.len() < max_rank.min(n) {
        let (p, &dp) = resid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if dp <= stop || dp <= 0.0 {
            break;
        }
        column(p, &mut buf);
        let root = dp.sqrt();
        let mut l = buf.clone();
        for c in &cols {
            let cp = c[p];
            if cp != 0.0 {
                axpy(-cp, c, &mut l);
            }
        }
        for (i, v) in l.iter_mut().enumerate() {
            *v /= root;
            resid[i] -= *v * *v;
        }
        // pivot rows are exact by construction
        for &q in &pivots {
            l[q] = 0.0;
        }
        l[p] = root;
        resid[p] = 0.0;
        pivots.push(p);
        cols.push(l);
    }
    let r = cols.len();
    let mut out = DenseMatrix::zeros(n, r);
    for (k, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out[(i, k)] = *v;
        }
    }
    Ok(out)
}

//! Gaussian base kernels and the elementary-symmetric-polynomial (ESP)
//! additive kernel.
//!
//! For per-coordinate similarities `s_i = exp(−(x_i − x'_i)² / 2h_i²)`, the
//! order-`d` additive kernel is
//!
//! ```text
//! k_d(x, x') = σ · Σ_{i_1 < … < i_d} s_{i_1} ⋯ s_{i_d} = σ · e_d(s)
//! ```
//!
//! `e_d` is evaluated from the power sums `p_m = Σ s_i^m` with the
//! Girard–Newton recurrence `e_m = (1/m) Σ_{i=1..m} (−1)^{i−1} e_{m−i} p_i`,
//! costing `O(D·d + d²)` per pair instead of the `C(D, d)` terms of the
//! explicit sum. The scale σ multiplies the summed value once, so the output
//! scale does not depend on `d`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;
use crate::par::{self, Parallelism};

/// Bandwidths below this are rejected.
pub const MIN_BANDWIDTH: f64 = 1e-12;

/// Which interaction orders the kernel sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelVariant {
    /// Only interactions of exactly order `d`: `σ·e_d(s)`.
    #[default]
    ExactOrder,
    /// All interactions of order `1..=d`: `σ·Σ_{m=1..d} e_m(s)`.
    AllOrdersUpTo,
}

impl KernelVariant {
    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::ExactOrder => "exact",
            KernelVariant::AllOrdersUpTo => "upto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" | "exact-order" | "ExactOrder" => Some(KernelVariant::ExactOrder),
            "upto" | "all-orders" | "AllOrdersUpTo" => Some(KernelVariant::AllOrdersUpTo),
            _ => None,
        }
    }
}

/// Order, bandwidths and scale of an ESP kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct EspKernelSpec {
    order: usize,
    bandwidths: Vec<f64>,
    scale: f64,
    variant: KernelVariant,
}

impl EspKernelSpec {
    pub fn new(
        order: usize,
        bandwidths: Vec<f64>,
        scale: f64,
        variant: KernelVariant,
    ) -> Result<Self> {
        let dim = bandwidths.len();
        if order == 0 || order > dim {
            return Err(Error::OrderExceedsDimension { order, dim });
        }
        if let Some(h) = bandwidths
            .iter()
            .find(|h| !h.is_finite() || **h < MIN_BANDWIDTH)
        {
            return Err(Error::InvalidParameter(format!(
                "bandwidth {h} below {MIN_BANDWIDTH:e} or non-finite"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            order,
            bandwidths,
            scale,
            variant,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    /// Kernel value at zero distance: `σ·C(D, d)` (or the sum over orders).
    pub fn diagonal_value(&self) -> f64 {
        let dim = self.dim() as u64;
        let total: f64 = match self.variant {
            KernelVariant::ExactOrder => binomial_f64(dim, self.order as u64),
            KernelVariant::AllOrdersUpTo => (1..=self.order as u64)
                .map(|m| binomial_f64(dim, m))
                .sum(),
        };
        self.scale * total
    }
}

pub(crate) fn binomial_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Reusable buffers for the Girard–Newton recurrence.
#[derive(Debug, Clone)]
pub struct EspWorkspace {
    /// Power sums `p_1..p_d` (index 0 holds `p_1`).
    pub power_sums: Vec<f64>,
    /// `e_0..e_d`, with `e_0 = 1`.
    pub elementary: Vec<f64>,
    similarities: Vec<f64>,
}

impl EspWorkspace {
    pub fn new(dim: usize, order: usize) -> Self {
        let mut elementary = vec![0.0; order + 1];
        elementary[0] = 1.0;
        Self {
            power_sums: vec![0.0; order],
            elementary,
            similarities: vec![0.0; dim],
        }
    }

    /// Fills `elementary` with `e_0..e_d` of `s`; `d` is fixed at construction.
    pub fn compute(&mut self, s: &[f64]) {
        let d = self.power_sums.len();
        self.power_sums.iter_mut().for_each(|p| *p = 0.0);
        for &si in s {
            let mut pw = 1.0;
            for p in self.power_sums.iter_mut() {
                pw *= si;
                *p += pw;
            }
        }
        let e = &mut self.elementary;
        e[0] = 1.0;
        for m in 1..=d {
            let mut acc = 0.0;
            for i in 1..=m {
                let term = e[m - i] * self.power_sums[i - 1];
                if i % 2 == 1 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            e[m] = acc / m as f64;
        }
    }
}

/// Per-coordinate Gaussian similarities `s_i = exp(−(x_i − x2_i)²/(2h_i²))`.
pub fn base_kernel_values(x: &[f64], x2: &[f64], spec: &EspKernelSpec) -> Result<Vec<f64>> {
    check_dim(spec.dim(), x.len())?;
    check_dim(spec.dim(), x2.len())?;
    if x.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    let mut s = vec![0.0; spec.dim()];
    fill_similarities(x, x2, spec.bandwidths(), &mut s);
    Ok(s)
}

#[inline]
fn fill_similarities(x: &[f64], x2: &[f64], h: &[f64], out: &mut [f64]) {
    for (((o, a), b), hi) in out.iter_mut().zip(x).zip(x2).zip(h) {
        let r = (a - b) / hi;
        *o = (-0.5 * r * r).exp();
    }
}

/// `(e_0, …, e_d)` of `s` via the Girard–Newton recurrence.
pub fn girard_newton_esp(s: &[f64], d: usize) -> Result<Vec<f64>> {
    if d > s.len() {
        return Err(Error::OrderExceedsDimension {
            order: d,
            dim: s.len(),
        });
    }
    let mut ws = EspWorkspace::new(s.len(), d);
    ws.compute(s);
    Ok(ws.elementary)
}

/// Largest subset count [`brute_force_esp`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// `e_d(s)` by explicit enumeration of all `C(D, d)` subsets. Test oracle.
pub fn brute_force_esp(s: &[f64], d: usize) -> Result<f64> {
    let n = s.len();
    if d > n {
        return Err(Error::OrderExceedsDimension { order: d, dim: n });
    }
    let count = binomial_f64(n as u64, d as u64) as u128;
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut total = 0.0;
    for_each_subset(n, d, |idx| {
        total += idx.iter().map(|&i| s[i]).product::<f64>();
    });
    Ok(total)
}

/// Calls `f` on every size-`k` subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All size-`k` subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_subset(n, k, |s| out.push(s.to_vec()));
    out
}

#[inline]
fn combine(ws: &EspWorkspace, spec: &EspKernelSpec) -> f64 {
    let e = &ws.elementary;
    let v = match spec.variant {
        KernelVariant::ExactOrder => e[spec.order],
        KernelVariant::AllOrdersUpTo => e[1..=spec.order].iter().sum(),
    };
    spec.scale * v
}

#[inline]
fn esp_kernel_ws(x: &[f64], x2: &[f64], spec: &EspKernelSpec, ws: &mut EspWorkspace) -> f64 {
    let mut s = std::mem::take(&mut ws.similarities);
    fill_similarities(x, x2, spec.bandwidths(), &mut s);
    ws.compute(&s);
    ws.similarities = s;
    combine(ws, spec)
}

/// ESP kernel value between two points.
pub fn esp_kernel(x: &[f64], x2: &[f64], spec: &EspKernelSpec) -> Result<f64> {
    let s = base_kernel_values(x, x2, spec)?;
    let mut ws = EspWorkspace::new(spec.dim(), spec.order);
    ws.compute(&s);
    Ok(combine(&ws, spec))
}

/// Product of base kernel values over `subset` (no scale factor).
pub fn subset_kernel_eval(
    x: &[f64],
    x2: &[f64],
    subset: &[usize],
    spec: &EspKernelSpec,
) -> Result<f64> {
    validate_subset(subset, spec)?;
    let s = base_kernel_values(x, x2, spec)?;
    Ok(subset.iter().map(|&i| s[i]).product())
}

/// Checks that `subset` names distinct in-range coordinates and has a size
/// admitted by the kernel variant.
pub fn validate_subset(subset: &[usize], spec: &EspKernelSpec) -> Result<()> {
    let ok_len = match spec.variant {
        KernelVariant::ExactOrder => subset.len() == spec.order,
        KernelVariant::AllOrdersUpTo => (1..=spec.order).contains(&subset.len()),
    };
    if !ok_len {
        return Err(Error::BadSubset(format!(
            "size {} not allowed for order {}",
            subset.len(),
            spec.order
        )));
    }
    let mut seen = vec![false; spec.dim()];
    for &i in subset {
        if i >= spec.dim() {
            return Err(Error::BadSubset(format!("index {i} out of range")));
        }
        if seen[i] {
            return Err(Error::BadSubset(format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn check_inputs(x: &DenseMatrix, spec: &EspKernelSpec) -> Result<()> {
    check_dim(spec.dim(), x.cols())?;
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel matrix input"));
    }
    Ok(())
}

/// Symmetric `n×n` kernel matrix. Rows are computed independently (upper
/// triangle) and mirrored, so the result is bitwise symmetric and independent
/// of the execution mode.
pub fn kernel_matrix(x: &DenseMatrix, spec: &EspKernelSpec, exec: Parallelism) -> Result<DenseMatrix> {
    check_inputs(x, spec)?;
    let n = x.rows();
    let mut k = DenseMatrix::zeros(n, n);
    par::for_each_row_mut(k.data_mut(), n, exec, |i, row| {
        let mut ws = EspWorkspace::new(spec.dim(), spec.order);
        let xi = x.row(i);
        for (j, out) in row.iter_mut().enumerate().skip(i) {
            *out = esp_kernel_ws(xi, x.row(j), spec, &mut ws);
        }
    });
    for i in 0..n {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(k)
}

/// `m×n` cross-kernel matrix between new points and training points.
pub fn kernel_cross_matrix(
    x_new: &DenseMatrix,
    x_train: &DenseMatrix,
    spec: &EspKernelSpec,
    exec: Parallelism,
) -> Result<DenseMatrix> {
    check_inputs(x_new, spec)?;
    check_inputs(x_train, spec)?;
    let (m, n) = (x_new.rows(), x_train.rows());
    let mut k = DenseMatrix::zeros(m, n);
    par::for_each_row_mut(k.data_mut(), n, exec, |a, row| {
        let mut ws = EspWorkspace::new(spec.dim(), spec.order);
        let xa = x_new.row(a);
        for (b, out) in row.iter_mut().enumerate() {
            *out = esp_kernel_ws(xa, x_train.row(b), spec, &mut ws);
        }
    });
    Ok(k)
}

/// Product Gaussian kernel matrix over a coordinate subset (unit scale),
/// used to build per-group kernels.
pub fn subset_kernel_matrix(
    x: &DenseMatrix,
    subset: &[usize],
    bandwidths: &[f64],
    exec: Parallelism,
) -> Result<DenseMatrix> {
    check_dim(subset.len(), bandwidths.len())?;
    if let Some(&bad) = subset.iter().find(|&&i| i >= x.cols()) {
        return Err(Error::BadSubset(format!("index {bad} out of range")));
    }
    let n = x.rows();
    let mut k = DenseMatrix::zeros(n, n);
    par::for_each_row_mut(k.data_mut(), n, exec, |i, row| {
        let xi = x.row(i);
        for (j, out) in row.iter_mut().enumerate().skip(i) {
            let xj = x.row(j);
            let mut q = 0.0;
            for (&c, h) in subset.iter().zip(bandwidths) {
                let r = (xi[c] - xj[c]) / h;
                q += r * r;
            }
            *out = (-0.5 * q).exp();
        }
    });
    for i in 0..n {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(k)
}

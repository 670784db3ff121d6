//! Group-sparse additive regression over a family of per-group kernels.
//!
//! With group kernels `K_1..K_M` (each `n×n`, symmetric PSD) and blocks
//! `α_1..α_M ∈ ℝⁿ` the objective is
//!
//! ```text
//! F(α) = ½‖y − Σ_j K_j α_j‖² + (λ1/2) Σ_j α_jᵀ K_j α_j + λ2 Σ_j ‖α_j‖₂
//!      = G(α) + Ψ(α)
//! ```
//!
//! so `∇_j G = −K_j r + λ1 K_j α_j` with `r = y − Σ K_i α_i` and the block
//! Hessian is `K_jᵀK_j + λ1 K_j`. Five solvers share this objective:
//! subgradient descent with `t_k = t_0/√k`, proximal gradient with
//! backtracking (optionally accelerated, with function-value restart),
//! block coordinate gradient descent with a scaled-identity block Hessian,
//! and exact block coordinate descent that reduces each block problem to a
//! one-dimensional secular equation in the eigenbasis of the block Hessian.

use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::kernels;
use crate::linalg::{self, axpy, dot, eigen_sym, norm2, DenseMatrix, JitterPolicy, SymmetricEigen};
use crate::par::{self, Parallelism};
use crate::salsa::compute_bandwidths;

/// A PSD group kernel, stored densely or as `V·diag(s)·Vᵀ` with orthonormal
/// columns in `V`.
#[derive(Debug, Clone)]
pub enum GroupKernel {
    Dense(DenseMatrix),
    LowRank { basis: DenseMatrix, values: Vec<f64> },
}

impl GroupKernel {
    /// Compresses `K ≈ L·Lᵀ` into an orthonormal eigenbasis, dropping directions
    /// with eigenvalue below `1e-14·s_max`.
    pub fn from_factor(l: &DenseMatrix) -> Result<Self> {
        let gram = l.transpose().matmul(l)?;
        let eig = eigen_sym(&gram)?;
        let s_max = eig.values.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..eig.values.len())
            .filter(|&k| eig.values[k] > 1e-14 * s_max && eig.values[k] > 0.0)
            .collect();
        // V = L·W·S^{-1/2}
        let w = eig.vectors.select_cols(&keep);
        let mut basis = l.matmul(&w)?;
        let values: Vec<f64> = keep.iter().map(|&k| eig.values[k]).collect();
        for i in 0..basis.rows() {
            for (v, s) in basis.row_mut(i).iter_mut().zip(&values) {
                *v /= s.sqrt();
            }
        }
        Ok(GroupKernel::LowRank { basis, values })
    }

    pub fn n(&self) -> usize {
        match self {
            GroupKernel::Dense(k) => k.rows(),
            GroupKernel::LowRank { basis, .. } => basis.rows(),
        }
    }

    /// Number of stored directions (`n` for dense kernels).
    pub fn rank(&self) -> usize {
        match self {
            GroupKernel::Dense(k) => k.rows(),
            GroupKernel::LowRank { values, .. } => values.len(),
        }
    }

    /// `K·v`; `v` must have length `n`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            GroupKernel::Dense(k) => k.matvec(v).expect("kernel and vector shapes agree"),
            GroupKernel::LowRank { basis, values } => {
                let mut t = basis.matvec_t(v).expect("kernel and vector shapes agree");
                t.iter_mut().zip(values).for_each(|(a, s)| *a *= s);
                basis.matvec(&t).expect("rank matches")
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            GroupKernel::Dense(k) => k.clone(),
            GroupKernel::LowRank { basis, values } => {
                let n = basis.rows();
                let mut out = DenseMatrix::zeros(n, n);
                for i in 0..n {
                    let bi = basis.row(i);
                    for j in i..n {
                        let bj = basis.row(j);
                        let v: f64 = bi.iter().zip(bj).zip(values).map(|((a, b), s)| a * b * s).sum();
                        out[(i, j)] = v;
                        out[(j, i)] = v;
                    }
                }
                out
            }
        }
    }

    /// Largest diagonal entry of the block Hessian `K² + λ1 K`.
    pub fn hessian_diag_max(&self, lambda1: f64) -> f64 {
        match self {
            GroupKernel::Dense(k) => (0..k.rows())
                .map(|i| {
                    // column i of a symmetric K equals row i
                    let r = k.row(i);
                    dot(r, r) + lambda1 * k[(i, i)]
                })
                .fold(0.0, f64::max),
            GroupKernel::LowRank { basis, values } => (0..basis.rows())
                .map(|i| {
                    basis
                        .row(i)
                        .iter()
                        .zip(values)
                        .map(|(v, s)| v * v * (s * s + lambda1 * s))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
        }
    }

    /// Eigenpairs of `K² + λ1 K` spanning its range (all `n` for dense kernels).
    pub fn hessian_eigen(&self, lambda1: f64) -> Result<SymmetricEigen> {
        match self {
            GroupKernel::Dense(k) => {
                let mut a = k.matmul(k)?;
                if lambda1 > 0.0 {
                    for (x, kv) in a.data_mut().iter_mut().zip(k.data()) {
                        *x += lambda1 * kv;
                    }
                }
                a.symmetrize();
                eigen_sym(&a)
            }
            GroupKernel::LowRank { basis, values } => {
                // same eigenvectors as K; values already sorted descending
                let a = values.iter().map(|s| s * s + lambda1 * s).collect();
                Ok(SymmetricEigen {
                    values: a,
                    vectors: basis.clone(),
                })
            }
        }
    }
}

/// Group kernel matrices, targets and the coordinate subset behind each group.
#[derive(Debug, Clone)]
pub struct GroupKernelDesign {
    kernels: Vec<GroupKernel>,
    y: Vec<f64>,
    groups: Vec<Vec<usize>>,
}

impl GroupKernelDesign {
    /// Dense kernels; each must be symmetric.
    pub fn new(kernels: Vec<DenseMatrix>, y: Vec<f64>, groups: Vec<Vec<usize>>) -> Result<Self> {
        for k in &kernels {
            let a = k.asymmetry();
            if a > 1e-10 {
                return Err(Error::NotSymmetric(a));
            }
        }
        Self::from_kernels(kernels.into_iter().map(GroupKernel::Dense).collect(), y, groups)
    }

    pub fn from_kernels(kernels: Vec<GroupKernel>, y: Vec<f64>, groups: Vec<Vec<usize>>) -> Result<Self> {
        check_dim(kernels.len(), groups.len())?;
        if kernels.is_empty() {
            return Err(Error::Empty("group kernels"));
        }
        let n = y.len();
        for k in &kernels {
            match k {
                GroupKernel::Dense(m) => {
                    check_dim(n, m.rows())?;
                    check_dim(n, m.cols())?;
                }
                GroupKernel::LowRank { basis, values } => {
                    check_dim(n, basis.rows())?;
                    check_dim(values.len(), basis.cols())?;
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design targets"));
        }
        Ok(Self { kernels, y, groups })
    }

    /// Same kernels with different targets.
    pub fn with_targets(&self, y: Vec<f64>) -> Result<Self> {
        Self::from_kernels(self.kernels.clone(), y, self.groups.clone())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[GroupKernel] {
        &self.kernels
    }

    pub fn kernel(&self, j: usize) -> &GroupKernel {
        &self.kernels[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Symmetrizes every dense kernel and clips negative eigenvalues of any
    /// that is not numerically PSD. Returns the indices that were clipped.
    pub fn repair_psd(&mut self) -> Result<Vec<usize>> {
        let mut clipped = vec![];
        let probe = JitterPolicy {
            multipliers: vec![1e-10],
        };
        for (j, k) in self.kernels.iter_mut().enumerate() {
            let GroupKernel::Dense(k) = k else { continue };
            k.symmetrize();
            if linalg::cholesky_factor(k, &probe).is_ok() {
                continue;
            }
            let mut eig = eigen_sym(k)?;
            eig.values.iter_mut().for_each(|v| *v = v.max(0.0));
            let mut rebuilt = eig.reconstruct();
            rebuilt.symmetrize();
            *k = rebuilt;
            clipped.push(j);
        }
        Ok(clipped)
    }

    /// `max_j ‖K_j y‖₂`: for `λ2` at or above this, `α = 0` is optimal.
    pub fn lambda_max(&self) -> f64 {
        self.kernels
            .iter()
            .map(|k| norm2(&k.matvec(&self.y)))
            .fold(0.0, f64::max)
    }
}

/// Builds product-Gaussian group kernels on the given coordinate groups.
/// Each coordinate's bandwidth is `c·σ_i·n^{-1/5}`; the targets are centered.
pub fn build_group_design(
    x: &DenseMatrix,
    y: &[f64],
    groups: &[Vec<usize>],
    bandwidth_multiplier: f64,
    exec: Parallelism,
) -> Result<GroupKernelDesign> {
    check_dim(x.rows(), y.len())?;
    let h = compute_bandwidths(x, bandwidth_multiplier)?;
    let kernels: Vec<Result<DenseMatrix>> = par::map_indices(groups.len(), exec, |j| {
        let g = &groups[j];
        let hg: Vec<f64> = g.iter().map(|&i| h[i]).collect();
        kernels::subset_kernel_matrix(x, g, &hg, Parallelism::Sequential)
    });
    let kernels = kernels.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = y.iter().map(|v| v - mean).collect();
    let mut design = GroupKernelDesign::new(kernels, yc, groups.to_vec())?;
    design.repair_psd()?;
    Ok(design)
}

/// Like [`build_group_design`] but stores each kernel in low-rank form from a
/// pivoted partial Cholesky factorization (residual diagonal at most
/// `rel_tol`), without forming the dense `n×n` matrices.
pub fn build_group_design_low_rank(
    x: &DenseMatrix,
    y: &[f64],
    groups: &[Vec<usize>],
    bandwidth_multiplier: f64,
    rel_tol: f64,
    exec: Parallelism,
) -> Result<GroupKernelDesign> {
    check_dim(x.rows(), y.len())?;
    if !(rel_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance must be >= 0, got {rel_tol}")));
    }
    let h = compute_bandwidths(x, bandwidth_multiplier)?;
    let n = x.rows();
    for g in groups {
        if let Some(&bad) = g.iter().find(|&&i| i >= x.cols()) {
            return Err(Error::BadSubset(format!("index {bad} out of range")));
        }
    }
    let kernels: Vec<Result<GroupKernel>> = par::map_indices(groups.len(), exec, |j| {
        let g = &groups[j];
        let column = |p: usize, out: &mut [f64]| {
            let xp = x.row(p);
            for (i, o) in out.iter_mut().enumerate() {
                let xi = x.row(i);
                let mut q = 0.0;
                for &c in g {
                    let r = (xi[c] - xp[c]) / h[c];
                    q += r * r;
                }
                *o = (-0.5 * q).exp();
            }
        };
        let l = linalg::pivoted_cholesky(&vec![1.0; n], column, rel_tol, n)?;
        GroupKernel::from_factor(&l)
    });
    let kernels = kernels.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = y.iter().map(|v| v - mean).collect();
    GroupKernelDesign::from_kernels(kernels, yc, groups.to_vec())
}

/// Coefficients stored as `M` contiguous blocks of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCoefs {
    n: usize,
    data: Vec<f64>,
}

impl GroupCoefs {
    pub fn zeros(n_groups: usize, n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n_groups * n],
        }
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let n = blocks.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(blocks.len() * n);
        for b in blocks {
            check_dim(n, b.len())?;
            data.extend_from_slice(b);
        }
        Ok(Self { n, data })
    }

    pub fn n_groups(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.data.len() / self.n
        }
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn group_norms(&self) -> Vec<f64> {
        (0..self.n_groups()).map(|j| norm2(self.block(j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Subgradient,
    ProxGrad,
    AccelProxGrad,
    Bcgd,
    ExactBcd,
}

impl Solver {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subgradient" => Some(Solver::Subgradient),
            "proxgrad" => Some(Solver::ProxGrad),
            "accel" | "accel-proxgrad" => Some(Solver::AccelProxGrad),
            "bcgd" => Some(Solver::Bcgd),
            "exact-bcd" | "exactbcd" => Some(Solver::ExactBcd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Solver::Subgradient => "subgradient",
            Solver::ProxGrad => "proxgrad",
            Solver::AccelProxGrad => "accel-proxgrad",
            Solver::Bcgd => "bcgd",
            Solver::ExactBcd => "exact-bcd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkConfig {
    /// Weight of the RKHS-norm term.
    pub lambda1: f64,
    /// Weight of the group-lasso term.
    pub lambda2: f64,
    pub solver: Solver,
    pub max_iter: usize,
    /// Relative tolerance on the fixed-point step `‖Δα‖ ≤ tol·(1 + ‖α‖)`.
    pub tol: f64,
    /// Backtracking shrink factor β ∈ (0, 1).
    pub backtrack: f64,
    /// Initial step; defaults to the reciprocal of an estimated Lipschitz constant.
    pub initial_step: Option<f64>,
    pub exec: Parallelism,
}

impl ShrinkConfig {
    pub fn new(solver: Solver, lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            solver,
            max_iter: 5000,
            tol: 1e-8,
            backtrack: 0.5,
            initial_step: None,
            exec: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter("lambda1 and lambda2 must be >= 0".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "backtracking factor must be in (0,1), got {}",
                self.backtrack
            )));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("need max_iter >= 1 and tol > 0".into()));
        }
        if let Some(t) = self.initial_step {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter("initial step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub solver: Solver,
    /// Objective after each iteration (index 0 is the starting point).
    pub objectives: Vec<f64>,
    /// Running best objective (differs from `objectives` only for subgradient).
    pub best_objectives: Vec<f64>,
    /// Seconds since the start of the solve, per entry of `objectives`.
    pub elapsed: Vec<f64>,
    pub alpha: GroupCoefs,
    pub termination: Termination,
    /// Step size in force at termination (prox-type solvers).
    pub final_step: f64,
}

impl SolverTrace {
    pub fn final_objective(&self) -> f64 {
        *self.best_objectives.last().expect("trace has a starting entry")
    }

    pub fn iterations(&self) -> usize {
        self.objectives.len() - 1
    }

    /// True when every objective is at most the previous one plus `slack·(1+|F|)`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objectives
            .windows(2)
            .all(|w| w[1] <= w[0] + slack * (1.0 + w[0].abs()))
    }
}

fn check_alpha(design: &GroupKernelDesign, alpha: &GroupCoefs) -> Result<()> {
    check_dim(design.n_groups(), alpha.n_groups())?;
    check_dim(design.n(), alpha.block_len())
}

/// `K_j α_j` for every group.
fn fitted_blocks(design: &GroupKernelDesign, alpha: &GroupCoefs, exec: Parallelism) -> Vec<Vec<f64>> {
    par::map_indices(design.n_groups(), exec, |j| {
        let a = alpha.block(j);
        if a.iter().all(|v| *v == 0.0) {
            vec![0.0; design.n()]
        } else {
            design.kernels[j].matvec(a)
        }
    })
}

fn residual(design: &GroupKernelDesign, fitted: &[Vec<f64>]) -> Vec<f64> {
    let mut r = design.y.clone();
    for f in fitted {
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri -= fi;
        }
    }
    r
}

fn smooth_from_fitted(
    design: &GroupKernelDesign,
    alpha: &GroupCoefs,
    fitted: &[Vec<f64>],
    lambda1: f64,
) -> f64 {
    let r = residual(design, fitted);
    let mut g = 0.5 * dot(&r, &r);
    if lambda1 > 0.0 {
        let quad: f64 = (0..design.n_groups())
            .map(|j| dot(alpha.block(j), &fitted[j]))
            .sum();
        g += 0.5 * lambda1 * quad;
    }
    g
}

fn penalty(alpha: &GroupCoefs, lambda2: f64) -> f64 {
    if lambda2 == 0.0 {
        return 0.0;
    }
    lambda2 * alpha.group_norms().iter().sum::<f64>()
}

/// The smooth part `G(α)`.
pub fn smooth_objective(design: &GroupKernelDesign, alpha: &GroupCoefs, lambda1: f64) -> Result<f64> {
    check_alpha(design, alpha)?;
    let fitted = fitted_blocks(design, alpha, Parallelism::Sequential);
    Ok(smooth_from_fitted(design, alpha, &fitted, lambda1))
}

/// `F(α) = G(α) + λ2 Σ‖α_j‖`.
pub fn shrink_objective(
    design: &GroupKernelDesign,
    alpha: &GroupCoefs,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    Ok(smooth_objective(design, alpha, lambda1)? + penalty(alpha, lambda2))
}

fn gradient_from_fitted(
    design: &GroupKernelDesign,
    fitted: &[Vec<f64>],
    lambda1: f64,
    exec: Parallelism,
) -> GroupCoefs {
    let r = residual(design, fitted);
    let blocks = par::map_indices(design.n_groups(), exec, |j| {
        let mut g = design.kernels[j].matvec(&r);
        g.iter_mut().for_each(|v| *v = -*v);
        if lambda1 > 0.0 {
            axpy(lambda1, &fitted[j], &mut g);
        }
        g
    });
    GroupCoefs::from_blocks(&blocks).expect("uniform blocks")
}

/// `∇G(α)`, blockwise.
pub fn smooth_gradient(
    design: &GroupKernelDesign,
    alpha: &GroupCoefs,
    lambda1: f64,
) -> Result<GroupCoefs> {
    check_alpha(design, alpha)?;
    let fitted = fitted_blocks(design, alpha, Parallelism::Sequential);
    Ok(gradient_from_fitted(design, &fitted, lambda1, Parallelism::Sequential))
}

/// Group soft-threshold: `0` when `‖v‖ ≤ t`, else `(1 − t/‖v‖)·v`.
pub fn group_prox(v: &[f64], threshold: f64) -> Vec<f64> {
    let nv = norm2(v);
    if nv <= threshold {
        vec![0.0; v.len()]
    } else {
        let s = 1.0 - threshold / nv;
        v.iter().map(|x| s * x).collect()
    }
}

fn prox_all(v: &GroupCoefs, threshold: f64) -> GroupCoefs {
    let mut out = v.clone();
    if threshold == 0.0 {
        return out;
    }
    for j in 0..v.n_groups() {
        let p = group_prox(v.block(j), threshold);
        out.block_mut(j).copy_from_slice(&p);
    }
    out
}

/// `‖α − prox(α − t∇G(α), tλ2)‖`: zero exactly at minimizers.
pub fn prox_gradient_residual(
    design: &GroupKernelDesign,
    alpha: &GroupCoefs,
    lambda1: f64,
    lambda2: f64,
    step: f64,
) -> Result<f64> {
    let g = smooth_gradient(design, alpha, lambda1)?;
    let mut v = alpha.clone();
    axpy(-step, g.as_slice(), v.as_mut_slice());
    let p = prox_all(&v, step * lambda2);
    Ok(p.as_slice()
        .iter()
        .zip(alpha.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Power-iteration estimate of the largest eigenvalue of `∇²G`.
pub fn lipschitz_estimate(design: &GroupKernelDesign, lambda1: f64) -> f64 {
    let (m, n) = (design.n_groups(), design.n());
    let mut v = GroupCoefs::zeros(m, n);
    let init = 1.0 / ((m * n) as f64).sqrt();
    v.as_mut_slice().iter_mut().enumerate().for_each(|(i, x)| {
        // deterministic, not aligned with any special direction
        *x = init * (1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract());
    });
    let mut est = 0.0;
    for _ in 0..60 {
        let fitted = fitted_blocks(design, &v, Parallelism::Sequential);
        let mut s = vec![0.0; n];
        for f in &fitted {
            axpy(1.0, f, &mut s);
        }
        let mut hv = GroupCoefs::zeros(m, n);
        for j in 0..m {
            let mut b = design.kernels[j].matvec(&s);
            if lambda1 > 0.0 {
                axpy(lambda1, &fitted[j], &mut b);
            }
            hv.block_mut(j).copy_from_slice(&b);
        }
        let nrm = hv.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        est = nrm / v.norm();
        hv.as_mut_slice().iter_mut().for_each(|x| *x /= nrm);
        v = hv;
    }
    est
}

fn default_step(design: &GroupKernelDesign, config: &ShrinkConfig) -> f64 {
    config.initial_step.unwrap_or_else(|| {
        let l = lipschitz_estimate(design, config.lambda1);
        if l > 0.0 {
            1.0 / l
        } else {
            1.0
        }
    })
}

struct TraceBuilder {
    start: Instant,
    objectives: Vec<f64>,
    best: Vec<f64>,
    elapsed: Vec<f64>,
}

impl TraceBuilder {
    fn new(f0: f64) -> Self {
        let start = Instant::now();
        Self {
            start,
            objectives: vec![f0],
            best: vec![f0],
            elapsed: vec![0.0],
        }
    }

    fn push(&mut self, f: f64) {
        let b = self.best.last().copied().unwrap_or(f).min(f);
        self.objectives.push(f);
        self.best.push(b);
        self.elapsed.push(self.start.elapsed().as_secs_f64());
    }

    fn finish(self, solver: Solver, alpha: GroupCoefs, termination: Termination, step: f64) -> SolverTrace {
        SolverTrace {
            solver,
            objectives: self.objectives,
            best_objectives: self.best,
            elapsed: self.elapsed,
            alpha,
            termination,
            final_step: step,
        }
    }
}

/// Runs the solver named in `config` from `α = 0`.
pub fn solve(design: &GroupKernelDesign, config: &ShrinkConfig) -> Result<SolverTrace> {
    solve_from(design, config, None)
}

/// Runs the solver named in `config`, optionally warm-started.
pub fn solve_from(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    start: Option<&GroupCoefs>,
) -> Result<SolverTrace> {
    match config.solver {
        Solver::Subgradient => subgradient_solve(design, config, start),
        Solver::ProxGrad | Solver::AccelProxGrad => prox_grad(design, config, start),
        Solver::Bcgd => bcgd(design, config, start),
        Solver::ExactBcd => exact_bcd(design, config, start),
    }
}

fn initial_alpha(design: &GroupKernelDesign, start: Option<&GroupCoefs>) -> Result<GroupCoefs> {
    match start {
        Some(a) => {
            check_alpha(design, a)?;
            Ok(a.clone())
        }
        None => Ok(GroupCoefs::zeros(design.n_groups(), design.n())),
    }
}

/// Proximal gradient with backtracking; with [`Solver::AccelProxGrad`] adds
/// Nesterov momentum and restarts whenever the objective would increase.
pub fn prox_grad(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    start: Option<&GroupCoefs>,
) -> Result<SolverTrace> {
    config.validate()?;
    let accel = match config.solver {
        Solver::ProxGrad => false,
        Solver::AccelProxGrad => true,
        other => {
            return Err(Error::InvalidParameter(format!(
                "prox_grad cannot run solver {}",
                other.name()
            )))
        }
    };
    let (l1, l2, exec) = (config.lambda1, config.lambda2, config.exec);
    let mut alpha = initial_alpha(design, start)?;
    let mut alpha_prev = alpha.clone();
    let mut fitted = fitted_blocks(design, &alpha, exec);
    let mut f_cur = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
    let mut trace = TraceBuilder::new(f_cur);
    let mut t = default_step(design, config);
    let mut theta: f64 = 1.0;
    let mut termination = Termination::MaxIterations;

    for _ in 0..config.max_iter {
        let mut restarted = false;
        loop {
            // extrapolated point (equals alpha without momentum)
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = if accel && !restarted { (theta - 1.0) / theta_next } else { 0.0 };
            let point = if beta > 0.0 {
                let mut p = alpha.clone();
                for (pi, (a, b)) in p.as_mut_slice().iter_mut().zip(alpha.as_slice().iter().zip(alpha_prev.as_slice())) {
                    *pi = a + beta * (a - b);
                }
                p
            } else {
                alpha.clone()
            };
            let fitted_pt = if beta > 0.0 { fitted_blocks(design, &point, exec) } else { fitted.clone() };
            let g_pt = smooth_from_fitted(design, &point, &fitted_pt, l1);
            let grad = gradient_from_fitted(design, &fitted_pt, l1, exec);

            let (cand, cand_fitted, g_cand) = loop {
                let mut v = point.clone();
                axpy(-t, grad.as_slice(), v.as_mut_slice());
                let cand = prox_all(&v, t * l2);
                let cf = fitted_blocks(design, &cand, exec);
                let g_c = smooth_from_fitted(design, &cand, &cf, l1);
                let diff: Vec<f64> = cand
                    .as_slice()
                    .iter()
                    .zip(point.as_slice())
                    .map(|(a, b)| a - b)
                    .collect();
                let bound = g_pt + dot(grad.as_slice(), &diff) + dot(&diff, &diff) / (2.0 * t);
                if g_c <= bound + 1e-12 * (1.0 + g_pt.abs()) || t < 1e-300 {
                    break (cand, cf, g_c);
                }
                t *= config.backtrack;
            };
            let f_cand = g_cand + penalty(&cand, l2);
            if accel && f_cand > f_cur && !restarted {
                theta = 1.0;
                restarted = true;
                continue;
            }
            let step_norm = cand
                .as_slice()
                .iter()
                .zip(point.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            // a plain step cannot increase F beyond rounding, so stalling here means converged
            if f_cand > f_cur && (!accel || restarted) {
                termination = Termination::Converged;
                break;
            }
            alpha_prev = std::mem::replace(&mut alpha, cand);
            fitted = cand_fitted;
            f_cur = f_cand;
            trace.push(f_cur);
            theta = if accel && !restarted {
                0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt())
            } else {
                1.0
            };
            if step_norm <= config.tol * (1.0 + alpha.norm()) {
                let res = if beta > 0.0 {
                    prox_gradient_residual(design, &alpha, l1, l2, t)?
                } else {
                    step_norm
                };
                if res <= config.tol * (1.0 + alpha.norm()) || step_norm == 0.0 {
                    termination = Termination::Converged;
                }
            }
            break;
        }
        if termination == Termination::Converged {
            break;
        }
    }
    Ok(trace.finish(config.solver, alpha, termination, t))
}

/// `max diag(K_jᵀK_j + λ1 K_j)` for every group.
pub fn bcgd_curvatures(design: &GroupKernelDesign, lambda1: f64) -> Vec<f64> {
    design.kernels.iter().map(|k| k.hessian_diag_max(lambda1)).collect()
}

/// Block coordinate gradient descent with `H_j = h_j I`, cyclic over blocks,
/// with an Armijo line search on `F`.
pub fn bcgd(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    start: Option<&GroupCoefs>,
) -> Result<SolverTrace> {
    config.validate()?;
    let (l1, l2) = (config.lambda1, config.lambda2);
    let h = bcgd_curvatures(design, l1);
    let mut alpha = initial_alpha(design, start)?;
    let mut fitted = fitted_blocks(design, &alpha, config.exec);
    let mut r = residual(design, &fitted);
    let f0 = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
    let mut trace = TraceBuilder::new(f0);
    let mut termination = Termination::MaxIterations;
    const ARMIJO: f64 = 0.1;

    for _ in 0..config.max_iter {
        let mut sweep_sq = 0.0;
        for j in 0..design.n_groups() {
            if h[j] <= 0.0 {
                continue;
            }
            let k = &design.kernels[j];
            let aj = alpha.block(j).to_vec();
            let mut g = k.matvec(&r);
            g.iter_mut().for_each(|v| *v = -*v);
            if l1 > 0.0 {
                axpy(l1, &fitted[j], &mut g);
            }
            let v: Vec<f64> = aj.iter().zip(&g).map(|(a, gi)| a - gi / h[j]).collect();
            let p = group_prox(&v, l2 / h[j]);
            let d: Vec<f64> = p.iter().zip(&aj).map(|(a, b)| a - b).collect();
            let dn = norm2(&d);
            if dn == 0.0 {
                continue;
            }
            let u = k.matvec(&d);
            let old_norm = norm2(&aj);
            let delta = dot(&g, &d) + l2 * (norm2(&p) - old_norm);
            let ru = dot(&r, &u);
            let uu = dot(&u, &u);
            let df = dot(&d, &fitted[j]);
            let du = dot(&d, &u);
            let change = |s: f64| {
                let moved: Vec<f64> = aj.iter().zip(&d).map(|(a, di)| a + s * di).collect();
                -s * ru + 0.5 * s * s * uu + l1 * (s * df + 0.5 * s * s * du)
                    + l2 * (norm2(&moved) - old_norm)
            };
            let mut s = 1.0;
            let mut accepted = None;
            while s > 1e-30 {
                let c = change(s);
                if c <= ARMIJO * s * delta {
                    accepted = Some((s, c));
                    break;
                }
                s *= config.backtrack;
            }
            let Some((s, c)) = accepted else { continue };
            if c > 0.0 {
                continue;
            }
            if s == 1.0 {
                alpha.block_mut(j).copy_from_slice(&p);
            } else {
                axpy(s, &d, alpha.block_mut(j));
            }
            axpy(s, &u, &mut fitted[j]);
            axpy(-s, &u, &mut r);
            sweep_sq += (s * dn) * (s * dn);
        }
        // refresh to avoid drift in the running objective
        let exact = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
        trace.push(exact);
        if sweep_sq.sqrt() <= config.tol * (1.0 + alpha.norm()) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(trace.finish(Solver::Bcgd, alpha, termination, 0.0))
}

/// Root `t > 0` of `Σ_k c_k²/(t a_k + λ2)² = 1`, with `a_k ≥ 0` and
/// `‖c‖ > λ2 > 0`. The left side decreases monotonically in `t`; the root is
/// found by Newton's method on `1/√φ(t) − 1`, safeguarded by bisection.
pub fn secular_root(eigenvalues: &[f64], coeffs: &[f64], lambda2: f64) -> Result<f64> {
    let phi = |t: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for (&a, &c) in eigenvalues.iter().zip(coeffs) {
            let den = t * a + lambda2;
            let c2 = c * c;
            v += c2 / (den * den);
            dv += -2.0 * c2 * a / (den * den * den);
        }
        (v, dv)
    };
    let psi = |t: f64| -> (f64, f64) {
        let (v, dv) = phi(t);
        let s = v.sqrt();
        (1.0 / s - 1.0, -0.5 * dv / (v * s))
    };
    let (p0, _) = psi(0.0);
    if !(p0 < 0.0) {
        return Err(Error::SecularNoRoot);
    }
    let a_max = eigenvalues.iter().copied().fold(0.0, f64::max);
    if a_max <= 0.0 {
        return Err(Error::SecularNoRoot);
    }
    let cn = norm2(coeffs);
    let mut lo = 0.0;
    let mut hi = ((cn - lambda2) / a_max).max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    while psi(hi).0 < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::SecularNoRoot);
        }
    }
    let mut t = lo;
    for _ in 0..200 {
        let (v, dv) = psi(t);
        if v.abs() <= 1e-15 {
            return Ok(t);
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if dv > 0.0 { t - v / dv } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            return Ok(t);
        }
    }
    Ok(t)
}

/// Exact block coordinate descent: each block subproblem
/// `min ½αᵀAα + bᵀα + λ2‖α‖` is zero when `‖b‖ ≤ λ2` and otherwise
/// `α = −t (tA + λ2 I)⁻¹ b` with `t` the secular root.
pub fn exact_bcd(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    start: Option<&GroupCoefs>,
) -> Result<SolverTrace> {
    config.validate()?;
    let (l1, l2) = (config.lambda1, config.lambda2);
    let eigs = par::map_indices(design.n_groups(), config.exec, |j| design.kernels[j].hessian_eigen(l1));
    let eigs = eigs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut alpha = initial_alpha(design, start)?;
    let mut fitted = fitted_blocks(design, &alpha, config.exec);
    let mut r = residual(design, &fitted);
    let f0 = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
    let mut trace = TraceBuilder::new(f0);
    let mut termination = Termination::MaxIterations;
    let n = design.n();

    for _ in 0..config.max_iter {
        let mut change_sq = 0.0;
        for j in 0..design.n_groups() {
            let k = &design.kernels[j];
            // residual without block j
            axpy(1.0, &fitted[j], &mut r);
            let mut b = k.matvec(&r);
            b.iter_mut().for_each(|v| *v = -*v);
            let bn = norm2(&b);
            let eig = &eigs[j];
            let a_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
            let floor = a_max * 1e-13;
            let new_block: Vec<f64> = if bn <= l2 {
                vec![0.0; n]
            } else {
                let c = eig.vectors.matvec_t(&b)?;
                let a: Vec<f64> = eig.values.iter().map(|v| if *v > floor { *v } else { 0.0 }).collect();
                let scaled: Option<Vec<f64>> = if l2 == 0.0 {
                    // unpenalized block: pseudo-inverse solution
                    Some(a.iter().zip(&c).map(|(ak, ck)| if *ak > 0.0 { -ck / ak } else { 0.0 }).collect())
                } else {
                    match secular_root(&a, &c, l2) {
                        Ok(t) => Some(a.iter().zip(&c).map(|(ak, ck)| -t * ck / (t * ak + l2)).collect()),
                        Err(Error::SecularNoRoot) => None,
                        Err(e) => return Err(e),
                    }
                };
                match scaled {
                    Some(w) => eig.vectors.matvec(&w)?,
                    None => vec![0.0; n],
                }
            };
            let old = alpha.block(j);
            change_sq += old
                .iter()
                .zip(&new_block)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            // keep the block only if it does not increase F (guards rounding)
            let new_fit = k.matvec(&new_block);
            let block_f = |blk: &[f64], fit: &[f64]| {
                let res: Vec<f64> = r.iter().zip(fit).map(|(ri, fi)| ri - fi).collect();
                0.5 * dot(&res, &res) + 0.5 * l1 * dot(blk, fit) + l2 * norm2(blk)
            };
            if block_f(&new_block, &new_fit) <= block_f(old, &fitted[j]) {
                alpha.block_mut(j).copy_from_slice(&new_block);
                fitted[j] = new_fit;
            }
            axpy(-1.0, &fitted[j], &mut r);
        }
        let f = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
        trace.push(f);
        if change_sq.sqrt() <= config.tol * (1.0 + alpha.norm()) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(trace.finish(Solver::ExactBcd, alpha, termination, 0.0))
}

/// Subgradient descent with steps `t_0/√k`; the subgradient of `‖α_j‖` at a
/// zero block is taken as 0. Returns the best iterate seen.
pub fn subgradient_solve(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    start: Option<&GroupCoefs>,
) -> Result<SolverTrace> {
    config.validate()?;
    let (l1, l2, exec) = (config.lambda1, config.lambda2, config.exec);
    let t0 = default_step(design, config);
    let mut alpha = initial_alpha(design, start)?;
    let mut fitted = fitted_blocks(design, &alpha, exec);
    let f0 = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
    let mut trace = TraceBuilder::new(f0);
    let mut best = (f0, alpha.clone());
    let mut termination = Termination::MaxIterations;
    for k in 1..=config.max_iter {
        let mut g = gradient_from_fitted(design, &fitted, l1, exec);
        if l2 > 0.0 {
            for j in 0..alpha.n_groups() {
                let a = alpha.block(j);
                let na = norm2(a);
                if na > 0.0 {
                    let a = a.to_vec();
                    axpy(l2 / na, &a, g.block_mut(j));
                }
            }
        }
        if g.norm() == 0.0 {
            termination = Termination::Converged;
            break;
        }
        let step = t0 / (k as f64).sqrt();
        axpy(-step, g.as_slice(), alpha.as_mut_slice());
        fitted = fitted_blocks(design, &alpha, exec);
        let f = smooth_from_fitted(design, &alpha, &fitted, l1) + penalty(&alpha, l2);
        trace.push(f);
        if f < best.0 {
            best = (f, alpha.clone());
        }
    }
    Ok(trace.finish(Solver::Subgradient, best.1, termination, t0))
}

/// Indices of groups with `‖α_j‖₂ > tau`.
pub fn selected_groups(alpha: &GroupCoefs, tau: f64) -> Vec<usize> {
    alpha
        .group_norms()
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > tau)
        .map(|(j, _)| j)
        .collect()
}

/// True/false positive rates of a selection against the true group indices.
pub fn support_rates(selected: &[usize], truth: &[usize], n_groups: usize) -> (f64, f64) {
    let tp = selected.iter().filter(|j| truth.contains(j)).count();
    let fp = selected.len() - tp;
    let negatives = n_groups - truth.len();
    let tpr = if truth.is_empty() { 1.0 } else { tp as f64 / truth.len() as f64 };
    let fpr = if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 };
    (tpr, fpr)
}

/// Group norms along a decreasing `λ2` grid.
#[derive(Debug, Clone)]
pub struct LambdaPath {
    pub lambda2: Vec<f64>,
    /// `norms[k][j] = ‖α_j‖₂` at `lambda2[k]`.
    pub norms: Vec<Vec<f64>>,
    pub objectives: Vec<f64>,
    pub terminations: Vec<Termination>,
    pub iterations: Vec<usize>,
}

/// Solves along `grid` (strictly decreasing), warm-starting each solve from
/// the previous solution.
pub fn lambda_path(
    design: &GroupKernelDesign,
    config: &ShrinkConfig,
    grid: &[f64],
) -> Result<LambdaPath> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) || grid.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter("lambda2 grid must be strictly decreasing and >= 0".into()));
    }
    let mut cfg = config.clone();
    if cfg.initial_step.is_none() && matches!(cfg.solver, Solver::ProxGrad | Solver::AccelProxGrad | Solver::Subgradient) {
        cfg.initial_step = Some(default_step(design, config));
    }
    let mut path = LambdaPath {
        lambda2: grid.to_vec(),
        norms: vec![],
        objectives: vec![],
        terminations: vec![],
        iterations: vec![],
    };
    let mut warm: Option<GroupCoefs> = None;
    for &l2 in grid {
        cfg.lambda2 = l2;
        let tr = solve_from(design, &cfg, warm.as_ref())?;
        path.norms.push(tr.alpha.group_norms());
        path.objectives.push(tr.final_objective());
        path.terminations.push(tr.termination);
        path.iterations.push(tr.iterations());
        warm = Some(tr.alpha);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    /// Random design with RBF group kernels on random 1-D features.
    pub(crate) fn random_design(n: usize, m: usize, seed: u64) -> GroupKernelDesign {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DenseMatrix::new(n, m, x).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| (2.0 * x[(i, 0)]).sin() + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        let groups: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
        build_group_design(&x, &y, &groups, 1.0, Parallelism::Sequential).unwrap()
    }

    #[test]
    fn prox_cases() {
        assert_eq!(group_prox(&[0.3, 0.4], 0.5), vec![0.0, 0.0]);
        assert_eq!(group_prox(&[0.3, 0.4], 0.0), vec![0.3, 0.4]);
        let p = group_prox(&[3.0, 4.0], 1.0);
        assert!((p[0] - 2.4).abs() < 1e-15 && (p[1] - 3.2).abs() < 1e-15);
    }

    #[test]
    fn objective_at_zero() {
        let d = random_design(8, 2, 1);
        let a = GroupCoefs::zeros(2, 8);
        let f = shrink_objective(&d, &a, 0.5, 0.5).unwrap();
        assert!((f - 0.5 * dot(d.y(), d.y())).abs() < 1e-14);
        assert!(shrink_objective(&d, &GroupCoefs::zeros(3, 8), 0.0, 0.0).is_err());
    }

    #[test]
    fn interpolation_gives_zero_objective() {
        let mut k = DenseMatrix::identity(4);
        k[(0, 1)] = 0.3;
        k[(1, 0)] = 0.3;
        let y = vec![1.0, -2.0, 0.5, 0.25];
        let d = GroupKernelDesign::new(vec![k.clone()], y.clone(), vec![vec![0]]).unwrap();
        let f = linalg::cholesky_factor(&k, &JitterPolicy::none()).unwrap();
        let a = GroupCoefs::from_blocks(&[f.solve_vec(&y).unwrap()]).unwrap();
        assert!(shrink_objective(&d, &a, 0.0, 0.0).unwrap() < 1e-25);
    }

    #[test]
    fn homogeneity() {
        let d = random_design(6, 2, 2);
        let mut rng = SplitMix64::seed_from_u64(3);
        let a = GroupCoefs::from_blocks(&[
            (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        ])
        .unwrap();
        let t = 2.5;
        let ys: Vec<f64> = d.y().iter().map(|v| v * t).collect();
        let d2 = d.with_targets(ys).unwrap();
        let mut at = a.clone();
        at.as_mut_slice().iter_mut().for_each(|v| *v *= t);
        let q1 = shrink_objective(&d, &a, 0.3, 0.0).unwrap();
        let q2 = shrink_objective(&d2, &at, 0.3, 0.0).unwrap();
        assert!((q2 - t * t * q1).abs() <= 1e-10 * q2.abs());
    }

    #[test]
    fn curvature_for_identity() {
        let d = GroupKernelDesign::new(vec![DenseMatrix::identity(3)], vec![1.0, 0.0, 0.0], vec![vec![0]]).unwrap();
        assert_eq!(bcgd_curvatures(&d, 2.0), vec![3.0]);
    }

    #[test]
    fn secular_identity_case() {
        let b = [3.0, -4.0];
        let t = secular_root(&[1.0, 1.0], &b, 2.0).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        assert!(matches!(secular_root(&[1.0, 1.0], &[0.1, 0.1], 1.0), Err(Error::SecularNoRoot)));
    }

    #[test]
    fn exact_block_identity_matches_prox_structure() {
        // A = KᵀK + λ1 K with K = I and λ1 = 0 gives A = I
        let y = vec![3.0, -1.0, 2.0];
        let d = GroupKernelDesign::new(vec![DenseMatrix::identity(3)], y.clone(), vec![vec![0]]).unwrap();
        let mut cfg = ShrinkConfig::new(Solver::ExactBcd, 0.0, 1.5);
        cfg.max_iter = 3;
        let tr = exact_bcd(&d, &cfg, None).unwrap();
        // b = −y, block = −b(1 − λ2/‖b‖) = y(1 − λ2/‖y‖)
        let s = 1.0 - 1.5 / norm2(&y);
        for (a, yi) in tr.alpha.block(0).iter().zip(&y) {
            assert!((a - s * yi).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_block_zero_below_threshold() {
        let y = vec![0.3, 0.4];
        let d = GroupKernelDesign::new(vec![DenseMatrix::identity(2)], y, vec![vec![0]]).unwrap();
        // ‖b‖ = 0.5 = 0.9 λ2
        let cfg = ShrinkConfig::new(Solver::ExactBcd, 0.0, 0.5 / 0.9);
        let tr = exact_bcd(&d, &cfg, None).unwrap();
        assert!(tr.alpha.block(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kill_threshold_all_solvers() {
        let d = random_design(10, 3, 4);
        let lmax = d.lambda_max();
        for solver in [Solver::ProxGrad, Solver::AccelProxGrad, Solver::Bcgd, Solver::ExactBcd, Solver::Subgradient] {
            let mut cfg = ShrinkConfig::new(solver, 0.1, lmax * 1.01);
            cfg.max_iter = 50;
            let tr = solve(&d, &cfg).unwrap();
            assert!(tr.alpha.as_slice().iter().all(|v| *v == 0.0), "{solver:?}");
            if matches!(solver, Solver::ProxGrad | Solver::AccelProxGrad) {
                assert!(tr.iterations() <= 2);
            }
            if solver == Solver::Bcgd || solver == Solver::ExactBcd {
                assert_eq!(tr.iterations(), 1);
            }
        }
    }

    #[test]
    fn prox_grad_reaches_interpolation() {
        let mut rng = SplitMix64::seed_from_u64(5);
        let m = DenseMatrix::new(5, 5, (0..25).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut k = m.transpose().matmul(&m).unwrap();
        for i in 0..5 {
            k[(i, i)] += 0.5;
        }
        let y: Vec<f64> = (0..5).map(|i| (i as f64).cos()).collect();
        let d = GroupKernelDesign::new(vec![k], y, vec![vec![0]]).unwrap();
        let mut cfg = ShrinkConfig::new(Solver::ProxGrad, 0.0, 0.0);
        cfg.max_iter = 20_000;
        cfg.tol = 1e-12;
        let tr = prox_grad(&d, &cfg, None).unwrap();
        assert!(tr.final_objective() <= 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = random_design(7, 3, 6);
        let mut rng = SplitMix64::seed_from_u64(7);
        let a = GroupCoefs::from_blocks(
            &(0..3).map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect()).collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let l1 = 0.7;
        let g = smooth_gradient(&d, &a, l1).unwrap();
        let h = 1e-5;
        for i in 0..a.as_slice().len() {
            let mut p = a.clone();
            p.as_mut_slice()[i] += h;
            let mut q = a.clone();
            q.as_mut_slice()[i] -= h;
            let fd = (smooth_objective(&d, &p, l1).unwrap() - smooth_objective(&d, &q, l1).unwrap()) / (2.0 * h);
            let gi = g.as_slice()[i];
            assert!((fd - gi).abs() <= 1e-5 * gi.abs().max(1.0), "{fd} vs {gi}");
        }
    }

    #[test]
    fn subgradient_stays_at_zero_without_signal() {
        let d0 = random_design(6, 2, 8);
        let d = d0.with_targets(vec![0.0; 6]).unwrap();
        let cfg = ShrinkConfig::new(Solver::Subgradient, 0.1, 0.1);
        let tr = subgradient_solve(&d, &cfg, None).unwrap();
        assert!(tr.alpha.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(tr.termination, Termination::Converged);
    }

    #[test]
    fn selection_helpers() {
        let a = GroupCoefs::zeros(3, 2);
        assert!(selected_groups(&a, 0.0).is_empty());
        let b = GroupCoefs::from_blocks(&[vec![0.0, 0.0], vec![0.0, 1e-3], vec![0.0, 0.0]]).unwrap();
        assert_eq!(selected_groups(&b, 0.0), vec![1]);
        assert_eq!(support_rates(&[0, 1, 5], &[0, 1, 2], 13), (2.0 / 3.0, 0.1));
    }

    #[test]
    fn config_validation() {
        let d = random_design(5, 2, 9);
        let mut cfg = ShrinkConfig::new(Solver::ProxGrad, -1.0, 0.0);
        assert!(solve(&d, &cfg).is_err());
        cfg.lambda1 = 0.0;
        cfg.backtrack = 1.0;
        assert!(solve(&d, &cfg).is_err());
        let bcgd_cfg = ShrinkConfig::new(Solver::Bcgd, 0.0, 0.0);
        assert!(prox_grad(&d, &bcgd_cfg, None).is_err());
    }

    #[test]
    fn path_starts_at_zero_and_is_reproducible() {
        let d = random_design(12, 3, 10);
        let lmax = d.lambda_max();
        let grid = [lmax * 1.1, lmax * 0.5, lmax * 0.1, lmax * 0.01];
        let cfg = ShrinkConfig::new(Solver::ProxGrad, 0.1, 0.0);
        let p = lambda_path(&d, &cfg, &grid).unwrap();
        assert!(p.norms[0].iter().all(|v| *v == 0.0));
        let q = lambda_path(&d, &cfg, &grid).unwrap();
        assert_eq!(p.norms, q.norms);
        assert!(lambda_path(&d, &cfg, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn low_rank_design_matches_dense() {
        let mut rng = SplitMix64::seed_from_u64(11);
        let (n, m) = (40, 3);
        let x = DenseMatrix::new(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|i| x[(i, 1)].powi(2) + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let groups = vec![vec![0], vec![1], vec![0, 2]];
        let dense = build_group_design(&x, &y, &groups, 2.0, Parallelism::Sequential).unwrap();
        let lr = build_group_design_low_rank(&x, &y, &groups, 2.0, 1e-13, Parallelism::Sequential).unwrap();
        for j in 0..m {
            let a = dense.kernel(j).to_dense();
            let b = lr.kernel(j).to_dense();
            assert!(a.sub(&b).unwrap().max_abs() <= 1e-10, "group {j}");
        }
        assert!(lr.kernel(0).rank() < n);
        let mut cfg = ShrinkConfig::new(Solver::AccelProxGrad, 0.01, 0.05 * dense.lambda_max());
        cfg.tol = 1e-10;
        let f_dense = solve(&dense, &cfg).unwrap().final_objective();
        let f_lr = solve(&lr, &cfg).unwrap().final_objective();
        assert!((f_dense - f_lr).abs() <= 1e-6 * f_dense.abs());
        cfg.solver = Solver::ExactBcd;
        let f_exact = solve(&lr, &cfg).unwrap().final_objective();
        assert!((f_exact - f_lr).abs() <= 1e-6 * f_lr.abs());
    }
}

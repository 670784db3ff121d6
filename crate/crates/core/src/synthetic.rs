//! Synthetic regression problems: the log-of-three-Gaussian-bumps function,
//! its additive composition over all `C(D, d)` coordinate subsets, and the
//! 50-dimensional function-selection model with known true components.
//!
//! Sampling is reproducible across implementations: row `i` of a dataset
//! draws from its own SplitMix64 stream seeded with
//! `mix64(seed ⊕ (i + 1)·0x9E3779B97F4A7C15)`, first the `D` inputs
//! (uniform on `[−1, 1)`), then one standard normal for the noise.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

use crate::data::TabularDataset;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{binomial_f64, subsets};
use crate::linalg::DenseMatrix;
use crate::par::{self, Parallelism};

/// Identifier of the row-stream sampling scheme, written to metadata.
pub const GENERATOR_ID: &str = "splitmix64-rowstream-v1";

/// Largest number of additive terms [`AdditiveBumps`] will hold.
pub const MAX_ADDITIVE_TERMS: u128 = 1_000_000;

/// A deterministic regression function on `[−1, 1]^D`.
pub trait TargetFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn describe(&self) -> String;
}

/// `log Σ_k w_k h^{-d} exp(−‖x − v_k‖² / 2h²)` with `w = (α1, α2, 1 − α1 − α2)`
/// and `h = 0.01·√d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpFunctionSpec {
    dim: usize,
    weights: [f64; 3],
    centers: [Vec<f64>; 3],
    bandwidth: f64,
}

impl BumpFunctionSpec {
    pub fn new(dim: usize, alpha1: f64, alpha2: f64, centers: [Vec<f64>; 3]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("bump dimension must be >= 1".into()));
        }
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        if !in_unit(alpha1) || !in_unit(alpha2) || alpha1 + alpha2 > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights ({alpha1}, {alpha2}) must lie in [0,1] and sum to at most 1"
            )));
        }
        for c in &centers {
            check_dim(dim, c.len())?;
            if c.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::InvalidParameter("bump centers must lie in [-1,1]".into()));
            }
        }
        Ok(Self {
            dim,
            weights: [alpha1, alpha2, (1.0 - alpha1 - alpha2).max(0.0)],
            centers,
            bandwidth: 0.01 * (dim as f64).sqrt(),
        })
    }

    /// Weights `1/3` each and centers uniform on `[−0.5, 0.5]^d` from `seed`.
    pub fn seeded(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut center = || (0..dim).map(|_| rng.random_range(-0.5..=0.5)).collect::<Vec<_>>();
        let centers = [center(), center(), center()];
        Self::new(dim, 1.0 / 3.0, 1.0 / 3.0, centers)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn centers(&self) -> &[Vec<f64>; 3] {
        &self.centers
    }

    /// Stabilized evaluation via log-sum-exp.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let h2 = 2.0 * self.bandwidth * self.bandwidth;
        let mut logs = [f64::NEG_INFINITY; 3];
        for k in 0..3 {
            if self.weights[k] > 0.0 {
                let q: f64 = x
                    .iter()
                    .zip(&self.centers[k])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                logs[k] = self.weights[k].ln() - q / h2;
            }
        }
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        let v = -(self.dim as f64) * self.bandwidth.ln() + m + s.ln();
        debug_assert!(v.is_finite());
        v
    }
}

/// Evaluates the bump function; errors on a length mismatch.
pub fn eval_bump_function(spec: &BumpFunctionSpec, x: &[f64]) -> Result<f64> {
    check_dim(spec.dim, x.len())?;
    let v = spec.evaluate(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("bump function"))
    }
}

impl TargetFunction for BumpFunctionSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }

    fn describe(&self) -> String {
        format!("bumps-full(d={})", self.dim)
    }
}

/// Sum of a bump function over every size-`d` coordinate subset of `D` inputs.
#[derive(Debug, Clone)]
pub struct AdditiveBumps {
    spec: BumpFunctionSpec,
    dim: usize,
    subsets: Vec<Vec<usize>>,
}

/// Composes `spec` additively over all `C(D, d)` subsets, in lexicographic order.
pub fn additive_compose(spec: &BumpFunctionSpec, dim: usize) -> Result<AdditiveBumps> {
    if spec.dim > dim {
        return Err(Error::OrderExceedsDimension {
            order: spec.dim,
            dim,
        });
    }
    let count = binomial_f64(dim as u64, spec.dim as u64) as u128;
    if count > MAX_ADDITIVE_TERMS {
        return Err(Error::TooLarge(count));
    }
    Ok(AdditiveBumps {
        spec: spec.clone(),
        dim,
        subsets: subsets(dim, spec.dim),
    })
}

impl AdditiveBumps {
    pub fn terms(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn component(&self) -> &BumpFunctionSpec {
        &self.spec
    }
}

impl TargetFunction for AdditiveBumps {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.spec.dim];
        self.subsets
            .iter()
            .map(|s| {
                for (b, &i) in buf.iter_mut().zip(s) {
                    *b = x[i];
                }
                self.spec.evaluate(&buf)
            })
            .sum()
    }

    fn describe(&self) -> String {
        format!("bumps-additive(D={}, d={})", self.dim, self.spec.dim)
    }
}

/// Inputs, targets and provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub generator: String,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn to_tabular(&self) -> Result<TabularDataset> {
        TabularDataset::unnamed(self.x.clone(), self.y.clone(), &self.generator)
    }

    /// Key/value provenance record.
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("generator".into(), self.generator.clone()),
            ("rng".into(), GENERATOR_ID.into()),
            ("seed".into(), self.seed.to_string()),
            ("n".into(), self.x.rows().to_string()),
            ("D".into(), self.x.cols().to_string()),
            ("noise_sd".into(), format!("{}", self.noise_sd)),
        ]
    }
}

/// Writes `key=value` lines.
pub fn write_metadata(path: &Path, meta: &[(String, String)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for (k, v) in meta {
        writeln!(f, "{k}={v}")?;
    }
    Ok(())
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for row `row` of a dataset drawn with `seed`.
pub fn row_stream(seed: u64, row: usize) -> SplitMix64 {
    let key = seed ^ (row as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    SplitMix64::seed_from_u64(mix64(key))
}

/// Uniform inputs on `[−1, 1)^D` with `y = f(x) + N(0, noise_sd²)`.
pub fn sample_dataset(
    f: &dyn TargetFunction,
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    sample_dataset_with(f, n, noise_sd, seed, Parallelism::default())
}

pub fn sample_dataset_with(
    f: &dyn TargetFunction,
    n: usize,
    noise_sd: f64,
    seed: u64,
    exec: Parallelism,
) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidParameter(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let dim = f.dim();
    let rows: Vec<(Vec<f64>, f64)> = par::map_indices(n, exec, |i| {
        let mut rng = row_stream(seed, i);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        let y = f.eval(&x) + noise_sd * eps;
        (x, y)
    });
    let mut data = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for (xr, yr) in rows {
        data.extend(xr);
        y.push(yr);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("synthetic targets"));
    }
    Ok(SyntheticDataset {
        x: DenseMatrix::new(n, dim, data)?,
        y,
        generator: f.describe(),
        noise_sd,
        seed,
    })
}

/// `−2 sin(2x)`.
pub fn spam_f1(x: f64) -> f64 {
    -2.0 * (2.0 * x).sin()
}

/// `x² − 1/3`.
pub fn spam_f2(x: f64) -> f64 {
    x * x - 1.0 / 3.0
}

/// `x − 1/2`.
pub fn spam_f3(x: f64) -> f64 {
    x - 0.5
}

/// `e^{−x} + e^{−1} − 1`.
pub fn spam_f4(x: f64) -> f64 {
    (-x).exp() + (-1.0f64).exp() - 1.0
}

/// Input dimension of the function-selection model.
pub const SPAM_DIM: usize = 50;

/// The 50-dimensional function-selection model: four singleton components on
/// `x1..x4` and four components of the pairwise products `x5x6, …, x11x12`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpamSetting2;

impl TargetFunction for SpamSetting2 {
    fn dim(&self) -> usize {
        SPAM_DIM
    }

    fn eval(&self, x: &[f64]) -> f64 {
        spam_f1(x[0])
            + spam_f2(x[1])
            + spam_f3(x[2])
            + spam_f4(x[3])
            + spam_f1(x[4] * x[5])
            + spam_f2(x[6] * x[7])
            + spam_f3(x[8] * x[9])
            + spam_f4(x[10] * x[11])
    }

    fn describe(&self) -> String {
        "spam-setting2".into()
    }
}

/// The eight groups (0-based coordinates) carrying signal.
pub fn spam_true_groups() -> Vec<Vec<usize>> {
    vec![
        vec![0],
        vec![1],
        vec![2],
        vec![3],
        vec![4, 5],
        vec![6, 7],
        vec![8, 9],
        vec![10, 11],
    ]
}

/// All singletons followed by all pairs in lexicographic order.
pub fn singleton_and_pair_groups(dim: usize) -> Vec<Vec<usize>> {
    let mut g: Vec<Vec<usize>> = (0..dim).map(|i| vec![i]).collect();
    g.extend(subsets(dim, 2));
    g
}

/// Singletons, every pair among the first `leading` coordinates, and `decoys`
/// further pairs drawn (seeded) from the pairs that touch a later coordinate.
pub fn screened_groups(dim: usize, leading: usize, decoys: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if leading > dim {
        return Err(Error::InvalidParameter(format!(
            "leading block {leading} exceeds dimension {dim}"
        )));
    }
    let mut groups: Vec<Vec<usize>> = (0..dim).map(|i| vec![i]).collect();
    groups.extend(subsets(leading, 2));
    let mut others: Vec<Vec<usize>> = subsets(dim, 2).into_iter().filter(|p| p[1] >= leading).collect();
    if decoys > others.len() {
        return Err(Error::InvalidParameter(format!(
            "only {} decoy pairs available, {decoys} requested",
            others.len()
        )));
    }
    others.shuffle(&mut SplitMix64::seed_from_u64(seed));
    others.truncate(decoys);
    others.sort();
    groups.extend(others);
    Ok(groups)
}

/// A sample from the function-selection model with unit Gaussian noise,
/// together with its true groups.
pub fn spam_selection_sample(n: usize, seed: u64) -> Result<(SyntheticDataset, Vec<Vec<usize>>)> {
    let ds = sample_dataset(&SpamSetting2, n, 1.0, seed)?;
    Ok((ds, spam_true_groups()))
}

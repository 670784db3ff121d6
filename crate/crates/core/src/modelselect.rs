//! K-fold cross-validation over a λ grid, and the incremental search over the
//! additive order `d` that stops once the CV error starts rising.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::error::{check_dim, Error, Result};
use crate::kernels;
use crate::linalg::DenseMatrix;
use crate::par::{self, Parallelism};
use crate::salsa::{mse, PreparedFit, SalsaConfig};

/// Strictly increasing, nonempty list of positive λ values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::LambdaNonPositive(*v));
        }
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate lambda in grid".into()));
        }
        Ok(Self(values))
    }

    /// `count` values log-spaced between `lo` and `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(lo > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidParameter(format!("bad grid range [{lo}, {hi}]")));
        }
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.log10(), hi.log10());
        let step = (b - a) / (count - 1) as f64;
        Self::new((0..count).map(|i| 10f64.powf(a + step * i as f64)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LambdaGrid {
    /// 13 log-spaced values from 1e-6 to 1e1.
    fn default() -> Self {
        Self::log_spaced(1e-6, 1e1, 13).expect("static grid")
    }
}

/// Validation index sets: a seeded shuffle cut into `folds` contiguous blocks
/// whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("folds must be >= 2, got {folds}")));
    }
    if n < folds {
        return Err(Error::TooFewRows {
            needed: folds,
            got: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut SplitMix64::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// CV errors over a λ grid at one order.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCv {
    pub order: usize,
    pub lambdas: Vec<f64>,
    pub mean_mse: Vec<f64>,
    pub std_err: Vec<f64>,
    pub best_index: usize,
}

impl LambdaCv {
    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.best_index]
    }

    pub fn best_mse(&self) -> f64 {
        self.mean_mse[self.best_index]
    }
}

/// Index of the smallest value; ties resolve to the earliest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// K-fold CV of the order-`d` estimator over `grid`. Bandwidths and
/// normalization are recomputed on each fold's training part; `base` supplies
/// the remaining settings.
pub fn kfold_cv(
    x: &DenseMatrix,
    y: &[f64],
    order: usize,
    grid: &LambdaGrid,
    folds: usize,
    seed: u64,
    base: &SalsaConfig,
) -> Result<LambdaCv> {
    check_dim(x.rows(), y.len())?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let n = x.rows();
    let assignment = fold_assignment(n, folds, seed)?;
    let config = base.with_order(order).with_lambda(grid.values()[0]);
    config.validate()?;
    // fold-level parallelism; inner kernel work stays sequential
    let inner = SalsaConfig {
        exec: Parallelism::Sequential,
        ..config.clone()
    };
    let per_fold: Vec<Result<Vec<f64>>> = par::map_indices(folds, base.exec, |f| {
        let valid = &assignment[f];
        let mut in_valid = vec![false; n];
        valid.iter().for_each(|&i| in_valid[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !in_valid[i]).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xv = x.select_rows(valid);
        let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
        let prepared = PreparedFit::new(&xt, &yt, &inner)?;
        let zv = prepared.normalization.normalize_x(&xv)?;
        let cross =
            kernels::kernel_cross_matrix(&zv, &prepared.x_norm, &prepared.spec, Parallelism::Sequential)?;
        grid.values()
            .iter()
            .map(|&lambda| {
                let model = prepared.solve(lambda, &inner.jitter)?;
                let pred = prepared.normalization.denormalize_y(&cross.matvec(&model.alpha)?);
                mse(&pred, &yv)
            })
            .collect()
    });
    let mut fold_mse = Vec::with_capacity(folds);
    for r in per_fold {
        fold_mse.push(r?);
    }
    let k = grid.len();
    let mut mean_mse = vec![0.0; k];
    let mut std_err = vec![0.0; k];
    for j in 0..k {
        let vals: Vec<f64> = fold_mse.iter().map(|f| f[j]).collect();
        let m = vals.iter().sum::<f64>() / folds as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (folds - 1) as f64;
        mean_mse[j] = m;
        std_err[j] = (var / folds as f64).sqrt();
    }
    let best_index = argmin(&mean_mse);
    Ok(LambdaCv {
        order,
        lambdas: grid.values().to_vec(),
        mean_mse,
        std_err,
        best_index,
    })
}

/// Full CV record for a search over orders.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// One entry per evaluated order, in evaluation order.
    pub per_order: Vec<LambdaCv>,
    pub chosen_order: usize,
    pub chosen_lambda: f64,
    pub chosen_mse: f64,
    pub folds: usize,
    pub seed: u64,
}

impl CvReport {
    /// `(order, best CV error)` per evaluated order.
    pub fn trace(&self) -> Vec<(usize, f64)> {
        self.per_order.iter().map(|c| (c.order, c.best_mse())).collect()
    }

    pub fn evaluated_orders(&self) -> Vec<usize> {
        self.per_order.iter().map(|c| c.order).collect()
    }

    /// Rows `(d, λ, mean MSE, standard error)`.
    pub fn rows(&self) -> Vec<(usize, f64, f64, f64)> {
        self.per_order
            .iter()
            .flat_map(|c| {
                (0..c.lambdas.len()).map(move |j| (c.order, c.lambdas[j], c.mean_mse[j], c.std_err[j]))
            })
            .collect()
    }
}

/// Search settings for [`search_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSearch {
    pub grid: LambdaGrid,
    pub folds: usize,
    pub max_order: usize,
    /// Consecutive non-improving orders tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl OrderSearch {
    pub fn new(max_order: usize, folds: usize, seed: u64) -> Self {
        Self {
            grid: LambdaGrid::default(),
            folds,
            max_order,
            patience: 1,
            seed,
        }
    }
}

/// Evaluates orders `1, 2, …` with `evaluate`, stopping after `patience`
/// consecutive orders whose best error exceeds the running best, or at
/// `max_order`. The chosen pair minimizes the mean error over everything
/// evaluated (ties: smaller λ, then smaller `d`).
pub fn search_order_with<F>(
    max_order: usize,
    patience: usize,
    folds: usize,
    seed: u64,
    mut evaluate: F,
) -> Result<CvReport>
where
    F: FnMut(usize) -> Result<LambdaCv>,
{
    if max_order == 0 {
        return Err(Error::InvalidParameter("max order must be at least 1".into()));
    }
    let patience = patience.max(1);
    let mut per_order: Vec<LambdaCv> = Vec::new();
    let mut best_so_far = f64::INFINITY;
    let mut worse_run = 0;
    for d in 1..=max_order {
        let cv = evaluate(d)?;
        let e = cv.best_mse();
        per_order.push(cv);
        if e > best_so_far {
            worse_run += 1;
            if worse_run >= patience {
                break;
            }
        } else {
            worse_run = 0;
            best_so_far = e;
        }
    }
    let mut chosen: Option<(usize, f64, f64)> = None;
    for cv in &per_order {
        for (j, &m) in cv.mean_mse.iter().enumerate() {
            let cand = (cv.order, cv.lambdas[j], m);
            chosen = match chosen {
                None => Some(cand),
                Some(c) => {
                    let better = m < c.2
                        || (m == c.2 && (cand.1 < c.1 || (cand.1 == c.1 && cand.0 < c.0)));
                    Some(if better { cand } else { c })
                }
            };
        }
    }
    let (chosen_order, chosen_lambda, chosen_mse) = chosen.expect("at least one order evaluated");
    Ok(CvReport {
        per_order,
        chosen_order,
        chosen_lambda,
        chosen_mse,
        folds,
        seed,
    })
}

/// CV search over the additive order using [`kfold_cv`] at each order.
pub fn search_order(
    x: &DenseMatrix,
    y: &[f64],
    search: &OrderSearch,
    base: &SalsaConfig,
) -> Result<CvReport> {
    if search.max_order > x.cols() {
        return Err(Error::OrderExceedsDimension {
            order: search.max_order,
            dim: x.cols(),
        });
    }
    search_order_with(search.max_order, search.patience, search.folds, search.seed, |d| {
        kfold_cv(x, y, d, &search.grid, search.folds, search.seed, base)
    })
}

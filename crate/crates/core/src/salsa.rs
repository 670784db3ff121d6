//! The additive kernel ridge regression estimator.
//!
//! Inputs and targets are standardized internally, bandwidths follow
//! `h_i = c·σ_i·n^{-1/5}` on the standardized features, and the dual weights
//! solve `(K + λ n I) α = y` where `K` is the ESP kernel matrix. Predictions
//! are `f̂(x) = Σ_i α_i k_d(x, X_i)`, mapped back to target units.

use crate::data::{column_stats, degenerate_columns};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{self, EspKernelSpec, KernelVariant};
use crate::linalg::{self, norm2, CholeskyFactor, DenseMatrix, JitterPolicy};
use crate::par::Parallelism;

pub use crate::data::NormalizationStats;

/// Default bandwidth multiplier `c`.
pub const DEFAULT_BANDWIDTH_MULTIPLIER: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SalsaConfig {
    /// Additive order `d`.
    pub order: usize,
    /// Ridge coefficient `λ`; the solve uses `K + λ n I`.
    pub lambda: f64,
    /// Bandwidth multiplier `c`.
    pub bandwidth_multiplier: f64,
    pub variant: KernelVariant,
    pub jitter: JitterPolicy,
    pub exec: Parallelism,
}

impl SalsaConfig {
    pub fn new(order: usize, lambda: f64) -> Self {
        Self {
            order,
            lambda,
            bandwidth_multiplier: DEFAULT_BANDWIDTH_MULTIPLIER,
            variant: KernelVariant::ExactOrder,
            jitter: JitterPolicy::default(),
            exec: Parallelism::default(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_order(&self, order: usize) -> Self {
        Self {
            order,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("order must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::LambdaNonPositive(self.lambda));
        }
        if !(self.bandwidth_multiplier > 0.0) || !self.bandwidth_multiplier.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth multiplier must be positive, got {}",
                self.bandwidth_multiplier
            )));
        }
        Ok(())
    }
}

/// A fitted model; immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSalsa {
    pub alpha: Vec<f64>,
    /// Standardized training inputs.
    pub x_train: DenseMatrix,
    pub spec: EspKernelSpec,
    pub lambda: f64,
    pub bandwidth_multiplier: f64,
    pub normalization: NormalizationStats,
    pub jitter: f64,
    /// Training MSE in target units.
    pub train_mse: f64,
}

/// `h_i = c·σ_i·n^{-1/5}` with σ_i the population standard deviation of column `i`.
pub fn compute_bandwidths(x: &DenseMatrix, c: f64) -> Result<Vec<f64>> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let (means, sds) = column_stats(x);
    let bad = degenerate_columns(&means, &sds);
    if !bad.is_empty() {
        return Err(Error::DegenerateColumn(bad));
    }
    let factor = c * (n as f64).powf(-0.2);
    Ok(sds.iter().map(|s| factor * s).collect())
}

/// Standardized training data with its kernel matrix, reusable across λ.
#[derive(Debug, Clone)]
pub struct PreparedFit {
    pub x_norm: DenseMatrix,
    pub y_norm: Vec<f64>,
    pub normalization: NormalizationStats,
    pub spec: EspKernelSpec,
    pub kernel: DenseMatrix,
    pub bandwidth_multiplier: f64,
}

impl PreparedFit {
    pub fn new(x: &DenseMatrix, y: &[f64], config: &SalsaConfig) -> Result<Self> {
        config.validate()?;
        check_dim(x.rows(), y.len())?;
        if x.rows() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: x.rows(),
            });
        }
        if config.order > x.cols() {
            return Err(Error::OrderExceedsDimension {
                order: config.order,
                dim: x.cols(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        let normalization = NormalizationStats::from_data(x, y)?;
        let x_norm = normalization.normalize_x(x)?;
        let y_norm = normalization.normalize_y(y);
        let bandwidths = compute_bandwidths(&x_norm, config.bandwidth_multiplier)?;
        let spec = EspKernelSpec::new(config.order, bandwidths, 1.0, config.variant)?;
        let kernel = kernels::kernel_matrix(&x_norm, &spec, config.exec)?;
        Ok(Self {
            x_norm,
            y_norm,
            normalization,
            spec,
            kernel,
            bandwidth_multiplier: config.bandwidth_multiplier,
        })
    }

    pub fn n(&self) -> usize {
        self.x_norm.rows()
    }

    /// Solves the ridge system for one `λ`.
    pub fn solve(&self, lambda: f64, jitter: &JitterPolicy) -> Result<FittedSalsa> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::LambdaNonPositive(lambda));
        }
        let n = self.n();
        let factor: CholeskyFactor =
            linalg::cholesky_factor_shifted(&self.kernel, lambda * n as f64, jitter)?;
        let alpha = factor.solve_vec(&self.y_norm)?;
        let fitted_norm = self.kernel.matvec(&alpha)?;
        let fitted = self.normalization.denormalize_y(&fitted_norm);
        let truth = self.normalization.denormalize_y(&self.y_norm);
        let train_mse = mse(&fitted, &truth)?;
        Ok(FittedSalsa {
            alpha,
            x_train: self.x_norm.clone(),
            spec: self.spec.clone(),
            lambda,
            bandwidth_multiplier: self.bandwidth_multiplier,
            normalization: self.normalization.clone(),
            jitter: factor.jitter(),
            train_mse,
        })
    }
}

/// Fits the estimator in closed form.
pub fn fit(x: &DenseMatrix, y: &[f64], config: &SalsaConfig) -> Result<FittedSalsa> {
    PreparedFit::new(x, y, config)?.solve(config.lambda, &config.jitter)
}

impl FittedSalsa {
    pub fn n_train(&self) -> usize {
        self.x_train.rows()
    }

    pub fn dim(&self) -> usize {
        self.x_train.cols()
    }

    pub fn order(&self) -> usize {
        self.spec.order()
    }

    /// Predictions in standardized target units, without the mean offset.
    pub fn predict_normalized(&self, x_new: &DenseMatrix, exec: Parallelism) -> Result<Vec<f64>> {
        check_dim(self.dim(), x_new.cols())?;
        let z = self.normalization.normalize_x(x_new)?;
        let k = kernels::kernel_cross_matrix(&z, &self.x_train, &self.spec, exec)?;
        k.matvec(&self.alpha)
    }

    /// Predictions in target units.
    pub fn predict(&self, x_new: &DenseMatrix) -> Result<Vec<f64>> {
        self.predict_with(x_new, Parallelism::default())
    }

    pub fn predict_with(&self, x_new: &DenseMatrix, exec: Parallelism) -> Result<Vec<f64>> {
        let f = self.predict_normalized(x_new, exec)?;
        Ok(self.normalization.denormalize_y(&f))
    }

    /// Component `f̂_S(x) = Σ_i α_i σ Π_{k∈S} s_k(x, X_i)` in standardized
    /// target units.
    pub fn evaluate_component(&self, subset: &[usize], x_new: &DenseMatrix) -> Result<Vec<f64>> {
        kernels::validate_subset(subset, &self.spec)?;
        check_dim(self.dim(), x_new.cols())?;
        let z = self.normalization.normalize_x(x_new)?;
        let h = self.spec.bandwidths();
        let scale = self.spec.scale();
        let out = (0..z.rows())
            .map(|a| {
                let xa = z.row(a);
                let mut acc = 0.0;
                for (i, &ai) in self.alpha.iter().enumerate() {
                    let xi = self.x_train.row(i);
                    let mut q = 0.0;
                    for &k in subset {
                        let r = (xa[k] - xi[k]) / h[k];
                        q += r * r;
                    }
                    acc += ai * (-0.5 * q).exp();
                }
                scale * acc
            })
            .collect();
        Ok(out)
    }

    /// `‖(K + λnI)α − y_norm‖₂` with `K` rebuilt from the stored inputs, and
    /// `‖y_norm‖₂` where `y_norm` is recovered from the training fit.
    pub fn residual_norm(&self, y_raw: &[f64]) -> Result<(f64, f64)> {
        let k = kernels::kernel_matrix(&self.x_train, &self.spec, Parallelism::default())?;
        let y_norm = self.normalization.normalize_y(y_raw);
        check_dim(self.n_train(), y_norm.len())?;
        let shift = self.lambda * self.n_train() as f64;
        let ka = k.matvec(&self.alpha)?;
        let res: Vec<f64> = ka
            .iter()
            .zip(&self.alpha)
            .zip(&y_norm)
            .map(|((kv, a), y)| kv + shift * a - y)
            .collect();
        Ok((norm2(&res), norm2(&y_norm)))
    }
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_dim(truth.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::Empty("mse inputs"));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

//! Effective data dimensionality and risk-rate diagnostics.
//!
//! For a kernel with eigenvalues `μ_ℓ`, the effective dimensionality is
//! `γ(λ) = Σ_ℓ 1/(1 + λ/μ_ℓ)`; with `M_d = C(D, d)` additive components the
//! variance term scales with `γ_{k,d} = M_d·γ`. Two parametric eigendecays
//! are supported:
//!
//! * polynomial `μ_ℓ = C·ℓ^{−2s/d}`. The summand is decreasing in ℓ, so the
//!   tail after a truncation `T` is at most
//!   `∫_T^∞ C/(λ u^q) du = C·T^{1−q} / (λ (q − 1))` with `q = 2s/d > 1`;
//! * Gaussian-type `μ_ℓ = π̃^d·exp(−α ℓ²)`. Writing `ℓ = T + k` and using
//!   `(T + k)² ≥ T² + (2T + 1)k` gives the geometric majorant
//!   `(π̃^d/λ)·e^{−αT²}·r/(1 − r)` with `r = e^{−α(2T+1)}`.
//!
//! The rate schedules are `λ = n^{−2s/(2s+d)}` (polynomial), under which
//! `γ/n^{d/(2s+d)}` stays bounded, and `λ = 1/n` (Gaussian-type), under which
//! `γ/π̃^d` grows only like `√log n`.

use crate::error::{Error, Result};
use crate::linalg::{eigen_sym, DenseMatrix};

/// Hard cap on the truncation level.
pub const MAX_TRUNCATION: usize = 10_000_000;
/// Target ratio of tail bound to partial sum.
pub const TAIL_RELATIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum EigendecayModel {
    /// `μ_ℓ = scale·ℓ^{−2s/d}`.
    Polynomial { smoothness: f64, order: usize, scale: f64 },
    /// `μ_ℓ = π̃^d·exp(−α ℓ²)`.
    GaussianType { pi_tilde: f64, alpha: f64, order: usize },
    /// Explicit finite spectrum (zero beyond its length).
    Finite(Vec<f64>),
}

impl EigendecayModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            EigendecayModel::Polynomial {
                smoothness,
                order,
                scale,
            } => {
                if !(*smoothness > 0.0) || *order == 0 || !(*scale > 0.0) {
                    return Err(Error::InvalidParameter(
                        "polynomial decay needs s > 0, d >= 1, C > 0".into(),
                    ));
                }
            }
            EigendecayModel::GaussianType {
                pi_tilde,
                alpha,
                order,
            } => {
                if !(*pi_tilde > 0.0) || !(*alpha > 0.0) || *order == 0 {
                    return Err(Error::InvalidParameter(
                        "gaussian-type decay needs pi_tilde > 0, alpha > 0, d >= 1".into(),
                    ));
                }
            }
            EigendecayModel::Finite(v) => {
                if v.iter().any(|m| !(*m >= 0.0)) {
                    return Err(Error::InvalidParameter("eigenvalues must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// `μ_ℓ` for `ℓ ≥ 1`.
    pub fn eigenvalue(&self, l: usize) -> f64 {
        match self {
            EigendecayModel::Polynomial {
                smoothness,
                order,
                scale,
            } => scale * (l as f64).powf(-2.0 * smoothness / *order as f64),
            EigendecayModel::GaussianType {
                pi_tilde,
                alpha,
                order,
            } => pi_tilde.powi(*order as i32) * (-alpha * (l as f64).powi(2)).exp(),
            EigendecayModel::Finite(v) => v.get(l - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            EigendecayModel::Polynomial { order, .. } | EigendecayModel::GaussianType { order, .. } => *order,
            EigendecayModel::Finite(_) => 1,
        }
    }

    /// Upper bound on `Σ_{ℓ>t} 1/(1 + λ/μ_ℓ)`.
    fn tail_bound(&self, t: usize, lambda: f64) -> Result<f64> {
        match self {
            EigendecayModel::Polynomial {
                smoothness,
                order,
                scale,
            } => {
                let q = 2.0 * smoothness / *order as f64;
                if q <= 1.0 {
                    return Err(Error::TailNotConvergent(format!(
                        "2s/d = {q} must exceed 1 for a finite effective dimension"
                    )));
                }
                Ok(scale * (t as f64).powf(1.0 - q) / (lambda * (q - 1.0)))
            }
            EigendecayModel::GaussianType {
                pi_tilde,
                alpha,
                order,
            } => {
                let tf = t as f64;
                let log_r = -alpha * (2.0 * tf + 1.0);
                let log_front = *order as f64 * pi_tilde.ln() - lambda.ln() - alpha * tf * tf;
                let r = log_r.exp();
                Ok((log_front + log_r).exp() / (1.0 - r))
            }
            EigendecayModel::Finite(v) => Ok(if t >= v.len() {
                0.0
            } else {
                v[t..].iter().map(|m| m / lambda).sum()
            }),
        }
    }
}

/// `γ(λ)` with the truncation it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDimReport {
    pub lambda: f64,
    /// Best estimate: partial sum plus half the tail bound.
    pub gamma_single: f64,
    /// `M_d·γ` (equal to `gamma_single` when no component count was given).
    pub gamma_sum: f64,
    pub components: u64,
    pub truncation: usize,
    pub partial_sum: f64,
    pub tail_bound: f64,
}

impl EffectiveDimReport {
    pub fn lower(&self) -> f64 {
        self.partial_sum
    }

    pub fn upper(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

#[inline]
fn term(mu: f64, lambda: f64) -> f64 {
    if mu <= 0.0 {
        0.0
    } else {
        mu / (mu + lambda)
    }
}

/// Effective dimensionality of a single component.
pub fn gamma_single(model: &EigendecayModel, lambda: f64) -> Result<EffectiveDimReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::LambdaNonPositive(lambda));
    }
    model.validate()?;
    if let EigendecayModel::Finite(v) = model {
        let s: f64 = v.iter().map(|&m| term(m, lambda)).sum();
        return Ok(EffectiveDimReport {
            lambda,
            gamma_single: s,
            gamma_sum: s,
            components: 1,
            truncation: v.len(),
            partial_sum: s,
            tail_bound: 0.0,
        });
    }
    // validates convergence before the long loop
    model.tail_bound(1, lambda)?;
    // Neumaier-compensated partial sum with geometric checkpoints
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut l = 0usize;
    let mut checkpoint = 64usize;
    loop {
        while l < checkpoint {
            l += 1;
            let v = term(model.eigenvalue(l), lambda);
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        let partial = sum + comp;
        let tail = model.tail_bound(l, lambda)?;
        if tail <= TAIL_RELATIVE_TOL * partial || l >= MAX_TRUNCATION {
            let gamma = partial + 0.5 * tail;
            return Ok(EffectiveDimReport {
                lambda,
                gamma_single: gamma,
                gamma_sum: gamma,
                components: 1,
                truncation: l,
                partial_sum: partial,
                tail_bound: tail,
            });
        }
        checkpoint = (checkpoint * 2).min(MAX_TRUNCATION);
    }
}

/// `M_d·γ(λ)` for `M_d = C(dim, d)` components.
pub fn gamma_sum(model: &EigendecayModel, lambda: f64, dim: usize) -> Result<EffectiveDimReport> {
    let mut r = gamma_single(model, lambda)?;
    let m = component_count(dim, model.order())?;
    r.components = m;
    r.gamma_sum = m as f64 * r.gamma_single;
    Ok(r)
}

/// `C(D, d)` with overflow detection above `2⁶³ − 1`.
pub fn component_count(dim: usize, order: usize) -> Result<u64> {
    if order > dim {
        return Err(Error::OrderExceedsDimension { order, dim });
    }
    let k = order.min(dim - order) as u128;
    let n = dim as u128;
    let mut r: u128 = 1;
    for i in 0..k {
        // r·(n−i) is divisible by (i+1) at every step
        r = r
            .checked_mul(n - i)
            .ok_or(Error::Overflow("component count"))?
            / (i + 1);
        if r > i64::MAX as u128 {
            return Err(Error::Overflow("component count"));
        }
    }
    Ok(r as u64)
}

/// Rate-optimal ridge coefficient for `n` samples.
pub fn rate_lambda(model: &EigendecayModel, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    model.validate()?;
    let nf = n as f64;
    Ok(match model {
        EigendecayModel::Polynomial {
            smoothness, order, ..
        } => {
            let two_s = 2.0 * smoothness;
            nf.powf(-two_s / (two_s + *order as f64))
        }
        EigendecayModel::GaussianType { .. } | EigendecayModel::Finite(_) => 1.0 / nf,
    })
}

/// Normalized effective dimensionality along an `n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBand {
    pub ns: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RateBand {
    /// `max(ratio) / min(ratio)`.
    pub fn band_factor(&self) -> f64 {
        let max = self.ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = self.ratios.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

/// `γ(rate_lambda(n))` divided by `n^{d/(2s+d)}` (polynomial) or `π̃^d`
/// (Gaussian-type) at every `n` in the grid.
pub fn rate_band_check(model: &EigendecayModel, n_grid: &[usize]) -> Result<RateBand> {
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n grid must be strictly increasing".into()));
    }
    let mut band = RateBand {
        ns: n_grid.to_vec(),
        lambdas: vec![],
        gammas: vec![],
        ratios: vec![],
    };
    for &n in n_grid {
        let lambda = rate_lambda(model, n)?;
        let g = gamma_single(model, lambda)?.gamma_single;
        let norm = match model {
            EigendecayModel::Polynomial {
                smoothness, order, ..
            } => {
                let d = *order as f64;
                (n as f64).powf(d / (2.0 * smoothness + d))
            }
            EigendecayModel::GaussianType {
                pi_tilde, order, ..
            } => pi_tilde.powi(*order as i32),
            EigendecayModel::Finite(_) => 1.0,
        };
        band.lambdas.push(lambda);
        band.gammas.push(g);
        band.ratios.push(g / norm);
    }
    Ok(band)
}

/// Dominant terms of the excess-risk bound: `M_d·(20 λ ‖f‖² + 12 σ² γ / n)`.
pub fn dominant_risk_bound(
    lambda: f64,
    components: f64,
    fnorm_sq: f64,
    sigma_sq: f64,
    gamma_sum: f64,
    n: usize,
) -> Result<f64> {
    if [lambda, components, fnorm_sq, sigma_sq, gamma_sum]
        .iter()
        .any(|v| !(*v >= 0.0))
        || n == 0
    {
        return Err(Error::InvalidParameter(
            "bound inputs must be nonnegative and n >= 1".into(),
        ));
    }
    Ok(components * (20.0 * lambda * fnorm_sq + 12.0 * sigma_sq * gamma_sum / n as f64))
}

/// `Σ_k 1/(1 + λ/μ̂_k)` over the eigenvalues `μ̂_k = eig_k(K)/n`, clipped at 0.
pub fn empirical_effective_dim(k: &DenseMatrix, lambda: f64, n: usize) -> Result<f64> {
    if !(lambda >= 0.0) || n == 0 {
        return Err(Error::InvalidParameter("need lambda >= 0 and n >= 1".into()));
    }
    let eig = eigen_sym(k)?;
    Ok(eig
        .values
        .iter()
        .map(|&v| {
            let mu = (v / n as f64).max(0.0);
            if mu == 0.0 || lambda.is_infinite() {
                0.0
            } else {
                mu / (mu + lambda)
            }
        })
        .sum())
}

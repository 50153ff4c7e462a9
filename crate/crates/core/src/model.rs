//! The CP factor model `X_t = Σ_i w_i f_it a_i1 ⊗ .. ⊗ a_iK + E_t`, signal
//! reconstruction, and coherence diagnostics of a loading set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_spectral_norm;
use crate::moments::TensorTimeSeries;
use crate::tensor::{axpy, norm2, outer, DenseTensor, Matrix};

const UNIT_TOL: f64 = 1e-8;

/// Weights, per-mode loading matrices (`d_k x r`, unit columns) and an
/// optional `r x T` factor series. Factor `i` is column `i` of every loading
/// matrix and row `i` of the factor series.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactorModel {
    weights: Vec<f64>,
    loadings: Vec<Matrix>,
    factors: Option<Vec<Vec<f64>>>,
}

impl CpFactorModel {
    pub fn new(
        weights: Vec<f64>,
        loadings: Vec<Matrix>,
        factors: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let r = weights.len();
        if loadings.is_empty() {
            return Err(Error::invalid("model needs at least one mode"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        for (k, a) in loadings.iter().enumerate() {
            if a.cols() != r {
                return Err(Error::shape(format!(
                    "mode {k} has {} loading columns for {r} weights",
                    a.cols()
                )));
            }
            if let Some(i) = a.columns().position(|c| (norm2(c) - 1.0).abs() > UNIT_TOL) {
                return Err(Error::invalid(format!(
                    "loading column {i} of mode {k} is not unit norm"
                )));
            }
        }
        if let Some(f) = &factors {
            if f.len() != r {
                return Err(Error::shape(format!("{} factor rows for r = {r}", f.len())));
            }
            let t = f.first().map_or(0, Vec::len);
            if f.iter().any(|row| row.len() != t) {
                return Err(Error::shape("factor rows of unequal length"));
            }
        }
        Ok(CpFactorModel {
            weights,
            loadings,
            factors,
        })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.loadings.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.loadings.iter().map(Matrix::rows).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn loadings(&self) -> &[Matrix] {
        &self.loadings
    }

    pub fn loading(&self, i: usize, k: usize) -> &[f64] {
        self.loadings[k].col(i)
    }

    pub fn factors(&self) -> Option<&[Vec<f64>]> {
        self.factors.as_deref()
    }

    pub fn with_factors(mut self, factors: Vec<Vec<f64>>) -> Result<Self> {
        self.factors = None;
        CpFactorModel::new(self.weights, self.loadings, Some(factors))
    }

    /// `a_i1 ⊗ .. ⊗ a_iK`.
    pub fn component(&self, i: usize) -> DenseTensor {
        let cols: Vec<&[f64]> = self.loadings.iter().map(|a| a.col(i)).collect();
        outer(&cols).expect("at least one mode")
    }

    /// Signal series `Σ_i w_i f_it ⊗_k a_ik` for every t.
    pub fn signal_series(&self) -> Result<TensorTimeSeries> {
        let f = self.factors.as_ref().ok_or(Error::MissingFactors)?;
        let t_len = f.first().map_or(0, Vec::len);
        let dims = self.dims();
        let mut out = TensorTimeSeries::zeros(&dims, t_len);
        for (i, row) in f.iter().enumerate() {
            let comp = self.component(i);
            let w = self.weights[i];
            for (t, &fit) in row.iter().enumerate() {
                axpy(w * fit, comp.data(), out.slice_mut(t));
            }
        }
        Ok(out)
    }
}

/// Signal tensor at time `t` (0-based).
pub fn reconstruct(model: &CpFactorModel, t: usize) -> Result<DenseTensor> {
    let f = model.factors.as_ref().ok_or(Error::MissingFactors)?;
    let t_len = f.first().map_or(0, Vec::len);
    if t >= t_len {
        return Err(Error::invalid(format!("time {t} outside 0..{t_len}")));
    }
    let dims = model.dims();
    let mut out = DenseTensor::zeros(&dims);
    for (i, row) in f.iter().enumerate() {
        let comp = model.component(i);
        axpy(model.weights[i] * row[t], comp.data(), out.data_mut());
    }
    Ok(out)
}

/// `Σ_i w_i² / (σ² d)`, assuming unit-variance factors.
pub fn snr(model: &CpFactorModel, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("noise scale must be positive"));
    }
    let d: usize = model.dims().iter().product();
    let signal: f64 = model.weights.iter().map(|w| w * w).sum();
    Ok(signal / (sigma * sigma * d as f64))
}

/// Non-orthogonality diagnostics of a loading set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Per mode: max off-diagonal |σ_ij,k|.
    pub theta_k: Vec<f64>,
    /// Per mode: ‖A_kᵀA_k − I‖_S.
    pub delta_k: Vec<f64>,
    /// `eta[k][j] = (Σ_{i≠j} σ_ij,k²)^{1/2}`.
    pub eta: Vec<Vec<f64>>,
    /// Max off-diagonal correlation of the vectorized loadings.
    pub theta: f64,
    /// Spectral deviation of the vectorized loading Gram from identity.
    pub delta: f64,
    /// Leave-two-out mutual coherence.
    pub mu_star: f64,
    pub r: usize,
    pub order: usize,
}

/// Coherence measures for `K` loading matrices with unit columns. With fewer
/// than two factors every coherence is 0 and `mu_star` is 1.
pub fn coherence_report(loadings: &[Matrix]) -> Result<CoherenceReport> {
    let order = loadings.len();
    if order == 0 {
        return Err(Error::invalid("no loading matrices"));
    }
    let r = loadings[0].cols();
    if loadings.iter().any(|a| a.cols() != r) {
        return Err(Error::shape("loading matrices differ in column count"));
    }
    if r < 2 {
        return Ok(CoherenceReport {
            theta_k: vec![0.0; order],
            delta_k: vec![0.0; order],
            eta: vec![vec![0.0; r]; order],
            theta: 0.0,
            delta: 0.0,
            mu_star: 1.0,
            r,
            order,
        });
    }
    let grams = loadings
        .iter()
        .map(|a| a.t_matmul(a))
        .collect::<Result<Vec<_>>>()?;
    let max_off = |g: &Matrix| {
        let mut m = 0.0f64;
        for i in 0..r {
            for j in i + 1..r {
                m = m.max(g[(i, j)].abs());
            }
        }
        m
    };
    let dev = |g: &Matrix| -> Result<f64> {
        let mut c = g.clone();
        for i in 0..r {
            c[(i, i)] -= 1.0;
        }
        sym_spectral_norm(&c)
    };
    let theta_k: Vec<f64> = grams.iter().map(max_off).collect();
    let delta_k = grams.iter().map(dev).collect::<Result<Vec<_>>>()?;
    let eta: Vec<Vec<f64>> = grams
        .iter()
        .map(|g| {
            (0..r)
                .map(|j| {
                    (0..r)
                        .filter(|&i| i != j)
                        .map(|i| g[(i, j)].powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let global = Matrix::from_fn(r, r, |i, j| grams.iter().map(|g| g[(i, j)]).product());
    let theta = max_off(&global);
    let delta = dev(&global)?;
    let mu_star = mutual_coherence(&grams, &eta, r);
    Ok(CoherenceReport {
        theta_k,
        delta_k,
        eta,
        theta,
        delta,
        mu_star,
        r,
        order,
    })
}

/// `max_j min_{k1<k2} max_{i≠j} ∏_{k∉{k1,k2}} √r |σ_ij,k| / η_jk`. A ratio
/// with `η_jk = 0` (column j orthogonal to all others in mode k) counts as 1.
fn mutual_coherence(grams: &[Matrix], eta: &[Vec<f64>], r: usize) -> f64 {
    let order = grams.len();
    if order <= 2 {
        return 1.0;
    }
    let sr = (r as f64).sqrt();
    let ratio = |i: usize, j: usize, k: usize| {
        if eta[k][j] == 0.0 {
            1.0
        } else {
            sr * grams[k][(i, j)].abs() / eta[k][j]
        }
    };
    (0..r)
        .map(|j| {
            let mut best = f64::INFINITY;
            for k1 in 0..order {
                for k2 in k1 + 1..order {
                    let worst = (0..r)
                        .filter(|&i| i != j)
                        .map(|i| {
                            (0..order)
                                .filter(|&k| k != k1 && k != k2)
                                .map(|k| ratio(i, j, k))
                                .product::<f64>()
                        })
                        .fold(0.0f64, f64::max);
                    best = best.min(worst);
                }
            }
            best
        })
        .fold(0.0f64, f64::max)
}

/// One inequality from the coherence bounds, with both sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the four coherence inequalities:
/// `δ ≤ min_k δ_k`, `δ ≤ (r−1)ϑ`, `ϑ ≤ ∏_k ϑ_k`, `δ ≤ μ* r^{1−K/2} ∏_k δ_k`.
pub fn check_prop1(rep: &CoherenceReport) -> Vec<BoundCheck> {
    let check = |name, lhs: f64, rhs: f64| BoundCheck {
        name,
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-10) + 1e-12,
    };
    let r = rep.r as f64;
    let k = rep.order as f64;
    let min_delta = rep.delta_k.iter().copied().fold(f64::INFINITY, f64::min);
    let prod_theta: f64 = rep.theta_k.iter().product();
    let prod_delta: f64 = rep.delta_k.iter().product();
    let r_factor = if rep.r == 0 { 0.0 } else { r.powf(1.0 - k / 2.0) };
    vec![
        check("delta_le_min_delta_k", rep.delta, min_delta),
        check(
            "delta_le_r_minus_1_theta",
            rep.delta,
            (r - 1.0).max(0.0) * rep.theta,
        ),
        check("theta_le_prod_theta_k", rep.theta, prod_theta),
        check(
            "delta_le_mu_star_prod_delta_k",
            rep.delta,
            rep.mu_star * r_factor * prod_delta,
        ),
    ]
}

/// Signal strengths, their minimum gap, and the signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub lambda: Vec<f64>,
    pub lambda_star: f64,
    pub snr: f64,
}

/// `λ_i = w_i² φ_i^h / (1 − φ_i²)` for AR(1) factors with unit innovations.
pub fn ar1_lambda(weights: &[f64], phis: &[f64], h: usize) -> Result<Vec<f64>> {
    if weights.len() != phis.len() {
        return Err(Error::shape("weights and AR coefficients differ in length"));
    }
    Ok(weights
        .iter()
        .zip(phis)
        .map(|(w, p)| w * w * p.powi(h as i32) / (1.0 - p * p))
        .collect())
}

/// `λ_i = w_i² (T−h)⁻¹ Σ_t f_{i,t−h} f_{i,t}` from the model's factor series.
pub fn sample_lambda(model: &CpFactorModel, h: usize) -> Result<Vec<f64>> {
    let f = model.factors().ok_or(Error::MissingFactors)?;
    f.iter()
        .zip(model.weights())
        .map(|(row, w)| {
            let t = row.len();
            if h == 0 || h >= t {
                return Err(Error::invalid(format!("lag {h} for {t} time points")));
            }
            let s: f64 = (h..t).map(|s| row[s - h] * row[s]).sum();
            Ok(w * w * s / (t - h) as f64)
        })
        .collect()
}

/// `min_i min(λ_{i−1} − λ_i, λ_i − λ_{i+1})` with `λ_0 = ∞`, `λ_{r+1} = 0`.
pub fn eigengap(lambda: &[f64]) -> f64 {
    let r = lambda.len();
    (0..r)
        .map(|i| {
            let above = if i == 0 {
                f64::INFINITY
            } else {
                lambda[i - 1] - lambda[i]
            };
            let below = lambda[i] - if i + 1 < r { lambda[i + 1] } else { 0.0 };
            above.min(below)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn diagnostics(model: &CpFactorModel, lambda: Vec<f64>, sigma: f64) -> Result<ModelDiagnostics> {
    Ok(ModelDiagnostics {
        lambda_star: eigengap(&lambda),
        snr: snr(model, sigma)?,
        lambda,
    })
}

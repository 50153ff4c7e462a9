//! Loading, weight and factor estimators for the CP factor model.
//!
//! * [`cpca_init`]: composite PCA on the symmetrized lag-h square unfolding.
//! * [`iso_refine`]: iterative simultaneous orthogonalization; [`hope`] is
//!   cPCA followed by ISO and [`one_step_hope`] stops after one sweep.
//! * [`cals`] / [`coals`]: rank-one and orthogonalized alternating least
//!   squares on the order-2K moment, cPCA- or randomly-initialized.

mod als;
mod cpca;
mod iso;
mod oals;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floored_projection, unit_projector_distance, GRAM_FLOOR};
use crate::model::CpFactorModel;
use crate::moments::TensorTimeSeries;
use crate::tensor::{axpy, dot, norm2, outer, Matrix};

pub use als::{als_random, cals};
pub use cpca::{cpca_from_moment, cpca_init};
pub use iso::{
    hope, iso_refine, iso_refine_observed, one_step_hope, project_z, projection_leakage,
};
pub use oals::{coals, oals_random};

/// Estimation settings shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub r: usize,
    pub h: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub gram_floor: f64,
    /// Seed for the random-initialization baselines.
    pub seed: Option<u64>,
    /// Number of random initializations for ALS / OALS.
    pub restarts: usize,
}

impl FitConfig {
    pub fn new(r: usize) -> Self {
        FitConfig {
            r,
            h: 1,
            eps: 1e-6,
            max_iter: 30,
            gram_floor: GRAM_FLOOR,
            seed: None,
            restarts: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("r must be at least 1"));
        }
        if self.h == 0 {
            return Err(Error::invalid("lag h must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.gram_floor > 0.0 && self.gram_floor < 1.0) {
            return Err(Error::invalid("gram floor must lie in (0, 1)"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn check_series(&self, x: &TensorTimeSeries) -> Result<()> {
        self.validate()?;
        if self.h >= x.len() {
            return Err(Error::invalid(format!(
                "lag {} needs more than {} time points",
                self.h,
                x.len()
            )));
        }
        if self.r > x.slice_len() {
            return Err(Error::invalid(format!(
                "r = {} exceeds d = {}",
                self.r,
                x.slice_len()
            )));
        }
        Ok(())
    }
}

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cPCA")]
    Cpca,
    #[serde(rename = "1HOPE")]
    OneStepHope,
    #[serde(rename = "HOPE")]
    Hope,
    #[serde(rename = "cALS")]
    Cals,
    #[serde(rename = "cOALS")]
    Coals,
    #[serde(rename = "ALS")]
    Als,
    #[serde(rename = "OALS")]
    Oals,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cpca,
        Method::OneStepHope,
        Method::Hope,
        Method::Cals,
        Method::Coals,
        Method::Als,
        Method::Oals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cpca => "cPCA",
            Method::OneStepHope => "1HOPE",
            Method::Hope => "HOPE",
            Method::Cals => "cALS",
            Method::Coals => "cOALS",
            Method::Als => "ALS",
            Method::Oals => "OALS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Initial loadings (one `d_k x r` matrix per mode) with the spectrum that
/// produced them, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLoadings {
    pub loadings: Vec<Matrix>,
    pub lambda_hat: Vec<f64>,
}

impl InitialLoadings {
    pub fn new(loadings: Vec<Matrix>) -> Self {
        InitialLoadings {
            loadings,
            lambda_hat: Vec::new(),
        }
    }
}

/// Current loading estimates and their floored Gram-inverse projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    pub a_hat: Vec<Matrix>,
    pub b_hat: Vec<Matrix>,
    pub iteration: usize,
}

impl ProjectionState {
    pub fn new(a_hat: Vec<Matrix>, gram_floor: f64) -> Result<Self> {
        let b_hat = a_hat
            .iter()
            .map(|a| floored_projection(a, gram_floor))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProjectionState {
            a_hat,
            b_hat,
            iteration: 0,
        })
    }

    /// Replaces mode k's loadings and recomputes its projection.
    pub fn set_mode(&mut self, k: usize, a: Matrix, gram_floor: f64) -> Result<()> {
        self.b_hat[k] = floored_projection(&a, gram_floor)?;
        self.a_hat[k] = a;
        Ok(())
    }
}

/// Estimated model plus iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    /// One `d_k x r` matrix per mode, sign-normalized unit columns.
    pub loadings: Vec<Matrix>,
    pub weights: Vec<f64>,
    /// `r x T`; each row has unit Euclidean norm (or is zero when its weight
    /// is zero).
    pub factors: Vec<Vec<f64>>,
    pub lambda_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max projector change after each iteration.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn to_model(&self) -> Result<CpFactorModel> {
        CpFactorModel::new(
            self.weights.clone(),
            self.loadings.clone(),
            Some(self.factors.clone()),
        )
    }

    /// Fitted signal `X̂_t = Σ_i ŵ_i f̂_it ⊗_k â_ik` for every t.
    pub fn fitted_series(&self) -> Result<TensorTimeSeries> {
        self.to_model()?.signal_series()
    }
}

/// Projection scores `s_it = X_t ×_1 b_i1ᵀ .. ×_K b_iKᵀ` with
/// `B_k = floored_projection(A_k)`; returns `(weights, factors)` with
/// `ŵ_i = ‖s_i·‖` and `f̂_i· = s_i· / ŵ_i`.
pub(crate) fn output_block(
    x: &TensorTimeSeries,
    loadings: &[Matrix],
    gram_floor: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let b = loadings
        .iter()
        .map(|a| floored_projection(a, gram_floor))
        .collect::<Result<Vec<_>>>()?;
    let r = loadings[0].cols();
    let mut weights = Vec::with_capacity(r);
    let mut factors = Vec::with_capacity(r);
    for i in 0..r {
        let cols: Vec<&[f64]> = b.iter().map(|m| m.col(i)).collect();
        let bvec = outer(&cols)?;
        let scores: Vec<f64> = (0..x.len()).map(|t| dot(x.slice(t), bvec.data())).collect();
        let w = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
        let f = if w > 0.0 {
            scores.iter().map(|s| s / w).collect()
        } else {
            vec![0.0; scores.len()]
        };
        weights.push(w);
        factors.push(f);
    }
    Ok((weights, factors))
}

/// `X̂_t = Σ_i (X_t ×_k b_ikᵀ) ⊗_k a_ik`, the projection form of the fitted
/// signal.
pub fn projected_reconstruction(
    x: &TensorTimeSeries,
    loadings: &[Matrix],
    gram_floor: f64,
) -> Result<TensorTimeSeries> {
    let b = loadings
        .iter()
        .map(|a| floored_projection(a, gram_floor))
        .collect::<Result<Vec<_>>>()?;
    let r = loadings[0].cols();
    let mut out = TensorTimeSeries::zeros(x.dims(), x.len());
    for i in 0..r {
        let bcols: Vec<&[f64]> = b.iter().map(|m| m.col(i)).collect();
        let acols: Vec<&[f64]> = loadings.iter().map(|m| m.col(i)).collect();
        let bvec = outer(&bcols)?;
        let avec = outer(&acols)?;
        for t in 0..x.len() {
            let s = dot(x.slice(t), bvec.data());
            axpy(s, avec.data(), out.slice_mut(t));
        }
    }
    Ok(out)
}

/// Max projector distance over all (i, k) between two loading sets.
pub(crate) fn max_change(new: &[Matrix], old: &[Matrix]) -> f64 {
    new.iter()
        .zip(old)
        .flat_map(|(a, b)| a.columns().zip(b.columns()).map(|(x, y)| unit_projector_distance(x, y)))
        .fold(0.0, f64::max)
}

/// Contracts a vectorized tensor of shape `dims` on every mode except `k`,
/// with `vecs[l]` on mode `l` (`vecs[k]` is ignored).
pub(crate) fn contract_all_but(data: &[f64], dims: &[usize], k: usize, vecs: &[&[f64]]) -> Vec<f64> {
    let dk = dims[k];
    let left = kron_vec(&vecs[..k]);
    let right = kron_vec(&vecs[k + 1..]);
    let inner = left.len();
    let mut out = vec![0.0; dk];
    for (ri, &rv) in right.iter().enumerate() {
        if rv == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let seg = &data[inner * (i + dk * ri)..][..inner];
            *o += rv * dot(seg, &left);
        }
    }
    out
}

/// Vec-ordered Kronecker product of vectors given in mode order (first
/// vector fastest); the empty product is `[1]`.
pub(crate) fn kron_vec(vecs: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for v in vecs {
        let mut next = Vec::with_capacity(out.len() * v.len());
        for &x in v.iter() {
            next.extend(out.iter().map(|&y| y * x));
        }
        out = next;
    }
    out
}

pub(crate) fn degenerate_spectrum_warning(lambda: &[f64]) -> Option<String> {
    lambda
        .windows(2)
        .position(|w| (w[0] - w[1]).abs() <= 1e-10)
        .map(|i| format!("lambda_hat[{i}] and lambda_hat[{}] are not distinct", i + 1))
}

pub(crate) fn rank_warning(x: &TensorTimeSeries, r: usize) -> Option<String> {
    let dmin = x.dims().iter().copied().min().unwrap_or(0);
    (r > dmin).then(|| format!("r = {r} exceeds the smallest mode dimension {dmin}"))
}

pub(crate) fn check_init(x: &TensorTimeSeries, init: &InitialLoadings, r: usize) -> Result<()> {
    if init.loadings.len() != x.dims().len() {
        return Err(Error::shape(format!(
            "{} initial loading matrices for an order-{} series",
            init.loadings.len(),
            x.dims().len()
        )));
    }
    for (k, (a, &dk)) in init.loadings.iter().zip(x.dims()).enumerate() {
        if a.rows() != dk || a.cols() != r {
            return Err(Error::shape(format!(
                "initial loadings for mode {k} are {}x{}, expected {dk}x{r}",
                a.rows(),
                a.cols()
            )));
        }
    }
    Ok(())
}

/// Random start: iid standard normal entries, unit columns.
pub(crate) fn random_loadings<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], r: usize) -> Vec<Matrix> {
    dims.iter()
        .map(|&dk| {
            let mut a = Matrix::from_fn(dk, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            for j in 0..r {
                let n = norm2(a.col(j));
                a.col_mut(j).iter_mut().for_each(|x| *x /= n);
            }
            a
        })
        .collect()
}

/// Runs `method` end to end with default initialization.
pub fn fit(x: &TensorTimeSeries, method: Method, cfg: &FitConfig) -> Result<FitResult> {
    match method {
        Method::Cpca => {
            cfg.check_series(x)?;
            let init = cpca_init(x, cfg.r, cfg.h)?;
            let (weights, factors) = output_block(x, &init.loadings, cfg.gram_floor)?;
            let mut warnings = Vec::new();
            warnings.extend(degenerate_spectrum_warning(&init.lambda_hat));
            Ok(FitResult {
                method,
                loadings: init.loadings,
                weights,
                factors,
                lambda_hat: init.lambda_hat,
                iterations: 0,
                converged: true,
                trace: Vec::new(),
                warnings,
            })
        }
        Method::OneStepHope => one_step_hope(x, cfg),
        Method::Hope => hope(x, cfg),
        Method::Cals => {
            let init = cpca_init(x, cfg.r, cfg.h)?;
            cals(x, &init, cfg)
        }
        Method::Coals => {
            let init = cpca_init(x, cfg.r, cfg.h)?;
            coals(x, &init, cfg)
        }
        Method::Als => als_random(x, cfg),
        Method::Oals => oals_random(x, cfg),
    }
}

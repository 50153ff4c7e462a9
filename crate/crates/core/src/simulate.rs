//! Synthetic CP factor series: coherence-controlled loadings, AR(1) factors
//! and Gaussian noise with Kronecker-structured covariance.
//!
//! Randomness comes from a ChaCha8 generator seeded with `SimConfig::seed`;
//! loadings, factors and noise use separate streams of that generator, so
//! changing e.g. the noise level leaves the loadings untouched.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, sym_sqrt};
use crate::model::CpFactorModel;
use crate::moments::TensorTimeSeries;
use crate::tensor::{axpy, norm2, outer, Matrix};

pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_PSI: f64 = 0.1;

/// Generator stream for each kind of draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Loadings = 1,
    Factors = 2,
    Noise = 3,
}

/// The generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dims: Vec<usize>,
    pub r: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Common signal weight.
    pub w: f64,
    /// Target vectorized coherence δ.
    pub delta: f64,
    /// AR(1) coefficient per factor.
    pub phis: Vec<f64>,
    /// Off-diagonal noise correlation per mode.
    pub psi: Vec<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl SimConfig {
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::invalid("dims must be nonempty and positive"));
        }
        if self.r == 0 {
            return Err(Error::invalid("r must be at least 1"));
        }
        let dmin = *self.dims.iter().min().unwrap();
        if self.r > dmin {
            return Err(Error::invalid(format!(
                "r = {} exceeds the smallest dimension {dmin}",
                self.r
            )));
        }
        if self.t < 2 {
            return Err(Error::invalid("T must be at least 2"));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::invalid("w must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::invalid("delta must lie in [0, 1)"));
        }
        if self.phis.len() != self.r {
            return Err(Error::shape(format!(
                "{} AR coefficients for r = {}",
                self.phis.len(),
                self.r
            )));
        }
        if self.phis.iter().any(|p| !(p.abs() < 1.0)) {
            return Err(Error::invalid("AR coefficients must satisfy |phi| < 1"));
        }
        if self.psi.len() != self.dims.len() {
            return Err(Error::shape(format!(
                "{} noise correlations for {} modes",
                self.psi.len(),
                self.dims.len()
            )));
        }
        for (&psi, &d) in self.psi.iter().zip(&self.dims) {
            check_psi(psi, d)?;
        }
        Ok(())
    }
}

/// Partial override of a named configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub dims: Option<Vec<usize>>,
    pub r: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub w: Option<f64>,
    pub delta: Option<f64>,
    pub phis: Option<Vec<f64>>,
    pub psi: Option<f64>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
}

/// The simulation designs I-V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigName {
    I,
    II,
    III,
    IV,
    V,
}

impl FromStr for ConfigName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(ConfigName::I),
            "II" | "2" => Ok(ConfigName::II),
            "III" | "3" => Ok(ConfigName::III),
            "IV" | "4" => Ok(ConfigName::IV),
            "V" | "5" => Ok(ConfigName::V),
            _ => Err(Error::invalid(format!("unknown configuration '{s}'"))),
        }
    }
}

/// Default AR(1) coefficients for `r` factors.
pub fn default_phis(r: usize) -> Vec<f64> {
    match r {
        1 => vec![0.8],
        2 => vec![0.8, 0.6],
        3 => vec![0.8, 0.7, 0.6],
        _ => (0..r).map(|i| 0.8 - 0.4 * i as f64 / (r - 1) as f64).collect(),
    }
}

/// Parameters of a named design with `overrides` applied.
pub fn named_config(name: ConfigName, overrides: &SimOverrides) -> Result<SimConfig> {
    let (dims, r, t, w, delta) = match name {
        ConfigName::I => (vec![40, 40], 2, 400, 6.0, 0.2),
        ConfigName::II => (vec![40, 40], 2, 400, 6.0, 0.2),
        ConfigName::III => (vec![40, 40], 3, 400, 8.0, 0.2),
        ConfigName::IV => (vec![40, 40], 3, 400, 8.0, 0.1),
        ConfigName::V => (vec![20, 20, 20], 3, 400, 10.0, 0.2),
    };
    let dims = overrides.dims.clone().unwrap_or(dims);
    let r = overrides.r.unwrap_or(r);
    let psi = overrides.psi.unwrap_or(DEFAULT_PSI);
    let cfg = SimConfig {
        psi: vec![psi; dims.len()],
        dims,
        r,
        t: overrides.t.unwrap_or(t),
        w: overrides.w.unwrap_or(w),
        delta: overrides.delta.unwrap_or(delta),
        phis: overrides.phis.clone().unwrap_or_else(|| default_phis(r)),
        burn_in: overrides.burn_in.unwrap_or(DEFAULT_BURN_IN),
        seed: overrides.seed.unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_psi(psi: f64, d: usize) -> Result<()> {
    let lower = if d > 1 { -1.0 / (d - 1) as f64 } else { f64::NEG_INFINITY };
    let upper = if d > 1 { 1.0 } else { f64::INFINITY };
    if psi > lower && psi < upper {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "noise correlation {psi} is not positive definite for dimension {d}"
        )))
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Loadings with orthonormal Gaussian draws mixed towards the first column
/// so that pairs (1, i) have vectorized coherence `δ/(r−1)` exactly.
pub fn gen_loadings<R: Rng + ?Sized>(dims: &[usize], r: usize, delta: f64, rng: &mut R) -> Result<Vec<Matrix>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid("delta must lie in [0, 1)"));
    }
    if r == 0 {
        return Err(Error::invalid("r must be at least 1"));
    }
    let order = dims.len();
    dims.iter()
        .map(|&dk| {
            if r > dk {
                return Err(Error::invalid(format!("r = {r} exceeds dimension {dk}")));
            }
            let q = qr_orthonormalize(&gaussian_matrix(rng, dk, r))?;
            if delta == 0.0 || r == 1 {
                return Ok(q);
            }
            let vartheta = delta / (r - 1) as f64;
            let theta = (vartheta.powf(-2.0 / order as f64) - 1.0).sqrt();
            let first = q.col(0).to_vec();
            let mut cols = vec![first.clone()];
            for i in 1..r {
                let mut v = first.clone();
                axpy(theta, q.col(i), &mut v);
                let n = norm2(&v);
                v.iter_mut().for_each(|x| *x /= n);
                cols.push(v);
            }
            Matrix::from_columns(&cols)
        })
        .collect()
}

/// Independent stationary AR(1) chains with standard normal innovations;
/// `r x T`, unnormalized.
pub fn gen_ar1_factors<R: Rng + ?Sized>(phis: &[f64], t: usize, rng: &mut R, burn_in: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = phis.iter().find(|p| !(p.abs() < 1.0)) {
        return Err(Error::invalid(format!("AR coefficient {p} is not stationary")));
    }
    Ok(phis
        .iter()
        .map(|&phi| {
            let z: f64 = rng.sample(StandardNormal);
            let mut f = z / (1.0 - phi * phi).sqrt();
            for _ in 0..burn_in {
                f = phi * f + rng.sample::<f64, _>(StandardNormal);
            }
            (0..t)
                .map(|_| {
                    f = phi * f + rng.sample::<f64, _>(StandardNormal);
                    f
                })
                .collect()
        })
        .collect())
}

/// Multiplies every mode-k fiber of `data` (shape `dims`) by the symmetric
/// matrix `s`.
fn apply_mode(data: &mut [f64], dims: &[usize], k: usize, s: &Matrix) {
    let dk = dims[k];
    let inner: usize = dims[..k].iter().product();
    let outer_len: usize = dims[k + 1..].iter().product();
    let mut fiber = vec![0.0; dk];
    let mut out = vec![0.0; dk];
    for o in 0..outer_len {
        for l in 0..inner {
            let base = l + inner * dk * o;
            for (i, f) in fiber.iter_mut().enumerate() {
                *f = data[base + inner * i];
            }
            out.iter_mut().for_each(|x| *x = 0.0);
            for (j, &fj) in fiber.iter().enumerate() {
                axpy(fj, s.col(j), &mut out);
            }
            for (i, &v) in out.iter().enumerate() {
                data[base + inner * i] = v;
            }
        }
    }
}

/// `Ψ` with ones on the diagonal and `psi` elsewhere.
pub fn equicorrelation(d: usize, psi: f64) -> Matrix {
    Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { psi })
}

/// Noise `E_t = Z_t ×_1 Ψ_1^{1/2} ×_2 … ×_K Ψ_K^{1/2}` with iid standard
/// normal `Z_t`, so `cov(vec E_t) = Ψ_K ⊗ … ⊗ Ψ_1`.
pub fn gen_noise<R: Rng + ?Sized>(dims: &[usize], psi: &[f64], t: usize, rng: &mut R) -> Result<TensorTimeSeries> {
    if psi.len() != dims.len() {
        return Err(Error::shape(format!(
            "{} noise correlations for {} modes",
            psi.len(),
            dims.len()
        )));
    }
    let roots = dims
        .iter()
        .zip(psi)
        .map(|(&d, &p)| {
            check_psi(p, d)?;
            if p == 0.0 {
                Ok(None)
            } else {
                sym_sqrt(&equicorrelation(d, p)).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut e = TensorTimeSeries::zeros(dims, t);
    for x in e.data_mut() {
        *x = rng.sample(StandardNormal);
    }
    for s in 0..t {
        let slice = e.slice_mut(s);
        for (k, root) in roots.iter().enumerate() {
            if let Some(root) = root {
                apply_mode(slice, dims, k, root);
            }
        }
    }
    Ok(e)
}

/// Simulated series and its ground-truth model.
pub fn gen_series(cfg: &SimConfig) -> Result<(TensorTimeSeries, CpFactorModel)> {
    cfg.validate()?;
    let loadings = gen_loadings(&cfg.dims, cfg.r, cfg.delta, &mut stream_rng(cfg.seed, Stream::Loadings))?;
    let factors = gen_ar1_factors(&cfg.phis, cfg.t, &mut stream_rng(cfg.seed, Stream::Factors), cfg.burn_in)?;
    let mut x = gen_noise(&cfg.dims, &cfg.psi, cfg.t, &mut stream_rng(cfg.seed, Stream::Noise))?;
    let model = CpFactorModel::new(vec![cfg.w; cfg.r], loadings, Some(factors))?;
    if cfg.w > 0.0 {
        for (i, row) in model.factors().expect("factors set above").iter().enumerate() {
            let cols: Vec<&[f64]> = model.loadings().iter().map(|a| a.col(i)).collect();
            let comp = outer(&cols)?;
            for (t, &f) in row.iter().enumerate() {
                axpy(cfg.w * f, comp.data(), x.slice_mut(t));
            }
        }
    }
    Ok((x, model))
}

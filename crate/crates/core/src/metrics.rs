//! Evaluation statistics: loading error with label matching, factor
//! recovery, explained variability and least-squares trend fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::FitResult;
use crate::linalg::unit_projector_distance;
use crate::model::CpFactorModel;
use crate::moments::TensorTimeSeries;
use crate::tensor::{dot, Matrix};

/// Projector distances between estimated and true loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `per_pair[i][k]` compares true component i with its matched estimate.
    pub per_pair: Vec<Vec<f64>>,
    pub max_error: f64,
    /// `assignment[e]` is the true component matched to estimate e.
    pub assignment: Vec<usize>,
    /// Max error when estimate i is compared with truth i.
    pub unmatched_max_error: f64,
}

/// Loading error `max_{i,k} ‖â âᵀ − a aᵀ‖_S` after matching estimated to true
/// components by the assignment maximizing `Σ_{i,k} |⟨â, a⟩|`.
pub fn loading_error(est: &[Matrix], truth: &[Matrix]) -> Result<ErrorReport> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::shape(format!(
            "{} estimated modes vs {} true modes",
            est.len(),
            truth.len()
        )));
    }
    for (k, (e, t)) in est.iter().zip(truth).enumerate() {
        if e.rows() != t.rows() || e.cols() != t.cols() {
            return Err(Error::shape(format!(
                "mode {k}: estimate is {}x{}, truth is {}x{}",
                e.rows(),
                e.cols(),
                t.rows(),
                t.cols()
            )));
        }
    }
    let r = truth[0].cols();
    let score = Matrix::from_fn(r, r, |e, t| {
        est.iter()
            .zip(truth)
            .map(|(em, tm)| dot(em.col(e), tm.col(t)).abs())
            .sum()
    });
    let assignment = max_assignment(&score);
    let mut per_pair = vec![vec![0.0; est.len()]; r];
    for (e, &t) in assignment.iter().enumerate() {
        for (k, (em, tm)) in est.iter().zip(truth).enumerate() {
            per_pair[t][k] = unit_projector_distance(em.col(e), tm.col(t));
        }
    }
    let max_error = per_pair.iter().flatten().copied().fold(0.0, f64::max);
    let unmatched_max_error = (0..r)
        .flat_map(|i| est.iter().zip(truth).map(move |(em, tm)| unit_projector_distance(em.col(i), tm.col(i))))
        .fold(0.0, f64::max);
    Ok(ErrorReport {
        per_pair,
        max_error,
        assignment,
        unmatched_max_error,
    })
}

/// Hungarian method on a square score matrix; returns `row -> column`
/// maximizing the total score.
pub fn max_assignment(score: &Matrix) -> Vec<usize> {
    let n = score.rows();
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -score[(i - 1, j - 1)];
    // 1-based potentials; p[j] is the row assigned to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

/// Absolute Pearson correlation of two series.
pub fn abs_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("correlation needs two series of equal length >= 2"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("constant series has no correlation".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).abs())
}

/// Per true component i, `|corr(ŵ f̂, w f_i)|` for the matched estimate.
pub fn factor_recovery(fit: &FitResult, truth: &CpFactorModel) -> Result<Vec<f64>> {
    let true_f = truth.factors().ok_or(Error::MissingFactors)?;
    let report = loading_error(&fit.loadings, truth.loadings())?;
    let mut out = vec![0.0; truth.rank()];
    for (e, &t) in report.assignment.iter().enumerate() {
        let est: Vec<f64> = fit.factors[e].iter().map(|f| f * fit.weights[e]).collect();
        let tru: Vec<f64> = true_f[t].iter().map(|f| f * truth.weights()[t]).collect();
        out[t] = abs_correlation(&est, &tru)?;
    }
    Ok(out)
}

/// `1 − Σ_t ‖X_t − X̂_t‖² / Σ_t ‖X_t‖²` with `X̂` the fitted signal.
pub fn explained_variability(x: &TensorTimeSeries, fit: &FitResult) -> Result<f64> {
    let xhat = fit.fitted_series()?;
    variability_of(x, &xhat)
}

/// [`explained_variability`] for an explicit reconstruction.
pub fn variability_of(x: &TensorTimeSeries, xhat: &TensorTimeSeries) -> Result<f64> {
    if x.dims() != xhat.dims() || x.len() != xhat.len() {
        return Err(Error::shape("reconstruction shape differs from the series"));
    }
    let total: f64 = x.data().iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("series has zero norm".into()));
    }
    let resid: f64 = x.data().iter().zip(xhat.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((1.0 - resid / total).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`; `r2` is 0 when `ys` is constant.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::shape("xs and ys differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("linear fit needs at least 3 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("xs are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = if sst == 0.0 { 0.0 } else { 1.0 - ssr / sst };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Linear-interpolation quantile of unsorted data (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

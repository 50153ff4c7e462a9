use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, regularized_b, sign_normalize_in_place};
use crate::moments::TensorTimeSeries;
use crate::tensor::{norm2, Matrix};

use super::als::{raw_moment, surrogate_score};
use super::{
    check_init, contract_all_but, degenerate_spectrum_warning, kron_vec, max_change,
    output_block, random_loadings, rank_warning, FitConfig, FitResult, InitialLoadings, Method,
};

/// Orthonormal basis of `a`'s columns; on rank deficiency retries once on
/// the floored projection `regularized_b(a)`.
fn orthonormal(a: &Matrix, gram_floor: f64) -> Result<Matrix> {
    match qr_orthonormalize(a) {
        Ok(q) => Ok(q),
        Err(Error::RankDeficient(_)) => qr_orthonormalize(&regularized_b(a, gram_floor)?),
        Err(e) => Err(e),
    }
}

struct OalsRun {
    loadings: Vec<Matrix>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn oals_core(m: &Matrix, dims: &[usize], init: &[Matrix], cfg: &FitConfig) -> Result<OalsRun> {
    let r = init[0].cols();
    let mut a: Vec<Matrix> = init.to_vec();
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        let q = a
            .iter()
            .map(|ak| orthonormal(ak, cfg.gram_floor))
            .collect::<Result<Vec<_>>>()?;
        let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(r); dims.len()];
        for i in 0..r {
            let qi: Vec<&[f64]> = q.iter().map(|qk| qk.col(i)).collect();
            let w = m.matvec(&kron_vec(&qi))?;
            for (k, cols) in columns.iter_mut().enumerate() {
                let mut v = contract_all_but(&w, dims, k, &qi);
                let n = norm2(&v);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::Degenerate(format!(
                        "OALS column {i} of mode {k} vanished at iteration {it}"
                    )));
                }
                v.iter_mut().for_each(|x| *x /= n);
                sign_normalize_in_place(&mut v);
                cols.push(v);
            }
        }
        let next = columns
            .iter()
            .map(|c| Matrix::from_columns(c))
            .collect::<Result<Vec<_>>>()?;
        let change = max_change(&next, &a);
        trace.push(change);
        a = next;
        if change <= cfg.eps {
            converged = true;
            break;
        }
    }
    Ok(OalsRun {
        loadings: a,
        iterations: trace.len(),
        converged,
        trace,
    })
}

fn finish(
    x: &TensorTimeSeries,
    method: Method,
    run: OalsRun,
    lambda_hat: Vec<f64>,
    mut warnings: Vec<String>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if !run.converged {
        let w = format!("{method} did not converge within {} iterations", cfg.max_iter);
        log::warn!("{w}");
        warnings.push(w);
    }
    warnings.extend(degenerate_spectrum_warning(&lambda_hat));
    let (weights, factors) = output_block(x, &run.loadings, cfg.gram_floor)?;
    Ok(FitResult {
        method,
        loadings: run.loadings,
        weights,
        factors,
        lambda_hat,
        iterations: run.iterations,
        converged: run.converged,
        trace: run.trace,
        warnings,
    })
}

/// Orthogonalized ALS from `init`: each sweep updates every mode from the
/// QR bases of the previous sweep.
pub fn coals(x: &TensorTimeSeries, init: &InitialLoadings, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_series(x)?;
    check_init(x, init, cfg.r)?;
    let warnings: Vec<String> = rank_warning(x, cfg.r).into_iter().collect();
    let m = raw_moment(x, cfg.h)?;
    let run = oals_core(&m, x.dims(), &init.loadings, cfg)?;
    finish(x, Method::Coals, run, init.lambda_hat.clone(), warnings, cfg)
}

/// Orthogonalized ALS from `cfg.restarts` random starts; keeps the run with
/// the largest surrogate score.
pub fn oals_random(x: &TensorTimeSeries, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_series(x)?;
    let warnings: Vec<String> = rank_warning(x, cfg.r).into_iter().collect();
    let m = raw_moment(x, cfg.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let mut best: Option<(f64, OalsRun)> = None;
    for _ in 0..cfg.restarts {
        let init = random_loadings(&mut rng, x.dims(), cfg.r);
        let run = match oals_core(&m, x.dims(), &init, cfg) {
            Ok(run) => run,
            Err(Error::Degenerate(msg) | Error::RankDeficient(msg)) => {
                log::debug!("discarding OALS start: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = surrogate_score(&m, &run.loadings)?;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, run));
        }
    }
    let (_, run) = best.ok_or_else(|| Error::Degenerate("every OALS start degenerated".into()))?;
    finish(x, Method::Oals, run, Vec::new(), warnings, cfg)
}

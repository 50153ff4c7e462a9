use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{sign_normalize_in_place, unit_projector_distance};
use crate::moments::{lagged_cross_moment, TensorTimeSeries};
use crate::tensor::{dot, norm2, Matrix};

use super::{
    check_init, contract_all_but, degenerate_spectrum_warning, kron_vec, output_block,
    random_loadings, rank_warning, FitConfig, FitResult,
    InitialLoadings, Method,
};

/// Outcome of one rank-one ALS run for a single component.
struct RankOne {
    vectors: Vec<Vec<f64>>,
    iterations: usize,
    converged: bool,
}

/// Rank-one alternating updates for a single component on the raw
/// `d x d` moment `m` (rows index the lagged copy).
fn rank_one_als(m: &Matrix, dims: &[usize], start: Vec<Vec<f64>>, cfg: &FitConfig) -> Result<RankOne> {
    let mut a = start;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let prev = a.clone();
        for k in 0..dims.len() {
            let refs: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
            let v = m.t_matvec(&kron_vec(&refs))?;
            let mut next = contract_all_but(&v, dims, k, &refs);
            let n = norm2(&next);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Degenerate(format!(
                    "ALS update for mode {k} vanished at iteration {it}"
                )));
            }
            next.iter_mut().for_each(|x| *x /= n);
            a[k] = next;
        }
        let change = a
            .iter()
            .zip(&prev)
            .map(|(x, y)| unit_projector_distance(x, y))
            .fold(0.0, f64::max);
        if change <= cfg.eps {
            converged = true;
            break;
        }
    }
    for v in &mut a {
        sign_normalize_in_place(v);
    }
    Ok(RankOne {
        vectors: a,
        iterations,
        converged,
    })
}

/// `|u_iᵀ M u_i|` summed over components, with `u_i = ⊗_k a_ik`.
pub(super) fn surrogate_score(m: &Matrix, loadings: &[Matrix]) -> Result<f64> {
    let r = loadings[0].cols();
    let mut total = 0.0;
    for i in 0..r {
        let cols: Vec<&[f64]> = loadings.iter().map(|a| a.col(i)).collect();
        let u = kron_vec(&cols);
        total += dot(&u, &m.matvec(&u)?).abs();
    }
    Ok(total)
}

struct AlsRun {
    loadings: Vec<Matrix>,
    iterations: usize,
    converged: bool,
}

fn als_core(m: &Matrix, dims: &[usize], init: &[Matrix], cfg: &FitConfig) -> Result<AlsRun> {
    let r = init[0].cols();
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(r); dims.len()];
    let mut iterations = 0;
    let mut converged = true;
    for i in 0..r {
        let start = init.iter().map(|a| a.col(i).to_vec()).collect();
        let run = rank_one_als(m, dims, start, cfg)?;
        iterations = iterations.max(run.iterations);
        converged &= run.converged;
        for (k, v) in run.vectors.into_iter().enumerate() {
            columns[k].push(v);
        }
    }
    let loadings = columns
        .iter()
        .map(|c| Matrix::from_columns(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlsRun {
        loadings,
        iterations,
        converged,
    })
}

fn finish(
    x: &TensorTimeSeries,
    method: Method,
    run: AlsRun,
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
        trace: Vec::new(),
        warnings,
    })
}

/// Raw moment matrix or an error when it was not retained.
pub(super) fn raw_moment(x: &TensorTimeSeries, h: usize) -> Result<Matrix> {
    lagged_cross_moment(x, h)?
        .raw()
        .cloned()
        .ok_or_else(|| Error::invalid("moment too large to hold the unsymmetrized matrix"))
}

/// Rank-one ALS from `init`, one component at a time.
pub fn cals(x: &TensorTimeSeries, init: &InitialLoadings, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_series(x)?;
    check_init(x, init, cfg.r)?;
    let warnings: Vec<String> = rank_warning(x, cfg.r).into_iter().collect();
    let m = raw_moment(x, cfg.h)?;
    let run = als_core(&m, x.dims(), &init.loadings, cfg)?;
    finish(x, Method::Cals, run, init.lambda_hat.clone(), warnings, cfg)
}

/// Rank-one ALS from `cfg.restarts` random starts; keeps the run with the
/// largest surrogate score.
pub fn als_random(x: &TensorTimeSeries, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_series(x)?;
    let warnings: Vec<String> = rank_warning(x, cfg.r).into_iter().collect();
    let m = raw_moment(x, cfg.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let mut best: Option<(f64, AlsRun)> = None;
    for _ in 0..cfg.restarts {
        let init = random_loadings(&mut rng, x.dims(), cfg.r);
        let run = match als_core(&m, x.dims(), &init, cfg) {
            Ok(run) => run,
            Err(Error::Degenerate(msg)) => {
                log::debug!("discarding ALS start: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = surrogate_score(&m, &run.loadings)?;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, run));
        }
    }
    let (_, run) = best.ok_or_else(|| Error::Degenerate("every ALS start degenerated".into()))?;
    finish(x, Method::Als, run, Vec::new(), warnings, cfg)
}

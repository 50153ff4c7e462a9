use crate::error::{Error, Result};
use crate::linalg::{sign_normalize_in_place, sym_top_eigs, EIG_MAX_SWEEPS, EIG_TOL};
use crate::model::CpFactorModel;
use crate::moments::TensorTimeSeries;
use crate::tensor::{dot, Matrix};

use super::{
    check_init, contract_all_but, cpca_init, degenerate_spectrum_warning, max_change, output_block,
    rank_warning, FitConfig, FitResult, InitialLoadings, Method, ProjectionState,
};

/// `Z_t = X_t ×_{l≠k} b̂_ilᵀ` for every t, using the projections currently in
/// `state`. Returned as a `d_k x T` matrix.
pub fn project_z(x: &TensorTimeSeries, state: &ProjectionState, i: usize, k: usize) -> Result<Matrix> {
    let order = x.dims().len();
    if k >= order {
        return Err(Error::ModeOutOfRange { mode: k, order });
    }
    if state.b_hat.len() != order {
        return Err(Error::shape(format!(
            "state has {} modes, series has {order}",
            state.b_hat.len()
        )));
    }
    if i >= state.b_hat[0].cols() {
        return Err(Error::invalid(format!("component {i} out of range")));
    }
    let vecs: Vec<&[f64]> = state.b_hat.iter().map(|b| b.col(i)).collect();
    let dk = x.dims()[k];
    let mut data = Vec::with_capacity(dk * x.len());
    for t in 0..x.len() {
        data.extend(contract_all_but(x.slice(t), x.dims(), k, &vecs));
    }
    Matrix::from_col_major(dk, x.len(), data)
}

/// Cross-component leakage at mode k: `ξ_ij = Π_{l≠k} a_jlᵀ b̂_il` with the
/// true loadings of `model` and the projections in `state`.
pub fn projection_leakage(model: &CpFactorModel, state: &ProjectionState, k: usize) -> Result<Matrix> {
    let order = model.order();
    if k >= order {
        return Err(Error::ModeOutOfRange { mode: k, order });
    }
    if state.b_hat.len() != order {
        return Err(Error::shape("state and model differ in order"));
    }
    let r = model.rank();
    if state.b_hat[0].cols() != r {
        return Err(Error::shape("state and model differ in rank"));
    }
    Ok(Matrix::from_fn(r, r, |i, j| {
        (0..order)
            .filter(|&l| l != k)
            .map(|l| dot(model.loading(j, l), state.b_hat[l].col(i)))
            .product()
    }))
}

/// Top eigenvector of the symmetrized lag-h autocovariance of the columns
/// of `z` (`d_k x T`).
fn lag_top_vector(z: &Matrix, h: usize) -> Result<Vec<f64>> {
    let (dk, t) = (z.rows(), z.cols());
    let lead = Matrix::from_col_major(dk, t - h, z.data()[..dk * (t - h)].to_vec())?;
    let lagged = Matrix::from_col_major(dk, t - h, z.data()[dk * h..].to_vec())?;
    let mut s = lead.matmul_t(&lagged)?;
    s.scale(1.0 / (t - h) as f64);
    let eig = sym_top_eigs(&s.symmetrized()?, 1, EIG_TOL, EIG_MAX_SWEEPS)?;
    let mut v = eig.vector(0).to_vec();
    sign_normalize_in_place(&mut v);
    Ok(v)
}

/// Iterative simultaneous orthogonalization from `init`.
pub fn iso_refine(x: &TensorTimeSeries, init: &InitialLoadings, cfg: &FitConfig) -> Result<FitResult> {
    iso_refine_observed(x, init, cfg, |_, _, _| {})
}

/// [`iso_refine`], calling `observe(state, iteration, mode)` after each
/// per-mode update.
pub fn iso_refine_observed<F>(
    x: &TensorTimeSeries,
    init: &InitialLoadings,
    cfg: &FitConfig,
    mut observe: F,
) -> Result<FitResult>
where
    F: FnMut(&ProjectionState, usize, usize),
{
    cfg.check_series(x)?;
    check_init(x, init, cfg.r)?;
    let mut warnings = Vec::new();
    if let Some(w) = rank_warning(x, cfg.r) {
        log::warn!("{w}");
        warnings.push(w);
    }
    let mut state = ProjectionState::new(init.loadings.clone(), cfg.gram_floor)?;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;
    for m in 1..=cfg.max_iter {
        let prev = state.a_hat.clone();
        state.iteration = m;
        for k in 0..x.dims().len() {
            let cols = (0..cfg.r)
                .map(|i| lag_top_vector(&project_z(x, &state, i, k)?, cfg.h))
                .collect::<Result<Vec<_>>>()?;
            state.set_mode(k, Matrix::from_columns(&cols)?, cfg.gram_floor)?;
            observe(&state, m, k);
        }
        let change = max_change(&state.a_hat, &prev);
        log::debug!("iso iteration {m}: max projector change {change:.3e}");
        trace.push(change);
        if change <= cfg.eps {
            converged = true;
            break;
        }
    }
    if !converged {
        let w = format!("ISO did not converge within {} iterations", cfg.max_iter);
        log::warn!("{w}");
        warnings.push(w);
    }
    warnings.extend(degenerate_spectrum_warning(&init.lambda_hat));
    let (weights, factors) = output_block(x, &state.a_hat, cfg.gram_floor)?;
    Ok(FitResult {
        method: Method::Hope,
        loadings: state.a_hat,
        weights,
        factors,
        lambda_hat: init.lambda_hat.clone(),
        iterations: trace.len(),
        converged,
        trace,
        warnings,
    })
}

/// cPCA initialization followed by ISO refinement.
pub fn hope(x: &TensorTimeSeries, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check_series(x)?;
    let init = cpca_init(x, cfg.r, cfg.h)?;
    iso_refine(x, &init, cfg)
}

/// [`hope`] with a single ISO sweep.
pub fn one_step_hope(x: &TensorTimeSeries, cfg: &FitConfig) -> Result<FitResult> {
    let cfg = FitConfig {
        max_iter: 1,
        ..cfg.clone()
    };
    let mut fit = hope(x, &cfg)?;
    fit.method = Method::OneStepHope;
    fit.converged = true;
    fit.warnings.retain(|w| !w.starts_with("ISO did not converge"));
    Ok(fit)
}

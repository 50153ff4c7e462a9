use crate::error::{Error, Result};
use crate::linalg::{sym_top_eigs, top_left_singular, EIG_MAX_SWEEPS, EIG_TOL};
use crate::moments::{lagged_cross_moment_with_budget, LaggedMoment, TensorTimeSeries};
use crate::tensor::{unfold, DenseTensor, Matrix};

use super::InitialLoadings;

/// Composite PCA: top-r eigenvectors of the symmetrized lag-h square
/// unfolding, each reshaped to a K-tensor and reduced to one unit vector per
/// mode by its top left singular vector.
pub fn cpca_init(x: &TensorTimeSeries, r: usize, h: usize) -> Result<InitialLoadings> {
    if r == 0 || r > x.slice_len() {
        return Err(Error::invalid(format!(
            "r = {r} outside 1..={}",
            x.slice_len()
        )));
    }
    let moment = lagged_cross_moment_with_budget(x, h, 0)?;
    cpca_from_moment(&moment, r)
}

/// [`cpca_init`] on a precomputed moment.
pub fn cpca_from_moment(moment: &LaggedMoment, r: usize) -> Result<InitialLoadings> {
    let dims = moment.dims().to_vec();
    let eig = sym_top_eigs(moment.square(), r, EIG_TOL, EIG_MAX_SWEEPS)?;
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(r); dims.len()];
    for i in 0..r {
        let u = DenseTensor::new(dims.clone(), eig.vector(i).to_vec())?;
        for (k, cols) in columns.iter_mut().enumerate() {
            cols.push(top_left_singular(&unfold(&u, k)?)?);
        }
    }
    let loadings = columns
        .iter()
        .map(|c| Matrix::from_columns(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(InitialLoadings {
        loadings,
        lambda_hat: eig.values,
    })
}

//! Matrix decompositions needed by the estimators: symmetric eigenpairs
//! (dense tridiagonal QL for small problems, Lanczos with full
//! reorthogonalization for large ones), top singular vectors, Householder QR
//! and the floored Gram inverse used to build projection matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, norm2, Matrix};

/// Default relative residual tolerance for [`sym_top_eigs`].
pub const EIG_TOL: f64 = 1e-10;
/// Default cap on Lanczos steps.
pub const EIG_MAX_SWEEPS: usize = 5000;
/// Default eigenvalue floor for [`regularized_b`].
pub const GRAM_FLOOR: f64 = 0.1;

/// Matrices up to this size go straight to the dense solver.
const DENSE_LIMIT: usize = 64;

/// Leading eigenpairs of a symmetric matrix, values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPairs {
    pub values: Vec<f64>,
    /// `d x r`, orthonormal columns.
    pub vectors: Matrix,
}

impl EigPairs {
    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.col(i)
    }
}

/// Full eigendecomposition of a symmetric matrix (Householder reduction to
/// tridiagonal form followed by implicit QL). Values descending.
pub fn sym_eigen(m: &Matrix) -> Result<EigPairs> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::shape("eigendecomposition needs a square matrix"));
    }
    if n == 0 {
        return Ok(EigPairs {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    // Row-major working copy; symmetric so layout is immaterial on input.
    let mut v: Vec<f64> = m.data().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;
    Ok(sorted_pairs(n, &v, &d, n))
}

/// Eigenpairs of the symmetric tridiagonal matrix with diagonal `diag` and
/// sub-diagonal `off` (`off.len() == diag.len() - 1`).
pub fn tridiag_eigen(diag: &[f64], off: &[f64]) -> Result<EigPairs> {
    let n = diag.len();
    if n == 0 {
        return Ok(EigPairs {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    if off.len() + 1 != n {
        return Err(Error::shape("sub-diagonal length must be n - 1"));
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d = diag.to_vec();
    // tql2 expects e[i] to hold the coupling between i-1 and i.
    let mut e = vec![0.0; n];
    e[1..].copy_from_slice(off);
    tql2(n, &mut v, &mut d, &mut e)?;
    Ok(sorted_pairs(n, &v, &d, n))
}

/// Top-`count` pairs from row-major eigenvector storage `v` (vector i is
/// column i), sorted by descending value with ties in index order.
fn sorted_pairs(n: usize, v: &[f64], d: &[f64], count: usize) -> EigPairs {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let order = &order[..count];
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, count, |row, j| v[row * n + order[j]]);
    EigPairs { values, vectors }
}

/// Householder tridiagonalization; `v` is row-major `n x n` and is replaced
/// by the accumulated orthogonal transform.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e), accumulating rotations into `v`.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// The `r` algebraically largest eigenpairs of a symmetric matrix, with each
/// residual `‖m v − λ v‖ ≤ tol·‖m‖`. Eigenvectors are sign-normalized.
pub fn sym_top_eigs(m: &Matrix, r: usize, tol: f64, max_sweeps: usize) -> Result<EigPairs> {
    let d = m.rows();
    if m.cols() != d {
        return Err(Error::shape("eigendecomposition needs a square matrix"));
    }
    if r == 0 || r > d {
        return Err(Error::invalid(format!("requested {r} eigenpairs of a {d}x{d} matrix")));
    }
    let mut pairs = if d <= DENSE_LIMIT {
        let full = sym_eigen(m)?;
        EigPairs {
            values: full.values[..r].to_vec(),
            vectors: Matrix::from_col_major(d, r, full.vectors.data()[..d * r].to_vec())?,
        }
    } else {
        lanczos_top_eigs(m, r, tol, max_sweeps)?
    };
    for j in 0..r {
        sign_normalize_in_place(pairs.vectors.col_mut(j));
    }
    Ok(pairs)
}

/// Lanczos iteration with full reorthogonalization for the `r` largest
/// eigenpairs. Invariant subspaces are handled by restarting from a fresh
/// vector orthogonal to the current basis; after convergence a deflated probe
/// on the orthogonal complement catches eigenvalues a single Krylov sequence
/// cannot see (repeated eigenvalues). Start vectors come from a fixed-seed
/// generator, so results are deterministic.
pub fn lanczos_top_eigs(m: &Matrix, r: usize, tol: f64, max_steps: usize) -> Result<EigPairs> {
    let d = m.rows();
    if m.cols() != d {
        return Err(Error::shape("eigendecomposition needs a square matrix"));
    }
    if r == 0 || r > d {
        return Err(Error::invalid(format!("requested {r} eigenpairs of a {d}x{d} matrix")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let (mut values, mut vectors, anorm) = lanczos_run(m, r, tol, max_steps, &[], 0.0, &mut rng)?;
    while vectors.len() < d {
        let (pv, mut pvec, _) = lanczos_run(m, 1, tol, max_steps, &vectors, anorm, &mut rng)?;
        if pv[0] <= values[r - 1] + tol * anorm {
            break;
        }
        let pos = values.iter().position(|&v| pv[0] > v).unwrap_or(r - 1);
        values.insert(pos, pv[0]);
        vectors.insert(pos, pvec.remove(0));
        values.truncate(r);
        vectors.truncate(r);
    }
    Ok(EigPairs {
        values,
        vectors: Matrix::from_columns(&vectors)?,
    })
}

type LanczosOut = (Vec<f64>, Vec<Vec<f64>>, f64);

/// One Lanczos sequence on the complement of `locked` (orthonormal vectors).
/// `norm_floor` is a lower bound on the scale used for breakdown and
/// residual tests, so a complement where `m` vanishes still terminates.
#[allow(clippy::too_many_arguments)]
fn lanczos_run(
    m: &Matrix,
    r: usize,
    tol: f64,
    max_steps: usize,
    locked: &[Vec<f64>],
    norm_floor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LanczosOut> {
    let d = m.rows();
    let room = d - locked.len();
    let cap = room.min(max_steps.max(r));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut q = fresh_direction(d, locked, &basis, rng)
        .ok_or_else(|| Error::Degenerate("no start vector".into()))?;
    let mut last_residual = f64::INFINITY;
    loop {
        let mut w = m.matvec(&q)?;
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for v in locked.iter().chain(&basis) {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let mut b = norm2(&w);
        let k = basis.len();

        let scale = alpha
            .iter()
            .chain(&beta)
            .fold(norm_floor, |acc, x| acc.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let breakdown = b <= 1e-13 * scale;
        let full = k >= cap;
        if k >= r && (k.is_multiple_of(4) || breakdown || full || k == r) {
            let t = tridiag_eigen(&alpha, &beta)?;
            let anorm = t
                .values
                .iter()
                .fold(norm_floor, |acc, x| acc.max(x.abs()))
                .max(f64::MIN_POSITIVE);
            let est = (0..r)
                .map(|i| (b * t.vectors[(k - 1, i)]).abs())
                .fold(0.0f64, f64::max);
            let exhausted = full && k == room;
            if est <= tol * anorm || exhausted {
                let ritz = ritz_vectors(&basis, &t, r);
                let residual = ritz
                    .iter()
                    .zip(&t.values)
                    .map(|(v, &theta)| {
                        let mut mv = m.matvec(v).expect("square");
                        axpy(-theta, v, &mut mv);
                        for l in locked {
                            let c = dot(l, &mv);
                            axpy(-c, l, &mut mv);
                        }
                        norm2(&mv)
                    })
                    .fold(0.0f64, f64::max);
                last_residual = residual / anorm;
                let accept_tol = if exhausted { tol.max(1e-8) } else { tol };
                if residual <= accept_tol * anorm {
                    return Ok((t.values[..r].to_vec(), ritz, anorm));
                }
            } else {
                last_residual = est / anorm;
            }
        }
        if full {
            return Err(Error::NoConvergence {
                iterations: k,
                residual: last_residual,
            });
        }
        if breakdown {
            b = 0.0;
            q = fresh_direction(d, locked, &basis, rng).ok_or(Error::NoConvergence {
                iterations: k,
                residual: last_residual,
            })?;
        } else {
            w.iter_mut().for_each(|x| *x /= b);
            q = w;
        }
        beta.push(b);
    }
}

fn ritz_vectors(basis: &[Vec<f64>], t: &EigPairs, r: usize) -> Vec<Vec<f64>> {
    let d = basis[0].len();
    (0..r)
        .map(|i| {
            let mut col = vec![0.0; d];
            for (j, v) in basis.iter().enumerate() {
                axpy(t.vectors[(j, i)], v, &mut col);
            }
            let n = norm2(&col);
            col.iter_mut().for_each(|x| *x /= n);
            col
        })
        .collect()
}

/// Random unit vector orthogonal to `basis`, or `None` if the basis already
/// spans the space.
fn fresh_direction(
    d: usize,
    locked: &[Vec<f64>],
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    if locked.len() + basis.len() >= d {
        return None;
    }
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n0 = norm2(&v);
        for _ in 0..2 {
            for b in locked.iter().chain(basis) {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let n = norm2(&v);
        if n > 1e-8 * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

/// Unit vector `u` maximizing `‖mᵀu‖`, sign-normalized.
pub fn top_left_singular(m: &Matrix) -> Result<Vec<f64>> {
    if m.frobenius_norm() == 0.0 {
        return Err(Error::Degenerate("top singular vector of a zero matrix".into()));
    }
    let mut u = if m.rows() <= m.cols() {
        let gram = m.matmul_t(m)?;
        sym_top_eigs(&gram, 1, EIG_TOL, EIG_MAX_SWEEPS)?
            .vectors
            .into_data()
    } else {
        let gram = m.t_matmul(m)?;
        let v = sym_top_eigs(&gram, 1, EIG_TOL, EIG_MAX_SWEEPS)?.vectors;
        let mut u = m.matvec(v.col(0))?;
        let n = norm2(&u);
        u.iter_mut().for_each(|x| *x /= n);
        u
    };
    sign_normalize_in_place(&mut u);
    Ok(u)
}

/// `A (V Λ̃ Vᵀ)⁻¹` where `AᵀA = V Λ Vᵀ` and `Λ̃` floors eigenvalues at `c`.
/// Without floor engagement this is exactly `A (AᵀA)⁻¹`, so `AᵀB = I`.
pub fn regularized_b(a: &Matrix, c: f64) -> Result<Matrix> {
    if a.cols() > a.rows() {
        return Err(Error::invalid(format!(
            "{} columns exceed dimension {}",
            a.cols(),
            a.rows()
        )));
    }
    floored_projection(a, c)
}

/// [`regularized_b`] without the `r ≤ d` check; with more columns than rows
/// the Gram matrix is singular and the floor always engages.
pub fn floored_projection(a: &Matrix, c: f64) -> Result<Matrix> {
    let r = a.cols();
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("Gram floor {c} outside (0, 1)")));
    }
    let gram = a.t_matmul(a)?;
    let eig = sym_eigen(&gram)?;
    let v = &eig.vectors;
    let inv = Matrix::from_fn(r, r, |i, j| {
        (0..r)
            .map(|l| v[(i, l)] * v[(j, l)] / eig.values[l].max(c))
            .sum()
    });
    a.matmul(&inv)
}

/// Householder QR; returns `Q` with orthonormal columns spanning the columns
/// of `a`, signed so that `R` has a nonnegative diagonal.
pub fn qr_orthonormalize(a: &Matrix) -> Result<Matrix> {
    let (d, r) = (a.rows(), a.cols());
    if r > d {
        return Err(Error::RankDeficient(format!("{r} columns in dimension {d}")));
    }
    let scale = a.columns().map(norm2).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::RankDeficient("zero matrix".into()));
    }
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut diag = Vec::with_capacity(r);
    for j in 0..r {
        let x = &work.col(j)[j..];
        let alpha = norm2(x);
        let mut v = x.to_vec();
        let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += s * alpha;
        let vn = norm2(&v);
        // R_jj = -s * alpha
        let rjj = -s * alpha;
        if alpha <= 1e-12 * scale {
            return Err(Error::RankDeficient(format!("column {j} is dependent")));
        }
        v.iter_mut().for_each(|x| *x /= vn);
        for l in j..r {
            let col = &mut work.col_mut(l)[j..];
            let c = 2.0 * dot(&v, col);
            axpy(-c, &v, col);
        }
        diag.push(rjj);
        reflectors.push(v);
    }
    let mut q = Matrix::zeros(d, r);
    for j in 0..r {
        let col = q.col_mut(j);
        col[j] = 1.0;
        for (l, v) in reflectors.iter().enumerate().rev() {
            let seg = &mut col[l..];
            let c = 2.0 * dot(v, seg);
            axpy(-c, v, seg);
        }
        if diag[j] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(q)
}

/// `‖a aᵀ − b bᵀ‖_S` for unit vectors, evaluated as `‖a − b‖‖a + b‖ / 2`
/// to avoid the cancellation in `sqrt(1 − ⟨a, b⟩²)` near zero.
pub fn unit_projector_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    (0.5 * (minus * plus).sqrt()).min(1.0)
}

/// Flips the sign so the entry of largest magnitude is positive; ties go to
/// the smallest index.
pub fn sign_normalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    sign_normalize_in_place(&mut out);
    out
}

pub fn sign_normalize_in_place(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(sym_eigen(m)?
        .values
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs())))
}

/// Spectral norm of a general matrix via its Gram matrix.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    let g = if m.rows() <= m.cols() {
        m.matmul_t(m)?
    } else {
        m.t_matmul(m)?
    };
    Ok(sym_eigen(&g)?.values.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(m)?;
    let n = m.rows();
    let scale = eig.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if eig.values.iter().any(|&l| l < -1e-12 * scale.max(1.0)) {
        return Err(Error::invalid("matrix is not positive semidefinite"));
    }
    let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let v = &eig.vectors;
    Ok(Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|l| v[(i, l)] * roots[l] * v[(j, l)]).sum()
    }))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn jacobi_values(m: &Matrix) -> Vec<f64> {
        let n = m.rows();
        let mut a = m.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn random_sym(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        g.symmetrized().unwrap()
    }

    #[test]
    fn identity_top_two() {
        let e = sym_top_eigs(&Matrix::identity(3), 2, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
        assert_eq!(e.values.len(), 2);
        for (i, v) in e.values.iter().enumerate() {
            assert!((v - 1.0).abs() < 1e-12);
            let mv = Matrix::identity(3).matvec(e.vector(i)).unwrap();
            let res: f64 = mv.iter().zip(e.vector(i)).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(res.sqrt() < 1e-10);
        }
    }

    #[test]
    fn diagonal_top_two() {
        let mut m = Matrix::zeros(3, 3);
        m[(0, 0)] = 3.0;
        m[(1, 1)] = 2.0;
        m[(2, 2)] = 1.0;
        let e = sym_top_eigs(&m, 2, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 2.0).abs() < 1e-12);
        assert!((e.vector(0)[0] - 1.0).abs() < 1e-12);
        assert!((e.vector(1)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_matches_jacobi() {
        let m = random_sym(8, 3);
        let oracle = jacobi_values(&m);
        let e = sym_top_eigs(&m, 2, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
        for i in 0..2 {
            assert!((e.values[i] - oracle[i]).abs() < 1e-9);
        }
        let full = sym_eigen(&m).unwrap();
        for (a, b) in full.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn lanczos_handles_repeated_and_indefinite_spectra() {
        let n = 90;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = if i < 3 { 5.0 } else { -(i as f64) * 0.1 };
        }
        let e = lanczos_top_eigs(&m, 3, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
        for v in &e.values {
            assert!((v - 5.0).abs() < 1e-9);
        }
        let g = e.vectors.t_matmul(&e.vectors).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(3)) < 1e-10);

        let m = random_sym(120, 9);
        let full = sym_eigen(&m).unwrap();
        let e = lanczos_top_eigs(&m, 4, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
        for i in 0..4 {
            assert!((e.values[i] - full.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_pairs_is_an_error() {
        assert!(sym_top_eigs(&Matrix::identity(3), 4, EIG_TOL, 10).is_err());
    }

    #[test]
    fn singular_vector_cases() {
        let a = [3.0, 4.0];
        let b = [1.0, -1.0, 2.0];
        let m = Matrix::from_fn(2, 3, |i, j| a[i] * b[j]);
        let u = top_left_singular(&m).unwrap();
        assert!((u[0].abs() - 0.6).abs() < 1e-12 && (u[1].abs() - 0.8).abs() < 1e-12);
        let mut d = Matrix::zeros(2, 2);
        d[(0, 0)] = 2.0;
        d[(1, 1)] = 1.0;
        let u = top_left_singular(&d).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        assert!(top_left_singular(&Matrix::zeros(2, 2)).is_err());
        // tall branch
        let t = m.transpose();
        let u = top_left_singular(&t).unwrap();
        let nb = norm2(&b);
        for (x, y) in u.iter().zip(&b) {
            assert!((x.abs() - y.abs() / nb).abs() < 1e-10);
        }
    }

    #[test]
    fn regularized_b_cases() {
        let q = qr_orthonormalize(&Matrix::from_fn(5, 2, |i, j| ((i + 3 * j) as f64).cos()))
            .unwrap();
        let b = regularized_b(&q, 0.1).unwrap();
        assert!(b.max_abs_diff(&q) < 1e-12);

        // Gram eigenvalues 1.5 and 0.5: unit columns with inner product 0.5.
        let s = 0.5f64;
        let a = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![s, (1.0 - s * s).sqrt(), 0.0]])
            .unwrap();
        let b = regularized_b(&a, 0.1).unwrap();
        let atb = a.t_matmul(&b).unwrap();
        assert!(atb.max_abs_diff(&Matrix::identity(2)) < 1e-10);

        let dup = Matrix::from_columns(&[vec![0.6, 0.8], vec![0.6, 0.8]]).unwrap();
        let b = regularized_b(&dup, 0.1).unwrap();
        assert!(b.data().iter().all(|x| x.is_finite()));
        assert!(spectral_norm(&b).unwrap() <= spectral_norm(&dup).unwrap() / 0.1 + 1e-12);

        assert!(regularized_b(&Matrix::zeros(2, 3), 0.1).is_err());
    }

    #[test]
    fn qr_cases() {
        let a = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let q = qr_orthonormalize(&a).unwrap();
        let expect = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(q.max_abs_diff(&expect) < 1e-14);
        let q2 = qr_orthonormalize(&q).unwrap();
        assert!(q2.max_abs_diff(&q) < 1e-14);
        let dep = Matrix::from_columns(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(qr_orthonormalize(&dep), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn sign_normalize_cases() {
        assert_eq!(sign_normalize(&[-0.8, 0.6]), vec![0.8, -0.6]);
        assert_eq!(sign_normalize(&[0.6, 0.8]), vec![0.6, 0.8]);
        assert_eq!(sign_normalize(&[-0.5, 0.5, -0.707]), vec![0.5, -0.5, 0.707]);
        assert_eq!(sign_normalize(&[-0.6, 0.6]), vec![0.6, -0.6]);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let psi = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.3 });
        let s = sym_sqrt(&psi).unwrap();
        assert!(s.matmul(&s).unwrap().max_abs_diff(&psi) < 1e-12);
    }
}

#![allow(dead_code, clippy::needless_range_loop)]

use cpfactor::moments::TensorTimeSeries;
use cpfactor::simulate::{gen_ar1_factors, gen_loadings, stream_rng, Stream};
use cpfactor::{CpFactorModel, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_col_major(rows, cols, gaussian(rng, rows * cols)).unwrap()
}

pub fn random_unit_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let c: Vec<Vec<f64>> = (0..cols).map(|_| unit(gaussian(rng, rows))).collect();
    Matrix::from_columns(&c).unwrap()
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let g = gaussian(rng, n * n);
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (g[i * n + j] + g[j * n + i])).collect())
        .collect()
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let c = rows[0].len();
    Matrix::from_fn(n, c, |i, j| rows[i][j])
}

/// Cyclic Jacobi eigendecomposition; eigenvalues descending, eigenvectors as
/// columns of the returned row-major matrix.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| idx.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

/// Linear index of a multi-index in vec order.
pub fn vec_index(idx: &[usize], dims: &[usize]) -> usize {
    let mut lin = 0;
    let mut stride = 1;
    for (i, d) in idx.iter().zip(dims) {
        lin += i * stride;
        stride *= d;
    }
    lin
}

/// All multi-indices of `dims` in vec order.
pub fn all_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = dims.iter().product();
    (0..n)
        .map(|mut lin| {
            dims.iter()
                .map(|&d| {
                    let i = lin % d;
                    lin /= d;
                    i
                })
                .collect()
        })
        .collect()
}

/// `(T−h)⁻¹ Σ_t X_{t−h}[i] X_t[j]` by direct summation.
pub fn moment_entry(x: &TensorTimeSeries, h: usize, i: usize, j: usize) -> f64 {
    let t = x.len();
    let mut s = 0.0;
    for tt in h..t {
        s += x.slice(tt - h)[i] * x.slice(tt)[j];
    }
    s / (t - h) as f64
}

/// Modified Gram–Schmidt on the columns of `a`.
pub fn gram_schmidt(a: &Matrix) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in a.columns() {
        let mut v = c.to_vec();
        for q in &out {
            let d: f64 = q.iter().zip(&v).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        out.push(unit(v));
    }
    out
}

/// Projector `Σ q qᵀ` of orthonormal columns.
pub fn projector(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols[0].len();
    (0..n)
        .map(|i| (0..n).map(|j| cols.iter().map(|q| q[i] * q[j]).sum()).collect())
        .collect()
}

/// Best assignment by enumerating all permutations.
pub fn brute_force_assignment(score: &[Vec<f64>]) -> (Vec<usize>, f64) {
    fn rec(score: &[Vec<f64>], row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
        let n = score.len();
        if row == n {
            let total: f64 = cur.iter().enumerate().map(|(i, &j)| score[i][j]).sum();
            if total > best.1 {
                *best = (cur.clone(), total);
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(score, row + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    rec(score, 0, &mut vec![false; score.len()], &mut Vec::new(), &mut best);
    best
}

/// Noiseless series from coherence-controlled loadings and AR(1) factors.
pub fn noiseless(dims: &[usize], r: usize, delta: f64, t: usize, seed: u64) -> (TensorTimeSeries, CpFactorModel) {
    let loadings = gen_loadings(dims, r, delta, &mut stream_rng(seed, Stream::Loadings)).unwrap();
    let phis: Vec<f64> = (0..r).map(|i| 0.8 - 0.25 * i as f64).collect();
    let factors = gen_ar1_factors(&phis, t, &mut stream_rng(seed, Stream::Factors), 200).unwrap();
    let weights: Vec<f64> = (0..r).map(|i| 3.0 + (r - i) as f64).collect();
    let model = CpFactorModel::new(weights, loadings, Some(factors)).unwrap();
    let x = model.signal_series().unwrap();
    (x, model)
}

/// `‖a aᵀ − b bᵀ‖_S` for unit vectors as the largest singular value of the
/// difference, which for a rank-two symmetric matrix is `sqrt(‖D‖_F² / 2)`.
pub fn proj_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut fro = 0.0;
    for (i, ai) in a.iter().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            let d = ai * aj - b[i] * b[j];
            fro += d * d;
        }
    }
    (0.5 * fro).sqrt()
}

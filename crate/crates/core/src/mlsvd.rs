//! Matrix SVD helpers, multilinear SVD and the fixed-rank mode-1
//! factorization used to fill tiles.
//!
//! Singular vectors are sign-normalized: each left singular vector is scaled
//! so that its largest-magnitude entry is positive (first such entry on
//! ties), and the matching right singular vector is flipped with it. This
//! makes factorizations reproducible for distinct singular values.

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix, Shape};

/// Default relative rank threshold.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Thin SVD `m = u diag(s) vt` with `s` sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = (m.rows(), m.cols());
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: Matrix::zeros(rows, 0),
            singular_values: Vec::new(),
            vt: Matrix::zeros(0, cols),
        };
    }
    // Jacobi runs on the tall orientation; for a wide matrix the rotations
    // accumulate the left vectors instead of the right ones.
    let tall = rows >= cols;
    let a: Vec<Vec<f64>> = if tall {
        (0..cols).map(|c| m.column(c).to_vec()).collect()
    } else {
        (0..rows).map(|r| (0..cols).map(|c| m.get(r, c)).collect()).collect()
    };
    let (w, v) = one_sided_jacobi(a);
    let sigma: Vec<f64> = w.iter().map(|c| norm(c)).collect();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));
    let top = sigma[order[0]];

    // `w` spans the long side (length max(rows, cols)) scaled by sigma; `v`
    // is already orthonormal on the short side.
    let long = rows.max(cols);
    let mut long_vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut short_vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &j in &order {
        values.push(sigma[j]);
        short_vecs.push(v[j].clone());
        if sigma[j] > top * 1e-150 && sigma[j] > 0.0 {
            long_vecs.push(w[j].iter().map(|x| x / sigma[j]).collect());
        }
    }
    let long_vecs = complete_columns(long_vecs, long, k);

    let (u_cols, vt_rows) = if tall {
        (long_vecs, short_vecs)
    } else {
        (short_vecs, long_vecs)
    };
    let mut u = Matrix::zeros(rows, k);
    let mut vt = Matrix::zeros(k, cols);
    for j in 0..k {
        let sign = sign_of_dominant(&u_cols[j]);
        for r in 0..rows {
            u.set(r, j, sign * u_cols[j][r]);
        }
        for c in 0..cols {
            vt.set(j, c, sign * vt_rows[j][c]);
        }
    }
    Svd {
        u,
        singular_values: values,
        vt,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided (Hestenes) Jacobi on the columns `a` of a tall matrix.
/// Returns the mutually orthogonal columns `A V` and the columns of `V`.
fn one_sided_jacobi(mut a: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// +1 if the largest-magnitude entry (first on ties) is non-negative, else -1.
fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

fn rank_from_values(values: &[f64], tol: f64) -> usize {
    match values.first() {
        Some(&top) if top > 0.0 => values.iter().filter(|&&s| s > tol * top).count(),
        _ => 0,
    }
}

/// Number of singular values strictly above `tol * sigma_1`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> usize {
    rank_from_values(&svd(m).singular_values, tol)
}

/// Rank of the mode-`mode` unfolding.
pub fn mode_n_rank(t: &DenseTensor, mode: usize, tol: f64) -> Result<usize> {
    Ok(numerical_rank(&t.unfold(mode)?, tol))
}

/// `input = right x_1 left` with orthonormal `left`.
#[derive(Debug, Clone)]
pub struct Mode1Factorization {
    /// `I_1 x rank`, orthonormal columns.
    pub left: Matrix,
    /// `rank x I_2 x ... x I_N`; carries the singular values.
    pub right: DenseTensor,
    pub rank: usize,
    /// Rank of the mode-1 unfolding before the budget was applied.
    pub numerical_rank: usize,
}

impl Mode1Factorization {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.right.mode_n_product(&self.left, 0)
    }
}

/// Factorizes `t` through its mode-1 unfolding, keeping at most
/// `rank_budget` components. Returns `Ok(None)` for a zero tensor.
pub fn mode1_factorize(
    t: &DenseTensor,
    rank_budget: usize,
    tol: f64,
) -> Result<Option<Mode1Factorization>> {
    if rank_budget == 0 {
        return Err(Error::Argument("rank budget must be at least 1".into()));
    }
    if t.order() == 0 {
        return Err(Error::Argument("mode-1 factorization needs order >= 1".into()));
    }
    let unfolded = t.unfold(0)?;
    let dec = svd(&unfolded);
    let numerical = rank_from_values(&dec.singular_values, tol);
    if numerical == 0 {
        return Ok(None);
    }
    let rank = numerical.min(rank_budget);
    let rows = unfolded.rows();
    let cols = unfolded.cols();
    let left = Matrix::from_fn(rows, rank, |r, c| dec.u.get(r, c));
    let scaled = Matrix::from_fn(rank, cols, |r, c| dec.singular_values[r] * dec.vt.get(r, c));
    let mut dims = t.dims().to_vec();
    dims[0] = rank;
    let right = DenseTensor::fold(&scaled, Shape::new(dims)?, 0)?;
    Ok(Some(Mode1Factorization {
        left,
        right,
        rank,
        numerical_rank: numerical,
    }))
}

/// `t = core x_1 U1 x_2 U2 ... x_N UN` with square orthonormal factors.
#[derive(Debug, Clone)]
pub struct MlsvdResult {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
    /// Per mode, `I_n` values in descending order (zero-padded).
    pub mode_singular_values: Vec<Vec<f64>>,
    pub mode_ranks: Vec<usize>,
}

impl MlsvdResult {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.factors
            .iter()
            .enumerate()
            .try_fold(self.core.clone(), |acc, (mode, u)| acc.mode_n_product(u, mode))
    }
}

pub fn mlsvd(t: &DenseTensor, tol: f64) -> Result<MlsvdResult> {
    if t.order() == 0 {
        return Err(Error::Argument("MLSVD needs a tensor of order >= 1".into()));
    }
    let mut factors = Vec::with_capacity(t.order());
    let mut values = Vec::with_capacity(t.order());
    let mut ranks = Vec::with_capacity(t.order());
    for mode in 0..t.order() {
        let dec = svd(&t.unfold(mode)?);
        let dim = t.dims()[mode];
        let mut s = dec.singular_values.clone();
        s.resize(dim, 0.0);
        ranks.push(rank_from_values(&s, tol));
        values.push(s);
        factors.push(complete_basis(&dec.u, dim));
    }
    let core = factors
        .iter()
        .enumerate()
        .try_fold(t.clone(), |acc, (mode, u)| acc.mode_n_product(&u.transpose(), mode))?;
    Ok(MlsvdResult {
        core,
        factors,
        mode_singular_values: values,
        mode_ranks: ranks,
    })
}

/// Extends orthonormal columns to a `dim x dim` orthonormal basis.
fn complete_basis(q: &Matrix, dim: usize) -> Matrix {
    let cols = (0..q.cols()).map(|c| q.column(c).to_vec()).collect();
    let cols = complete_columns(cols, dim, dim);
    Matrix::from_fn(dim, cols.len(), |r, c| cols[c][r])
}

/// Appends unit vectors, orthogonalized by Gram-Schmidt against the
/// standard basis, until there are `want` orthonormal columns of length `dim`.
fn complete_columns(mut cols: Vec<Vec<f64>>, dim: usize, want: usize) -> Vec<Vec<f64>> {
    let mut e = 0;
    while cols.len() < want && e < dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let d = dot(c, &v);
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= d * y;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            let sign = sign_of_dominant(&v);
            cols.push(v.into_iter().map(|x| sign * x / n).collect());
        }
    }
    cols
}

//! Brute-force reference implementations and random problem generators
//! shared by the integration tests. Nothing here calls the indexing,
//! unfolding or contraction code under test.
#![allow(dead_code)]

use polytile::demand::{BasisFn, BasisSuite, Coefficient, ProblemSpec};
use polytile::tensor::{DenseTensor, Matrix, Shape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Offset of a 0-based multi-index, first mode fastest.
pub fn offset(idx: &[usize], dims: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for (i, d) in idx.iter().zip(dims) {
        off += i * stride;
        stride *= d;
    }
    off
}

/// All multi-indices of `dims`, first mode fastest.
pub fn all_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0; dims.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for (c, &d) in cur.iter_mut().zip(dims) {
            *c += 1;
            if *c < d {
                break;
            }
            *c = 0;
        }
    }
    out
}

pub fn at(t: &DenseTensor, idx: &[usize]) -> f64 {
    t.data()[offset(idx, t.dims())]
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> DenseTensor {
    let shape = Shape::new(dims.to_vec()).unwrap();
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseTensor::new(shape, data).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `Y(i_1..a..i_N) = sum_j A(a, j) X(i_1..j..i_N)`.
pub fn mode_n_product(x: &DenseTensor, a: &Matrix, mode: usize) -> Vec<f64> {
    let mut out_dims = x.dims().to_vec();
    out_dims[mode] = a.rows();
    let mut out = vec![0.0; out_dims.iter().product()];
    for idx in all_indices(&out_dims) {
        let mut acc = 0.0;
        for j in 0..x.dims()[mode] {
            let mut src = idx.clone();
            src[mode] = j;
            acc += a.get(idx[mode], j) * at(x, &src);
        }
        out[offset(&idx, &out_dims)] = acc;
    }
    out
}

/// Single-mode contraction; result modes are x's remaining then y's remaining.
pub fn contract(x: &DenseTensor, n: usize, y: &DenseTensor, m: usize) -> Vec<f64> {
    let xd: Vec<usize> = (0..x.order()).filter(|&a| a != n).map(|a| x.dims()[a]).collect();
    let yd: Vec<usize> = (0..y.order()).filter(|&a| a != m).map(|a| y.dims()[a]).collect();
    let out_dims: Vec<usize> = xd.iter().chain(&yd).copied().collect();
    let mut out = vec![0.0; out_dims.iter().product()];
    for idx in all_indices(&out_dims) {
        let (xi, yi) = idx.split_at(xd.len());
        let mut acc = 0.0;
        for s in 0..x.dims()[n] {
            let mut xf = xi.to_vec();
            xf.insert(n, s);
            let mut yf = yi.to_vec();
            yf.insert(m, s);
            acc += at(x, &xf) * at(y, &yf);
        }
        out[offset(&idx, &out_dims)] = acc;
    }
    out
}

/// Contraction of the trailing `b` modes of `x` with the trailing `b` modes of `y`.
pub fn contract_trailing(x: &DenseTensor, y: &DenseTensor, b: usize) -> Vec<f64> {
    let xa = &x.dims()[..x.order() - b];
    let ya = &y.dims()[..y.order() - b];
    let shared = &x.dims()[x.order() - b..];
    let out_dims: Vec<usize> = xa.iter().chain(ya).copied().collect();
    let mut out = vec![0.0; out_dims.iter().product()];
    for idx in all_indices(&out_dims) {
        let (xi, yi) = idx.split_at(xa.len());
        let mut acc = 0.0;
        for s in all_indices(shared) {
            let xf: Vec<usize> = xi.iter().chain(&s).copied().collect();
            let yf: Vec<usize> = yi.iter().chain(&s).copied().collect();
            acc += at(x, &xf) * at(y, &yf);
        }
        out[offset(&idx, &out_dims)] = acc;
    }
    out
}

/// `z_n = sum_p E(n, p) W(p)`.
pub fn encode(e: &DenseTensor, w: &DenseTensor) -> Vec<f64> {
    let n = e.dims()[0];
    (0..n)
        .map(|s| {
            all_indices(w.dims())
                .iter()
                .map(|p| {
                    let mut idx = vec![s];
                    idx.extend_from_slice(p);
                    at(e, &idx) * at(w, p)
                })
                .sum()
        })
        .collect()
}

/// `f_k = sum_n D(k, n) z_n`.
pub fn decode(d: &Matrix, z: &[f64]) -> Vec<f64> {
    (0..d.rows())
        .map(|k| (0..d.cols()).map(|n| d.get(k, n) * z[n]).sum())
        .collect()
}

/// Largest elementwise gap relative to the largest reference magnitude.
pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Number of positions with a positive exponent under the default grids.
pub fn active_count(index: &[usize]) -> usize {
    index.iter().filter(|&&p| p > 0).count()
}

pub struct RandomProblem {
    pub spec: ProblemSpec,
    pub basis: BasisSuite,
}

/// Parameters within the given limits; coefficients on a random subset of
/// the Gamma-admissible entries, all positive so that direct evaluation has
/// no cancellation.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    max_k: usize,
    max_l: usize,
    max_p: usize,
    density: f64,
) -> RandomProblem {
    let k = rng.gen_range(1..=max_k);
    let l = rng.gen_range(1..=max_l);
    let p: Vec<usize> = (0..l).map(|_| rng.gen_range(1..=max_p)).collect();
    let lam: Vec<usize> = p.iter().map(|&x| rng.gen_range(1..=x)).collect();
    let gamma = rng.gen_range(1..=l);
    let delta = rng.gen_range(1..=k);
    let mut coefs = Vec::new();
    for user in 0..k {
        for index in all_indices(&p) {
            if active_count(&index) <= gamma && rng.gen_bool(density) {
                coefs.push(Coefficient { user, index, value: rng.gen_range(0.1..1.0) });
            }
        }
    }
    let spec = ProblemSpec::new(k, p, lam, gamma, delta)
        .unwrap()
        .with_coefficients(coefs)
        .unwrap();
    let funcs = (0..l).map(|_| random_basis_fn(rng)).collect();
    // inputs in (1.2, 1.5): every builtin is defined and positive there
    let instances = rng.gen_range(1..=2);
    let input = (0..instances).map(|_| rng.gen_range(1.2..1.5)).collect();
    let basis = BasisSuite::scalar(funcs, input).unwrap();
    RandomProblem { spec, basis }
}

pub fn random_basis_fn(rng: &mut ChaCha8Rng) -> BasisFn {
    match rng.gen_range(0..8) {
        0 => BasisFn::Exp,
        1 => BasisFn::Log,
        2 => BasisFn::Sqrt,
        3 => BasisFn::Cos,
        4 => BasisFn::Sin,
        5 => BasisFn::Identity,
        6 => BasisFn::Square,
        _ => BasisFn::Affine(rng.gen_range(0.5..2.0), rng.gen_range(0.0..1.0)),
    }
}

/// Size of a maximum matching in the bipartite graph `edges` (left, right),
/// i.e. the rank a generic matrix with this sparsity pattern attains.
pub fn structural_rank(edges: &[(usize, usize)]) -> usize {
    let left = edges.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let right = edges.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut adj = vec![Vec::new(); left];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    fn augment(a: usize, adj: &[Vec<usize>], seen: &mut [bool], matched: &mut [Option<usize>]) -> bool {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                if matched[b].is_none_or(|other| augment(other, adj, seen, matched)) {
                    matched[b] = Some(a);
                    return true;
                }
            }
        }
        false
    }
    let mut matched = vec![None; right];
    (0..left).filter(|&a| augment(a, &adj, &mut vec![false; right], &mut matched)).count()
}

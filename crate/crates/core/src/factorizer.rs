//! Assembles `D` and `E` from per-tile mode-1 factorizations and audits the
//! result against the problem constraints.

use std::fmt;
use std::ops::Range;

use crate::demand::{normalized_constraints, DemandTensor, NormalizedConstraints, ProblemSpec};
use crate::error::{Error, Result};
use crate::mlsvd::mode1_factorize;
use crate::protocol::power_cost;
use crate::support::Support;
use crate::tensor::{DenseTensor, Matrix, Shape};
use crate::tiling::{support_containment_check, TileClass, TilePlan};

/// Denominators below this use the absolute residual.
pub const RESIDUAL_FLOOR: f64 = 1e-300;

/// Where one owned tile landed in the factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile: usize,
    pub class: TileClass,
    pub user_block: usize,
    pub windows: Vec<usize>,
    pub active: Vec<usize>,
    /// Server columns of `D` (and slices of `E`) reserved for this tile.
    pub servers: Range<usize>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// `K x N` decoding matrix.
    pub d: Matrix,
    /// `N x P_1 x ... x P_L` encoding tensor.
    pub e: DenseTensor,
    pub tiles: Vec<TileRecord>,
    pub tolerance: f64,
}

impl Factorization {
    pub fn new(d: Matrix, e: DenseTensor, tiles: Vec<TileRecord>, tolerance: f64) -> Result<Self> {
        if e.order() == 0 || e.dims()[0] != d.cols() {
            return Err(Error::shape(format!(
                "D is {}x{} but E has shape {}",
                d.rows(),
                d.cols(),
                e.shape()
            )));
        }
        Ok(Factorization { d, e, tiles, tolerance })
    }

    pub fn num_servers(&self) -> usize {
        self.d.cols()
    }

    /// `E x_1 D`.
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.e.mode_n_product(&self.d, 0)
    }

    fn check_against(&self, spec: &ProblemSpec) -> Result<()> {
        let mut expected = vec![self.num_servers()];
        expected.extend_from_slice(spec.mode_sizes());
        if self.d.rows() != spec.num_users() || self.e.dims() != expected.as_slice() {
            return Err(Error::shape(format!(
                "factorization D {}x{}, E {} does not fit K = {}, P = {:?}",
                self.d.rows(),
                self.d.cols(),
                self.e.shape(),
                spec.num_users(),
                spec.mode_sizes()
            )));
        }
        Ok(())
    }
}

/// Factorizes every owned tile of `plan` and places the blocks.
///
/// Tile `t` gets the server columns right after those of the tiles before it;
/// its orthonormal left factor fills the rows of its owned users, and the
/// right factor (carrying the singular values) fills its owned monomials.
pub fn factorize(demand: &DemandTensor, plan: &TilePlan, tol: f64) -> Result<Factorization> {
    let f = demand.tensor();
    if f.shape() != plan.mask.shape() {
        return Err(Error::shape(format!(
            "demand shape {} does not match plan shape {}",
            f.shape(),
            plan.mask.shape()
        )));
    }
    let users = f.dims()[0];
    let monomials = Shape::new(f.dims()[1..].to_vec())?;

    struct Block {
        cols: Vec<usize>,
        rows: Vec<usize>,
        left: Matrix,
        right: Vec<f64>,
    }
    let mut blocks = Vec::new();
    let mut tiles = Vec::new();
    let mut n = 0usize;
    for tile in plan.owned_tiles() {
        let crop = Matrix::from_fn(tile.owned_cols.len(), tile.owned_rows.len(), |a, b| {
            let lin = tile.owned_cols[a] + users * tile.owned_rows[b];
            if tile.owned.binary_search(&lin).is_ok() {
                f.data()[lin]
            } else {
                0.0
            }
        });
        let Some(fact) = mode1_factorize(&crop.into_tensor(), tile.rank_budget, tol)? else {
            continue;
        };
        if fact.numerical_rank > tile.rank_budget {
            return Err(Error::Infeasible {
                tile: tile.id,
                rank: fact.numerical_rank,
                budget: tile.rank_budget,
            });
        }
        tiles.push(TileRecord {
            tile: tile.id,
            class: tile.class,
            user_block: tile.user_block,
            windows: tile.windows.clone(),
            active: tile.active.clone(),
            servers: n..n + fact.rank,
            rank: fact.rank,
        });
        n += fact.rank;
        blocks.push(Block {
            cols: tile.owned_cols.clone(),
            rows: tile.owned_rows.clone(),
            left: fact.left,
            right: fact.right.into_data(),
        });
    }

    let mut d = Matrix::zeros(users, n);
    let mut e_data = vec![0.0; n * monomials.len()];
    for (block, rec) in blocks.iter().zip(&tiles) {
        let r = rec.rank;
        for (s, server) in rec.servers.clone().enumerate() {
            for (a, &k) in block.cols.iter().enumerate() {
                d.set(k, server, block.left.get(a, s));
            }
            for (b, &row) in block.rows.iter().enumerate() {
                e_data[server + n * row] = block.right[s + r * b];
            }
        }
    }
    let mut dims = vec![n];
    dims.extend_from_slice(monomials.dims());
    let e = DenseTensor::new(Shape::new(dims)?, e_data)?;
    Factorization::new(d, e, tiles, tol)
}

/// `||E x_1 D - F|| / ||F||`, or the absolute residual when `||F||` is
/// below [`RESIDUAL_FLOOR`].
pub fn verify_reconstruction(fact: &Factorization, demand: &DemandTensor) -> Result<f64> {
    let recon = fact.reconstruct()?;
    let diff = recon.sub(demand.tensor())?.frobenius_norm();
    let norm = demand.tensor().frobenius_norm();
    Ok(if norm < RESIDUAL_FLOOR { diff } else { diff / norm })
}

/// What server `n` computes and whom it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerAssignment {
    pub server: usize,
    /// Subfunctions with a positive exponent somewhere in the support.
    pub subfunctions: Vec<usize>,
    /// Support positions of `E(n, ...)`.
    pub exponent_vectors: Vec<Vec<usize>>,
    /// Support of `D(:, n)`.
    pub users: Vec<usize>,
}

pub fn extract_assignments(fact: &Factorization, spec: &ProblemSpec) -> Result<Vec<ServerAssignment>> {
    fact.check_against(spec)?;
    let n = fact.num_servers();
    let monomials = spec.monomial_shape();
    Ok((0..n)
        .map(|s| {
            let exponent_vectors: Vec<Vec<usize>> = (0..monomials.len())
                .filter(|&r| fact.e.data()[s + n * r] != 0.0)
                .map(|r| monomials.multi_index(r))
                .collect();
            let mut active = vec![false; spec.num_subfunctions()];
            for p in &exponent_vectors {
                for m in spec.active_modes(p) {
                    active[m] = true;
                }
            }
            ServerAssignment {
                server: s,
                subfunctions: (0..active.len()).filter(|&m| active[m]).collect(),
                exponent_vectors,
                users: (0..fact.d.rows()).filter(|&k| fact.d.get(k, s) != 0.0).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    Computation { server: usize, count: usize, limit: usize },
    Communication { server: usize, count: usize, limit: usize },
    /// Support positions of one mode spread over more than Lambda.
    Range { server: usize, mode: usize, span: usize, limit: usize },
    /// Support positions of one mode fall into different anchored windows.
    Window { server: usize, mode: usize, first: usize, last: usize, window: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Violation::Computation { server, count, limit } => write!(
                f,
                "server {}: computes {count} subfunctions, Gamma = {limit}",
                server + 1
            ),
            Violation::Communication { server, count, limit } => write!(
                f,
                "server {}: serves {count} users, Delta = {limit}",
                server + 1
            ),
            Violation::Range { server, mode, span, limit } => write!(
                f,
                "server {}: mode {} spans {span} positions, Lambda = {limit}",
                server + 1,
                mode + 1
            ),
            Violation::Window { server, mode, first, last, window } => write!(
                f,
                "server {}: mode {} positions {}..{} cross a window boundary (Lambda = {window})",
                server + 1,
                mode + 1,
                first + 1,
                last + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub num_servers: usize,
    pub gamma_achieved: usize,
    pub delta_achieved: usize,
    /// Largest per-server position span, per mode.
    pub lambda_achieved: Vec<usize>,
    pub normalized: NormalizedConstraints,
    /// `K / N`; `None` when no server is needed.
    pub rate: Option<f64>,
    /// Multiplications per server for its power windows.
    pub multiplication_costs: Vec<u64>,
}

/// Multiplications server `a` spends: for each subfunction it computes, one
/// windowed repeated-squaring pass up to its largest exponent.
pub fn multiplication_cost(a: &ServerAssignment, spec: &ProblemSpec) -> u64 {
    a.subfunctions
        .iter()
        .map(|&m| {
            let top = a
                .exponent_vectors
                .iter()
                .map(|p| spec.exponent(m, p[m]))
                .max()
                .unwrap_or(0);
            power_cost(u64::from(top), spec.windows()[m] as u64)
        })
        .sum()
}

/// Audits computation, communication and window constraints server by server.
pub fn verify_constraints(
    fact: &Factorization,
    spec: &ProblemSpec,
) -> std::result::Result<CostReport, Vec<Violation>> {
    let assignments =
        extract_assignments(fact, spec).map_err(|e| vec![Violation::Shape(e.to_string())])?;
    let l = spec.num_subfunctions();
    let mut violations = Vec::new();
    let mut lambda_achieved = vec![0usize; l];
    for a in &assignments {
        let s = a.server;
        if a.subfunctions.len() > spec.gamma() {
            violations.push(Violation::Computation {
                server: s,
                count: a.subfunctions.len(),
                limit: spec.gamma(),
            });
        }
        if a.users.len() > spec.delta() {
            violations.push(Violation::Communication {
                server: s,
                count: a.users.len(),
                limit: spec.delta(),
            });
        }
        if a.exponent_vectors.is_empty() {
            continue;
        }
        for m in 0..l {
            let lo = a.exponent_vectors.iter().map(|p| p[m]).min().unwrap_or(0);
            let hi = a.exponent_vectors.iter().map(|p| p[m]).max().unwrap_or(0);
            let span = hi - lo + 1;
            let window = spec.windows()[m];
            lambda_achieved[m] = lambda_achieved[m].max(span);
            if span > window {
                violations.push(Violation::Range { server: s, mode: m, span, limit: window });
            }
            if lo / window != hi / window {
                violations.push(Violation::Window {
                    server: s,
                    mode: m,
                    first: lo,
                    last: hi,
                    window,
                });
            }
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let n = fact.num_servers();
    Ok(CostReport {
        num_servers: n,
        gamma_achieved: assignments.iter().map(|a| a.subfunctions.len()).max().unwrap_or(0),
        delta_achieved: assignments.iter().map(|a| a.users.len()).max().unwrap_or(0),
        lambda_achieved,
        normalized: normalized_constraints(spec),
        rate: (n > 0).then(|| spec.num_users() as f64 / n as f64),
        multiplication_costs: assignments.iter().map(|a| multiplication_cost(a, spec)).collect(),
    })
}

/// Whether the rank-one contribution supports of `fact` cover `supp(F)`.
pub fn support_containment_holds(fact: &Factorization, demand: &DemandTensor) -> Result<bool> {
    let d = fact.d.clone().into_tensor();
    support_containment_check(&Support::of(&d), &Support::of(&fact.e), &demand.support())
}

/// Users x monomials view of the demand tensor.
pub fn linearize(demand: &DemandTensor) -> Result<Matrix> {
    demand.tensor().unfold(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCount {
    pub value: f64,
    /// False when the formula does not produce a whole number.
    pub integral: bool,
}

/// Server count of the linearized approach,
/// `(K/Delta) (L'/Gamma) min(Delta, Gamma) / T`.
pub fn baseline_server_count(
    k: usize,
    delta: usize,
    l_prime: usize,
    gamma: usize,
    t: usize,
) -> Result<BaselineCount> {
    if [k, delta, l_prime, gamma, t].contains(&0) {
        return Err(Error::Argument("baseline parameters must all be positive".into()));
    }
    let num = (k as u128) * (l_prime as u128) * (delta.min(gamma) as u128);
    let den = (delta as u128) * (gamma as u128) * (t as u128);
    Ok(BaselineCount {
        value: num as f64 / den as f64,
        integral: num.is_multiple_of(den),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{build_demand_tensor, Coefficient};
    use crate::tiling::{apply_ownership, bound_constructive, design_tiles};

    fn pipeline(spec: &ProblemSpec) -> (DemandTensor, TilePlan, Factorization) {
        let demand = build_demand_tensor(spec).unwrap();
        let plan = apply_ownership(&design_tiles(spec).unwrap(), &demand.support()).unwrap();
        let fact = factorize(&demand, &plan, 1e-10).unwrap();
        (demand, plan, fact)
    }

    fn dense_outer_product() -> ProblemSpec {
        let mut coefs = Vec::new();
        let mut x = 0.37f64;
        for k in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    x = (x * 3.7 + 0.11).fract();
                    coefs.push(Coefficient { user: k, index: vec![a, b], value: x - 0.5 });
                }
            }
        }
        ProblemSpec::new(4, vec![4, 4], vec![2, 2], 2, 2)
            .unwrap()
            .with_coefficients(coefs)
            .unwrap()
    }

    #[test]
    fn outer_product_layout() {
        let spec = dense_outer_product();
        let (demand, plan, fact) = pipeline(&spec);
        assert_eq!(fact.num_servers(), 16);
        assert_eq!(bound_constructive(&plan), 16);
        assert!(verify_reconstruction(&fact, &demand).unwrap() <= 1e-10);
        let report = verify_constraints(&fact, &spec).unwrap();
        assert_eq!((report.gamma_achieved, report.delta_achieved), (2, 2));
        assert_eq!(report.lambda_achieved, vec![2, 2]);
        assert_eq!(report.rate, Some(0.25));
        let a = extract_assignments(&fact, &spec).unwrap();
        assert_eq!(a[0].users, vec![0, 1]);
        assert_eq!(a[15].users, vec![2, 3]);
        // first 8 servers serve the first user block only
        for s in 0..8 {
            assert!(fact.d.get(2, s) == 0.0 && fact.d.get(3, s) == 0.0);
        }
        assert!(support_containment_holds(&fact, &demand).unwrap());
    }

    #[test]
    fn zero_demand_needs_no_servers() {
        let spec = ProblemSpec::new(4, vec![4, 4], vec![2, 2], 2, 2).unwrap();
        let (demand, _, fact) = pipeline(&spec);
        assert_eq!(fact.num_servers(), 0);
        assert_eq!(fact.e.dims(), &[0, 4, 4]);
        assert_eq!(verify_reconstruction(&fact, &demand).unwrap(), 0.0);
        assert_eq!(verify_constraints(&fact, &spec).unwrap().rate, None);
    }

    #[test]
    fn residual_examples() {
        let spec = dense_outer_product();
        let (demand, _, mut fact) = pipeline(&spec);
        let scaled = DemandTensor::from_tensor(demand.tensor().scaled(10.0));
        assert!((verify_reconstruction(&fact, &scaled).unwrap() - 0.9).abs() < 1e-12);
        fact.d = Matrix::zeros(4, 16);
        assert!((verify_reconstruction(&fact, &demand).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn communication_violation_is_reported() {
        let spec = ProblemSpec::new(3, vec![2], vec![2], 1, 2).unwrap();
        let d = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let e = DenseTensor::new(Shape::new(vec![1, 2]).unwrap(), vec![1.0, 0.0]).unwrap();
        let fact = Factorization::new(d, e, vec![], 1e-10).unwrap();
        let v = verify_constraints(&fact, &spec).unwrap_err();
        assert_eq!(v, vec![Violation::Communication { server: 0, count: 3, limit: 2 }]);
    }

    #[test]
    fn anchored_window_violation() {
        let spec = ProblemSpec::new(1, vec![6], vec![2], 1, 1).unwrap();
        let d = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let e_at = |positions: &[usize]| {
            let mut data = vec![0.0; 6];
            for &p in positions {
                data[p] = 1.0;
            }
            DenseTensor::new(Shape::new(vec![1, 6]).unwrap(), data).unwrap()
        };
        // positions 2 and 3 (1-based): span 2 fits Lambda but straddles {1,2} | {3,4}
        let fact = Factorization::new(d.clone(), e_at(&[1, 2]), vec![], 1e-10).unwrap();
        let v = verify_constraints(&fact, &spec).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Window { mode: 0, first: 1, last: 2, .. }));
        // positions 2 and 5: both checks fail
        let fact = Factorization::new(d, e_at(&[1, 4]), vec![], 1e-10).unwrap();
        let v = verify_constraints(&fact, &spec).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::Range { span: 4, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Window { .. })));
    }

    #[test]
    fn linearize_outer_product() {
        let spec = dense_outer_product();
        let demand = build_demand_tensor(&spec).unwrap();
        let m = linearize(&demand).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 16));
        let col = spec.monomial_shape().linear_index(&[2, 3]).unwrap();
        assert_eq!(m.get(1, col), demand.tensor()[&[1, 2, 3][..]]);
    }

    #[test]
    fn baseline_examples() {
        let b = baseline_server_count(4, 2, 16, 2, 1).unwrap();
        assert_eq!((b.value, b.integral), (32.0, true));
        assert_eq!(baseline_server_count(2, 1, 96, 3, 1).unwrap().value, 64.0);
        assert_eq!(baseline_server_count(3, 1, 5, 1, 1).unwrap().value, 15.0);
        assert!(!baseline_server_count(3, 2, 5, 2, 1).unwrap().integral);
    }
}

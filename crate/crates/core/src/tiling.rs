//! Tile design, zero-forcing ownership and server-count bounds.
//!
//! A tile is a block of the demand tensor: a contiguous block of at most
//! Delta users times, for each mode, either the pinned position 0 (inactive
//! modes) or one Lambda-window of positions (active modes, exactly Gamma of
//! them). Tiles from different active sets overlap on low positions; the
//! ownership pass hands every demand entry to the first tile that reaches it.

use std::fmt;
use std::ops::Range;

use crate::demand::ProblemSpec;
use crate::error::{Error, Result};
use crate::support::Support;
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TileClass {
    /// Full user block, every active window full.
    C1,
    /// Residual user block, every active window full.
    C2,
    /// Full user block, at least one residual window.
    C3,
    /// Residual user block, at least one residual window.
    C4,
}

impl TileClass {
    pub fn index(self) -> usize {
        match self {
            TileClass::C1 => 0,
            TileClass::C2 => 1,
            TileClass::C3 => 2,
            TileClass::C4 => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "C1" => Some(TileClass::C1),
            "C2" => Some(TileClass::C2),
            "C3" => Some(TileClass::C3),
            "C4" => Some(TileClass::C4),
            _ => None,
        }
    }
}

impl fmt::Display for TileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    /// Position in the global tile order.
    pub id: usize,
    pub class: TileClass,
    /// User block index `i`; the block is `cols`.
    pub user_block: usize,
    /// Window index per mode; 0 for inactive modes.
    pub windows: Vec<usize>,
    /// Active modes, ascending.
    pub active: Vec<usize>,
    pub cols: Range<usize>,
    /// Declared positions per mode: `0..1` when inactive, the window otherwise.
    pub row_ranges: Vec<Range<usize>>,
    /// Owned entries as linear offsets into the `K x P_1 x ... x P_L` tensor.
    pub owned: Vec<usize>,
    /// Users with at least one owned entry, ascending.
    pub owned_cols: Vec<usize>,
    /// Monomial positions (linear over `P_1 x ... x P_L`) with at least one
    /// owned entry, ascending.
    pub owned_rows: Vec<usize>,
    pub rank_budget: usize,
}

impl Tile {
    pub fn num_declared_rows(&self) -> usize {
        self.row_ranges.iter().map(|r| r.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.owned.is_empty()
    }

    /// Declared monomial positions, linear over `monomial_shape`, ascending.
    pub fn declared_rows(&self, monomial_shape: &Shape) -> Vec<usize> {
        let strides = monomial_shape.strides();
        let mut rows = vec![0usize];
        for (range, stride) in self.row_ranges.iter().zip(strides) {
            rows = range
                .clone()
                .flat_map(|p| rows.iter().map(move |r| r + p * stride))
                .collect();
        }
        rows.sort_unstable();
        rows
    }

    /// Declared entries as linear offsets into the demand tensor.
    pub fn declared_support(&self, demand_shape: &Shape) -> Result<Support> {
        let users = demand_shape.dims()[0];
        let monomials = Shape::new(demand_shape.dims()[1..].to_vec())?;
        let mut s = Support::empty(demand_shape.clone());
        for r in self.declared_rows(&monomials) {
            for k in self.cols.clone() {
                s.set(k + users * r, true);
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub tiles: Vec<Tile>,
    /// Union of the owned supports; all zero before ownership.
    pub mask: Support,
    pub class_counts: [usize; 4],
}

impl TilePlan {
    pub fn owned_tiles(&self) -> impl Iterator<Item = &Tile> {
        self.tiles.iter().filter(|t| !t.is_empty())
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// All `Gamma`-subsets of `0..L`, lexicographic.
pub fn enumerate_active_sets(l: usize, gamma: usize) -> Result<Vec<Vec<usize>>> {
    if gamma > l {
        return Err(Error::Argument(format!("Gamma = {gamma} exceeds L = {l}")));
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..gamma).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..gamma).rev().find(|&i| cur[i] < l - gamma + i) else {
            return Ok(out);
        };
        cur[i] += 1;
        for m in i + 1..gamma {
            cur[m] = cur[m - 1] + 1;
        }
    }
}

/// Outer placement of a user column and a monomial slice:
/// entry `(k, p)` is set iff `col[k]` and `slice[p]` are.
pub fn rank_one_support(col: &[bool], slice: &Support) -> Result<Support> {
    let mut dims = vec![col.len()];
    dims.extend_from_slice(slice.shape().dims());
    let shape = Shape::new(dims)?;
    let k = col.len();
    let mut bits = vec![false; shape.len()];
    for r in slice.positions() {
        for (u, &c) in col.iter().enumerate() {
            bits[u + k * r] = c;
        }
    }
    Support::from_bits(shape, bits)
}

/// Declares every tile of the construction, ordered lexicographically by
/// `(user block, window vector, active set)`. Nothing is owned yet.
pub fn design_tiles(spec: &ProblemSpec) -> Result<TilePlan> {
    let (k, delta) = (spec.num_users(), spec.delta());
    let p = spec.mode_sizes();
    let lam = spec.windows();
    let sets = enumerate_active_sets(spec.num_subfunctions(), spec.gamma())?;

    let mut tiles = Vec::new();
    for i in 0..k.div_ceil(delta) {
        let cols = i * delta..((i + 1) * delta).min(k);
        for q in &sets {
            let counts: Vec<usize> = q.iter().map(|&m| p[m].div_ceil(lam[m])).collect();
            let mut js = vec![0usize; q.len()];
            loop {
                let mut windows = vec![0usize; p.len()];
                let mut row_ranges = vec![0..1; p.len()];
                let mut full_windows = true;
                for (&m, &j) in q.iter().zip(&js) {
                    windows[m] = j;
                    row_ranges[m] = j * lam[m]..((j + 1) * lam[m]).min(p[m]);
                    full_windows &= row_ranges[m].len() == lam[m];
                }
                let class = match (cols.len() == delta, full_windows) {
                    (true, true) => TileClass::C1,
                    (false, true) => TileClass::C2,
                    (true, false) => TileClass::C3,
                    (false, false) => TileClass::C4,
                };
                tiles.push(Tile {
                    id: 0,
                    class,
                    user_block: i,
                    windows,
                    active: q.clone(),
                    cols: cols.clone(),
                    row_ranges,
                    owned: Vec::new(),
                    owned_cols: Vec::new(),
                    owned_rows: Vec::new(),
                    rank_budget: 0,
                });
                if !next_in_box(&mut js, &counts) {
                    break;
                }
            }
        }
    }
    tiles.sort_by(|a, b| {
        (a.user_block, &a.windows, &a.active).cmp(&(b.user_block, &b.windows, &b.active))
    });
    let mut class_counts = [0usize; 4];
    for (id, t) in tiles.iter_mut().enumerate() {
        t.id = id;
        class_counts[t.class.index()] += 1;
    }
    Ok(TilePlan {
        tiles,
        mask: Support::empty(spec.demand_shape()),
        class_counts,
    })
}

/// Odometer step over `0..counts[0] x 0..counts[1] x ...`, first digit fastest.
fn next_in_box(digits: &mut [usize], counts: &[usize]) -> bool {
    for (d, &c) in digits.iter_mut().zip(counts) {
        *d += 1;
        if *d < c {
            return true;
        }
        *d = 0;
    }
    false
}

/// Tile counts per class from the closed-form expressions.
///
/// For each active set Q, `prod_Q floor(P/Lambda)` tiles have only full
/// windows and `prod_Q ceil(P/Lambda) - prod_Q floor(P/Lambda)` have at least
/// one residual window; a Q without a non-divisible mode contributes nothing
/// to the residual-window classes.
pub fn class_cardinalities(spec: &ProblemSpec) -> Result<[u64; 4]> {
    let (k, delta) = (spec.num_users() as u64, spec.delta() as u64);
    let full_blocks = k / delta;
    let residual_block = u64::from(k % delta != 0);
    let (mut full, mut partial) = (0u64, 0u64);
    for q in enumerate_active_sets(spec.num_subfunctions(), spec.gamma())? {
        let (f, c) = q.iter().fold((1u64, 1u64), |(f, c), &m| {
            let (p, l) = (spec.mode_sizes()[m] as u64, spec.windows()[m] as u64);
            (f * (p / l), c * p.div_ceil(l))
        });
        full += f;
        partial += c - f;
    }
    Ok([
        full_blocks * full,
        residual_block * full,
        full_blocks * partial,
        residual_block * partial,
    ])
}

/// Runs the zero-forcing pass: each tile, in order, owns the entries of
/// `support` it declares that no earlier tile owns. Tiles that end up with
/// nothing keep a zero rank budget.
pub fn apply_ownership(plan: &TilePlan, support: &Support) -> Result<TilePlan> {
    let shape = plan.mask.shape().clone();
    if support.shape() != &shape {
        return Err(Error::shape(format!(
            "support shape {} does not match tile plan shape {shape}",
            support.shape()
        )));
    }
    let users = shape.dims()[0];
    let monomials = Shape::new(shape.dims()[1..].to_vec())?;
    let mut mask = Support::empty(shape.clone());
    let mut tiles = plan.tiles.clone();
    for tile in &mut tiles {
        let mut owned = Vec::new();
        let mut cols = vec![false; users];
        let mut rows = Vec::new();
        for r in tile.declared_rows(&monomials) {
            let mut row_used = false;
            for k in tile.cols.clone() {
                let lin = k + users * r;
                if support.get(lin) && !mask.get(lin) {
                    mask.set(lin, true);
                    owned.push(lin);
                    cols[k] = true;
                    row_used = true;
                }
            }
            if row_used {
                rows.push(r);
            }
        }
        owned.sort_unstable();
        tile.owned = owned;
        tile.owned_cols = (0..users).filter(|&k| cols[k]).collect();
        tile.owned_rows = rows;
        tile.rank_budget = rank_budget(tile);
    }
    let orphans: Vec<Vec<usize>> = support
        .positions()
        .filter(|&lin| !mask.get(lin))
        .map(|lin| shape.multi_index(lin).into_iter().map(|i| i + 1).collect())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Coverage(orphans));
    }
    Ok(TilePlan {
        tiles,
        mask,
        class_counts: plan.class_counts,
    })
}

/// `min(|owned users|, |owned monomials|)`; zero for an empty tile.
pub fn rank_budget(tile: &Tile) -> usize {
    tile.owned_cols.len().min(tile.owned_rows.len())
}

/// Union of all declared tiles: every entry a Gamma-admissible demand may use.
pub fn worst_case_support(spec: &ProblemSpec) -> Result<Support> {
    let plan = design_tiles(spec)?;
    let shape = spec.demand_shape();
    let mut s = Support::empty(shape.clone());
    for t in &plan.tiles {
        s.union_with(&t.declared_support(&shape)?)?;
    }
    Ok(s)
}

/// Sum of the tile rank budgets of an owned plan.
pub fn bound_constructive(plan: &TilePlan) -> u64 {
    plan.tiles.iter().map(|t| t.rank_budget as u64).sum()
}

/// Closed-form server bound for uniform, divisible parameters:
/// `(K/Delta) * C(L, Gamma) * min(Delta, Lambda^Gamma) * (P/Lambda)^Gamma`.
pub fn bound_simplified(
    k: usize,
    delta: usize,
    l: usize,
    gamma: usize,
    p: usize,
    lambda: usize,
) -> Result<u64> {
    if delta == 0 || lambda == 0 || gamma == 0 || gamma > l || delta > k || lambda > p {
        return Err(Error::Argument(format!(
            "need 1 <= Delta <= K, 1 <= Gamma <= L, 1 <= Lambda <= P; got K={k} Delta={delta} L={l} Gamma={gamma} P={p} Lambda={lambda}"
        )));
    }
    if !k.is_multiple_of(delta) {
        return Err(Error::Precondition(format!("Delta = {delta} does not divide K = {k}")));
    }
    if !p.is_multiple_of(lambda) {
        return Err(Error::Precondition(format!(
            "Lambda = {lambda} does not divide P = {p}"
        )));
    }
    let g = gamma as u32;
    let lam_pow = (lambda as u64).checked_pow(g).unwrap_or(u64::MAX);
    Ok((k / delta) as u64
        * binomial(l, gamma)
        * (delta as u64).min(lam_pow)
        * ((p / lambda) as u64).pow(g))
}

/// [`bound_simplified`] applied to a spec; fails unless the spec is uniform
/// and divisible.
pub fn bound_simplified_for(spec: &ProblemSpec) -> Result<u64> {
    let p = spec.mode_sizes()[0];
    let lam = spec.windows()[0];
    if spec.mode_sizes().iter().any(|&x| x != p) || spec.windows().iter().any(|&x| x != lam) {
        return Err(Error::Precondition("P and Lambda are not uniform across modes".into()));
    }
    bound_simplified(
        spec.num_users(),
        spec.delta(),
        spec.num_subfunctions(),
        spec.gamma(),
        p,
        lam,
    )
}

/// Server bound for arbitrary parameters: the declared-tile rank budgets
/// summed class by class.
///
/// Per active set Q, with N the modes of Q where Lambda does not divide P:
/// full-window tiles contribute `min(block, prod_Q Lambda)`, and for every
/// nonempty S of N the tiles whose residual windows are exactly S contribute
/// `min(block, prod_{Q\S} Lambda * prod_S mod(P, Lambda))`, each times the
/// number of such window choices `prod_{Q\S} floor(P/Lambda)`.
pub fn bound_general(spec: &ProblemSpec) -> Result<u64> {
    let (k, delta) = (spec.num_users() as u64, spec.delta() as u64);
    let blocks: Vec<(u64, u64)> = [(k / delta, delta), (u64::from(k % delta != 0), k % delta)]
        .into_iter()
        .filter(|&(n, _)| n > 0)
        .collect();
    let mut total = 0u64;
    for q in enumerate_active_sets(spec.num_subfunctions(), spec.gamma())? {
        let params: Vec<(u64, u64)> = q
            .iter()
            .map(|&m| (spec.mode_sizes()[m] as u64, spec.windows()[m] as u64))
            .collect();
        let residual: Vec<usize> = (0..q.len()).filter(|&a| !params[a].0.is_multiple_of(params[a].1)).collect();
        for subset in 0u64..(1 << residual.len()) {
            let mut rows = 1u64;
            let mut count = 1u64;
            for (a, &(p, l)) in params.iter().enumerate() {
                let in_s = residual
                    .iter()
                    .position(|&b| b == a)
                    .is_some_and(|bit| subset >> bit & 1 == 1);
                if in_s {
                    rows = rows.saturating_mul(p % l);
                } else {
                    rows = rows.saturating_mul(l);
                    count *= p / l;
                }
            }
            for &(n, size) in &blocks {
                total += n * size.min(rows) * count;
            }
        }
    }
    Ok(total)
}

/// Checks that the rank-one contribution supports of a factorization cover
/// `product_support`.
///
/// `d_support` has shape `K x N`, `e_support` `N x P_1 x ... x P_L` and
/// `product_support` `K x P_1 x ... x P_L`.
pub fn support_containment_check(
    d_support: &Support,
    e_support: &Support,
    product_support: &Support,
) -> Result<bool> {
    let (dd, ed, pd) = (
        d_support.shape().dims(),
        e_support.shape().dims(),
        product_support.shape().dims(),
    );
    if dd.len() != 2 || ed.is_empty() || pd.is_empty() || dd[1] != ed[0] || dd[0] != pd[0] || ed[1..] != pd[1..] {
        return Err(Error::shape(format!(
            "inconsistent supports {}, {}, {}",
            d_support.shape(),
            e_support.shape(),
            product_support.shape()
        )));
    }
    let (k, n) = (dd[0], dd[1]);
    let mut covered = vec![false; product_support.shape().len()];
    for s in 0..n {
        let users: Vec<usize> = (0..k).filter(|&u| d_support.get(u + k * s)).collect();
        if users.is_empty() {
            continue;
        }
        let rows = e_support.shape().len() / n.max(1);
        for r in 0..rows {
            if e_support.get(s + n * r) {
                for &u in &users {
                    covered[u + k * r] = true;
                }
            }
        }
    }
    Ok(product_support.positions().all(|lin| covered[lin]))
}

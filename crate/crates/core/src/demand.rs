//! Problem parameters, the demand tensor and its direct (protocol-free)
//! evaluation.
//!
//! Each mode `l` of the demand tensor is indexed by position in an exponent
//! grid: position `p` stands for the power `W_l^{grid_l[p]}`. The default grid
//! is `[0, 1, ..., P_l - 1]`, so position 0 means "W_l absent". A monomial
//! counts towards the computation limit once for every mode whose exponent
//! is positive.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::support::Support;
use crate::tensor::{DenseTensor, Shape, MAX_ORDER};

/// One nonzero demand coefficient `c_{k,p}` (0-based user and positions).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub user: usize,
    pub index: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    users: usize,
    mode_sizes: Vec<usize>,
    windows: Vec<usize>,
    gamma: usize,
    delta: usize,
    exponent_grids: Vec<Vec<u32>>,
    coefficients: Vec<Coefficient>,
}

impl ProblemSpec {
    /// `users` = K, `mode_sizes` = (P_1..P_L), `windows` = (Lambda_1..Lambda_L),
    /// `gamma` = computation limit, `delta` = communication limit.
    pub fn new(
        users: usize,
        mode_sizes: Vec<usize>,
        windows: Vec<usize>,
        gamma: usize,
        delta: usize,
    ) -> Result<Self> {
        let l = mode_sizes.len();
        if users == 0 {
            return Err(Error::validation("K", "at least one user is required"));
        }
        if l == 0 {
            return Err(Error::validation("L", "at least one subfunction is required"));
        }
        if l + 1 > MAX_ORDER {
            return Err(Error::validation(
                "L",
                format!("at most {} subfunctions are supported", MAX_ORDER - 1),
            ));
        }
        if mode_sizes.contains(&0) {
            return Err(Error::validation("P", "every P_l must be at least 1"));
        }
        if windows.len() != l {
            return Err(Error::validation(
                "Lambda",
                format!("expected {l} window sizes, got {}", windows.len()),
            ));
        }
        for (m, (&w, &p)) in windows.iter().zip(&mode_sizes).enumerate() {
            if w == 0 || w > p {
                return Err(Error::validation(
                    "Lambda",
                    format!("Lambda_{} = {w} must lie in [1, P_{} = {p}]", m + 1, m + 1),
                ));
            }
        }
        if gamma == 0 || gamma > l {
            return Err(Error::validation(
                "Gamma",
                format!("Gamma = {gamma} must lie in [1, L = {l}]"),
            ));
        }
        if delta == 0 || delta > users {
            return Err(Error::validation(
                "Delta",
                format!("Delta = {delta} must lie in [1, K = {users}]"),
            ));
        }
        Shape::new(std::iter::once(users).chain(mode_sizes.iter().copied()).collect::<Vec<_>>())
            .map_err(|e| Error::validation("P", e.to_string()))?;
        let exponent_grids = mode_sizes.iter().map(|&p| (0..p as u32).collect()).collect();
        Ok(ProblemSpec {
            users,
            mode_sizes,
            windows,
            gamma,
            delta,
            exponent_grids,
            coefficients: Vec::new(),
        })
    }

    pub fn with_exponent_grids(mut self, grids: Vec<Vec<u32>>) -> Result<Self> {
        if grids.len() != self.mode_sizes.len() {
            return Err(Error::validation(
                "exponent_grids",
                format!("expected {} grids, got {}", self.mode_sizes.len(), grids.len()),
            ));
        }
        for (m, (g, &p)) in grids.iter().zip(&self.mode_sizes).enumerate() {
            if g.len() != p {
                return Err(Error::validation(
                    "exponent_grids",
                    format!("grid {} has {} entries, expected P = {p}", m + 1, g.len()),
                ));
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(
                    "exponent_grids",
                    format!("grid {} is not strictly increasing", m + 1),
                ));
            }
        }
        self.exponent_grids = grids;
        Ok(self)
    }

    /// Replaces the coefficient list. Positions are range-checked here;
    /// duplicates are reported by [`build_demand_tensor`].
    pub fn with_coefficients(mut self, coefficients: Vec<Coefficient>) -> Result<Self> {
        for c in &coefficients {
            if c.user >= self.users {
                return Err(Error::validation(
                    "coefficients",
                    format!("user {} out of range [1, {}]", c.user + 1, self.users),
                ));
            }
            if c.index.len() != self.mode_sizes.len()
                || c.index.iter().zip(&self.mode_sizes).any(|(&i, &p)| i >= p)
            {
                let one_based: Vec<usize> = c.index.iter().map(|i| i + 1).collect();
                return Err(Error::validation(
                    "coefficients",
                    format!("index {one_based:?} out of range for P = {:?}", self.mode_sizes),
                ));
            }
            if !c.value.is_finite() {
                return Err(Error::validation("coefficients", "values must be finite"));
            }
        }
        self.coefficients = coefficients;
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_subfunctions(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn exponent_grids(&self) -> &[Vec<u32>] {
        &self.exponent_grids
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coefficients
    }

    /// Exponent carried by position `index` of mode `mode`.
    pub fn exponent(&self, mode: usize, index: usize) -> u32 {
        self.exponent_grids[mode][index]
    }

    /// Shape `P_1 x ... x P_L` of the monomial space.
    pub fn monomial_shape(&self) -> Shape {
        Shape::new(self.mode_sizes.clone()).expect("validated in ProblemSpec::new")
    }

    /// Shape `K x P_1 x ... x P_L` of the demand tensor.
    pub fn demand_shape(&self) -> Shape {
        let mut dims = vec![self.users];
        dims.extend_from_slice(&self.mode_sizes);
        Shape::new(dims).expect("validated in ProblemSpec::new")
    }

    /// Modes whose exponent at `index` is positive.
    pub fn active_modes(&self, index: &[usize]) -> Vec<usize> {
        index
            .iter()
            .enumerate()
            .filter(|&(m, &p)| self.exponent(m, p) > 0)
            .map(|(m, _)| m)
            .collect()
    }
}

/// The order-(L+1) coefficient tensor, `K x P_1 x ... x P_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTensor {
    tensor: DenseTensor,
}

impl DemandTensor {
    pub fn from_tensor(tensor: DenseTensor) -> Self {
        DemandTensor { tensor }
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    pub fn support(&self) -> Support {
        Support::of(&self.tensor)
    }

    /// Nonzero entries as `(user, positions, value)` in linear order.
    pub fn nonzeros(&self) -> Vec<Coefficient> {
        let shape = self.tensor.shape();
        self.tensor
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(lin, &value)| {
                let idx = shape.multi_index(lin);
                Coefficient {
                    user: idx[0],
                    index: idx[1..].to_vec(),
                    value,
                }
            })
            .collect()
    }
}

/// Places the sparse coefficients into a dense `K x P_1 x ... x P_L` tensor.
pub fn build_demand_tensor(spec: &ProblemSpec) -> Result<DemandTensor> {
    let shape = spec.demand_shape();
    let mut tensor = DenseTensor::zeros(shape);
    let mut seen = BTreeSet::new();
    let mut duplicates = Vec::new();
    for c in spec.coefficients() {
        let mut idx = vec![c.user];
        idx.extend_from_slice(&c.index);
        if !seen.insert(idx.clone()) {
            duplicates.push((c.user + 1, c.index.iter().map(|i| i + 1).collect()));
            continue;
        }
        tensor.set(&idx, c.value)?;
    }
    if !duplicates.is_empty() {
        return Err(Error::DuplicateCoefficients(duplicates));
    }
    Ok(DemandTensor { tensor })
}

/// A nonzero coefficient whose monomial involves more than Gamma subfunctions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibilityViolation {
    pub user: usize,
    pub index: Vec<usize>,
    pub active_modes: Vec<usize>,
}

impl fmt::Display for AdmissibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<usize> = self.index.iter().map(|i| i + 1).collect();
        let modes: Vec<usize> = self.active_modes.iter().map(|m| m + 1).collect();
        write!(
            f,
            "user {} index {:?}: {} active subfunctions {:?}",
            self.user + 1,
            idx,
            modes.len(),
            modes
        )
    }
}

/// Lists every nonzero entry that uses more than Gamma subfunctions.
/// An empty list means the demand is admissible.
pub fn validate_admissibility(
    spec: &ProblemSpec,
    demand: &DemandTensor,
) -> Result<Vec<AdmissibilityViolation>> {
    if demand.tensor.shape() != &spec.demand_shape() {
        return Err(Error::shape(format!(
            "demand tensor {} does not match problem shape {}",
            demand.tensor.shape(),
            spec.demand_shape()
        )));
    }
    Ok(demand
        .nonzeros()
        .into_iter()
        .filter_map(|c| {
            let active = spec.active_modes(&c.index);
            (active.len() > spec.gamma()).then_some(AdmissibilityViolation {
                user: c.user,
                index: c.index,
                active_modes: active,
            })
        })
        .collect())
}

/// Builtin elementwise basis functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisFn {
    Exp,
    Log,
    Sqrt,
    Cos,
    Sin,
    Identity,
    Square,
    /// `a * x + b`
    Affine(f64, f64),
}

impl BasisFn {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let f = match name {
            "exp" => BasisFn::Exp,
            "log" => BasisFn::Log,
            "sqrt" => BasisFn::Sqrt,
            "cos" => BasisFn::Cos,
            "sin" => BasisFn::Sin,
            "identity" => BasisFn::Identity,
            "square" => BasisFn::Square,
            "affine" => match params {
                [a, b] => return Ok(BasisFn::Affine(*a, *b)),
                _ => {
                    return Err(Error::validation(
                        "basis",
                        "affine takes exactly two params [a, b]",
                    ))
                }
            },
            other => {
                return Err(Error::validation(
                    "basis",
                    format!("unknown basis function {other:?}"),
                ))
            }
        };
        if !params.is_empty() {
            return Err(Error::validation(
                "basis",
                format!("{name} takes no params"),
            ));
        }
        Ok(f)
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisFn::Exp => "exp",
            BasisFn::Log => "log",
            BasisFn::Sqrt => "sqrt",
            BasisFn::Cos => "cos",
            BasisFn::Sin => "sin",
            BasisFn::Identity => "identity",
            BasisFn::Square => "square",
            BasisFn::Affine(..) => "affine",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            BasisFn::Affine(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    /// `None` outside the domain or when the result is not finite.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let y = match *self {
            BasisFn::Exp => x.exp(),
            BasisFn::Log if x > 0.0 => x.ln(),
            BasisFn::Log => return None,
            BasisFn::Sqrt if x >= 0.0 => x.sqrt(),
            BasisFn::Sqrt => return None,
            BasisFn::Cos => x.cos(),
            BasisFn::Sin => x.sin(),
            BasisFn::Identity => x,
            BasisFn::Square => x * x,
            BasisFn::Affine(a, b) => a * x + b,
        };
        y.is_finite().then_some(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisTerm {
    pub func: BasisFn,
    /// Input component feeding this function; `None` means every component
    /// is an independent scalar instance.
    pub arg: Option<usize>,
}

/// The basis functions `f_1..f_L` and the common input.
///
/// Either every term names an input component (one data instance `x` in
/// `R^d`), or none does, in which case each input component is a separate
/// scalar instance and the protocol runs once per component.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSuite {
    terms: Vec<BasisTerm>,
    input: Vec<f64>,
}

impl BasisSuite {
    pub fn new(terms: Vec<BasisTerm>, input: Vec<f64>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::validation("input", "input must not be empty"));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("input", "input must be finite"));
        }
        let with_arg = terms.iter().filter(|t| t.arg.is_some()).count();
        if with_arg != 0 && with_arg != terms.len() {
            return Err(Error::validation(
                "basis",
                "either every basis entry selects an input component or none does",
            ));
        }
        for (l, t) in terms.iter().enumerate() {
            if let Some(a) = t.arg {
                if a >= input.len() {
                    return Err(Error::validation(
                        "basis",
                        format!(
                            "basis {} reads input component {} but the input has {}",
                            l + 1,
                            a + 1,
                            input.len()
                        ),
                    ));
                }
            }
        }
        Ok(BasisSuite { terms, input })
    }

    /// Scalar-input suite: every function reads the same scalar per instance.
    pub fn scalar(funcs: Vec<BasisFn>, input: Vec<f64>) -> Result<Self> {
        BasisSuite::new(
            funcs.into_iter().map(|func| BasisTerm { func, arg: None }).collect(),
            input,
        )
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_instances(&self) -> usize {
        if self.terms.iter().any(|t| t.arg.is_some()) {
            1
        } else {
            self.input.len()
        }
    }

    /// The argument subfunction `mode` sees in `instance`.
    pub fn argument(&self, instance: usize, mode: usize) -> f64 {
        match self.terms[mode].arg {
            Some(a) => self.input[a],
            None => self.input[instance],
        }
    }

    /// `W_mode = f_mode(x)` for one instance.
    pub fn eval(&self, instance: usize, mode: usize) -> Result<f64> {
        let x = self.argument(instance, mode);
        let term = &self.terms[mode];
        term.func.eval(x).ok_or_else(|| Error::Domain {
            subfunction: mode + 1,
            name: term.func.name().to_string(),
            input: x,
        })
    }

    /// All `W_1..W_L` for one instance.
    pub fn evaluate(&self, instance: usize) -> Result<Vec<f64>> {
        (0..self.terms.len()).map(|m| self.eval(instance, m)).collect()
    }
}

/// `W(p) = prod_l W_l^{grid_l[p_l]}` over the `P_1 x ... x P_L` grid.
pub fn monomial_tensor(values: &[f64], spec: &ProblemSpec) -> Result<DenseTensor> {
    if values.len() != spec.num_subfunctions() {
        return Err(Error::shape(format!(
            "{} subfunction values for L = {}",
            values.len(),
            spec.num_subfunctions()
        )));
    }
    let powers: Vec<Vec<f64>> = spec
        .exponent_grids()
        .iter()
        .zip(values)
        .map(|(grid, &w)| grid.iter().map(|&e| pow(w, e)).collect())
        .collect();
    Ok(DenseTensor::from_fn(spec.monomial_shape(), |idx| {
        idx.iter().zip(&powers).map(|(&p, pw)| pw[p]).product()
    }))
}

pub(crate) fn pow(base: f64, exponent: u32) -> f64 {
    match i32::try_from(exponent) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exponent as f64),
    }
}

/// Evaluates the basis for one instance and builds its monomial tensor.
pub fn build_monomial_tensor(
    basis: &BasisSuite,
    instance: usize,
    spec: &ProblemSpec,
) -> Result<DenseTensor> {
    if basis.len() != spec.num_subfunctions() {
        return Err(Error::validation(
            "basis",
            format!("{} basis functions for L = {}", basis.len(), spec.num_subfunctions()),
        ));
    }
    monomial_tensor(&basis.evaluate(instance)?, spec)
}

/// `f_k = sum_p F(k, p) W(p)`, the reference the protocol is checked against.
pub fn evaluate_demands_direct(demand: &DemandTensor, monomials: &DenseTensor) -> Result<Vec<f64>> {
    let order = demand.tensor.order();
    let f = demand
        .tensor
        .contract_block(1..order, monomials, 0..monomials.order())?;
    Ok(f.into_data())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedConstraints {
    pub gamma: f64,
    pub delta: f64,
    pub lambda: Vec<f64>,
}

/// `(Gamma/L, Delta/K, Lambda_l/P_l)`.
pub fn normalized_constraints(spec: &ProblemSpec) -> NormalizedConstraints {
    NormalizedConstraints {
        gamma: spec.gamma() as f64 / spec.num_subfunctions() as f64,
        delta: spec.delta() as f64 / spec.num_users() as f64,
        lambda: spec
            .windows()
            .iter()
            .zip(spec.mode_sizes())
            .map(|(&w, &p)| w as f64 / p as f64)
            .collect(),
    }
}

//! Simulation of the compute / encode / deliver / decode protocol.

use crate::demand::{
    build_monomial_tensor, evaluate_demands_direct, pow, BasisSuite, DemandTensor, ProblemSpec,
};
use crate::error::{Error, Result};
use crate::factorizer::{extract_assignments, multiplication_cost, Factorization, ServerAssignment};
use crate::tensor::{DenseTensor, Matrix};

/// Denominator floor for relative output errors.
pub const ERROR_FLOOR: f64 = 1e-12;

fn floor_log2(x: u64) -> u64 {
    u64::from(63 - x.leading_zeros())
}

/// Multiplications to reach `W^alpha` when the server evaluates a window of
/// `lambda` consecutive powers ending at `alpha`: `W^{q*lambda + 1}` by
/// repeated squaring, then `r - 1` further products.
pub fn power_cost(alpha: u64, lambda: u64) -> u64 {
    assert!(lambda >= 1, "window size must be positive");
    if alpha <= 1 {
        return 0;
    }
    let (q, r) = (alpha / lambda, alpha % lambda);
    if r == 0 {
        floor_log2((q - 1) * lambda + 1) + lambda - 1
    } else {
        floor_log2(q * lambda + 1) + r - 1
    }
}

/// Subfunction values one server holds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldValues {
    pub server: usize,
    /// `(mode, W_mode)` for every mode in the server's subfunction set.
    pub values: Vec<(usize, f64)>,
}

/// Every server evaluates exactly its assigned subfunctions. Also returns
/// how often each subfunction was evaluated across servers.
pub fn compute_subfunctions(
    basis: &BasisSuite,
    instance: usize,
    assignments: &[ServerAssignment],
) -> Result<(Vec<HeldValues>, Vec<usize>)> {
    let mut counts = vec![0usize; basis.len()];
    let mut held = Vec::with_capacity(assignments.len());
    for a in assignments {
        let mut values = Vec::with_capacity(a.subfunctions.len());
        for &m in &a.subfunctions {
            if m >= basis.len() {
                return Err(Error::shape(format!(
                    "server {} needs subfunction {} but the basis has {}",
                    a.server + 1,
                    m + 1,
                    basis.len()
                )));
            }
            let w = basis.eval(instance, m).map_err(|_| Error::ServerDomain {
                server: a.server + 1,
                subfunction: m + 1,
                name: basis.terms()[m].func.name().to_string(),
                input: basis.argument(instance, m),
            })?;
            counts[m] += 1;
            values.push((m, w));
        }
        held.push(HeldValues { server: a.server, values });
    }
    Ok((held, counts))
}

/// `z = E` contracted with `W` over all monomial modes.
pub fn encode(e: &DenseTensor, w: &DenseTensor) -> Result<Vec<f64>> {
    if e.order() == 0 {
        return Err(Error::shape("encoding tensor needs a server mode"));
    }
    Ok(e.contract_block(1..e.order(), w, 0..w.order())?.into_data())
}

/// `f' = D z`.
pub fn decode(d: &Matrix, z: &[f64]) -> Result<Vec<f64>> {
    d.matvec(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRun {
    /// Subfunction values `W_1..W_L`.
    pub w: Vec<f64>,
    /// Transmissions, one per server.
    pub z: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub f_ref: Vec<f64>,
    pub max_rel_error: f64,
    /// Largest gap between the locally computed `z` and the dense encoding.
    pub encode_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub runs: Vec<InstanceRun>,
    pub max_rel_error: f64,
    pub multiplication_costs: Vec<u64>,
    pub total_multiplications: u64,
    /// Evaluations of each subfunction summed over servers.
    pub evaluation_counts: Vec<usize>,
    pub num_servers: usize,
    pub rate: Option<f64>,
}

/// Runs the protocol once per basis instance and compares every user's
/// decoded output with direct evaluation of the demand.
pub fn simulate(
    spec: &ProblemSpec,
    demand: &DemandTensor,
    fact: &Factorization,
    basis: &BasisSuite,
) -> Result<SimulationReport> {
    if basis.len() != spec.num_subfunctions() {
        return Err(Error::validation(
            "basis",
            format!("{} basis functions for L = {}", basis.len(), spec.num_subfunctions()),
        ));
    }
    let assignments = extract_assignments(fact, spec)?;
    let n = fact.num_servers();
    let k = spec.num_users();
    let mut runs = Vec::new();
    let mut evaluation_counts = vec![0usize; basis.len()];
    for instance in 0..basis.num_instances() {
        let (held, counts) = compute_subfunctions(basis, instance, &assignments)?;
        for (c, x) in evaluation_counts.iter_mut().zip(counts) {
            *c += x;
        }
        // each server encodes from its own values only
        let z: Vec<f64> = assignments
            .iter()
            .zip(&held)
            .map(|(a, h)| local_transmission(fact, spec, a, h))
            .collect();

        let w = basis.evaluate(instance)?;
        let w_bar = build_monomial_tensor(basis, instance, spec)?;
        let z_dense = encode(&fact.e, &w_bar)?;
        let encode_mismatch = z
            .iter()
            .zip(&z_dense)
            .map(|(a, b)| (a - b).abs() / b.abs().max(ERROR_FLOOR))
            .fold(0.0, f64::max);

        // user k only hears the servers that transmit to it
        let mut f_prime = vec![0.0; k];
        for a in &assignments {
            for &u in &a.users {
                f_prime[u] += fact.d.get(u, a.server) * z[a.server];
            }
        }
        let f_ref = evaluate_demands_direct(demand, &w_bar)?;
        let max_rel_error = f_prime
            .iter()
            .zip(&f_ref)
            .map(|(a, b)| (a - b).abs() / b.abs().max(ERROR_FLOOR))
            .fold(0.0, f64::max);
        runs.push(InstanceRun { w, z, f_prime, f_ref, max_rel_error, encode_mismatch });
    }
    let multiplication_costs: Vec<u64> =
        assignments.iter().map(|a| multiplication_cost(a, spec)).collect();
    Ok(SimulationReport {
        max_rel_error: runs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max),
        total_multiplications: multiplication_costs.iter().sum(),
        multiplication_costs,
        evaluation_counts,
        num_servers: n,
        rate: (n > 0).then(|| k as f64 / n as f64),
        runs,
    })
}

fn local_transmission(
    fact: &Factorization,
    spec: &ProblemSpec,
    a: &ServerAssignment,
    held: &HeldValues,
) -> f64 {
    let n = fact.num_servers();
    let shape = spec.monomial_shape();
    a.exponent_vectors
        .iter()
        .map(|p| {
            let row = shape.linear_index(p).expect("support position in range");
            let coef = fact.e.data()[a.server + n * row];
            let monomial: f64 = held
                .values
                .iter()
                .map(|&(m, w)| pow(w, spec.exponent(m, p[m])))
                .product();
            coef * monomial
        })
        .sum()
}

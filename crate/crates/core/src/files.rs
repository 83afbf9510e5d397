//! JSON interchange formats. All indices in files are 1-based.

use serde::{Deserialize, Serialize};

use crate::demand::{BasisFn, BasisSuite, BasisTerm, Coefficient, ProblemSpec};
use crate::error::{Error, Result};
use crate::factorizer::{Factorization, TileRecord};
use crate::tensor::{DenseTensor, Matrix, Shape};
use crate::tiling::TileClass;

pub const FORMAT_VERSION: &str = "1";

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn to_zero_based(field: &str, what: &str, i: usize) -> Result<usize> {
    i.checked_sub(1)
        .ok_or_else(|| Error::validation(field, format!("{what} indices are 1-based; got 0")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    pub user: usize,
    pub index: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    /// Input component this function reads (1-based). Omitted on every
    /// entry means each input component is its own scalar instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "P")]
    pub p: Vec<usize>,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<usize>,
    #[serde(rename = "Gamma")]
    pub gamma: usize,
    #[serde(rename = "Delta")]
    pub delta: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_grids: Option<Vec<Vec<u32>>>,
    pub coefficients: Vec<CoefficientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<BasisEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<f64>>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_spec(spec: &ProblemSpec, basis: Option<&BasisSuite>) -> Self {
        let default_grids = spec
            .exponent_grids()
            .iter()
            .enumerate()
            .all(|(m, g)| g.iter().copied().eq(0..spec.mode_sizes()[m] as u32));
        ProblemFile {
            k: spec.num_users(),
            l: spec.num_subfunctions(),
            p: spec.mode_sizes().to_vec(),
            lambda: spec.windows().to_vec(),
            gamma: spec.gamma(),
            delta: spec.delta(),
            exponent_grids: (!default_grids).then(|| spec.exponent_grids().to_vec()),
            coefficients: spec
                .coefficients()
                .iter()
                .map(|c| CoefficientEntry {
                    user: c.user + 1,
                    index: c.index.iter().map(|i| i + 1).collect(),
                    value: c.value,
                })
                .collect(),
            basis: basis.map(|b| {
                b.terms()
                    .iter()
                    .map(|t| BasisEntry {
                        name: t.func.name().to_string(),
                        params: t.func.params(),
                        arg: t.arg.map(|a| a + 1),
                    })
                    .collect()
            }),
            input: basis.map(|b| b.input().to_vec()),
        }
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        if self.p.len() != self.l {
            return Err(Error::validation(
                "L",
                format!("L = {} but P has {} entries", self.l, self.p.len()),
            ));
        }
        let mut spec = ProblemSpec::new(
            self.k,
            self.p.clone(),
            self.lambda.clone(),
            self.gamma,
            self.delta,
        )?;
        if let Some(grids) = &self.exponent_grids {
            spec = spec.with_exponent_grids(grids.clone())?;
        }
        let coefficients = self
            .coefficients
            .iter()
            .map(|c| {
                Ok(Coefficient {
                    user: to_zero_based("coefficients", "user", c.user)?,
                    index: c
                        .index
                        .iter()
                        .map(|&i| to_zero_based("coefficients", "monomial", i))
                        .collect::<Result<_>>()?,
                    value: c.value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        spec.with_coefficients(coefficients)
    }

    /// The basis suite, if the file carries both `basis` and `input`.
    pub fn basis_suite(&self) -> Result<Option<BasisSuite>> {
        let (Some(entries), Some(input)) = (&self.basis, &self.input) else {
            return Ok(None);
        };
        if entries.len() != self.l {
            return Err(Error::validation(
                "basis",
                format!("{} entries for L = {}", entries.len(), self.l),
            ));
        }
        let terms = entries
            .iter()
            .map(|b| {
                Ok(BasisTerm {
                    func: BasisFn::from_name(&b.name, &b.params)?,
                    arg: b.arg.map(|a| to_zero_based("basis", "input", a)).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BasisSuite::new(terms, input.clone()).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingEntry {
    pub server: usize,
    pub index: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileEntry {
    pub class: String,
    pub i: usize,
    /// Window per mode; inactive modes report window 1.
    pub j: Vec<usize>,
    #[serde(rename = "Q")]
    pub q: Vec<usize>,
    /// First and last server column, inclusive.
    pub cols: [usize; 2],
    pub rank: usize,
    pub tile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationFile {
    pub format_version: String,
    #[serde(rename = "N")]
    pub n: usize,
    /// `K` rows of `N` entries.
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    /// Nonzero entries of the encoding tensor, in linear order.
    #[serde(rename = "E")]
    pub e: Vec<EncodingEntry>,
    pub tiles: Vec<TileEntry>,
    pub tolerance: f64,
}

impl FactorizationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: FactorizationFile = parse(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {:?}",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_factorization(f: &Factorization) -> Self {
        let n = f.num_servers();
        let shape = f.e.shape();
        FactorizationFile {
            format_version: FORMAT_VERSION.to_string(),
            n,
            d: (0..f.d.rows())
                .map(|k| (0..n).map(|s| f.d.get(k, s)).collect())
                .collect(),
            e: f
                .e
                .data()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(lin, &value)| {
                    let idx = shape.multi_index(lin);
                    EncodingEntry {
                        server: idx[0] + 1,
                        index: idx[1..].iter().map(|i| i + 1).collect(),
                        value,
                    }
                })
                .collect(),
            tiles: f
                .tiles
                .iter()
                .map(|t| TileEntry {
                    class: t.class.to_string(),
                    i: t.user_block + 1,
                    j: t.windows.iter().map(|j| j + 1).collect(),
                    q: t.active.iter().map(|m| m + 1).collect(),
                    cols: [t.servers.start + 1, t.servers.end],
                    rank: t.rank,
                    tile: t.tile + 1,
                })
                .collect(),
            tolerance: f.tolerance,
        }
    }

    /// Rebuilds the dense factors for a problem with `K` users and mode
    /// sizes `P`.
    pub fn to_factorization(&self, spec: &ProblemSpec) -> Result<Factorization> {
        let (k, n) = (spec.num_users(), self.n);
        if self.d.len() != k || self.d.iter().any(|row| row.len() != n) {
            return Err(Error::shape(format!("D must be {k} rows of N = {n} entries")));
        }
        let d = Matrix::from_fn(k, n, |r, c| self.d[r][c]);
        let mut dims = vec![n];
        dims.extend_from_slice(spec.mode_sizes());
        let shape = Shape::new(dims)?;
        let mut e = DenseTensor::zeros(shape.clone());
        for entry in &self.e {
            let mut idx = vec![entry.server];
            idx.extend_from_slice(&entry.index);
            if idx.len() != shape.order() || idx.contains(&0) {
                return Err(Error::shape(format!(
                    "E entry {:?} does not address a {shape} tensor (1-based)",
                    idx
                )));
            }
            let zero: Vec<usize> = idx.iter().map(|i| i - 1).collect();
            e.set(&zero, entry.value)?;
        }
        let tiles = self
            .tiles
            .iter()
            .map(|t| {
                let bad = || Error::Format(format!("malformed tile entry {t:?}"));
                if t.i == 0 || t.tile == 0 || t.cols[0] == 0 || t.j.contains(&0) || t.q.contains(&0) {
                    return Err(bad());
                }
                Ok(TileRecord {
                    tile: t.tile - 1,
                    class: TileClass::from_name(&t.class).ok_or_else(bad)?,
                    user_block: t.i - 1,
                    windows: t.j.iter().map(|j| j - 1).collect(),
                    active: t.q.iter().map(|m| m - 1).collect(),
                    servers: t.cols[0] - 1..t.cols[1],
                    rank: t.rank,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Factorization::new(d, e, tiles, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSection {
    /// Sum of rank budgets with every admissible entry present.
    pub constructive_worst_case: u64,
    /// Sum of rank budgets for this demand's support.
    pub constructive: u64,
    pub general: u64,
    pub simplified: Option<u64>,
    pub class_counts: [u64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    #[serde(rename = "T")]
    pub t: usize,
    pub servers: f64,
    pub integral: bool,
    /// Baseline servers over tensor-scheme servers (worst case).
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSection {
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub instances: usize,
    pub max_rel_error: f64,
    pub z: Vec<Vec<f64>>,
    pub f_prime: Vec<Vec<f64>>,
    pub f_ref: Vec<Vec<f64>>,
    pub evaluation_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub rate: Option<f64>,
    pub residual: f64,
    pub achieved: ConstraintSection,
    pub declared: ConstraintSection,
    pub normalized: ConstraintSection,
    pub bounds: BoundsSection,
    pub baseline: BaselineSection,
    pub multiplication_costs: Vec<u64>,
    pub total_multiplications: u64,
    pub simulation: Option<SimulationSection>,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse(text)
    }
}

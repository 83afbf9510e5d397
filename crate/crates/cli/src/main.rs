use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polytile::demand::{build_demand_tensor, validate_admissibility, DemandTensor, ProblemSpec};
use polytile::factorizer::{
    baseline_server_count, factorize, verify_constraints, verify_reconstruction, CostReport,
    Factorization,
};
use polytile::files::{
    BaselineSection, BoundsSection, ConstraintSection, FactorizationFile, ProblemFile, ReportFile,
    SimulationSection, FORMAT_VERSION,
};
use polytile::protocol::{simulate, SimulationReport};
use polytile::tiling::{
    apply_ownership, bound_constructive, bound_general, bound_simplified_for, class_cardinalities,
    design_tiles, worst_case_support, TilePlan,
};
use polytile::Error;

/// Largest decoded-output relative error accepted by `simulate`.
const SIMULATION_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "polytile", version, about = "Tile-based sparse tensor factorization for distributed polynomial evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Relative singular-value cutoff and reconstruction tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tolerance: f64,

    /// Accepted for interface compatibility; the pipeline is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Divisor T of the linearized baseline server count.
    #[arg(long = "baseline-T", global = true, default_value_t = 1)]
    baseline_t: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print server-count bounds and tile class counts.
    Bound { problem: PathBuf },
    /// Build a factorization and write it as JSON.
    Factorize {
        problem: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check a factorization against its problem.
    Verify { problem: PathBuf, factorization: PathBuf },
    /// Run the protocol on the problem's basis and input.
    Simulate {
        problem: PathBuf,
        factorization: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a full report; includes a simulation when the problem has a basis.
    Report {
        problem: PathBuf,
        factorization: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Inadmissible(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Inadmissible(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Inadmissible(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Coverage(_) => Failure::Inadmissible(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if !(cli.tolerance > 0.0 && cli.tolerance.is_finite()) {
        return Err(Failure::Input("--tolerance must be a positive number".into()));
    }
    if cli.baseline_t == 0 {
        return Err(Failure::Input("--baseline-T must be at least 1".into()));
    }
    match &cli.command {
        Command::Bound { problem } => cmd_bound(cli, problem),
        Command::Factorize { problem, output } => cmd_factorize(cli, problem, output),
        Command::Verify { problem, factorization } => cmd_verify(cli, problem, factorization),
        Command::Simulate { problem, factorization, output } => {
            cmd_report(cli, problem, factorization, output.as_deref(), true)
        }
        Command::Report { problem, factorization, output } => {
            cmd_report(cli, problem, factorization, output.as_deref(), false)
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

struct Problem {
    file: ProblemFile,
    spec: ProblemSpec,
    demand: DemandTensor,
}

fn load_problem(path: &Path) -> CliResult<Problem> {
    let in_file = |e: Error| Failure::Input(format!("{}: {e}", path.display()));
    let file = ProblemFile::from_json(&read(path)?).map_err(in_file)?;
    let spec = file.to_spec().map_err(in_file)?;
    let demand = build_demand_tensor(&spec).map_err(in_file)?;
    Ok(Problem { file, spec, demand })
}

fn load_factorization(path: &Path, spec: &ProblemSpec) -> CliResult<Factorization> {
    let in_file = |e: Error| Failure::Input(format!("{}: {e}", path.display()));
    FactorizationFile::from_json(&read(path)?)
        .and_then(|f| f.to_factorization(spec))
        .map_err(in_file)
}

fn require_admissible(p: &Problem) -> CliResult<()> {
    let violations = validate_admissibility(&p.spec, &p.demand)?;
    if violations.is_empty() {
        return Ok(());
    }
    let mut msg = format!(
        "demand uses more than Gamma = {} subfunctions in {} entries:",
        p.spec.gamma(),
        violations.len()
    );
    for v in &violations {
        msg.push_str(&format!("\n  {v}"));
    }
    Err(Failure::Inadmissible(msg))
}

fn owned_plan(p: &Problem) -> CliResult<TilePlan> {
    Ok(apply_ownership(&design_tiles(&p.spec)?, &p.demand.support())?)
}

fn bounds(p: &Problem) -> CliResult<BoundsSection> {
    let plan = design_tiles(&p.spec)?;
    let worst = apply_ownership(&plan, &worst_case_support(&p.spec)?)?;
    let demand_plan = apply_ownership(&plan, &p.demand.support()).ok();
    Ok(BoundsSection {
        constructive_worst_case: bound_constructive(&worst),
        constructive: demand_plan.as_ref().map(bound_constructive).unwrap_or(0),
        general: bound_general(&p.spec)?,
        simplified: bound_simplified_for(&p.spec).ok(),
        class_counts: class_cardinalities(&p.spec)?,
    })
}

fn baseline(cli: &Cli, spec: &ProblemSpec, tensor_servers: u64) -> CliResult<BaselineSection> {
    let l_prime: usize = spec.mode_sizes().iter().product();
    let b = baseline_server_count(spec.num_users(), spec.delta(), l_prime, spec.gamma(), cli.baseline_t)?;
    Ok(BaselineSection {
        t: cli.baseline_t,
        servers: b.value,
        integral: b.integral,
        ratio: (tensor_servers > 0).then(|| b.value / tensor_servers as f64),
    })
}

fn cmd_bound(cli: &Cli, path: &Path) -> CliResult<()> {
    let p = load_problem(path)?;
    let s = &p.spec;
    let b = bounds(&p)?;
    println!(
        "K = {}, L = {}, P = {:?}, Lambda = {:?}, Gamma = {}, Delta = {}",
        s.num_users(),
        s.num_subfunctions(),
        s.mode_sizes(),
        s.windows(),
        s.gamma(),
        s.delta()
    );
    let [c1, c2, c3, c4] = b.class_counts;
    println!("tile classes: C1 = {c1}, C2 = {c2}, C3 = {c3}, C4 = {c4}");
    println!("constructive bound: {}", b.constructive_worst_case);
    if validate_admissibility(s, &p.demand)?.is_empty() {
        println!("constructive bound (this demand): {}", b.constructive);
    } else {
        println!("constructive bound (this demand): unavailable (demand is inadmissible)");
    }
    println!("general bound: {}", b.general);
    match bound_simplified_for(s) {
        Ok(v) => println!("simplified bound: {v}"),
        Err(e) => println!("simplified bound: unavailable ({e})"),
    }
    let base = baseline(cli, s, b.constructive_worst_case)?;
    if base.integral {
        println!("baseline servers (T = {}): {}", base.t, base.servers);
    } else {
        println!("baseline servers (T = {}): {} (warning: not an integer)", base.t, base.servers);
    }
    if let Some(r) = base.ratio {
        println!("baseline / constructive: {r}");
    }
    Ok(())
}

fn cmd_factorize(cli: &Cli, path: &Path, output: &Path) -> CliResult<()> {
    let p = load_problem(path)?;
    require_admissible(&p)?;
    let plan = owned_plan(&p)?;
    let fact = factorize(&p.demand, &plan, cli.tolerance)?;
    let residual = verify_reconstruction(&fact, &p.demand)?;
    write(output, &FactorizationFile::from_factorization(&fact).to_json())?;
    println!("N = {}", fact.num_servers());
    println!("residual = {residual:e}");
    if residual > cli.tolerance {
        return Err(Failure::Verification(format!(
            "residual {residual:e} exceeds tolerance {:e}",
            cli.tolerance
        )));
    }
    Ok(())
}

fn audit(fact: &Factorization, spec: &ProblemSpec) -> CliResult<CostReport> {
    verify_constraints(fact, spec).map_err(|violations| {
        let mut msg = format!("{} constraint violations:", violations.len());
        for v in &violations {
            msg.push_str(&format!("\n  {v}"));
        }
        Failure::Verification(msg)
    })
}

fn cmd_verify(cli: &Cli, problem: &Path, factorization: &Path) -> CliResult<()> {
    let p = load_problem(problem)?;
    let fact = load_factorization(factorization, &p.spec)?;
    let residual = verify_reconstruction(&fact, &p.demand)?;
    println!("N = {}", fact.num_servers());
    println!("residual = {residual:e}");
    let costs = audit(&fact, &p.spec);
    if residual > cli.tolerance {
        let mut msg = format!("residual {residual:e} exceeds tolerance {:e}", cli.tolerance);
        if let Err(f) = &costs {
            msg.push('\n');
            msg.push_str(f.message());
        }
        return Err(Failure::Verification(msg));
    }
    let costs = costs?;
    println!(
        "Gamma achieved = {}, Delta achieved = {}, Lambda achieved = {:?}",
        costs.gamma_achieved, costs.delta_achieved, costs.lambda_achieved
    );
    match costs.rate {
        Some(r) => println!("rate = {r}"),
        None => println!("rate = undefined (no servers)"),
    }
    println!("ok");
    Ok(())
}

fn cmd_report(
    cli: &Cli,
    problem: &Path,
    factorization: &Path,
    output: Option<&Path>,
    require_simulation: bool,
) -> CliResult<()> {
    let p = load_problem(problem)?;
    let fact = load_factorization(factorization, &p.spec)?;
    let basis = p.file.basis_suite()?;
    if require_simulation && basis.is_none() {
        return Err(Failure::Input(format!(
            "{}: simulation needs both \"basis\" and \"input\"",
            problem.display()
        )));
    }
    let costs = audit(&fact, &p.spec)?;
    let residual = verify_reconstruction(&fact, &p.demand)?;
    let sim = basis
        .as_ref()
        .map(|b| simulate(&p.spec, &p.demand, &fact, b))
        .transpose()?;
    let b = bounds(&p)?;
    let report = build_report(cli, &p.spec, &fact, &costs, residual, b, sim.as_ref())?;
    let text = report.to_json();
    match output {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(sim) = &sim {
        eprintln!("max relative error = {:e}", sim.max_rel_error);
        if !(sim.max_rel_error <= SIMULATION_TOLERANCE) {
            return Err(Failure::Verification(format!(
                "max relative error {:e} exceeds {SIMULATION_TOLERANCE:e}",
                sim.max_rel_error
            )));
        }
    }
    if residual > cli.tolerance {
        return Err(Failure::Verification(format!(
            "residual {residual:e} exceeds tolerance {:e}",
            cli.tolerance
        )));
    }
    Ok(())
}

fn build_report(
    cli: &Cli,
    spec: &ProblemSpec,
    fact: &Factorization,
    costs: &CostReport,
    residual: f64,
    bounds: BoundsSection,
    sim: Option<&SimulationReport>,
) -> CliResult<ReportFile> {
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    Ok(ReportFile {
        format_version: FORMAT_VERSION.to_string(),
        n: fact.num_servers(),
        rate: costs.rate,
        residual,
        achieved: ConstraintSection {
            gamma: costs.gamma_achieved as f64,
            delta: costs.delta_achieved as f64,
            lambda: as_f64(&costs.lambda_achieved),
        },
        declared: ConstraintSection {
            gamma: spec.gamma() as f64,
            delta: spec.delta() as f64,
            lambda: as_f64(spec.windows()),
        },
        normalized: ConstraintSection {
            gamma: costs.normalized.gamma,
            delta: costs.normalized.delta,
            lambda: costs.normalized.lambda.clone(),
        },
        baseline: baseline(cli, spec, bounds.constructive_worst_case)?,
        bounds,
        total_multiplications: costs.multiplication_costs.iter().sum(),
        multiplication_costs: costs.multiplication_costs.clone(),
        simulation: sim.map(|s| SimulationSection {
            instances: s.runs.len(),
            max_rel_error: s.max_rel_error,
            z: s.runs.iter().map(|r| r.z.clone()).collect(),
            f_prime: s.runs.iter().map(|r| r.f_prime.clone()).collect(),
            f_ref: s.runs.iter().map(|r| r.f_ref.clone()).collect(),
            evaluation_counts: s.evaluation_counts.clone(),
        }),
    })
}

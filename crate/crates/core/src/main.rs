//! Command-line surface: instance generation, solving, projection,
//! decomposition, interpolation sweeps, commutator sweeps, and the full
//! invariant battery.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pqlab::battery::{run_battery, thread_pool, BatteryConfig};
use pqlab::error::{Error, Result};
use pqlab::instance::{gen_grid_hodge, gen_random, GridParams, InstanceFile, RandomParams};
use pqlab::interp::{marcinkiewicz_split, truncated_solutions, energy, pointwise_audit, energy_estimate_audit_solved, Side};
use pqlab::io::{fmt_f64, read_instance, render_solution, write_instance, CsvTable};
use pqlab::measure::{bracket, norm_s};
use pqlab::rng::derive_seed;
use pqlab::solver::{lp_projection_report, solve_system, SolveOptions, SolveReport};
use pqlab::subspace::{commutator_defect, Sign};
use pqlab::measure::Field;
use pqlab::rng::SplitMix64;

#[derive(Parser)]
#[command(name = "pqlab", version, about = "Nonlinear Lp-projection and interpolation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic instance file.
    Gen(GenArgs),
    /// Solve the monotone system of an instance.
    Solve(SolveArgs),
    /// Nearest-point projection of the instance's `a` field in the p-norm.
    Project(ProjectArgs),
    /// Level-set decomposition and truncated solves at one threshold.
    Decompose(DecomposeArgs),
    /// Strong/weak type constant sweep over a battery.
    Interpolate(InterpolateArgs),
    /// Power-commutator defect sweep on one instance.
    Commutator(CommutatorArgs),
    /// Run the full invariant battery.
    Battery(BatteryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    GridHodge,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Grid rows (grid-hodge).
    #[arg(long, default_value_t = 4)]
    rows: usize,
    /// Grid columns (grid-hodge).
    #[arg(long, default_value_t = 4)]
    cols: usize,
    /// Point count (random).
    #[arg(long, default_value_t = 8)]
    points: usize,
    /// Value dimension (random).
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Raw subspace dimension (random).
    #[arg(long, default_value_t = 4)]
    subspace_dim: usize,
    /// Use unit weights instead of seeded draws.
    #[arg(long)]
    unit_weights: bool,
    /// Use the coefficient-free power map.
    #[arg(long)]
    unit_coefficient: bool,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Initialization perturbation seed (0 = deterministic default).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    instance: PathBuf,
    /// Bracket threshold of the split.
    #[arg(long)]
    threshold: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InterpolateArgs {
    /// Directory of instance files; defaults to the built-in battery.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = "0.75,0.85,0.95,1.0,1.1,1.2,1.3,1.4,1.5")]
    tau_grid: String,
    /// Weak-type endpoints, "lambda-,lambda+".
    #[arg(long, default_value = "0.75,1.5")]
    lambda: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Battery seeds per family (built-in battery only).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CommutatorArgs {
    instance: PathBuf,
    /// Norm exponent of the defect.
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, value_enum, default_value_t = SignArg::Minus)]
    sign: SignArg,
    #[arg(long, default_value = "-0.2,-0.1,-0.05,-0.025,-0.0125,0,0.0125,0.025,0.05,0.1,0.2")]
    eps_grid: String,
    /// Seed of the probe field.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatteryArgs {
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value = "0.75,0.85,0.95,1.0,1.1,1.2,1.3,1.4,1.5")]
    tau_grid: String,
    /// Weak-type endpoints, "lambda-,lambda+".
    #[arg(long, default_value = "0.75,1.5")]
    lambda: String,
    #[arg(long, default_value = "-0.2,-0.1,-0.05,-0.025,-0.0125,0.0125,0.025,0.05,0.1,0.2")]
    eps_grid: String,
    /// Swap in a non-monotone map to exercise the failure path.
    #[arg(long)]
    broken_map: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for summary.txt, interpolation.csv, commutator.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(text: &str, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("{what}: cannot parse {text:?}")))?;
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: empty grid")));
    }
    Ok(values)
}

fn parse_lambda_pair(text: &str) -> Result<(f64, f64)> {
    let v = parse_grid(text, "lambda")?;
    if v.len() != 2 || !(0.0 < v[0] && v[0] < v[1]) {
        return Err(Error::InvalidInput(format!(
            "lambda wants \"lambda-,lambda+\" with 0 < lambda- < lambda+, got {text:?}"
        )));
    }
    Ok((v[0], v[1]))
}

fn print_solve_summary(label: &str, report: &SolveReport) {
    println!("{label}: converged = {}", report.converged);
    println!("  iterations          {}", report.iterations);
    println!("  residual            {}", fmt_f64(report.residual_norm));
    println!("  tolerance           {}", fmt_f64(report.tolerance));
    println!("  basic estimate      {}", fmt_f64(report.basic_estimate_ratio));
    for w in &report.warnings {
        println!("  warning: {w}");
    }
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let file = match args.family {
        FamilyArg::GridHodge => gen_grid_hodge(
            GridParams {
                rows: args.rows,
                cols: args.cols,
                unit_weights: args.unit_weights,
                unit_coefficient: args.unit_coefficient,
            },
            args.p,
            args.seed,
        )?,
        FamilyArg::Random => gen_random(
            RandomParams {
                points: args.points,
                dim: args.dim,
                subspace_dim: args.subspace_dim,
                unit_weights: args.unit_weights,
                unit_coefficient: args.unit_coefficient,
            },
            args.p,
            args.seed,
        )?,
    };
    write_instance(&args.out, &file)?;
    let built = file.build("generated")?;
    println!(
        "wrote {} (points {}, value_dim {}, dim_plus {})",
        args.out.display(),
        built.space.point_count(),
        built.space.value_dim(),
        built.subspace.dim_plus()
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let file = read_instance(&args.instance)?;
    let inst = file.build(&args.instance.display().to_string())?;
    let opts = SolveOptions { tol: args.tol, seed_for_init: args.seed, ..Default::default() };
    let report = solve_system(&inst.subspace, inst.map(), &inst.f, &opts)?;
    print_solve_summary("solve", &report);
    if let Some(out) = &args.out {
        std::fs::write(out, render_solution(&report))?;
        println!("  solution -> {}", out.display());
    }
    Ok(())
}

fn cmd_project(args: &ProjectArgs) -> Result<()> {
    let file = read_instance(&args.instance)?;
    let inst = file.build(&args.instance.display().to_string())?;
    let p = inst.f.exps.p();
    let proj = lp_projection_report(&inst.subspace, &inst.f.a, p, args.tol)?;
    println!("project: converged = {}", proj.converged);
    println!("  iterations          {}", proj.iterations);
    println!("  certificate residual {}", fmt_f64(proj.residual_norm));
    println!("  ||f||_p             {}", fmt_f64(norm_s(&inst.f.a, p)?));
    println!("  ||f - alpha||_p     {}", fmt_f64(norm_s(&inst.f.a.try_sub(&proj.alpha)?, p)?));
    println!("  ||alpha||_p         {}", fmt_f64(norm_s(&proj.alpha, p)?));
    if let Some(out) = &args.out {
        let mut text = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(text, "pqlab-projection");
        let _ = writeln!(text, "schema_version 1");
        let _ = writeln!(text, "points {}", inst.space.point_count());
        let _ = writeln!(text, "value_dim {}", inst.space.value_dim());
        let _ = writeln!(text, "p {}", fmt_f64(p));
        let _ = writeln!(text, "converged {}", proj.converged);
        let _ = writeln!(text, "iterations {}", proj.iterations);
        let _ = writeln!(text, "residual_norm {}", fmt_f64(proj.residual_norm));
        let _ = writeln!(text, "alpha");
        let _ = writeln!(text, "{}", proj.alpha.values().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
        let _ = writeln!(text, "beta");
        let _ = writeln!(text, "{}", proj.beta.values().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
        let _ = writeln!(text, "end");
        std::fs::write(out, text)?;
        println!("  projection -> {}", out.display());
    }
    Ok(())
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let file = read_instance(&args.instance)?;
    let inst = file.build(&args.instance.display().to_string())?;
    let opts = SolveOptions { tol: args.tol, ..Default::default() };
    let split = marcinkiewicz_split(&inst.f, args.threshold)?;
    let br = bracket(&inst.f);
    let upper_points = bracket(&split.upper).values().iter().filter(|v| **v > 0.0).count();
    let ts = truncated_solutions(&inst.subspace, inst.map(), &inst.f, args.threshold, &opts)?;
    let (defect, size) = ts.additivity_defect()?;

    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(text, "pqlab-decomposition");
    let _ = writeln!(text, "threshold {}", fmt_f64(args.threshold));
    let _ = writeln!(text, "bracket_max {}", fmt_f64(br.max_value()));
    let _ = writeln!(text, "upper_support_points {upper_points}");
    let _ = writeln!(text, "lower_support_points {}", inst.space.point_count() - upper_points);
    for side in [Side::Lower, Side::Upper] {
        let e = energy(&ts.h, ts.h_side(side), side, args.threshold)?;
        let _ = writeln!(text, "energy_total_{} {}", side.label(), fmt_f64(e.total));
        let audit = pointwise_audit(
            &ts.h,
            ts.h_side(side),
            &inst.f,
            if side == Side::Lower { &ts.split.lower } else { &ts.split.upper },
            side,
        )?;
        let _ = writeln!(
            text,
            "pointwise_max_{} {} {}",
            side.label(),
            fmt_f64(audit.max_ratio_vs_full),
            fmt_f64(audit.max_ratio_vs_trunc)
        );
        let ratio = energy_estimate_audit_solved(&ts, side)?;
        let _ = writeln!(text, "energy_estimate_ratio_{} {}", side.label(), fmt_f64(ratio));
    }
    let _ = writeln!(text, "additivity_defect {}", fmt_f64(defect));
    let _ = writeln!(text, "solution_norm {}", fmt_f64(size));
    let _ = writeln!(text, "end");
    print!("{text}");
    if let Some(out) = &args.out {
        std::fs::write(out, &text)?;
    }
    Ok(())
}

fn load_directory_battery(dir: &Path) -> Result<Vec<(String, InstanceFile)>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for path in entries {
        let file = read_instance(&path)?;
        let id = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push((id, file));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no instances".into()));
    }
    Ok(out)
}

fn cmd_interpolate(args: &InterpolateArgs) -> Result<()> {
    let tau_grid = parse_grid(&args.tau_grid, "tau-grid")?;
    if tau_grid.windows(2).any(|w| w[0] >= w[1]) || tau_grid.iter().any(|t| *t <= 0.0) {
        return Err(Error::InvalidInput("tau-grid must be positive and strictly increasing".into()));
    }
    let (lminus, lplus) = parse_lambda_pair(&args.lambda)?;
    let opts = SolveOptions { tol: args.tol, ..Default::default() };

    // Solve every instance once; constants are maxima of per-instance ratios.
    let solved: Vec<(String, pqlab::measure::DataPair, pqlab::measure::DataPair)> = match &args.dir {
        Some(dir) => {
            let files = load_directory_battery(dir)?;
            let pool = thread_pool(args.threads)?;
            pool.install(|| {
                use rayon::prelude::*;
                files
                    .par_iter()
                    .map(|(id, file)| {
                        let inst = file.build(id).map_err(|e| attach(id, e))?;
                        let report = solve_system(&inst.subspace, inst.map(), &inst.f, &opts)
                            .map_err(|e| attach(id, e))?;
                        Ok((id.clone(), report.phi, inst.f))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        }
        None => {
            let cfg = BatteryConfig { seeds: args.seeds, tol: args.tol, threads: args.threads, ..Default::default() };
            let instances = pqlab::battery::battery_instances(&cfg)?;
            let pool = thread_pool(args.threads)?;
            pool.install(|| {
                use rayon::prelude::*;
                instances
                    .par_iter()
                    .map(|bi| {
                        let inst = bi.file.build(&bi.id).map_err(|e| attach(&bi.id, e))?;
                        let report = solve_system(&inst.subspace, inst.map(), &inst.f, &opts)
                            .map_err(|e| attach(&bi.id, e))?;
                        Ok((bi.id.clone(), report.phi, inst.f))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        }
    };

    let mut csv = CsvTable::new("kind,exponent,constant,argmax_instance");
    for &tau in &tau_grid {
        let mut best = 0.0_f64;
        let mut arg = String::new();
        for (id, phi, f) in &solved {
            let r = pqlab::interp::strong_type_ratio(phi, f, tau).map_err(|e| attach(id, e))?;
            if r > best {
                best = r;
                arg = id.clone();
            }
        }
        csv.row(&["strong".into(), fmt_f64(tau), fmt_f64(best), arg]);
    }
    for lambda in [lminus, lplus] {
        let mut best = 0.0_f64;
        let mut arg = String::new();
        for (id, phi, f) in &solved {
            let r = pqlab::interp::weak_type_ratio(phi, f, lambda).map_err(|e| attach(id, e))?;
            if r > best {
                best = r;
                arg = id.clone();
            }
        }
        csv.row(&["weak".into(), fmt_f64(lambda), fmt_f64(best), arg]);
    }
    let text = csv.finish();
    print!("{text}");
    if let Some(out) = &args.out {
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn attach(id: &str, e: Error) -> Error {
    Error::InvalidInput(format!("instance {id}: {e}"))
}

fn cmd_commutator(args: &CommutatorArgs) -> Result<()> {
    let eps_grid = parse_grid(&args.eps_grid, "eps-grid")?;
    if eps_grid.iter().any(|e| 1.0 + e <= 0.0) {
        return Err(Error::InvalidInput("eps-grid entries must satisfy 1 + eps > 0".into()));
    }
    if !(args.s >= 1.0) {
        return Err(Error::InvalidInput(format!("s must be >= 1, got {}", args.s)));
    }
    let file = read_instance(&args.instance)?;
    let inst = file.build(&args.instance.display().to_string())?;
    let sign = match args.sign {
        SignArg::Plus => Sign::Plus,
        SignArg::Minus => Sign::Minus,
    };
    let mut rng = SplitMix64::new(derive_seed(args.seed, 41));
    let v = Field::random_gaussian(inst.space.clone(), &mut rng);
    let mut csv = CsvTable::new("epsilon,defect_norm,bound_ratio");
    for &eps in &eps_grid {
        let (defect, ratio) = commutator_defect(&inst.subspace, sign, &v, eps, args.s)?;
        csv.row(&[fmt_f64(eps), fmt_f64(defect), fmt_f64(ratio)]);
    }
    let text = csv.finish();
    print!("{text}");
    if let Some(out) = &args.out {
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn cmd_battery(args: &BatteryArgs) -> Result<bool> {
    let tau_grid = parse_grid(&args.tau_grid, "tau-grid")?;
    let (lminus, lplus) = parse_lambda_pair(&args.lambda)?;
    let eps_grid = parse_grid(&args.eps_grid, "eps-grid")?;
    let cfg = BatteryConfig {
        seeds: args.seeds,
        tol: args.tol,
        tau_grid,
        lambda_minus: lminus,
        lambda_plus: lplus,
        eps_grid,
        broken_map: args.broken_map,
        threads: args.threads,
        ..Default::default()
    };
    let report = run_battery(&cfg)?;
    print!("{}", report.summary());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.txt"), report.summary())?;
        let mut csv = CsvTable::new("kind,exponent,constant,argmax_instance");
        for (tau, c, id) in &report.strong_constants {
            csv.row(&["strong".into(), fmt_f64(*tau), fmt_f64(*c), id.clone()]);
        }
        for (lambda, c, id) in &report.weak_constants {
            csv.row(&["weak".into(), fmt_f64(*lambda), fmt_f64(*c), id.clone()]);
        }
        csv.write(&dir.join("interpolation.csv"))?;
        let mut csv = CsvTable::new("instance,s,epsilon,defect_norm,bound_ratio");
        for r in &report.records {
            for (s, eps, defect, ratio) in &r.commutator_rows {
                csv.row(&[r.id.clone(), fmt_f64(*s), fmt_f64(*eps), fmt_f64(*defect), fmt_f64(*ratio)]);
            }
        }
        csv.write(&dir.join("commutator.csv"))?;
        println!("reports -> {}", dir.display());
    }
    Ok(report.passed())
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen(args) => cmd_gen(args).map(|_| true),
        Command::Solve(args) => cmd_solve(args).map(|_| true),
        Command::Project(args) => cmd_project(args).map(|_| true),
        Command::Decompose(args) => cmd_decompose(args).map(|_| true),
        Command::Interpolate(args) => cmd_interpolate(args).map(|_| true),
        Command::Commutator(args) => cmd_commutator(args).map(|_| true),
        Command::Battery(args) => cmd_battery(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtsplit::angular_mesh::AngularMesh;
use rtsplit::checks;
use rtsplit::config::RunConfig;
use rtsplit::solver::SplittingSolver;
use rtsplit::spatial_mesh::SpatialMesh;
use rtsplit::verification::{convergence_study, ErrorEvaluator};
use rtsplit::{Error, Result};

#[derive(Parser)]
#[command(name = "rtsplit", version, about = "Operator-splitting FEM solver for time-dependent radiative transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-step diagnostics.
    Solve(RunArgs),
    /// Run a manufactured-solution study over paired mesh levels.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Levels to run, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        levels: Vec<usize>,
    },
    /// Run the invariant suite.
    Check,
    /// Print mesh statistics, optionally dumping both meshes.
    MeshInfo {
        #[command(flatten)]
        run: RunArgs,
        /// Write `cell_id cx cy cz area` rows here.
        #[arg(long)]
        angular_dump: Option<PathBuf>,
        /// Write node and tet rows here.
        #[arg(long)]
        spatial_dump: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ex1, ex2 or custom.
    #[arg(long)]
    example: Option<String>,
    /// Angular level; also sets the default spatial grid 2^level + 1.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    spatial_n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    final_time: Option<f64>,
    #[arg(long)]
    sigma_t: Option<f64>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    /// Custom example only: isotropic, linear or hg.
    #[arg(long)]
    phase: Option<String>,
    /// Custom example only: constant source f.
    #[arg(long, allow_hyphen_values = true)]
    source: Option<f64>,
    /// Custom example only: constant initial intensity.
    #[arg(long, allow_hyphen_values = true)]
    initial: Option<f64>,
    /// min, proportional or off.
    #[arg(long)]
    stabilization: Option<String>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    cache_factorizations: Option<bool>,
    /// Per-step diagnostics output.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Final field dump (`k i value` rows).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Convergence table CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
        set("example", self.example.clone())?;
        set("level", self.level.map(|v| v.to_string()))?;
        set("spatial_n", self.spatial_n.map(|v| v.to_string()))?;
        set("dt", self.dt.map(|v| v.to_string()))?;
        set("final_time", self.final_time.map(|v| v.to_string()))?;
        set("sigma_t", self.sigma_t.map(|v| v.to_string()))?;
        set("sigma_s", self.sigma_s.map(|v| v.to_string()))?;
        set("eta", self.eta.map(|v| v.to_string()))?;
        set("phase", self.phase.clone())?;
        set("source", self.source.map(|v| v.to_string()))?;
        set("initial", self.initial.map(|v| v.to_string()))?;
        set("stabilization", self.stabilization.clone())?;
        set("delta0", self.delta0.map(|v| v.to_string()))?;
        set("tol", self.tol.map(|v| v.to_string()))?;
        set("parallelism", self.parallelism.map(|v| v.to_string()))?;
        set("cache_factorizations", self.cache_factorizations.map(|v| v.to_string()))?;
        set("diagnostics", self.diagnostics.as_ref().map(|p| p.display().to_string()))?;
        set("field", self.field.as_ref().map(|p| p.display().to_string()))?;
        set("csv", self.csv.as_ref().map(|p| p.display().to_string()))?;
        cfg.validate()?;
        if cfg.parallelism > 0 {
            // ignore failure if a global pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build_global();
        }
        Ok(cfg)
    }
}

fn writer(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn solve(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let case = cfg.case()?;
    let solver = SplittingSolver::new(cfg.problem()?, cfg.solver_options())?;
    let eval = case.map(|_| ErrorEvaluator::new(solver.angular_mesh(), solver.spatial_mesh()));
    let mut errors = Vec::new();
    let out = solver.run_with_observer(|_, t, field| {
        if let (Some(case), Some(eval)) = (&case, &eval) {
            errors.push(eval.l2_error(field, case, t).unwrap_or(f64::NAN));
        }
    })?;
    let mut lines = vec!["# step t norm_l2 residual".to_string()];
    lines.extend(out.diagnostics.iter().map(|d| d.line()));
    match &cfg.diagnostics {
        Some(p) => {
            let mut w = writer(p)?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
        }
        None => lines.iter().for_each(|l| println!("{l}")),
    }
    if !errors.is_empty() {
        let dt = solver.problem().dt;
        println!("l2_final {:.6e}", errors.last().unwrap());
        println!("l2_time {:.6e}", rtsplit::verification::time_accumulated_error(&errors, dt));
    }
    if let Some(step) = out.stability_violation(solver.problem().dt, solver.spatial_components().max_delta()) {
        log::warn!("global stability estimate exceeded at step {step}");
    }
    if let Some(p) = &cfg.field {
        let t = solver.problem().final_time;
        out.final_field
            .transpose_layout()
            .write_dump(writer(p)?, cfg.level, cfg.spatial_n(), t)?;
    }
    Ok(())
}

fn convergence(args: &RunArgs, levels: &[usize]) -> Result<()> {
    let cfg = args.config()?;
    let case = cfg
        .case()?
        .ok_or_else(|| Error::Config("convergence needs a manufactured example (ex1 or ex2)".into()))?;
    let table = convergence_study(&case, levels, cfg.policy()?, cfg.solver_options())?;
    print!("{table}");
    if let Some(p) = &cfg.csv {
        std::fs::write(p, table.to_csv())?;
    }
    if let Some(msg) = table.incomplete {
        return Err(Error::Numerical(msg));
    }
    Ok(())
}

fn check() -> Result<bool> {
    let report = checks::run_checks(None)?;
    print!("{report}");
    Ok(report.passed())
}

fn mesh_info(args: &RunArgs, angular_dump: &Option<PathBuf>, spatial_dump: &Option<PathBuf>) -> Result<()> {
    let cfg = args.config()?;
    let a = AngularMesh::build(cfg.level)?;
    let s = SpatialMesh::build(cfg.spatial_n())?;
    println!("angular level {}: N_s = {}, h_s = {:.6}, area sum = {:.15}", a.level(), a.len(), a.h_s(), a.total_area());
    println!(
        "spatial n {}: N_x = {}, tets = {}, h_x = {:.6}, h_max = {:.6}",
        s.n(),
        s.num_nodes(),
        s.tets().len(),
        s.h_x(),
        s.h_max()
    );
    if let Some(p) = angular_dump {
        a.write_dump(writer(p)?)?;
    }
    if let Some(p) = spatial_dump {
        s.write_dump(writer(p)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Convergence { run, levels } => convergence(run, levels),
        Command::Check => match check() {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::MeshInfo {
            run,
            angular_dump,
            spatial_dump,
        } => mesh_info(run, angular_dump, spatial_dump),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

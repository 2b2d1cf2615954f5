//! Command-line front end: `mesh`, `certify`, `solve` and `table`.
//!
//! Exit codes: 0 success, 1 numerical failure (solver breakdown, failed certificate or
//! failed table cells), 2 invalid input.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{build_table, Campaign, CampaignProblem, GradingRule, Metric};
use crate::error::Error;
use crate::mesh::TemporalMesh;
use crate::monotone::{certify, compute_k, sigma_bar, INVERSE_CAP, THETA_ODE, THETA_PARABOLIC};
use crate::operator::{L2Operator, Variant};
use crate::solver::{solve_parabolic_1d, solve_scalar, Parabolic1DProblem, ScalarProblem};

pub const OUT_DIR_ENV: &str = "L2FRAC_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "l2frac-runs";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "l2frac", version, about = "L2-type discrete Caputo derivative on graded meshes")]
pub struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output root; overrides the L2FRAC_OUT_DIR environment variable.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a temporal mesh and report its regularity.
    Mesh(MeshCmd),
    /// Check the inverse-monotonicity conditions on a mesh.
    Certify(CertifyCmd),
    /// Solve a preset problem.
    Solve(SolveCmd),
    /// Run a convergence campaign.
    Table(TableCmd),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeshArgs {
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,
    /// Number of steps.
    #[arg(long = "M")]
    pub steps: Option<usize>,
    /// Grading exponent.
    #[arg(long = "r", default_value_t = 1.0)]
    pub grading: f64,
    /// Use the modified graded mesh.
    #[arg(long)]
    pub modified: bool,
    /// Offset of the modified mesh (computed from alpha and theta if omitted).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Read nodes from a file instead.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshCmd {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = THETA_ODE)]
    pub theta: f64,
    /// Also print the nodes.
    #[arg(long)]
    pub print_nodes: bool,
}

#[derive(Debug, Args)]
pub struct CertifyCmd {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = THETA_ODE)]
    pub theta: f64,
    /// Use linear interpolation for the first K rows (K computed if no value is given).
    #[arg(long, num_args = 0..=1, default_missing_value = "0")]
    pub l1_start: Option<usize>,
    /// Also invert the operator matrix and check its entries.
    #[arg(long)]
    pub verify_inverse: bool,
    #[arg(long, default_value_t = INVERSE_CAP)]
    pub inverse_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Preset {
    /// u = t^alpha.
    Talpha,
    /// u = 0.
    Zero,
    /// u = t^2.
    Quad,
    /// u = t^alpha sin(pi x) on (0, 1).
    Sinx,
}

#[derive(Debug, Args)]
pub struct SolveCmd {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "0")]
    pub l1_start: Option<usize>,
    /// Interior grid nodes for `sinx`.
    #[arg(long = "N", default_value_t = 63)]
    pub interior_nodes: usize,
    /// Build the `sinx` source from the discrete spatial operator.
    #[arg(long)]
    pub grid_exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaperTable {
    #[value(name = "errors-at-1")]
    ErrorsAt1,
    MaxNodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    AtFinal,
    MaxNodal,
}

#[derive(Debug, Args)]
pub struct TableCmd {
    /// Reproduce one of the published tables.
    #[arg(long, value_enum)]
    pub paper: Option<PaperTable>,
    /// TOML campaign file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated orders.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Comma-separated gradings: numbers, `3-a`, `(3-a)/a`, `(3-a)/<d>`.
    #[arg(long = "r", value_delimiter = ',')]
    pub gradings: Option<Vec<String>>,
    /// Comma-separated step counts.
    #[arg(long = "M", value_delimiter = ',')]
    pub steps: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long = "T")]
    pub t_final: Option<f64>,
}

/// Campaign file contents; every field may be overridden by a flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub alphas: Option<Vec<f64>>,
    pub gradings: Option<Vec<String>>,
    pub steps: Option<Vec<usize>>,
    pub metric: Option<MetricArg>,
    pub final_time: Option<f64>,
    /// `talpha` (default) or `sinx`.
    pub problem: Option<String>,
    pub interior_nodes: Option<usize>,
    pub grid_exact: Option<bool>,
    /// Length of the L1 prefix (0 or absent for the standard operator).
    pub l1_start: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SolverBreakdown { .. } | Error::NonConvergence { .. } | Error::SingularDiagonal { .. } => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_root = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match cli.command {
        Command::Mesh(c) => cmd_mesh(c, &out_root),
        Command::Certify(c) => cmd_certify(c, &out_root),
        Command::Solve(c) => cmd_solve(c, &out_root),
        Command::Table(c) => cmd_table(c, &out_root),
    }
}

/// `<root>/<command>-<first 12 hex digits of sha256(config json)>`.
fn run_dir(root: &Path, command: &str, config: &impl Serialize) -> CliResult<PathBuf> {
    let json = serde_json::to_string(config).map_err(|e| CliError::usage(e.to_string()))?;
    let digest = Sha256::digest(json.as_bytes());
    let hash: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let dir = root.join(format!("{command}-{hash}"));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), format!("{json}\n"))?;
    Ok(dir)
}

fn csv_header(kind: &str) -> String {
    format!("# l2frac v{FORMAT_VERSION} {kind}\n")
}

struct ResolvedMesh {
    mesh: TemporalMesh,
    k: Option<usize>,
}

fn auto_k(alpha: Option<f64>, theta: f64, grading: f64) -> CliResult<usize> {
    let alpha = alpha.ok_or_else(|| CliError::usage("--alpha is needed to compute K"))?;
    let sb = sigma_bar(alpha, theta)?;
    Ok(compute_k(grading, sb.value)?)
}

fn build_mesh(args: &MeshArgs, alpha: Option<f64>, theta: f64) -> CliResult<ResolvedMesh> {
    if let Some(path) = &args.file {
        return Ok(ResolvedMesh {
            mesh: TemporalMesh::read(path)?,
            k: None,
        });
    }
    let steps = args
        .steps
        .ok_or_else(|| CliError::usage("--M is required unless --file is given"))?;
    if args.modified {
        let k = match args.k {
            Some(k) => k,
            None => auto_k(alpha, theta, args.grading)?,
        };
        let mesh = TemporalMesh::modified_graded(args.t_final, steps, args.grading, k)?;
        Ok(ResolvedMesh { mesh, k: Some(k) })
    } else {
        if args.k.is_some() {
            return Err(CliError::usage("--K only applies with --modified"));
        }
        Ok(ResolvedMesh {
            mesh: TemporalMesh::graded(args.t_final, steps, args.grading)?,
            k: None,
        })
    }
}

fn resolve_variant(l1_start: Option<usize>, alpha: f64, theta: f64, grading: f64) -> CliResult<Variant> {
    Ok(match l1_start {
        None => Variant::Standard,
        Some(0) => Variant::L1Start {
            k: auto_k(Some(alpha), theta, grading)?,
        },
        Some(k) => Variant::L1Start { k },
    })
}

fn cmd_mesh(c: MeshCmd, out_root: &Path) -> CliResult<()> {
    let resolved = build_mesh(&c.mesh, c.alpha, c.theta)?;
    let mesh = &resolved.mesh;
    #[derive(Serialize)]
    struct Cfg<'a> {
        mesh: &'a MeshArgs,
        alpha: Option<f64>,
        theta: f64,
        k: Option<usize>,
    }
    let dir = run_dir(out_root, "mesh", &Cfg { mesh: &c.mesh, alpha: c.alpha, theta: c.theta, k: resolved.k })?;
    let path = dir.join("mesh.txt");
    fs::write(&path, mesh.to_text())?;
    let report = mesh.regularity(c.mesh.grading);
    fs::write(
        dir.join("regularity.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )?;
    println!("nodes: {}", mesh.steps() + 1);
    println!("final_time: {}", mesh.final_time());
    if let Some(k) = resolved.k {
        println!("K: {k}");
    }
    println!("sigma_monotone_nonneg: {}", report.sigma_monotone_nonneg);
    println!("rho_monotone_ge_one: {}", report.rho_monotone_ge_one);
    println!("mesh_file: {}", path.display());
    if c.print_nodes {
        print!("{}", mesh.to_text());
    }
    Ok(())
}

fn cmd_certify(c: CertifyCmd, out_root: &Path) -> CliResult<()> {
    let resolved = build_mesh(&c.mesh, Some(c.alpha), c.theta)?;
    let variant = resolve_variant(c.l1_start, c.alpha, c.theta, c.mesh.grading)?;
    let mut cert = certify(&resolved.mesh, c.alpha, c.theta, variant)?;
    if c.verify_inverse {
        let op = L2Operator::new(resolved.mesh.clone(), c.alpha, variant)?;
        cert.verify_inverse(&op, c.inverse_cap, 1e-12)?;
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        mesh: &'a MeshArgs,
        alpha: f64,
        theta: f64,
        variant: Variant,
        verify_inverse: bool,
    }
    let dir = run_dir(
        out_root,
        "certify",
        &Cfg { mesh: &c.mesh, alpha: c.alpha, theta: c.theta, variant, verify_inverse: c.verify_inverse },
    )?;
    let json = serde_json::to_string_pretty(&cert).unwrap();
    fs::write(dir.join("certificate.json"), &json)?;
    println!("passed: {}", cert.passed);
    println!("sigma_bar: {}", cert.sigma_bar);
    println!("K: {}", cert.k);
    if let Some(min) = cert.inverse_min_entry {
        println!("inverse_min_entry: {min:e}");
    }
    if let Some(f) = &cert.first_failure {
        println!("first_failure: m = {}: {}", f.m, f.condition);
    }
    println!("certificate: {}", dir.join("certificate.json").display());
    if cert.passed {
        Ok(())
    } else {
        Err(CliError::numerical("certification failed"))
    }
}

fn cmd_solve(c: SolveCmd, out_root: &Path) -> CliResult<()> {
    let theta = c.theta.unwrap_or(if c.preset == Preset::Sinx { THETA_PARABOLIC } else { THETA_ODE });
    let resolved = build_mesh(&c.mesh, Some(c.alpha), theta)?;
    let mesh = &resolved.mesh;
    let variant = resolve_variant(c.l1_start, c.alpha, theta, c.mesh.grading)?;
    let t_final = mesh.final_time();
    #[derive(Serialize)]
    struct Cfg<'a> {
        preset: Preset,
        mesh: &'a MeshArgs,
        alpha: f64,
        variant: Variant,
        interior_nodes: Option<usize>,
        grid_exact: bool,
    }
    let parabolic = c.preset == Preset::Sinx;
    let cfg = Cfg {
        preset: c.preset,
        mesh: &c.mesh,
        alpha: c.alpha,
        variant,
        interior_nodes: parabolic.then_some(c.interior_nodes),
        grid_exact: parabolic && c.grid_exact,
    };
    if parabolic {
        let p = if c.grid_exact {
            Parabolic1DProblem::sin_grid_exact(c.alpha, t_final, c.interior_nodes)
        } else {
            Parabolic1DProblem::sin_manufactured(c.alpha, t_final, c.interior_nodes)
        };
        let sol = solve_parabolic_1d(&p, mesh, variant)?;
        let dir = run_dir(out_root, "solve", &cfg)?;
        let mut errs = csv_header("parabolic-errors");
        errs.push_str("m,t_m,l2_error,residual\n");
        let l2 = sol.l2_errors.as_ref().unwrap();
        for m in 0..sol.times.len() {
            errs.push_str(&format!("{m},{},{},{}\n", sol.times[m], l2[m], sol.residuals[m]));
        }
        fs::write(dir.join("errors.csv"), errs)?;
        let last = sol.fields.len() - 1;
        fs::write(
            dir.join("final.csv"),
            csv_header("parabolic-snapshot") + &sol.snapshot_csv(last),
        )?;
        println!("final_l2_error: {:e}", sol.final_l2_error().unwrap());
        println!("max_l2_error: {:e}", sol.max_l2_error().unwrap());
        println!("output: {}", dir.display());
        return Ok(());
    }
    let problem = match c.preset {
        Preset::Talpha => ScalarProblem::t_alpha(c.alpha, t_final),
        Preset::Zero => ScalarProblem::zero(c.alpha, t_final),
        Preset::Quad => ScalarProblem::quadratic(c.alpha, t_final),
        Preset::Sinx => unreachable!(),
    };
    let sol = solve_scalar(&problem, mesh, variant)?;
    let dir = run_dir(out_root, "solve", &cfg)?;
    fs::write(dir.join("solution.csv"), csv_header("scalar-solution") + &sol.to_csv())?;
    println!("final_error: {:e}", sol.final_error().unwrap());
    println!("max_nodal_error: {:e}", sol.max_nodal_error().unwrap());
    if sol.errors.as_ref().unwrap().len() > 2 {
        let tail = sol.errors.as_ref().unwrap()[2..]
            .iter()
            .fold(0.0f64, |a, e| a.max(e.abs()));
        println!("max_error_from_m2: {tail:e}");
    }
    println!("output: {}", dir.display());
    Ok(())
}

fn paper_campaign(which: PaperTable) -> CampaignConfig {
    let gradings = match which {
        PaperTable::ErrorsAt1 => vec!["1", "(3-a)/0.95", "(3-a)/a"],
        PaperTable::MaxNodal => vec!["1", "3-a", "(3-a)/a"],
    };
    CampaignConfig {
        alphas: Some(vec![0.3, 0.5, 0.7]),
        gradings: Some(gradings.into_iter().map(String::from).collect()),
        steps: Some(Campaign::paper_steps()),
        metric: Some(match which {
            PaperTable::ErrorsAt1 => MetricArg::AtFinal,
            PaperTable::MaxNodal => MetricArg::MaxNodal,
        }),
        final_time: Some(1.0),
        ..Default::default()
    }
}

/// Merges presets, the config file and flags (in increasing priority) into a campaign.
pub fn resolve_campaign(
    paper: Option<PaperTable>,
    file: Option<CampaignConfig>,
    flags: CampaignConfig,
) -> CliResult<Campaign> {
    let mut cfg = paper.map(paper_campaign).unwrap_or_default();
    for layer in file.into_iter().chain(std::iter::once(flags)) {
        macro_rules! take {
            ($($f:ident),*) => { $( if layer.$f.is_some() { cfg.$f = layer.$f.clone(); } )* };
        }
        take!(alphas, gradings, steps, metric, final_time, problem, interior_nodes, grid_exact, l1_start);
    }
    let alphas = cfg.alphas.filter(|v| !v.is_empty()).ok_or_else(|| CliError::usage("no alpha values given"))?;
    let gradings = cfg
        .gradings
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::usage("no gradings given"))?
        .iter()
        .map(|s| GradingRule::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let steps = cfg.steps.filter(|v| !v.is_empty()).ok_or_else(|| CliError::usage("no step counts given"))?;
    for &a in &alphas {
        crate::error::check_alpha(a)?;
        for g in &gradings {
            if !(g.value(a) >= 1.0) {
                return Err(CliError::usage(format!("grading {} is below 1 for alpha = {a}", g.label())));
            }
        }
    }
    if let Some(&m) = steps.iter().find(|&&m| m == 0) {
        return Err(CliError::usage(format!("invalid step count {m}")));
    }
    let final_time = cfg.final_time.unwrap_or(1.0);
    if !(final_time > 0.0) {
        return Err(CliError::usage("final time must be positive"));
    }
    let problem = match cfg.problem.as_deref().unwrap_or("talpha") {
        "talpha" => CampaignProblem::TAlpha,
        "sinx" => CampaignProblem::ParabolicSin {
            interior_nodes: cfg.interior_nodes.unwrap_or(63),
            grid_exact: cfg.grid_exact.unwrap_or(false),
        },
        other => return Err(CliError::usage(format!("unknown problem `{other}`"))),
    };
    let variant = match cfg.l1_start.unwrap_or(0) {
        0 => Variant::Standard,
        k => Variant::L1Start { k },
    };
    Ok(Campaign {
        problem,
        alphas,
        gradings,
        steps,
        metric: match cfg.metric.unwrap_or(MetricArg::AtFinal) {
            MetricArg::AtFinal => Metric::AtFinal,
            MetricArg::MaxNodal => Metric::MaxNodal,
        },
        final_time,
        variant,
    })
}

fn cmd_table(c: TableCmd, out_root: &Path) -> CliResult<()> {
    let file = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            Some(toml::from_str::<CampaignConfig>(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let flags = CampaignConfig {
        alphas: c.alpha,
        gradings: c.gradings,
        steps: c.steps,
        metric: c.metric,
        final_time: c.t_final,
        ..Default::default()
    };
    let campaign = resolve_campaign(c.paper, file, flags)?;
    let table = build_table(&campaign);
    let dir = run_dir(out_root, "table", &campaign)?;
    fs::write(dir.join("table.csv"), table.to_csv())?;
    fs::write(dir.join("table.txt"), table.to_text())?;
    fs::write(dir.join("table.json"), table.to_json())?;
    print!("{}", table.to_text());
    println!("output: {}", dir.display());
    let failed = table
        .rows
        .iter()
        .flat_map(|r| &r.cells)
        .filter(|c| c.status != "ok")
        .count();
    if failed > 0 {
        return Err(CliError::numerical(format!("{failed} cells failed")));
    }
    Ok(())
}

//! Command-line front end for the direct scattering pipeline.
//!
//! Every subcommand loads one [`RunConfig`] (JSON file and/or flags), runs
//! the requested stages, and writes its artifacts into the output directory
//! together with `resolved_config.json`, the fully resolved configuration
//! the run actually used. Outputs are deterministic: the same resolved
//! configuration produces byte-identical files.
//!
//! Exit codes: 0 success, 2 configuration error (including flag and config
//! file problems), 3 failure of a numerical stage or of artifact writing.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nls_direct::{
    convergence_table, run_pipeline, ConvergenceRow, EmitFlags, KernelKind, KernelTriangle,
    LambdaGrid, MarchenkoKernel, PipelineError, PotentialGrid, PotentialSpec, ReferenceKernel,
    RunConfig, ScatteringSample,
};
use serde::Serialize;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nls-direct",
    version,
    about = "Scattering data of compactly supported reflectionless NLS potentials",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all configured artifacts.
    Pipeline(RunArgs),
    /// Grid-refinement study of the left kernel against an analytic reference.
    Convergence(ConvergenceArgs),
    /// Tabulate the configured potential into a two-column `x u` text file.
    Synth(RunArgs),
    /// Write the auxiliary kernel triangles and both Marchenko kernels.
    Kernels(RunArgs),
    /// Write the recovered spectral data (bound states, norming constants).
    Spectral(RunArgs),
    /// Write the scattering coefficients over the lambda grid.
    Scattering(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid steps per half-interval (spacing h = L/NX).
    #[arg(long = "n", value_name = "NX")]
    n: Option<usize>,
    /// Half-width of the support interval [-L, L].
    #[arg(long = "L", value_name = "REAL")]
    l: Option<f64>,
    /// Exponential-fit block size (the fit sees 2N kernel samples).
    #[arg(long = "pencil-N", value_name = "INT")]
    pencil_n: Option<usize>,
    /// Grid steps between fit samples; 0 picks the stride automatically.
    #[arg(long = "pencil-stride", value_name = "INT")]
    pencil_stride: Option<usize>,
    /// Scattering abscissas, equispaced.
    #[arg(long = "lambda-grid", value_name = "MIN:MAX:COUNT", allow_hyphen_values = true)]
    lambda_grid: Option<String>,
    /// Also write the auxiliary kernel triangles (large: O(nx^2) values).
    #[arg(long = "emit-kernels")]
    emit_kernels: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid sizes of the study, finest last.
    #[arg(
        long = "n-list",
        value_name = "NX,NX,...",
        value_delimiter = ',',
        default_value = "300,600,900,1200"
    )]
    n_list: Vec<usize>,
    /// Analytic reference kernel; inferred from the potential when omitted.
    #[arg(long, value_enum, value_name = "ID")]
    reference: Option<ReferenceArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    /// Single-exponential kernel of the one-soliton potential.
    Soliton,
    /// Closed-form kernel of the multisoliton potential.
    Multisoliton,
}

impl From<ReferenceArg> for ReferenceKernel {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Soliton => ReferenceKernel::Soliton,
            ReferenceArg::Multisoliton => ReferenceKernel::Multisoliton,
        }
    }
}

/// CLI failure with its process exit code: configuration problems exit 2,
/// stage and write failures exit 3.
enum CliError {
    Config(String),
    Run { stage: &'static str, message: String },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Run { stage, message } => write!(f, "stage {stage}: {message}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Stage { stage, message } => CliError::Run { stage, message },
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run { .. } => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Pipeline(args) => cmd_pipeline(args, |emit| emit),
        Command::Kernels(args) => cmd_pipeline(args, |mut emit| {
            emit.kernels = true;
            emit.omega = true;
            emit.spectral = false;
            emit.scattering = false;
            emit
        }),
        Command::Spectral(args) => cmd_pipeline(args, |mut emit| {
            emit.omega = false;
            emit.spectral = true;
            emit.scattering = false;
            emit
        }),
        Command::Scattering(args) => cmd_pipeline(args, |mut emit| {
            emit.omega = false;
            emit.spectral = false;
            emit.scattering = true;
            emit
        }),
        Command::Synth(args) => cmd_synth(args),
        Command::Convergence(args) => cmd_convergence(args),
    }
}

/// Shared driver of `pipeline`, `kernels`, `spectral`, and `scattering`:
/// the subcommands differ only in which artifacts they emit.
fn cmd_pipeline(args: RunArgs, shape: impl FnOnce(EmitFlags) -> EmitFlags) -> Result<(), CliError> {
    let mut config = load_config(&args)?;
    config.emit = shape(config.emit);
    let out = run_pipeline(&config)?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    let dir = prepare_out_dir(&out.config.out)?;
    let mut written = Vec::new();
    write_artifact(&dir, "resolved_config.json", &config_echo(&out.config), &mut written)?;
    if let Some((kbar, m)) = &out.kernels {
        write_artifact(&dir, "kbar.json", &triangle_dump(kbar), &mut written)?;
        write_artifact(&dir, "m.json", &triangle_dump(m), &mut written)?;
    }
    if out.config.emit.omega {
        write_artifact(&dir, "omega_left.csv", &omega_csv(&out.omega_left), &mut written)?;
        write_artifact(&dir, "omega_right.csv", &omega_csv(&out.omega_right), &mut written)?;
    }
    if out.config.emit.spectral {
        let json = to_pretty_json(&out.spectral)?;
        write_artifact(&dir, "spectral.json", &json, &mut written)?;
    }
    if out.config.emit.scattering {
        write_artifact(&dir, "scattering.csv", &scattering_csv(&out.scattering), &mut written)?;
    }
    report_written(&written);
    Ok(())
}

fn cmd_synth(args: RunArgs) -> Result<(), CliError> {
    let config = load_config(&args)?.resolved()?;
    let model = config.potential.build()?;
    let grid = nls_direct::tabulate(&model, config.l, config.nx)
        .map_err(|e| CliError::Run { stage: "potential", message: e.to_string() })?;
    let dir = prepare_out_dir(&config.out)?;
    let mut written = Vec::new();
    write_artifact(&dir, "resolved_config.json", &config_echo(&config), &mut written)?;
    write_artifact(&dir, "potential.txt", &potential_table(&grid), &mut written)?;
    report_written(&written);
    Ok(())
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<(), CliError> {
    let config = load_config(&args.run)?;
    let reference = match args.reference {
        Some(r) => r.into(),
        None => infer_reference(&config.potential)?,
    };
    let rows = convergence_table(&config, &args.n_list, reference)?;
    let dir = prepare_out_dir(&config.out)?;
    let mut written = Vec::new();
    write_artifact(&dir, "resolved_config.json", &config_echo(&config.resolved()?), &mut written)?;
    write_artifact(&dir, "convergence.csv", &convergence_csv(&rows), &mut written)?;
    report_written(&written);
    Ok(())
}

fn infer_reference(potential: &PotentialSpec) -> Result<ReferenceKernel, CliError> {
    match potential {
        PotentialSpec::Soliton { .. } => Ok(ReferenceKernel::Soliton),
        PotentialSpec::Multisoliton { .. } => Ok(ReferenceKernel::Multisoliton),
        _ => Err(CliError::Config(
            "the convergence study needs an analytic reference kernel; \
             use a soliton or multisoliton potential"
                .into(),
        )),
    }
}

/// Loads the configuration file (if any) and applies the flag overrides.
/// Table paths in a config file are taken relative to the file itself.
fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
            let mut config: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
            rebase_table_path(&mut config, path);
            config
        }
        None => RunConfig::default(),
    };
    if let Some(nx) = args.n {
        config.nx = nx;
    }
    if let Some(l) = args.l {
        config.l = l;
    }
    if let Some(n) = args.pencil_n {
        config.pencil.n = n;
    }
    if let Some(stride) = args.pencil_stride {
        config.pencil.stride = stride;
    }
    if let Some(spec) = &args.lambda_grid {
        config.lambda = parse_lambda_grid(spec)?;
    }
    if let Some(out) = &args.out {
        config.out = out.display().to_string();
    }
    if args.emit_kernels {
        config.emit.kernels = true;
    }
    Ok(config)
}

fn rebase_table_path(config: &mut RunConfig, config_path: &Path) {
    if let PotentialSpec::Table { path } = &mut config.potential {
        let table = Path::new(path.as_str());
        if table.is_relative() {
            if let Some(dir) = config_path.parent() {
                *path = dir.join(table).display().to_string();
            }
        }
    }
}

fn parse_lambda_grid(text: &str) -> Result<LambdaGrid, CliError> {
    let bad = || CliError::Config(format!("--lambda-grid expects MIN:MAX:COUNT, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let &[min, max, count] = parts.as_slice() else {
        return Err(bad());
    };
    Ok(LambdaGrid {
        min: min.trim().parse().map_err(|_| bad())?,
        max: max.trim().parse().map_err(|_| bad())?,
        count: count.trim().parse().map_err(|_| bad())?,
    })
}

fn prepare_out_dir(out: &str) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(out);
    fs::create_dir_all(&dir).map_err(|e| CliError::Run {
        stage: "write",
        message: format!("creating {}: {e}", dir.display()),
    })?;
    Ok(dir)
}

fn write_artifact(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Run {
        stage: "write",
        message: format!("{}: {e}", path.display()),
    })?;
    written.push(path);
    Ok(())
}

fn report_written(written: &[PathBuf]) {
    for path in written {
        println!("wrote {}", path.display());
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Run { stage: "write", message: e.to_string() })
}

fn config_echo(config: &RunConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}

/// Two-column `x u` table of every node and midpoint sample, in grid order.
/// The values are written with shortest round-trip formatting, so feeding
/// the file back through a `table` potential at the same `L` and `nx`
/// reproduces the sampled grid (and every later artifact) bit for bit.
fn potential_table(grid: &PotentialGrid) -> String {
    let nx = grid.nx() as i64;
    let h = grid.h();
    let mut text = String::from("# x u\n");
    for i in -2 * nx..=2 * nx {
        let x = i as f64 * h / 2.0;
        let u = if i.rem_euclid(2) == 0 { grid.u(i / 2) } else { grid.u_half((i - 1) / 2) };
        text.push_str(&format!("{x:e} {u:e}\n"));
    }
    text
}

fn omega_csv(kernel: &MarchenkoKernel) -> String {
    let mut text = String::from("alpha,omega\n");
    for k in 0..kernel.len() {
        text.push_str(&format!("{:e},{:e}\n", kernel.alpha(k), kernel.value(k)));
    }
    text
}

fn scattering_csv(samples: &[ScatteringSample]) -> String {
    let mut text = String::from("lambda");
    for side in ["a_l", "a_r"] {
        for j in 1..=4 {
            text.push_str(&format!(",{side}{j}_re,{side}{j}_im"));
        }
    }
    text.push_str(",t_re,t_im,l_re,l_im,r_re,r_im,disc_t,disc_l,disc_r\n");
    for row in samples {
        text.push_str(&format!("{:e}", row.lambda));
        for c in row.a_left.iter().chain(&row.a_right).chain([&row.t, &row.l, &row.r]) {
            text.push_str(&format!(",{:e},{:e}", c.re, c.im));
        }
        text.push_str(&format!(",{:e},{:e},{:e}\n", row.disc_t, row.disc_l, row.disc_r));
    }
    text
}

fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut text = String::from("n,relative_error,ratio\n");
    for row in rows {
        match row.ratio {
            Some(ratio) => {
                text.push_str(&format!("{},{:e},{:e}\n", row.n, row.relative_error, ratio))
            }
            None => text.push_str(&format!("{},{:e},\n", row.n, row.relative_error)),
        }
    }
    text
}

/// Debug dump of a solved kernel triangle. Row `t = 0..=2nx` holds the
/// `2t + 1` values of the `up`/`dn` pair along the grid line `x = x_i`,
/// `i = nx - t` for left-side kernels and `i = t - nx` for right-side ones,
/// indexed by the offset `|j - i|` from the diagonal. `ext_up` and `ext_dn`
/// are the constancy-region extensions, indexed by that offset and by
/// `(x + y)/h + 2nx` respectively.
#[derive(Serialize)]
struct TriangleDump<'a> {
    kind: &'static str,
    nx: usize,
    h: f64,
    rows: Vec<TriangleRow<'a>>,
    ext_up: &'a [f64],
    ext_dn: &'a [f64],
}

#[derive(Serialize)]
struct TriangleRow<'a> {
    t: usize,
    up: &'a [f64],
    dn: &'a [f64],
}

fn triangle_dump(triangle: &KernelTriangle) -> String {
    let kind = match triangle.kind() {
        KernelKind::KBar => "kbar",
        KernelKind::K => "k",
        KernelKind::M => "m",
        KernelKind::MBar => "mbar",
    };
    let dump = TriangleDump {
        kind,
        nx: triangle.nx(),
        h: triangle.h(),
        rows: (0..=2 * triangle.nx())
            .map(|t| TriangleRow { t, up: triangle.row_up(t), dn: triangle.row_dn(t) })
            .collect(),
        ext_up: triangle.ext_up(),
        ext_dn: triangle.ext_dn(),
    };
    let mut text = serde_json::to_string(&dump).expect("triangle dump serializes");
    text.push('\n');
    text
}

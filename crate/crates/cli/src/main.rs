//! Command-line front end: reproducible, scriptable subcommands over the
//! simulation toolkit.
//!
//! Every run is driven entirely by its arguments and the configured seed;
//! no subcommand reads the system clock or any other nondeterministic
//! source, so the same invocation always produces byte-identical output.
//! Every output file begins with a metadata header recording version,
//! seed, and the full configuration: `#` lines in CSV, an XML comment in
//! SVG. Failures print one machine-parseable line to stderr,
//! `error: CODE: detail`, and exit 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtdoa_core::dtdoa::DtdoaMeasurement;
use dtdoa_core::montecarlo::{
    emit_error_histogram_csv, emit_error_histogram_svg, emit_offset_family_csv,
    emit_offset_family_svg, emit_target_csv, run_mc, McConfig, McTarget, NoiseFamily,
};
use dtdoa_core::report::{fmt_sig, SIG_DEFAULT};
use dtdoa_core::scenarios::{
    anchor_variance_reports, emit_measurements_csv, emit_pdop_map_csv, emit_pdop_map_svg,
    emit_scalability_csv, emit_static_csv, emit_static_svg, emit_sync_demo_csv,
    emit_sync_demo_tags_csv, emit_variance_report_csv, emit_walk_csv, emit_walk_svg,
    run_scalability, run_static, run_sync_demo, run_walk, sample_measurements, Scenario,
};
use dtdoa_core::solver::{pdop_map, solve, SolveOptions};

#[derive(Parser)]
#[command(
    name = "dtdoa",
    version,
    about = "Deterministic simulation and analysis of downlink TDoA positioning",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One synchronization pass: per-anchor stage-1 estimates and per-tag
    /// stage-2 rates, each next to its configured truth
    SyncDemo(SyncDemoArgs),
    /// Position-fix campaign: static repetitions or a waypoint walk,
    /// depending on the scenario's tags
    Simulate(SimulateArgs),
    /// Monte Carlo validation of the closed-form uncertainties
    Montecarlo(MontecarloArgs),
    /// Closed-form variance report for every anchor of a scenario
    Report(ReportArgs),
    /// Position fix from a measurement CSV
    Solve(SolveArgs),
    /// Dilution-of-precision map over a grid covering the network
    PdopMap(PdopMapArgs),
    /// Update-rate table across fleet sizes
    Scalability(ScalabilityArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FormatArgs {
    /// Write only CSV artifacts (default: both CSV and SVG)
    #[arg(long)]
    csv: bool,
    /// Write only SVG artifacts (default: both CSV and SVG)
    #[arg(long)]
    svg: bool,
}

impl FormatArgs {
    fn want_csv(&self) -> bool {
        self.csv || !self.svg
    }

    fn want_svg(&self) -> bool {
        self.svg || !self.csv
    }
}

#[derive(Args)]
struct SyncDemoArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Repetitions per static tag; ignored for walks
    #[arg(long, default_value_t = 1000)]
    repetitions: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct MontecarloArgs {
    /// Validation target: gamma, gamma-delayed, gamma-bar, epsilon, xi,
    /// phi, lambda, offset-family, or error-histogram
    #[arg(long)]
    target: String,
    /// Trials per anchor
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Randomized protocol configurations, one per anchor
    #[arg(long, default_value_t = 10)]
    anchors: usize,
    /// Seed for parameter draws and noise
    #[arg(long)]
    seed: u64,
    /// Timestamp noise family: gaussian or uniform; error-histogram runs
    /// both and ignores this flag
    #[arg(long, default_value = "uniform")]
    noise: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Measurement CSV, as written by `simulate` (measurements.csv)
    #[arg(long)]
    measurements: PathBuf,
    /// Tag whose rows to solve
    #[arg(long, default_value_t = 0)]
    tag: usize,
    /// Also write the fix as fix.csv into this directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PdopMapArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Grid columns
    #[arg(long, default_value_t = 61)]
    nx: usize,
    /// Grid rows
    #[arg(long, default_value_t = 49)]
    ny: usize,
    /// Margin around the network extent, meters
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct ScalabilityArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Fleet sizes, comma separated
    #[arg(long, default_value = "1,10,100,1000")]
    tags: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// One-line machine-parseable failure: a stable code plus detail.
struct CliError {
    code: &'static str,
    message: String,
}

impl From<dtdoa_core::Error> for CliError {
    fn from(e: dtdoa_core::Error) -> Self {
        CliError { code: e.code(), message: e.to_string() }
    }
}

impl CliError {
    fn io(path: &Path, e: &std::io::Error) -> Self {
        CliError { code: "IO_ERROR", message: format!("{}: {e}", path.display()) }
    }

    fn invalid(message: String) -> Self {
        CliError { code: "CONFIG_INVALID", message }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // The failure contract is a single line; upstream messages may
            // span several.
            let flat: Vec<&str> = e.message.split_whitespace().collect();
            eprintln!("error: {}: {}", e.code, flat.join(" "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SyncDemo(args) => cmd_sync_demo(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::Report(args) => cmd_report(args),
        Command::Solve(args) => cmd_solve(args),
        Command::PdopMap(args) => cmd_pdop_map(args),
        Command::Scalability(args) => cmd_scalability(args),
    }
}

/// Loads, optionally reseeds, and validates a scenario file.
fn load_scenario(args: &ScenarioArgs) -> CliResult<Scenario> {
    let path = &args.scenario;
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError {
                code: "CONFIG_NOT_FOUND",
                message: format!("scenario file {} not found", path.display()),
            }
        } else {
            CliError::io(path, &e)
        }
    })?;
    let mut scenario = Scenario::from_toml_str(&text)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Writes one artifact and reports its path on stdout.
fn write_artifact(dir: &Path, name: &str, content: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, &e))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::io(&path, &e))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Prepends the metadata block to an SVG as an XML comment. XML comments
/// must not contain `--`, so runs of hyphens are broken up.
fn svg_with_header(meta: &str, svg: &str) -> String {
    let safe = meta.replace("--", "- -");
    format!("<!--\n{safe}-->\n{svg}")
}

fn cmd_sync_demo(args: SyncDemoArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let demo = run_sync_demo(&scenario)?;
    write_artifact(&args.out, "sync-demo-anchors.csv", &emit_sync_demo_csv(&scenario, &demo))?;
    write_artifact(&args.out, "sync-demo-tags.csv", &emit_sync_demo_tags_csv(&scenario, &demo))
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let meta = scenario.meta_lines();
    let walking = scenario.tags.iter().any(|t| t.waypoints.is_some());
    if walking {
        let run = run_walk(&scenario)?;
        if args.format.want_csv() {
            write_artifact(&args.out, "walk.csv", &emit_walk_csv(&scenario, &run))?;
        }
        if args.format.want_svg() {
            let svg = svg_with_header(&meta, &emit_walk_svg(&scenario, &run));
            write_artifact(&args.out, "walk.svg", &svg)?;
        }
    } else {
        let run = run_static(&scenario, args.repetitions)?;
        if args.format.want_csv() {
            write_artifact(
                &args.out,
                "static.csv",
                &emit_static_csv(&scenario, args.repetitions, &run),
            )?;
        }
        if args.format.want_svg() {
            let svg = svg_with_header(&meta, &emit_static_svg(&run));
            write_artifact(&args.out, "static.svg", &svg)?;
        }
        if args.format.want_csv() {
            let samples = sample_measurements(&scenario)?;
            write_artifact(
                &args.out,
                "measurements.csv",
                &emit_measurements_csv(&scenario, &samples),
            )?;
        }
    }
    Ok(())
}

fn parse_noise(name: &str) -> CliResult<NoiseFamily> {
    match name {
        "gaussian" => Ok(NoiseFamily::Gaussian),
        "uniform" => Ok(NoiseFamily::Uniform),
        other => Err(CliError::invalid(format!(
            "unknown noise family '{other}', expected gaussian or uniform"
        ))),
    }
}

fn cmd_montecarlo(args: MontecarloArgs) -> CliResult<()> {
    let cfg = McConfig {
        trials: args.trials,
        anchors: args.anchors,
        seed: args.seed,
        noise: parse_noise(&args.noise)?,
        ..McConfig::default()
    };
    match args.target.as_str() {
        "offset-family" => {
            let gamma = run_mc(&cfg, McTarget::Gamma)?;
            let delayed = run_mc(&cfg, McTarget::GammaDelayed)?;
            let bar = run_mc(&cfg, McTarget::GammaBar)?;
            if args.format.want_csv() {
                let csv = emit_offset_family_csv(&cfg, &gamma, &delayed, &bar);
                write_artifact(&args.out, "offset-family.csv", &csv)?;
            }
            if args.format.want_svg() {
                let svg = emit_offset_family_svg(&gamma, &delayed, &bar);
                write_artifact(
                    &args.out,
                    "offset-family.svg",
                    &svg_with_header(&cfg.meta_lines(), &svg),
                )?;
            }
            Ok(())
        }
        "error-histogram" => {
            let cfg_gaussian = McConfig { noise: NoiseFamily::Gaussian, ..cfg.clone() };
            let cfg_uniform = McConfig { noise: NoiseFamily::Uniform, ..cfg };
            let gaussian = run_mc(&cfg_gaussian, McTarget::Lambda)?;
            let uniform = run_mc(&cfg_uniform, McTarget::Lambda)?;
            if args.format.want_csv() {
                let csv = emit_error_histogram_csv(&cfg_gaussian, &cfg_uniform, &gaussian, &uniform);
                write_artifact(&args.out, "error-histogram.csv", &csv)?;
            }
            if args.format.want_svg() {
                let svg = emit_error_histogram_svg(&gaussian, &uniform);
                write_artifact(
                    &args.out,
                    "error-histogram.svg",
                    &svg_with_header(&cfg_gaussian.meta_lines(), &svg),
                )?;
            }
            Ok(())
        }
        name => {
            let target = McTarget::ALL
                .iter()
                .find(|t| t.name() == name)
                .copied()
                .ok_or_else(|| {
                    CliError::invalid(format!(
                        "unknown target '{name}', expected one of gamma, gamma-delayed, \
                         gamma-bar, epsilon, xi, phi, lambda, offset-family, error-histogram"
                    ))
                })?;
            let result = run_mc(&cfg, target)?;
            write_artifact(
                &args.out,
                &format!("mc-{}.csv", target.name()),
                &emit_target_csv(&cfg, &result),
            )
        }
    }
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let reports = anchor_variance_reports(&scenario)?;
    write_artifact(&args.out, "variance-report.csv", &emit_variance_report_csv(&scenario, &reports))
}

/// Parses rows of a measurements.csv back into solver input.
fn parse_measurements(path: &Path, tag: usize) -> CliResult<Vec<DtdoaMeasurement>> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError {
                code: "MEASUREMENTS_NOT_FOUND",
                message: format!("measurement file {} not found", path.display()),
            }
        } else {
            CliError::io(path, &e)
        }
    })?;
    let malformed = |line: usize, what: &str| CliError {
        code: "MEASUREMENTS_INVALID",
        message: format!("{} line {line}: {what}", path.display()),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let (n, header) = lines.next().ok_or_else(|| malformed(0, "missing header"))?;
    if !header.starts_with("tag,anchor,value_m,predicted_variance_m2") {
        return Err(malformed(n + 1, "unexpected header"));
    }
    let mut measurements = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(malformed(n + 1, "expected at least 4 columns"));
        }
        let row_tag: usize =
            fields[0].parse().map_err(|_| malformed(n + 1, "tag is not an integer"))?;
        if row_tag != tag {
            continue;
        }
        let anchor_id: usize =
            fields[1].parse().map_err(|_| malformed(n + 1, "anchor is not an integer"))?;
        let value: f64 =
            fields[2].parse().map_err(|_| malformed(n + 1, "value_m is not a number"))?;
        let variance: f64 = fields[3]
            .parse()
            .map_err(|_| malformed(n + 1, "predicted_variance_m2 is not a number"))?;
        measurements.push(DtdoaMeasurement {
            anchor_id,
            value,
            predicted_variance: if variance.is_finite() { Some(variance) } else { None },
            truth: None,
        });
    }
    if measurements.is_empty() {
        return Err(CliError {
            code: "MEASUREMENTS_INVALID",
            message: format!("no rows for tag {tag} in {}", path.display()),
        });
    }
    Ok(measurements)
}

fn cmd_solve(args: SolveArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let network = scenario.network()?;
    let measurements = parse_measurements(&args.measurements, args.tag)?;
    let fix = solve(&network, &measurements, &SolveOptions::default())?;
    let header = "fix_x_m,fix_y_m,residual_norm,iterations,pdop,cov_xx,cov_xy,cov_yy,converged";
    let num = |x: f64| fmt_sig(x, SIG_DEFAULT);
    let row = format!(
        "{},{},{},{},{},{},{},{},{}",
        num(fix.position.x),
        num(fix.position.y),
        num(fix.residual_norm),
        fix.iterations,
        num(fix.pdop),
        num(fix.covariance[0][0]),
        num(fix.covariance[0][1]),
        num(fix.covariance[1][1]),
        fix.converged,
    );
    println!("{header}");
    println!("{row}");
    if let Some(dir) = &args.out {
        let content = format!("{}{header}\n{row}\n", scenario.meta_lines());
        write_artifact(dir, "fix.csv", &content)?;
    }
    Ok(())
}

fn cmd_pdop_map(args: PdopMapArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let network = scenario.network()?;
    let xs: Vec<f64> =
        network.anchors.iter().map(|p| p.x).chain([network.master.x]).collect();
    let ys: Vec<f64> =
        network.anchors.iter().map(|p| p.y).chain([network.master.y]).collect();
    let xb = (
        xs.iter().copied().fold(f64::INFINITY, f64::min) - args.margin,
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + args.margin,
    );
    let yb = (
        ys.iter().copied().fold(f64::INFINITY, f64::min) - args.margin,
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + args.margin,
    );
    let map = pdop_map(&network, xb, yb, args.nx, args.ny)?;
    if args.format.want_csv() {
        write_artifact(&args.out, "pdop-map.csv", &emit_pdop_map_csv(&scenario, xb, yb, &map))?;
    }
    if args.format.want_svg() {
        let svg = svg_with_header(&scenario.meta_lines(), &emit_pdop_map_svg(&network, xb, yb, &map));
        write_artifact(&args.out, "pdop-map.svg", &svg)?;
    }
    Ok(())
}

fn cmd_scalability(args: ScalabilityArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.scenario)?;
    let counts: Vec<usize> = args
        .tags
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::invalid(format!("fleet size '{v}' is not an integer")))
        })
        .collect::<CliResult<_>>()?;
    let rows = run_scalability(&scenario, &counts)?;
    write_artifact(&args.out, "scalability.csv", &emit_scalability_csv(&scenario, &rows))
}

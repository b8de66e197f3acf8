//! Command-line experiments. Every output starts with a `# floydlab ...`
//! line recording the resolved configuration, so reruns can be compared
//! byte for byte.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::divergence::{
    criterion_check, div_function_estimate, estimate_to_csv, growth_fit, DivergenceError, DivergenceParams,
    EstimateOptions, FitThresholds, TripleProtocol, DEFAULT_SAMPLES,
};
use crate::floyd::{
    classify_trend, floyd_weighting, radius_within_margin, sphere_floyd_diameter, DiameterOptions, DiameterTrend,
    FloydError, FloydFunction, DEFAULT_MARGIN,
};
use crate::graph::{read_graph_file, write_graph, GraphBall, GraphFileError};
use crate::groups::{cayley_ball, parse_model, GroupError, DEFAULT_VERTEX_CAP};
use crate::thickness::{verify_thick, ThickError, ThickParams, ThickStructure};

pub const VERTEX_CAP_ENV: &str = "FLOYDLAB_VERTEX_CAP";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "floydlab", version, about = "Floyd boundary, divergence and thickness experiments on Cayley graph balls")]
pub struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Cayley graph ball and write it in the graph file format.
    Gen(GenArgs),
    /// Floyd diameters of spheres.
    FloydDiam(FloydDiamArgs),
    /// Divergence function estimate and growth fit.
    Divergence(DivergenceArgs),
    /// The `D(2n) · f(δn - γ)` decay criterion.
    Criterion(CriterionArgs),
    /// Verify a thick structure and print the verdict as JSON.
    VerifyThick(VerifyThickArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub radius: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Group model, e.g. `zn:2`, `free:2`, `heis`, `prod:zn:1,free:2`.
    #[arg(long, required_unless_present = "graph", conflicts_with = "graph")]
    pub model: Option<String>,
    /// Graph file in the `floydlab-graph v1` format.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Ball radius for `--model`; defaults to the smallest the margin allows.
    #[arg(long, conflicts_with = "graph")]
    pub ball_radius: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct DivergenceFlags {
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value = "auto")]
    pub protocol: TripleProtocol,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FloydDiamArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// `invpow:<p>`, `exp:<λ>`, `invsq1` or `table:<path>`.
    #[arg(long, default_value = "invpow:2")]
    pub floyd: String,
    /// Inclusive range `a..b`, or a single radius.
    #[arg(long)]
    pub radii: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub div: DivergenceFlags,
    /// Inclusive range of `n`, `a..b`.
    #[arg(long)]
    pub n: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriterionArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub div: DivergenceFlags,
    #[arg(long, default_value = "invpow:2")]
    pub floyd: String,
    /// Inclusive range of `n`; needs divergence up to `2n`.
    #[arg(long)]
    pub n: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyThickArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub div: DivergenceFlags,
    /// Structure JSON; defaults to the whole ball as one order-0 subset.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Thickness constant for the default structure.
    #[arg(long = "thick-c", default_value_t = 1.0)]
    pub thick_c: f64,
    /// Diameter floor for the default structure.
    #[arg(long = "d-min", default_value_t = 4)]
    pub d_min: u32,
    /// Quasi-geodesic constant for wideness probes.
    #[arg(long = "qg-c", default_value_t = 1.0)]
    pub qg_c: f64,
    #[arg(long, default_value_t = 8)]
    pub segment: u32,
    /// Divergence fit range `a..b`.
    #[arg(long, default_value = "1..4")]
    pub n: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    GraphFile(#[from] GraphFileError),
    #[error(transparent)]
    Floyd(#[from] FloydError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Thick(#[from] ThickError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

/// Result of one invocation, kept in memory so tests can inspect it.
#[derive(Debug, Default, PartialEq)]
pub struct Execution {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

/// Parses `args` (program name first) and runs the command.
pub fn execute<I, T>(args: I) -> Execution
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Execution { stdout: text, ..Default::default() }
            } else {
                Execution { stderr: text, code, ..Default::default() }
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build() {
        Ok(pool) => pool,
        Err(e) => return Execution { stderr: format!("error: thread pool: {e}\n"), code: EXIT_INPUT, ..Default::default() },
    };
    let mut exec = Execution::default();
    match pool.install(|| run(&cli.command, &mut exec)) {
        Ok(code) => exec.code = code,
        Err(e) => {
            let _ = writeln!(exec.stderr, "error: {e}");
            exec.code = EXIT_INPUT;
        }
    }
    exec
}

fn run(command: &Command, exec: &mut Execution) -> Result<i32, CliError> {
    match command {
        Command::Gen(a) => cmd_gen(a, exec),
        Command::FloydDiam(a) => cmd_floyd_diam(a, exec),
        Command::Divergence(a) => cmd_divergence(a, exec),
        Command::Criterion(a) => cmd_criterion(a, exec),
        Command::VerifyThick(a) => cmd_verify_thick(a, exec),
    }
}

fn vertex_cap() -> Result<usize, CliError> {
    match std::env::var(VERTEX_CAP_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{VERTEX_CAP_ENV}={v:?} is not a vertex count"))),
        Err(_) => Ok(DEFAULT_VERTEX_CAP),
    }
}

pub fn parse_range(text: &str) -> Result<RangeInclusive<u32>, CliError> {
    let bad = || CliError::Usage(format!("range {text:?} must be `a..b` with a ≤ b, or a single integer"));
    let (a, b) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let v = text.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

fn check_margin(margin: f64) -> Result<(), CliError> {
    if !(margin >= 2.0 && margin.is_finite()) {
        return Err(CliError::Usage(format!("--margin must be ≥ 2, got {margin}")));
    }
    Ok(())
}

/// Loads the ball and describes its source for the header. `needed` gives
/// the default ball radius when `--ball-radius` is absent.
fn load_ball(source: &SourceArgs, needed: impl Fn(bool) -> u32) -> Result<(GraphBall, String), CliError> {
    check_margin(source.margin)?;
    match (&source.model, &source.graph) {
        (Some(spec), None) => {
            let model = parse_model(spec)?;
            let radius = source.ball_radius.unwrap_or_else(|| needed(model.cayley_graph_is_tree()));
            let ball = cayley_ball(model.as_ref(), radius, vertex_cap()?)?;
            Ok((ball, format!("model={spec} ball_radius={radius}")))
        }
        (None, Some(path)) => {
            let ball = read_graph_file(path)?;
            let desc = format!("graph={} ball_radius={}", path.display(), ball.radius());
            Ok((ball, desc))
        }
        _ => Err(CliError::Usage("exactly one of --model and --graph is required".into())),
    }
}

fn scaled_radius(n: u32, margin: f64) -> u32 {
    (n as f64 * margin).ceil() as u32
}

fn emit(exec: &mut Execution, out: &Option<PathBuf>, text: String) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text.as_bytes())
            .map_err(|source| CliError::Write { path: path.display().to_string(), source }),
        None => {
            exec.stdout.push_str(&text);
            Ok(())
        }
    }
}

fn div_params(flags: &DivergenceFlags) -> Result<DivergenceParams, CliError> {
    Ok(DivergenceParams::new(flags.delta, flags.gamma)?)
}

fn div_header(flags: &DivergenceFlags) -> String {
    format!(
        "delta={} gamma={} protocol={} samples={} seed={}",
        flags.delta, flags.gamma, flags.protocol, flags.samples, flags.seed
    )
}

pub fn cmd_gen(args: &GenArgs, exec: &mut Execution) -> Result<i32, CliError> {
    let model = parse_model(&args.model)?;
    let ball = cayley_ball(model.as_ref(), args.radius, vertex_cap()?)?;
    let graph = write_graph(&ball);
    let summary = format!(
        "# floydlab gen model={} radius={}\nvertices={} edges={}\n",
        args.model,
        args.radius,
        ball.vertex_count(),
        ball.edge_count()
    );
    match &args.out {
        // The graph format has no comment syntax; the header goes with the summary.
        Some(_) => {
            emit(exec, &args.out, graph)?;
            exec.stdout.push_str(&summary);
        }
        None => {
            exec.stdout.push_str(&graph);
            exec.stderr.push_str(&summary);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_floyd_diam(args: &FloydDiamArgs, exec: &mut Execution) -> Result<i32, CliError> {
    let f = FloydFunction::parse(&args.floyd)?;
    let radii = parse_range(&args.radii)?;
    let margin = args.source.margin;
    let r_max = *radii.end();
    let (ball, source) = load_ball(&args.source, |tree| if tree { r_max } else { scaled_radius(r_max, margin) })?;
    let w = floyd_weighting(&ball, &f)?;
    let mut out = format!("# floydlab floyd-diam {source} floyd={f} radii={}..{} margin={margin}\n", radii.start(), r_max);
    out.push_str("r,diameter,u,v,sphere_size,sampled\n");
    let mut diameters = Vec::new();
    for r in radii {
        if !radius_within_margin(&ball, r, margin) {
            let _ = writeln!(exec.stderr, "note: r={r} omitted, beyond ball radius {} / margin {margin}", ball.radius());
            continue;
        }
        let d = sphere_floyd_diameter(&w, r, DiameterOptions { margin, ..DiameterOptions::default() })?;
        let _ = writeln!(out, "{},{},{},{},{},{}", d.r, d.diameter, d.witness.0, d.witness.1, d.sphere_size, d.sampled);
        diameters.push(d.diameter);
    }
    if diameters.is_empty() {
        return Err(CliError::Usage("no radius in range is admissible under the margin".into()));
    }
    let trend = classify_trend(&diameters);
    let _ = writeln!(out, "# trend={}", trend_name(trend));
    emit(exec, &args.out, out)?;
    Ok(if trend == DiameterTrend::Inconclusive { EXIT_INCONCLUSIVE } else { EXIT_OK })
}

fn trend_name(t: DiameterTrend) -> &'static str {
    match t {
        DiameterTrend::Vanishing => "vanishing",
        DiameterTrend::NonVanishing => "non-vanishing",
        DiameterTrend::Inconclusive => "inconclusive",
    }
}

/// Default ball radius for divergence up to `n_max`.
fn divergence_radius(n_max: u32, params: DivergenceParams, margin: f64, tree: bool) -> u32 {
    if tree {
        params.relevant_radius(n_max) + n_max
    } else {
        scaled_radius(n_max, margin)
    }
}

pub fn cmd_divergence(args: &DivergenceArgs, exec: &mut Execution) -> Result<i32, CliError> {
    let params = div_params(&args.div)?;
    let range = parse_range(&args.n)?;
    let n_max = *range.end();
    let margin = args.source.margin;
    let (ball, source) = load_ball(&args.source, |tree| divergence_radius(n_max, params, margin, tree))?;
    let mut estimate = div_function_estimate(
        &ball,
        n_max,
        params,
        args.div.protocol,
        args.div.seed,
        EstimateOptions { margin, samples: args.div.samples, ..EstimateOptions::default() },
    )?;
    estimate.samples.retain(|s| range.contains(&s.n));
    let mut out = format!(
        "# floydlab divergence {source} n={}..{} margin={margin} {}\n",
        range.start(),
        n_max,
        div_header(&args.div)
    );
    out.push_str(&estimate_to_csv(&estimate));
    let _ = writeln!(out, "# lower_bound protocol_used={} triples={}", estimate.protocol, estimate.triples_evaluated);
    let code = match growth_fit(&estimate.samples, FitThresholds::default()) {
        Ok(fit) => {
            let slope = fit.slope.map_or("none".to_string(), |s| format!("{s:.6}"));
            let _ = writeln!(out, "# fit slope={slope} verdict={}", fit.verdict);
            EXIT_OK
        }
        Err(DivergenceError::InsufficientData(k)) => {
            let _ = writeln!(out, "# fit insufficient_data finite_samples={k}");
            EXIT_INCONCLUSIVE
        }
        Err(e) => return Err(e.into()),
    };
    emit(exec, &args.out, out)?;
    Ok(code)
}

pub fn cmd_criterion(args: &CriterionArgs, exec: &mut Execution) -> Result<i32, CliError> {
    let params = div_params(&args.div)?;
    let f = FloydFunction::parse(&args.floyd)?;
    let range = parse_range(&args.n)?;
    let n_max = 2 * *range.end();
    let margin = args.source.margin;
    let (ball, source) = load_ball(&args.source, |tree| divergence_radius(n_max, params, margin, tree))?;
    let estimate = div_function_estimate(
        &ball,
        n_max,
        params,
        args.div.protocol,
        args.div.seed,
        EstimateOptions { margin, samples: args.div.samples, ..EstimateOptions::default() },
    )?;
    let report = criterion_check(&estimate.samples, &f, params, range.clone())?;
    let mut out = format!(
        "# floydlab criterion {source} floyd={f} n={}..{} margin={margin} {}\n",
        range.start(),
        range.end(),
        div_header(&args.div)
    );
    out.push_str("n,d_2n,f_arg,f_value,product\n");
    for t in &report.terms {
        let product = t.product.map_or("inf".to_string(), |p| p.to_string());
        let _ = writeln!(out, "{},{},{},{},{}", t.n, t.d_2n, t.f_arg, t.f_value, product);
    }
    let _ = writeln!(out, "# verdict={}", report.verdict);
    emit(exec, &args.out, out)?;
    Ok(EXIT_OK)
}

pub fn cmd_verify_thick(args: &VerifyThickArgs, exec: &mut Execution) -> Result<i32, CliError> {
    let params = div_params(&args.div)?;
    let range = parse_range(&args.n)?;
    let margin = args.source.margin;
    let (ball, source) = load_ball(&args.source, |tree| {
        divergence_radius(*range.end(), params, margin, tree).max(args.segment.div_ceil(2))
    })?;
    let structure = match &args.structure {
        Some(path) => ThickStructure::read(path)?,
        None => ThickStructure::whole(&ball, args.thick_c, 0, args.d_min),
    };
    let thick = ThickParams {
        divergence: params,
        qg_c: args.qg_c,
        segment_length: args.segment,
        n_min: *range.start(),
        n_max: *range.end(),
        margin,
        protocol: args.div.protocol,
        samples: args.div.samples,
        seed: args.div.seed,
        thresholds: FitThresholds::default(),
    };
    let verdict = verify_thick(&ball, &structure, &thick)?;
    let structure_desc = match &args.structure {
        Some(p) => format!("structure={}", p.display()),
        None => format!("structure=whole thick_c={} d_min={}", args.thick_c, args.d_min),
    };
    let header = format!(
        "# floydlab verify-thick {source} {structure_desc} qg_c={} segment={} n={}..{} margin={margin} {}",
        args.qg_c,
        args.segment,
        range.start(),
        range.end(),
        div_header(&args.div)
    );
    // JSON has no comments, so the header travels as a field.
    let doc = serde_json::json!({ "header": header, "verdict": verdict });
    let mut out = serde_json::to_string_pretty(&doc).expect("verdict serialises");
    out.push('\n');
    emit(exec, &args.out, out)?;
    Ok(EXIT_OK)
}

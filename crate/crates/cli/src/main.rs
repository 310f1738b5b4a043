use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marband::bandwidth::select_bandwidths;
use marband::exec::with_threads;
use marband::io::{
    band_header_json, band_svg, constants_report, read_dataset, write_band_csv, write_dataset, write_ecdf, write_table,
};
use marband::sim::uniformity_diagnostic;
use marband::{
    build_band, fit_proposed, run_study, seeded_epsilons, BandSettings, BandwidthMode, BandwidthSpec, CvConfig,
    EpsilonSpec, Execution, Grid, Kernel, MissingModel, Safeguards, Sample, SimConfig,
};

/// Uniform confidence bands for kernel regression with responses missing at random.
#[derive(Debug, Parser)]
#[command(name = "marband", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a dataset and write the band table, its JSON header and optionally an SVG plot.
    Band(BandArgs),
    /// Sup-norm test of H0: m = m0 on the grid.
    Test(TestArgs),
    /// Monte Carlo coverage study on the benchmark model.
    Simulate(SimulateArgs),
    /// Kernel constants and a d_n table.
    Constants(ConstantsArgs),
    /// Write a synthetic dataset drawn from the benchmark model.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// epanechnikov, biweight or triangular
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// lo,hi,count
    #[arg(long, default_value = "0,1,200")]
    grid: String,
    /// Exponent of h = n^-delta (fixed mode)
    #[arg(long)]
    delta: Option<f64>,
    /// Exponent of lambda = n^-beta (fixed mode)
    #[arg(long)]
    beta: Option<f64>,
    /// Select (delta, beta) by leave-one-out cross-validation
    #[arg(long, conflicts_with_all = ["delta", "beta"])]
    cv: bool,
    /// Lower clamp for the estimated selection probability
    #[arg(long, default_value_t = 0.05)]
    p_min: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct BandArgs {
    #[arg(long)]
    data: PathBuf,
    /// One or more comma-separated levels
    #[arg(long, default_value = "0.05")]
    alpha: String,
    /// zero or uniform
    #[arg(long, default_value = "zero")]
    eps: String,
    #[arg(long, default_value_t = 1e-3)]
    kappa: f64,
    /// Output prefix; writes <out>.csv and <out>.json
    #[arg(long)]
    out: PathBuf,
    /// Also write <out>.svg
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Constant null curve
    #[arg(long, conflicts_with = "m0_file")]
    m0: Option<f64>,
    /// CSV with header x,m0; linearly interpolated
    #[arg(long)]
    m0_file: Option<PathBuf>,
    #[arg(long, default_value = "zero")]
    eps: String,
    #[arg(long, default_value_t = 1e-3)]
    kappa: f64,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Comma-separated sample sizes
    #[arg(long, default_value = "1000")]
    n: String,
    /// Comma-separated missingness models: A, B, none
    #[arg(long, default_value = "A")]
    model: String,
    #[arg(long, default_value_t = 300)]
    reps: usize,
    #[arg(long, default_value = "0.10,0.05")]
    alpha: String,
    /// Comma-separated perturbation settings: zero, uniform
    #[arg(long, default_value = "zero")]
    eps: String,
    #[arg(long, default_value_t = 1e-3)]
    kappa: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value = "A")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Exit status with a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

impl From<marband::Error> for Failure {
    fn from(e: marband::Error) -> Self {
        let code = if e.is_validation() { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Band(a) => cmd_band(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Constants(a) => cmd_constants(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse_list<T, F>(text: &str, what: &str, parse: F) -> CliResult<Vec<T>>
where
    F: Fn(&str) -> Option<T>,
{
    let items: Option<Vec<T>> = text.split(',').map(|s| parse(s.trim())).collect();
    match items {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(usage(format!("cannot parse {what} list `{text}`"))),
    }
}

fn parse_grid(text: &str) -> CliResult<Grid> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || usage(format!("--grid expects lo,hi,count, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].parse().map_err(|_| bad())?;
    let hi = parts[1].parse().map_err(|_| bad())?;
    let count = parts[2].parse().map_err(|_| bad())?;
    Ok(Grid::new(lo, hi, count)?)
}

fn parse_eps(text: &str, kappa: f64) -> CliResult<EpsilonSpec> {
    let spec = match text.trim().to_ascii_lowercase().as_str() {
        "zero" => EpsilonSpec::Zero,
        "uniform" => EpsilonSpec::Uniform { kappa },
        other => return Err(usage(format!("--eps must be zero or uniform, got `{other}`"))),
    };
    spec.validate()?;
    Ok(spec)
}

fn bandwidth_mode(fit: &FitArgs) -> CliResult<BandwidthMode> {
    if fit.cv {
        return Ok(BandwidthMode::Cv(CvConfig::default()));
    }
    match (fit.delta, fit.beta) {
        (Some(delta), Some(beta)) => BandwidthSpec::new(delta, beta).map(BandwidthMode::Fixed).map_err(|e| {
            usage(format!(
                "{e}; choose exponents with 1/5 < beta < delta < 1/3 or pass --cv"
            ))
        }),
        (None, None) => Ok(BandwidthMode::Fixed(BandwidthSpec {
            delta: 0.30,
            beta: 0.25,
        })),
        _ => Err(usage("--delta and --beta must be given together")),
    }
}

fn settings(fit: &FitArgs) -> CliResult<BandSettings> {
    let safeguards = Safeguards {
        p_min: fit.p_min,
        ..Safeguards::default()
    };
    safeguards.validate()?;
    Ok(BandSettings {
        kernel: fit.kernel.parse::<Kernel>()?,
        grid: parse_grid(&fit.grid)?,
        safeguards,
        execution: Execution::Parallel,
    })
}

fn load(path: &Path) -> CliResult<Sample> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(read_dataset(BufReader::new(file))?)
}

fn resolve_bandwidth(sample: &Sample, mode: &BandwidthMode, kernel: Kernel, eps: &[f64]) -> CliResult<BandwidthSpec> {
    match mode {
        BandwidthMode::Fixed(bw) => Ok(*bw),
        BandwidthMode::Cv(cv) => Ok(select_bandwidths(sample, kernel, eps, cv, Execution::Parallel)?),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_band(args: BandArgs) -> CliResult<()> {
    let settings = settings(&args.fit)?;
    let mode = bandwidth_mode(&args.fit)?;
    let alphas = parse_list(&args.alpha, "alpha", |s| s.parse::<f64>().ok())?;
    for &a in &alphas {
        marband::gumbel_quantile(a)?;
    }
    let eps_spec = parse_eps(&args.eps, args.kappa)?;
    let sample = load(&args.data)?;
    with_threads(args.fit.threads, || -> CliResult<()> {
        let eps = seeded_epsilons(&eps_spec, sample.len(), args.fit.seed);
        let bw = resolve_bandwidth(&sample, &mode, settings.kernel, &eps)?;
        for &alpha in &alphas {
            let band = build_band(&sample, &bw, &eps, alpha, &settings)?;
            let prefix = if alphas.len() == 1 {
                args.out.clone()
            } else {
                with_suffix(&args.out, &format!("_alpha{alpha}"))
            };
            let mut w = create(&with_suffix(&prefix, ".csv"))?;
            write_band_csv(&band, &mut w)?;
            w.flush()?;
            let mut w = create(&with_suffix(&prefix, ".json"))?;
            writeln!(w, "{}", band_header_json(&band)?)?;
            w.flush()?;
            if args.svg {
                fs::write(with_suffix(&prefix, ".svg"), band_svg(&band, 640.0, 400.0))?;
            }
            let flagged = band.rows.iter().filter(|r| r.flags.any()).count();
            eprintln!(
                "alpha={alpha}: {} grid points, {flagged} flagged, delta={}, beta={}",
                band.rows.len(),
                bw.delta,
                bw.beta
            );
        }
        Ok(())
    })
}

/// Piecewise-linear curve through `(x, m0)` pairs; constant beyond the ends.
fn read_curve(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next().map(|h| h.replace(' ', "")) != Some("x,m0".to_string()) {
        return Err(usage("m0 file needs the header `x,m0`"));
    }
    let mut points = Vec::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let bad = || usage(format!("m0 file row {}: expected two numbers", i + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        points.push((
            a.trim().parse::<f64>().map_err(|_| bad())?,
            b.trim().parse::<f64>().map_err(|_| bad())?,
        ));
    }
    if points.is_empty() || points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(usage("m0 file needs at least one row with strictly increasing x"));
    }
    Ok(points)
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let k = points.partition_point(|p| p.0 < x);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[k - 1].1;
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn cmd_test(args: TestArgs) -> CliResult<()> {
    let settings = settings(&args.fit)?;
    let mode = bandwidth_mode(&args.fit)?;
    marband::gumbel_quantile(args.alpha)?;
    let eps_spec = parse_eps(&args.eps, args.kappa)?;
    let curve = match (args.m0, &args.m0_file) {
        (Some(c), None) => vec![(0.0, c)],
        (None, Some(path)) => read_curve(path)?,
        _ => return Err(usage("give the null curve with --m0 or --m0-file")),
    };
    let sample = load(&args.data)?;
    let (bw, outcome) = with_threads(args.fit.threads, || -> CliResult<_> {
        let eps = seeded_epsilons(&eps_spec, sample.len(), args.fit.seed);
        let bw = resolve_bandwidth(&sample, &mode, settings.kernel, &eps)?;
        let fit = fit_proposed(&sample, &bw, &eps, &settings)?;
        Ok((bw, fit.test(|x| interpolate(&curve, x), args.alpha)?))
    })?;
    let json = serde_json::json!({
        "reject": outcome.reject,
        "t_n": outcome.t_n,
        "critical": outcome.critical,
        "alpha": args.alpha,
        "n": sample.len(),
        "delta": bw.delta,
        "beta": bw.beta,
    });
    let text = serde_json::to_string_pretty(&json).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let settings = settings(&args.fit)?;
    let mode = bandwidth_mode(&args.fit)?;
    let ns = parse_list(&args.n, "n", |s| s.parse::<usize>().ok())?;
    let models = parse_list(&args.model, "model", |s| s.parse::<MissingModel>().ok())?;
    let alphas = parse_list(&args.alpha, "alpha", |s| s.parse::<f64>().ok())?;
    let eps_names = parse_list(&args.eps, "eps", |s| Some(s.to_string()))?;
    let eps_specs: Vec<EpsilonSpec> = eps_names
        .iter()
        .map(|e| parse_eps(e, args.kappa))
        .collect::<CliResult<_>>()?;

    let mut configs = Vec::new();
    for &n in &ns {
        for &model in &models {
            for &eps in &eps_specs {
                let config = SimConfig {
                    n,
                    model,
                    reps: args.reps,
                    seed: args.fit.seed,
                    kernel: settings.kernel,
                    eps,
                    alphas: alphas.clone(),
                    grid: settings.grid,
                    bandwidth: mode.clone(),
                    safeguards: settings.safeguards,
                };
                config.validate()?;
                configs.push(config);
            }
        }
    }

    let reports = with_threads(args.fit.threads, || {
        configs
            .iter()
            .map(|c| run_study(c, Execution::Parallel))
            .collect::<marband::Result<Vec<_>>>()
    })?;

    fs::create_dir_all(&args.out)?;
    let mut w = create(&args.out.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &reports).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    writeln!(w)?;
    w.flush()?;
    for &alpha in &alphas {
        let mut w = create(&args.out.join(format!("table_alpha{alpha}.csv")))?;
        write_table(&reports, alpha, &mut w)?;
        w.flush()?;
    }
    for r in &reports {
        let eps = match r.config.eps {
            EpsilonSpec::Zero => "zero",
            EpsilonSpec::Uniform { .. } => "uniform",
        };
        let name = format!("ecdf_n{}_{}_{}.csv", r.config.n, r.config.model, eps);
        let u = uniformity_diagnostic(&r.u_values)?;
        let v = uniformity_diagnostic(&r.v_values)?;
        let mut w = create(&args.out.join(name))?;
        write_ecdf(&u, &v, &mut w)?;
        w.flush()?;
        for level in &r.levels {
            eprintln!(
                "n={} model={} eps={} alpha={}: coverage proposed={:.3} complete-case={:.3}; area {:.4} / {:.4}; KS(U)={:.3} KS(V)={:.3}; failures={}",
                r.config.n,
                r.config.model,
                eps,
                level.alpha,
                level.proposed.coverage,
                level.complete_case.coverage,
                level.proposed.mean_area,
                level.complete_case.mean_area,
                r.ks_u,
                r.ks_v,
                r.failures
            );
        }
    }
    if reports.iter().any(|r| r.failures > 0) {
        return Err(Failure {
            code: 1,
            message: "some replications failed; see report.json".into(),
        });
    }
    Ok(())
}

fn cmd_constants(args: ConstantsArgs) -> CliResult<()> {
    let kernel: Kernel = args.kernel.parse()?;
    let report = constants_report(kernel)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let model: MissingModel = args.model.parse()?;
    let config = SimConfig::new(args.n, model, 1, args.seed);
    let (_, sample, _) = config.draw(0)?;
    let mut w = create(&args.out)?;
    write_dataset(&sample, &mut w)?;
    w.flush()?;
    Ok(())
}

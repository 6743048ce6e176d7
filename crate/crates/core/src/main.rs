use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use had::bandwidth::BandwidthFlag;
use had::linearity::{self, TestMode};
use had::panel::{self, OutcomeTransform};
use had::sim::{self, Dgp, DgpSpec};
use had::twfe;
use had::was::{self, EstimationMode, WasEstimate, WasOptions};
use had::{make_kernel, HadError, Panel, Result};

#[derive(Parser, Debug)]
#[command(name = "had", version, about = "Difference-in-differences for heterogeneous adoption designs")]
struct Cli {
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format; CSV is available for estimate and event-study tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Log verbosity on stderr.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the weighted average slope.
    Estimate(EstimateArgs),
    /// Estimates for every post period plus pre-trend placebos.
    EventStudy(EventStudyArgs),
    /// Test for a quasi-untreated group.
    TestQug(QugArgs),
    /// Linearity and pre-trend tests.
    TestLinearity(LinearityArgs),
    /// Two-way fixed effects regression and weight diagnostics.
    Twfe(TwfeArgs),
    /// Monte Carlo coverage study of the WAS estimator.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
struct PanelArgs {
    /// Long-format panel with a header row.
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, default_value = "unit")]
    unit: String,
    #[arg(long, default_value = "time")]
    time: String,
    #[arg(long, default_value = "outcome")]
    outcome: String,
    #[arg(long, default_value = "dose")]
    dose: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Override the inferred first treatment period.
    #[arg(long)]
    treatment_period: Option<i64>,
}

impl PanelArgs {
    fn load(&self) -> Result<Panel> {
        if !self.delimiter.is_ascii() {
            return Err(HadError::InvalidArgument(format!("delimiter `{}` is not ASCII", self.delimiter)));
        }
        let schema = had::Schema {
            unit: self.unit.clone(),
            time: self.time.clone(),
            outcome: self.outcome.clone(),
            dose: self.dose.clone(),
            covariates: self.covariates.clone(),
            delimiter: self.delimiter as u8,
            treatment_period: self.treatment_period,
        };
        let file = File::open(&self.panel).map_err(|e| {
            HadError::InvalidArgument(format!("cannot read panel `{}`: {e}", self.panel.display()))
        })?;
        let p = had::load_panel(BufReader::new(file), &schema)?;
        info!(
            "loaded {} units over {} periods, treatment period {}",
            p.n_units(),
            p.periods().len(),
            p.treatment_period()
        );
        Ok(p)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Auto,
    Qug,
    Shifted,
    Mass,
}

#[derive(Args, Debug, Serialize)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Kernel: epa, tri or uni.
    #[arg(long, default_value = "epa")]
    kernel: String,
    /// Fixed main bandwidth (skips selection).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Fixed bias bandwidth; defaults to the main bandwidth when it is fixed.
    #[arg(long)]
    bias_bandwidth: Option<f64>,
    /// Use the same bandwidth for the bias fit.
    #[arg(long)]
    rho1: bool,
    /// Relative tolerance for doses to count as the mass point.
    #[arg(long, default_value_t = 0.0)]
    mass_tol: f64,
}

impl EstimatorArgs {
    fn options(&self) -> Result<WasOptions> {
        Ok(WasOptions {
            kernel: make_kernel(&self.kernel)?,
            alpha: self.alpha,
            bandwidth: self.bandwidth,
            bias_bandwidth: self.bias_bandwidth,
            rho_one: self.rho1,
            mass_tol: self.mass_tol,
        })
    }

    fn resolve(&self, d: &[f64]) -> Result<(EstimationMode, Option<had::QugReport>)> {
        match self.mode {
            ModeArg::Auto => was::resolve_mode(d, self.alpha, self.mass_tol),
            ModeArg::Qug => Ok((EstimationMode::Qug, None)),
            ModeArg::Shifted => Ok((EstimationMode::Shifted, None)),
            ModeArg::Mass => Ok((EstimationMode::MassPoint, None)),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Base period; defaults to the last untreated period.
    #[arg(long)]
    base: Option<i64>,
    /// Target period; defaults to the treatment period.
    #[arg(long)]
    target: Option<i64>,
    /// Run the full pipeline: QUG test, pre-trends, linearity, then estimation.
    #[arg(long)]
    recipe: bool,
    /// Bootstrap draws for the recipe's Stute tests.
    #[arg(long = "B", default_value_t = 500)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct EventStudyArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Write (period, estimate, ci_low, ci_high, is_pretrend) rows here.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QugArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Stute,
    Yatchew,
    Poly,
}

#[derive(Args, Debug, Serialize)]
struct LinearityArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, value_enum, default_value_t = Method::Stute)]
    method: Method,
    /// Joint Stute test over all post-treatment periods.
    #[arg(long)]
    joint: bool,
    /// Test mean independence of pre-treatment outcome changes from the dose.
    #[arg(long)]
    pretrends: bool,
    /// Use deviations from unit-specific linear trends as outcomes.
    #[arg(long)]
    linear_trends: bool,
    #[arg(long = "B", default_value_t = 500)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args, Debug, Serialize)]
struct TwfeArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Regress deviations from unit-specific linear trends.
    #[arg(long)]
    linear_trends: bool,
    /// Report the weights on unit-level slopes.
    #[arg(long)]
    weights: bool,
    /// Target period; defaults to the treatment period.
    #[arg(long)]
    target: Option<i64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DgpArg {
    Dgp1,
    Dgp2,
    Dgp3,
    Dgp3Synthetic,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DgpArg::Dgp1)]
    dgp: DgpArg,
    #[arg(long = "G", default_value_t = 500)]
    g: usize,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "epa")]
    kernel: String,
    #[arg(long)]
    rho1: bool,
    /// CSV with the empirical columns for dgp3.
    #[arg(long)]
    dgp3_file: Option<PathBuf>,
    #[arg(long, default_value = "dose")]
    dose_column: String,
    #[arg(long, default_value = "dy")]
    outcome_column: String,
}

/// Error raised by the CLI layer itself, mapped to exit code 1.
fn internal(msg: impl Into<String>) -> HadError {
    HadError::Io(io::Error::other(msg.into()))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| internal(e.to_string()))
}

fn warn_bandwidth(e: &WasEstimate) {
    if let Some(bw) = &e.bandwidth {
        for f in &bw.flags {
            match f {
                BandwidthFlag::FlatCurvatureCap => warn!("curvature estimate is zero: bandwidth capped at the dose range"),
                BandwidthFlag::BoundaryDensityZero => warn!("no doses near the boundary: boundary density estimate is zero"),
                BandwidthFlag::RuleOfThumb => warn!("fewer than 30 units: rule-of-thumb bandwidth used"),
                BandwidthFlag::UserSupplied => {}
            }
        }
    }
}

const ESTIMATE_COLUMNS: [&str; 13] = [
    "period", "base_period", "is_pretrend", "mode", "beta", "se", "ci_low", "ci_high", "alpha", "h_used", "b_used",
    "n_eff", "G",
];

fn estimate_row(period: i64, base: i64, pretrend: bool, e: &WasEstimate) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    vec![
        period.to_string(),
        base.to_string(),
        pretrend.to_string(),
        to_value(&e.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        e.beta.to_string(),
        e.se.to_string(),
        e.ci_low.to_string(),
        e.ci_high.to_string(),
        e.alpha.to_string(),
        opt(e.h_used),
        opt(e.b_used),
        e.n_eff.to_string(),
        e.g.to_string(),
    ]
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| internal(e.to_string()))
}

enum Output {
    Json(Value),
    Text(String),
}

fn run_estimate(a: &EstimateArgs, format: Format) -> Result<Output> {
    let p = a.panel.load()?;
    let base = a.base.unwrap_or_else(|| p.reference_period());
    let target = a.target.unwrap_or_else(|| p.treatment_period());
    let sample = panel::difference(&p, base, target)?;
    let options = a.estimator.options()?;
    let (mode, qug) = a.estimator.resolve(&sample.d)?;
    info!("estimating with mode {mode:?}");
    let mut result = json!({});
    let mut trail = Vec::new();
    if a.recipe {
        trail = recipe(&p, &sample, a)?;
    }
    let est = was::estimate(&sample, mode, &options)?;
    warn_bandwidth(&est);
    if format == Format::Csv {
        return Ok(Output::Text(csv_table(&ESTIMATE_COLUMNS, &[estimate_row(target, base, target < base, &est)])?));
    }
    result["estimate"] = to_value(&est)?;
    result["base_period"] = json!(base);
    result["target_period"] = json!(target);
    if let Some(q) = qug {
        result["qug"] = to_value(&q)?;
    }
    if a.recipe {
        result["decision_trail"] = Value::Array(trail);
    }
    Ok(Output::Json(result))
}

/// QUG test, pre-trends test, linearity test and the resulting choice
/// between the TWFE slope and the nonparametric estimator.
fn recipe(p: &Panel, sample: &had::DifferencedSample, a: &EstimateArgs) -> Result<Vec<Value>> {
    let alpha = a.estimator.alpha;
    let mut trail = Vec::new();
    let positive: Vec<f64> = sample.d.iter().copied().filter(|&v| v > 0.0).collect();
    let zeros = sample.g_count() - positive.len();
    let qug_rejected = if zeros > 0 {
        trail.push(json!({"step": "qug_test", "skipped": true, "note": format!("{zeros} untreated units: a QUG exists"), "rejected": false}));
        false
    } else {
        let q = had::test_qug(&positive, alpha)?;
        trail.push(json!({"step": "qug_test", "report": to_value(&q)?, "rejected": q.reject}));
        q.reject
    };
    let base = p.reference_period();
    let pre: Vec<i64> = p.pre_periods().filter(|&t| t < base).collect();
    let pretrend_rejected = if pre.is_empty() {
        trail.push(json!({"step": "pretrend_test", "skipped": true, "note": "a single pre-treatment period", "rejected": false}));
        false
    } else {
        let r = linearity::stute_joint_panel(
            p,
            &pre,
            OutcomeTransform::Difference { base: Some(base) },
            TestMode::MeanIndependence,
            a.draws,
            a.seed,
        )?;
        let rej = r.p_value < alpha;
        trail.push(json!({"step": "pretrend_test", "report": to_value(&r)?, "rejected": rej}));
        rej
    };
    let lin = linearity::stute_test(&sample.d, &sample.dy, TestMode::Linearity, a.draws, a.seed)?;
    let lin_rejected = lin.p_value < alpha;
    trail.push(json!({"step": "linearity_test", "report": to_value(&lin)?, "rejected": lin_rejected}));
    let use_twfe = !(qug_rejected || pretrend_rejected || lin_rejected);
    let mut decision = json!({
        "step": "decision",
        "use_twfe": use_twfe,
        "note": if use_twfe {
            "no test rejected: the TWFE slope estimates the average slope"
        } else {
            "a test rejected: rely on the nonparametric estimator"
        },
    });
    if use_twfe {
        decision["twfe"] = to_value(&twfe::twfe_fit(sample, alpha)?)?;
    }
    trail.push(decision);
    Ok(trail)
}

fn run_event_study(a: &EventStudyArgs, format: Format) -> Result<Output> {
    let p = a.panel.load()?;
    let options = a.estimator.options()?;
    let first = panel::difference(&p, p.reference_period(), p.treatment_period())?;
    let (mode, qug) = a.estimator.resolve(&first.d)?;
    let points = was::event_study(&p, mode, &options, None, None)?;
    for pt in &points {
        warn_bandwidth(&pt.estimate);
    }
    let plot_rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            vec![
                pt.period.to_string(),
                pt.estimate.beta.to_string(),
                pt.estimate.ci_low.to_string(),
                pt.estimate.ci_high.to_string(),
                pt.is_pretrend.to_string(),
            ]
        })
        .collect();
    let plot_header = ["period", "estimate", "ci_low", "ci_high", "is_pretrend"];
    if let Some(path) = &a.plot_data {
        std::fs::write(path, csv_table(&plot_header, &plot_rows)?)?;
    }
    if format == Format::Csv {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|pt| estimate_row(pt.period, pt.base_period, pt.is_pretrend, &pt.estimate))
            .collect();
        return Ok(Output::Text(csv_table(&ESTIMATE_COLUMNS, &rows)?));
    }
    let mut result = json!({ "points": to_value(&points)? });
    if let Some(q) = qug {
        result["qug"] = to_value(&q)?;
    }
    Ok(Output::Json(result))
}

fn run_test_qug(a: &QugArgs) -> Result<Output> {
    let p = a.panel.load()?;
    let d = p.unit_doses();
    let positive: Vec<f64> = d.iter().copied().filter(|&v| v > 0.0).collect();
    let dropped = d.len() - positive.len();
    if dropped > 0 {
        warn!("{dropped} zero-dose units dropped: an untreated group exists, so the null holds trivially");
    }
    let report = had::test_qug(&positive, a.alpha)?;
    if report.many_ties {
        warn!("{} doses tie with the minimum: the test assumes a continuous dose", report.ties_collapsed + 1);
    }
    let note = (dropped > 0).then(|| format!("{dropped} zero-dose units dropped before testing; the null holds trivially"));
    Ok(Output::Json(json!({ "report": to_value(&report)?, "dropped_zero_doses": dropped, "note": note })))
}

fn run_test_linearity(a: &LinearityArgs) -> Result<Output> {
    let p = a.panel.load()?;
    let base = p.reference_period();
    let transform = if a.linear_trends {
        OutcomeTransform::LinearTrend { base: Some(base), anchor: None }
    } else {
        OutcomeTransform::Difference { base: Some(base) }
    };
    let mode = if a.pretrends { TestMode::MeanIndependence } else { TestMode::Linearity };
    let periods: Vec<i64> = if a.pretrends {
        // With linear trends the anchor period is zero by construction.
        let anchor = if a.linear_trends { p.previous_period(base) } else { None };
        let pre: Vec<i64> = p.pre_periods().filter(|&t| t < base && Some(t) != anchor).collect();
        if pre.is_empty() {
            return Err(HadError::InsufficientData(
                "no pre-treatment period is left to test".into(),
            ));
        }
        if a.joint { pre } else { vec![pre[pre.len() - 1]] }
    } else if a.joint {
        p.post_periods().collect()
    } else {
        vec![p.treatment_period()]
    };
    let d = p.unit_doses();
    let report = match a.method {
        Method::Stute if !a.panel.covariates.is_empty() && !a.joint => {
            let t = periods[0];
            let y = panel::transformed_outcome(&p, transform, t)?;
            let x = p
                .covariates_at(base)?
                .ok_or_else(|| internal("covariates requested but not loaded"))?
                .into_iter()
                .map(|r| std::iter::once(1.0).chain(r).collect())
                .collect::<Vec<Vec<f64>>>();
            let mut r = linearity::stute_covariates(&d, &y, &x, a.draws, a.seed)?;
            r.periods = vec![t];
            to_value(&r)?
        }
        Method::Stute => to_value(&linearity::stute_joint_panel(&p, &periods, transform, mode, a.draws, a.seed)?)?,
        Method::Yatchew | Method::Poly if a.joint || periods.len() > 1 => {
            return Err(HadError::InvalidArgument("joint tests are only available with --method stute".into()));
        }
        Method::Yatchew => {
            if a.pretrends {
                return Err(HadError::InvalidArgument("pre-trend tests use --method stute or poly".into()));
            }
            let y = panel::transformed_outcome(&p, transform, periods[0])?;
            to_value(&linearity::yatchew_test(&d, &y, a.alpha)?)?
        }
        Method::Poly => {
            let y = panel::transformed_outcome(&p, transform, periods[0])?;
            to_value(&linearity::poly_test_discrete(&d, &y, mode)?)?
        }
    };
    Ok(Output::Json(json!({ "report": report, "periods": periods })))
}

fn run_twfe(a: &TwfeArgs) -> Result<Output> {
    let p = a.panel.load()?;
    let base = p.reference_period();
    let target = a.target.unwrap_or_else(|| p.treatment_period());
    let mut result = json!({ "base_period": base, "target_period": target });
    if a.linear_trends {
        result["estimate"] = to_value(&twfe::twfe_linear_trends(&p, None, None, target, a.alpha)?)?;
    } else {
        let mut sample = panel::difference(&p, base, target)?;
        result["estimate"] = to_value(&twfe::twfe_fit(&sample, a.alpha)?)?;
        if let Some(x) = sample.x.take() {
            let with_intercept = x.into_iter().map(|r| std::iter::once(1.0).chain(r).collect()).collect();
            sample = sample.with_covariates(with_intercept)?;
            result["covariates"] = to_value(&twfe::twfe_covariates(&sample, a.alpha)?)?;
        }
    }
    if a.weights {
        result["weights"] = to_value(&twfe::twfe_weights(&p.unit_doses())?)?;
    }
    Ok(Output::Json(result))
}

fn read_columns(path: &PathBuf, dose: &str, outcome: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path)
        .map_err(|e| HadError::InvalidArgument(format!("cannot read `{}`: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| HadError::MissingColumn(name.into()));
    let (id, iy) = (find(dose)?, find(outcome)?);
    let mut d = Vec::new();
    let mut y = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse = |i: usize, col: &str| -> Result<f64> {
            row[i].trim().parse().map_err(|_| HadError::Parse {
                line,
                column: col.to_string(),
                message: format!("`{}` is not a number", &row[i]),
            })
        };
        d.push(parse(id, dose)?);
        y.push(parse(iy, outcome)?);
    }
    Ok((d, y))
}

fn run_simulate(a: &SimulateArgs) -> Result<Output> {
    let spec = match a.dgp {
        DgpArg::Dgp1 => DgpSpec::new(Dgp::Dgp1, a.g, a.seed),
        DgpArg::Dgp2 => DgpSpec::new(Dgp::Dgp2, a.g, a.seed),
        DgpArg::Dgp3Synthetic => DgpSpec::new(Dgp::Dgp3Synthetic, a.g, a.seed),
        DgpArg::Dgp3 => {
            let path = a
                .dgp3_file
                .as_ref()
                .ok_or_else(|| HadError::InvalidArgument("dgp3 needs --dgp3-file".into()))?;
            let (d, y) = read_columns(path, &a.dose_column, &a.outcome_column)?;
            DgpSpec::dgp3_from_columns(d, y, a.g, a.seed)?
        }
    };
    let options = WasOptions {
        kernel: make_kernel(&a.kernel)?,
        alpha: a.alpha,
        rho_one: a.rho1,
        ..WasOptions::default()
    };
    if a.reps == 0 {
        return Err(HadError::InvalidArgument("at least one replication is required".into()));
    }
    let outcomes = sim::run_coverage_range(&spec, 0..a.reps as u64, EstimationMode::Qug, &options);
    let result = sim::summarize_coverage(&outcomes, spec.true_was());
    if result.failures > 0 {
        warn!("{} replications failed", result.failures);
    }
    Ok(Output::Json(json!({ "dgp": to_value(&spec)?, "result": to_value(&result)? })))
}

fn command_parts(c: &Command) -> (&'static str, Result<Value>) {
    match c {
        Command::Estimate(a) => ("estimate", to_value(a)),
        Command::EventStudy(a) => ("event-study", to_value(a)),
        Command::TestQug(a) => ("test-qug", to_value(a)),
        Command::TestLinearity(a) => ("test-linearity", to_value(a)),
        Command::Twfe(a) => ("twfe", to_value(a)),
        Command::Simulate(a) => ("simulate", to_value(a)),
    }
}

fn run(cli: &Cli) -> Result<String> {
    if cli.format == Format::Csv && !matches!(cli.command, Command::Estimate(_) | Command::EventStudy(_)) {
        return Err(HadError::InvalidArgument("CSV output is only available for estimate and event-study".into()));
    }
    let output = match &cli.command {
        Command::Estimate(a) => run_estimate(a, cli.format)?,
        Command::EventStudy(a) => run_event_study(a, cli.format)?,
        Command::TestQug(a) => run_test_qug(a)?,
        Command::TestLinearity(a) => run_test_linearity(a)?,
        Command::Twfe(a) => run_twfe(a)?,
        Command::Simulate(a) => run_simulate(a)?,
    };
    match output {
        Output::Text(s) => Ok(s),
        Output::Json(result) => {
            let (name, config) = command_parts(&cli.command);
            let doc = json!({
                "command": name,
                "version": env!("CARGO_PKG_VERSION"),
                "config": config?,
                "result": result,
            });
            let mut s = serde_json::to_string_pretty(&doc).map_err(|e| internal(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("HAD_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    warn!("could not size the thread pool: {e}");
                }
            }
            _ => warn!("ignoring HAD_THREADS={v}: expected a positive integer"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    configure_threads();
    match run(&cli) {
        Ok(text) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, text),
                None => io::stdout().write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() { ExitCode::from(2) } else { ExitCode::from(1) }
        }
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use udf_core::analysis::{analyze, spec_samples, AnalysisConfig, AnalysisReport};
use udf_core::corpus::{corpus_case, corpus_cases, run_all, CaseOutcome};
use udf_core::curvature::reach_estimate;
use udf_core::domain::DomainSpec;
use udf_core::norms::{uniformity_report, Verdict, VerdictConfig};
use udf_core::psh::{certify, estimate_interior_level};
use udf_core::registry::distance_providers;
use udf_core::Error;

const EXIT_DIVERGENT: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "udf", version, about = "Signed distance, boundary norms and defining-function diagnostics for implicit domains")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Number of boundary samples
    #[arg(long, global = true, default_value_t = 512)]
    samples: usize,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Projection tolerance
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Finite-difference step (chosen per point when omitted)
    #[arg(long, global = true)]
    fd_step: Option<f64>,
    /// Worker threads (all cores when omitted)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full analysis; writes a JSON report
    Analyze {
        spec: PathBuf,
        /// Derivative order m (repeatable); defaults to the spec's orders
        #[arg(long = "order")]
        orders: Vec<usize>,
        /// Exit with status 2 when any order is DIVERGENT
        #[arg(long)]
        strict: bool,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the growth fits
        #[arg(long)]
        growth_fit: bool,
        /// Compare against samples from the doubled region
        #[arg(long)]
        stability: bool,
    },
    /// Print the reach estimate
    Reach { spec: PathBuf },
    /// Print the uniformity table
    Uniformity {
        spec: PathBuf,
        #[arg(long = "order")]
        orders: Vec<usize>,
        #[arg(long)]
        growth_fit: bool,
    },
    /// Levi-form constants, λ and plurisubharmonicity certification
    Psh {
        spec: PathBuf,
        #[arg(long)]
        complex_dim: usize,
        /// `auto` or a number
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Use the relaxed collar inequality instead of the strict one
        #[arg(long)]
        collar: bool,
        #[arg(long, default_value_t = 1000)]
        collar_points: usize,
    },
    /// Built-in example domains
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Jet of the signed distance at a point
    Oracle {
        spec: PathBuf,
        /// Comma-separated coordinates
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Method::Numeric)]
        method: Method,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    List,
    Run {
        #[arg(long)]
        case: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Numeric,
    Offset,
}

enum Failure {
    Core(Error),
    Io(PathBuf, std::io::Error),
    Usage(String),
    Mismatch(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::SpecFile { .. }) => EXIT_USAGE,
            Failure::Core(
                Error::Validation { .. } | Error::DimensionMismatch { .. } | Error::InvalidParameter(_) | Error::Hypothesis(_),
            ) => EXIT_DATA,
            Failure::Core(_) | Failure::Mismatch(_) => 1,
            Failure::Io(..) => EXIT_IO,
            Failure::Usage(_) => EXIT_USAGE,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Io(p, e) => format!("{}: {e}", p.display()),
            Failure::Usage(m) => m.clone(),
            Failure::Mismatch(names) => format!("verdict mismatch in: {}", names.join(", ")),
        }
    }
}

type Outcome = Result<u8, Failure>;

struct Loaded {
    text: String,
    spec: DomainSpec,
}

fn load(path: &Path, tol: f64, seed: u64) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))?;
    let spec = DomainSpec::parse(&text)?;
    spec.validate(tol, seed)?;
    Ok(Loaded { text, spec })
}

fn config(common: &Common, orders: &[usize], spec: &DomainSpec, stability: bool) -> AnalysisConfig {
    let orders = if !orders.is_empty() {
        orders.to_vec()
    } else if !spec.orders.is_empty() {
        spec.orders.clone()
    } else {
        vec![2]
    };
    AnalysisConfig {
        orders,
        samples: common.samples,
        seed: common.seed,
        tol: common.tol,
        fd_step: common.fd_step,
        stability,
        verdict: VerdictConfig::default(),
    }
}

fn write_out(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| Failure::Io(p.to_path_buf(), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .map_err(|e| Failure::Io(PathBuf::from("<stdout>"), e))
        }
    }
}

fn fmt_reach(r: Option<f64>) -> String {
    r.map_or_else(|| "inf".to_string(), |v| format!("{v:.6}"))
}

fn print_orders(report: &AnalysisReport, growth_fit: bool) {
    println!("{:>5}  {:>12}  {:>12}  {:<12}", "order", "sup ratio", "sup C_b", "verdict");
    for o in &report.orders {
        println!("{:>5}  {:>12.6e}  {:>12.6e}  {:<12}", o.order, o.sup_ratio, o.sup_cb_ratio, o.verdict.to_string());
        if growth_fit {
            println!(
                "       fit: slope {:.4}, intercept {:.4}, {} envelope points",
                o.fit.slope, o.fit.intercept, o.fit.points
            );
        }
    }
}

fn cmd_analyze(common: &Common, spec: &Path, orders: &[usize], strict: bool, out: Option<&Path>, growth_fit: bool, stability: bool) -> Outcome {
    let l = load(spec, common.tol, common.seed)?;
    let cfg = config(common, orders, &l.spec, stability);
    let report = analyze(&l.spec, &l.text, &[], &cfg)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_out(out, &json)?;
    if out.is_some() {
        print_orders(&report, growth_fit);
        println!("reach  {}", fmt_reach(report.reach.reach));
    }
    if strict && report.worst_verdict() == Verdict::Divergent {
        return Ok(EXIT_DIVERGENT);
    }
    Ok(0)
}

fn cmd_reach(common: &Common, spec: &Path) -> Outcome {
    let l = load(spec, common.tol, common.seed)?;
    let samples = spec_samples(&l.spec, &l.spec.region, common.samples, 2, common.seed, common.tol, &[])?;
    let r = reach_estimate(&samples, &l.spec.geometry_field()?, common.seed, common.tol)?;
    println!("{}", fmt_reach((!r.infinite).then_some(r.reach)));
    if !r.probes_passed {
        eprintln!("warning: a uniqueness probe at 0.9 reach did not return to its base point");
    }
    Ok(0)
}

fn cmd_uniformity(common: &Common, spec: &Path, orders: &[usize], growth_fit: bool) -> Outcome {
    let l = load(spec, common.tol, common.seed)?;
    let cfg = config(common, orders, &l.spec, false);
    let top = cfg.orders.iter().copied().max().unwrap_or(2);
    let samples = spec_samples(&l.spec, &l.spec.region, cfg.samples, top, cfg.seed, cfg.tol, &[])?;
    println!("{:>5}  {:>12}  {:>8}  {:<12}", "order", "sup ratio", "slope", "verdict");
    for &m in &cfg.orders {
        let u = uniformity_report(&samples, m, None, &cfg.verdict)?;
        println!("{:>5}  {:>12.6e}  {:>8.4}  {:<12}", m, u.sup_ratio, u.fit.slope, u.verdict.to_string());
        if growth_fit {
            println!("       sup at {:?}, {} envelope points", u.sup_point, u.fit.points);
        }
    }
    Ok(0)
}

fn cmd_psh(common: &Common, spec: &Path, complex_dim: usize, lambda: &str, collar: bool, collar_points: usize) -> Outcome {
    let l = load(spec, common.tol, common.seed)?;
    if 2 * complex_dim != l.spec.dim {
        return Err(Failure::Core(Error::DimensionMismatch {
            expected: l.spec.dim,
            got: 2 * complex_dim,
        }));
    }
    let lambda = match lambda {
        "auto" => None,
        v => Some(v.parse::<f64>().map_err(|_| Failure::Usage(format!("invalid --lambda value `{v}`")))?),
    };
    let geometry = l.spec.geometry_field()?;
    let samples = spec_samples(&l.spec, &l.spec.region, common.samples, 2, common.seed, common.tol, &[])?;
    let reach = reach_estimate(&samples, &geometry, common.seed, common.tol)?;
    let data = certify(&geometry, &samples, reach.reach, !collar, lambda, collar_points, common.seed, common.tol)?;
    println!("C        {:.6}", data.c);
    println!("C2       {:.6}", data.c2);
    println!("lambda   {:.6}", data.lambda);
    match estimate_interior_level(&geometry, &l.spec.region, data.collar_width, 9, common.tol) {
        Ok(a) => println!("A        {:.6} (estimated; rho level {:.6})", a, (data.lambda * a).exp_m1()),
        Err(_) => println!("A        n/a"),
    }
    println!(
        "min eig  boundary {:.6e}, collar {:.6e} over {} points",
        data.boundary_min_eigenvalue, data.collar_min_eigenvalue, data.certified_points
    );
    println!("certification {}", if data.passed { "PASS" } else { "FAIL" });
    Ok(if data.passed { 0 } else { 1 })
}

fn print_outcome(o: &CaseOutcome) {
    for r in &o.rows {
        println!(
            "{:<15} m={}  {:<10}  expected {:<12} observed {:<12} sup {:.4e}  slope {:.3}",
            o.name,
            r.order,
            r.metric.to_string(),
            r.expected.to_string(),
            r.observed.to_string(),
            r.sup,
            r.slope
        );
    }
}

fn cmd_corpus(common: &Common, action: &CorpusAction) -> Outcome {
    let base = AnalysisConfig {
        samples: common.samples,
        seed: common.seed,
        tol: common.tol,
        fd_step: common.fd_step,
        ..AnalysisConfig::default()
    };
    match action {
        CorpusAction::List => {
            for c in corpus_cases() {
                let exp: Vec<String> = c
                    .expected
                    .iter()
                    .map(|e| format!("m={} {} {}", e.order, e.metric, e.verdict))
                    .collect();
                println!("{:<15} dim {}  {}", c.name, c.spec.dim, exp.join("; "));
            }
            Ok(0)
        }
        CorpusAction::Run { case } => {
            let results = match case {
                Some(name) => {
                    let c = corpus_case(name).ok_or_else(|| Failure::Usage(format!("unknown corpus case `{name}`")))?;
                    vec![(c.name.to_string(), c.run(&base))]
                }
                None => run_all(&base),
            };
            let mut bad = Vec::new();
            for (name, r) in results {
                let o = r?;
                print_outcome(&o);
                if !o.passed {
                    bad.push(name);
                }
            }
            if bad.is_empty() {
                Ok(0)
            } else {
                Err(Failure::Mismatch(bad))
            }
        }
    }
}

fn cmd_oracle(common: &Common, spec: &Path, point: &[f64], order: usize, method: Method) -> Outcome {
    let l = load(spec, common.tol, common.seed)?;
    if point.len() != l.spec.dim {
        return Err(Failure::Core(Error::DimensionMismatch {
            expected: l.spec.dim,
            got: point.len(),
        }));
    }
    let name = match method {
        Method::Numeric => "numeric",
        Method::Offset => "offset",
    };
    let providers = distance_providers();
    let jet = providers
        .get(name)?
        .jet(&l.spec.geometry_field()?, point, order, common.fd_step, common.tol)?;
    for (exps, value) in jet.partials() {
        let e: Vec<String> = exps.iter().map(u8::to_string).collect();
        println!("[{}]  {:.12e}", e.join(","), value);
    }
    Ok(0)
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    match &cli.command {
        Command::Analyze {
            spec,
            orders,
            strict,
            out,
            growth_fit,
            stability,
        } => cmd_analyze(c, spec, orders, *strict, out.as_deref(), *growth_fit, *stability),
        Command::Reach { spec } => cmd_reach(c, spec),
        Command::Uniformity { spec, orders, growth_fit } => cmd_uniformity(c, spec, orders, *growth_fit),
        Command::Psh {
            spec,
            complex_dim,
            lambda,
            collar,
            collar_points,
        } => cmd_psh(c, spec, *complex_dim, lambda, *collar, *collar_points),
        Command::Corpus { action } => cmd_corpus(c, action),
        Command::Oracle {
            spec,
            point,
            order,
            method,
        } => cmd_oracle(c, spec, point, *order, *method),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            eprintln!("udf: cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("udf: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

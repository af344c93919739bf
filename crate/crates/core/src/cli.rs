//! Command-line front end: `key = value` configuration, command dispatch,
//! JSON reports and CSV series.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::averaging::{flatten_sup_samples, CoveringOracle};
use crate::constants::parse_real;
use crate::construct::{
    certify_minimality, certify_unique_ergodicity, conjugator_for_minimality, conjugator_for_unique_ergodicity,
    fiberwise_center, loop_for_property_21a, product_set, Rational,
};
use crate::covering::{band_charts, covering_global, verify_covering, BandCoveringOracle, CoveringFamily};
use crate::dynamics::{minimality_diagnostic, unique_ergodicity_diagnostic, SkewProduct};
use crate::hofer::{loop_length, Axis, NormalizedHamiltonian, Profile};
use crate::phase::{Catalog, ScalarField, TorusGrid, TrigMonomial};
use crate::shortening::{break_minimal_geodesic, normalized_length_sequence, shortened_length};
use crate::{Error, Result};

const OUTPUT_HELP: &str = "\
Outputs (written to --out DIR):
  <command>_report.json  config echo, metrics, verdicts, wall time
  shorten.csv            N,ell_N,oracle_bound
                           ell_N = length(F_N)/N; oracle_bound = closed form, blank if none
  average.csv            field,side,i,m_i,lemma31A_bound
                           side = plus|minus; m_i = max after i steps;
                           lemma31A_bound = m_{i-1}(1 - m_{i-1}/c), blank at i = 0
  cover.csv              trial,size_a,members,worst_ratio,bound,pass
  cover_family.json      last covering family built (usable with --verify-only)

Config file: one `key = value` per line, `#` comments. Keys are the long flag
names (alpha, beta, N, ns, res, res-t, eps, target, budget, seed, fields, r,
bands, out). Flags override file values. Reals accept golden, sqrt2m1, p/q.

Exit codes: 0 all verdicts pass, 2 a verdict failed, 1 usage or runtime error.
Environment: ERGOLOOP_THREADS caps the worker threads.";

#[derive(Parser, Debug)]
#[command(name = "ergoloop", version, about = "Hamiltonian loops, skew products and averaging experiments", after_help = OUTPUT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Subcommand, Debug)]
enum CommandArgs {
    /// Built-in scenario: furstenberg, identity or break
    Demo {
        scenario: String,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Normalized lengths of Birkhoff-shortened loops for N in --ns
    Shorten {
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Flatten random zero-mean fields by recursive averaging
    Average {
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Build and verify covering families for random cell sets
    Cover {
        /// Verify a CoveringFamily JSON file instead of building families
        #[arg(long, value_name = "FILE")]
        verify_only: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Periodic loop and conjugated-shift certificates
    Construct {
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Minimality and unique-ergodicity diagnostics of the Furstenberg system
    Diagnose {
        #[command(flatten)]
        knobs: Knobs,
    },
}

#[derive(Args, Debug, Default, Clone)]
struct Knobs {
    /// `key = value` config file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// Base rotation
    #[arg(long)]
    alpha: Option<String>,
    /// Fiber translation of the Furstenberg loop
    #[arg(long)]
    beta: Option<String>,
    /// Number of iterates (demo)
    #[arg(long = "N")]
    n: Option<String>,
    /// Comma-separated increasing list of N
    #[arg(long)]
    ns: Option<String>,
    /// Fiber resolution per axis
    #[arg(long)]
    res: Option<String>,
    /// Time resolution
    #[arg(long = "res-t")]
    res_t: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// Flattening target for `average`
    #[arg(long)]
    target: Option<String>,
    /// Iteration cap
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Number of random fields or trials
    #[arg(long)]
    fields: Option<String>,
    /// Rational period of the constructed loops
    #[arg(long)]
    r: Option<String>,
    /// Number of chart bands of the covering oracle
    #[arg(long)]
    bands: Option<String>,
}

const KEYS: [&str; 14] = [
    "alpha", "beta", "N", "ns", "res", "res-t", "eps", "target", "budget", "seed", "fields", "r", "bands", "out",
];

impl Knobs {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("N", &self.n),
            ("ns", &self.ns),
            ("res", &self.res),
            ("res-t", &self.res_t),
            ("eps", &self.eps),
            ("target", &self.target),
            ("budget", &self.budget),
            ("seed", &self.seed),
            ("fields", &self.fields),
            ("r", &self.r),
            ("bands", &self.bands),
            ("out", &self.out),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Demo,
    Shorten,
    Average,
    Cover,
    Construct,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Demo => "demo",
            Command::Shorten => "shorten",
            Command::Average => "average",
            Command::Cover => "cover",
            Command::Construct => "construct",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub scenario: Option<String>,
    pub verify_only: Option<PathBuf>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub ns: Vec<usize>,
    pub res: usize,
    pub res_t: usize,
    pub eps: f64,
    pub target: f64,
    pub budget: usize,
    pub seed: u64,
    pub fields: usize,
    pub r: String,
    pub bands: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    fn defaults(command: Command) -> Self {
        ExperimentConfig {
            command,
            scenario: None,
            verify_only: None,
            alpha: crate::constants::GOLDEN,
            beta: crate::constants::SQRT2M1,
            n: 1000,
            ns: vec![10, 100, 1000],
            res: 32,
            res_t: 64,
            eps: 0.1,
            target: 0.05,
            budget: 100_000,
            seed: 0,
            fields: 4,
            r: "1/3".into(),
            bands: 1,
            out: PathBuf::from("ergoloop-out"),
        }
    }

    pub fn rational_r(&self) -> Result<Rational> {
        self.r.parse()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key} = {value:?}: {what}"));
        let real = |v: &str| parse_real(v).ok_or_else(|| bad("not a real"));
        let positive_real = |v: &str| {
            let x = real(v)?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(bad("must be positive"))
            }
        };
        let count = |v: &str, min: usize| {
            let n: usize = v.trim().parse().map_err(|_| bad("not an integer"))?;
            if n >= min {
                Ok(n)
            } else {
                Err(bad(&format!("must be at least {min}")))
            }
        };
        match key {
            "alpha" => self.alpha = real(value)?,
            "beta" => self.beta = real(value)?,
            "N" => self.n = count(value, 1)?,
            "ns" => {
                let ns = value
                    .split(',')
                    .map(|s| count(s, 1))
                    .collect::<Result<Vec<_>>>()?;
                if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad("must be increasing"));
                }
                self.ns = ns;
            }
            "res" => self.res = count(value, 2)?,
            "res-t" => self.res_t = count(value, 2)?,
            "eps" => self.eps = positive_real(value)?,
            "target" => self.target = positive_real(value)?,
            "budget" => self.budget = count(value, 1)?,
            "seed" => self.seed = value.trim().parse().map_err(|_| bad("not a 64-bit integer"))?,
            "fields" => self.fields = count(value, 1)?,
            "r" => {
                value.parse::<Rational>()?;
                self.r = value.trim().to_string();
            }
            "bands" => self.bands = count(value, 1)?,
            "out" => self.out = PathBuf::from(value.trim()),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

/// Parses a flat `key = value` file.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", k + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", k + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Outcome of argument parsing.
#[derive(Debug)]
pub enum Parsed {
    Config(Box<ExperimentConfig>),
    /// `--help` or `--version` text.
    Info(String),
}

/// Resolves arguments (including the program name) into a configuration.
/// File values apply first, flags override them.
pub fn parse_config<I, T>(args: I) -> std::result::Result<Parsed, String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Ok(Parsed::Info(e.to_string())),
                _ => Err(e.render().to_string()),
            }
        }
    };
    let (command, scenario, verify_only, knobs) = match cli.command {
        CommandArgs::Demo { scenario, knobs } => (Command::Demo, Some(scenario), None, knobs),
        CommandArgs::Shorten { knobs } => (Command::Shorten, None, None, knobs),
        CommandArgs::Average { knobs } => (Command::Average, None, None, knobs),
        CommandArgs::Cover { verify_only, knobs } => (Command::Cover, None, verify_only, knobs),
        CommandArgs::Construct { knobs } => (Command::Construct, None, None, knobs),
        CommandArgs::Diagnose { knobs } => (Command::Diagnose, None, None, knobs),
    };
    let mut cfg = ExperimentConfig::defaults(command);
    cfg.scenario = scenario;
    cfg.verify_only = verify_only;
    let usage = |e: Error| format!("error: {e}\n\nFor more information, try '--help'.");
    if let Some(path) = &knobs.config {
        let text = fs::read_to_string(path).map_err(|e| usage(Error::Config(format!("{}: {e}", path.display()))))?;
        for (k, v) in parse_config_file(&text).map_err(usage)? {
            cfg.set(&k, &v).map_err(usage)?;
        }
    }
    for (k, v) in knobs.pairs() {
        if let Some(v) = v {
            cfg.set(k, v).map_err(usage)?;
        }
    }
    Ok(Parsed::Config(Box::new(cfg)))
}

/// One asserted inequality or check, tagged with its source.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub source_tag: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, source_tag: &str, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            source_tag: source_tag.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Machine-readable result of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub metrics: Value,
    pub verdicts: Vec<Verdict>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Rows of a CSV series; the first row is the header.
pub type Series = Vec<Vec<String>>;

struct Outcome {
    metrics: Value,
    verdicts: Vec<Verdict>,
    csv: Option<(&'static str, Series)>,
    extra: Vec<(&'static str, String)>,
}

fn cos_y2() -> Catalog {
    Catalog::Trig(TrigMonomial::cos_y(1.0, [0, 1]))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Runs the configured experiment; writes nothing.
pub fn execute(cfg: &ExperimentConfig) -> Result<(RunReport, Option<(&'static str, Series)>, Vec<(&'static str, String)>)> {
    let start = Instant::now();
    let out = match cfg.command {
        Command::Demo => run_demo(cfg)?,
        Command::Shorten => run_shorten(cfg)?,
        Command::Average => run_average(cfg)?,
        Command::Cover => run_cover(cfg)?,
        Command::Construct => run_construct(cfg)?,
        Command::Diagnose => run_diagnose(cfg)?,
    };
    let report = RunReport {
        command: cfg.command,
        config: cfg.clone(),
        metrics: out.metrics,
        verdicts: out.verdicts,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((report, out.csv, out.extra))
}

/// Runs and writes `<command>_report.json` plus any CSV series into
/// `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (report, csv, extra) = execute(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(cfg.out.join(format!("{}_report.json", cfg.command.name())), json + "\n")?;
    if let Some((name, rows)) = csv {
        write_csv(&cfg.out.join(name), &rows)?;
    }
    for (name, body) in extra {
        fs::write(cfg.out.join(name), body)?;
    }
    Ok(report)
}

fn write_csv(path: &Path, rows: &Series) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn furstenberg_oracle(n: usize, beta: f64) -> f64 {
    use std::f64::consts::PI;
    (PI * n as f64 * beta).sin().abs() / (n as f64 * (PI * beta).sin().abs())
}

fn run_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = TorusGrid::new(cfg.res_t, [cfg.res, cfg.res])?;
    let h = NormalizedHamiltonian::trig(cos_y2())?;
    match cfg.scenario.as_deref() {
        Some("furstenberg") => {
            let skew = SkewProduct::furstenberg(cfg.alpha, cfg.beta);
            let ell = shortened_length(&h, &skew, cfg.n, grid)?;
            let oracle = furstenberg_oracle(cfg.n, cfg.beta);
            let pass = (ell - oracle).abs() <= 1e-9;
            Ok(Outcome {
                metrics: json!({"N": cfg.n, "ell_N": ell, "oracle": oracle}),
                verdicts: vec![Verdict::new(
                    "ell_N matches |sin(pi N beta)|/(N sin(pi beta))",
                    "§1.4",
                    pass,
                    format!("ell_N = {ell:e}, oracle = {oracle:e}"),
                )],
                csv: Some(("shorten.csv", vec![
                    vec!["N".into(), "ell_N".into(), "oracle_bound".into()],
                    vec![cfg.n.to_string(), format!("{ell:e}"), format!("{oracle:e}")],
                ])),
                extra: Vec::new(),
            })
        }
        Some("identity") => {
            let skew = SkewProduct::identity();
            let ell = shortened_length(&h, &skew, cfg.n, grid)?;
            let len = loop_length(&h, grid);
            Ok(Outcome {
                metrics: json!({"N": cfg.n, "ell_N": ell, "length_H": len}),
                verdicts: vec![Verdict::new(
                    "no decay for the identity skew product",
                    "§1.4",
                    ell == len,
                    format!("ell_N = {ell}, length(H) = {len}"),
                )],
                csv: None,
                extra: Vec::new(),
            })
        }
        Some("break") => {
            let hb = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::Cosine);
            let br = break_minimal_geodesic(&hb, 2, 10_000, grid)?;
            Ok(Outcome {
                metrics: json!({
                    "N": 2,
                    "a0": br.a0,
                    "b0": br.b0,
                    "a_integral": br.a_integral,
                    "b_integral": br.b_integral,
                    "translations": br.translations,
                }),
                verdicts: vec![
                    Verdict::new("a(0) < b(0)", "§1.6", br.a0 < br.b0, format!("{} < {}", br.a0, br.b0)),
                    Verdict::new(
                        "integral of a < integral of b",
                        "§1.6",
                        br.a_integral < br.b_integral,
                        format!("{} < {}", br.a_integral, br.b_integral),
                    ),
                ],
                csv: None,
                extra: Vec::new(),
            })
        }
        other => Err(Error::Config(format!(
            "unknown demo scenario {other:?} (expected furstenberg, identity or break)"
        ))),
    }
}

fn run_shorten(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = TorusGrid::new(cfg.res_t, [cfg.res, cfg.res])?;
    let h = NormalizedHamiltonian::trig(cos_y2())?;
    let skew = SkewProduct::furstenberg(cfg.alpha, cfg.beta);
    let trace = normalized_length_sequence(&h, &skew, &cfg.ns, grid)?;
    let mut rows = vec![vec!["N".to_string(), "ell_N".into(), "oracle_bound".into()]];
    for (k, &n) in trace.ns.iter().enumerate() {
        let bound = trace.oracle_bounds.as_ref().map(|b| b[k]);
        rows.push(vec![n.to_string(), format!("{:e}", trace.lengths[k]), fmt_opt(bound)]);
    }
    Ok(Outcome {
        metrics: json!({"ns": trace.ns, "ell_N": trace.lengths, "oracle_bound": trace.oracle_bounds}),
        verdicts: vec![Verdict::new(
            "ell_N <= oracle_bound + 1e-9",
            "Theorem 1.3.A",
            trace.is_consistent(),
            format!("{} values", trace.ns.len()),
        )],
        csv: Some(("shorten.csv", rows)),
        extra: Vec::new(),
    })
}

fn random_zero_mean(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let v: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let sup = v.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    v.iter().map(|x| x / sup).collect()
}

fn run_average(cfg: &ExperimentConfig) -> Result<Outcome> {
    let oracle = BandCoveringOracle::new([cfg.res, cfg.res], cfg.bands)?;
    let (c1, c2) = oracle.constants();
    let c = 2.0 * (3 * c2 + c1) as f64;
    let allowed = (3.0 * c / cfg.target).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = vec![["field", "side", "i", "m_i", "lemma31A_bound"].map(String::from).to_vec()];
    let mut verdicts = Vec::new();
    let mut fields = Vec::new();
    for f in 0..cfg.fields {
        let h = random_zero_mean(&mut rng, cfg.res * cfg.res);
        match flatten_sup_samples(&h, &oracle, cfg.target, cfg.budget) {
            Ok(out) => {
                for (side, trace) in [("plus", &out.plus), ("minus", &out.minus)] {
                    for (i, m) in trace.m.iter().enumerate() {
                        let bound = (i > 0).then(|| trace.m[i - 1] * (1.0 - trace.m[i - 1] / c));
                        rows.push(vec![f.to_string(), side.into(), i.to_string(), format!("{m:e}"), fmt_opt(bound)]);
                    }
                }
                let contraction = out.plus.satisfies_contraction() && out.minus.satisfies_contraction();
                verdicts.push(Verdict::new(
                    &format!("field {f}: m_(i+1) <= m_i (1 - m_i/c)"),
                    "Lemma 3.1.A",
                    contraction,
                    format!("c = {c}"),
                ));
                verdicts.push(Verdict::new(
                    &format!("field {f}: mu(A) >= m/(m+2), N'/N >= m/c3"),
                    "§3.2",
                    true,
                    format!("{} steps checked", out.plus.steps.len() + out.minus.steps.len()),
                ));
                verdicts.push(Verdict::new(
                    &format!("field {f}: sup norm below target within budget"),
                    "Theorem 2.2.B",
                    out.sup_norm < cfg.target && out.iterations() <= allowed,
                    format!("|S(H)| = {:e} after {} iterations (allowed {allowed})", out.sup_norm, out.iterations()),
                ));
                fields.push(json!({"field": f, "iterations": out.iterations(), "sup_norm": out.sup_norm}));
            }
            Err(Error::BoundViolated { source_tag, detail }) => {
                verdicts.push(Verdict::new(&format!("field {f}"), source_tag, false, detail));
            }
            Err(Error::BudgetExhausted { max_iter, last_max, .. }) => {
                verdicts.push(Verdict::new(
                    &format!("field {f}: sup norm below target within budget"),
                    "Theorem 2.2.B",
                    false,
                    format!("budget {max_iter} exhausted at max {last_max:e}"),
                ));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Outcome {
        metrics: json!({"c1": c1, "c2": c2, "c": c, "iteration_allowance": allowed, "fields": fields}),
        verdicts,
        csv: Some(("average.csv", rows)),
        extra: Vec::new(),
    })
}

fn run_cover(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (c1, c2) = ((cfg.bands * crate::covering::PLANAR_CLASSES) as u64, 4 * cfg.bands as u64);
    if let Some(path) = &cfg.verify_only {
        let family: CoveringFamily = serde_json::from_str(&fs::read_to_string(path)?)?;
        let v = verify_covering(&family, &family.base, c1, c2);
        return Ok(Outcome {
            metrics: json!({"c1": c1, "c2": c2, "verdict": v}),
            verdicts: vec![Verdict::new(
                "covering inequality",
                "Proposition 2.2.A",
                v.pass,
                format!("worst ratio {} vs bound {}", v.worst_ratio, v.bound),
            )],
            csv: None,
            extra: Vec::new(),
        });
    }
    let res = [cfg.res, cfg.res];
    let universe = cfg.res * cfg.res;
    let charts = band_charts(res, cfg.bands)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = vec![["trial", "size_a", "members", "worst_ratio", "bound", "pass"].map(String::from).to_vec()];
    let mut verdicts = Vec::new();
    let mut last = None;
    for trial in 0..cfg.fields {
        let size = rng.gen_range(cfg.bands..=universe);
        let mut cells: Vec<usize> = (0..universe).collect();
        for i in 0..size {
            let j = rng.gen_range(i..universe);
            cells.swap(i, j);
        }
        let a = &cells[..size];
        let g = covering_global(universe, &charts, a)?;
        let v = verify_covering(&g.family, a, g.c1, g.c2);
        rows.push(vec![
            trial.to_string(),
            size.to_string(),
            g.family.total().to_string(),
            format!("{:e}", v.worst_ratio),
            format!("{:e}", v.bound),
            v.pass.to_string(),
        ]);
        verdicts.push(Verdict::new(
            &format!("trial {trial}: covering inequality"),
            "Proposition 2.2.A",
            v.pass && (g.c1, g.c2) == (c1, c2),
            format!("|A| = {size}, worst ratio {} vs bound {}", v.worst_ratio, v.bound),
        ));
        last = Some(g.family);
    }
    let extra = match last {
        Some(f) => vec![("cover_family.json", serde_json::to_string(&f)? + "\n")],
        None => Vec::new(),
    };
    Ok(Outcome {
        metrics: json!({"c1": c1, "c2": c2, "trials": cfg.fields}),
        verdicts,
        csv: Some(("cover.csv", rows)),
        extra,
    })
}

fn run_construct(cfg: &ExperimentConfig) -> Result<Outcome> {
    use std::f64::consts::TAU;
    let r = cfg.rational_r()?;
    let grid = TorusGrid::cubic(cfg.res)?;
    let mut verdicts = Vec::new();

    let f = fiberwise_center(&ScalarField::from_fn_product(grid, |t, y| (TAU * (t + y[1])).cos()));
    let g = loop_for_property_21a(&f, cfg.eps, r)?;
    let rep = g.report.clone().expect("constructed loops carry a report");
    verdicts.push(Verdict::new("|J_i| < eps/(3M)", "§5.1 step 4", rep.j_max < rep.j_bound, format!("{:e} < {:e}", rep.j_max, rep.j_bound)));
    verdicts.push(Verdict::new("|I(y)| < eps", "Property 2.1.A(i)", rep.i_max < cfg.eps, format!("{:e}", rep.i_max)));
    verdicts.push(Verdict::new("g(t + r) = g(t)", "Property 2.1.A(ii)", g.period_exact(), format!("M = {}, r = {r}", g.m)));

    let half = cfg.res / 2;
    let v: Vec<usize> = (0..half).flat_map(|i| (0..half).map(move |j| grid.join_cell(i, j))).collect();
    let u = product_set(&grid, 0..grid.res_t(), &v);
    let (cs, sweep) = conjugator_for_minimality(&grid, &u, r)?;
    let cs = cs.with_alpha(cfg.alpha);
    let mv = certify_minimality(&cs, grid, &u, cfg.budget)?;
    verdicts.push(Verdict::new("phi(U) meets every circle", "Lemma 5.3.A", sweep.covers(), format!("{}/{}", sweep.covered_cells, sweep.total_cells)));
    verdicts.push(Verdict::new("iterates of U cover X", "Lemma 5.3.A", mv.is_covered(), format!("{mv:?}")));

    let f2 = ScalarField::from_fn_product(grid, |_, y| (TAU * y[1]).cos());
    let cs2 = conjugator_for_unique_ergodicity(&f2, cfg.eps, r)?.with_alpha(cfg.alpha);
    let ec = certify_unique_ergodicity(&cs2, &f2, cfg.eps, cfg.budget)?;
    verdicts.push(Verdict::new("sup |I(y)| < eps/2", "Lemma 5.3.A", ec.i_sup < cfg.eps / 2.0, format!("{:e}", ec.i_sup)));
    verdicts.push(Verdict::new("|G_N| < eps for some N", "Lemma 5.3.A", ec.n.is_some(), format!("{ec:?}")));

    Ok(Outcome {
        metrics: json!({
            "property_21a": rep,
            "minimality": {"sweep": sweep, "verdict": format!("{mv:?}"), "loop": cs.g.inner.describe(), "M": cs.g.m},
            "unique_ergodicity": ec,
        }),
        verdicts,
        csv: None,
        extra: Vec::new(),
    })
}

fn run_diagnose(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = TorusGrid::new(cfg.res_t, [cfg.res, cfg.res])?;
    let skew = SkewProduct::furstenberg(cfg.alpha, cfg.beta);
    let mv = minimality_diagnostic(&skew, &[0], grid, cfg.budget)?;
    let ev = unique_ergodicity_diagnostic(&skew, &cos_y2(), cfg.eps, cfg.budget, grid)?;
    Ok(Outcome {
        metrics: json!({"minimality": format!("{mv:?}"), "unique_ergodicity": ev}),
        verdicts: vec![
            Verdict::new("orbit of one cell covers the grid", "Theorem 1.2.B", mv.is_covered(), format!("{mv:?}")),
            Verdict::new("uniform Birkhoff deviation below eps", "Theorem 1.2.B", ev.is_member(), format!("{ev:?}")),
        ],
        csv: None,
        extra: Vec::new(),
    })
}

fn init_threads() {
    if let Some(n) = std::env::var("ERGOLOOP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Entry point of the binary; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cfg = match parse_config(args) {
        Ok(Parsed::Config(cfg)) => cfg,
        Ok(Parsed::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(text) => {
            eprint!("{text}");
            if !text.ends_with('\n') {
                eprintln!();
            }
            return 1;
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for v in &report.verdicts {
                println!("{} [{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.source_tag, v.name, v.detail);
            }
            println!("report: {}", cfg.out.join(format!("{}_report.json", cfg.command.name())).display());
            if report.passed() {
                0
            } else {
                2
            }
        }
        Err(Error::BoundViolated { source_tag, detail }) => {
            eprintln!("FAIL [{source_tag}] {detail}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> ExperimentConfig {
        match parse_config(std::iter::once("ergoloop").chain(args.iter().copied())).unwrap() {
            Parsed::Config(c) => *c,
            Parsed::Info(_) => panic!("info"),
        }
    }

    #[test]
    fn demo_flags() {
        let c = cfg(&["demo", "furstenberg", "--beta", "sqrt2m1", "--N", "1000"]);
        assert_eq!(c.command, Command::Demo);
        assert_eq!(c.scenario.as_deref(), Some("furstenberg"));
        assert_eq!(c.n, 1000);
        assert_eq!(c.beta, crate::constants::SQRT2M1);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert!(parse_config(["ergoloop", "demo", "furstenberg", "--bogus", "1"]).is_err());
        assert!(parse_config(["ergoloop", "shorten", "--eps", "-1"]).is_err());
        assert!(parse_config(["ergoloop", "shorten", "--ns", "10,5"]).is_err());
    }

    #[test]
    fn config_file_keys() {
        let m = parse_config_file("# c\nres = 16\nr = 1/4 # inline\n\n").unwrap();
        assert_eq!(m.get("res").map(String::as_str), Some("16"));
        assert_eq!(m.get("r").map(String::as_str), Some("1/4"));
        assert!(parse_config_file("nope = 1").is_err());
        assert!(parse_config_file("res 16").is_err());
    }

    #[test]
    fn flag_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        fs::write(&p, "res = 16\nseed = 7\n").unwrap();
        let c = cfg(&["average", "--config", p.to_str().unwrap(), "--res", "8"]);
        assert_eq!((c.res, c.seed), (8, 7));
    }
}

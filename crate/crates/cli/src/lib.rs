//! Command-line front end for `sparse-cantor`.

pub mod config;
pub mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use sparse_cantor::cantor::{CantorSet, Regime, SCHEMA_VERSION};
use sparse_cantor::construct::{boundedness_check, construct};
use sparse_cantor::correlation::{c0_constant, sup_lambda_tr, trivial_bound};
use sparse_cantor::dimension::{box_slope, dim_bounds, symbolic_quotients};
use sparse_cantor::exact::{fmt_q, q, to_f64};
use sparse_cantor::intersect::TupleClass;
use sparse_cantor::maxops::{
    differentiation_experiment, l1_divergence_demo, mk_operator, restricted_maximal,
    restricted_type_ratio, unrestricted_maximal, DiffRow, MaximalQuery,
};
use sparse_cantor::rng::RngStream;
use sparse_cantor::verify::verify;
use sparse_cantor::{Error, Q};

use config::{FunctionSpec, RunConfig, TestFunction};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cantor",
    version,
    about = "Random sparse Cantor sets and maximal averages along them"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides one configuration key, as `section.key=value`.
    #[arg(
        short = 'o',
        long = "override",
        value_name = "KEY=VALUE",
        global = true
    )]
    pub overrides: Vec<String>,
    /// Worker threads for the parallel regions.
    #[arg(short, long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; defaults to `report.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds a set and writes it with the gate transcript.
    Construct,
    /// Re-runs every gate and invariant on a stored set.
    Verify { set: PathBuf },
    /// Samples the correlation sup over transverse grid tuples.
    Correlate {
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Restricted and unrestricted maximal values, and the restricted-type ratio.
    Maximal {
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Counting quotients, box counts and closed-form limits.
    Dimension {
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Error table of the averages against point values.
    Differentiate {
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Growth table of the averaged singular profile.
    DemoL1 {
        #[arg(long)]
        set: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Construct => "construct",
            Command::Verify { .. } => "verify",
            Command::Correlate { .. } => "correlate",
            Command::Maximal { .. } => "maximal",
            Command::Dimension { .. } => "dimension",
            Command::Differentiate { .. } => "differentiate",
            Command::DemoL1 { .. } => "demo-l1",
        }
    }

    fn set_path(&self) -> Option<&Path> {
        match self {
            Command::Verify { set } => Some(set),
            Command::Correlate { set }
            | Command::Maximal { set }
            | Command::Dimension { set }
            | Command::Differentiate { set }
            | Command::DemoL1 { set } => set.as_deref(),
            Command::Construct => None,
        }
    }
}

/// Writes reports into one directory.
pub struct Outputs {
    dir: PathBuf,
    csv: bool,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf, cfg: Option<&RunConfig>) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let csv = cfg.is_none_or(|c| c.report.wants("csv"));
        Ok(Outputs {
            dir,
            csv,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn raw(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.written.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(v).expect("report serializes");
        self.raw(name, &(text + "\n"))
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<(), CliError> {
        let mut s = String::new();
        for it in items {
            s.push_str(&serde_json::to_string(it).expect("record serializes"));
            s.push('\n');
        }
        self.raw(name, &s)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        if !self.csv {
            return Ok(());
        }
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let werr = |e: csv::Error| CliError::Usage(format!("{}: {e}", p.display()));
        w.write_record(header).map_err(werr)?;
        for r in rows {
            w.write_record(r).map_err(werr)?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))?;
        self.written.push(p);
        Ok(())
    }
}

/// Result of a successful command: a one-line summary for stdout.
pub struct Outcome {
    pub summary: String,
    pub written: Vec<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<Option<RunConfig>, CliError> {
    match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            RunConfig::parse(&text, &cli.overrides).map(Some)
        }
        None if cli.overrides.is_empty() => Ok(None),
        None => Err(CliError::Usage("--override needs --config".into())),
    }
}

pub fn load_set(path: &Path) -> Result<CantorSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    CantorSet::from_json(&text).map_err(|e| CliError::from_core(&path.display().to_string(), e))
}

fn require(cfg: &Option<RunConfig>, what: &str) -> Result<RunConfig, CliError> {
    cfg.clone()
        .ok_or_else(|| CliError::Usage(format!("{what} needs --config")))
}

/// The stored set if one is given, otherwise the set built from the configuration.
fn obtain_set(cmd: &Command, cfg: &Option<RunConfig>) -> Result<CantorSet, CliError> {
    if let Some(p) = cmd.set_path() {
        return load_set(p);
    }
    let cfg = require(cfg, cmd.name())?;
    let params = cfg.construction.params()?;
    construct(&params)
        .map(|(s, _)| s)
        .map_err(|e| CliError::from_core("construct", e))
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    let cfg = load_config(cli)?;
    let name = cli.command.name();
    if let Some(c) = &cfg {
        c.validate(name)?;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().map(|c| PathBuf::from(&c.report.output_dir)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Outputs::new(dir, cfg.as_ref())?;
    let summary = match &cli.command {
        Command::Construct => cmd_construct(&require(&cfg, name)?, &mut out)?,
        Command::Verify { set } => cmd_verify(set, &mut out)?,
        cmd => {
            let set = obtain_set(cmd, &cfg)?;
            let sections = cfg.clone().unwrap_or_else(|| default_sections(&set));
            match cmd {
                Command::Correlate { .. } => cmd_correlate(&set, &sections, &mut out)?,
                Command::Maximal { .. } => cmd_maximal(&set, &sections, &mut out)?,
                Command::Dimension { .. } => cmd_dimension(&set, &mut out)?,
                Command::Differentiate { .. } => cmd_differentiate(&set, &sections, &mut out)?,
                Command::DemoL1 { .. } => cmd_demo(&set, &sections, &mut out)?,
                Command::Construct | Command::Verify { .. } => unreachable!(),
            }
        }
    };
    Ok(Outcome {
        summary,
        written: out.written,
    })
}

/// Section defaults around a stored set's own parameters.
fn default_sections(set: &CantorSet) -> RunConfig {
    let p = &set.params;
    let construction = config::Construction {
        regime: p.regime,
        base: p.base,
        epsilon: p.epsilon.clone(),
        depth: p.depth,
        level_counts: p.level_counts.clone(),
        epsilon_schedule: p.epsilon_schedule.clone(),
        b: p.b.clone(),
        l: p.l,
        epsilon0: p.epsilon0.clone(),
        gamma: p.gamma.clone(),
        seed: p.seed,
        max_retries: p.max_retries,
        gate_n: p.gate_n,
        gate_budget: p.gate_budget,
    };
    RunConfig {
        construction,
        correlate: Default::default(),
        maximal: Default::default(),
        differentiate: Default::default(),
        demo: Default::default(),
        report: Default::default(),
    }
}

/// Process entry: parses arguments, runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            0
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}

fn counts(set: &CantorSet) -> Vec<u64> {
    set.levels().iter().map(|l| l.count()).collect()
}

fn cmd_construct(cfg: &RunConfig, out: &mut Outputs) -> Result<String, CliError> {
    let params = cfg.construction.params()?;
    let boundedness = boundedness_check(&params).ok();
    match construct(&params) {
        Ok((set, transcript)) => {
            let text = set
                .to_json()
                .map_err(|e| CliError::from_core("construct", e))?;
            out.raw("set.json", &text)?;
            out.jsonl("transcript.jsonl", &transcript)?;
            let attempts: Vec<u32> = (1..=params.depth)
                .map(|k| {
                    transcript
                        .iter()
                        .filter(|r| r.level == k)
                        .map(|r| r.retry + 1)
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            out.json(
                "construct.json",
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "accepted": true,
                    "seed": params.seed,
                    "counts": counts(&set),
                    "attempts_per_level": attempts,
                    "boundedness": boundedness,
                }),
            )?;
            Ok(format!(
                "accepted: counts {:?}, attempts {:?}",
                counts(&set),
                attempts
            ))
        }
        Err(Error::ConstructionFailure {
            level,
            attempts,
            transcript,
        }) => {
            out.jsonl("transcript.jsonl", &transcript)?;
            out.json(
                "construct.json",
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "accepted": false,
                    "seed": params.seed,
                    "failed_level": level,
                    "attempts": attempts,
                    "boundedness": boundedness,
                }),
            )?;
            Err(CliError::Check(format!(
                "construction failed at level {level} after {attempts} attempts; transcript in {}",
                out.path("transcript.jsonl").display()
            )))
        }
        Err(e) => Err(CliError::from_core("construct", e)),
    }
}

fn cmd_verify(path: &Path, out: &mut Outputs) -> Result<String, CliError> {
    let set = load_set(path)?;
    let report = verify(&set).map_err(|e| CliError::from_core("verify", e))?;
    out.json("verify.json", &report)?;
    if report.pass {
        Ok(format!(
            "verified: {} checks, {} gate reports, all pass",
            report.checks.len(),
            report.gates.len()
        ))
    } else {
        Err(CliError::Check(format!(
            "verification failed:\n  {}",
            report.failures().join("\n  ")
        )))
    }
}

fn class_name(c: TupleClass) -> &'static str {
    match c {
        TupleClass::Internal => "internal",
        TupleClass::Transverse => "transverse",
    }
}

fn cmd_correlate(set: &CantorSet, cfg: &RunConfig, out: &mut Outputs) -> Result<String, CliError> {
    let c = &cfg.correlate;
    let levels: Vec<usize> = if c.levels.is_empty() {
        (1..set.depth()).collect()
    } else {
        c.levels.clone()
    };
    if levels.is_empty() {
        return Err(CliError::Usage(
            "correlate needs a set of depth at least 2".into(),
        ));
    }
    if c.budget == 0 {
        return Err(CliError::Usage(
            "correlate.budget must be at least 1".into(),
        ));
    }
    let ctx = |e| CliError::from_core("correlate", e);
    let root = RngStream::new(c.seed);
    let mut levels_json = Vec::new();
    let mut summary_rows = Vec::new();
    let mut sample_rows = Vec::new();
    let mut failures = Vec::new();
    let mut sups = Vec::new();
    for &k in &levels {
        let rep = sup_lambda_tr(set, c.n, k, c.budget, &root.child(k as u64));
        let triv = trivial_bound(set, c.n, k).map_err(ctx)?;
        let c0 = c0_constant(&set.params, c.n, k).map_err(ctx)?;
        match rep {
            Ok(rep) => {
                let within_trivial = rep.max_abs <= triv;
                let within_c0 = to_f64(&rep.max_abs) <= c0;
                if !within_trivial {
                    failures.push(format!("k = {k}: sup exceeds the trivial bound"));
                }
                if !within_c0 {
                    failures.push(format!("k = {k}: sup exceeds C0"));
                }
                sups.push(to_f64(&rep.max_abs));
                levels_json.push(json!({
                    "k": k,
                    "n": c.n,
                    "max_abs": fmt_q(&rep.max_abs),
                    "max_abs_f64": to_f64(&rep.max_abs),
                    "witness": rep.witness,
                    "coverage": rep.coverage,
                    "trivial_bound": fmt_q(&triv),
                    "c0": c0,
                    "within_trivial": within_trivial,
                    "within_c0": within_c0,
                }));
                summary_rows.push(vec![
                    k.to_string(),
                    c.n.to_string(),
                    fmt_q(&rep.max_abs),
                    format!("{:e}", to_f64(&rep.max_abs)),
                    fmt_q(&triv),
                    format!("{c0:e}"),
                    rep.coverage.transverse.to_string(),
                    rep.coverage.sampled.to_string(),
                ]);
                if c.write_samples {
                    for s in &rep.samples {
                        sample_rows.push(vec![
                            k.to_string(),
                            s.index.to_string(),
                            class_name(s.class).into(),
                            s.f_int.to_string(),
                            s.lambda.as_ref().map(fmt_q).unwrap_or_default(),
                        ]);
                    }
                }
            }
            Err(Error::EmptySample(msg)) => {
                sups.push(0.0);
                levels_json.push(json!({"k": k, "n": c.n, "empty": msg}));
            }
            Err(e) => return Err(ctx(e)),
        }
    }
    let decay: Vec<f64> = sups.windows(2).map(|w| w[1] / w[0]).collect();
    out.json(
        "correlate.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "seed": c.seed,
            "budget": c.budget,
            "levels": levels_json,
            "successive_ratios": decay,
        }),
    )?;
    out.csv(
        "correlate.csv",
        &[
            "k",
            "n",
            "max_abs",
            "max_abs_f64",
            "trivial_bound",
            "c0",
            "transverse",
            "sampled",
        ],
        &summary_rows,
    )?;
    if c.write_samples {
        out.csv(
            "correlate_samples.csv",
            &["k", "index", "class", "f_int", "lambda"],
            &sample_rows,
        )?;
    }
    if !failures.is_empty() {
        return Err(CliError::Check(failures.join("; ")));
    }
    Ok(format!(
        "sup |Lambda| per level {sups:?}, successive ratios {decay:?}"
    ))
}

fn cmd_maximal(set: &CantorSet, cfg: &RunConfig, out: &mut Outputs) -> Result<String, CliError> {
    let m = &cfg.maximal;
    let ctx = |e| CliError::from_core("maximal", e);
    let f = match m.function.build()? {
        TestFunction::Step(f) => f,
        TestFunction::Linear(_) => {
            return Err(CliError::Usage(
                "maximal.function must be piecewise constant".into(),
            ));
        }
    };
    let xs = m.points();
    let grid = m.r_grid();
    let restricted = restricted_maximal(&f, set, &xs, &grid).map_err(ctx)?;
    let rows: Vec<Vec<String>> = xs
        .iter()
        .zip(&restricted)
        .map(|(x, v)| {
            vec![
                v.k.to_string(),
                fmt_q(&v.r),
                fmt_q(x),
                fmt_q(&v.value),
                format!("{:e}", to_f64(&v.value)),
            ]
        })
        .collect();
    out.csv(
        "restricted.csv",
        &["k", "r", "x", "value", "value_f64"],
        &rows,
    )?;

    let mut mk_rows = Vec::new();
    for k in 1..set.depth() {
        for x in &xs {
            let v = mk_operator(&f, set, k, x, &grid).map_err(ctx)?;
            mk_rows.push(vec![
                k.to_string(),
                fmt_q(x),
                fmt_q(&v),
                format!("{:e}", to_f64(&v)),
            ]);
        }
    }
    out.csv("mk.csv", &["k", "x", "value", "value_f64"], &mk_rows)?;

    let query = MaximalQuery {
        xs: xs.clone(),
        r_grid: grid.clone(),
        m_min: m.m_min,
        m_max: m.m_max,
        p: m.p.clone(),
        q: m.q.clone(),
    };
    let unrestricted = unrestricted_maximal(&f, set, &query).map_err(ctx)?;
    let urows: Vec<Vec<String>> = xs
        .iter()
        .zip(&unrestricted)
        .map(|(x, v)| {
            vec![
                v.k.to_string(),
                v.m.to_string(),
                fmt_q(&v.r),
                fmt_q(x),
                format!("{:e}", v.value),
            ]
        })
        .collect();
    out.csv("unrestricted.csv", &["k", "m", "r", "x", "value"], &urows)?;

    let mut ratio_json = Vec::new();
    let mut ratio_rows = Vec::new();
    let mut violations = 0usize;
    if m.ratio_budget > 0 {
        let sampler = m.sampler()?;
        let levels: Vec<usize> = if m.ratio_levels.is_empty() {
            (1..set.depth()).collect()
        } else {
            m.ratio_levels.clone()
        };
        let root = RngStream::new(m.seed);
        for k in levels {
            let rep = restricted_type_ratio(
                set,
                k,
                m.ratio_n,
                &sampler,
                m.ratio_budget,
                &root.child(k as u64),
                None,
            )
            .map_err(ctx)?;
            violations += rep.samples.iter().filter(|s| s.ratio > rep.rhs_c1).count();
            for s in &rep.samples {
                ratio_rows.push(vec![
                    k.to_string(),
                    s.index.to_string(),
                    fmt_q(&s.omega_measure),
                    format!("{:e}", s.ratio),
                ]);
            }
            ratio_json.push(json!({
                "k": k,
                "n": rep.n,
                "max_ratio": rep.max_ratio,
                "rhs_with_constant_one": rep.rhs_c1,
                "samples": rep.samples.len(),
            }));
        }
        out.csv(
            "ratio.csv",
            &["k", "index", "omega_measure", "ratio"],
            &ratio_rows,
        )?;
    }

    let max_r = restricted
        .iter()
        .map(|v| to_f64(&v.value))
        .fold(0.0, f64::max);
    let max_u = unrestricted.iter().map(|v| v.value).fold(0.0, f64::max);
    out.json(
        "maximal.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "points": xs.len(),
            "r_grid": grid.iter().map(fmt_q).collect::<Vec<_>>(),
            "scale_window": [m.m_min, m.m_max],
            "a": fmt_q(&query.a()),
            "max_restricted": max_r,
            "max_unrestricted": max_u,
            "ratio": ratio_json,
            "ratio_violations": violations,
        }),
    )?;
    if violations > 0 {
        return Err(CliError::Check(format!(
            "{violations} sampled ratios exceed the bound"
        )));
    }
    Ok(format!(
        "max restricted {max_r:.6e}, max unrestricted {max_u:.6e} over m in [{}, {}]",
        m.m_min, m.m_max
    ))
}

fn cmd_dimension(set: &CantorSet, out: &mut Outputs) -> Result<String, CliError> {
    let ctx = |e| CliError::from_core("dimension", e);
    let bounds = dim_bounds(set).map_err(ctx)?;
    let boxes = box_slope(set).map_err(ctx)?;
    let limits = match set.params.regime {
        Regime::Custom => None,
        r => {
            let f = symbolic_quotients(r, set.params.epsilon.as_ref()).map_err(ctx)?;
            let lim = |x: &sparse_cantor::dimension::QuotientForm| {
                x.limit().map(|q| fmt_q(&q)).map_err(ctx)
            };
            Some(json!({
                "upper_hi": lim(&f.upper_hi)?,
                "upper_lo": lim(&f.upper_lo)?,
                "lower_hi": lim(&f.lower_hi)?,
                "lower_lo": lim(&f.lower_lo)?,
            }))
        }
    };
    let rows: Vec<Vec<String>> = boxes
        .counts
        .iter()
        .map(|&(k, mk, c)| {
            vec![
                k.to_string(),
                mk.to_string(),
                c.to_string(),
                format!("{}", bounds.upper_sequence[k - 1]),
                if k >= 2 {
                    format!("{}", bounds.lower_sequence[k - 2])
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    out.csv(
        "dimension.csv",
        &["k", "m_k", "box_count", "upper_quotient", "lower_quotient"],
        &rows,
    )?;
    out.json(
        "dimension.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "bounds": bounds,
            "box": boxes,
            "symbolic_limits": limits,
        }),
    )?;
    Ok(format!(
        "upper {:.4}, lower {:.4}, box slope {:.4}",
        bounds.upper, bounds.lower, boxes.slope
    ))
}

fn random_points(count: u64, seed: u64) -> Vec<Q> {
    let mut rng = RngStream::new(seed).child(0).rng();
    let den = 1i64 << 20;
    let mut xs: Vec<Q> = (0..count).map(|_| q(rng.gen_range(1..den), den)).collect();
    xs.sort();
    xs.dedup();
    xs
}

fn cmd_differentiate(
    set: &CantorSet,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> Result<String, CliError> {
    let d = &cfg.differentiate;
    let ctx = |e| CliError::from_core("differentiate", e);
    let xs = if d.points.is_empty() {
        random_points(d.point_count, d.seed)
    } else {
        d.points.clone()
    };
    let f = d.function.build()?;
    let rows: Vec<DiffRow> = match &f {
        TestFunction::Step(s) => differentiation_experiment(s, set, &xs, &d.r_sequence),
        TestFunction::Linear(h) => differentiation_experiment(h, set, &xs, &d.r_sequence),
    }
    .map_err(ctx)?;
    let mut violations = Vec::new();
    match (&f, &d.function) {
        (TestFunction::Linear(h), _) => {
            if let Some(lip) = h.lipschitz() {
                let two = Q::from_integer(2.into());
                for r in &rows {
                    if r.error > &two * &lip * &r.r {
                        violations.push(format!("x = {}, r = {}", fmt_q(&r.x), fmt_q(&r.r)));
                    }
                }
            }
        }
        (_, FunctionSpec::Indicator { a, b }) => {
            let two = Q::from_integer(2.into());
            for r in &rows {
                let inside = &r.x > a && &r.x < b;
                let dist = std::cmp::min(&r.x - a, b - &r.x);
                if inside && &r.r * &two < dist && r.error != Q::from_integer(0.into()) {
                    violations.push(format!("x = {}, r = {}", fmt_q(&r.x), fmt_q(&r.r)));
                }
            }
        }
        _ => {}
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt_q(&r.r),
                fmt_q(&r.x),
                fmt_q(&r.error),
                format!("{:e}", to_f64(&r.error)),
            ]
        })
        .collect();
    out.csv(
        "differentiate.csv",
        &["k", "r", "x", "value", "value_f64"],
        &csv_rows,
    )?;
    let per_r: Vec<serde_json::Value> = d
        .r_sequence
        .iter()
        .map(|r| {
            let worst = rows
                .iter()
                .filter(|x| &x.r == r)
                .map(|x| to_f64(&x.error))
                .fold(0.0, f64::max);
            json!({"r": fmt_q(r), "max_error": worst})
        })
        .collect();
    out.json(
        "differentiate.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "points": xs.len(),
            "rows": rows.len(),
            "max_error_per_r": per_r,
            "violations": violations,
        }),
    )?;
    if !violations.is_empty() {
        return Err(CliError::Check(format!(
            "{} rows break the error bound",
            violations.len()
        )));
    }
    Ok(format!("{} rows, bound holds on every row", rows.len()))
}

fn cmd_demo(set: &CantorSet, cfg: &RunConfig, out: &mut Outputs) -> Result<String, CliError> {
    let rep = l1_divergence_demo(set, &cfg.demo).map_err(|e| CliError::from_core("demo-l1", e))?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.k.to_string(), format!("{:e}", r.integral)];
            v.extend(r.ball_mass.iter().map(|m| format!("{m:e}")));
            v
        })
        .collect();
    let radii: Vec<String> = rep.radii.iter().map(|r| format!("mass_{r:e}")).collect();
    let mut header = vec!["k", "integral"];
    header.extend(radii.iter().map(String::as_str));
    out.csv("demo_l1.csv", &header, &rows)?;
    let mut report = serde_json::to_value(&rep).expect("report serializes");
    report["schema_version"] = json!(SCHEMA_VERSION);
    out.json("demo_l1.json", &report)?;
    Ok(format!(
        "growth {:.3} from k = 1 to k = {}, x0 = {}",
        rep.growth,
        rep.rows.len(),
        fmt_q(&rep.x0)
    ))
}

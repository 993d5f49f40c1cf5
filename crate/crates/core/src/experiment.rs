//! Experiment orchestration: load a test split, run every requested method
//! of a task at every SNR point, aggregate per-cell metrics and write the
//! result CSV plus optional per-sample iteration traces.
//!
//! Tasks are strategies behind [`TaskRunner`], looked up by name in a
//! [`TaskRegistry`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::baselines::{fit_lmmse, lmmse_estimate, LmmseBank};
use crate::channel_model::{
    add_awgn, noise_variance, stream_rng, AngularTransform, ChannelMatrix, Sample, SampleSet,
};
use crate::config::KeyValues;
use crate::denoiser::{DenoiserFactory, DenoiserRegistry};
use crate::error::{Error, Result};
use crate::hqs::{IterationTrace, SolverConfig};
use crate::io::{load_sample_set, DatasetPaths};
use crate::metrics::{cos_similarity, nmse_ratio, to_db, Cosine};
use crate::tasks::{
    ae, ce, cf, measurement_count, AntennaSelection, PilotPattern, Projection, SvdCache,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: String,
    /// Dataset base path; the `.test` split is evaluated, `.train` feeds LMMSE.
    pub data: PathBuf,
    pub denoiser: String,
    pub pattern: String,
    pub selection: String,
    pub cr: f64,
    pub bits: Option<u32>,
    pub snr_db: Vec<f64>,
    pub solver: SolverConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    /// Wall-clock runtimes in the CSV; off writes zeros so reruns are
    /// byte-identical.
    pub timing: bool,
    /// Defaults to every method of the task.
    pub methods: Option<Vec<String>>,
    pub max_samples: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "ce".into(),
            data: PathBuf::from("data.pnpd"),
            denoiser: "shrink".into(),
            pattern: "A".into(),
            selection: "A".into(),
            cr: 0.25,
            bits: None,
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            solver: SolverConfig::default(),
            seed: 0,
            out: None,
            trace_dir: None,
            timing: true,
            methods: None,
            max_samples: None,
        }
    }
}

/// `none` or an integer.
pub fn parse_bits(s: &str) -> Result<Option<u32>> {
    match s.trim() {
        "none" | "" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|e| Error::Config(format!("bits = '{v}': {e}"))),
    }
}

/// Decimal or `a/b`.
pub fn parse_ratio(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("bad ratio '{s}'"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0.0 {
                return Err(bad());
            }
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let solver = SolverConfig {
            lambda: kv.get_or("lambda", d.solver.lambda)?,
            rho0: kv.get_or("rho0", d.solver.rho0)?,
            alpha: kv.get_or("alpha", d.solver.alpha)?,
            n_iters: kv.get_or("iters", d.solver.n_iters)?,
            return_best: kv.flag("return_best", false)?,
        };
        let cfg = Self {
            task: kv.str("task").unwrap_or(&d.task).to_string(),
            data: kv.str("data").map_or(d.data, PathBuf::from),
            denoiser: kv.str("denoiser").unwrap_or(&d.denoiser).to_string(),
            pattern: kv.str("pattern").unwrap_or(&d.pattern).to_string(),
            selection: kv.str("selection").unwrap_or(&d.selection).to_string(),
            cr: kv.str("cr").map(parse_ratio).transpose()?.unwrap_or(d.cr),
            bits: kv.str("bits").map(parse_bits).transpose()?.flatten(),
            snr_db: kv.list("snr_db")?.unwrap_or(d.snr_db),
            solver,
            seed: kv.get_or("seed", d.seed)?,
            out: kv.str("out").map(PathBuf::from),
            trace_dir: kv.str("trace_dir").map(PathBuf::from),
            timing: kv.flag("timing", true)?,
            methods: kv.list("methods")?,
            max_samples: kv.get("max_samples")?,
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db list is empty".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_db contains NaN".into()));
        }
        let test = DatasetPaths::from_base(&self.data).test;
        if !test.exists() {
            return Err(Error::Config(format!("test split {} not found", test.display())));
        }
        if let Some(path) = self.denoiser.strip_prefix("cnn:") {
            if !Path::new(path.trim()).exists() {
                return Err(Error::Config(format!("weights {path} not found")));
            }
        }
        Ok(())
    }
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: String,
    pub method: String,
    pub snr_db: f64,
    /// `None` for tasks without compression.
    pub cr: Option<f64>,
    pub bits: Option<u32>,
    pub nmse_db: f64,
    pub cos: f64,
    pub runtime_ms: f64,
    pub iters: usize,
    pub cos_excluded: usize,
}

pub const CSV_HEADER: &str = "task,method,snr_db,cr,bits,nmse_db,cos,runtime_ms,iters,cos_excluded";

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.6},{:.3},{},{}",
            self.task,
            self.method,
            fmt_snr(self.snr_db),
            self.cr.map_or_else(|| "na".to_string(), |c| format!("{c:.6}")),
            self.bits.map_or_else(|| "none".to_string(), |b| b.to_string()),
            self.nmse_db,
            self.cos,
            self.runtime_ms,
            self.iters,
            self.cos_excluded
        )
    }
}

pub fn write_csv(w: &mut impl Write, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

/// Result of one method on one sample.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub nmse_ratio: f64,
    pub cos: Cosine,
    pub iters: usize,
    pub trace: Option<IterationTrace>,
}

#[derive(Debug, Clone)]
pub struct SampleTrace {
    pub method: String,
    pub snr_db: f64,
    pub index: usize,
    pub trace: IterationTrace,
}

/// Shared, read-only inputs of a run.
pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub test: &'a SampleSet,
    pub train: Option<&'a SampleSet>,
    pub transform: &'a AngularTransform,
    pub denoiser: &'a dyn DenoiserFactory,
}

/// One task head with its methods.
pub trait TaskRunner {
    fn methods(&self) -> &'static [&'static str];

    /// Whether the method needs the training split.
    fn needs_train(&self, _method: &str) -> bool {
        false
    }

    /// SNR points evaluated; tasks without observation noise return `[inf]`.
    fn snr_points(&self, cfg: &ExperimentConfig) -> Vec<f64> {
        cfg.snr_db.clone()
    }

    fn cr(&self) -> Option<f64> {
        None
    }

    fn bits(&self) -> Option<u32> {
        None
    }

    fn evaluate(
        &mut self,
        ctx: &RunContext<'_>,
        method: &str,
        snr_db: f64,
        sample: &Sample,
        seed: u64,
    ) -> Result<Outcome>;
}

pub type TaskConstructor = fn(&ExperimentConfig, &SampleSet) -> Result<Box<dyn TaskRunner>>;

pub struct TaskRegistry {
    entries: BTreeMap<&'static str, TaskConstructor>,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("ce", |cfg, set| Ok(Box::new(CeRunner::new(cfg, set)?)));
        r.register("ae", |cfg, set| Ok(Box::new(AeRunner::new(cfg, set)?)));
        r.register("cf", |cfg, set| Ok(Box::new(CfRunner::new(cfg, set)?)));
        r
    }
}

impl TaskRegistry {
    pub fn register(&mut self, name: &'static str, ctor: TaskConstructor) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, cfg: &ExperimentConfig, set: &SampleSet) -> Result<Box<dyn TaskRunner>> {
        let ctor = self.entries.get(cfg.task.as_str()).ok_or_else(|| Error::Unknown {
            kind: "task",
            name: cfg.task.clone(),
        })?;
        ctor(cfg, set)
    }
}

fn scored(est: &ChannelMatrix, truth: &ChannelMatrix, iters: usize, trace: Option<IterationTrace>) -> Result<Outcome> {
    Ok(Outcome {
        nmse_ratio: nmse_ratio(est, truth)?,
        cos: cos_similarity(est, truth)?,
        iters,
        trace,
    })
}

fn unknown_method(task: &str, m: &str) -> Error {
    Error::Unknown {
        kind: "method",
        name: format!("{task}/{m}"),
    }
}

/// Pilot-based channel estimation: `ls`, `lmmse`, `pppce`.
pub struct CeRunner {
    pattern: PilotPattern,
    lmmse: BTreeMap<u64, LmmseBank>,
}

impl CeRunner {
    pub fn new(cfg: &ExperimentConfig, set: &SampleSet) -> Result<Self> {
        Ok(Self {
            pattern: PilotPattern::resolve(&cfg.pattern, set.n_s, set.n_t)?,
            lmmse: BTreeMap::new(),
        })
    }
}

impl TaskRunner for CeRunner {
    fn methods(&self) -> &'static [&'static str] {
        &["ls", "lmmse", "pppce"]
    }

    fn needs_train(&self, method: &str) -> bool {
        method == "lmmse"
    }

    fn evaluate(
        &mut self,
        ctx: &RunContext<'_>,
        method: &str,
        snr_db: f64,
        sample: &Sample,
        seed: u64,
    ) -> Result<Outcome> {
        let obs = ce::observe_pilots(&sample.clean, &self.pattern, snr_db, seed)?;
        match method {
            "ls" => scored(&ce::ls_init(&obs, &self.pattern)?, &sample.clean, 0, None),
            "lmmse" => {
                let key = snr_db.to_bits();
                if !self.lmmse.contains_key(&key) {
                    let train = ctx
                        .train
                        .ok_or_else(|| Error::EmptyDataset("lmmse needs the training split".into()))?;
                    let channels: Vec<ChannelMatrix> = train.samples.iter().map(|s| s.clean.clone()).collect();
                    let bank = fit_lmmse(&channels, &self.pattern, noise_variance(snr_db, 1.0))?;
                    self.lmmse.insert(key, bank);
                }
                let est = lmmse_estimate(&obs, &self.pattern, &self.lmmse[&key])?;
                scored(&est, &sample.clean, 0, None)
            }
            "pppce" => {
                let den = ctx.denoiser.build(Some(&sample.clean_ad))?;
                let (est, trace) = ce::pppce(
                    &obs,
                    &self.pattern,
                    den.as_ref(),
                    &ctx.cfg.solver,
                    ctx.transform,
                    Some(&sample.clean),
                )?;
                scored(&est, &sample.clean, trace.len(), Some(trace))
            }
            m => Err(unknown_method("ce", m)),
        }
    }
}

/// Antenna extrapolation from noisy selected columns: `spline`, `pppae`.
pub struct AeRunner {
    sel: AntennaSelection,
}

impl AeRunner {
    pub fn new(cfg: &ExperimentConfig, set: &SampleSet) -> Result<Self> {
        Ok(Self {
            sel: AntennaSelection::resolve(&cfg.selection, set.n_t)?,
        })
    }
}

impl TaskRunner for AeRunner {
    fn methods(&self) -> &'static [&'static str] {
        &["spline", "pppae"]
    }

    fn evaluate(
        &mut self,
        ctx: &RunContext<'_>,
        method: &str,
        snr_db: f64,
        sample: &Sample,
        seed: u64,
    ) -> Result<Outcome> {
        let (noisy, _) = add_awgn(&sample.clean, snr_db, seed);
        let observed = ae::observe_antennas(&noisy, &self.sel)?;
        match method {
            "spline" => scored(&ae::spline_init(&observed, &self.sel)?, &sample.clean, 0, None),
            "pppae" => {
                let den = ctx.denoiser.build(Some(&sample.clean_ad))?;
                let (est, trace) = ae::pppae(
                    &observed,
                    &self.sel,
                    den.as_ref(),
                    &ctx.cfg.solver,
                    ctx.transform,
                    Some(&sample.clean),
                )?;
                scored(&est, &sample.clean, trace.len(), Some(trace))
            }
            m => Err(unknown_method("ae", m)),
        }
    }
}

/// Feedback reconstruction of the truncated angular block: `pppcf`.
pub struct CfRunner {
    cr: f64,
    bits: Option<u32>,
    proj: Projection,
    cache: SvdCache,
}

impl CfRunner {
    pub fn new(cfg: &ExperimentConfig, set: &SampleSet) -> Result<Self> {
        let n = 2 * set.crop_rows * set.n_t;
        let m = measurement_count(cfg.cr, n)?;
        let (proj, cache) = cf::make_projection(m, n, cfg.seed)?;
        Ok(Self {
            cr: cfg.cr,
            bits: cfg.bits,
            proj,
            cache,
        })
    }
}

impl TaskRunner for CfRunner {
    fn methods(&self) -> &'static [&'static str] {
        &["pppcf"]
    }

    fn snr_points(&self, _cfg: &ExperimentConfig) -> Vec<f64> {
        vec![f64::INFINITY]
    }

    fn cr(&self) -> Option<f64> {
        Some(self.cr)
    }

    fn bits(&self) -> Option<u32> {
        self.bits
    }

    fn evaluate(
        &mut self,
        ctx: &RunContext<'_>,
        method: &str,
        _snr_db: f64,
        sample: &Sample,
        _seed: u64,
    ) -> Result<Outcome> {
        if method != "pppcf" {
            return Err(unknown_method("cf", method));
        }
        let truth = &sample.clean_ad;
        let code = cf::compress(truth, &self.proj, self.bits)?;
        let den = ctx.denoiser.build(Some(truth))?;
        let (est, trace) = cf::pppcf(&code, &self.proj, &self.cache, den.as_ref(), &ctx.cfg.solver, Some(truth))?;
        let cos = cos_similarity(&ctx.transform.ad2sf(&est)?, &ctx.transform.ad2sf(truth)?)?;
        Ok(Outcome {
            nmse_ratio: nmse_ratio(&est, truth)?,
            cos,
            iters: trace.len(),
            trace: Some(trace),
        })
    }
}

/// Seed of the observation for sample `index` at SNR point `snr_index`;
/// shared by all methods so they see the same data.
pub fn sample_seed(seed: u64, snr_index: usize, index: usize) -> u64 {
    stream_rng(seed, ((snr_index as u64) << 32) | index as u64).next_u64()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<SampleTrace>,
    /// SHA-256 of the weights file when the denoiser is `cnn:<file>`.
    pub weights_sha256: Option<String>,
}

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        csv_string(&self.rows)
    }

    pub fn row(&self, method: &str, snr_db: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.snr_db == snr_db || (r.snr_db.is_infinite() && snr_db.is_infinite())))
    }
}

/// Loads the splits named by `cfg.data` and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let paths = DatasetPaths::from_base(&cfg.data);
    let test = load_sample_set(&paths.test)?;
    let registry = TaskRegistry::default();
    let runner = registry.build(cfg, &test)?;
    let needs_train = selected_methods(cfg, runner.as_ref())?
        .iter()
        .any(|m| runner.needs_train(m));
    let train = if needs_train {
        Some(load_sample_set(&paths.train)?)
    } else {
        None
    };
    run_with_data(cfg, runner, &test, train.as_ref())
}

fn selected_methods(cfg: &ExperimentConfig, runner: &dyn TaskRunner) -> Result<Vec<String>> {
    let all = runner.methods();
    match &cfg.methods {
        None => Ok(all.iter().map(|s| s.to_string()).collect()),
        Some(list) => {
            for m in list {
                if !all.contains(&m.as_str()) {
                    return Err(unknown_method(&cfg.task, m));
                }
            }
            Ok(list.clone())
        }
    }
}

/// Runs with already loaded data.
pub fn run_with_data(
    cfg: &ExperimentConfig,
    mut runner: Box<dyn TaskRunner>,
    test: &SampleSet,
    train: Option<&SampleSet>,
) -> Result<ExperimentOutput> {
    cfg.solver.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyDataset("test split".into()));
    }
    let methods = selected_methods(cfg, runner.as_ref())?;
    let registry = DenoiserRegistry::default();
    let factory = registry.resolve(&cfg.denoiser)?;
    let weights_sha256 = match cfg.denoiser.strip_prefix("cnn:") {
        Some(p) => Some(sha256_hex(&std::fs::read(p.trim())?)),
        None => None,
    };
    let transform = test.transform()?;
    let ctx = RunContext {
        cfg,
        test,
        train,
        transform: &transform,
        denoiser: factory.as_ref(),
    };
    let n = cfg.max_samples.map_or(test.len(), |m| m.min(test.len()));
    if let Some(dir) = &cfg.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (si, &snr) in runner.snr_points(cfg).iter().enumerate() {
        for method in &methods {
            let mut sum_ratio = 0.0;
            let mut sum_cos = 0.0;
            let mut excluded = 0;
            let mut iters = 0;
            let mut elapsed = 0.0;
            for (index, sample) in test.samples.iter().take(n).enumerate() {
                let seed = sample_seed(cfg.seed, si, index);
                let start = Instant::now();
                let out = runner
                    .evaluate(&ctx, method, snr, sample, seed)
                    .map_err(|e| e.at_sample(index))?;
                elapsed += start.elapsed().as_secs_f64() * 1e3;
                sum_ratio += out.nmse_ratio;
                sum_cos += out.cos.value;
                excluded += out.cos.excluded_rows;
                iters = iters.max(out.iters);
                if let Some(trace) = out.trace {
                    if let Some(dir) = &cfg.trace_dir {
                        let name = format!("{}_{}_snr{}_{index:04}.csv", cfg.task, method, fmt_snr(snr));
                        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
                        trace.write_csv(&mut f)?;
                    }
                    traces.push(SampleTrace {
                        method: method.clone(),
                        snr_db: snr,
                        index,
                        trace,
                    });
                }
            }
            rows.push(ResultRow {
                task: cfg.task.clone(),
                method: method.clone(),
                snr_db: snr,
                cr: runner.cr(),
                bits: runner.bits(),
                nmse_db: to_db(sum_ratio / n as f64),
                cos: sum_cos / n as f64,
                runtime_ms: if cfg.timing { elapsed / n as f64 } else { 0.0 },
                iters,
                cos_excluded: excluded,
            });
        }
    }
    if let Some(out) = &cfg.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
        write_csv(&mut f, &rows)?;
        f.flush()?;
    }
    Ok(ExperimentOutput {
        rows,
        traces,
        weights_sha256,
    })
}

/// Several experiments sharing one base config: every task in `tasks`, and
/// for feedback every `(cr, bits)` pair of `cr_list x bits_list`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub base: ExperimentConfig,
    pub tasks: Vec<String>,
    pub cr_list: Vec<f64>,
    pub bits_list: Vec<Option<u32>>,
}

impl BenchConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let base = ExperimentConfig::from_kv(kv)?;
        let tasks = kv
            .list::<String>("tasks")?
            .unwrap_or_else(|| vec!["ce".into(), "ae".into(), "cf".into()]);
        let cr_list = match kv.list::<String>("cr_list")? {
            Some(v) => v.iter().map(|s| parse_ratio(s)).collect::<Result<_>>()?,
            None => vec![1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0],
        };
        let bits_list = match kv.list::<String>("bits_list")? {
            Some(v) => v.iter().map(|s| parse_bits(s)).collect::<Result<_>>()?,
            None => vec![None],
        };
        Ok(Self {
            base,
            tasks,
            cr_list,
            bits_list,
        })
    }
}

pub fn run_bench(bench: &BenchConfig) -> Result<ExperimentOutput> {
    let mut all = ExperimentOutput {
        rows: Vec::new(),
        traces: Vec::new(),
        weights_sha256: None,
    };
    let mut hashes = Vec::new();
    for task in &bench.tasks {
        let variants: Vec<(f64, Option<u32>)> = if task == "cf" {
            bench
                .cr_list
                .iter()
                .flat_map(|&cr| bench.bits_list.iter().map(move |&b| (cr, b)))
                .collect()
        } else {
            vec![(bench.base.cr, bench.base.bits)]
        };
        for (cr, bits) in variants {
            let cfg = ExperimentConfig {
                task: task.clone(),
                cr,
                bits,
                out: None,
                methods: None,
                ..bench.base.clone()
            };
            let out = run_experiment(&cfg)?;
            hashes.extend(out.weights_sha256.clone());
            all.rows.extend(out.rows);
            all.traces.extend(out.traces);
        }
    }
    if hashes.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Config("weights changed between bench runs".into()));
    }
    all.weights_sha256 = hashes.into_iter().next();
    if let Some(out) = &bench.base.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
        write_csv(&mut f, &all.rows)?;
        f.flush()?;
    }
    Ok(all)
}

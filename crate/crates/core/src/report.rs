//! Scenario execution and report output.
//!
//! Reports are written as JSON with sorted keys and floats rounded to nine
//! significant digits, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, Scenario, ScenarioConfig, SourceSpec};
use crate::filter::{filter_stream, FilterConfig, FilterError, Sample};
use crate::metrics::{evaluate, ErrorReport, MetricsError, TransmissionLog};
use crate::sim::{self, Comparison, RunMetrics, RunParams, SimError, SourceStream};
use crate::sources::{gen_normal, load_csv, IngestReport, SourceError};

pub const TOOL_NAME: &str = "mistfog";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("source '{device}': {source}")]
    Source {
        device: String,
        #[source]
        source: SourceError,
    },
    #[error("filter on '{device}': {source}")]
    Filter {
        device: String,
        #[source]
        source: FilterError,
    },
    #[error("metrics on '{device}': {source}")]
    Metrics {
        device: String,
        #[source]
        source: MetricsError,
    },
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Filter,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorReport {
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestReport>,
    pub error: Option<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub device: String,
    pub n: usize,
    pub p: f64,
    pub error: Option<ErrorReport>,
}

/// Raw and reconstructed series for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub device: String,
    pub timestamps: Vec<f64>,
    pub raw: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub transmitted: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub tool: Tool,
    pub command: Command,
    pub seed: u64,
    /// Fully resolved configuration; feeding it back reproduces this report.
    pub config: ScenarioConfig,
    pub sensors: BTreeMap<String, SensorReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub runs: BTreeMap<String, RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(skip)]
    pub plots: Vec<PlotSeries>,
}

impl ScenarioReport {
    fn new(command: Command, scenario: &Scenario) -> Self {
        Self {
            tool: Tool { name: TOOL_NAME, version: TOOL_VERSION },
            command,
            seed: scenario.config.run.seed,
            config: scenario.config.clone(),
            sensors: BTreeMap::new(),
            runs: BTreeMap::new(),
            comparison: None,
            sweep: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        stable_json(&self.to_value())
    }
}

struct Loaded {
    spec: SourceSpec,
    samples: Vec<Sample>,
    ingest: Option<IngestReport>,
}

fn load_sources(specs: Vec<SourceSpec>) -> Result<Vec<Loaded>, RunError> {
    specs
        .into_par_iter()
        .map(|spec| {
            let (samples, ingest) = match &spec {
                SourceSpec::Normal(s) => (gen_normal(s, s.count), None),
                SourceSpec::Csv(r) => match load_csv(r, None) {
                    Ok((samples, report)) => (Ok(samples), Some(report)),
                    Err(e) => (Err(e), None),
                },
            };
            let samples = samples.map_err(|source| RunError::Source { device: spec.device().to_string(), source })?;
            Ok(Loaded { spec, samples, ingest })
        })
        .collect()
}

fn sensor_report(loaded: &Loaded, error: Option<ErrorReport>) -> SensorReport {
    let (source, seed) = match &loaded.spec {
        SourceSpec::Normal(s) => ("normal", Some(s.seed)),
        SourceSpec::Csv(_) => ("csv", None),
    };
    SensorReport { source, seed, ingest: loaded.ingest.clone(), error }
}

/// Reconstructed series, per-sample transmit flags, and the score.
type Filtered = (Vec<f64>, Vec<bool>, ErrorReport);

fn filter_one(device: &str, config: FilterConfig, samples: &[Sample]) -> Result<Option<Filtered>, RunError> {
    if samples.is_empty() {
        return Ok(None);
    }
    let run = filter_stream(config, samples).map_err(|source| RunError::Filter { device: device.into(), source })?;
    let flags = run.decisions.iter().map(|d| d.transmit).collect();
    let log = TransmissionLog::new(run.log, samples.len());
    let (recon, report) =
        evaluate(samples, &log).map_err(|source| RunError::Metrics { device: device.into(), source })?;
    Ok(Some((recon, flags, report)))
}

/// Streams each source through the sensor filter and scores the
/// zero-order-hold reconstruction.
pub fn run_filter(scenario: &Scenario) -> Result<ScenarioReport, RunError> {
    let mut report = ScenarioReport::new(Command::Filter, scenario);
    let loaded = load_sources(scenario.sources())?;
    let filter = scenario.config.filter;

    let outcomes: Vec<_> =
        loaded.par_iter().map(|l| filter_one(l.spec.device(), filter, &l.samples)).collect::<Result<_, _>>()?;

    for (l, outcome) in loaded.iter().zip(outcomes) {
        let device = l.spec.device().to_string();
        let error = outcome.as_ref().map(|(_, _, r)| *r);
        report.sensors.insert(device.clone(), sensor_report(l, error));
        if let Some((recon, flags, _)) = outcome {
            report.plots.push(PlotSeries {
                device,
                timestamps: l.samples.iter().map(|s| s.timestamp).collect(),
                raw: l.samples.iter().map(|s| s.value).collect(),
                reconstructed: recon,
                transmitted: flags,
            });
        }
    }

    if let Some(sweep) = &scenario.config.sweep {
        let mut jobs = Vec::new();
        for l in &loaded {
            for &n in &sweep.n {
                for &p in &sweep.p {
                    jobs.push((l, FilterConfig { n, p }));
                }
            }
        }
        report.sweep = jobs
            .into_par_iter()
            .map(|(l, cfg)| {
                let error = filter_one(l.spec.device(), cfg, &l.samples)?.map(|(_, _, r)| r);
                Ok(SweepRow { device: l.spec.device().to_string(), n: cfg.n, p: cfg.p, error })
            })
            .collect::<Result<_, RunError>>()?;
    }
    Ok(report)
}

/// Synthetic timestamps are already in ms; replayed timestamps (seconds) are
/// shifted to start at zero and scaled to ms.
fn to_sim_stream(l: &Loaded) -> SourceStream {
    let samples = match &l.spec {
        SourceSpec::Normal(_) => l.samples.clone(),
        SourceSpec::Csv(_) => {
            let t0 = l.samples.first().map_or(0.0, |s| s.timestamp);
            l.samples.iter().map(|s| Sample::new((s.timestamp - t0) * 1000.0, s.value)).collect()
        }
    };
    SourceStream { device: l.spec.device().to_string(), samples }
}

/// Runs the configured simulation modes on identical sources. Baseline and
/// filtered runs execute on separate threads.
pub fn run_simulate(scenario: &Scenario) -> Result<ScenarioReport, RunError> {
    let mut report = ScenarioReport::new(Command::Simulate, scenario);
    let loaded = load_sources(scenario.sources())?;
    let streams: Vec<SourceStream> = loaded.iter().map(to_sim_stream).collect();
    let cfg = &scenario.config;
    let params = RunParams {
        filter: cfg.filter,
        energy: cfg.energy,
        duration: cfg.run.duration,
        message_size: cfg.run.message_size,
        seed: cfg.run.seed,
    };

    let modes = cfg.run.mode.modes();
    let results: Vec<Result<RunMetrics, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&mode| {
                let (topology, streams, params) = (&scenario.topology, &streams, &params);
                scope.spawn(move || sim::run(topology, streams, mode, params))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let runs: Vec<RunMetrics> = results.into_iter().collect::<Result<_, _>>()?;

    if let [base, cand] = runs.as_slice() {
        report.comparison = Some(sim::compare(base, cand)?);
    }
    let primary = runs.last().expect("at least one mode");
    for l in &loaded {
        let error = primary.sensors.get(l.spec.device()).and_then(|s| s.error);
        report.sensors.insert(l.spec.device().to_string(), sensor_report(l, error));
    }
    for m in runs {
        report.runs.insert(m.mode.as_str().to_string(), m);
    }
    Ok(report)
}

/// Nine significant digits, shortest decimal form.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("valid float");
    if rounded == 0.0 {
        return "0".into();
    }
    rounded.to_string()
}

fn fmt_number(n: &serde_json::Number) -> String {
    if let Some(u) = n.as_u64() {
        u.to_string()
    } else if let Some(i) = n.as_i64() {
        i.to_string()
    } else {
        fmt_float(n.as_f64().unwrap_or(f64::NAN))
    }
}

/// Pretty JSON with sorted object keys and fixed float precision.
pub fn stable_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(value: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&fmt_number(n)),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(&map[key.as_str()], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

fn csv_float(x: f64) -> String {
    if x.is_finite() {
        fmt_float(x)
    } else {
        String::new()
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(csv_float).unwrap_or_default()
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { rows: vec![header.iter().map(|s| s.to_string()).collect()] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<PathBuf, RunError> {
        let io = |source: std::io::Error| RunError::Io { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)?;
        Ok(path.to_path_buf())
    }
}

/// Writes `report.json`, `config.resolved.cfg`, `sensors.csv`, and, where
/// applicable, `links.csv`, `comparison.csv`, `sweep.csv` and one
/// `plots/<sensor>.csv` per sensor. Returns the written paths in order.
pub fn emit_report(report: &ScenarioReport, out_dir: &Path, plots: bool) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();

    let json = out_dir.join("report.json");
    std::fs::write(&json, report.to_json()).map_err(io(&json))?;
    written.push(json);

    let cfg = out_dir.join("config.resolved.cfg");
    std::fs::write(&cfg, report.config.to_toml()).map_err(io(&cfg))?;
    written.push(cfg);

    let mut sensors = Table::new(&[
        "sensor",
        "total",
        "transmitted",
        "suppressed",
        "reduction_percent",
        "avg_error",
        "max_error",
        "percent_avg_error",
    ]);
    for (id, s) in &report.sensors {
        let mut row = vec![id.clone()];
        match &s.error {
            Some(e) => row.extend([
                e.total_count.to_string(),
                e.transmitted_count.to_string(),
                e.suppressed_count.to_string(),
                csv_float(e.reduction_percent),
                csv_float(e.avg_error),
                csv_float(e.max_error),
                opt_float(e.percent_avg_error),
            ]),
            None => row.extend(["0", "0", "0", "", "", "", ""].map(String::from)),
        }
        sensors.push(row);
    }
    written.push(sensors.write(&out_dir.join("sensors.csv"))?);

    if !report.runs.is_empty() {
        let mut links =
            Table::new(&["mode", "link", "latency", "messages_emitted", "messages_delivered", "bytes", "byte_ms"]);
        for (mode, run) in &report.runs {
            for (name, l) in &run.links {
                links.push(vec![
                    mode.clone(),
                    name.clone(),
                    csv_float(l.latency),
                    l.messages_emitted.to_string(),
                    l.messages_delivered.to_string(),
                    l.bytes.to_string(),
                    csv_float(l.byte_ms),
                ]);
            }
        }
        written.push(links.write(&out_dir.join("links.csv"))?);
    }

    if let Some(cmp) = &report.comparison {
        let mut table = Table::new(&["metric", "baseline", "candidate", "reduction_percent"]);
        for (name, row) in &cmp.rows {
            table.push(vec![
                name.clone(),
                csv_float(row.baseline),
                csv_float(row.candidate),
                opt_float(row.reduction_percent),
            ]);
        }
        written.push(table.write(&out_dir.join("comparison.csv"))?);
    }

    if !report.sweep.is_empty() {
        let mut table = Table::new(&[
            "sensor",
            "n",
            "p",
            "transmitted",
            "suppressed",
            "reduction_percent",
            "avg_error",
            "max_error",
        ]);
        for r in &report.sweep {
            let mut row = vec![r.device.clone(), r.n.to_string(), csv_float(r.p)];
            match &r.error {
                Some(e) => row.extend([
                    e.transmitted_count.to_string(),
                    e.suppressed_count.to_string(),
                    csv_float(e.reduction_percent),
                    csv_float(e.avg_error),
                    csv_float(e.max_error),
                ]),
                None => row.extend(["0", "0", "", "", ""].map(String::from)),
            }
            table.push(row);
        }
        written.push(table.write(&out_dir.join("sweep.csv"))?);
    }

    if plots && !report.plots.is_empty() {
        let dir = out_dir.join("plots");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        for series in &report.plots {
            let mut table = Table::new(&["timestamp", "raw", "reconstructed", "transmitted"]);
            for i in 0..series.raw.len() {
                table.push(vec![
                    csv_float(series.timestamps[i]),
                    csv_float(series.raw[i]),
                    csv_float(series.reconstructed[i]),
                    u8::from(series.transmitted[i]).to_string(),
                ]);
            }
            written.push(table.write(&dir.join(format!("{}.csv", file_stem(&series.device))))?);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

/// Evaluates `path OP number` against a report, e.g.
/// `comparison.rows.network_bytes.reduction_percent > 0`. Path segments are
/// object keys or array indices separated by dots.
pub fn check_assertion(report: &Value, expr: &str) -> Result<bool, String> {
    const OPS: [(&str, Op); 6] =
        [("<=", Op::Le), (">=", Op::Ge), ("==", Op::Eq), ("!=", Op::Ne), ("<", Op::Lt), (">", Op::Gt)];
    let (pos, token, op) = OPS
        .iter()
        .filter_map(|(tok, op)| expr.find(tok).map(|p| (p, *tok, *op)))
        .min_by_key(|(p, tok, _)| (*p, std::cmp::Reverse(tok.len())))
        .ok_or_else(|| format!("assertion '{expr}' has no comparison operator"))?;
    let path = expr[..pos].trim();
    let rhs = expr[pos + token.len()..].trim();
    let rhs: f64 = rhs.parse().map_err(|_| format!("assertion '{expr}': '{rhs}' is not a number"))?;
    if path.is_empty() {
        return Err(format!("assertion '{expr}' has an empty path"));
    }

    let mut cur = report;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
            _ => None,
        }
        .ok_or_else(|| format!("assertion '{expr}': no field '{path}' in report"))?;
    }
    let lhs = match cur {
        Value::Number(n) => n.as_f64().expect("finite"),
        Value::Bool(b) => f64::from(u8::from(*b)),
        other => return Err(format!("assertion '{expr}': '{path}' is {other}, not a number")),
    };
    Ok(match op {
        Op::Lt => lhs < rhs,
        Op::Le => lhs <= rhs,
        Op::Gt => lhs > rhs,
        Op::Ge => lhs >= rhs,
        Op::Eq => lhs == rhs,
        Op::Ne => lhs != rhs,
    })
}

/// Evaluates every assertion, returning the failing ones.
pub fn failed_assertions(report: &ScenarioReport, exprs: &[String]) -> Result<Vec<String>, String> {
    let value = report.to_value();
    let mut failed = Vec::new();
    for e in exprs {
        if !check_assertion(&value, e)? {
            failed.push(e.clone());
        }
    }
    Ok(failed)
}

pub fn summary(report: &ScenarioReport) -> String {
    let mut s = String::new();
    for (id, r) in &report.sensors {
        match &r.error {
            Some(e) => {
                let _ = writeln!(
                    s,
                    "{id}: {}/{} transmitted, reduction {:.2}%, avg error {:.4}, max error {:.4}",
                    e.transmitted_count, e.total_count, e.reduction_percent, e.avg_error, e.max_error
                );
            }
            None => {
                let _ = writeln!(s, "{id}: no samples");
            }
        }
    }
    if let Some(cmp) = &report.comparison {
        for (name, row) in &cmp.rows {
            let pct = row.reduction_percent.map_or("n/a".to_string(), |p| format!("{p:.3}%"));
            let _ = writeln!(s, "{name}: {} -> {} ({pct})", fmt_float(row.baseline), fmt_float(row.candidate));
        }
    }
    s
}

//! Experiment runner: JSON configs in, sorted CSV rows and SVG power curves out.
//!
//! Every (sweep point, method, trial) task derives its random streams from the
//! master seed, so results do not depend on the worker count. Completed
//! (point, method) cells are journalled to `<out>.partial`; a rerun with the
//! same config picks up where an interrupted one stopped.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hypothesis::TestConfig;
use crate::scenarios::{build_scenario_with, estimate_rejection_rate, scenario_info, ScenarioError, ScenarioSpec};

pub const CSV_HEADER: [&str; 14] = [
    "scenario",
    "sweep_param",
    "method_id",
    "kernel",
    "neighborhood",
    "balancing",
    "n",
    "trials",
    "rejections",
    "rate",
    "ci_low",
    "ci_high",
    "seed",
    "wall_time_s",
];

/// Level drawn as the dashed reference line in power plots.
pub const PLOT_ALPHA: f64 = 0.05;

const JOURNAL_MARKER: &str = "# steinseq-journal v1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("no methods configured")]
    NoMethods,
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed results file: {0}")]
    Malformed(String),
    #[error("no rows to plot")]
    NoRows,
    #[error("plot error: {0}")]
    Plot(String),
}

impl HarnessError {
    /// Whether the error stems from user input rather than execution.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::Config { .. } | HarnessError::NoMethods)
    }

    fn config(path: impl Into<String>, message: impl ToString) -> Self {
        HarnessError::Config { path: path.into(), message: message.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_owned(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Parameter values; empty runs the scenario's default point.
    #[serde(default)]
    pub sweep: Vec<f64>,
    /// `None` runs the scenario's own default tests.
    #[serde(default)]
    pub methods: Option<Vec<TestConfig>>,
    /// Sample-size override.
    #[serde(default)]
    pub n: Option<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// CSV output path.
    pub out: PathBuf,
    #[serde(default)]
    pub plot: Option<PathBuf>,
    /// Record wall times (makes the CSV non-reproducible).
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(scenario: impl Into<String>, trials: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            sweep: Vec::new(),
            methods: None,
            n: None,
            trials,
            seed,
            workers: None,
            out: out.into(),
            plot: None,
            timing: false,
        }
    }

    /// Parses JSON, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::config(path, e.into_inner())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::config(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn journal_path(&self) -> PathBuf {
        let mut p = self.out.clone().into_os_string();
        p.push(".partial");
        p.into()
    }

    /// Builds every sweep point and resolves the method list.
    pub fn plan(&self) -> Result<Plan, HarnessError> {
        let info = scenario_info(&self.scenario)
            .ok_or_else(|| HarnessError::config("scenario", format!("unknown scenario {:?}", self.scenario)))?;
        if self.trials == 0 {
            return Err(HarnessError::config("trials", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::config("workers", "must be at least 1"));
        }
        if self.n == Some(0) {
            return Err(HarnessError::config("n", "must be at least 1"));
        }
        if !self.sweep.is_empty() && info.param.is_none() {
            return Err(HarnessError::config("sweep", format!("scenario {} has no parameter", self.scenario)));
        }
        let raw: Vec<Option<f64>> =
            if self.sweep.is_empty() { vec![None] } else { self.sweep.iter().copied().map(Some).collect() };
        let mut points = Vec::with_capacity(raw.len());
        for (i, v) in raw.into_iter().enumerate() {
            let mut spec = build_scenario_with(&self.scenario, v).map_err(|e| match e {
                ScenarioError::OutOfRange { .. } => HarnessError::config(format!("sweep[{i}]"), e),
                other => HarnessError::Scenario(other),
            })?;
            if let Some(n) = self.n {
                spec.n = n;
            }
            if points.iter().any(|p: &ScenarioSpec| p.key() == spec.key()) {
                return Err(HarnessError::config(format!("sweep[{i}]"), "duplicate sweep value"));
            }
            points.push(spec);
        }
        let methods = match &self.methods {
            Some(m) if m.is_empty() => return Err(HarnessError::NoMethods),
            Some(m) => m.clone(),
            None => points[0].tests.clone(),
        };
        if methods.is_empty() {
            return Err(HarnessError::NoMethods);
        }
        let mut ids: Vec<String> = Vec::with_capacity(methods.len());
        for (i, m) in methods.iter().enumerate() {
            m.validate().map_err(|e| HarnessError::config(format!("methods[{i}]"), e))?;
            let id = m.method_id();
            if ids.contains(&id) {
                return Err(HarnessError::config(format!("methods[{i}]"), format!("duplicate method_id {id}")));
            }
            ids.push(id);
        }
        Ok(Plan { points, methods, trials: self.trials, seed: self.seed })
    }
}

/// Resolved experiment: scenario points crossed with methods.
#[derive(Clone, Debug)]
pub struct Plan {
    pub points: Vec<ScenarioSpec>,
    pub methods: Vec<TestConfig>,
    pub trials: usize,
    pub seed: u64,
}

impl Plan {
    /// Hash of everything that determines the results.
    pub fn fingerprint(&self) -> String {
        let doc = serde_json::json!({
            "points": self.points.iter().map(|p| (p.key(), p.n)).collect::<Vec<_>>(),
            "methods": self.methods,
            "trials": self.trials,
            "seed": self.seed,
        });
        Sha256::digest(doc.to_string().as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep_param: Option<f64>,
    pub method_id: String,
    pub kernel: String,
    pub neighborhood: String,
    pub balancing: String,
    pub n: usize,
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub wall_time_s: Option<f64>,
}

impl ResultRow {
    fn sort_key(&self) -> (&str, f64, &str) {
        (&self.scenario, self.sweep_param.unwrap_or(f64::NEG_INFINITY), &self.method_id)
    }

    fn record(&self) -> [String; 14] {
        [
            self.scenario.clone(),
            self.sweep_param.map(fmt_float).unwrap_or_default(),
            self.method_id.clone(),
            self.kernel.clone(),
            self.neighborhood.clone(),
            self.balancing.clone(),
            self.n.to_string(),
            self.trials.to_string(),
            self.rejections.to_string(),
            fmt_float(self.rate),
            fmt_float(self.ci_low),
            fmt_float(self.ci_high),
            self.seed.to_string(),
            self.wall_time_s.map(fmt_float).unwrap_or_default(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self, HarnessError> {
        let bad = |what: &str| HarnessError::Malformed(format!("bad {what} in {r:?}"));
        let float = |i: usize, what: &str| r[i].parse::<f64>().map_err(|_| bad(what));
        let int = |i: usize, what: &str| r[i].parse::<usize>().map_err(|_| bad(what));
        let opt = |i: usize, what: &str| if r[i].is_empty() { Ok(None) } else { float(i, what).map(Some) };
        if r.len() != CSV_HEADER.len() {
            return Err(HarnessError::Malformed(format!("expected {} fields, got {}", CSV_HEADER.len(), r.len())));
        }
        Ok(Self {
            scenario: r[0].to_owned(),
            sweep_param: opt(1, "sweep_param")?,
            method_id: r[2].to_owned(),
            kernel: r[3].to_owned(),
            neighborhood: r[4].to_owned(),
            balancing: r[5].to_owned(),
            n: int(6, "n")?,
            trials: int(7, "trials")?,
            rejections: int(8, "rejections")?,
            rate: float(9, "rate")?,
            ci_low: float(10, "ci_low")?,
            ci_high: float(11, "ci_high")?,
            seed: r[12].parse().map_err(|_| bad("seed"))?,
            wall_time_s: opt(13, "wall_time_s")?,
        })
    }

    /// Numeric column by header name.
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "sweep_param" => self.sweep_param,
            "n" => Some(self.n as f64),
            "trials" => Some(self.trials as f64),
            "rejections" => Some(self.rejections as f64),
            "rate" => Some(self.rate),
            "seed" => Some(self.seed as f64),
            "wall_time_s" => self.wall_time_s,
            _ => None,
        }
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct JournalEntry {
    point: String,
    method_id: String,
    rejections: usize,
    wall_time_s: f64,
}

fn read_journal(path: &Path, fingerprint: &str) -> Result<Vec<JournalEntry>, HarnessError> {
    let Ok(file) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut lines = BufReader::new(file).lines();
    let expected = format!("{JOURNAL_MARKER} {fingerprint}");
    match lines.next() {
        Some(Ok(head)) if head == expected => {}
        _ => {
            log::warn!("ignoring stale journal {}", path.display());
            return Ok(Vec::new());
        }
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        // A torn final line from an interrupted write is dropped.
        match serde_json::from_str(&line) {
            Ok(e) => out.push(e),
            Err(_) => break,
        }
    }
    Ok(out)
}

fn row_for(spec: &ScenarioSpec, config: &TestConfig, trials: usize, seed: u64, rejections: usize, wall: Option<f64>) -> ResultRow {
    let est = crate::scenarios::power_estimate(spec, config, trials, rejections, seed, wall.unwrap_or(0.0));
    ResultRow {
        scenario: est.scenario,
        sweep_param: est.param,
        method_id: est.method_id,
        kernel: config.kernel_label(),
        neighborhood: config.neighborhood_label(),
        balancing: config.balancing_label(),
        n: est.n,
        trials,
        rejections,
        rate: est.rate,
        ci_low: est.ci_low,
        ci_high: est.ci_high,
        seed,
        wall_time_s: wall,
    }
}

/// Runs the experiment, writes the CSV (and plot, if configured) and returns
/// the sorted rows.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let plan = config.plan()?;
    let fingerprint = plan.fingerprint();
    if let Some(dir) = config.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let journal_path = config.journal_path();
    let done = read_journal(&journal_path, &fingerprint)?;
    let mut journal = OpenOptions::new().create(true).write(true).truncate(true).open(&journal_path).map_err(io_err(&journal_path))?;
    writeln!(journal, "{JOURNAL_MARKER} {fingerprint}").map_err(io_err(&journal_path))?;
    for e in &done {
        writeln!(journal, "{}", serde_json::to_string(e).expect("journal entry serialises")).map_err(io_err(&journal_path))?;
    }
    journal.flush().map_err(io_err(&journal_path))?;

    let cells: Vec<(usize, usize)> =
        (0..plan.points.len()).flat_map(|p| (0..plan.methods.len()).map(move |m| (p, m))).collect();
    let lookup = |p: usize, m: usize| {
        let (key, id) = (plan.points[p].key(), plan.methods[m].method_id());
        done.iter().find(|e| e.point == key && e.method_id == id).cloned()
    };

    let (tx, rx) = mpsc::channel::<JournalEntry>();
    let writer_path = journal_path.clone();
    let writer = std::thread::spawn(move || -> std::io::Result<()> {
        for entry in rx {
            writeln!(journal, "{}", serde_json::to_string(&entry).expect("journal entry serialises"))?;
            journal.flush()?;
        }
        Ok(())
    });

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| HarnessError::config("workers", e))?;
    let results: Result<Vec<JournalEntry>, HarnessError> = pool.install(|| {
        cells
            .par_iter()
            .map_with(tx, |tx, &(p, m)| {
                if let Some(e) = lookup(p, m) {
                    return Ok(e);
                }
                let est = estimate_rejection_rate(&plan.points[p], &plan.methods[m], plan.trials, plan.seed)?;
                let entry = JournalEntry {
                    point: plan.points[p].key(),
                    method_id: est.method_id,
                    rejections: est.rejections,
                    wall_time_s: est.wall_time_s,
                };
                // The writer only disappears after a write failure, reported below.
                let _ = tx.send(entry.clone());
                Ok(entry)
            })
            .collect()
    });
    let written = writer.join().expect("journal writer panicked");
    let results = results?;
    written.map_err(io_err(&writer_path))?;

    let mut rows: Vec<ResultRow> = cells
        .iter()
        .zip(&results)
        .map(|(&(p, m), e)| {
            let wall = config.timing.then_some(e.wall_time_s);
            row_for(&plan.points[p], &plan.methods[m], plan.trials, plan.seed, e.rejections, wall)
        })
        .collect();
    sort_rows(&mut rows);
    write_csv(&rows, &config.out)?;
    if let Some(plot) = &config.plot {
        emit_power_plot(&rows, "sweep_param", plot)?;
    }
    fs::remove_file(&journal_path).map_err(io_err(&journal_path))?;
    Ok(rows)
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.cmp(kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(kb.2))
    });
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Malformed(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes via a temporary file so readers never see a half-written CSV.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    let text = csv_string(rows)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Malformed(format!("unexpected header {header:?}")));
    }
    r.records().map(|rec| ResultRow::from_record(&rec?)).collect()
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rejection rate against `x_field`, one polyline per method.
pub fn power_plot_svg(rows: &[ResultRow], x_field: &str) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::NoRows);
    }
    let family = &rows[0].scenario;
    if let Some(r) = rows.iter().find(|r| &r.scenario != family) {
        return Err(HarnessError::Plot(format!("rows mix scenarios {family} and {}", r.scenario)));
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let x = r.field(x_field).ok_or_else(|| HarnessError::Plot(format!("row has no numeric field {x_field:?}")))?;
        let y = r.rate.clamp(0.0, 1.0);
        match series.iter_mut().find(|(id, _)| id == &r.method_id) {
            Some((_, pts)) => pts.push((x, y)),
            None => series.push((r.method_id.clone(), vec![(x, y)])),
        }
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (mut lo, mut hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 60.0, 20.0, 30.0, 50.0);
    let legend_h = 18.0 * series.len() as f64;
    let total_h = h + legend_h;
    let px = |x: f64| left + (x - lo) / (hi - lo) * (w - left - right);
    let py = |y: f64| top + (1.0 - y) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{total_h}" viewBox="0 0 {w} {total_h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{total_h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, w / 2.0, xml_escape(family));
    let (x0, x1, y0, y1) = (px(lo), px(hi), py(0.0), py(1.0));
    let _ = writeln!(s, r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, x0 - 7.0, y + 4.0);
        let xv = lo + v * (hi - lo);
        let x = px(xv);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 18.0, trim_tick(xv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, y0 + 36.0, xml_escape(x_field));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">rejection rate</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let ya = py(PLOT_ALPHA);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{ya:.2}" x2="{x1:.2}" y2="{ya:.2}" stroke="gray" stroke-dasharray="6 4"/>"#);
    for (k, (id, pts)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#, coords.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, px(x), py(y));
        }
        let ly = h + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{left}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#, left + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}">{}</text>"#, left + 30.0, ly + 4.0, xml_escape(id));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn trim_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

pub fn emit_power_plot(rows: &[ResultRow], x_field: &str, output: &Path) -> Result<(), HarnessError> {
    let svg = power_plot_svg(rows, x_field)?;
    fs::write(output, svg).map_err(io_err(output))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, x: f64, rate: f64) -> ResultRow {
        let (ci_low, ci_high) = crate::scenarios::wilson_interval((rate * 10.0) as usize, 10);
        ResultRow {
            scenario: "mrf".into(),
            sweep_param: Some(x),
            method_id: method.into(),
            kernel: String::new(),
            neighborhood: String::new(),
            balancing: String::new(),
            n: 10,
            trials: 10,
            rejections: (rate * 10.0) as usize,
            rate,
            ci_low,
            ci_high,
            seed: 1,
            wall_time_s: None,
        }
    }

    #[test]
    fn config_errors_carry_paths() {
        let e = ExperimentConfig::from_json(r#"{"scenario":"mrf","trials":2,"out":"x.csv","methods":[{"method":"ksd_wild","alpha":"a"}]}"#)
            .unwrap_err();
        match e {
            HarnessError::Config { path, .. } => assert_eq!(path, "methods[0].alpha"),
            other => panic!("{other}"),
        }
        let e = ExperimentConfig::from_json(r#"{"scenario":"mrf","trials":2,"out":"x.csv","bogus":1}"#).unwrap_err();
        assert!(e.is_config_error());
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let mut c = ExperimentConfig::new("binary_iid", 2, 1, "x.csv");
        c.methods = Some(Vec::new());
        let e = c.plan().unwrap_err();
        assert_eq!(e.to_string(), "no methods configured");
    }

    #[test]
    fn sweep_out_of_range_points_at_the_value() {
        let mut c = ExperimentConfig::new("mrf", 2, 1, "x.csv");
        c.sweep = vec![1.0, 3.0];
        match c.plan().unwrap_err() {
            HarnessError::Config { path, .. } => assert_eq!(path, "sweep[1]"),
            other => panic!("{other}"),
        }
        let mut c = ExperimentConfig::new("binary_iid", 2, 1, "x.csv");
        c.sweep = vec![1.0];
        assert!(c.plan().unwrap_err().is_config_error());
    }

    #[test]
    fn mrf_sweep_crosses_points_and_methods() {
        let mut c = ExperimentConfig::new("mrf", 2, 1, "x.csv");
        c.sweep = vec![0.75, 0.875, 1.0, 1.125, 1.25];
        let plan = c.plan().unwrap();
        assert_eq!(plan.points.len() * plan.methods.len(), 20);
    }

    #[test]
    fn csv_round_trips_and_quotes_commas() {
        let mut rows = vec![row("b", 2.0, 0.5), row("KSD(k=a, op=b)", 1.0, 0.1), row("b", 1.0, 0.2)];
        sort_rows(&mut rows);
        assert_eq!(rows[0].method_id, "KSD(k=a, op=b)");
        assert_eq!(rows[2].sweep_param, Some(2.0));
        let text = csv_string(&rows).unwrap();
        assert!(text.starts_with(
            "scenario,sweep_param,method_id,kernel,neighborhood,balancing,n,trials,rejections,rate,ci_low,ci_high,seed,wall_time_s\n"
        ));
        assert!(text.contains("\"KSD(k=a, op=b)\""));
        assert!(!text.contains('\r'));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_float(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn plot_single_point_and_sorting() {
        let svg = power_plot_svg(&[row("a", 1.0, 0.3)], "sweep_param").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        let svg = power_plot_svg(&[row("a", 2.0, 0.9), row("a", 0.0, 0.1), row("a", 1.0, 1.5)], "sweep_param").unwrap();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts: Vec<f64> = line.split('"').nth(1).unwrap().split(' ').map(|p| p.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(pts.windows(2).all(|w| w[0] < w[1]), "{pts:?}");
        // y clamped to the top of the axis
        assert!(line.contains(",30.00"));
        assert!(matches!(power_plot_svg(&[], "sweep_param"), Err(HarnessError::NoRows)));
    }

    #[test]
    fn journal_resume_skips_finished_cells() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::new("second_order_mixture", 3, 5, dir.path().join("out.csv"));
        c.sweep = vec![2.0];
        c.methods = Some(vec![TestConfig::new(crate::hypothesis::Method::LrOracle).with_b(9)]);
        let plan = c.plan().unwrap();
        // Forge a journal entry: the resumed run must trust it.
        let fake = JournalEntry { point: plan.points[0].key(), method_id: "LR-Oracle".into(), rejections: 3, wall_time_s: 0.0 };
        let body = format!("{JOURNAL_MARKER} {}\n{}\n{{\"torn", plan.fingerprint(), serde_json::to_string(&fake).unwrap());
        fs::write(c.journal_path(), body).unwrap();
        let rows = run_experiment(&c).unwrap();
        assert_eq!(rows[0].rejections, 3);
        assert!(!c.journal_path().exists());
        // A different seed invalidates the journal.
        fs::write(c.journal_path(), format!("{JOURNAL_MARKER} stale\n{}\n", serde_json::to_string(&fake).unwrap())).unwrap();
        let fresh = run_experiment(&c).unwrap();
        assert_eq!(fresh[0].trials, 3);
        assert!(fresh[0].rejections <= 3);
    }
}

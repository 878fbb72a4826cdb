//! Artifact persistence, parallel sweeps and run comparison for the `flowlab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use flowlab::scenario::{run_scenario, Outcome, Scenario, SeriesTable};
use flowlab::FlowError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: [&str; 3] = ["t", "value", "residual"];

/// Exit codes of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERDICT_FAILED: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Raised for anything that should map to exit code 2.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for SchemaError {}

pub fn schema_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(SchemaError(msg.into()))
}

/// Parse and validate a scenario file. Accepts a single scenario or an array (treated as a sweep).
pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenarios(&text)
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| schema_err(format!("malformed JSON: {e}")))?;
    let list: Vec<Scenario> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value),
        _ => serde_json::from_value::<Scenario>(value).map(|s| vec![s]),
    }
    .map_err(|e| schema_err(format!("invalid scenario: {e}")))?;
    if list.is_empty() {
        return Err(schema_err("no scenarios"));
    }
    for s in &list {
        s.validate().map_err(|e| schema_err(e.to_string()))?;
    }
    let mut leaves: Vec<Scenario> = list.iter().flat_map(|s| s.expand()).collect();
    let mut ids: Vec<&str> = leaves.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(schema_err(format!("duplicate scenario id '{}'", w[0])));
    }
    leaves.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(leaves)
}

/// Command-line overrides applied to every leaf scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, sc: &mut Scenario) -> Result<()> {
        if let Some(t) = self.tol {
            sc.tol = Some(t);
        }
        if let Some(s) = self.seed {
            sc.seed = Some(s);
        }
        sc.validate().map_err(|e| schema_err(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: String,
    pub kind: String,
    pub pass: bool,
    pub error: Option<String>,
    pub failed_checks: Vec<String>,
}

impl SummaryRow {
    fn from_outcome(o: &Outcome) -> Self {
        let failed_checks = o.verdicts.iter().filter(|v| !v.verdict.pass).map(|v| v.name.clone()).collect();
        SummaryRow { id: o.id.clone(), kind: o.kind.clone(), pass: o.pass, error: o.error.clone(), failed_checks }
    }
}

/// Result of running one leaf scenario end to end, including its persisted location.
pub struct Completed {
    pub outcome: Outcome,
    pub dir: PathBuf,
}

fn run_isolated(sc: &Scenario) -> std::result::Result<Outcome, FlowError> {
    match catch_unwind(AssertUnwindSafe(|| run_scenario(sc))) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Ok(Outcome {
                id: sc.id.clone(),
                kind: sc.kind.name().into(),
                pass: false,
                error: Some(format!("internal error: {msg}")),
                verdicts: vec![],
                report: json!({}),
                series: vec![],
            })
        }
    }
}

/// Run each scenario (in parallel when there are several) and persist artifacts under `root/<id>`.
/// Results come back sorted by id.
pub fn run_all(scenarios: &[Scenario], root: &Path, threads: Option<usize>) -> Result<Vec<Completed>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("building thread pool")?;
    let results: Vec<Result<Completed>> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|sc| {
                let start = Instant::now();
                let outcome = run_isolated(sc).map_err(|e| match e {
                    FlowError::Schema(m) => schema_err(m),
                    e => anyhow!(e),
                })?;
                let dir = root.join(&sc.id);
                write_artifacts(&dir, sc, &outcome, start.elapsed().as_secs_f64())?;
                Ok(Completed { outcome, dir })
            })
            .collect()
    });
    let mut done = results.into_iter().collect::<Result<Vec<_>>>()?;
    done.sort_by(|a, b| a.outcome.id.cmp(&b.outcome.id));
    Ok(done)
}

pub fn exit_code(done: &[Completed]) -> i32 {
    if done.iter().any(|c| c.outcome.error.is_some()) {
        exit::NUMERICAL
    } else if done.iter().all(|c| c.outcome.pass) {
        exit::OK
    } else {
        exit::VERDICT_FAILED
    }
}

pub fn write_summary(root: &Path, done: &[Completed]) -> Result<PathBuf> {
    let rows: Vec<SummaryRow> = done.iter().map(|c| SummaryRow::from_outcome(&c.outcome)).collect();
    let path = root.join("summary.json");
    fs::create_dir_all(root)?;
    fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n")?;
    Ok(path)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series(path: &Path, table: &SeriesTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Layout: `scenario.json`, `report.json`, `meta.json` and `series/<name>.csv`.
pub fn write_artifacts(dir: &Path, sc: &Scenario, outcome: &Outcome, wall: f64) -> Result<()> {
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir).with_context(|| format!("creating {}", series_dir.display()))?;
    fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(sc)? + "\n")?;
    let report = json!({
        "id": outcome.id,
        "kind": outcome.kind,
        "pass": outcome.pass,
        "error": outcome.error,
        "verdicts": outcome.verdicts,
        "report": outcome.report,
        "series": outcome.series.iter().map(|s| format!("series/{}.csv", file_stem(&s.name))).collect::<Vec<_>>(),
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let meta = json!({"tool": "flowlab", "version": VERSION, "wall_clock_seconds": wall});
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    for s in &outcome.series {
        write_series(&series_dir.join(format!("{}.csv", file_stem(&s.name))), s)?;
    }
    Ok(())
}

/// Output root: explicit flag, then `FLOWLAB_OUT`, then `flowlab-out`.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("FLOWLAB_OUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("flowlab-out"))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FileDiff {
    pub file: String,
    pub rows: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Fields outside tolerance.
    pub violations: usize,
    pub first_violation: Option<(usize, String)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DiffReport {
    pub tol: f64,
    pub files: Vec<FileDiff>,
}

impl DiffReport {
    pub fn within_tolerance(&self) -> bool {
        self.files.iter().all(|f| f.violations == 0)
    }

    pub fn is_identical(&self) -> bool {
        self.files.iter().all(|f| f.max_abs == 0.0)
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// Field-wise comparison of two CSV files; |a - b| <= tol (1 + max(|a|, |b|)) passes.
pub fn diff_csv(a: &Path, b: &Path, tol: f64, label: &str) -> Result<FileDiff> {
    let (ha, ra) = read_table(a)?;
    let (hb, rb) = read_table(b)?;
    if ha != hb {
        return Err(schema_err(format!("{label}: header mismatch {ha:?} vs {hb:?}")));
    }
    if ra.len() != rb.len() {
        return Err(schema_err(format!("{label}: row count {} vs {}", ra.len(), rb.len())));
    }
    let mut d = FileDiff { file: label.into(), rows: ra.len(), ..Default::default() };
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        if x.len() != y.len() {
            return Err(schema_err(format!("{label}: row {i} has {} vs {} fields", x.len(), y.len())));
        }
        for (j, (p, q)) in x.iter().zip(y).enumerate() {
            let (u, v) = match (p.parse::<f64>(), q.parse::<f64>()) {
                (Ok(u), Ok(v)) => (u, v),
                _ if p == q => continue,
                _ => return Err(schema_err(format!("{label}: row {i} column {} is not numeric", ha[j]))),
            };
            let abs = if u == v { 0.0 } else { (u - v).abs() };
            let scale = u.abs().max(v.abs());
            d.max_abs = d.max_abs.max(abs);
            if scale > 0.0 {
                d.max_rel = d.max_rel.max(abs / scale);
            }
            if !(abs <= tol * (1.0 + scale)) {
                d.violations += 1;
                if d.first_violation.is_none() {
                    d.first_violation = Some((i, ha[j].clone()));
                }
            }
        }
    }
    Ok(d)
}

fn csv_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let rel = p.strip_prefix(dir).expect("under root").to_string_lossy().replace('\\', "/");
                out.insert(rel, p);
            }
        }
    }
    Ok(out)
}

/// Compare two run directories (or two CSV files). Differing file sets or headers are structural errors.
pub fn compare(a: &Path, b: &Path, tol: f64) -> Result<DiffReport> {
    if !(tol >= 0.0) {
        bail!(schema_err("tolerance must be nonnegative"));
    }
    let mut report = DiffReport { tol, files: vec![] };
    if a.is_file() && b.is_file() {
        report.files.push(diff_csv(a, b, tol, &a.file_name().unwrap_or_default().to_string_lossy())?);
        return Ok(report);
    }
    if !a.is_dir() || !b.is_dir() {
        return Err(schema_err("compare needs two run directories or two CSV files"));
    }
    let fa = csv_files(a)?;
    let fb = csv_files(b)?;
    let only_a: Vec<&String> = fa.keys().filter(|k| !fb.contains_key(*k)).collect();
    let only_b: Vec<&String> = fb.keys().filter(|k| !fa.contains_key(*k)).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(schema_err(format!("series sets differ: only in A {only_a:?}, only in B {only_b:?}")));
    }
    if fa.is_empty() {
        return Err(schema_err("no series found"));
    }
    for (name, pa) in &fa {
        report.files.push(diff_csv(pa, &fb[name], tol, name)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_format_roundtrips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = format_value(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn malformed_and_duplicate_inputs_are_schema_errors() {
        let e = parse_scenarios("{not json").unwrap_err();
        assert!(e.downcast_ref::<SchemaError>().is_some());
        let one = r#"{"id": "a", "kind": "model-verify"}"#;
        assert_eq!(parse_scenarios(one).unwrap().len(), 1);
        let e = parse_scenarios(&format!("[{one}, {one}]")).unwrap_err();
        assert!(e.to_string().contains("duplicate"));
    }

    #[test]
    fn csv_diff_tolerances() {
        let dir = tempfile::tempdir().unwrap();
        let t = |rows: Vec<[f64; 3]>| SeriesTable { name: "x".into(), rows };
        let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
        write_series(&a, &t(vec![[1.0, 2.0, 0.0], [2.0, 1.0, 0.0]])).unwrap();
        write_series(&b, &t(vec![[1.0, 2.0 + 1e-12, 0.0], [2.0, 1.0, 0.0]])).unwrap();
        write_series(&c, &t(vec![[1.0, 2.0, 0.0]])).unwrap();
        let d = diff_csv(&a, &a, 0.0, "a").unwrap();
        assert_eq!((d.max_abs, d.violations), (0.0, 0));
        assert_eq!(diff_csv(&a, &b, 1e-15, "b").unwrap().violations, 1);
        assert_eq!(diff_csv(&a, &b, 1e-10, "b").unwrap().violations, 0);
        assert!(diff_csv(&a, &c, 1e-10, "c").unwrap_err().downcast_ref::<SchemaError>().is_some());
    }
}

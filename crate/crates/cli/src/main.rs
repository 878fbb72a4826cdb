use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use flowlab::models::ModelId;
use flowlab::scenario::{default_suite, zoo, BlowdownParams, ModelVerifyParams, Scenario, ScenarioKind};
use flowlab_cli::*;

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Scenario runner for expanding vacuum flows")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Global {
    /// Output root; FLOWLAB_OUT or ./flowlab-out when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the per-step monotonicity tolerance (compare: field tolerance)
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Override the perturbation seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for multi-scenario runs
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file (single scenario, array or sweep)
    Run { file: PathBuf },
    /// Check the model zoo invariants
    VerifyModels {
        /// Comma-separated model names; all six when absent
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long, default_value_t = 1e4)]
        t1: f64,
        /// Fault injection for testing the checks
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
    /// Run a Bianchi scenario file and report the flow type
    Classify { file: PathBuf },
    /// Run a Bianchi scenario file and extract blowdown views
    Blowdown {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Extract views even when the run is not type IIb
        #[arg(long)]
        force: bool,
    },
    /// Run a Gowdy scenario file
    Gowdy { file: PathBuf },
    /// Run a Bianchi scenario file through the reduced-volume pipeline
    ReducedVolume { file: PathBuf },
    /// Field-wise diff of two run directories or CSV files
    Compare { a: PathBuf, b: PathBuf },
    /// Run a sweep file, or the built-in default suite
    Sweep { file: Option<PathBuf> },
}

fn model_by_name(name: &str) -> Result<ModelId> {
    zoo().into_iter().find(|m| m.name() == name.trim()).ok_or_else(|| schema_err(format!("unknown model '{name}'")))
}

fn retarget(list: Vec<Scenario>, f: impl Fn(ScenarioKind) -> Result<ScenarioKind>) -> Result<Vec<Scenario>> {
    list.into_iter()
        .map(|mut s| {
            s.kind = f(s.kind)?;
            Ok(s)
        })
        .collect()
}

fn bianchi_only(cmd: &str) -> impl Fn(ScenarioKind) -> Result<flowlab::scenario::BianchiParams> + '_ {
    move |k| match k {
        ScenarioKind::Bianchi(p) | ScenarioKind::Classify(p) | ScenarioKind::ReducedVolume(p) => Ok(p),
        ScenarioKind::Blowdown(b) => Ok(b.run),
        other => Err(schema_err(format!("{cmd} needs a Bianchi scenario, got '{}'", other.name()))),
    }
}

fn execute(list: Vec<Scenario>, g: &Global) -> Result<i32> {
    let ov = Overrides { tol: g.tol, seed: g.seed };
    let mut list = list;
    for s in list.iter_mut() {
        ov.apply(s)?;
    }
    let root = output_root(g.out.clone());
    let done = run_all(&list, &root, g.threads)?;
    for c in &done {
        let o = &c.outcome;
        let status = if o.pass { "PASS" } else { "FAIL" };
        let mut line = format!("{:<24} {:<15} {status}", o.id, o.kind);
        if let Some(t) = o.report.get("type").and_then(|t| t.get("verdict")).and_then(|v| v.as_str()) {
            line.push_str(&format!("  type={t}"));
        }
        for v in o.verdicts.iter().filter(|v| !v.verdict.pass) {
            line.push_str(&format!("  {} violated by {:.3e}", v.name, v.verdict.worst_violation));
        }
        if let Some(e) = &o.error {
            line.push_str(&format!("  error: {e}"));
        }
        println!("{line}");
    }
    if done.len() > 1 {
        let p = write_summary(&root, &done)?;
        println!("summary: {}", p.display());
    } else if let Some(c) = done.first() {
        println!("artifacts: {}", c.dir.display());
    }
    Ok(exit_code(&done))
}

fn verify_models(g: &Global, models: Option<Vec<String>>, t1: f64, fault: Option<String>) -> Result<i32> {
    let models = match models {
        Some(names) => {
            let names: Vec<&String> = names.iter().filter(|n| !n.trim().is_empty()).collect();
            if names.is_empty() {
                return Err(schema_err("empty model list"));
            }
            Some(names.into_iter().map(|n| model_by_name(n)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let sc = Scenario {
        id: "verify-models".into(),
        kind: ScenarioKind::ModelVerify(ModelVerifyParams { models, t1, fault, ..Default::default() }),
        tol: None,
        seed: None,
    };
    let mut sc = sc;
    Overrides { tol: g.tol, seed: g.seed }.apply(&mut sc)?;
    let root = output_root(g.out.clone());
    let done = run_all(std::slice::from_ref(&sc), &root, Some(1))?;
    let o = &done[0].outcome;
    let empty = vec![];
    for row in o.report.get("models").and_then(|m| m.as_array()).unwrap_or(&empty) {
        let name = row["model"].as_str().unwrap_or("?");
        let obj = row.as_object().expect("row object");
        for (key, bound) in [
            ("hamiltonian", 1e-9),
            ("momentum", 1e-9),
            ("gauge", 1e-9),
            ("curvature", 1e-10),
            ("scale_variation", 1e-10),
            ("normalized_volume_variation", 1e-12),
            ("vacuum_residual", 1e-8),
            ("c1_max", 1e-9),
            ("c2_max_dev", 1e-9),
        ] {
            if let Some(v) = obj.get(key).and_then(|v| v.as_f64()) {
                let informational = key == "scale_variation" && name == "taub-nil";
                let verdict = if informational {
                    "INFO"
                } else if v < bound {
                    "PASS"
                } else {
                    "FAIL"
                };
                println!("{name:<22} {key:<28} {v:<12.3e} {verdict}");
            }
        }
        if let Some(b) = obj.get("invariants").and_then(|v| v.as_bool()) {
            println!("{name:<22} {:<28} {:<12} {}", "invariants", b, if b { "PASS" } else { "FAIL" });
        }
    }
    for v in &o.verdicts {
        println!("{:<51} {:<12.3e} {}", v.name, v.verdict.max_residual, if v.verdict.pass { "PASS" } else { "FAIL" });
    }
    if let Some(e) = &o.error {
        println!("error: {e}");
    }
    println!("artifacts: {}", done[0].dir.display());
    Ok(exit_code(&done))
}

fn compare_cmd(a: &Path, b: &Path, tol: f64) -> Result<i32> {
    let rep = compare(a, b, tol)?;
    for f in &rep.files {
        let status = if f.violations == 0 { "ok" } else { "DIFF" };
        print!("{:<48} rows={:<6} max_abs={:.3e} max_rel={:.3e} {status}", f.file, f.rows, f.max_abs, f.max_rel);
        if let Some((row, col)) = &f.first_violation {
            print!(" (first at row {row}, column {col})");
        }
        println!();
    }
    if rep.is_identical() {
        println!("no differences");
    }
    Ok(if rep.within_tolerance() { exit::OK } else { exit::VERDICT_FAILED })
}

fn dispatch(cli: Cli) -> Result<i32> {
    let g = cli.global;
    match cli.cmd {
        Cmd::Run { file } => execute(load_scenarios(&file)?, &g),
        Cmd::Sweep { file } => {
            let list = match file {
                Some(f) => load_scenarios(&f)?,
                None => default_suite(),
            };
            execute(list, &g)
        }
        Cmd::VerifyModels { models, t1, fault } => verify_models(&g, models, t1, fault),
        Cmd::Classify { file } => {
            let conv = bianchi_only("classify");
            execute(retarget(load_scenarios(&file)?, |k| conv(k).map(ScenarioKind::Classify))?, &g)
        }
        Cmd::ReducedVolume { file } => {
            let conv = bianchi_only("reduced-volume");
            execute(retarget(load_scenarios(&file)?, |k| conv(k).map(ScenarioKind::ReducedVolume))?, &g)
        }
        Cmd::Blowdown { file, count, force } => {
            let conv = bianchi_only("blowdown");
            let list = retarget(load_scenarios(&file)?, |k| {
                conv(k).map(|run| ScenarioKind::Blowdown(BlowdownParams { run, count, forced: force }))
            })?;
            execute(list, &g)
        }
        Cmd::Gowdy { file } => {
            let list = retarget(load_scenarios(&file)?, |k| match k {
                ScenarioKind::Gowdy(p) => Ok(ScenarioKind::Gowdy(p)),
                other => Err(schema_err(format!("gowdy needs a Gowdy scenario, got '{}'", other.name()))),
            })?;
            execute(list, &g)
        }
        Cmd::Compare { a, b } => compare_cmd(&a, &b, g.tol.unwrap_or(0.0)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SchemaError>().is_some() {
                ExitCode::from(exit::SCHEMA as u8)
            } else {
                ExitCode::from(exit::NUMERICAL as u8)
            }
        }
    }
}

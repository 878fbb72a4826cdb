//! Acceptance checks, one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use flowlab::bianchi::{evolve, BianchiSpec, EvolveConfig, Trajectory};
use flowlab::gowdy::{bessel_exact, evolve_gowdy, verify_pseudo_static, GowdyConfig, GowdyState};
use flowlab::models::{kasner_family, model_state, ModelId, SigmaProfile};
use flowlab::monotone::{fm_volume, gowdy_energy_series, monotone_check};
use flowlab::scaling::{kasner_fit_view, limit_compare, rescale};
use flowlab::scenario::default_suite;
use flowlab_cli::{run_all, Completed};
use serde_json::Value;

type Check = (bool, String);

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "no"
    }
}

struct Suite {
    runs: BTreeMap<String, Completed>,
    wall: f64,
}

impl Suite {
    fn report(&self, id: &str) -> &Value {
        &self.runs[id].outcome.report
    }

    fn wall_of(&self, id: &str) -> f64 {
        let meta: Value =
            serde_json::from_str(&fs::read_to_string(self.runs[id].dir.join("meta.json")).unwrap()).unwrap();
        meta["wall_clock_seconds"].as_f64().unwrap()
    }
}

fn zoo_exactness(suite: &Suite) -> Check {
    let rep = suite.report("zoo");
    let rows = rep["models"].as_array().cloned().unwrap_or_default();
    let all = rows.len() == 6 && rows.iter().all(|r| r["pass"].as_bool() == Some(true));
    let worst = rows
        .iter()
        .flat_map(|r| ["hamiltonian", "momentum", "gauge"].map(|k| r.get(k).and_then(Value::as_f64).unwrap_or(0.0)))
        .fold(0.0f64, f64::max);
    let flat = rows.iter().filter_map(|r| r.get("curvature").and_then(Value::as_f64)).fold(0.0f64, f64::max);
    let wall = suite.wall_of("zoo");
    (
        all && worst < 1e-9 && flat < 1e-10 && wall < 5.0,
        format!("{} models, max residual {worst:.2e}, flat |Rm| {flat:.2e}, {wall:.2}s", rows.len()),
    )
}

fn kasner_final_error(steps: usize) -> f64 {
    let m = ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] };
    let spec = BianchiSpec::from_model(&m, 3.0).unwrap();
    let cfg = EvolveConfig { fixed_steps: Some(steps), ..Default::default() };
    let tr = evolve(&spec, 300.0, &cfg).unwrap();
    let last = tr.samples.last().unwrap();
    let exact = model_state(&m, 300.0).unwrap();
    last.h.sub(&exact.h).frobenius() / exact.h.frobenius() + last.k.sub(&exact.k).frobenius() / exact.k.frobenius()
}

fn evolver_order() -> Check {
    let start = Instant::now();
    let m = 160;
    let (e1, e2) = (kasner_final_error(m), kasner_final_error(2 * m));
    let ratio = e1 / e2;
    let wall = start.elapsed().as_secs_f64();
    (ratio >= 12.0 && wall < 10.0, format!("error {e1:.2e} -> {e2:.2e}, ratio {ratio:.1}, {wall:.2}s"))
}

fn fischer_moncrief(suite: &Suite) -> Check {
    let start = Instant::now();
    let mut worst_step = 0.0f64;
    let mut worst_id = 0.0f64;
    let mut ok = true;
    let mut milne = (f64::NAN, false);
    let models = [
        ModelId::Milne,
        ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] },
        ModelId::TaubFlat,
        ModelId::TaubNil {
            p: {
                let (a, b) = kasner_family(-0.25).unwrap();
                [-0.25, a, b]
            },
            b: 1.0,
        },
        ModelId::BianchiIIIFlat,
    ];
    for m in &models {
        let spec = BianchiSpec::from_model(m, 1.0).unwrap();
        let tr = evolve(&spec, 1e4, &EvolveConfig::default()).unwrap();
        let s = fm_volume(&tr).unwrap();
        let v = monotone_check(&s, 1e-10);
        ok &= v.pass;
        worst_step = worst_step.max(v.worst_violation);
        worst_id = worst_id.max(s.max_residual());
        if matches!(m, ModelId::Milne) {
            milne = (s.relative_variation(), s.rigid);
        }
    }
    let wall = start.elapsed().as_secs_f64();
    for (id, c) in &suite.runs {
        for v in c.outcome.verdicts.iter().filter(|v| v.name.starts_with("fm_volume")) {
            ok &= v.verdict.pass;
            worst_step = worst_step.max(v.verdict.worst_violation);
        }
        if let Some(Value::Object(r)) = c.outcome.report.get("trajectory") {
            let res = r["fm_identity_residual"].as_f64().unwrap_or(f64::INFINITY);
            if res >= 1e-6 {
                println!("    fm identity residual {res:.2e} on {id}");
            }
            worst_id = worst_id.max(res);
        }
    }
    let pass = ok && worst_id < 1e-6 && milne.0 < 1e-10 && milne.1 && wall < 10.0;
    (pass, format!(
        "max step violation {worst_step:.2e}, identity residual {worst_id:.2e}, Milne variation {:.2e} rigid {}, {wall:.2}s",
        milne.0,
        fmt_bool(milne.1)
    ))
}

fn shape_drift(suite: &Suite) -> Check {
    let mut count = 0;
    let mut failures = Vec::new();
    let mut margin = f64::INFINITY;
    for (id, c) in &suite.runs {
        let Value::Object(rep) = &c.outcome.report else {
            continue;
        };
        for (key, block) in rep {
            let entries: Vec<&Value> = if key.starts_with("trajectory") {
                block["shape_drift"].as_array().map(|a| a.iter().collect()).unwrap_or_default()
            } else if key == "gowdy" {
                vec![&block["shape_drift"]]
            } else {
                continue;
            };
            for e in entries {
                count += 1;
                let d = e["distance"].as_f64().unwrap();
                let b = e["bound_l1"].as_f64().unwrap();
                margin = margin.min(b - d);
                if !(d <= b + 1e-9) {
                    failures.push(format!("{id}/{key}"));
                }
            }
        }
    }
    (failures.is_empty() && count > 0, format!("{count} comparisons, min slack {margin:.2e}, failures {failures:?}"))
}

fn taub_nil_limit() -> Check {
    let start = Instant::now();
    let (p2, p3) = kasner_family(-0.25).unwrap();
    let p = [-0.25, p2, p3];
    let spec = BianchiSpec::from_model(&ModelId::TaubNil { p, b: 1.0 }, 1.0).unwrap();
    let tr: Trajectory = evolve(&spec, 2e4, &EvolveConfig::default()).unwrap();
    let lam = 2.0;
    let mut dists = Vec::new();
    for s in [10.0, 1e2, 1e3, 1e4] {
        let view = rescale(&tr, s, lam).unwrap();
        dists.push(limit_compare(&view, &ModelId::Kasner { p }, lam).unwrap());
    }
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let fit = kasner_fit_view(&rescale(&tr, 1e4, lam).unwrap()).unwrap();
    let err = fit.p.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    let wall = start.elapsed().as_secs_f64();
    (
        decreasing && err < 1e-3 && wall < 30.0,
        format!(
            "distances {:?}, fitted p error {err:.1e}, {wall:.2}s",
            dists.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn type_dichotomy(suite: &Suite) -> Check {
    let so2 = &suite.report("bianchi-viii-so2")["type"];
    let gen = suite.report("bianchi-viii-generic");
    let (ty, asy) = (&gen["type"], &gen["asymptotics"]);
    let f = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
    let so2_ok = so2["verdict"] == "TypeIII" && f(&so2["slope"]) < 0.1;
    let gen_ok = ty["verdict"] == "TypeIIb" && f(&ty["slope"]) > 0.5;
    let (a2, a3, d1) = (f(&asy["a2_slope"]), f(&asy["a3_slope"]), f(&asy["a1_drift"]));
    let growth = [a2, a3].iter().all(|s| *s > 0.85 && *s < 1.05);
    let wall = suite.wall_of("bianchi-viii-generic") + suite.wall_of("bianchi-viii-so2");
    (
        so2_ok && gen_ok && growth && d1.abs() < 0.25 && wall < 60.0,
        format!(
            "SO(2) {} slope {:.3}; generic {} slope {:.3}; a2/a3 slopes {a2:.4}/{a3:.4}; a1 drift {d1:.3}; {wall:.1}s",
            so2["verdict"],
            f(&so2["slope"]),
            ty["verdict"],
            f(&ty["slope"])
        ),
    )
}

fn blowdown_contract(suite: &Suite) -> Check {
    let b = &suite.report("blowdown-viii")["blowdown"];
    let views = b["views"].as_array().cloned().unwrap_or_default();
    let rm_ok = !views.is_empty() && views.iter().all(|v| (v["rm0"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let h: Vec<f64> = views.iter().map(|v| v["hubble0"].as_f64().unwrap().abs()).collect();
    let h_ok = h.windows(2).all(|w| w[1] < w[0]);
    let chain = b["inequality_holds"].as_bool() == Some(true);
    let literal = b["literal_ratio"].as_f64().unwrap_or(f64::INFINITY);
    // the literal form, |K|² ≤ (C/n) dH/du with the run's constant, is what the criterion names
    let pass = rm_ok && h_ok && literal <= 1.0;
    (pass, format!(
        "{} views, |Rm|(0)=1 {}, |H(0)| {:?} decreasing {}; literal inequality ratio {literal:.2} (needs <= 1); corrected chain |K|² <= C n dH/du with C = {:.3}: {}",
        views.len(),
        fmt_bool(rm_ok),
        h.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
        fmt_bool(h_ok),
        b["c_run"].as_f64().unwrap_or(f64::NAN),
        fmt_bool(chain)
    ))
}

fn bessel_error(n: usize) -> f64 {
    let st = GowdyState::bessel_mode(1, 1.0, n).unwrap();
    let tr = evolve_gowdy(&st, 10.0, &GowdyConfig { cfl: 0.5, store_every: 1_000_000 }).unwrap();
    let last = tr.last();
    (0..n).map(|i| (last.u[i] - bessel_exact(1, last.r, last.theta(i)).0).abs()).fold(0.0, f64::max)
}

fn gowdy_energies(suite: &Suite) -> Check {
    let start = Instant::now();
    let st = GowdyState::bessel_mode(1, 1.0, 512).unwrap();
    let tr = evolve_gowdy(&st, 10.0, &GowdyConfig { cfl: 0.5, store_every: 4 }).unwrap();
    let (series, id) = gowdy_energy_series(&tr).unwrap();
    let mono = monotone_check(&series, 1e-8);
    let errs: Vec<f64> = [128, 256, 512].iter().map(|&n| bessel_error(n)).collect();
    let ratio = errs[1] / errs[2];
    let eq = suite.report("gowdy-bessel")["gowdy"]["equivolume_exact_deviation"].as_f64().unwrap_or(f64::INFINITY);
    let wall = start.elapsed().as_secs_f64();
    let stated = id.max_stated();
    let pass = mono.pass && stated < 1e-4 && ratio >= 4.0 && eq < 1e-8 && wall < 60.0;
    (pass, format!(
        "energy monotone {} (worst {:.1e}); stated identity residual {stated:.2e} (needs < 1e-4), factor-2 identity {:.2e}; errors {:?} ratio {ratio:.1}; |M - 4pi/R| {eq:.1e}; {wall:.1}s",
        fmt_bool(mono.pass),
        mono.worst_violation,
        id.max_corrected(),
        errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()
    ))
}

fn twisted_rigidity() -> Check {
    let rs: Vec<f64> = (0..10).map(|i| 2.0 * 10f64.powf(i as f64 / 9.0)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, sigma) in
        [("sigma=0", SigmaProfile::zero()), ("sigma=0.3sin", SigmaProfile { a0: 0.0, cos: vec![], sin: vec![0.3] })]
    {
        let r = verify_pseudo_static(1.0, 1.0, &sigma, &rs, 128).unwrap();
        let ok = r.vacuum_residual < 1e-8 && r.energy_variation < 1e-8 && r.c1_max < 1e-9 && r.c2_max_dev < 1e-9;
        pass &= ok;
        parts.push(format!(
            "{label}: vacuum {:.1e}, E_K variation {:.2e}, C1 {:.1e}, C2-K {:.1e}",
            r.vacuum_residual, r.energy_variation, r.c1_max, r.c2_max_dev
        ));
    }
    (pass, parts.join("; "))
}

fn reduced_volume_check(suite: &Suite) -> Check {
    let k = &suite.report("reduced-kasner")["reduced_volume"];
    let b = &suite.report("reduced-bianchi-iii")["reduced_volume"];
    let kv = &suite.runs["reduced-kasner"].outcome.verdicts;
    let bv = &suite.runs["reduced-bianchi-iii"].outcome.verdicts;
    let f = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
    let p3 = -1.0 / 3.0;
    let exp_err = (f(&k["exponent"]) + (1.0 + p3)).abs();
    let k_mono = kv.iter().any(|v| v.name == "reduced_volume" && v.verdict.pass);
    let b_const = bv.iter().find(|v| v.name == "reduced_volume").map(|v| v.verdict.total_variation).unwrap_or(f64::NAN);
    let b_rigid = b["rigid"].as_bool() == Some(true);
    let static_ok = b["static_check"]["pass"].as_bool() == Some(true);
    let identity = [
        f(&k["dissipation_residual"]),
        f(&b["dissipation_residual"]),
        f(&k["energy_residual"]),
        f(&b["energy_residual"]),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let pass = exp_err < 1e-3 && k_mono && b_const < 1e-10 && b_rigid && static_ok && identity < 1e-6;
    (pass, format!(
        "Kasner exponent {:.6} (error {exp_err:.1e}) nonincreasing {}; B-III variation {b_const:.1e} rigid {} static {}; identity residual {identity:.1e}",
        f(&k["exponent"]),
        fmt_bool(k_mono),
        fmt_bool(b_rigid),
        fmt_bool(static_ok)
    ))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "meta.json") {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut trees = Vec::new();
    let mut codes = Vec::new();
    for name in ["first", "second"] {
        let dir = tmp.path().join(name);
        let st = Command::new(env!("CARGO_BIN_EXE_flowlab"))
            .args(["sweep", "--threads", "4", "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        codes.push(st.status.code());
        trees.push(read_tree(&dir));
    }
    let wall = start.elapsed().as_secs_f64();
    let csvs = trees[0].keys().filter(|k| k.ends_with(".csv")).count();
    let same = trees[0] == trees[1];
    let pass = same && csvs > 0 && codes.iter().all(|c| *c == Some(0)) && wall < 300.0;
    (
        pass,
        format!(
            "{} files ({csvs} CSV) identical {}, exit codes {codes:?}, two sweeps {wall:.1}s",
            trees[0].len(),
            fmt_bool(same)
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let done = run_all(&default_suite(), tmp.path(), None).expect("default suite runs");
    let suite = Suite {
        runs: done.into_iter().map(|c| (c.outcome.id.clone(), c)).collect(),
        wall: start.elapsed().as_secs_f64(),
    };
    println!("default suite: {} scenarios in {:.1}s", suite.runs.len(), suite.wall);

    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
    let checks: Vec<Criterion> = vec![
        ("model-zoo exactness", Box::new(|| zoo_exactness(&suite))),
        ("evolver order", Box::new(evolver_order)),
        ("Fischer-Moncrief monotonicity", Box::new(|| fischer_moncrief(&suite))),
        ("shape-drift inequality", Box::new(|| shape_drift(&suite))),
        ("Taub-nil to Kasner limit", Box::new(taub_nil_limit)),
        ("type dichotomy", Box::new(|| type_dichotomy(&suite))),
        ("blowdown contract", Box::new(|| blowdown_contract(&suite))),
        ("Gowdy energies", Box::new(|| gowdy_energies(&suite))),
        ("twisted rigidity", Box::new(twisted_rigidity)),
        ("reduced volume", Box::new(|| reduced_volume_check(&suite))),
        ("determinism and packaging", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let (pass, detail) = f();
        if !pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria pass", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

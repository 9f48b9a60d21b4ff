//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed on success as well.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srlcg_core::assemble::{Manifest, MANIFEST_FILE, TRACE_FILE};
use srlcg_core::backtrack::{detect_all_static, integrate, IntegrateConfig};
use srlcg_core::eval::{aggregate_lengths, code_files, code_length, round_half_up, weighted_sum};
use srlcg_core::model::{
    Dimension, DimensionWeightState, FunctionRationale, GeneratedFunction, ModuleNode, ProjectTree, TaskPrompt,
};
use srlcg_core::pipeline::{run_pipeline, RunConfig};
use srlcg_core::prompt::{extract_code, parse_function_rationales, parse_module_rationales, parse_score};
use srlcg_core::provider::MockProvider;
use srlcg_core::rectify::{attenuate, should_verify};
use srlcg_core::session::Session;
use srlcg_core::trace::{EventKind, RunTrace, TraceLog};
use srlcg_oracle::attenuated_weight;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const BIN: &str = env!("CARGO_BIN_EXE_srlcg");

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn state(w: f64, w_min: f64, impact: f64, alpha: f64, beta: f64, freq: u32) -> DimensionWeightState {
    let mut s = DimensionWeightState::new(Dimension::Operational, w_min, impact, alpha, beta);
    s.w_current = w;
    s.freq = freq;
    s
}

fn oracle_grid() -> Check {
    let start = Instant::now();
    let (mut points, mut evaluated, mut rejected, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
    for ai in 0..5 {
        let alpha = 0.5 * ai as f64 / 4.0;
        for bi in 0..5 {
            let beta = 0.5 + 2.5 * bi as f64 / 4.0;
            for f in 0..10u32 {
                for impact in [1.0, 2.0, 3.0] {
                    for wi in 0..25 {
                        let w = wi as f64 / 24.0;
                        points += 1;
                        let got = attenuate(&state(w, 0.0, impact, alpha, beta, f));
                        match (got, attenuated_weight(w, 0.0, alpha, f, beta, impact)) {
                            (Ok(g), Some(want)) => {
                                evaluated += 1;
                                worst = worst.max(rel_err(g, want));
                            }
                            (Err(_), None) => rejected += 1,
                            (g, want) => return Err(format!("disagreement at a={alpha} b={beta} f={f} I={impact} w={w}: {g:?} vs {want:?}")),
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(evaluated >= 10_000, || format!("only {evaluated} points evaluated"))?;
    ensure(worst <= 1e-12, || format!("max relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("{evaluated} points evaluated, {rejected} of {points} with a non-positive base rejected by both, max rel err {worst:.1e}, {elapsed:.0?}"))
}

fn clamp_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..10_000 {
        let w_min: f64 = rng.gen_range(0.0..=1.0);
        let w = rng.gen_range(w_min..=1.0);
        let alpha = rng.gen_range(0.01..=0.5);
        let beta = rng.gen_range(0.5..=3.0);
        let impact = f64::from(rng.gen_range(1..=3u32));
        let f = rng.gen_range(0..10u32);
        let s = state(w, w_min, impact, alpha, beta, f);
        let Ok(next) = attenuate(&s) else {
            ensure(alpha * f as f64 >= 1.0, || format!("case {i}: rejected a positive base"))?;
            continue;
        };
        ensure(next >= w_min, || format!("case {i}: {next} below floor {w_min}"))?;
        if alpha * (f as f64) < 1.0 {
            ensure(next <= w, || format!("case {i}: weight grew {w} -> {next}"))?;
        }
        if f >= 1 && w > w_min {
            ensure(next < w, || format!("case {i}: no strict decrease at f={f}, w={w}"))?;
        }
        if f == 0 {
            ensure(next == w, || format!("case {i}: f=0 changed {w} to {next}"))?;
        }
    }
    Ok("10000 random states".into())
}

fn gate_statistics() -> Check {
    let s = state(0.7, 0.5, 3.0, 0.1, 1.2, 0);
    let draws = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..10_000).map(|_| should_verify(&s, &mut rng).0).collect::<Vec<_>>()
    };
    let a = draws(7);
    ensure(a == draws(7), || "seeded draws differ between runs".into())?;
    let frac = a.iter().filter(|t| **t).count() as f64 / a.len() as f64;
    ensure((frac - 0.7).abs() <= 0.02, || format!("trigger fraction {frac}"))?;
    Ok(format!("trigger fraction {frac:.4} at w=0.7, repeatable"))
}

fn table_arithmetic() -> Check {
    // (completeness, correctness, usability, robustness) -> reported weighted sum
    let rows: [([f64; 4], f64); 18] = [
        // ablation rows, both backbones
        ([96.7, 94.6, 95.2, 95.4], 95.5),
        ([75.3, 79.5, 83.7, 85.5], 81.0),
        ([86.6, 92.2, 90.1, 91.3], 90.1),
        ([92.2, 93.5, 93.0, 93.8], 93.1),
        ([98.1, 95.2, 96.3, 97.5], 96.8),
        ([78.6, 83.4, 87.5, 88.0], 84.4),
        ([87.4, 93.0, 91.2, 92.4], 91.0),
        ([93.0, 94.2, 94.0, 94.8], 94.0),
        // completeness rows, DeepSeek-V3
        ([75.2, 78.6, 72.4, 74.3], 75.1),
        ([72.5, 75.3, 70.8, 73.1], 72.9),
        ([71.8, 78.6, 72.4, 75.9], 74.7),
        ([76.2, 80.4, 78.5, 81.3], 79.1),
        ([74.9, 89.6, 82.6, 84.7], 83.0),
        ([83.7, 84.5, 85.2, 88.6], 85.5),
        ([73.6, 79.8, 76.8, 80.2], 77.6),
        ([78.9, 81.2, 82.9, 85.4], 82.1),
        ([80.3, 83.5, 84.7, 87.9], 84.1),
        ([91.7, 91.6, 92.3, 93.5], 92.3),
    ];
    for (scores, want) in rows {
        let got = round_half_up(weighted_sum(scores), 1);
        ensure(got == want, || format!("{scores:?} -> {got}, expected {want}"))?;
    }
    let lengths: [(&[u64], f64); 3] = [
        (&[3547, 3218, 3329, 3456, 3631], 3436.2),
        (&[56983, 52831, 52856, 55492, 58127], 55257.8),
        (&[61934, 58901, 63596, 60121, 62781], 61466.6),
    ];
    for (samples, want) in lengths {
        let got = aggregate_lengths(samples).map_err(|e| e.to_string())?;
        ensure(round_half_up(got, 1) == want, || format!("{samples:?} -> {got}, expected {want}"))?;
    }
    Ok(format!("{} weighted-sum rows, {} length averages", rows.len(), lengths.len()))
}

struct Run {
    status: i32,
    stdout: String,
    stderr: String,
}

fn srlcg(args: &[&str]) -> Run {
    let out = Command::new(BIN)
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs");
    Run {
        status: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn generate(out: &Path, script: &str, extra: &[&str]) -> Result<Run, String> {
    let task = fixture("case_study/task.json");
    let script = fixture(script);
    let mut args = vec![
        "generate",
        "--task",
        task.to_str().unwrap(),
        "--mock-script",
        script.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let run = srlcg(&args);
    ensure(run.status == 0, || format!("generate {extra:?} exited {}: {}", run.status, run.stderr.trim()))?;
    Ok(run)
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn end_to_end() -> Check {
    let dir = tempdir()?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    generate(&a, "case_study/script.jsonl", &["--no-rectification", "--seed", "3"])?;
    generate(&b, "case_study/script.jsonl", &["--no-rectification", "--seed", "3"])?;
    let elapsed = start.elapsed();

    let manifest = Manifest::load(a.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let c = manifest.call_counts;
    ensure(c.generation == 11, || format!("{} generation calls", c.generation))?;
    ensure(c.total() == 11, || format!("{} calls in total", c.total()))?;
    let merged = manifest.files.iter().filter(|f| f.path.contains("/ModuleMerged.")).count();
    let functions = manifest.files.len() - merged;
    ensure((functions, merged) == (7, 3), || format!("{functions} function files, {merged} merged files"))?;
    let on_disk = code_files(&a).map_err(|e| e.to_string())?.len();
    ensure(on_disk == 10 && a.join(MANIFEST_FILE).is_file(), || format!("{on_disk} code files on disk"))?;

    let other = Manifest::load(b.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    ensure(manifest == other, || "manifests differ between seeded runs".into())?;
    for name in [MANIFEST_FILE, TRACE_FILE] {
        let same = fs::read(a.join(name)).ok() == fs::read(b.join(name)).ok();
        ensure(same, || format!("{name} differs between seeded runs"))?;
    }
    other.verify(&a).map_err(|e| e.to_string())?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("11 generation calls, 7+3 files plus manifest, identical reruns, {elapsed:.0?} for two runs"))
}

fn read_task() -> Result<TaskPrompt, String> {
    let text = fs::read_to_string(fixture("case_study/task.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn rectification_accounting() -> Check {
    let mock = MockProvider::load_script(fixture("sweep/script.jsonl")).map_err(|e| e.to_string())?;
    let config = RunConfig { seed: 1, ..RunConfig::default() };
    let out = run_pipeline(&read_task()?, &config, &mock, TraceLog::in_memory()).map_err(|e| e.to_string())?;
    let trace = &out.trace;
    trace.validate().map_err(|e| e.to_string())?;

    let first_unit = trace.events.first().and_then(|e| e.unit.clone());
    let pattern: Vec<(EventKind, Option<bool>)> = trace
        .events
        .iter()
        .filter(|e| e.unit == first_unit && e.kind != EventKind::Attenuate)
        .map(|e| (e.kind, e.payload.passed))
        .collect();
    let expected = [
        (EventKind::Generate, None),
        (EventKind::GateDraw, None),
        (EventKind::Verify, Some(false)),
        (EventKind::Rectify, None),
        (EventKind::Verify, Some(true)),
    ];
    ensure(pattern == expected, || format!("strategic unit trace {pattern:?}"))?;
    let strategic = &out.weights[Dimension::Strategic.index()];
    ensure(strategic.freq == 1, || format!("strategic f = {}", strategic.freq))?;

    let checked = recompute_weights(trace, &out.weights)?;
    Ok(format!("fail-then-pass pattern, f=1, {checked} weight updates recomputed"))
}

/// Replays every weight update in the trace through the oracle.
fn recompute_weights(trace: &RunTrace, finals: &[DimensionWeightState; 3]) -> Result<usize, String> {
    let mut current = [1.0f64; 3];
    let mut checked = 0;
    for e in &trace.events {
        let Some(d) = e.dimension else { continue };
        let p = &e.payload;
        match e.kind {
            EventKind::GateDraw => {
                ensure(p.w == Some(current[d.index()]), || format!("gate at seq {} saw w={:?}", e.seq, p.w))?;
            }
            EventKind::Attenuate => {
                let before = p.w_before.ok_or("attenuate without w_before")?;
                ensure(before == current[d.index()], || format!("seq {}: w_before {before} breaks the chain", e.seq))?;
                let want = attenuated_weight(
                    before,
                    p.w_min.ok_or("missing w_min")?,
                    p.alpha.ok_or("missing alpha")?,
                    p.f.ok_or("missing f")?,
                    p.beta.ok_or("missing beta")?,
                    p.impact.ok_or("missing impact")?,
                )
                .ok_or("oracle rejected a recorded update")?;
                let after = p.w_after.ok_or("attenuate without w_after")?;
                ensure(rel_err(after, want) <= 1e-12, || format!("seq {}: w_after {after} vs oracle {want}", e.seq))?;
                current[d.index()] = after;
                checked += 1;
            }
            _ => {}
        }
    }
    for s in finals {
        ensure(s.w_current == current[s.dimension.index()], || format!("final {} weight differs", s.dimension))?;
    }
    Ok(checked)
}

fn func(module: &str, name: &str, source: &str) -> GeneratedFunction {
    let rationale =
        FunctionRationale { function_name: name.into(), responsibility: format!("does {name}"), parent_module: module.into() };
    GeneratedFunction::new(rationale, source.into(), "py")
}

fn conflicting_tree() -> ProjectTree {
    let module = |name: &str, functions| ModuleNode { name: name.into(), functions, merged_source: None };
    ProjectTree {
        modules: vec![
            module(
                "Auth",
                vec![
                    func("Auth", "checkPermission", "def check_permission(role):\n    return role == 'admin'\n"),
                    func("Auth", "denyAccess", "def deny_access(role):\n    if not check_permission(role):\n        raise PermissionError(role)\n"),
                ],
            ),
            module("Cli", vec![func("Cli", "run", "def run(role):\n    launch(role)\n")]),
        ],
    }
}

fn backtracking() -> Check {
    let fixed = "File: Cli/run.py\n```python\ndef run(role):\n    deny_access(role)\n```";
    let mock = MockProvider::queue([fixed]);
    let mut session = Session::new(&mock, TraceLog::in_memory());
    let out = integrate(&mut session, conflicting_tree(), &IntegrateConfig::default()).map_err(|e| e.to_string())?;
    let trace = session.trace.into_trace();
    ensure(out.converged && out.iterations == 2, || format!("t={} converged={}", out.iterations, out.converged))?;
    let resolves = trace.count(EventKind::ConflictResolve);
    ensure(resolves == 1, || format!("{resolves} ConflictResolve events"))?;
    ensure(detect_all_static(&out.tree).is_empty(), || "static detection still reports conflicts".into())?;

    let stubborn = "File: Cli/run.py\n```python\ndef run(role):\n    launch(role)\n```";
    let mock = MockProvider::queue([stubborn; 3]);
    let mut session = Session::new(&mock, TraceLog::in_memory());
    let out = integrate(&mut session, conflicting_tree(), &IntegrateConfig { max_iterations: 3, ..IntegrateConfig::default() })
        .map_err(|e| e.to_string())?;
    let trace = session.trace.into_trace();
    ensure(!out.converged && out.iterations == 3, || format!("stubborn fixture: t={} converged={}", out.iterations, out.converged))?;
    let flagged = trace.of_kind(EventKind::Error).any(|e| e.payload.non_convergence);
    ensure(flagged, || "non-convergence not flagged".into())?;
    Ok("one-conflict fixture converges at t=2 with one resolve; stubborn fixture stops at t=3, flagged".into())
}

fn load_trace(dir: &Path) -> Result<RunTrace, String> {
    RunTrace::replay(dir.join(TRACE_FILE)).map_err(|e| e.to_string())
}

fn ablation_toggles() -> Check {
    let dir = tempdir()?;
    let base = dir.path();

    generate(&base.join("sv"), "case_study/script.jsonl", &["--no-rectification"])?;
    let t = load_trace(&base.join("sv"))?;
    let (v, r) = (t.count(EventKind::Verify), t.count(EventKind::Rectify));
    ensure(v == 0 && r == 0, || format!("--no-rectification left {v} Verify and {r} Rectify events"))?;

    generate(&base.join("db"), "case_study/script.jsonl", &["--no-backtracking"])?;
    let t = load_trace(&base.join("db"))?;
    let (d, r) = (t.count(EventKind::ConflictDetect), t.count(EventKind::ConflictResolve));
    ensure(d == 0 && r == 0, || format!("--no-backtracking left {d} detect and {r} resolve events"))?;

    generate(&base.join("pa"), "sweep/script.jsonl", &["--no-attenuation", "--seed", "5"])?;
    let t = load_trace(&base.join("pa"))?;
    let gates: Vec<_> = t.of_kind(EventKind::GateDraw).collect();
    ensure(!gates.is_empty() && gates.iter().all(|e| e.payload.w == Some(1.0)), || "a gate drew with w != 1".into())?;
    ensure(t.count(EventKind::Attenuate) == 0, || "weights were updated".into())?;
    for (i, e) in t.events.iter().enumerate().filter(|(_, e)| e.kind == EventKind::Generate) {
        let verified = t.events[i + 1..]
            .iter()
            .take_while(|n| n.kind != EventKind::Generate)
            .any(|n| n.kind == EventKind::Verify && n.unit == e.unit);
        ensure(verified, || format!("Generate at seq {} was not verified", e.seq))?;
    }
    Ok(format!("rectification, backtracking and attenuation toggles hold ({} gates at w=1)", gates.len()))
}

fn metric_consistency() -> Check {
    let dir = tempdir()?;
    let runs: [(&str, &str, &[&str]); 4] = [
        ("plain", "case_study/script.jsonl", &["--no-rectification"]),
        ("gated", "case_study/script.jsonl", &["--seed", "11"]),
        ("rectified", "sweep/script.jsonl", &["--seed", "1"]),
        ("unmerged", "case_study/script.jsonl", &["--no-backtracking"]),
    ];
    for (name, script, flags) in runs {
        let out = dir.path().join(name);
        generate(&out, script, flags)?;
        let manifest = Manifest::load(out.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        let length = code_length(&out).map_err(|e| e.to_string())?;
        ensure(length == manifest.total_bytes(), || format!("{name}: code_length {length} vs manifest {}", manifest.total_bytes()))?;
        let eval = srlcg(&["evaluate", "--project", out.to_str().unwrap()]);
        ensure(eval.status == 0, || format!("{name}: evaluate failed: {}", eval.stderr.trim()))?;
        ensure(eval.stdout.contains(&format!("code_length={length}")), || format!("{name}: evaluate printed {}", eval.stdout.trim()))?;
    }
    Ok(format!("{} fixture projects", runs.len()))
}

const STRATEGIC: &str = include_str!("../../core/fixtures/golden/strategic_example.json");
const TACTICAL: &str = include_str!("../../core/fixtures/golden/tactical_format.json");
const OPERATIONAL: &str = include_str!("../../core/fixtures/golden/operational_example.py");

fn golden_parsing() -> Check {
    let modules = parse_module_rationales(STRATEGIC).map_err(|e| e.to_string())?;
    ensure(modules.len() == 3, || format!("{} module rationales", modules.len()))?;
    ensure(modules.iter().all(|m| m.responsibility == "[Brief description of the module's function]"), || {
        "module responsibilities differ".into()
    })?;
    let functions = parse_function_rationales(TACTICAL, "[Module Name]").map_err(|e| e.to_string())?;
    ensure(functions.len() == 2, || format!("{} sub-functions", functions.len()))?;
    ensure(
        functions.iter().all(|f| f.function_name == "[Sub-function Name]" && f.parent_module == "[Module Name]"),
        || "sub-function structure differs".into(),
    )?;
    let code = extract_code(&format!("```python\n{OPERATIONAL}```")).map_err(|e| e.to_string())?;
    ensure(code == OPERATIONAL.trim_end() && code.starts_with("def AddTask(description):"), || "operational code altered".into())?;
    let score = parse_score("0.87").map_err(|e| e.to_string())?;
    ensure(score == 0.87, || format!("score parsed as {score}"))?;
    Ok("3 module rationales, 2 sub-functions, verbatim code, score 0.87".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("attenuation matches the high-precision oracle", oracle_grid),
        ("weight floor and monotonicity", clamp_suite),
        ("verification gate statistics", gate_statistics),
        ("reported score arithmetic", table_arithmetic),
        ("end-to-end scripted generation", end_to_end),
        ("rectification accounting", rectification_accounting),
        ("backtracking convergence", backtracking),
        ("ablation toggles", ablation_toggles),
        ("code length matches manifest", metric_consistency),
        ("golden prompt outputs parse", golden_parsing),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

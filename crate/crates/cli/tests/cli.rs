use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn metapop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metapop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = metapop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_small(out: &Path, seed: &str) {
    ok(&["gen", "--zones", "12", "--days", "40", "--noise", "1e-4", "--seed", seed, "--out", p(out)]);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gen_small(&a, "3");
    gen_small(&b, "3");
    for name in ["zones.csv", "mobility.csv", "network.csv", "deltas.csv", "feature_gravity.csv", "feature_proxy.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let strip = |d: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("gen.manifest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("duration_ms");
        v
    };
    assert_eq!(strip(&a), strip(&b));

    let c = dir.path().join("c");
    gen_small(&c, "4");
    assert_ne!(fs::read(a.join("deltas.csv")).unwrap(), fs::read(c.join("deltas.csv")).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = metapop(&["gen", "--zones", "2", "--attach-m", "3", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let d = dir.path().join("d");
    gen_small(&d, "1");
    let zones = d.join("zones.csv");
    let deltas = d.join("deltas.csv");
    let x = dir.path().join("x");
    let out = metapop(&[
        "infer", "--zones", p(&zones), "--deltas", p(&deltas), "--model", "basic", "--lambda", "1", "--out", p(&x),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let out = metapop(&["infer", "--zones", p(&zones), "--deltas", p(&deltas), "--model", "d2pri", "--out", p(&x)]);
    assert_eq!(out.status.code(), Some(2));

    let out = metapop(&["infer", "--zones", p(&zones), "--deltas", p(&deltas), "--model", "nope", "--out", p(&x)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = metapop(&["eval", "--zones", p(&missing), "--network", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_from_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    gen_small(&d, "5");
    let zones = d.join("zones.csv");
    let deltas = d.join("deltas.csv");
    let truth = d.join("network.csv");
    let gravity = d.join("feature_gravity.csv");
    let proxy = d.join("feature_proxy.csv");
    let series = ["--zones", p(&zones), "--deltas", p(&deltas)];

    let d2 = dir.path().join("d2");
    let mut args = vec!["infer"];
    args.extend(series);
    args.extend([
        "--model", "d2pri", "--lambda", "1e-6", "--eta", "1e4", "--mu", "1",
        "--feature", p(&gravity), "--feature", p(&proxy),
        "--max-iters", "3000", "--truth", p(&truth), "--out", p(&d2),
    ]);
    let stdout = ok(&args);
    assert!(stdout.contains("cosine similarity to truth"));
    let weights = fs::read_to_string(d2.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 3);
    assert!(weights.contains("gravity") && weights.contains("proxy"));

    let basic = dir.path().join("basic");
    let mut args = vec!["infer"];
    args.extend(series);
    args.extend(["--model", "basic", "--max-iters", "3000", "--out", p(&basic)]);
    ok(&args);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d2.join("infer.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "infer");
    assert_eq!(manifest["config"]["model"], "d2pri");
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 3);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 5);

    let d2_net = d2.join("network.csv");
    let basic_net = basic.join("network.csv");
    let pred = dir.path().join("pred");
    let mut args = vec!["predict"];
    args.extend(series);
    args.extend(["--network", p(&d2_net), "--fit-days", "20", "--out", p(&pred)]);
    ok(&args);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pred.join("prediction.json")).unwrap()).unwrap();
    assert_eq!(report["horizons"], serde_json::json!([1, 3, 5, 7]));
    for m in report["horizon_mape"].as_array().unwrap() {
        assert!(m.as_f64().unwrap().is_finite());
    }

    let sim = dir.path().join("sim");
    let mut args = vec!["simulate"];
    args.extend(series);
    args.extend(["--d2pri", p(&d2_net), "--basic", p(&basic_net), "--out", p(&sim)]);
    ok(&args);
    let curves = fs::read_to_string(sim.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "day,actual,d2pri,basic,sir");
    assert_eq!(curves.lines().count(), 41);

    let ev = dir.path().join("eval");
    ok(&["eval", "--zones", p(&zones), "--network", p(&d2_net), "--truth", p(&truth), "--out", p(&ev)]);
    let e: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
    let cos = e["cosine_to_truth"].as_f64().unwrap();
    assert!(cos > 0.0 && cos <= 1.0 + 1e-12);
}

#[test]
fn rank_on_uniform_network_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    gen_small(&d, "2");
    let n = 12;
    let row = vec!["1e-6"; n].join(",");
    let net = dir.path().join("uniform.csv");
    fs::write(&net, format!("{}\n", vec![row; n].join("\n"))).unwrap();
    let r = dir.path().join("rank");
    ok(&[
        "rank", "--zones", p(&d.join("zones.csv")), "--deltas", p(&d.join("deltas.csv")),
        "--network", p(&net), "--out", p(&r),
    ]);
    let text = fs::read_to_string(r.join("ranking.csv")).unwrap();
    let scores: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), n);
    for s in scores {
        assert!((s - 1.0 / n as f64).abs() < 1e-9, "{s}");
    }
}

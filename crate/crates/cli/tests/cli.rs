use std::path::Path;
use std::process::{Command, Output};

/// Runs the binary with a whitespace-separated command line.
fn unveil(dir: &Path, line: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unveil"))
        .current_dir(dir)
        .args(line.split_whitespace())
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, line: &str) -> Output {
    let out = unveil(dir, line);
    assert!(
        out.status.success(),
        "{line} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Runs generate -> obfuscate -> neighbors in `dir`.
fn prepare(dir: &Path, scheme: &str, seed: &str) {
    ok(dir, &format!("generate --n 120 --seed {seed} --out points.txt"));
    ok(
        dir,
        &format!("obfuscate --points points.txt --scheme {scheme} --seed {seed} --out obf.txt --sidecar sidecar.txt"),
    );
    ok(
        dir,
        &format!("neighbors --points points.txt --obfuscation obf.txt --sidecar sidecar.txt --k 8 --inlier-ratio 0.5 --seed {seed} --out neighbors.txt"),
    );
}

#[test]
fn stage_chain_matches_pipeline_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "ppl", "5");
    ok(
        d,
        "recover --obfuscation obf.txt --neighbors neighbors.txt --delta 0.03 --seed 5 --threads 2 --out recovered.txt",
    );
    let eval = ok(
        d,
        "evaluate --recovered recovered.txt --points points.txt --sidecar sidecar.txt --thresholds 1%,0.1 --out report.txt",
    );
    assert_eq!(String::from_utf8_lossy(&eval.stdout).lines().count(), 2);

    ok(
        d,
        "pipeline --n 120 --scheme ppl --k 8 --inlier-ratio 0.5 --seed 5 --delta 0.03 --thresholds 1%,0.1 --out run",
    );
    let cell = d.join("run/uniform_box/ppl/in0.5_k8/seed5");
    for f in [
        "points.txt",
        "obfuscation.txt",
        "sidecar.txt",
        "neighbors.txt",
        "recovered.txt",
    ] {
        let standalone = match f {
            "obfuscation.txt" => "obf.txt",
            other => other,
        };
        assert_eq!(read(cell.join(f)), read(d.join(standalone)), "{f}");
    }
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "n = 150\nschemes = line3d, cp\ninlier_ratios = 1.0, 0.5\nk = 10\nseeds = 0, 1\nransac_max_iters = 300\n";
    std::fs::write(d.join("run.cfg"), cfg).unwrap();
    ok(d, "pipeline --config run.cfg --threads 1 --out a");
    ok(d, "pipeline --config run.cfg --threads 4 --out b");
    ok(d, "pipeline --config run.cfg --threads 4 --out c");
    assert_eq!(read(d.join("a/sweep.csv")), read(d.join("b/sweep.csv")));
    assert_eq!(read(d.join("b/sweep.json")), read(d.join("c/sweep.json")));
    for rel in [
        "uniform_box/cp/in0.5_k10/seed1/report.txt",
        "uniform_box/line3d/in1_k10/seed0/recovered.txt",
    ] {
        assert_eq!(read(d.join("a").join(rel)), read(d.join("b").join(rel)), "{rel}");
        assert_eq!(read(d.join("b").join(rel)), read(d.join("c").join(rel)), "{rel}");
    }
    let csv = String::from_utf8(read(d.join("a/sweep.csv"))).unwrap();
    assert!(csv.starts_with("scene,scheme,In,K,seed,threshold,fraction\n"));
    assert!(csv.contains("uniform_box,cp,0.5,10,mean,1%,"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"n": 80, "k": 6, "schemes": ["line3d"], "seeds": [0], "ransac_max_iters": 100}"#,
    )
    .unwrap();
    ok(d, "pipeline --config run.json --k 4 --no-artifacts --out o");
    let csv = String::from_utf8(read(d.join("o/sweep.csv"))).unwrap();
    assert!(csv.contains("uniform_box,line3d,1,4,0,"), "{csv}");
    assert!(!d.join("o/uniform_box").exists());
    let cfg = String::from_utf8(read(d.join("o/config.json"))).unwrap();
    assert!(cfg.contains("\"n\": 80"));
}

#[test]
fn missing_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "line3d", "1");
    let code = |line: &str| unveil(d, line).status.code();
    // the neighbors stage output is absent
    assert_eq!(
        code("recover --obfuscation obf.txt --neighbors nope.txt --delta 0.02 --out r.txt"),
        Some(2)
    );
    assert_eq!(code("recover --obfuscation obf.txt --delta 0.02 --out r.txt"), Some(2));
    assert_eq!(
        code("recover --obfuscation obf.txt --neighbors neighbors.txt --out r.txt"),
        Some(2)
    );
    assert_eq!(code("pipeline --config absent.cfg"), Some(2));
    assert_eq!(code("pipeline --scheme line2d --out x"), Some(2));
    assert_eq!(code("pipeline --inlier-ratio 1.5 --out x"), Some(2));
    assert_eq!(code("frobnicate"), Some(2));
    assert!(!d.join("r.txt").exists());
}

#[test]
fn malformed_inputs_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "line3d", "1");
    let text = std::fs::read_to_string(d.join("obf.txt")).unwrap();
    std::fs::write(d.join("cut.txt"), &text[..text.len() - 10]).unwrap();
    let out = unveil(
        d,
        "recover --obfuscation cut.txt --neighbors neighbors.txt --delta 0.02 --out r.txt",
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte offset"), "{err}");
}

/// Items are attacker-visible, so no original coordinate triple may appear in
/// the obfuscation file.
#[test]
fn obfuscation_file_leaks_no_original_coordinates() {
    for scheme in ["line3d", "ppl", "pplplus", "ray", "plane", "cp"] {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        prepare(d, scheme, "3");
        let obf = String::from_utf8(read(d.join("obf.txt"))).unwrap();
        let points = String::from_utf8(read(d.join("points.txt"))).unwrap();
        for line in points.lines().skip(1) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let triple = format!("{} {} {}", f[1], f[2], f[3]);
            assert!(!obf.contains(&triple), "{scheme}: {triple}");
        }
    }
}

/// Neighborhood files written by an external estimator are read unmodified.
#[test]
fn estimated_neighborhood_files_are_consumed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "line3d", "2");
    let exact = String::from_utf8(read(d.join("neighbors.txt"))).unwrap();
    let mut lines = exact.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    let mut text = format!(
        "{{\"format\":\"neighborhoods\",\"version\":1,\"k\":{},\"n\":{},\"provenance\":\"estimated\",\"seed\":null}}\n",
        header["k"], header["n"]
    );
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(d.join("estimated.txt"), text).unwrap();
    ok(
        d,
        "recover --obfuscation obf.txt --neighbors estimated.txt --delta 0.02 --seed 2 --out r.txt --diagnostics diag.json",
    );
    let diag: serde_json::Value = serde_json::from_slice(&read(d.join("diag.json"))).unwrap();
    assert_eq!(diag["subjects"], 120);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shapepose"));
    cmd.env_remove("SHAPEPOSE_SEED");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rotation_angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let a = nalgebra::Matrix3::from_row_slice(a);
    let b = nalgebra::Matrix3::from_row_slice(b);
    let m = a.transpose() * b;
    let sin = nalgebra::Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() / 2.0;
    sin.atan2((m.trace() - 1.0) / 2.0).to_degrees()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn help_documents_flags_schemas_and_environment() {
    let out = run(&["solve", "--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--solver", "--tol", "--max-iters", "--gnc", "--cbar2", "--multi-start", "--seed", "--psd-tol",
        "--constraints", "--certify", "--mask", "--trace", "SHAPEPOSE_SEED", "keypoints", "EXIT CODES",
    ] {
        assert!(text.contains(flag), "solve --help lacks {flag}");
    }
    let out = run(&["bench", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--sigma-m", "--trials", "--preset", "--parallel", "--warmup", "--output"] {
        assert!(text.contains(flag), "bench --help lacks {flag}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let p = fixture("noiseless.json");
    let p = p.to_str().unwrap();
    for args in [
        vec!["solve", p, "--bogus"],
        vec!["solve", p, "--cbar2", "0.1"],
        vec!["solve", p, "--gnc"],
        vec!["solve", p, "--solver", "gn", "--multi-start", "4"],
        vec!["solve", p, "--solver", "newton"],
        vec!["solve", p, "--tol", "-1"],
        vec!["solve", p, "--init", "1,2"],
        vec!["solve", p, "--gnc", "--cbar2", "0.1", "--trace", "/tmp/x.csv"],
        vec!["solve", "/nonexistent/problem.json"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn noiseless_fixture_is_solved_and_certified() {
    let out = run(&["solve", fixture("noiseless.json").to_str().unwrap(), "--certify"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["estimate"]["converged"], true);
    assert_eq!(v["estimate"]["certified"], true);
    assert_eq!(v["certificate"]["certified"], true);
    assert_eq!(v["certificate"]["verdict"], "certified");
    let truth = read_json(&fixture("noiseless_truth.json"));
    let err = rotation_angle_deg(&floats(&v["estimate"]["r"]), &floats(&truth["r"]));
    assert!(err < 1e-5, "{err}");
    for (a, b) in floats(&v["estimate"]["p"]).iter().zip(floats(&truth["p"])) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn every_solver_handles_the_fixture() {
    for solver in ["scf", "gn", "lm"] {
        let out = run(&["solve", fixture("noiseless.json").to_str().unwrap(), "--solver", solver]);
        assert_eq!(code(&out), 0, "{solver}: {}", stderr(&out));
        assert_eq!(json(&out)["solver"], solver);
    }
}

#[test]
fn truncated_json_names_byte_offset() {
    let text = std::fs::read_to_string(fixture("noiseless.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.json");
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains(&format!("byte offset {}", text.len() / 2)), "{msg}");
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn forced_truncation_exits_two() {
    let out = run(&["solve", fixture("high_noise.json").to_str().unwrap(), "--max-iters", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(json(&out)["estimate"]["converged"], false);
    assert_eq!(json(&out)["estimate"]["iterations"], 1);
}

#[test]
fn result_round_trip_recertifies_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (fixture_name, form) in [
        ("noiseless.json", "columns"),
        ("high_noise.json", "columns"),
        ("high_noise.json", "rows"),
    ] {
        let problem = fixture(fixture_name);
        let result = dir.path().join("result.json");
        let out = run(&[
            "solve",
            problem.to_str().unwrap(),
            "--certify",
            "--constraints",
            form,
            "-o",
            result.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let first = read_json(&result);
        let out = run(&["certify", problem.to_str().unwrap(), result.to_str().unwrap(), "--constraints", form]);
        let again = json(&out);
        assert_eq!(again["verdict"], first["certificate"]["verdict"]);
        assert_eq!(again["min_eig_S"], first["certificate"]["min_eig_S"]);
        let expected = if again["certified"] == true { 0 } else { 2 };
        assert_eq!(code(&out), expected);
    }
}

#[test]
fn certify_accepts_bare_rotations() {
    let dir = tempfile::tempdir().unwrap();
    let truth = fixture("noiseless_truth.json");
    let out = run(&["certify", fixture("noiseless.json").to_str().unwrap(), truth.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let q_only = dir.path().join("q.json");
    let t = read_json(&truth);
    std::fs::write(&q_only, serde_json::json!({"q": t["q"]}).to_string()).unwrap();
    let out = run(&["certify", fixture("noiseless.json").to_str().unwrap(), q_only.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let skewed = dir.path().join("skew.json");
    std::fs::write(&skewed, r#"{"r": [1,0,0, 0,1,0, 0,0,2]}"#).unwrap();
    let out = run(&["certify", fixture("noiseless.json").to_str().unwrap(), skewed.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

fn problem_with_outlier(dir: &Path, index: usize, shift: f64) -> PathBuf {
    let mut v = read_json(&fixture("noiseless.json"));
    let x = v["keypoints"][index][0].as_f64().unwrap();
    v["keypoints"][index][0] = (x + shift).into();
    let path = dir.join("outlier.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn gnc_flags_the_outlier_and_emits_weights() {
    let dir = tempfile::tempdir().unwrap();
    let path = problem_with_outlier(dir.path(), 3, 5.0);
    let out = run(&["solve", path.to_str().unwrap(), "--gnc", "--cbar2", "0.01", "--certify"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let w = floats(&v["gnc"]["weights"]);
    assert_eq!(w.len(), 10);
    assert!(w[3] < 1e-3);
    assert!(w.iter().enumerate().all(|(i, x)| i == 3 || *x > 1.0 - 1e-3));
    assert_eq!(v["gnc"]["inliers"].as_array().unwrap().len(), 9);
    let truth = read_json(&fixture("noiseless_truth.json"));
    assert!(rotation_angle_deg(&floats(&v["estimate"]["r"]), &floats(&truth["r"])) < 1e-5);

    let plain = json(&run(&["solve", path.to_str().unwrap()]));
    assert!(rotation_angle_deg(&floats(&plain["estimate"]["r"]), &floats(&truth["r"])) > 0.1);
}

#[test]
fn gnc_mask_pins_weights_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = problem_with_outlier(dir.path(), 3, 5.0);
    let mask = dir.path().join("mask.json");
    std::fs::write(&mask, "[true,true,true,false,true,true,true,true,true,false]").unwrap();
    let args = ["solve", path.to_str().unwrap(), "--gnc", "--cbar2", "0.01", "--mask", mask.to_str().unwrap()];
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let w = floats(&json(&out)["gnc"]["weights"]);
    assert_eq!((w[3], w[9]), (0.0, 0.0));
    std::fs::write(&mask, "[true]").unwrap();
    assert_eq!(code(&run(&args)), 1);
}

#[test]
fn trace_lists_every_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "solve",
        fixture("high_noise.json").to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let iterations = json(&out)["estimate"]["iterations"].as_u64().unwrap() as usize;
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iteration,w,x,y,z,mu,objective"));
    assert_eq!(text.lines().count(), iterations + 1);
}

fn strip_runtime(csv_text: &str) -> Vec<String> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|i| !header[*i].starts_with("runtime")).collect();
    lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            keep.iter().map(|i| cols[*i]).collect::<Vec<_>>().join(",")
        })
        .collect()
}

fn bench(dir: &Path, extra: &[&str]) -> (Output, String) {
    let mut args = vec![
        "bench", "--trials", "100", "--sigma-m", "0.25", "--seed", "7", "--warmup", "1", "--solver", "scf,gn,lm",
        "-o",
    ];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    let out = run(&args);
    let csv_text = std::fs::read_to_string(dir.join("results.csv")).unwrap_or_default();
    (out, csv_text)
}

#[test]
fn bench_is_deterministic_and_fair() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (out_a, csv_a) = bench(a.path(), &[]);
    let (out_b, csv_b) = bench(b.path(), &[]);
    let (_, csv_c) = bench(c.path(), &["--parallel"]);
    assert_eq!(code(&out_a), 0, "{}", stderr(&out_a));
    assert_eq!(code(&out_b), 0);
    assert_eq!(strip_runtime(&csv_a), strip_runtime(&csv_b));
    assert_eq!(strip_runtime(&csv_a), strip_runtime(&csv_c));

    let mut reader = csv::Reader::from_reader(csv_a.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 300);
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for trial in rows.chunks(3) {
        let solvers: Vec<&str> = trial.iter().map(|r| &r[col("solver")]).collect();
        assert_eq!(solvers, ["scf", "gn", "lm"]);
        for name in ["trial", "sigma_m", "init_w", "init_x", "init_y", "init_z"] {
            assert!(trial.iter().all(|r| r[col(name)] == trial[0][col(name)]), "{name}");
        }
    }

    let summary = read_json(&a.path().join("summary.json"));
    assert_eq!(summary["solvers"].as_array().unwrap().len(), 3);
    assert_eq!(summary["config"]["seed"], 7);
    for s in summary["solvers"].as_array().unwrap() {
        assert!(s["mean_runtime"].as_f64().unwrap() > 0.0);
        assert!(s["p90_runtime"].as_f64().unwrap() > 0.0);
    }
    let table = String::from_utf8_lossy(&out_a.stdout);
    assert!(table.contains("mean (ms)") && table.contains("p90 (ms)"));
}

#[test]
fn bench_seed_comes_from_environment() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let common = ["bench", "--trials", "5", "--warmup", "0", "--solver", "scf"];
    let out = bin().args(common).args(["-o", a.path().to_str().unwrap()]).env("SHAPEPOSE_SEED", "11").output().unwrap();
    assert_eq!(code(&out), 0);
    let out = run(&[&common[..], &["--seed", "11", "-o", b.path().to_str().unwrap()]].concat());
    assert_eq!(code(&out), 0);
    let read = |d: &Path| strip_runtime(&std::fs::read_to_string(d.join("results.csv")).unwrap());
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bench_rejects_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&[
        "bench", "--trials", "2", "--warmup", "0", "-o", blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let out = run(&["bench", "--trials", "0"]);
    assert_eq!(code(&out), 1);
}

/// `(x, y, z, label, converged)` per basin.csv row.
type BasinRow = (f64, f64, f64, usize, bool);

fn basin_labels(args: &[&str]) -> (Vec<BasinRow>, Output) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basin.csv");
    let out = run(&[args, &["-o", path.to_str().unwrap()]].concat());
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let rows = reader
        .deserialize::<(f64, f64, f64, usize, usize, bool, f64)>()
        .map(|r| {
            let (x, y, z, label, _, converged, _) = r.unwrap();
            (x, y, z, label, converged)
        })
        .collect();
    (rows, out)
}

#[test]
fn basin_maps_match_noise_level() {
    let (rows, out) = basin_labels(&["basin", "--sigma-m", "0", "--samples", "200"]);
    assert_eq!(code(&out), 0);
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.3 == 0 && r.4));

    let (rows, out) = basin_labels(&["basin", fixture("high_noise.json").to_str().unwrap(), "--samples", "400"]);
    assert_eq!(code(&out), 0);
    assert!(rows.iter().map(|r| r.3).max().unwrap() >= 1);
    assert!(rows.iter().all(|r| r.0 * r.0 + r.1 * r.1 + r.2 * r.2 <= 1.0 + 1e-12));
    assert!(rows.iter().all(|r| r.4));
}

#[test]
fn generate_respects_presets() {
    let out = run(&["generate", "--preset", "high-k", "--trial", "2"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["lambda"], 1.0);
    assert_eq!(v["library"][0][0].as_array().unwrap().len(), 25);
    assert_eq!(json(&run(&["generate", "--trial", "2"])), json(&run(&["generate", "--trial", "2"])));
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }
}

fn fuzz_corpus() -> Vec<Vec<u8>> {
    let valid = std::fs::read(fixture("noiseless.json")).unwrap();
    let compact = serde_json::to_vec(&read_json(&fixture("noiseless.json"))).unwrap();
    let mut corpus: Vec<Vec<u8>> = [
        "", " ", "{", "}", "[]", "null", "true", "0", "\"text\"", "{\"keypoints\":", "{\"keypoints\": null}",
        "{\"keypoints\": [], \"library\": []}",
        "{\"keypoints\": [[0,0,0],[1,0,0]], \"library\": [[[0],[0],[0]],[[1],[0],[0]]]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[2,0,0]], \"library\": [[[0],[0],[0]],[[1],[0],[0]],[[2],[0],[0]]]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[0,1,0]], \"library\": [[[0],[0],[0]],[[1],[0],[0]],[[0],[1],[0]]], \"weights\": [1,-1,1]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[0,1,0]], \"library\": [[[0],[0],[0]],[[1],[0],[0]],[[0],[1],[0]]], \"weights\": [0,0,0]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[0,1,0]], \"library\": [[[0],[0],[0]],[[1],[0],[0]],[[0],[1],[0]]], \"lambda\": -1}",
        "{\"keypoints\": [[1e308,0,0],[-1e308,0,0],[0,1e308,0]], \"library\": [[[1e308],[0],[0]],[[0],[1e308],[0]],[[0],[0],[1e308]]]}",
        "{\"keypoints\": [[1e-320,0,0],[0,1e-320,0],[0,0,1e-320]], \"library\": [[[0],[0],[0]],[[0],[0],[0]],[[0],[0],[0]]]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[0,1,0]], \"library\": [[[],[],[]],[[],[],[]],[[],[],[]]]}",
        "{\"keypoints\": [[0,0,0],[1,0,0],[0,1,0]], \"library\": [[[0,0],[0,0],[0,0]],[[1,1],[0,0],[0,0]],[[0,0],[1,1],[0,0]]]}",
        "{\"keypoints\": [[NaN,0,0]]}",
        "{\"keypoints\": [[\"a\",0,0]]}",
        "\u{feff}{}",
    ]
    .iter()
    .map(|s| s.as_bytes().to_vec())
    .collect();
    corpus.push(vec![b'['; 10_000]);
    corpus.push(vec![0xff, 0xfe, 0x00, 0x01]);
    let mut rng = Lcg(2024);
    for base in [&valid, &compact] {
        for _ in 0..40 {
            corpus.push(base[..(rng.next() as usize % base.len())].to_vec());
        }
        for _ in 0..60 {
            let mut v = base.clone();
            for _ in 0..1 + rng.next() % 4 {
                let i = rng.next() as usize % v.len();
                v[i] = b"{}[],:-.0123456789eE\"x \n"[rng.next() as usize % 24];
            }
            corpus.push(v);
        }
    }
    corpus
}

#[test]
fn adversarial_inputs_never_panic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fuzz.json");
    let truth = fixture("noiseless_truth.json");
    let basin_csv = dir.path().join("basin.csv");
    let valid = fixture("noiseless.json");
    for (i, input) in fuzz_corpus().iter().enumerate() {
        std::fs::write(&path, input).unwrap();
        let p = path.to_str().unwrap();
        for args in [
            vec!["solve", p, "--certify"],
            vec!["solve", p, "--gnc", "--cbar2", "0.1"],
            vec!["certify", p, truth.to_str().unwrap()],
            vec!["certify", valid.to_str().unwrap(), p],
            vec!["basin", p, "--samples", "5", "-o", basin_csv.to_str().unwrap()],
        ] {
            let out = run(&args);
            let c = code(&out);
            let msg = stderr(&out);
            assert!(matches!(c, 0..=2), "input {i} {args:?}: exit {c}\n{msg}");
            assert!(!msg.contains("panicked"), "input {i} {args:?}: {msg}");
        }
    }
}

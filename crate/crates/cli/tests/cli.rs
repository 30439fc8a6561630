use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use canopy_core::bev::{BevRaster, CanopyMask, GridSpec};
use canopy_core::raster_io;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn canopy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canopy")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic scene: cloud, perturbed reconstruction and reference.
fn scene(dir: &Path, extra: &[&str]) -> PathBuf {
    let input = dir.join("in");
    let mut args = vec!["synth", "--out-dir", p(&input), "--trees", "6", "--seed", "9"];
    args.extend_from_slice(extra);
    let out = canopy(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    input
}

fn run_args<'a>(input: &'a Path, out_dir: &'a Path) -> Vec<String> {
    [
        "run",
        "--cloud",
        p(&input.join("cloud.ply")),
        "--recon",
        p(&input.join("recon.csv")),
        "--gt",
        p(&input.join("gt.csv")),
        "--cell-size",
        "0.25",
        "--out-dir",
        p(out_dir),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run(input: &Path, out_dir: &Path) -> Output {
    let args = run_args(input, out_dir);
    canopy(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_recovers_synthetic_tree_count() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let out = run(&input, &tmp.path().join("out"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let truth = json(&input.join("truth.json"));
    let summary = json(&tmp.path().join("out/summary.json"));
    assert_eq!(summary["n_trees"], truth["n_trees"]);
    let align = json(&tmp.path().join("out/alignment.json"));
    assert!((align["scale"].as_f64().unwrap() - 1.0 / 0.37).abs() < 1e-9);
    for name in [
        "metric.ply",
        "height.bevr1",
        "density.bevr1",
        "canopy.mask1",
        "labels.lblr1",
        "height.pgm",
        "canopy.pgm",
        "labels.pgm",
        "inventory.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(tmp.path().join("out").join(name).is_file(), "{name} missing");
    }
}

#[test]
fn json_flag_keeps_stdout_machine_readable() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let mut args = run_args(&input, &tmp.path().join("out"));
    args.push("--json".into());
    let out = Command::new(env!("CARGO_BIN_EXE_canopy")).args(&args).env("RUST_LOG", "info").output().unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["n_trees"].as_u64().unwrap() > 0);
    assert!(stderr(&out).contains("INFO"));
    let quiet = run(&input, &tmp.path().join("out2"));
    assert!(quiet.stdout.is_empty());
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let out_dir = tmp.path().join("out");
    assert_eq!(code(&run(&input, &out_dir)), 0);
    let manifest = json(&out_dir.join("manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 11);
    for o in outputs {
        let bytes = fs::read(out_dir.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(o["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert_eq!(manifest["config"]["cell_size_m"], 0.25);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    assert_eq!(code(&run(&input, &tmp.path().join("a"))), 0);
    assert_eq!(code(&run(&input, &tmp.path().join("b"))), 0);
    let a = json(&tmp.path().join("a/manifest.json"));
    let b = json(&tmp.path().join("b/manifest.json"));
    assert_eq!(a["outputs"], b["outputs"]);
}

#[test]
fn chained_stages_equal_run() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let mono = tmp.path().join("mono");
    let st = tmp.path().join("stages");
    assert_eq!(code(&run(&input, &mono)), 0);
    let metric = st.join("metric.ply");
    let (recon, gt, cloud, report) =
        (input.join("recon.csv"), input.join("gt.csv"), input.join("cloud.ply"), st.join("alignment.json"));
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "align",
            "--recon",
            p(&recon),
            "--gt",
            p(&gt),
            "--cloud",
            p(&cloud),
            "--out",
            p(&metric),
            "--report",
            p(&report),
        ],
        vec!["rasterize", "--cloud", p(&metric), "--gt", p(&gt), "--cell-size", "0.25", "--out-dir", p(&st)],
    ];
    for s in &steps {
        let out = canopy(s);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let h = st.join("height.bevr1");
    let c = st.join("canopy.mask1");
    let l = st.join("labels.lblr1");
    let out = canopy(&["segment", "--height", p(&h), "--canopy", p(&c), "--cell-size", "0.25", "--out-dir", p(&st)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = canopy(&[
        "inventory",
        "--height",
        p(&h),
        "--canopy",
        p(&c),
        "--labels",
        p(&l),
        "--cell-size",
        "0.25",
        "--out-dir",
        p(&st),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in [
        "metric.ply",
        "alignment.json",
        "height.bevr1",
        "density.bevr1",
        "canopy.mask1",
        "labels.lblr1",
        "height.pgm",
        "canopy.pgm",
        "labels.pgm",
        "inventory.csv",
        "summary.json",
    ] {
        assert_eq!(fs::read(mono.join(name)).unwrap(), fs::read(st.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn missing_gt_is_a_usage_error() {
    let out = canopy(&["run", "--cloud", "a.ply", "--recon", "r.csv", "--out-dir", "x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--gt"));
    assert_eq!(code(&canopy(&["frobnicate"])), 1);
    assert_eq!(code(&canopy(&["--help"])), 0);
}

#[test]
fn disjoint_frames_are_degenerate() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let gt = fs::read_to_string(input.join("gt.csv")).unwrap();
    let mut shifted = String::new();
    for (i, line) in gt.lines().enumerate() {
        if i == 0 {
            shifted.push_str(line);
        } else {
            let (id, rest) = line.split_once(',').unwrap();
            shifted.push_str(&format!("{},{rest}", id.parse::<u64>().unwrap() + 1000));
        }
        shifted.push('\n');
    }
    let other = tmp.path().join("shifted.csv");
    fs::write(&other, shifted).unwrap();
    let out = canopy(&[
        "align",
        "--recon",
        p(&input.join("recon.csv")),
        "--gt",
        p(&other),
        "--cloud",
        p(&input.join("cloud.ply")),
        "--out",
        p(&tmp.path().join("m.ply")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("fewer than 3 correspondences"));
}

#[test]
fn identical_trajectories_give_unit_scale() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let gt = input.join("gt.csv");
    let out = canopy(&[
        "align",
        "--recon",
        p(&gt),
        "--gt",
        p(&gt),
        "--cloud",
        p(&input.join("cloud.ply")),
        "--out",
        p(&tmp.path().join("o/m.ply")),
        "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["scale"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(report["rmse_m"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["n_points"], 36);
}

fn small_grid() -> GridSpec {
    GridSpec { width: 4, height: 4, cell_size_m: 0.5, origin_x_m: 0.0, origin_y_m: 0.0 }
}

#[test]
fn empty_canopy_is_degenerate() {
    let tmp = TempDir::new().unwrap();
    let spec = small_grid();
    let h = tmp.path().join("h.bevr1");
    let c = tmp.path().join("c.mask1");
    let values = (0..16).map(|i| i as f64).collect();
    fs::write(&h, raster_io::encode_bevr(&BevRaster { spec, values })).unwrap();
    fs::write(&c, raster_io::encode_mask(&CanopyMask::new(spec, vec![false; 16]))).unwrap();
    let out = canopy(&["segment", "--height", p(&h), "--canopy", p(&c), "--out-dir", p(tmp.path())]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("no canopy"));
}

#[test]
fn bad_raster_magic_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let h = tmp.path().join("h.bevr1");
    let c = tmp.path().join("c.mask1");
    let spec = small_grid();
    fs::write(&h, b"NOPE1 4 4 0.5 0 0\n").unwrap();
    fs::write(&c, raster_io::encode_mask(&CanopyMask::new(spec, vec![true; 16]))).unwrap();
    let out = canopy(&["segment", "--height", p(&h), "--canopy", p(&c), "--out-dir", p(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("h.bevr1"));
}

#[test]
fn malformed_and_missing_inputs() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let bad = tmp.path().join("bad.ply");
    fs::write(&bad, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n").unwrap();
    let mut args = run_args(&input, &tmp.path().join("o"));
    args[2] = p(&bad).to_string();
    let out = canopy(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.ply"));
    args[2] = p(&tmp.path().join("absent.ply")).to_string();
    let out = canopy(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("absent.ply"));
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let input = scene(tmp.path(), &[]);
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "cell_size_m = 0.5\nlatitude_deg = 60\nmystery = 1\n").unwrap();
    let mut args = run_args(&input, &tmp.path().join("o"));
    args.extend(["--config".into(), p(&cfg).to_string()]);
    let out = canopy(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("mystery"));
    let manifest = json(&tmp.path().join("o/manifest.json"));
    assert_eq!(manifest["config"]["cell_size_m"], 0.25);
    assert_eq!(manifest["config"]["latitude_deg"], 60.0);
    assert_eq!(json(&tmp.path().join("o/summary.json"))["alpha_geo"], 0.85);

    fs::write(&cfg, "h_min = \"high\"\n").unwrap();
    let out = canopy(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("h_min"));
    let mut args = run_args(&input, &tmp.path().join("o"));
    args.extend(["--latitude".into(), "123".into()]);
    assert_eq!(code(&canopy(&args.iter().map(String::as_str).collect::<Vec<_>>())), 2);
}

#[test]
fn invalid_thread_count_is_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_canopy"))
        .args(["synth", "--out-dir", "unused"])
        .env("CANOPY_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn infeasible_synthetic_stand() {
    let tmp = TempDir::new().unwrap();
    let out = canopy(&["synth", "--out-dir", p(tmp.path()), "--trees", "200", "--extent", "10", "10"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("could not place"));
}

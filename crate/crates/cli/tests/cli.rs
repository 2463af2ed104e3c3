//! End-to-end tests driving the `lrtc` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrtc_core::{io, tensor};

fn lrtc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lrtc"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn lrtc");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pipeline {
    dir: tempfile::TempDir,
}

impl Pipeline {
    fn new() -> Self {
        Pipeline {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, dims: &str, ranks: &str, seed: u64, smooth: bool) -> PathBuf {
        let out = self.file(name);
        let mut cmd = lrtc();
        cmd.args(["synth", "--dims", dims, "--ranks", ranks, "--out"])
            .arg(&out)
            .args(["--seed", &seed.to_string()]);
        if smooth {
            cmd.arg("--smooth");
        }
        run_ok(&mut cmd);
        out
    }

    fn mask(&self, name: &str, dims: &str, sr: f64, seed: u64) -> PathBuf {
        let out = self.file(name);
        run_ok(
            lrtc()
                .args(["mask", "--dims", dims, "--sr", &sr.to_string()])
                .args(["--seed", &seed.to_string(), "--out"])
                .arg(&out),
        );
        out
    }
}

#[test]
fn synth_writes_valid_tensor_and_reports_ranks() {
    let p = Pipeline::new();
    let out = p.file("t.tns");
    let output = run_ok(
        lrtc()
            .args(["synth", "--dims", "20,20,20", "--ranks", "2,2,2", "--seed", "7", "--out"])
            .arg(&out),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("achieved mode-n ranks: 2,2,2"), "{}", stdout);
    // 8000 floats + header
    let t = io::read_tensor(&out).unwrap();
    assert_eq!(t.len(), 8000);
    // bit-exact against the library path with the same seed
    let direct = tensor::synth_lowrank(&[20, 20, 20], &[2, 2, 2], 7, false).unwrap();
    assert_eq!(t, direct);
}

#[test]
fn mask_counts_and_determinism() {
    let p = Pipeline::new();
    let a = p.mask("a.msk", "10,10,10", 0.3, 5);
    let m = io::read_mask(&a).unwrap();
    assert_eq!(m.len(), 300);
    let b = p.mask("b.msk", "10,10,10", 0.3, 5);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let full = p.mask("full.msk", "4,4,4", 1.0, 0);
    assert_eq!(io::read_mask(&full).unwrap().len(), 64);
}

#[test]
fn complete_end_to_end_with_manifest_rerun() {
    let p = Pipeline::new();
    let truth_path = p.synth("truth.tns", "12,12,8", "2,2,2", 3, false);
    let mask_path = p.mask("m.msk", "12,12,8", 0.5, 4);

    let truth = io::read_tensor(&truth_path).unwrap();
    let mask = io::read_mask(&mask_path).unwrap();
    let observed = truth.project(&mask).unwrap();
    let observed_path = p.file("observed.tns");
    io::write_tensor(&observed_path, &observed).unwrap();

    let out = p.file("completed.tns");
    run_ok(
        lrtc()
            .arg("complete")
            .args(["--input", path_str(&observed_path)])
            .args(["--mask", path_str(&mask_path)])
            .args(["--ranks", "2,2,2", "--max-outer", "80"])
            .args(["--out", path_str(&out)]),
    );

    // observed entries pinned bit-exactly
    let completed = io::read_tensor(&out).unwrap();
    for &i in mask.indices() {
        assert_eq!(completed.data()[i as usize], observed.data()[i as usize]);
    }

    // trace exists with the documented schema and a non-increasing objective
    let trace = std::fs::read_to_string(p.file("completed.tns.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,objective,rel_change,max_feasibility_residual,seconds"
    );
    let objectives: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for w in objectives.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-8));
    }

    // manifest echoes the published defaults
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.file("completed.tns.manifest.json")).unwrap())
            .unwrap();
    let cfg = &manifest["config"];
    assert_eq!(cfg["model"], 1);
    assert_eq!(cfg["tol"], 1e-5);
    assert_eq!(cfg["mu"], 0.5);
    assert_eq!(cfg["beta"], 10.0);
    for key in ["tau", "lambda", "rho"] {
        for v in cfg[key].as_array().unwrap() {
            assert_eq!(v.as_f64().unwrap(), 0.1);
        }
    }
    for v in cfg["alpha"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(manifest["exit_status"], 0);

    // re-running from the manifest reproduces the output bit-exactly
    let first_bytes = std::fs::read(&out).unwrap();
    run_ok(
        lrtc()
            .arg("complete")
            .args(["--from-manifest", path_str(&p.file("completed.tns.manifest.json"))]),
    );
    assert_eq!(std::fs::read(&out).unwrap(), first_bytes);
}

#[test]
fn complete_config_file_with_flag_precedence() {
    let p = Pipeline::new();
    let truth_path = p.synth("t.tns", "8,8,6", "2,2,2", 11, true);
    let mask_path = p.mask("m.msk", "8,8,6", 0.6, 12);
    let cfg_path = p.file("run.cfg");
    std::fs::write(&cfg_path, "model = 2\nmu = 0.9\nmax-outer = 5\nseed = 3\n").unwrap();

    let out = p.file("o.tns");
    run_ok(
        lrtc()
            .arg("complete")
            .args(["--input", path_str(&truth_path)])
            .args(["--mask", path_str(&mask_path)])
            .args(["--ranks", "2,2,2"])
            .args(["--config", path_str(&cfg_path)])
            .args(["--mu", "0.7"]) // flag wins over the file's 0.9
            .args(["--out", path_str(&out)]),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.file("o.tns.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["model"], 2);
    assert_eq!(manifest["config"]["mu"], 0.7);
    assert_eq!(manifest["config"]["max_outer"], 5);
    assert_eq!(manifest["config"]["seed"], 3);
}

#[test]
fn complete_auto_ranks() {
    let p = Pipeline::new();
    let truth_path = p.synth("t.tns", "14,12,10", "3,2,2", 21, false);
    let mask_path = p.mask("m.msk", "14,12,10", 1.0, 22);
    let out = p.file("o.tns");
    let output = run_ok(
        lrtc()
            .arg("complete")
            .args(["--input", path_str(&truth_path)])
            .args(["--mask", path_str(&mask_path)])
            .args(["--ranks", "auto", "--max-outer", "3"])
            .args(["--out", path_str(&out)]),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("suggests 3,2,2"), "{}", stdout);
}

#[test]
fn metrics_identity_cases() {
    let p = Pipeline::new();
    let t = p.synth("t.tns", "12,12,6", "2,2,2", 31, false);
    let base = p.file("report");
    run_ok(
        lrtc()
            .arg("metrics")
            .args(["--reference", path_str(&t)])
            .args(["--estimate", path_str(&t)])
            .args(["--out", path_str(&base)]),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.file("report.json")).unwrap()).unwrap();
    assert_eq!(json["mean"]["psnr"], 99.0);
    assert_eq!(json["mean"]["ssim"], 1.0);
    assert_eq!(json["mean"]["ergas"], 0.0);
    assert_eq!(json["ergas"], 0.0);
    assert_eq!(json["sam"], 0.0);
    let csv = std::fs::read_to_string(p.file("report.csv")).unwrap();
    assert!(csv.starts_with("slice,psnr,ssim,ergas,sam\n"));
    assert!(csv.trim_end().lines().last().unwrap().starts_with("MEAN,"));

    // scale invariance of SAM via --peak-agnostic doubled estimate
    let doubled = {
        let orig = io::read_tensor(&t).unwrap();
        let data: Vec<f64> = orig.data().iter().map(|v| 2.0 * v).collect();
        tensor::DenseTensor::new(orig.dims().to_vec(), data).unwrap()
    };
    let doubled_path = p.file("doubled.tns");
    io::write_tensor(&doubled_path, &doubled).unwrap();
    let base2 = p.file("report2");
    run_ok(
        lrtc()
            .arg("metrics")
            .args(["--reference", path_str(&t)])
            .args(["--estimate", path_str(&doubled_path)])
            .args(["--out", path_str(&base2)]),
    );
    let json2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.file("report2.json")).unwrap()).unwrap();
    assert!(json2["sam"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn report_merges_and_is_idempotent() {
    let p = Pipeline::new();
    let trace_a = p.file("runa.trace.csv");
    let trace_b = p.file("runb.trace.csv");
    std::fs::write(
        &trace_a,
        "iter,objective,rel_change,max_feasibility_residual,seconds\n1,10,0.5,0.1,0.01\n2,9,0.4,0.05,0.02\n",
    )
    .unwrap();
    std::fs::write(
        &trace_b,
        "iter,objective,rel_change,max_feasibility_residual,seconds\n1,20,0.6,0.2,0.01\n",
    )
    .unwrap();

    let merged = p.file("merged.csv");
    run_ok(
        lrtc()
            .arg("report")
            .arg(&trace_a)
            .arg(&trace_b)
            .args(["--out", path_str(&merged)]),
    );
    let text = std::fs::read_to_string(&merged).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "run_id,step,metric,value");
    let rows: Vec<&str> = lines.collect();
    // (2 + 1) input rows × 4 metric columns
    assert_eq!(rows.len(), 12);
    assert!(rows[0].starts_with("runa,1,objective,10"));

    // single-input conversions sum to the merge
    let only_a = p.file("onlya.csv");
    run_ok(lrtc().arg("report").arg(&trace_a).args(["--out", path_str(&only_a)]));
    let only_b = p.file("onlyb.csv");
    run_ok(lrtc().arg("report").arg(&trace_b).args(["--out", path_str(&only_b)]));
    let count = |p: &Path| std::fs::read_to_string(p).unwrap().lines().count() - 1;
    assert_eq!(count(&merged), count(&only_a) + count(&only_b));

    // idempotent on already-long input
    let again = p.file("again.csv");
    run_ok(lrtc().arg("report").arg(&merged).args(["--out", path_str(&again)]));
    let merged_text = std::fs::read_to_string(&merged).unwrap();
    let again_text = std::fs::read_to_string(&again).unwrap();
    assert_eq!(merged_text, again_text);

    // inconsistent header is a format error (exit 3)
    let bad = p.file("bad.csv");
    std::fs::write(&bad, "what,is,this\n1,2,3\n").unwrap();
    let out = lrtc()
        .arg("report")
        .arg(&bad)
        .args(["--out", path_str(&p.file("x.csv"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let p = Pipeline::new();
    // missing input file -> 3
    let out = lrtc()
        .arg("complete")
        .args(["--input", path_str(&p.file("absent.tns"))])
        .args(["--mask", path_str(&p.file("absent.msk"))])
        .args(["--ranks", "2,2,2"])
        .args(["--out", path_str(&p.file("o.tns"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // bad sampling ratio -> 2
    let out = lrtc()
        .args(["mask", "--dims", "4,4,4", "--sr", "1.5", "--out"])
        .arg(p.file("m.msk"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown flag -> 2 (clap usage error)
    let out = lrtc().args(["synth", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // numerical abort -> 4, recorded in the manifest
    let huge = tensor::DenseTensor::new(vec![4, 4, 4], vec![1e200; 64]).unwrap();
    let huge_path = p.file("huge.tns");
    io::write_tensor(&huge_path, &huge).unwrap();
    let mask_path = p.mask("m4.msk", "4,4,4", 0.5, 1);
    let out_path = p.file("boom.tns");
    let out = lrtc()
        .arg("complete")
        .args(["--input", path_str(&huge_path)])
        .args(["--mask", path_str(&mask_path)])
        .args(["--ranks", "2,2,2"])
        .args(["--out", path_str(&out_path)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration"), "{}", stderr);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.file("boom.tns.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["exit_status"], 4);
}

#[test]
fn pipeline_is_bit_reproducible() {
    let run_pipeline = |p: &Pipeline| -> Vec<u8> {
        let truth = p.synth("t.tns", "10,10,6", "2,2,2", 8, true);
        let mask = p.mask("m.msk", "10,10,6", 0.4, 9);
        let observed = {
            let t = io::read_tensor(&truth).unwrap();
            let m = io::read_mask(&mask).unwrap();
            t.project(&m).unwrap()
        };
        let obs_path = p.file("obs.tns");
        io::write_tensor(&obs_path, &observed).unwrap();
        let out = p.file("done.tns");
        run_ok(
            lrtc()
                .arg("complete")
                .args(["--model", "2", "--max-outer", "30"])
                .args(["--input", path_str(&obs_path)])
                .args(["--mask", path_str(&mask)])
                .args(["--ranks", "2,2,2"])
                .args(["--out", path_str(&out)]),
        );
        std::fs::read(&out).unwrap()
    };
    let a = run_pipeline(&Pipeline::new());
    let b = run_pipeline(&Pipeline::new());
    assert_eq!(a, b);
}

#[test]
fn threads_flag_does_not_change_results() {
    let p = Pipeline::new();
    let truth = p.synth("t.tns", "10,10,6", "2,2,2", 13, false);
    let mask = p.mask("m.msk", "10,10,6", 0.5, 14);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = p.file(&format!("o{}.tns", threads));
        run_ok(
            lrtc()
                .args(["--threads", threads])
                .arg("complete")
                .args(["--input", path_str(&truth)])
                .args(["--mask", path_str(&mask)])
                .args(["--ranks", "2,2,2", "--max-outer", "25"])
                .args(["--out", path_str(&out)]),
        );
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

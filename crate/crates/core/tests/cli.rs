use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lripct::io::{read_image, read_sinogram};

fn lripct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lripct")).args(args).output().expect("spawn lripct")
}

fn ok(args: &[&str]) -> String {
    let out = lripct(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn metrics_of_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.lrip");
    ok(&["phantom", "--type", "shepp-logan", "--size", "32", "--out", p(&x)]);
    let text = ok(&["metrics", "--ref", p(&x), "--test", p(&x)]);
    assert!(text.contains("psnr=inf") && text.contains("rmse=0") && text.contains("ssim=1"), "{text}");
}

#[test]
fn cond_ordering_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cond.csv");
    ok(&["cond", "--size", "16", "--coverages", "90,120,150", "--taus", "1,2,4,8", "--norm", "2", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("coverage_deg,tau,norm,cond_full,cond_low,holds"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        let (full, low): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(low <= full * (1.0 + 1e-6), "{r:?}");
        assert_eq!(r[5], "true");
    }
}

#[test]
fn full_pipeline_with_prior() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ph, sino, noisy, prior, rec, log) =
        (d.join("ph"), d.join("s"), d.join("n"), d.join("prior"), d.join("rec"), d.join("log.csv"));
    ok(&["phantom", "--type", "shepp-logan", "--size", "64", "--out", p(&ph)]);
    ok(&["project", "--phantom", p(&ph), "--coverage", "90", "--size", "64", "--out", p(&sino)]);
    ok(&["noise", "--in", p(&sino), "--kind", "gaussian", "--level", "0.05", "--seed", "3", "--out", p(&noisy)]);
    ok(&["prior", "--sino", p(&noisy), "--tau", "2", "--method", "fbp", "--out", p(&prior)]);
    let params = d.join("params.cfg");
    fs::write(&params, "# short run\nsolver.outer_iters = 40\n").unwrap();
    ok(&[
        "recon", "--method", "lrip", "--sino", p(&noisy), "--coverage", "90", "--size", "64", "--out", p(&rec),
        "--prior", p(&prior), "--tau", "2", "--params", p(&params), "--log", p(&log), "--reference", p(&ph),
    ]);
    let img = read_image(&rec).unwrap();
    assert_eq!((img.rows(), img.cols()), (64, 64));
    assert!(img.is_finite());
    assert_eq!(read_image(&prior).unwrap().rows(), 32);
    assert_eq!(read_sinogram(&sino).unwrap().n_views(), 90);
    let log = fs::read_to_string(&log).unwrap();
    assert!(log.starts_with("iter,objective,data_residual,psnr\n"));
    assert_eq!(log.lines().count(), 41);
}

#[test]
fn subcommands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["phantom", "--type", "disk", "--size", "32", "--out", p(&d.join("ph"))]);
    ok(&["project", "--phantom", p(&d.join("ph")), "--coverage", "120", "--out", p(&d.join("s"))]);
    for tag in ["a", "b"] {
        ok(&["noise", "--in", p(&d.join("s")), "--kind", "poisson", "--level", "100", "--out", p(&d.join(tag))]);
        ok(&["recon", "--method", "fbp", "--sino", p(&d.join(tag)), "--out", p(&d.join(format!("r{tag}")))]);
    }
    assert_eq!(fs::read(d.join("a")).unwrap(), fs::read(d.join("b")).unwrap());
    assert_eq!(fs::read(d.join("ra")).unwrap(), fs::read(d.join("rb")).unwrap());
}

#[test]
fn exit_codes_and_module_names() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lripct(&["phantom", "--type", "shepp-logan"]).status.code(), Some(1));
    assert_eq!(lripct(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lripct(&["phantom", "--type", "triangle", "--size", "8", "--out", "x"]).status.code(), Some(1));

    let out = lripct(&["phantom", "--type", "shepp-logan", "--size", "8", "--out", p(&d.join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulation"));

    let missing = d.join("nope.lrip");
    let out = lripct(&["noise", "--in", p(&missing), "--kind", "gaussian", "--level", "0.1", "--out", p(&d.join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("io"));

    fs::write(d.join("bad.lrip"), b"LRIQ").unwrap();
    let out = lripct(&["metrics", "--ref", p(&d.join("bad.lrip")), "--test", p(&d.join("bad.lrip"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error at byte 0"));

    let out = Command::new(env!("CARGO_BIN_EXE_lripct"))
        .env("LRIPCT_THREADS", "zero")
        .args(["phantom", "--type", "disk", "--size", "8", "--out", p(&d.join("z"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

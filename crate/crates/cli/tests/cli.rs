use std::path::Path;
use std::process::{Command, Output};

fn blobtrack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blobtrack"))
        .args(args)
        .current_dir(dir)
        .env_remove("BLOBTRACK_OUT_DIR")
        .env_remove("BLOBTRACK_WORKERS")
        .output()
        .expect("binary runs")
}

fn generate(dir: &Path, out: &str) {
    let o = blobtrack(
        &["generate", "--seed", "7", "--bumps", "3", "--frames", "64", "--resolution", "60", "--out-dir", out],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "a");
    generate(dir.path(), "b");
    for name in ["synthetic.fcf", "synthetic.truth.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn detect_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), ".");
    let o = blobtrack(
        &[
            "detect", "--input", "synthetic.fcf", "--rmin", "1.1", "--rmax", "1.9", "--zmin", "-0.6", "--zmax", "0.6",
            "--t-start", "1", "--t-end", "64", "--workers", "2", "--out-dir", "res",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["blobs.jsonl", "tracks.jsonl", "centers.csv", "timing.csv", "timing.jsonl"] {
        assert!(dir.path().join("res").join(f).is_file(), "{f} missing");
    }
    let tracks = std::fs::read_to_string(dir.path().join("res/tracks.jsonl")).unwrap();
    assert!(tracks.lines().count() >= 2);
}

#[test]
fn env_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_blobtrack"))
        .args(["generate", "--frames", "3", "--resolution", "30"])
        .current_dir(dir.path())
        .env("BLOBTRACK_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-env/synthetic.fcf").is_file());
}

#[test]
fn detect_without_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(blobtrack(&["detect"], dir.path()).status.code(), Some(2));
}

#[test]
fn inconsistent_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), ".");
    let cases: &[&[&str]] = &[
        &["detect", "--input", "synthetic.fcf", "--t-start", "9", "--t-end", "3"],
        &["detect", "--input", "synthetic.fcf", "--rmin", "1.5"],
        &["detect", "--input", "synthetic.fcf", "--rmin", "2", "--rmax", "1", "--zmin", "0", "--zmax", "1"],
        &["detect", "--input", "synthetic.fcf", "--min-area", "1"],
        &["detect", "--input", "synthetic.fcf", "--no-such-flag"],
        &["generate", "--width", "0.001"],
    ];
    for args in cases {
        let o = blobtrack(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error:"), "{err}");
    }
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.fcf"), "not a container\n").unwrap();
    for args in [["detect", "--input", "missing.fcf"], ["detect", "--input", "bad.fcf"]] {
        let o = blobtrack(&args, dir.path());
        assert_eq!(o.status.code(), Some(1));
        assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    }
}

#[test]
fn help_lists_every_flag_with_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = blobtrack(&["detect", "--help"], dir.path());
    let help = String::from_utf8_lossy(&o.stdout);
    for (flag, default) in [
        ("--alpha", "2"),
        ("--beta", "1"),
        ("--min-abs-density", "2.05"),
        ("--min-rel-density", "1.2"),
        ("--min-area", "3"),
        ("--min-abs-median", "2.15"),
        ("--min-rel-median", "1.3"),
        ("--max-abs-median", "2.75"),
        ("--max-area-change", "25"),
        ("--max-jump", "0.04"),
        ("--max-frames", "100"),
        ("--min-frames", "3"),
        ("--t-start", "1"),
        ("--workers", "1"),
        ("--refine", "1"),
    ] {
        let line = help.lines().position(|l| l.contains(&format!("{flag} <"))).unwrap_or_else(|| panic!("{flag} missing"));
        let text = help.lines().skip(line).take(2).collect::<String>();
        assert!(text.contains(&format!("[default: {default}]")), "{flag}: {text}");
    }
}

#[test]
fn param_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), ".");
    std::fs::write(dir.path().join("p.toml"), "[track]\nmin_frames = 1000\nmax_frames = 1000\n").unwrap();
    let base = ["detect", "--input", "synthetic.fcf", "--params", "p.toml", "--out-dir", "r"];
    let o = blobtrack(&base, dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(" 0 tracks"));
    let mut args = base.to_vec();
    args.extend(["--min-frames", "3"]);
    let o = blobtrack(&args, dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(" 3 tracks"), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn version_is_name_and_semver() {
    let o = blobtrack(&["--version"], Path::new("."));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.trim(), format!("blobtrack {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn fitdist_and_bench_run() {
    let dir = tempfile::tempdir().unwrap();
    let samples: String = (1..=200).map(|i| format!("{}\n", 1.0 + (i as f64 * 0.37).sin().abs())).collect();
    std::fs::write(dir.path().join("s.txt"), samples).unwrap();
    let o = blobtrack(&["fitdist", "--values", "s.txt"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["samples"], 200);

    let o = blobtrack(
        &["bench", "--frames", "9", "--resolution", "30", "--sweep", "1,2", "--repeats", "1", "--out-dir", "b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b/scaling-strong.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

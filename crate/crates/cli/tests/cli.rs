use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo").join(name)
}

fn stegogeom(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stegogeom"))
        .arg("--config")
        .arg(fixture("config.json"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn stegogeom")
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_stegogeom")).args(["run", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_config_exits_with_two_and_names_the_file() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stegogeom"))
        .args(["--config", "no_such_config.json", "--out", s(dir.path()), "gen-universe"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_config.json"));
}

#[test]
fn unreadable_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.sgcf");
    std::fs::write(&bad, b"not an image").unwrap();
    let o = stegogeom(dir.path(), &["embed", "--input", s(&bad), "--output", s(&dir.path().join("x.sgcf"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn subcommands_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(stegogeom(out, &["gen-universe"]));
    assert_eq!(std::fs::read_dir(out.join("manifests")).unwrap().count(), 4);

    for src in ["0", "1", "2"] {
        ok(stegogeom(out, &["develop", "--source", src, "--count", "12"]));
    }
    ok(stegogeom(out, &["develop", "--source", "3", "--count", "12", "--offset", "100"]));
    let img = |i: u32| out.join(format!("images/source_{i:04}"));

    let cover = img(0).join("0000.sgcf");
    let stego = out.join("stego/0000.sgcf");
    let e: serde_json::Value =
        serde_json::from_str(&ok(stegogeom(out, &["embed", "--input", s(&cover), "--output", s(&stego)]))).unwrap();
    assert!(e["changes"].as_u64().unwrap() > 0);
    let rel = (e["entropy_bits"].as_f64().unwrap() - e["target_bits"].as_f64().unwrap()).abs()
        / e["target_bits"].as_f64().unwrap();
    assert!(rel < 1e-3, "{e}");

    let covers = out.join("covers.sgfm");
    ok(stegogeom(out, &["features", "--input", s(&img(0)), "--output", s(&covers)]));
    for i in 1..12 {
        let p = out.join(format!("stego/{i:04}.sgcf"));
        let c = img(0).join(format!("{i:04}.sgcf"));
        ok(stegogeom(out, &["embed", "--input", s(&c), "--output", s(&p)]));
    }
    let t: serde_json::Value = serde_json::from_str(&ok(stegogeom(
        out,
        &["train", "--covers", s(&covers), "--stegos", s(&out.join("stego"))],
    )))
    .unwrap();
    assert!(t["threshold"].as_f64().unwrap().is_finite());
    assert!(out.join("detectors/source_0000.json").is_file());
    assert!(out.join("detectors/source_0000.weights").is_file());

    let m: serde_json::Value =
        serde_json::from_str(&ok(stegogeom(out, &["metrics", "--source", s(&covers), "--target", s(&img(3))]))).unwrap();
    let nscd = m["NSCD"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&nscd));
    assert!(m["ENERGY_MMD"].as_f64().unwrap() >= 0.0);

    let chosen = ok(stegogeom(
        out,
        &[
            "select",
            "--strategy",
            "majority-vote",
            "--candidate",
            &format!("0={}", s(&img(0))),
            "--candidate",
            &format!("1={}", s(&img(1))),
            "--target",
            s(&img(3)),
        ],
    ));
    assert!(["0", "1"].contains(&chosen.trim()), "{chosen}");
    assert!(out.join("reports/selection.json").is_file());
}

#[test]
fn min_nscd_selection_matches_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    for src in ["0", "1", "2"] {
        ok(stegogeom(out, &["develop", "--source", src, "--count", "12"]));
    }
    ok(stegogeom(out, &["develop", "--source", "3", "--count", "12", "--offset", "100"]));
    let img = |i: u32| s(&out.join(format!("images/source_{i:04}"))).to_owned();
    let got = ok(stegogeom(
        out,
        &[
            "select",
            "--strategy",
            "min-nscd",
            "--candidate",
            &format!("0={}", img(0)),
            "--candidate",
            &format!("1={}", img(1)),
            "--candidate",
            &format!("2={}", img(2)),
            "--target",
            &img(3),
        ],
    ));
    assert_eq!(got, std::fs::read_to_string(fixture("select_min_nscd.golden")).unwrap());
}

#[test]
fn run_is_independent_of_thread_count_and_passes_report() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let sa = ok(stegogeom(a.path(), &["--threads", "1", "run", "--no-features"]));
    let sb = ok(stegogeom(b.path(), &["--threads", "4", "run", "--no-features"]));
    assert_eq!(sa, sb);
    for f in ["reports/summary.csv", "reports/strategy_regrets.csv", "reports/sample_sizes.csv", "matrices/regret.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let r = Command::new(env!("CARGO_BIN_EXE_stegogeom")).args(["--out", s(a.path()), "report"]).output().unwrap();
    let text = ok(r);
    assert!(text.contains("artifacts verified"));
    assert!(text.contains("MIN_NSCD"));

    std::fs::write(a.path().join("reports/config.json"), "{").unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_stegogeom")).args(["--out", s(a.path()), "report"]).output().unwrap();
    assert_eq!(r.status.code(), Some(2));
}

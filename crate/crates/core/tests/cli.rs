use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rc-recover"));
    cmd.env_remove("RC_RECOVER_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn relative_error(dir: &Path) -> f64 {
    json(&dir.join("result.json"))["relative_error"]
        .as_f64()
        .unwrap()
}

#[test]
fn all_ones_fixture_recovers_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    std::fs::write(&x, "1,1\n1,1\n").unwrap();
    let design = tmp.path().join("design");
    let meas = tmp.path().join("meas");
    let out = tmp.path().join("out");
    ok(&[
        "gen-design",
        "--kind",
        "row-col-sample",
        "--m",
        "2",
        "--n",
        "2",
        "--k1",
        "1",
        "--k2",
        "1",
        "--out",
        p(&design),
    ]);
    ok(&[
        "measure",
        "--x",
        p(&x),
        "--design",
        p(&design),
        "--out",
        p(&meas),
    ]);
    for algo in ["svls", "cur", "als"] {
        ok(&[
            "recover",
            "--meas",
            p(&meas),
            "--algo",
            algo,
            "--rank",
            "1",
            "--truth",
            p(&x),
            "--out",
            p(&out),
        ]);
        assert!(relative_error(&out) <= 1e-10, "{algo}");
        assert_eq!(json(&out.join("result.json"))["rank_used"], 1);
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    let design = tmp.path().join("design");
    let meas = tmp.path().join("meas");
    ok(&[
        "gen-matrix",
        "--m",
        "12",
        "--n",
        "10",
        "--rank",
        "2",
        "--seed",
        "5",
        "--out",
        p(&x),
    ]);
    let sidecar = json(&tmp.path().join("x.json"));
    assert_eq!(sidecar["rank"], 2);
    assert_eq!(sidecar["seed"], 5);
    ok(&[
        "gen-design",
        "--kind",
        "gaussian-affine",
        "--m",
        "12",
        "--n",
        "10",
        "--k1",
        "3",
        "--k2",
        "3",
        "--seed",
        "6",
        "--out",
        p(&design),
    ]);
    for f in ["design_a_row.csv", "design_a_col.csv", "manifest.json"] {
        assert!(design.join(f).exists(), "{f}");
    }
    ok(&[
        "measure",
        "--x",
        p(&x),
        "--design",
        p(&design),
        "--sigma",
        "0",
        "--out",
        p(&meas),
    ]);
    let manifest = json(&meas.join("manifest.json"));
    assert_eq!(manifest["kind"], "GaussianAffine");
    assert_eq!(manifest["truth"]["seed"], 5);

    for algo in ["svls", "als", "svp"] {
        let out = tmp.path().join(format!("out-{algo}"));
        ok(&[
            "recover",
            "--meas",
            p(&meas),
            "--algo",
            algo,
            "--rank",
            "2",
            "--truth",
            p(&x),
            "--out",
            p(&out),
            "--max-iters",
            "20",
        ]);
        for f in ["x_hat.csv", "result.json", "manifest.json"] {
            assert!(out.join(f).exists(), "{algo}: {f}");
        }
        let result = json(&out.join("result.json"));
        assert_eq!(result["algorithm"], algo);
        assert_eq!(json(&out.join("manifest.json"))["rank"], "2");
        let err = result["relative_error"].as_f64().unwrap();
        assert!(err.is_finite());
        if algo != "svp" {
            assert!(err <= 1e-8, "{algo}: {err}");
        }
    }
}

#[test]
fn automatic_rank_matches_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    let design = tmp.path().join("design");
    let meas = tmp.path().join("meas");
    let out = tmp.path().join("out");
    ok(&[
        "gen-matrix",
        "--m",
        "15",
        "--n",
        "15",
        "--rank",
        "3",
        "--seed",
        "1",
        "--out",
        p(&x),
    ]);
    ok(&[
        "gen-design",
        "--kind",
        "row-col-sample",
        "--m",
        "15",
        "--n",
        "15",
        "--k1",
        "5",
        "--k2",
        "5",
        "--seed",
        "2",
        "--out",
        p(&design),
    ]);
    ok(&[
        "measure",
        "--x",
        p(&x),
        "--design",
        p(&design),
        "--out",
        p(&meas),
    ]);
    ok(&[
        "recover",
        "--meas",
        p(&meas),
        "--algo",
        "svls",
        "--rank",
        "auto",
        "--truth",
        p(&x),
        "--out",
        p(&out),
    ]);
    assert_eq!(json(&out.join("result.json"))["rank_used"], 3);
    assert_eq!(json(&out.join("manifest.json"))["rank"], "auto");
    assert!(relative_error(&out) <= 1e-8);
}

#[test]
fn seed_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a.csv"),
        tmp.path().join("b.csv"),
        tmp.path().join("c.csv"),
    );
    let args = |out: &Path| {
        vec![
            "gen-matrix",
            "--m",
            "4",
            "--n",
            "3",
            "--rank",
            "1",
            "--out",
            p(out),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    assert!(bin()
        .args(args(&a))
        .env("RC_RECOVER_SEED", "9")
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(args(&b))
        .arg("--seed")
        .arg("9")
        .status()
        .unwrap()
        .success());
    assert!(bin().args(args(&c)).status().unwrap().success());
    let read = |f: &Path| std::fs::read(f).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    // An explicit flag wins over the environment.
    let d = tmp.path().join("d.csv");
    assert!(bin()
        .args(args(&d))
        .args(["--seed", "0"])
        .env("RC_RECOVER_SEED", "9")
        .status()
        .unwrap()
        .success());
    assert_eq!(read(&c), read(&d));
}

#[test]
fn usage_errors_exit_two() {
    let cases: [&[&str]; 5] = [
        &[
            "gen-matrix",
            "--m",
            "0",
            "--n",
            "3",
            "--rank",
            "1",
            "--out",
            "x.csv",
        ],
        &[
            "gen-design",
            "--kind",
            "sparse",
            "--m",
            "3",
            "--n",
            "3",
            "--k1",
            "1",
            "--k2",
            "1",
            "--out",
            "d",
        ],
        &[
            "recover", "--meas", "m", "--algo", "svls", "--rank", "0", "--out", "o",
        ],
        &[
            "measure", "--x", "x.csv", "--design", "d", "--sigma", "-1", "--out", "o",
        ],
        &["summarize", "--out", "s.csv"],
    ];
    for args in cases {
        assert_eq!(run(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_one_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x.csv");
    std::fs::write(&x, "1,2\n3\n").unwrap();
    let design = tmp.path().join("design");
    ok(&[
        "gen-design",
        "--kind",
        "gaussian-affine",
        "--m",
        "2",
        "--n",
        "2",
        "--k1",
        "1",
        "--k2",
        "1",
        "--out",
        p(&design),
    ]);
    let out = run(&[
        "measure",
        "--x",
        p(&x),
        "--design",
        p(&design),
        "--out",
        p(&tmp.path().join("meas")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "{stderr}");

    std::fs::write(&x, "1,2\n3,4\n").unwrap();
    let meas = tmp.path().join("meas");
    ok(&[
        "measure",
        "--x",
        p(&x),
        "--design",
        p(&design),
        "--out",
        p(&meas),
    ]);
    let out = run(&[
        "recover",
        "--meas",
        p(&meas),
        "--algo",
        "cur",
        "--rank",
        "1",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "recover",
        "--meas",
        p(&meas),
        "--algo",
        "svls",
        "--rank",
        "2",
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_is_reproducible_and_summarizes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"m": 8, "n": 8, "ranks": [1, 2], "design_kinds": ["GaussianAffine", "RowColSample"],
            "k_values": [[2, 2]], "sigmas": [0.0, 0.01], "algorithms": ["svls", "cur"],
            "trials": 3, "base_seed": 17}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    ok(&[
        "sweep",
        "--config",
        p(&config),
        "--out",
        p(&a),
        "--jobs",
        "1",
    ]);
    ok(&[
        "sweep",
        "--config",
        p(&config),
        "--out",
        p(&b),
        "--jobs",
        "3",
    ]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2 * 3);

    let summary = tmp.path().join("summary.csv");
    ok(&["summarize", "--in", p(&a), "--out", p(&summary)]);
    let summary = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2 * 2);

    std::fs::write(&config, r#"{"m": 8}"#).unwrap();
    assert_eq!(
        run(&["sweep", "--config", p(&config), "--out", p(&a)])
            .status
            .code(),
        Some(1)
    );
}

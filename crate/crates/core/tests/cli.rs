use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polarmig::config::{ExperimentConfig, Length};
use polarmig::{CMat2, C64};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polarmig"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::reference(7, 3);
    cfg.pipeline.slice_spacing = Length::lambda(3.0);
    cfg
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small());
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_owned();
    let c = cfg.to_str().unwrap();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "simulate".into(),
            "-c".into(),
            c.into(),
            "-o".into(),
            p("coh.pmg"),
            "--response".into(),
            p("resp.pmg"),
        ],
        vec![
            "preprocess".into(),
            "-i".into(),
            p("coh.pmg"),
            "-o".into(),
            p("pre.pmg"),
        ],
        vec![
            "image".into(),
            "-c".into(),
            c.into(),
            "-i".into(),
            p("pre.pmg"),
            "--out-dir".into(),
            p("img"),
        ],
        vec![
            "recover".into(),
            "-c".into(),
            c.into(),
            "-i".into(),
            p("pre.pmg"),
            "--out-dir".into(),
            p("rec"),
        ],
        vec![
            "glyphs".into(),
            "-i".into(),
            p("rec/alpha_cross0.pmg"),
            "--out-dir".into(),
            p("gly"),
            "--name".into(),
            "c0".into(),
        ],
        vec!["report".into(), "-c".into(), c.into()],
    ];
    for s in steps {
        let out = bin().args(&s).output().unwrap();
        assert_eq!(
            code(&out),
            0,
            "{s:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "coh.pmg",
        "resp.pmg",
        "pre.pmg",
        "img/image_cross0.pmg",
        "rec/alpha_range1.pmg",
        "gly/glyphs_c0.svg",
        "gly/glyphs_c0.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report = String::from_utf8(run(&["report", "-c", c]).stdout).unwrap();
    assert!(report.contains("FAIL"), "{report}");
}

#[test]
fn run_command_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--mode",
        "fraunhofer",
        "--receivers",
        "5",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let saved: ExperimentConfig =
        serde_json::from_slice(&std::fs::read(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved.array.receivers, 5);
    assert_eq!(saved.seed, 9);
    assert_eq!(saved.pipeline.mode, polarmig::RecoveryMode::Fraunhofer);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("scatterer 2"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["report", "-c", "/nonexistent/config.json"])), 2);
    assert_eq!(code(&run(&["report", "-c", c, "--gamma", "2"])), 2);
    assert_eq!(code(&run(&["report", "-c", c, "--delta-rel", "-1"])), 2);
    assert_eq!(
        code(&run(&[
            "stochastic",
            "-c",
            c,
            "-o",
            dir.path().join("x.pmg").to_str().unwrap()
        ])),
        2
    );
    let out = bin()
        .args(["report", "-c", c])
        .env("POLARMIG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let garbage = dir.path().join("garbage.pmg");
    std::fs::write(&garbage, b"not a container").unwrap();
    assert_eq!(
        code(&run(&[
            "preprocess",
            "-i",
            garbage.to_str().unwrap(),
            "-o",
            dir.path().join("y.pmg").to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn fully_polarized_source_is_a_numerical_failure() {
    // Rank-one source coherency cannot be divided out in preprocessing.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.source.coherency = CMat2::new(
        C64::from(1.0),
        C64::from(0.0),
        C64::from(0.0),
        C64::from(0.0),
    );
    let c = write_config(dir.path(), &cfg);
    let coh = dir.path().join("coh.pmg");
    assert_eq!(
        code(&run(&[
            "simulate",
            "-c",
            c.to_str().unwrap(),
            "-o",
            coh.to_str().unwrap()
        ])),
        0
    );
    let out = run(&[
        "preprocess",
        "-i",
        coh.to_str().unwrap(),
        "-o",
        dir.path().join("pre.pmg").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small());
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("coh{threads}.pmg"));
        let st = bin()
            .args([
                "simulate",
                "-c",
                cfg.to_str().unwrap(),
                "-o",
                out.to_str().unwrap(),
            ])
            .env("POLARMIG_THREADS", threads)
            .status()
            .unwrap();
        assert!(st.success());
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

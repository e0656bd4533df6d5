use std::path::Path;
use std::process::{Command, Output};

use dmlink::dbp::{plan_steps, EffectiveLength, StepsPerSpan};
use dmlink::experiment::{DomainChoice, EqualizerSpec, ExperimentConfig, Preset, Setup};

fn dmlink(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dmlink")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn config_prints_the_preset() {
    let text = stdout(&dmlink(&["config", "--preset", "full", "--setup", "B"]));
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, ExperimentConfig::preset(Setup::B, Preset::Full));
}

#[test]
fn bad_setup_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_dmlink"))
        .args(["config", "--setup", "Z"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn complexity_of_a_saved_plan() {
    let dir = tempfile::tempdir().unwrap();
    let link = ExperimentConfig::preset(Setup::A, Preset::Full).link.build().unwrap();
    let plan = plan_steps(&link, StepsPerSpan::new(1, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
    let path = dir.path().join("plan.txt");
    plan.save(&path).unwrap();
    let text = stdout(&dmlink(&["complexity", "--plan", path.to_str().unwrap()]));
    assert!(text.contains("steps           28"), "{text}");
    let fd: f64 = text
        .lines()
        .find(|l| l.starts_with("RMpS (FD)"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!((fd - 3319.0).abs() < 1.0, "{fd}");
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::preset(Setup::A, Preset::Desk);
    cfg.link.n_spans = 2;
    cfg.signal.n_symbols = 1 << 11;
    cfg.launch_powers_dbm = vec![-2.0, 0.0];
    cfg.equalizers = vec![
        EqualizerSpec::Le,
        EqualizerSpec::Dbp { stps: StepsPerSpan::new(1, 1).unwrap(), domain: DomainChoice::Fd },
    ];
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let run = stdout(&dmlink(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]));
    for f in ["results.csv", "manifest.json", "config.toml", "summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(out.join("plans").read_dir().unwrap().count() == 2);
    assert!(run.contains("LE") && run.contains("DBP-FD"), "{run}");

    let saved = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.seed, 3);

    let report = stdout(&dmlink(&["report", "--in", out.to_str().unwrap()]));
    assert_eq!(report, run);
}

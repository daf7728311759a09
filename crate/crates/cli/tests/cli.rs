use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hevtl_cli::{Manifest, EXIT_CONFIG, EXIT_INCOMPATIBLE, MANIFEST_FILE, OUTPUT_DIR_ENV};

/// Small budgets so each command finishes in seconds.
const FAST: &str = r#"
seed = 3

[hyper]
horizon_k = 64
minibatch_z = 32
n_actors = 2
n_epochs = 2
n_iterations = 3

[protocol]
expert_iterations = 3
student_iterations = 2
episodes = 3

[cycles.synthetic]
count = 3
duration = 60.0
seed = 1

[partition]
n_source = 2
targets = ["urban-1"]

[experiment]
seeds = [1, 2]
counts = [1, 2]

[oracle]
soc_nodes = 41
torque_nodes = 8
ladder = [21, 41]
"#;

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{FAST}\n{extra}")).unwrap();
    path
}

fn hevtl(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hevtl"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove(OUTPUT_DIR_ENV)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn empty_config_trains_on_synthetic_cycles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = tmp.path().join("out");
    ok(&hevtl(&cfg, &out, &["train"]));
    for f in [
        "checkpoint.json",
        "training_log.csv",
        "updates.csv",
        "eval.csv",
        MANIFEST_FILE,
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn bad_cycle_path_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[cycles]\nfiles = [\"no/such/cycle.csv\"]\n");
    let o = hevtl(&cfg, &tmp.path().join("out"), &["train"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("cycles.files[0]") && err.contains("no/such/cycle.csv"),
        "{err}"
    );
}

#[test]
fn train_and_eval_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&hevtl(&cfg, &a, &["train"]));
    ok(&hevtl(&cfg, &b, &["train"]));
    assert_eq!(manifest(&a), manifest(&b));
    assert_eq!(
        std::fs::read(a.join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.join(MANIFEST_FILE)).unwrap()
    );

    let ck = a.join("checkpoint.json");
    let ck = ck.to_str().unwrap();
    let (e1, e2) = (tmp.path().join("e1"), tmp.path().join("e2"));
    let s1 = ok(&hevtl(&cfg, &e1, &["eval", "--checkpoint", ck, "--cycle", "urban-1"]));
    let s2 = ok(&hevtl(&cfg, &e2, &["eval", "--checkpoint", ck, "--cycle", "urban-1"]));
    assert_eq!(s1, s2);
    assert_eq!(manifest(&e1), manifest(&e2));

    let traj = std::fs::read_to_string(e1.join("trajectory.csv")).unwrap();
    let rows = traj.lines().count() - 1;
    let cycle = hevtl::cycles::synthesize_cycle(1, 60.0, hevtl::Profile::Urban).unwrap();
    assert_eq!(rows, cycle.len());

    let eval = std::fs::read_to_string(e1.join("eval.csv")).unwrap();
    let reward: f64 = eval.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(reward.is_finite() && reward < 0.0);
}

#[test]
fn tl_writes_two_curves_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("tl");
    ok(&hevtl(&cfg, &out, &["ablate", "tl"]));
    for seed in [1, 2] {
        for mode in ["cold", "warm"] {
            let text = std::fs::read_to_string(out.join(format!("curve_seed{seed}_{mode}.csv"))).unwrap();
            assert_eq!(text.lines().next(), Some("episode,total_reward,normalized,value_loss"));
            assert_eq!(text.lines().count(), 1 + 3);
        }
    }
    assert!(out.join("expert.json").is_file());
}

#[test]
fn oracle_with_checkpoint_reports_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let train = tmp.path().join("train");
    ok(&hevtl(&cfg, &train, &["train"]));
    let ck = train.join("checkpoint.json");
    let out = tmp.path().join("dp");
    let stdout = ok(&hevtl(
        &cfg,
        &out,
        &[
            "oracle",
            "solve",
            "--cycle",
            "urban-1",
            "--grid",
            "41x8",
            "--checkpoint",
            ck.to_str().unwrap(),
        ],
    ));
    assert!(stdout.contains("gap="), "{stdout}");
    let csv = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    let fields: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(4)
        .map(|f| f.parse().unwrap())
        .collect();
    let (j_star, policy, gap) = (fields[0], fields[2], fields[3]);
    assert!((gap - 100.0 * (policy - j_star) / j_star).abs() <= 1e-9);

    let dp = std::fs::read_to_string(out.join("dp_trajectory.csv")).unwrap();
    let ev = tmp.path().join("ev");
    ok(&hevtl(
        &cfg,
        &ev,
        &["eval", "--checkpoint", ck.to_str().unwrap(), "--cycle", "urban-1"],
    ));
    let tr = std::fs::read_to_string(ev.join("trajectory.csv")).unwrap();
    assert_eq!(dp.lines().next(), tr.lines().next());
    assert_eq!(dp.lines().count(), tr.lines().count());
}

#[test]
fn output_dir_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_hevtl"))
        .arg("--config")
        .arg(&cfg)
        .args(["cycles", "synth", "--seed", "4", "--duration", "60"])
        .env(OUTPUT_DIR_ENV, &out)
        .output()
        .unwrap();
    ok(&o);
    let written = out.join("urban-4.csv");
    assert!(written.is_file());
    let v = Command::new(env!("CARGO_BIN_EXE_hevtl"))
        .args(["cycles", "validate"])
        .arg(&written)
        .output()
        .unwrap();
    assert!(ok(&v).contains("ok"));
}

#[test]
fn incompatible_checkpoint_exits_13() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let train = tmp.path().join("train");
    ok(&hevtl(&cfg, &train, &["train"]));
    let other = write_config(tmp.path(), "[protocol.layout]\nhidden = [8]\n");
    let o = hevtl(
        &other,
        &tmp.path().join("x"),
        &[
            "eval",
            "--checkpoint",
            train.join("checkpoint.json").to_str().unwrap(),
            "--cycle",
            "urban-1",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(EXIT_INCOMPATIBLE),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn experiment_csvs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    for args in [&["ablate", "source-count"][..], &["ablate", "target-inclusion"][..]] {
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        ok(&hevtl(&cfg, &a, args));
        ok(&hevtl(&cfg, &b, args));
        let ma = manifest(&a);
        assert_eq!(ma, manifest(&b));
        assert!(ma.artifacts.iter().any(|e| e.file == "summary.csv"));
        std::fs::remove_dir_all(&a).unwrap();
        std::fs::remove_dir_all(&b).unwrap();
    }
}

use std::path::Path;
use std::process::{Command, Output};

use ensparse::config::{Config, ConfigBuilder, RESOLVED_CONFIG};
use ensparse::experiments as ex;
use ensparse::formats::{encode_model, read_model, ModelFile};
use ensparse::table::{self, Table};

const SMALL: &[&str] = &[
    "corpus.synthetic_images=3",
    "corpus.synthetic_size=32",
    "corpus.max_patches=200",
    "train.k=12",
    "train.l=3",
    "train.altopt_iterations=3",
    "recover.synthetic_size=32",
    "recover.seeds=2",
    "recover.measurements=[8, 16]",
];

fn ensparse(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ensparse"));
    cmd.current_dir(dir).env_remove("ENSPARSE_SEED").arg(args[0]);
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd.args(&args[1..]).output().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_config(extra: &[&str]) -> Config {
    let mut b = ConfigBuilder::new();
    for s in SMALL.iter().chain(extra) {
        b = b.set(s).unwrap();
    }
    b.build().unwrap()
}

#[test]
fn train_writes_model_trace_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(ensparse(dir.path(), &["train", "--method", "boostex", "--seed", "4", "--out", "run"]));
    let run = dir.path().join("run");
    let trace = Table::read(table::TRAIN_TRACE, &run.join("train_trace.csv")).unwrap();
    assert_eq!(trace.rows.len(), 3);
    assert_eq!(trace.column("round"), vec!["1", "2", "3"]);
    let betas: f64 = trace.numbers("beta").unwrap().iter().sum();
    assert!((betas - 1.0).abs() < 1e-9);

    let resolved: Config = toml::from_str(&std::fs::read_to_string(run.join(RESOLVED_CONFIG)).unwrap()).unwrap();
    assert_eq!(resolved.seed, 4);
    assert_eq!(resolved.train.k, 12);

    let expected = {
        let c = small_config(&["train.method=\"boostex\""]);
        let set = ex::patch_corpus(&c.corpus).unwrap();
        ex::train_model(&c.train, &set, None, 4).unwrap().model
    };
    let written = read_model(&run.join("model.ens")).unwrap();
    assert_eq!(encode_model(&written), encode_model(&expected));
}

#[test]
fn recover_counts_rows_per_image_method_and_n() {
    let dir = tempfile::tempdir().unwrap();
    ok(ensparse(dir.path(), &["train", "--method", "exmld", "--model", "mld.ens", "--out", "t", "--set", "train.levels=2"]));
    assert!(matches!(read_model(&dir.path().join("mld.ens")).unwrap(), ModelFile::Multilevel(_)));
    ok(ensparse(dir.path(), &["recover", "--model", "mld.ens", "--out", "r", "--set", "recover.save_images=true"]));
    let t = Table::read(table::RECOVERY, &dir.path().join("r/recovery.csv")).unwrap();
    // 2 images x 2 measurement counts x (2 seeds + mean)
    assert_eq!(t.rows.len(), 12);
    assert_eq!(t.column("seed").iter().filter(|s| **s == "mean").count(), 4);
    assert!(t.numbers("psnr_db").unwrap().iter().all(|p| p.is_finite() && *p > 5.0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/recovery_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
    let images = std::fs::read_dir(dir.path().join("r/images")).unwrap().count();
    assert_eq!(images, 4);
}

#[test]
fn recover_trains_boosted_models_per_measurement_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(ensparse(dir.path(), &["recover", "--method", "boostkm", "--out", "r"]));
    let t = Table::read(table::RECOVERY, &dir.path().join("r/recovery.csv")).unwrap();
    assert_eq!(t.rows.len(), 12);
    assert!(t.column("method").iter().all(|m| *m == "boostkm"));
}

#[test]
fn cluster_and_oracle_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(ensparse(
        dir.path(),
        &["cluster", "--out", "c", "--set", "cluster.seeds=2", "--set", "cluster.synthetic.per_class=30"],
    ));
    let per_seed = Table::read(table::CLUSTER, &dir.path().join("c/cluster.csv")).unwrap();
    assert_eq!(per_seed.rows.len(), 8);
    let summary = Table::read(table::CLUSTER_SUMMARY, &dir.path().join("c/cluster_summary.csv")).unwrap();
    assert_eq!(summary.column("method"), vec!["l1graph", "randexav", "boostex", "boostkm"]);
    for a in per_seed.numbers("accuracy").unwrap() {
        assert!((0.5..=1.0).contains(&a));
    }

    ok(ensparse(
        dir.path(),
        &["oracle-demo", "--out", "o", "--set", "oracle.ks=[8, 16]", "--set", "oracle.l=3", "--set", "oracle.method_k=8", "--set", "oracle.test_patches=40"],
    ));
    let cases = Table::read(table::ORACLE_CASES, &dir.path().join("o/oracle_cases.csv")).unwrap();
    assert_eq!(cases.rows.len(), 8);
    let methods = Table::read(table::ORACLE_METHODS, &dir.path().join("o/oracle_methods.csv")).unwrap();
    assert_eq!(methods.rows.len(), 3);
}

#[test]
fn superres_reports_bicubic_and_model_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        "superres.k=24",
        "superres.l=2",
        "superres.synthetic_training_images=2",
        "superres.synthetic_training_size=32",
        "superres.synthetic_images=2",
        "superres.synthetic_size=32",
        "superres.max_pairs=600",
        "superres.back_projection_iterations=3",
    ];
    let mut args = vec!["superres", "--method", "randexav", "--out", "s"];
    for s in &sets {
        args.extend(["--set", s]);
    }
    ok(ensparse(dir.path(), &args));
    let t = Table::read(table::SUPERRES, &dir.path().join("s/superres.csv")).unwrap();
    assert_eq!(t.column("method"), vec!["bicubic", "randexav", "bicubic", "randexav"]);
    assert!(matches!(read_model(&dir.path().join("s/model.ens")).unwrap(), ModelFile::Paired(_)));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/superres_summary.json")).unwrap()).unwrap();
    for (_, trace) in summary["back_projection"].as_array().unwrap().iter().map(|v| (v[0].clone(), v[1].clone())) {
        let obj: Vec<f64> = trace.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(obj.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| ensparse(dir.path(), args).status.code().unwrap();
    assert_eq!(code(&["train", "--set", "train.nonsense=1"]), 2);
    assert_eq!(code(&["train", "--config", "missing.toml"]), 2);
    assert_eq!(code(&["recover", "--model", "missing.ens"]), 3);
    std::fs::write(dir.path().join("junk.ens"), b"ENSMxx").unwrap();
    assert_eq!(code(&["recover", "--model", "junk.ens"]), 3);
    assert_eq!(code(&["cluster", "--set", "cluster.dataset=\"none.json\""]), 3);
    assert_eq!(code(&["train", "--set", "train.k=5000"]), 3);
    assert_eq!(code(&["train", "--set", "train.method=\"boostkm\"", "--set", "train.q=2", "--set", "train.s=2"]), 2);
    assert_eq!(code(&["train", "--method", "l1graph"]), 2);
    let out = ensparse(dir.path(), &["train", "--set", "train.nonsense=1"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn environment_overrides_file_but_not_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = 1\n[train]\nl = 2\nk = 10\n").unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ensparse"));
    cmd.current_dir(dir.path())
        .env("ENSPARSE_SEED", "6")
        .env("ENSPARSE_TRAIN__L", "4")
        .args(["train", "--config", "c.toml", "--method", "randexav", "--seed", "9", "--out", "e"]);
    for s in SMALL.iter().filter(|s| !s.starts_with("train.")) {
        cmd.args(["--set", s]);
    }
    ok(cmd.output().unwrap());
    let resolved: Config = toml::from_str(&std::fs::read_to_string(dir.path().join("e").join(RESOLVED_CONFIG)).unwrap()).unwrap();
    assert_eq!((resolved.seed, resolved.train.l, resolved.train.k), (9, 4, 10));
    let trace = Table::read(table::TRAIN_TRACE, &dir.path().join("e/train_trace.csv")).unwrap();
    assert_eq!(trace.rows.len(), 4);
}

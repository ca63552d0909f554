use std::path::PathBuf;

use clap::Parser;
use ensparse::cli::{resolve, Cli};
use ensparse::config::{Config, ConfigBuilder, Method};

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("ensparse").chain(args.iter().copied())).unwrap()
}

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn defaults_validate_and_round_trip_through_toml() {
    let c = Config::default();
    c.validate().unwrap();
    let text = c.to_toml();
    let back: Config = toml::from_str(&text).unwrap();
    assert_eq!(back, c);
}

#[test]
fn file_then_env_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "seed = 3\nworkers = 2\n[train]\nk = 32\nl = 4\nmethod = \"boostex\"\n").unwrap();
    let p = path.to_str().unwrap();

    let c = resolve(&cli(&["train", "--config", p]), env(&[])).unwrap();
    assert_eq!((c.seed, c.workers, c.train.k, c.train.l, c.train.method), (3, 2, 32, 4, Method::BoostEx));

    let e = env(&[("ENSPARSE_SEED", "5"), ("ENSPARSE_TRAIN__K", "48"), ("OTHER_SEED", "9")]);
    let c = resolve(&cli(&["train", "--config", p]), e.clone()).unwrap();
    assert_eq!((c.seed, c.train.k, c.train.l), (5, 48, 4));

    let args = ["train", "--config", p, "--seed", "8", "--set", "train.k=16", "--method", "randexav", "--out", "runs/x"];
    let c = resolve(&cli(&args), e).unwrap();
    assert_eq!((c.seed, c.train.k, c.train.method), (8, 16, Method::RandExAv));
    assert_eq!(c.out, PathBuf::from("runs/x"));
}

#[test]
fn method_and_model_flags_target_the_command() {
    let c = resolve(&cli(&["cluster", "--method", "l1graph"]), env(&[])).unwrap();
    assert_eq!(c.cluster.methods, vec![Method::L1Graph]);
    let c = resolve(&cli(&["recover", "--model", "m.ens"]), env(&[])).unwrap();
    assert_eq!(c.recover.models, vec![PathBuf::from("m.ens")]);
    let c = resolve(&cli(&["superres", "--model", "p.ens", "--method", "randexav"]), env(&[])).unwrap();
    assert_eq!(c.superres.model, Some(PathBuf::from("p.ens")));
    assert_eq!(c.superres.method, Method::RandExAv);
    let c = resolve(&cli(&["train", "--model", "out.ens"]), env(&[])).unwrap();
    assert_eq!(c.model, Some(PathBuf::from("out.ens")));
    assert_eq!(resolve(&cli(&["cluster", "--model", "m.ens"]), env(&[])).unwrap_err().exit_code(), 2);
}

#[test]
fn unknown_keys_and_bad_values_are_config_errors() {
    for bad in ["train.kk=3", "train.k=0", "train.lambda_train=-1", "bogus=1", "cluster.methods=[\"altopt\"]"] {
        let err = ConfigBuilder::new().set(bad).unwrap().build().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{bad}: {err}");
    }
    let err = resolve(&cli(&["train"]), env(&[("ENSPARSE_TRAIN__NOPE", "1")])).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(ConfigBuilder::new().set("no_equals_sign").is_err());
    assert!(Cli::try_parse_from(["ensparse", "train", "--method", "pca"]).is_err());
}

#[test]
fn string_overrides_need_no_quotes() {
    let c = ConfigBuilder::new().set("out=results/a").unwrap().set("image_format=png").unwrap().build().unwrap();
    assert_eq!(c.out, PathBuf::from("results/a"));
    assert_eq!(c.image_format.extension(), "png");
}

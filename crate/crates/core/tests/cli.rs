use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advtrain::cli::Cli;
use advtrain::data::{load_checkpoint, load_dataset, read_jsonl, sha256_hex, Split};
use advtrain::degrade::DegradeSpec;
use advtrain::rng::Purpose;
use advtrain::training::MetricRecord;
use clap::CommandFactory;

const CONFIG: &str = r#"
seed = 5

[model]
preset = "desk"

[synth]
size = 16

[train]
batch_size = 4
pretrain_iterations = 4
tune_iterations = 4
submodel_lr = 0.01
log_every = 2

[video]
frames = 3
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_advtrain"));
    c.env_remove("ADVTRAIN_SEED").env_remove("ADVTRAIN_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Temp dir holding `cfg.toml` and a small synthetic dataset in `data/`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    ok(
        dir.path(),
        &[
            "synth", "--out", "data", "--train", "12", "--test", "8", "--config", "cfg.toml",
        ],
    );
    dir
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn check_manifest(dir: &Path) {
    let text = String::from_utf8(read(dir.join("MANIFEST"))).unwrap();
    assert!(text.contains("resolved-config.toml"));
    for line in text.lines() {
        let (hash, file) = line.split_once("  ").unwrap();
        assert_eq!(sha256_hex(&read(dir.join(file))), hash, "{file}");
    }
}

#[test]
fn help_lists_every_flag() {
    let cli = Cli::command();
    for sub in cli.get_subcommands() {
        let out = ok(Path::new("."), &[sub.get_name(), "--help"]);
        let help = String::from_utf8(out.stdout).unwrap();
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(
                    help.contains(&format!("--{long}")),
                    "{} help lacks --{long}",
                    sub.get_name()
                );
            }
        }
        for global in ["--seed", "--threads", "--config"] {
            assert!(help.contains(global), "{} help lacks {global}", sub.get_name());
        }
    }
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let dir = workspace();
    let d = dir.path();
    let missing = run(d, &["eval", "--ckpt", "missing.ckpt", "--data", "data"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.ckpt"));
    let no_beta = run(
        d,
        &[
            "train", "--data", "data", "--out", "r", "--mode", "arap", "--alpha", "lowres:2", "--config", "cfg.toml",
        ],
    );
    assert_eq!(no_beta.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_beta.stderr).contains("--beta"));
    assert_eq!(run(d, &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(d, &["degrade", "--in", "data", "--out", "x", "--spec", "lowres:0"])
            .status
            .code(),
        Some(1)
    );
    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(
        run(d, &["eval", "--ckpt", "junk.ckpt", "--data", "data"]).status.code(),
        Some(2)
    );
    assert_eq!(run(d, &["--version"]).status.code(), Some(0));
}

#[test]
fn degrade_matches_library_and_is_reproducible() {
    let dir = workspace();
    let d = dir.path();
    ok(
        d,
        &[
            "degrade", "--in", "data", "--out", "same", "--spec", "none", "--seed", "2",
        ],
    );
    assert_eq!(
        read(d.join("data/train.images.tensor")),
        read(d.join("same/train.images.tensor"))
    );
    let spec = "lowres:2|gauss-noise:25";
    ok(
        d,
        &["degrade", "--in", "data", "--out", "a", "--spec", spec, "--seed", "2"],
    );
    ok(
        d,
        &["degrade", "--in", "data", "--out", "b", "--spec", spec, "--seed", "2"],
    );
    for f in ["train.images.tensor", "test.images.tensor", "manifest.json"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    check_manifest(&d.join("a"));
    let hq = load_dataset(&d.join("data"), Split::Train).unwrap();
    let parsed: DegradeSpec = spec.parse().unwrap();
    let lib = hq.degraded(&parsed, 2, Purpose::TrainDegrade).unwrap();
    let cli = load_dataset(&d.join("a"), Split::Train).unwrap();
    assert!(cli.images.bit_eq(&lib.images));
    assert_eq!(cli.degrade.as_deref(), Some(spec));
}

#[test]
fn train_writes_loadable_reproducible_outputs() {
    let dir = workspace();
    let d = dir.path();
    let args = |out: &'static str| {
        vec![
            "train",
            "--data",
            "data",
            "--out",
            out,
            "--mode",
            "rap",
            "--alpha",
            "saltpepper:0.5",
            "--config",
            "cfg.toml",
            "--threads",
            "1",
        ]
    };
    ok(d, &args("r1"));
    ok(d, &args("r2"));
    for f in ["model.ckpt", "submodel.ckpt", "eval.json"] {
        assert_eq!(read(d.join("r1").join(f)), read(d.join("r2").join(f)), "{f}");
    }
    let strip = |p: PathBuf| -> Vec<MetricRecord> {
        read_jsonl::<MetricRecord>(&p)
            .unwrap()
            .iter()
            .map(MetricRecord::without_time)
            .collect()
    };
    let m1 = strip(d.join("r1/metrics.jsonl"));
    assert!(!m1.is_empty());
    assert_eq!(m1, strip(d.join("r2/metrics.jsonl")));
    check_manifest(&d.join("r1"));

    let (model, _) = load_checkpoint::<f64>(&d.join("r1/model.ckpt")).unwrap();
    let (_, sub_id) = load_checkpoint::<f64>(&d.join("r1/submodel.ckpt")).unwrap();
    assert_eq!(model.provenance.parent.as_deref(), Some(sub_id.as_str()));
    let snapshot = read(d.join("r1/resolved-config.toml"));
    assert_eq!(
        model.provenance.config_hash.as_deref(),
        Some(sha256_hex(&snapshot).as_str())
    );

    // the seed may also come from the environment
    let env = bin()
        .current_dir(d)
        .args(args("r3"))
        .env("ADVTRAIN_SEED", "5")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert_eq!(read(d.join("r1/model.ckpt")), read(d.join("r3/model.ckpt")));
    let other = bin()
        .current_dir(d)
        .args(args("r4"))
        .env("ADVTRAIN_SEED", "6")
        .output()
        .unwrap();
    assert!(other.status.success());
    assert_ne!(read(d.join("r1/model.ckpt")), read(d.join("r4/model.ckpt")));
}

#[test]
fn arap_with_beta_equal_alpha_is_rap() {
    let dir = workspace();
    let d = dir.path();
    let common = ["--data", "data", "--alpha", "blur:1", "--config", "cfg.toml"];
    ok(d, &[&["train", "--out", "rap", "--mode", "rap"][..], &common].concat());
    ok(
        d,
        &[
            &["train", "--out", "arap", "--mode", "arap", "--beta", "blur:1"][..],
            &common,
        ]
        .concat(),
    );
    let (a, _) = load_checkpoint::<f64>(&d.join("rap/model.ckpt")).unwrap();
    let (b, _) = load_checkpoint::<f64>(&d.join("arap/model.ckpt")).unwrap();
    assert!(a.bit_eq(&b));
}

#[test]
fn fused_checkpoint_passes_constant_clip_check() {
    let dir = workspace();
    let d = dir.path();
    ok(
        d,
        &[
            "train", "--data", "data", "--out", "hq", "--mode", "hq", "--config", "cfg.toml",
        ],
    );
    ok(
        d,
        &[
            "make-videos",
            "--data",
            "data",
            "--split",
            "test",
            "--out",
            "vids",
            "--config",
            "cfg.toml",
        ],
    );
    for kind in ["early", "slow"] {
        let out = format!("fused-{kind}");
        ok(
            d,
            &[
                "fuse",
                "--ckpt",
                "hq/model.ckpt",
                "--kind",
                kind,
                "--T",
                "1",
                "--out",
                &out,
            ],
        );
        let ckpt = format!("{out}/fused.ckpt");
        let eval = ok(
            d,
            &[
                "video-eval",
                "--ckpt",
                &ckpt,
                "--videos",
                "vids",
                "--single",
                "hq/model.ckpt",
            ],
        );
        let v: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
        assert!(v["constant_clip_max_diff"].as_f64().unwrap() <= 1e-10);
        assert_eq!(v["report"]["videos"], 8);
        let trained = format!("vt-{kind}");
        ok(
            d,
            &[
                "video-train",
                "--ckpt",
                &ckpt,
                "--videos",
                "vids",
                "--out",
                &trained,
                "--config",
                "cfg.toml",
            ],
        );
        check_manifest(&d.join(&trained));
    }
    // a single-frame model is not a video model
    assert_eq!(
        run(d, &["video-eval", "--ckpt", "hq/model.ckpt", "--videos", "vids"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn eval_visualize_and_transfer_run() {
    let dir = workspace();
    let d = dir.path();
    ok(
        d,
        &[
            "train",
            "--data",
            "data",
            "--out",
            "r",
            "--mode",
            "rap",
            "--alpha",
            "saltpepper:0.3",
            "--config",
            "cfg.toml",
        ],
    );
    let e = ok(
        d,
        &[
            "eval",
            "--ckpt",
            "r/model.ckpt",
            "--data",
            "data",
            "--degrade",
            "saltpepper:0.3",
            "--out",
            "ev",
            "--config",
            "cfg.toml",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(v["samples"], 8);
    check_manifest(&d.join("ev"));
    ok(
        d,
        &[
            "visualize",
            "--ckpt",
            "r/model.ckpt",
            "--ms-ckpt",
            "r/submodel.ckpt",
            "--images",
            "data",
            "--count",
            "2",
            "--out",
            "vis",
        ],
    );
    let pgm = read(d.join("vis/001_strip.pgm"));
    assert!(pgm.starts_with(b"P5\n50 16\n255\n"));
    assert_eq!(pgm.len(), 13 + 50 * 16);

    ok(
        d,
        &[
            "degrade", "--in", "data", "--out", "lq", "--spec", "lowres:2", "--seed", "1",
        ],
    );
    let plan = r#"
[model]
preset = "desk"
[plan]
source = "shapes"
target = "shapes-lowres"
beta_prime = "lowres:4"
believed_alpha = "lowres:2"
k = 3
k_p = 2
[plan.source_config]
batch_size = 4
pretrain_iterations = 3
tune_iterations = 3
[plan.target_config]
batch_size = 4
pretrain_iterations = 3
tune_iterations = 3
"#;
    std::fs::write(d.join("plan.toml"), plan).unwrap();
    ok(
        d,
        &[
            "transfer",
            "--plan",
            "plan.toml",
            "--source",
            "data",
            "--target",
            "lq",
            "--out",
            "tr",
            "--sweep",
            "2",
        ],
    );
    let table: serde_json::Value = serde_json::from_slice(&read(d.join("tr/table.json"))).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 4);
    let (m, _) = load_checkpoint::<f64>(&d.join("tr/model.ckpt")).unwrap();
    let (_, src_id) = load_checkpoint::<f64>(&d.join("tr/source.ckpt")).unwrap();
    assert_eq!(m.provenance.parent.as_deref(), Some(src_id.as_str()));
    assert_eq!(m.provenance.notes["beta_prime"], "lowres:4");
    assert!(m.provenance.notes.contains_key("source_config"));
    let sweep: serde_json::Value = serde_json::from_slice(&read(d.join("tr/sweep.json"))).unwrap();
    assert_eq!(sweep.as_array().unwrap().len(), 2);
    check_manifest(&d.join("tr"));

    std::fs::write(d.join("bad.toml"), plan.replace("lowres:4", "lowres:2")).unwrap();
    assert_eq!(
        run(
            d,
            &["transfer", "--plan", "bad.toml", "--source", "data", "--target", "lq", "--out", "x"]
        )
        .status
        .code(),
        Some(1)
    );
}

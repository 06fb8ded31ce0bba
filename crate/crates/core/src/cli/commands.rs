use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{to_toml, ModelConfig, PlanFile, Precision, RunConfig};
use super::*;
use crate::data::cifar::{load_cifar10, CIFAR_CLASSES};
use crate::data::pgm::{tile, write_pnm};
use crate::data::store::write_json;
use crate::data::synth::SHAPE_NAMES;
use crate::data::{
    load_checkpoint, load_dataset, load_manifest, load_videos, save_checkpoint, save_dataset, save_videos, sha256_hex,
    synth_shapes, DatasetManifest, LabeledDataset, MetricsLog,
};
use crate::error::Error;
use crate::network::{build_submodel, ModelSpec, WeightedModel};
use crate::rng::Purpose;
use crate::tensor::Real;
use crate::training::{evaluate, reconstruct, train_method, visualize_features, StageReport};
use crate::transfer::{beta_sweep, compare_transfer, descending_betas};
use crate::video::{evaluate_videos, extract_clips, fuse, jittered_videos, train_video, Video, VideoModel};

pub const SNAPSHOT_FILE: &str = "resolved-config.toml";
pub const MANIFEST_NAME: &str = "MANIFEST";

/// Tolerance of the constant-clip check in `video-eval`.
pub const FUSION_TOLERANCE: f64 = 1e-10;

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a, cfg, cmd),
        Command::ImportCifar(a) => import_cifar(a, cfg, cmd),
        Command::Degrade(a) => degrade(a, cfg, cmd),
        Command::Train(a) => match cfg.precision {
            Precision::F32 => train::<f32>(a, cfg, cmd),
            Precision::F64 => train::<f64>(a, cfg, cmd),
        },
        Command::Eval(a) => eval(a, cfg, cmd),
        Command::Fuse(a) => fuse_cmd(a, cfg, cmd),
        Command::MakeVideos(a) => make_videos(a, cfg, cmd),
        Command::VideoTrain(a) => match cfg.precision {
            Precision::F32 => video_train::<f32>(a, cfg, cmd),
            Precision::F64 => video_train::<f64>(a, cfg, cmd),
        },
        Command::VideoEval(a) => video_eval(a, cfg, cmd),
        Command::Transfer(a) => transfer(a, cfg, cmd),
        Command::Visualize(a) => visualize(a, cfg, cmd),
    }
}

#[derive(Serialize)]
struct Snapshot<'a> {
    command: &'a str,
    args: &'a Command,
    config: &'a RunConfig,
}

/// Creates the output directory and returns the config hash.
fn begin(out: &Path, cmd: &Command, cfg: &RunConfig) -> Result<String> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let text = to_toml(&Snapshot {
        command: cmd.name(),
        args: cmd,
        config: cfg,
    })?;
    let path = out.join(SNAPSHOT_FILE);
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn walk(dir: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let r = rel.join(e.file_name());
        if e.path().is_dir() {
            walk(&e.path(), &r, out)?;
        } else if r != Path::new(MANIFEST_NAME) {
            out.push(r);
        }
    }
    Ok(())
}

/// Writes `MANIFEST`: one `<sha256>  <path>` line per file under `out`.
pub fn write_manifest(out: &Path) -> Result<()> {
    let mut files = Vec::new();
    walk(out, Path::new(""), &mut files)?;
    let mut text = String::new();
    for f in files {
        let p = out.join(&f);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        text.push_str(&format!("{}  {}\n", sha256_hex(&bytes), f.display()));
    }
    let path = out.join(MANIFEST_NAME);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn splits_of(dir: &Path) -> Result<(DatasetManifest, Vec<LabeledDataset>)> {
    let m = load_manifest(dir)?;
    let mut out = Vec::new();
    for name in m.splits.keys() {
        out.push(load_dataset(dir, name.parse()?)?);
    }
    Ok((m, out))
}

fn resolve_model(cfg: &RunConfig, arch: Option<&str>, ds: &LabeledDataset) -> Result<ModelSpec> {
    let mc = match (arch, &cfg.model) {
        (Some(p), _) => ModelConfig::Preset { preset: p.to_string() },
        (None, Some(m)) => m.clone(),
        (None, None) => return Err(Error::Config("no architecture: pass --arch or set [model]".into())),
    };
    mc.resolve(ds.image_shape(), ds.classes)
}

fn degrade_purpose(split: Split) -> Purpose {
    match split {
        Split::Train => Purpose::TrainDegrade,
        Split::Test => Purpose::TestDegrade,
    }
}

fn write_metrics(path: &Path, reports: &[StageReport]) -> Result<()> {
    let log = MetricsLog::new(path);
    // start fresh so re-runs produce identical files
    if path.exists() {
        std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    for r in reports {
        log.append_all(&r.records)?;
    }
    Ok(())
}

macro_rules! say_line {
    ($($arg:tt)*) => {
        say(format!("{}\n", format_args!($($arg)*)))
    };
}

/// Writes to stdout; a closed pipe (`advtrain ... | head`) is not an error.
fn say(text: impl AsRef<str>) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_ref().as_bytes());
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    say(text);
    Ok(())
}

fn synth(a: &SynthArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    begin(&a.out, cmd, cfg)?;
    let p = &cfg.synth;
    let train = synth_shapes(p, a.train, cfg.seed(), Split::Train)?;
    let test = synth_shapes(p, a.test, cfg.seed(), Split::Test)?;
    let manifest = DatasetManifest {
        name: "synth-shapes".into(),
        splits: BTreeMap::new(),
        image_shape: [1, p.size, p.size],
        class_names: SHAPE_NAMES[..p.classes].iter().map(|s| s.to_string()).collect(),
        source_format: "synth-shapes".into(),
        degrade: None,
        seed: Some(cfg.seed()),
    };
    let m = save_dataset(&a.out, &manifest, &[&train, &test])?;
    write_manifest(&a.out)?;
    say_line!(
        "wrote {} ({} train, {} test)",
        a.out.display(),
        m.splits["train"],
        m.splits["test"]
    );
    Ok(())
}

fn import_cifar(a: &ImportCifarArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    begin(&a.out, cmd, cfg)?;
    let limit = a.limit.unwrap_or(usize::MAX);
    let train = load_cifar10(&a.input, Split::Train)?.take(limit)?;
    let test = load_cifar10(&a.input, Split::Test)?.take(limit)?;
    let manifest = DatasetManifest {
        name: "cifar10".into(),
        splits: BTreeMap::new(),
        image_shape: [1, 32, 32],
        class_names: CIFAR_CLASSES.iter().map(|s| s.to_string()).collect(),
        source_format: "cifar10-binary".into(),
        degrade: None,
        seed: None,
    };
    save_dataset(&a.out, &manifest, &[&train, &test])?;
    write_manifest(&a.out)?;
    say_line!("wrote {} ({} train, {} test)", a.out.display(), train.len(), test.len());
    Ok(())
}

fn degrade(a: &DegradeArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    a.spec.validate()?;
    let (mut m, splits) = splits_of(&a.input)?;
    begin(&a.out, cmd, cfg)?;
    let lq: Vec<LabeledDataset> = splits
        .iter()
        .map(|d| d.degraded(&a.spec, cfg.seed(), degrade_purpose(d.split)))
        .collect::<Result<_>>()?;
    m.degrade = Some(match m.degrade.take() {
        Some(prev) => format!("{prev}|{}", a.spec),
        None => a.spec.to_string(),
    });
    m.seed = Some(cfg.seed());
    save_dataset(&a.out, &m, &lq.iter().collect::<Vec<_>>())?;
    write_manifest(&a.out)?;
    say_line!("wrote {} with `{}`", a.out.display(), a.spec);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    mode: Method,
    checkpoint: String,
    submodel: Option<String>,
    test: Option<crate::training::EvalReport>,
}

fn train<R: Real>(a: &TrainArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let mode = a
        .mode
        .or(cfg.method.mode)
        .ok_or_else(|| Error::InvalidArgument("--mode is required".into()))?;
    let alpha = a.alpha.clone().or_else(|| cfg.method.alpha.clone());
    let beta = a.beta.clone().or_else(|| cfg.method.beta.clone());
    let alpha = match (mode, alpha) {
        (Method::Hq, a) => a.unwrap_or(DegradeSpec::Identity),
        (_, Some(a)) => a,
        (m, None) => return Err(Error::InvalidArgument(format!("--mode {} needs --alpha", m.as_str()))),
    };
    if mode == Method::Arap && beta.is_none() {
        return Err(Error::InvalidArgument("--mode arap needs --beta".into()));
    }
    let k = a.k.unwrap_or(cfg.method.k);
    let k_p = a.kp.unwrap_or(cfg.method.k_p);
    let hq = load_dataset(&a.data, Split::Train)?;
    let spec = resolve_model(cfg, a.arch.as_deref(), &hq)?;
    let hash = begin(&a.out, cmd, cfg)?;
    log::info!("training {} ({}) on {} images", spec.name, mode.as_str(), hq.len());
    let mut out = train_method::<R>(&spec, &hq, mode, &alpha, beta.as_ref(), k, k_p, &cfg.train)?;
    let mut submodel = None;
    if let Some(pre) = &mut out.pretrained {
        pre.model.provenance.config_hash = Some(hash.clone());
        let id = save_checkpoint(&a.out.join("submodel.ckpt"), &pre.model)?;
        out.model.provenance.parent = Some(id.clone());
        submodel = Some(id);
    }
    out.model.provenance.config_hash = Some(hash);
    out.model.provenance.iteration = cfg.train.tune_iterations as u64;
    let id = save_checkpoint(&a.out.join("model.ckpt"), &out.model)?;
    write_metrics(&a.out.join("metrics.jsonl"), &out.reports)?;
    let test = if load_manifest(&a.data)?.splits.contains_key("test") {
        let mut t = load_dataset(&a.data, Split::Test)?;
        if mode != Method::Hq {
            t = t.degraded(&alpha, cfg.seed(), Purpose::TestDegrade)?;
        }
        let mut r = evaluate(&out.model, &t, cfg.threads())?;
        r.provenance.checkpoint = Some(id.clone());
        write_json(&a.out.join("eval.json"), &r)?;
        Some(r)
    } else {
        None
    };
    write_manifest(&a.out)?;
    print_json(&TrainSummary {
        mode,
        checkpoint: id,
        submodel,
        test,
    })
}

fn eval(a: &EvalArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let (model, id) = load_checkpoint::<f64>(&a.ckpt)?;
    let mut ds = load_dataset(&a.data, a.split)?;
    if let Some(d) = &a.degrade {
        ds = ds.degraded(d, cfg.seed(), degrade_purpose(a.split))?;
    }
    let mut r = evaluate(&model, &ds, cfg.threads())?;
    r.provenance.checkpoint = Some(id);
    if let Some(out) = &a.out {
        begin(out, cmd, cfg)?;
        write_json(&out.join("eval.json"), &r)?;
        write_manifest(out)?;
    }
    print_json(&r)
}

fn fuse_cmd(a: &FuseArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let (single, id) = load_checkpoint::<f64>(&a.ckpt)?;
    let mut vm = fuse(&single, a.kind, a.t)?;
    vm.model.provenance.parent = Some(id);
    let hash = begin(&a.out, cmd, cfg)?;
    vm.model.provenance.config_hash = Some(hash);
    let fid = save_checkpoint(&a.out.join("fused.ckpt"), &vm.model)?;
    write_manifest(&a.out)?;
    say_line!(
        "{} fusion, T={}: {} parameters, checkpoint {fid}",
        a.kind,
        a.t,
        vm.model.param_count()
    );
    Ok(())
}

fn make_videos(a: &MakeVideosArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let m = load_manifest(&a.data)?;
    let stills = load_dataset(&a.data, a.split)?;
    begin(&a.out, cmd, cfg)?;
    let videos = jittered_videos(&stills, cfg.video.frames, cfg.video.max_shift, cfg.seed())?;
    save_videos(&a.out, &format!("{}-videos", m.name), &m.class_names, &videos)?;
    write_manifest(&a.out)?;
    say_line!("wrote {} videos of {} frames", videos.len(), cfg.video.frames);
    Ok(())
}

fn video_train<R: Real>(a: &VideoTrainArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let (model, id) = load_checkpoint::<R>(&a.ckpt)?;
    let vm = VideoModel::from_model(model)?;
    let (_, videos) = load_videos(&a.videos)?;
    let hash = begin(&a.out, cmd, cfg)?;
    let (mut trained, report) = train_video(&vm, &videos, cfg.video.stride, &cfg.train)?;
    if !trained.is_symmetric() {
        return Err(Error::Data("per-frame weight groups diverged".into()));
    }
    trained.model.provenance.parent = Some(id);
    trained.model.provenance.config_hash = Some(hash);
    let vid = save_checkpoint(&a.out.join("video.ckpt"), &trained.model)?;
    write_metrics(&a.out.join("metrics.jsonl"), &[report])?;
    let r = evaluate_videos(&trained, &videos, cfg.video.stride, cfg.threads())?;
    write_json(&a.out.join("train-videos.json"), &r)?;
    write_manifest(&a.out)?;
    say_line!("checkpoint {vid}");
    print_json(&r)
}

#[derive(Serialize)]
struct VideoEvalOutput {
    report: crate::video::VideoReport,
    /// Largest logit difference between the fused model on constant clips
    /// and the single-frame model on the frame itself.
    constant_clip_max_diff: Option<f64>,
}

/// Fused logits on clips repeating one frame against single-frame logits.
fn constant_clip_diff(vm: &VideoModel<f64>, single: &WeightedModel<f64>, videos: &[Video]) -> Result<f64> {
    let mut worst = 0.0f64;
    for v in videos {
        let frame = v.frames.slice_outer(0)?;
        let still = Video::new(
            v.id,
            v.label,
            crate::tensor::Tensor::stack(&vec![frame.clone(); vm.frames()])?,
        )?;
        let clip = extract_clips(&still, vm.t, 1)?.remove(0);
        let fused = vm.model.predict(&clip.input::<f64>())?;
        let x = frame.map(|p| p / 255.0);
        worst = worst.max(fused.max_abs_diff(&single.predict(&x)?)?);
    }
    Ok(worst)
}

fn video_eval(a: &VideoEvalArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let (model, _) = load_checkpoint::<f64>(&a.ckpt)?;
    let vm = VideoModel::from_model(model)?;
    let (_, videos) = load_videos(&a.videos)?;
    let report = evaluate_videos(&vm, &videos, cfg.video.stride, cfg.threads())?;
    let diff = match &a.single {
        Some(p) => Some(constant_clip_diff(&vm, &load_checkpoint::<f64>(p)?.0, &videos)?),
        None => None,
    };
    let out = VideoEvalOutput {
        report,
        constant_clip_max_diff: diff,
    };
    if let Some(dir) = &a.out {
        begin(dir, cmd, cfg)?;
        write_json(&dir.join("video-eval.json"), &out)?;
        write_manifest(dir)?;
    }
    print_json(&out)?;
    match diff {
        Some(d) if d > FUSION_TOLERANCE => Err(Error::Data(format!(
            "fused model disagrees with the single-frame model on constant clips by {d:e}"
        ))),
        _ => Ok(()),
    }
}

fn transfer(a: &TransferArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let mut pf = PlanFile::load(&a.plan)?;
    // seeds come from the plan; thread count never changes results
    pf.plan.source_config.threads = cfg.threads();
    pf.plan.target_config.threads = cfg.threads();
    match pf.precision {
        Precision::F32 => transfer_with::<f32>(a, &pf, cfg, cmd),
        Precision::F64 => transfer_with::<f64>(a, &pf, cfg, cmd),
    }
}

fn transfer_with<R: Real>(a: &TransferArgs, pf: &PlanFile, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let plan = &pf.plan;
    plan.validate()?;
    let source = load_dataset(&a.source, Split::Train)?;
    let target = load_dataset(&a.target, Split::Train)?;
    let target_test = load_dataset(&a.target, Split::Test)?;
    let source_spec = pf.model.resolve(source.image_shape(), source.classes)?;
    let target_spec = pf.model.resolve(target.image_shape(), target.classes)?;
    let hash = begin(&a.out, cmd, cfg)?;
    std::fs::copy(&a.plan, a.out.join("plan.toml")).map_err(|e| Error::io(&a.plan, e))?;
    let mut c = compare_transfer::<R>(&source_spec, &target_spec, plan, &source, &target, &target_test)?;
    c.source_model.provenance.config_hash = Some(hash.clone());
    let src_id = save_checkpoint(&a.out.join("source.ckpt"), &c.source_model)?;
    save_checkpoint(&a.out.join("submodel.ckpt"), &c.pretrained.model)?;
    for (name, m) in &mut c.models {
        m.provenance.config_hash = Some(hash.clone());
        if name == "T-ARAP" {
            m.provenance.parent = Some(src_id.clone());
            m.provenance.notes.insert("source_model".into(), src_id.clone());
            save_checkpoint(&a.out.join("model.ckpt"), m)?;
        } else {
            save_checkpoint(&a.out.join(format!("{}.ckpt", name.to_lowercase())), m)?;
        }
    }
    write_json(&a.out.join("table.json"), &c.table)?;
    let text = c.table.to_string();
    std::fs::write(a.out.join("table.txt"), &text).map_err(|e| Error::io(&a.out, e))?;
    say(&text);
    if let Some(n) = a.sweep {
        let betas = descending_betas(&plan.beta_prime, n, plan.believed_alpha.as_ref())?;
        let points = beta_sweep::<R>(&source_spec, &target_spec, plan, &betas, &source, &target, &target_test)?;
        write_json(&a.out.join("sweep.json"), &points)?;
        for p in &points {
            say_line!("beta' {:<16} top-1 {:6.2}", p.beta_prime.to_string(), p.top1);
        }
    }
    write_manifest(&a.out)
}

fn visualize(a: &VisualizeArgs, cfg: &RunConfig, cmd: &Command) -> Result<()> {
    let (model, _) = load_checkpoint::<f64>(&a.ckpt)?;
    let (ms, _) = load_checkpoint::<f64>(&a.ms_ckpt)?;
    let note = |key: &str| -> Result<usize> {
        ms.provenance
            .notes
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| {
                Error::Data(format!(
                    "{} does not record `{key}`; is it a sub-model?",
                    a.ms_ckpt.display()
                ))
            })
    };
    let sub = build_submodel(&model.spec, note("k")?, note("k_p")?, model.spec.input[0])?;
    let mut ds = load_dataset(&a.images, a.split)?;
    if let Some(d) = &a.degrade {
        ds = ds.degraded(d, cfg.seed(), degrade_purpose(a.split))?;
    }
    begin(&a.out, cmd, cfg)?;
    for i in 0..a.count.min(ds.len()) {
        let img = ds.image(i)?;
        let f = visualize_features(&model, &ms, &sub, &img)?;
        let f_ms = reconstruct(&ms, &img)?;
        write_pnm(&a.out.join(format!("{i:03}_input.pgm")), &img)?;
        write_pnm(&a.out.join(format!("{i:03}_model.pgm")), &f)?;
        write_pnm(&a.out.join(format!("{i:03}_submodel.pgm")), &f_ms)?;
        write_pnm(&a.out.join(format!("{i:03}_strip.pgm")), &tile(&[img, f, f_ms])?)?;
    }
    write_manifest(&a.out)?;
    say_line!("wrote {} visualizations to {}", a.count.min(ds.len()), a.out.display());
    Ok(())
}

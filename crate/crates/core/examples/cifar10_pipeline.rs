//! CIFAR-10 in grayscale with 50% salt and pepper noise: LQ baseline,
//! RAP-non-joint and RAP on the full-size network at a reduced budget.
//!
//!     cargo run --release --example cifar10_pipeline -- <cifar-10-batches-bin> [iterations]
//!
//! The directory holds `data_batch_{1..5}.bin` and `test_batch.bin`.

use advtrain::data::{load_cifar10, Split};
use advtrain::degrade::DegradeSpec;
use advtrain::network::ModelSpec;
use advtrain::rng::Purpose;
use advtrain::training::{
    evaluate, joint_tune, non_joint_tune, pretrain_submodel, train_baseline, Method, TrainConfig,
};

fn main() -> advtrain::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: cifar10_pipeline <cifar-10-batches-bin> [iterations]");
        std::process::exit(1);
    };
    let iterations: usize = args
        .next()
        .map_or(20_000, |s| s.parse().expect("iterations must be an integer"));
    let dir = std::path::Path::new(&dir);
    let train = load_cifar10(dir, Split::Train)?;
    let test = load_cifar10(dir, Split::Test)?;
    println!("{} train, {} test images", train.len(), test.len());

    let alpha: DegradeSpec = "saltpepper:0.5".parse()?;
    let spec = ModelSpec::cifar10();
    let cfg = TrainConfig {
        tune_iterations: iterations,
        pretrain_iterations: iterations / 2,
        decay_interval: iterations / 2,
        seed: 1,
        ..TrainConfig::default()
    };
    let test_lq = test.degraded(&alpha, cfg.seed, Purpose::TestDegrade)?;
    let lq_train = train.degraded(&alpha, cfg.seed, Purpose::TrainDegrade)?;

    let lq = train_baseline::<f32>(&spec, &train, Method::Lq, &alpha, 3, 2, &cfg)?;
    println!("LQ             top-1 {:6.2}", evaluate(&lq.model, &test_lq, 1)?.top1);
    let pre = pretrain_submodel::<f32>(&spec, &train, &alpha, 3, 2, &cfg)?;
    let nj = non_joint_tune(&spec, &pre, &lq_train, &cfg)?;
    println!("RAP-non-joint  top-1 {:6.2}", evaluate(&nj.model, &test_lq, 1)?.top1);
    let rap = joint_tune(&spec, &pre, &lq_train, &cfg)?;
    println!("RAP            top-1 {:6.2}", evaluate(&rap.model, &test_lq, 1)?.top1);
    Ok(())
}

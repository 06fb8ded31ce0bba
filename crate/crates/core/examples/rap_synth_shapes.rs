//! LQ baseline, RAP-non-joint and RAP on desk-scale shapes with 50% salt and
//! pepper noise.
//!
//!     cargo run --release --example rap_synth_shapes -- [seed] [alpha]

use std::time::Instant;

use advtrain::degrade::DegradeSpec;
use advtrain::desk;
use advtrain::rng::Purpose;
use advtrain::training::{evaluate, joint_tune, non_joint_tune, pretrain_submodel, train_baseline, Method};

fn main() -> advtrain::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args
        .next()
        .map_or(Ok(1), |s| s.parse())
        .expect("seed must be an integer");
    let alpha: DegradeSpec = args.next().as_deref().unwrap_or("saltpepper:0.5").parse()?;

    let (train, test) = desk::datasets()?;
    let spec = desk::model_spec();
    let cfg = desk::train_config(seed);
    let test_lq = test.degraded(&alpha, seed, Purpose::TestDegrade)?;
    let lq_train = train.degraded(&alpha, seed, Purpose::TrainDegrade)?;

    let t = Instant::now();
    let lq = train_baseline::<f32>(&spec, &train, Method::Lq, &alpha, desk::K, desk::K_P, &cfg)?;
    println!(
        "LQ             top-1 {:6.2}  ({:.0}s)",
        evaluate(&lq.model, &test_lq, 1)?.top1,
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let pre = pretrain_submodel::<f32>(&spec, &train, &alpha, desk::K, desk::K_P, &cfg)?;
    println!(
        "sub-model      loss {:.5}  ({:.0}s)",
        pre.report.final_loss().unwrap_or(f64::NAN),
        t.elapsed().as_secs_f64()
    );

    let nj = non_joint_tune(&spec, &pre, &lq_train, &cfg)?;
    println!("RAP-non-joint  top-1 {:6.2}", evaluate(&nj.model, &test_lq, 1)?.top1);
    let rap = joint_tune(&spec, &pre, &lq_train, &cfg)?;
    println!("RAP            top-1 {:6.2}", evaluate(&rap.model, &test_lq, 1)?.top1);
    Ok(())
}

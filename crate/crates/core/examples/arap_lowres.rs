//! RAP with alpha = beta = lowres:2 against ARAP whose sub-model learns from
//! the severer lowres:4.
//!
//!     cargo run --release --example arap_lowres -- [seed]

use advtrain::degrade::DegradeSpec;
use advtrain::desk;
use advtrain::rng::Purpose;
use advtrain::training::{arap, evaluate, rap};

fn main() -> advtrain::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map_or(1, |s| s.parse().expect("seed must be an integer"));
    let alpha: DegradeSpec = "lowres:2".parse()?;
    let beta: DegradeSpec = "lowres:4".parse()?;

    let (train, test) = desk::datasets()?;
    let spec = desk::model_spec();
    let cfg = desk::train_config(seed);
    let test_lq = test.degraded(&alpha, seed, Purpose::TestDegrade)?;

    let r = rap::<f32>(&spec, &train, &alpha, desk::K, desk::K_P, &cfg)?;
    println!(
        "RAP({alpha})            top-1 {:6.2}",
        evaluate(&r.model, &test_lq, 1)?.top1
    );
    let a = arap::<f32>(&spec, &train, &alpha, &beta, desk::K, desk::K_P, &cfg)?;
    println!(
        "ARAP({alpha}, {beta})  top-1 {:6.2}",
        evaluate(&a.model, &test_lq, 1)?.top1
    );
    Ok(())
}

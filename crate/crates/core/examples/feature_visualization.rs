//! Pre-trains the reconstruction sub-model on salt and pepper noise, reports
//! the PSNR it recovers and renders the features of the tuned classifier
//! through the sub-model's tail.
//!
//!     cargo run --release --example feature_visualization -- [out_dir]

use std::path::PathBuf;

use advtrain::data::{normalized, tile, write_pnm};
use advtrain::degrade::DegradeSpec;
use advtrain::desk;
use advtrain::rng::Purpose;
use advtrain::training::{joint_tune, pretrain_submodel, reconstruct, visualize_features, TrainConfig};

fn main() -> advtrain::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "features".into()));
    std::fs::create_dir_all(&out).map_err(|e| advtrain::Error::io(&out, e))?;
    let alpha: DegradeSpec = "saltpepper:0.5".parse()?;
    let (train, test) = desk::datasets()?;
    let spec = desk::model_spec();
    let cfg = TrainConfig {
        tune_iterations: 500,
        ..desk::train_config(1)
    };

    let pre = pretrain_submodel::<f32>(&spec, &train, &alpha, desk::K, desk::K_P, &cfg)?;
    let tuned = joint_tune(
        &spec,
        &pre,
        &train.degraded(&alpha, cfg.seed, Purpose::TrainDegrade)?,
        &cfg,
    )?;
    let test_lq = test.degraded(&alpha, cfg.seed, Purpose::TestDegrade)?;

    let (mut psnr_in, mut psnr_out) = (0.0, 0.0);
    let n = 50;
    for i in 0..n {
        let (hq, lq) = (test.image(i)?, test_lq.image(i)?);
        psnr_in += lq.psnr(&hq)?;
        psnr_out += reconstruct(&pre.model, &lq)?.psnr(&hq)?;
    }
    println!(
        "PSNR noisy {:.2} dB, restored {:.2} dB",
        psnr_in / n as f64,
        psnr_out / n as f64
    );

    for i in 0..6 {
        let lq = test_lq.image(i)?;
        let row = [
            test.image(i)?,
            lq.clone(),
            reconstruct(&pre.model, &lq)?,
            normalized(&visualize_features(&tuned.model, &pre.model, &pre.sub, &lq)?),
        ];
        write_pnm(&out.join(format!("{i:03}.pgm")), &tile(&row)?)?;
    }
    println!(
        "clean | noisy | restored | classifier features, written to {}",
        out.display()
    );
    Ok(())
}

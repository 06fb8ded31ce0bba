//! Trains a single-frame classifier, fuses it into early and slow fusion
//! video models, checks that both agree with it on constant clips and tunes
//! them on jittered synthetic videos.
//!
//!     cargo run --release --example video_fusion -- [T]

use advtrain::desk;
use advtrain::training::{evaluate, train_from_scratch, TrainConfig};
use advtrain::video::{clip_probabilities, evaluate_videos, fuse, jittered_videos, train_video, Clip, FusionKind};
use advtrain::Tensor;

fn main() -> advtrain::Result<()> {
    let t: usize = std::env::args()
        .nth(1)
        .map_or(2, |s| s.parse().expect("T must be an integer"));
    let (train, test) = desk::datasets()?;
    let cfg = TrainConfig {
        tune_iterations: 1000,
        ..desk::train_config(1)
    };
    let single = train_from_scratch::<f64>(&desk::model_spec(), &train, &cfg)?.model;
    println!("single frame   top-1 {:6.2}", evaluate(&single, &test, 1)?.top1);

    let train_videos = jittered_videos(&train.take(400)?, 8, 2, 11)?;
    let test_videos = jittered_videos(&test, 8, 2, 12)?;
    let frame = test.image(0)?.to_tensor();
    let clip = Clip {
        video: 0,
        start: 0,
        frames: Tensor::from_fn(&[2 * t + 1, 1, 32, 32], |i| frame.data()[i % frame.len()]),
    };
    let reference = advtrain::nn::softmax(
        single
            .predict(&advtrain::training::image_to_input(&test.image(0)?))?
            .data(),
    );

    for kind in [FusionKind::Early, FusionKind::Slow] {
        let vm = fuse(&single, kind, t)?;
        let fused = &clip_probabilities(&vm, std::slice::from_ref(&clip), 1)?[0];
        let gap = fused
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let before = evaluate_videos(&vm, &test_videos, 1, 1)?;
        let (tuned, _) = train_video(
            &vm,
            &train_videos,
            1,
            &TrainConfig {
                tune_iterations: 300,
                ..cfg.clone()
            },
        )?;
        let after = evaluate_videos(&tuned, &test_videos, 1, 1)?;
        println!(
            "{:<5} T={t}  constant-clip gap {gap:.1e}  video top-1 {:6.2} -> {:6.2}  symmetric {}",
            kind.to_string(),
            before.video_top1,
            after.video_top1,
            tuned.is_symmetric()
        );
    }
    Ok(())
}

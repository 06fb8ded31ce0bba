//! Seed-derived random streams.
//!
//! Every consumer of randomness asks for a stream identified by
//! `(seed, purpose, index)`. Streams are independent ChaCha8 instances, so the
//! value drawn for image 17 never depends on how many images were processed
//! before it or on which thread processed them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// What a random stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Degradation of training images (shared by the `y` and `z` sets).
    TrainDegrade,
    TestDegrade,
    ModelInit,
    SubModelInit,
    /// Decoder layers of the layer-wise autoencoder baseline.
    AutoencoderInit,
    PretrainShuffle,
    TuneShuffle,
    Dropout,
    Synth,
    SynthTest,
    VideoJitter,
    Occlusion,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::TrainDegrade => 0x01,
            Purpose::TestDegrade => 0x02,
            Purpose::ModelInit => 0x03,
            Purpose::SubModelInit => 0x04,
            Purpose::AutoencoderInit => 0x05,
            Purpose::PretrainShuffle => 0x06,
            Purpose::TuneShuffle => 0x07,
            Purpose::Dropout => 0x08,
            Purpose::Synth => 0x09,
            Purpose::SynthTest => 0x0a,
            Purpose::VideoJitter => 0x0b,
            Purpose::Occlusion => 0x0c,
            Purpose::Custom(v) => 0x1000 + v,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(purpose.tag())));
    rng.set_stream(index);
    rng
}

/// Stream for a sub-index inside an indexed stream, e.g. (epoch, sample).
pub fn stream2(seed: u64, purpose: Purpose, major: u64, minor: u64) -> Rng {
    stream(seed, purpose, mix64(major).wrapping_add(minor))
}

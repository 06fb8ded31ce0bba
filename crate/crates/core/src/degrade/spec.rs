//! Degradation specifications and their text form.
//!
//! A spec is written as `name:param` and chained left to right with `|`:
//!
//! ```text
//! lowres:2                  bicubic down/up by a factor of 2
//! saltpepper:0.5            50% of pixel positions (also `saltpepper:50%`)
//! blur:2  blur:2,9          Gaussian std 2, kernel 9 (default 9)
//! gauss-noise:25            additive Gaussian noise, std 25
//! occlude  occlude:x0,y0,x1,y1[,smin,smax[,vmin,vmax]]
//! none                      identity
//! lowres:2|gauss-noise:25   mixed, applied in order
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blur::degrade_gaussian_blur;
use super::image::Image;
use super::noise::{degrade_gaussian_noise, degrade_salt_pepper};
use super::occlusion::{degrade_occlude, OcclusionParams};
use super::resize::degrade_lowres;
use crate::error::{Error, Result};

pub const DEFAULT_BLUR_KERNEL: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DegradeSpec {
    Identity,
    LowRes { factor: u32 },
    SaltPepper { fraction: f64 },
    GaussianBlur { std: f64, kernel_size: usize },
    GaussianNoise { std: f64 },
    Occlusion(OcclusionParams),
    Mixed(Vec<DegradeSpec>),
}

/// Where the degradation enters the observation model `Y = F X + e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdverseKind {
    /// Modelled by the point-spread function (low resolution, blur).
    Convolutional,
    /// Modelled by the additive term (noise, occlusion).
    Additive,
    None,
    Mixed,
}

impl DegradeSpec {
    pub fn kind(&self) -> AdverseKind {
        match self {
            DegradeSpec::Identity => AdverseKind::None,
            DegradeSpec::LowRes { .. } | DegradeSpec::GaussianBlur { .. } => AdverseKind::Convolutional,
            DegradeSpec::SaltPepper { .. } | DegradeSpec::GaussianNoise { .. } | DegradeSpec::Occlusion(_) => {
                AdverseKind::Additive
            }
            DegradeSpec::Mixed(_) => AdverseKind::Mixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::DegradeSpec {
            spec: self.to_string(),
            reason,
        };
        match self {
            DegradeSpec::Identity => Ok(()),
            DegradeSpec::LowRes { factor } if *factor == 0 => Err(bad("factor must be at least 1".into())),
            DegradeSpec::LowRes { .. } => Ok(()),
            DegradeSpec::SaltPepper { fraction } if !(0.0..=1.0).contains(fraction) => {
                Err(bad(format!("fraction {fraction} outside [0, 1]")))
            }
            DegradeSpec::SaltPepper { .. } => Ok(()),
            DegradeSpec::GaussianBlur { std, kernel_size } => {
                if !(*std > 0.0) {
                    Err(bad(format!("blur std {std} must be positive")))
                } else if kernel_size % 2 == 0 {
                    Err(bad(format!("blur kernel size {kernel_size} must be odd")))
                } else {
                    Ok(())
                }
            }
            DegradeSpec::GaussianNoise { std } if !(*std >= 0.0) => Err(bad(format!("noise std {std} is negative"))),
            DegradeSpec::GaussianNoise { .. } => Ok(()),
            DegradeSpec::Occlusion(p) => p.validate(),
            DegradeSpec::Mixed(list) if list.is_empty() => Err(bad("mixed list is empty".into())),
            DegradeSpec::Mixed(list) => list.iter().try_for_each(|s| s.validate()),
        }
    }

    /// Applies the degradation; mixed specs run left to right on one RNG stream.
    pub fn apply<G: Rng + ?Sized>(&self, img: &Image, rng: &mut G) -> Result<Image> {
        match self {
            DegradeSpec::Identity => Ok(img.clone()),
            DegradeSpec::LowRes { factor } => degrade_lowres(img, *factor),
            DegradeSpec::SaltPepper { fraction } => degrade_salt_pepper(img, *fraction, rng),
            DegradeSpec::GaussianBlur { std, kernel_size } => degrade_gaussian_blur(img, *std, *kernel_size),
            DegradeSpec::GaussianNoise { std } => degrade_gaussian_noise(img, *std, rng),
            DegradeSpec::Occlusion(p) => {
                p.validate()?;
                degrade_occlude(img, p.eye_box_pixels(img), rng, p)
            }
            DegradeSpec::Mixed(list) => {
                if list.is_empty() {
                    return Err(Error::DegradeSpec {
                        spec: String::new(),
                        reason: "mixed list is empty".into(),
                    });
                }
                list.iter().try_fold(img.clone(), |acc, s| s.apply(&acc, rng))
            }
        }
    }

    /// True if `self` is at least as severe as `other`: same operator chain with
    /// every adverse factor greater than or equal.
    pub fn at_least_as_severe_as(&self, other: &DegradeSpec) -> bool {
        use DegradeSpec::*;
        match (self, other) {
            (Identity, Identity) => true,
            (LowRes { factor: a }, LowRes { factor: b }) => a >= b,
            (SaltPepper { fraction: a }, SaltPepper { fraction: b }) => a >= b,
            (GaussianBlur { std: a, .. }, GaussianBlur { std: b, .. }) => a >= b,
            (GaussianNoise { std: a }, GaussianNoise { std: b }) => a >= b,
            (Occlusion(a), Occlusion(b)) => a.size_range[1] >= b.size_range[1],
            (Mixed(a), Mixed(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.at_least_as_severe_as(y)),
            _ => false,
        }
    }
}

fn parse_f64(spec: &str, v: &str) -> Result<f64> {
    let (v, scale) = match v.strip_suffix('%') {
        Some(p) => (p, 0.01),
        None => (v, 1.0),
    };
    v.trim()
        .parse::<f64>()
        .map(|x| x * scale)
        .map_err(|_| Error::DegradeSpec {
            spec: spec.to_string(),
            reason: format!("`{v}` is not a number"),
        })
}

fn parse_one(spec: &str, item: &str) -> Result<DegradeSpec> {
    let item = item.trim();
    let (name, args) = match item.split_once(':') {
        Some((n, a)) => (n.trim(), a.split(',').map(str::trim).collect::<Vec<_>>()),
        None => (item, Vec::new()),
    };
    let err = |reason: &str| Error::DegradeSpec {
        spec: spec.to_string(),
        reason: format!("{item}: {reason}"),
    };
    let nums = args.iter().map(|a| parse_f64(spec, a)).collect::<Result<Vec<_>>>()?;
    let parsed = match (name.to_ascii_lowercase().as_str(), nums.as_slice()) {
        ("none" | "identity", []) => DegradeSpec::Identity,
        ("lowres", [f]) => {
            if f.fract() != 0.0 || *f < 1.0 {
                return Err(err("factor must be a positive integer"));
            }
            DegradeSpec::LowRes { factor: *f as u32 }
        }
        ("saltpepper" | "salt-pepper" | "sp", [f]) => DegradeSpec::SaltPepper { fraction: *f },
        ("blur", [s]) => DegradeSpec::GaussianBlur {
            std: *s,
            kernel_size: DEFAULT_BLUR_KERNEL,
        },
        ("blur", [s, k]) => {
            if k.fract() != 0.0 || *k < 1.0 {
                return Err(err("kernel size must be a positive integer"));
            }
            DegradeSpec::GaussianBlur {
                std: *s,
                kernel_size: *k as usize,
            }
        }
        ("gauss-noise" | "noise", [s]) => DegradeSpec::GaussianNoise { std: *s },
        ("occlude", rest) => {
            let mut p = OcclusionParams::default();
            match rest {
                [] => {}
                [x0, y0, x1, y1, more @ ..] => {
                    p.eye_box = [*x0, *y0, *x1, *y1];
                    match more {
                        [] => {}
                        [a, b] => p.size_range = [*a, *b],
                        [a, b, c, d] => {
                            p.size_range = [*a, *b];
                            p.value_range = [*c, *d];
                        }
                        _ => return Err(err("expected 4, 6 or 8 occlusion parameters")),
                    }
                }
                _ => return Err(err("expected 4, 6 or 8 occlusion parameters")),
            }
            DegradeSpec::Occlusion(p)
        }
        (
            "none" | "identity" | "lowres" | "saltpepper" | "salt-pepper" | "sp" | "blur" | "gauss-noise" | "noise",
            _,
        ) => return Err(err("wrong number of parameters")),
        _ => return Err(err("unknown degradation")),
    };
    Ok(parsed)
}

impl FromStr for DegradeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        if parts.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::DegradeSpec {
                spec: s.to_string(),
                reason: "empty component".into(),
            });
        }
        let spec = if parts.len() == 1 {
            parse_one(s, parts[0])?
        } else {
            DegradeSpec::Mixed(parts.iter().map(|p| parse_one(s, p)).collect::<Result<_>>()?)
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DegradeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegradeSpec::Identity => write!(f, "none"),
            DegradeSpec::LowRes { factor } => write!(f, "lowres:{factor}"),
            DegradeSpec::SaltPepper { fraction } => write!(f, "saltpepper:{fraction}"),
            DegradeSpec::GaussianBlur { std, kernel_size } => write!(f, "blur:{std},{kernel_size}"),
            DegradeSpec::GaussianNoise { std } => write!(f, "gauss-noise:{std}"),
            DegradeSpec::Occlusion(p) => {
                let [x0, y0, x1, y1] = p.eye_box;
                let [a, b] = p.size_range;
                let [c, d] = p.value_range;
                write!(f, "occlude:{x0},{y0},{x1},{y1},{a},{b},{c},{d}")
            }
            DegradeSpec::Mixed(list) => {
                for (i, s) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    // nested chains flatten in text form
                    write!(f, "{s}")?;
                }
                Ok(())
            }
        }
    }
}

impl TryFrom<String> for DegradeSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DegradeSpec> for String {
    fn from(s: DegradeSpec) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::blur::degrade_gaussian_blur;
    use crate::degrade::resize::degrade_lowres;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_oneof, proptest, Just, ProptestConfig, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_paper_recipes() {
        assert_eq!(
            "lowres:2".parse::<DegradeSpec>().unwrap(),
            DegradeSpec::LowRes { factor: 2 }
        );
        assert_eq!(
            "saltpepper:50%".parse::<DegradeSpec>().unwrap(),
            DegradeSpec::SaltPepper { fraction: 0.5 }
        );
        assert_eq!(
            "blur:2".parse::<DegradeSpec>().unwrap(),
            DegradeSpec::GaussianBlur {
                std: 2.0,
                kernel_size: 9
            }
        );
        assert_eq!(
            "lowres:2|gauss-noise:25".parse::<DegradeSpec>().unwrap(),
            DegradeSpec::Mixed(vec![
                DegradeSpec::LowRes { factor: 2 },
                DegradeSpec::GaussianNoise { std: 25.0 }
            ])
        );
        assert!(matches!(
            "occlude".parse::<DegradeSpec>().unwrap(),
            DegradeSpec::Occlusion(_)
        ));
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "lowres",
            "lowres:1.5",
            "blur:2,8",
            "saltpepper:1.5",
            "foo:1",
            "lowres:2|",
            "occlude:1,2",
        ] {
            assert!(bad.parse::<DegradeSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn taxonomy() {
        assert_eq!(DegradeSpec::LowRes { factor: 2 }.kind(), AdverseKind::Convolutional);
        assert_eq!(
            "blur:2".parse::<DegradeSpec>().unwrap().kind(),
            AdverseKind::Convolutional
        );
        assert_eq!(
            "saltpepper:0.5".parse::<DegradeSpec>().unwrap().kind(),
            AdverseKind::Additive
        );
        assert_eq!(
            "gauss-noise:25".parse::<DegradeSpec>().unwrap().kind(),
            AdverseKind::Additive
        );
        assert_eq!("occlude".parse::<DegradeSpec>().unwrap().kind(), AdverseKind::Additive);
    }

    #[test]
    fn severity_ordering() {
        let a: DegradeSpec = "lowres:2".parse().unwrap();
        let b: DegradeSpec = "lowres:4".parse().unwrap();
        assert!(b.at_least_as_severe_as(&a) && a.at_least_as_severe_as(&a) && !a.at_least_as_severe_as(&b));
        let blur: DegradeSpec = "blur:5".parse().unwrap();
        assert!(!blur.at_least_as_severe_as(&a));
    }

    fn test_image(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(1, 16, 16, (0..256).map(|_| rng.gen_range(20.0..230.0)).collect()).unwrap()
    }

    #[test]
    fn single_element_mixed_equals_operator() {
        let img = test_image(1);
        for s in ["saltpepper:0.3", "lowres:2", "gauss-noise:10", "blur:1.5,5"] {
            let one: DegradeSpec = s.parse().unwrap();
            let mixed = DegradeSpec::Mixed(vec![one.clone()]);
            let a = one.apply(&img, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = mixed.apply(&img, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b, "{s}");
        }
    }

    #[test]
    fn trivial_chain_is_identity() {
        let img = test_image(2);
        let spec: DegradeSpec = "lowres:1|gauss-noise:0".parse().unwrap();
        assert_eq!(spec.apply(&img, &mut ChaCha8Rng::seed_from_u64(3)).unwrap(), img);
    }

    #[test]
    fn chain_equals_manual_composition() {
        let img = test_image(3);
        let spec: DegradeSpec = "lowres:2|blur:2".parse().unwrap();
        let got = spec.apply(&img, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let manual = degrade_gaussian_blur(&degrade_lowres(&img, 2).unwrap(), 2.0, 9).unwrap();
        assert_eq!(got, manual);
        let spec: DegradeSpec = "saltpepper:0.2|gauss-noise:5".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let got = spec.apply(&img, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = DegradeSpec::SaltPepper { fraction: 0.2 }.apply(&img, &mut rng).unwrap();
        let manual = DegradeSpec::GaussianNoise { std: 5.0 }.apply(&step, &mut rng).unwrap();
        assert_eq!(got, manual);
    }

    fn arb_spec() -> impl Strategy<Value = DegradeSpec> {
        let leaf = prop_oneof![
            Just(DegradeSpec::Identity),
            (1u32..5).prop_map(|factor| DegradeSpec::LowRes { factor }),
            (0.0f64..=1.0).prop_map(|fraction| DegradeSpec::SaltPepper { fraction }),
            (0.1f64..6.0, 0usize..5).prop_map(|(std, k)| DegradeSpec::GaussianBlur {
                std,
                kernel_size: 2 * k + 1
            }),
            (0.0f64..40.0).prop_map(|std| DegradeSpec::GaussianNoise { std }),
            Just(DegradeSpec::Occlusion(OcclusionParams::default())),
        ];
        prop_oneof![
            leaf.clone(),
            prop::collection::vec(leaf, 2..4).prop_map(DegradeSpec::Mixed),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn text_form_round_trips(spec in arb_spec()) {
            let back: DegradeSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn preserves_dims_and_range(spec in arb_spec(), seed in 0u64..1000) {
            let img = test_image(seed);
            let out = spec.apply(&img, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(out.same_dims(&img));
            prop_assert!(out.in_range());
            let again = spec.apply(&img, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out, again);
        }
    }
}

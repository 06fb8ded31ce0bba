//! Declarative architectures for the recognition model `M` and the
//! reconstruction sub-model `M_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dropout rate attached to fully connected layers.
pub const FC_DROPOUT: f64 = 0.5;
/// Kernel size of the final reconstruction layer of a sub-model.
pub const TAIL_KERNEL: usize = 5;

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// Stride 1, zero padding, output keeps the spatial size. With `groups > 1`
    /// input and output channels split into independent blocks.
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        groups: usize,
    },
    FullyConnected {
        out_units: usize,
    },
    Relu,
    MaxPool2x2,
    Dropout {
        rate: f64,
    },
}

impl LayerKind {
    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerKind::Conv {
            out_channels,
            kernel,
            groups: 1,
        }
    }

    pub fn fc(out_units: usize) -> Self {
        LayerKind::FullyConnected { out_units }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::FullyConnected { .. })
    }
}

/// Weight and bias shapes of one parametric layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamShape {
    /// Index into [`ModelSpec::layers`].
    pub layer: usize,
    pub weights: Vec<usize>,
    pub bias: Vec<usize>,
    pub fan_in: usize,
}

impl ParamShape {
    pub fn count(&self) -> usize {
        self.weights.iter().product::<usize>() + self.bias.iter().product::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerKind>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, input: [usize; 3], layers: Vec<LayerKind>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            input,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Convolutions with ReLU, then fully connected layers each preceded by
    /// dropout, with ReLU between them and linear logits.
    pub fn classifier(
        name: impl Into<String>,
        input: [usize; 3],
        convs: &[(usize, usize)],
        fcs: &[usize],
        dropout: f64,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for &(n, c) in convs {
            layers.push(LayerKind::conv(n, c));
            layers.push(LayerKind::Relu);
        }
        for (j, &m) in fcs.iter().enumerate() {
            if dropout > 0.0 {
                layers.push(LayerKind::Dropout { rate: dropout });
            }
            layers.push(LayerKind::fc(m));
            if j + 1 < fcs.len() {
                layers.push(LayerKind::Relu);
            }
        }
        Self::new(name, input, layers)
    }

    /// 32x32 grayscale CIFAR-10: 64@9, 32@5, 20@5, fc 10.
    pub fn cifar10() -> Self {
        Self::classifier("cifar10", [1, 32, 32], &[(64, 9), (32, 5), (20, 5)], &[10], FC_DROPOUT).expect("valid preset")
    }

    /// 64x64 face identification over 123 identities. The occlusion variant
    /// swaps the first two layers for 16@21 and 8@1.
    pub fn msra_cfw(occlusion: bool) -> Self {
        let (first, second) = if occlusion {
            ((16, 21), (8, 1))
        } else {
            ((32, 9), (16, 5))
        };
        let convs = [first, second, (20, 4), (40, 3), (60, 3), (80, 2)];
        let name = if occlusion { "msra-cfw-occlusion" } else { "msra-cfw" };
        Self::classifier(name, [1, 64, 64], &convs, &[160, 123], FC_DROPOUT).expect("valid preset")
    }

    /// 32x32 digits: 20@5, 2x2 max pooling, 50@5, fc 500, fc 10.
    pub fn svhn() -> Self {
        let d = LayerKind::Dropout { rate: FC_DROPOUT };
        let layers = vec![
            LayerKind::conv(20, 5),
            LayerKind::Relu,
            LayerKind::MaxPool2x2,
            LayerKind::conv(50, 5),
            LayerKind::Relu,
            d.clone(),
            LayerKind::fc(500),
            LayerKind::Relu,
            d,
            LayerKind::fc(10),
        ];
        Self::new("svhn", [1, 32, 32], layers).expect("valid preset")
    }

    /// 60x60 single-frame face model for video identification.
    pub fn ytf_frame() -> Self {
        Self::classifier(
            "ytf-frame",
            [1, 60, 60],
            &[(64, 9), (32, 5), (60, 4), (80, 3)],
            &[167],
            FC_DROPOUT,
        )
        .expect("valid preset")
    }

    /// Small 32x32 network for synthetic shapes: 8@5, 8@3, pool, 8@3, pool,
    /// fc 4. Pooling sits behind conv2 and conv3 so a two-layer prefix keeps
    /// full resolution.
    pub fn desk() -> Self {
        let layers = vec![
            LayerKind::conv(8, 5),
            LayerKind::Relu,
            LayerKind::conv(8, 3),
            LayerKind::Relu,
            LayerKind::MaxPool2x2,
            LayerKind::conv(8, 3),
            LayerKind::Relu,
            LayerKind::MaxPool2x2,
            LayerKind::Dropout { rate: FC_DROPOUT },
            LayerKind::fc(4),
        ];
        Self::new("desk", [1, 32, 32], layers).expect("valid preset")
    }

    /// Same layers with a new input shape and, if it ends in a fully
    /// connected layer, `classes` outputs.
    pub fn adapted(&self, input: [usize; 3], classes: usize) -> Result<Self> {
        let mut layers = self.layers.clone();
        if let Some(LayerKind::FullyConnected { out_units }) = layers.last_mut() {
            *out_units = classes;
        }
        Self::new(self.name.clone(), input, layers)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "desk" => Self::desk(),
            "cifar10" | "cifar" => Self::cifar10(),
            "msra-cfw" | "msra" => Self::msra_cfw(false),
            "msra-cfw-occlusion" | "msra-occlusion" => Self::msra_cfw(true),
            "svhn" => Self::svhn(),
            "ytf-frame" | "ytf" => Self::ytf_frame(),
            other => return Err(Error::Config(format!("unknown architecture preset `{other}`"))),
        })
    }

    /// Activation shape before layer `i` at index `i`, and the output shape last.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.contains(&0) {
            return Err(Error::Config(format!(
                "{}: input shape {:?} has a zero dimension",
                self.name, self.input
            )));
        }
        let mut shapes = vec![self.input.to_vec()];
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            let bad = |msg: String| Error::Config(format!("{}: layer {i} ({layer:?}): {msg}", self.name));
            let next = match *layer {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    groups,
                } => {
                    if seen_fc {
                        return Err(bad("convolution after a fully connected layer".into()));
                    }
                    if out_channels == 0 || kernel == 0 {
                        return Err(bad("out_channels and kernel must be positive".into()));
                    }
                    if cur.len() != 3 {
                        return Err(bad(format!("needs a [C,H,W] input, got {cur:?}")));
                    }
                    if groups == 0 || cur[0] % groups != 0 || out_channels % groups != 0 {
                        return Err(bad(format!(
                            "groups={groups} must divide {} input and {out_channels} output channels",
                            cur[0]
                        )));
                    }
                    vec![out_channels, cur[1], cur[2]]
                }
                LayerKind::FullyConnected { out_units } => {
                    if out_units == 0 {
                        return Err(bad("out_units must be positive".into()));
                    }
                    seen_fc = true;
                    vec![out_units]
                }
                LayerKind::Relu => cur.clone(),
                LayerKind::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(bad(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    cur.clone()
                }
                LayerKind::MaxPool2x2 => {
                    if cur.len() != 3 || cur[1] % 2 != 0 || cur[2] % 2 != 0 {
                        return Err(bad(format!("2x2 pooling needs even spatial dimensions, got {cur:?}")));
                    }
                    vec![cur[0], cur[1] / 2, cur[2] / 2]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.activation_shapes().map(|_| ())
    }

    pub fn param_shapes(&self) -> Result<Vec<ParamShape>> {
        let shapes = self.activation_shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let inp = &shapes[i];
            match *layer {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    groups,
                } => {
                    let per_group = inp[0] / groups;
                    out.push(ParamShape {
                        layer: i,
                        weights: vec![out_channels, per_group, kernel, kernel],
                        bias: vec![out_channels],
                        fan_in: per_group * kernel * kernel,
                    });
                }
                LayerKind::FullyConnected { out_units } => {
                    let n: usize = inp.iter().product();
                    out.push(ParamShape {
                        layer: i,
                        weights: vec![out_units, n],
                        bias: vec![out_units],
                        fan_in: n,
                    });
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn param_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_parametric())
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of parametric layers, `d`.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.is_parametric()).count()
    }

    /// Number of convolutional layers, `d1`.
    pub fn conv_depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerKind::Conv { .. }))
            .count()
    }

    /// Width of the final layer when it is fully connected.
    pub fn classes(&self) -> Option<usize> {
        match self.layers.iter().rev().find(|l| l.is_parametric()) {
            Some(LayerKind::FullyConnected { out_units }) => Some(*out_units),
            _ => None,
        }
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.activation_shapes()?.pop().expect("non-empty"))
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(ParamShape::count).sum())
    }

    /// Layer indices that make up the first `kp` convolutions together with
    /// the ReLU right after each. Pooling and dropout are not part of the path.
    pub fn prefix_path(&self, kp: usize) -> Result<Vec<usize>> {
        if kp > self.conv_depth() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {kp} layers requested but {} has only {} convolutions",
                self.name,
                self.conv_depth()
            )));
        }
        let mut path = Vec::new();
        let mut convs = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerKind::Conv { .. } if convs < kp => {
                    path.push(i);
                    convs += 1;
                }
                LayerKind::Relu if path.last().is_some_and(|&j| j + 1 == i) && convs > 0 => path.push(i),
                LayerKind::MaxPool2x2 | LayerKind::Dropout { .. } => {}
                _ if convs == kp => break,
                _ => {}
            }
        }
        Ok(path)
    }
}

/// Sub-model `M_s`: `k` parametric layers, the first `k_p` shaped like `M`'s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModelSpec {
    pub k: usize,
    pub k_p: usize,
    pub net: ModelSpec,
}

impl SubModelSpec {
    /// Index into `net.layers` where the reconstruction tail begins.
    pub fn tail_start(&self) -> usize {
        let mut seen = 0;
        for (i, l) in self.net.layers.iter().enumerate() {
            if l.is_parametric() {
                if seen == self.k_p {
                    return i;
                }
                seen += 1;
            }
        }
        self.net.layers.len()
    }
}

/// Builds `M_s` for `model`. The prefix repeats `model`'s first `k_p`
/// convolutions (with their ReLUs). The tail has `k - k_p` convolutions: the
/// intermediate ones reuse `model`'s configuration at the same depth and are
/// followed by ReLU; the last maps to `image_channels` with a linear output.
pub fn build_submodel(model: &ModelSpec, k: usize, k_p: usize, image_channels: usize) -> Result<SubModelSpec> {
    let d1 = model.conv_depth();
    if k_p >= k {
        return Err(Error::InvalidArgument(format!(
            "k_p ({k_p}) must be smaller than k ({k})"
        )));
    }
    if k_p > d1 {
        return Err(Error::InvalidArgument(format!(
            "k_p ({k_p}) exceeds the {d1} convolutional layers of the model"
        )));
    }
    if k > d1 + 1 {
        return Err(Error::InvalidArgument(format!(
            "k ({k}) exceeds d1 + 1 = {}; the tail must stay convolutional",
            d1 + 1
        )));
    }
    if image_channels == 0 {
        return Err(Error::InvalidArgument("image_channels must be positive".into()));
    }
    let mut layers: Vec<LayerKind> = model
        .prefix_path(k_p)?
        .into_iter()
        .map(|i| model.layers[i].clone())
        .collect();
    let convs: Vec<&LayerKind> = model
        .layers
        .iter()
        .filter(|l| matches!(l, LayerKind::Conv { .. }))
        .collect();
    for conv in &convs[k_p..k - 1] {
        if let LayerKind::Conv {
            out_channels, kernel, ..
        } = conv
        {
            layers.push(LayerKind::conv(*out_channels, *kernel));
            layers.push(LayerKind::Relu);
        }
    }
    layers.push(LayerKind::conv(image_channels, TAIL_KERNEL));
    let input = [image_channels, model.input[1], model.input[2]];
    let net = ModelSpec::new(format!("{}-sub-k{k}-kp{k_p}", model.name), input, layers)?;
    Ok(SubModelSpec { k, k_p, net })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_parameter_counts() {
        // conv: n * (c_in * c * c + 1); fc: m * (in + 1)
        let cifar = ModelSpec::cifar10();
        assert_eq!((cifar.depth(), cifar.conv_depth()), (4, 3));
        let expect = 64 * (81 + 1) + 32 * (64 * 25 + 1) + 20 * (32 * 25 + 1) + 10 * (20 * 1024 + 1);
        assert_eq!(cifar.param_count().unwrap(), expect);
        assert_eq!(cifar.classes(), Some(10));

        let msra = ModelSpec::msra_cfw(false);
        assert_eq!((msra.depth(), msra.conv_depth()), (8, 6));
        let expect = 32 * (81 + 1)
            + 16 * (32 * 25 + 1)
            + 20 * (16 * 16 + 1)
            + 40 * (20 * 9 + 1)
            + 60 * (40 * 9 + 1)
            + 80 * (60 * 4 + 1)
            + 160 * (80 * 64 * 64 + 1)
            + 123 * (160 + 1);
        assert_eq!(msra.param_count().unwrap(), expect);

        let occ = ModelSpec::msra_cfw(true);
        assert_eq!((occ.depth(), occ.conv_depth()), (8, 6));
        let shapes = occ.param_shapes().unwrap();
        assert_eq!(shapes[0].weights, vec![16, 1, 21, 21]);
        assert_eq!(shapes[1].weights, vec![8, 16, 1, 1]);
        assert_eq!(shapes[2].weights, vec![20, 8, 4, 4]);

        let svhn = ModelSpec::svhn();
        assert_eq!((svhn.depth(), svhn.conv_depth()), (4, 2));
        let expect = 20 * (25 + 1) + 50 * (20 * 25 + 1) + 500 * (50 * 16 * 16 + 1) + 10 * (500 + 1);
        assert_eq!(svhn.param_count().unwrap(), expect);

        let ytf = ModelSpec::ytf_frame();
        assert_eq!((ytf.depth(), ytf.conv_depth()), (5, 4));
        let expect =
            64 * (81 + 1) + 32 * (64 * 25 + 1) + 60 * (32 * 16 + 1) + 80 * (60 * 9 + 1) + 167 * (80 * 3600 + 1);
        assert_eq!(ytf.param_count().unwrap(), expect);
    }

    #[test]
    fn presets_survive_json() {
        for name in ["cifar10", "msra-cfw", "msra-cfw-occlusion", "svhn", "ytf-frame"] {
            let spec = ModelSpec::preset(name).unwrap();
            let text = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
        }
        assert!(ModelSpec::preset("vgg16").is_err());
    }

    #[test]
    fn conv_after_fc_rejected() {
        let layers = vec![LayerKind::fc(4), LayerKind::conv(2, 3)];
        assert!(ModelSpec::new("bad", [1, 4, 4], layers).is_err());
        assert!(ModelSpec::new("odd", [1, 5, 5], vec![LayerKind::MaxPool2x2]).is_err());
    }

    #[test]
    fn cifar_submodel_shape() {
        let sub = build_submodel(&ModelSpec::cifar10(), 3, 2, 1).unwrap();
        let convs: Vec<_> = sub
            .net
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerKind::Conv {
                    out_channels, kernel, ..
                } => Some((*out_channels, *kernel)),
                _ => None,
            })
            .collect();
        assert_eq!(convs, vec![(64, 9), (32, 5), (1, 5)]);
        assert_eq!(sub.net.output_shape().unwrap(), vec![1, 32, 32]);
        assert!(matches!(sub.net.layers.last(), Some(LayerKind::Conv { .. })));
        assert_eq!(sub.tail_start(), 4);
    }

    #[test]
    fn submodel_variants_and_errors() {
        let m = ModelSpec::cifar10();
        let s = build_submodel(&m, 2, 1, 1).unwrap();
        assert_eq!(
            s.net.layers,
            vec![LayerKind::conv(64, 9), LayerKind::Relu, LayerKind::conv(1, 5)]
        );
        let s = build_submodel(&m, 3, 1, 1).unwrap();
        assert_eq!(
            s.net.layers,
            vec![
                LayerKind::conv(64, 9),
                LayerKind::Relu,
                LayerKind::conv(32, 5),
                LayerKind::Relu,
                LayerKind::conv(1, 5)
            ]
        );
        let s = build_submodel(&m, 1, 0, 1).unwrap();
        assert_eq!(s.net.layers, vec![LayerKind::conv(1, 5)]);
        assert!(build_submodel(&m, 2, 2, 1).is_err());
        assert!(build_submodel(&m, 5, 4, 1).is_err());
        assert!(build_submodel(&m, 5, 3, 1).is_err());
        assert!(build_submodel(&m, 4, 3, 1).is_ok());
    }

    #[test]
    fn pooled_prefix_skips_pool() {
        let svhn = ModelSpec::svhn();
        assert_eq!(svhn.prefix_path(1).unwrap(), vec![0, 1]);
        assert_eq!(svhn.prefix_path(2).unwrap(), vec![0, 1, 3, 4]);
        let sub = build_submodel(&svhn, 3, 2, 1).unwrap();
        assert_eq!(sub.net.output_shape().unwrap(), vec![1, 32, 32]);
    }
}

//! Layer lists and the built-in presets.

use crate::dsp::ConvSpec;
use crate::error::{Error, Result};
use crate::spectral::{multi_resolution_configs, StftConfig};

use super::MEL_HOP;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Plain or transposed convolution per `ConvSpec::transposed`.
    Conv(ConvSpec),
    LeakyRelu { slope: f32 },
    Relu,
    Tanh,
    /// Folded batch norm: per-channel scale and shift.
    AffineNorm { channels: usize },
    /// `x + conv2(lrelu(conv1(lrelu(x))))`, channel-preserving.
    Residual {
        channels: usize,
        kernel_size: usize,
        dilation: usize,
        /// Kernel of the second convolution (1 = pointwise).
        second_kernel: usize,
        slope: f32,
    },
    /// Parallel residual branches (one per kernel size, each a chain of
    /// residual blocks over `dilations`), outputs averaged.
    Mrf {
        channels: usize,
        kernels: Vec<usize>,
        dilations: Vec<usize>,
        slope: f32,
    },
    /// Average pooling; padded positions count toward the divisor.
    AvgPool { kernel: usize, stride: usize, padding: usize },
    /// Overlap-add synthesis over a frozen basis; must be the final layer.
    BasisSynthesis { window_len: usize, n_basis: usize, hop: usize },
}

impl LayerKind {
    pub fn out_channels(&self, in_channels: usize) -> usize {
        match self {
            LayerKind::Conv(spec) => spec.out_channels,
            LayerKind::BasisSynthesis { .. } => 1,
            _ => in_channels,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        match self {
            LayerKind::Conv(spec) => spec.output_len(in_len),
            LayerKind::AvgPool { kernel, stride, padding } => {
                let padded = in_len + 2 * padding;
                if padded < *kernel {
                    0
                } else {
                    (padded - kernel) / stride + 1
                }
            }
            LayerKind::BasisSynthesis { window_len, hop, .. } => {
                if in_len == 0 {
                    0
                } else {
                    (in_len - 1) * hop + window_len
                }
            }
            _ => in_len,
        }
    }

    /// Parameter count of this layer.
    pub fn params(&self) -> u64 {
        match self {
            LayerKind::Conv(spec) => {
                spec.weight_len() as u64 + if spec.bias { spec.out_channels as u64 } else { 0 }
            }
            LayerKind::AffineNorm { channels } => 2 * *channels as u64,
            LayerKind::Residual { channels, kernel_size, second_kernel, .. } => {
                let c = *channels as u64;
                c * c * *kernel_size as u64 + c + c * c * *second_kernel as u64 + c
            }
            LayerKind::Mrf { channels, kernels, dilations, .. } => {
                let c = *channels as u64;
                kernels
                    .iter()
                    .map(|&k| (c * c * k as u64 + c) * 2 * dilations.len() as u64)
                    .sum()
            }
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

/// An executable layer list with fixed input channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub name: String,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub upsampling_factors: Vec<usize>,
}

impl Graph {
    /// Channel count flowing out of the last layer.
    pub fn output_channels(&self) -> usize {
        self.layers.iter().fold(self.input_channels, |c, l| l.kind.out_channels(c))
    }

    /// Verifies channel chaining and structural rules.
    pub fn validate(&self) -> Result<()> {
        let mut channels = self.input_channels;
        for (i, layer) in self.layers.iter().enumerate() {
            match &layer.kind {
                LayerKind::Conv(spec) => {
                    if spec.in_channels != channels {
                        return Err(Error::shape(
                            format!("layer {}", layer.name),
                            format!("{} input channels", spec.in_channels),
                            channels,
                        ));
                    }
                }
                LayerKind::AffineNorm { channels: c }
                | LayerKind::Residual { channels: c, .. }
                | LayerKind::Mrf { channels: c, .. } => {
                    if *c != channels {
                        return Err(Error::shape(
                            format!("layer {}", layer.name),
                            format!("{c} channels"),
                            channels,
                        ));
                    }
                }
                LayerKind::BasisSynthesis { n_basis, .. } => {
                    if *n_basis != channels {
                        return Err(Error::shape(
                            format!("layer {}", layer.name),
                            format!("{n_basis} weight channels"),
                            channels,
                        ));
                    }
                    if i != self.layers.len() - 1 {
                        return Err(Error::InvalidArgument(format!(
                            "basis synthesis layer {} must be last",
                            layer.name
                        )));
                    }
                }
                _ => {}
            }
            channels = layer.kind.out_channels(channels);
        }
        Ok(())
    }

    /// The basis-synthesis layer, when this is a basis-decomposition graph.
    pub fn synthesis_layer(&self) -> Option<(usize, usize, usize)> {
        self.layers.iter().find_map(|l| match l.kind {
            LayerKind::BasisSynthesis { window_len, n_basis, hop } => {
                Some((window_len, n_basis, hop))
            }
            _ => None,
        })
    }

    pub fn transposed_conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(&l.kind, LayerKind::Conv(s) if s.transposed))
            .count()
    }

    /// Human-readable layer listing for audit.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "graph {} (input channels {})", self.name, self.input_channels);
        let _ = writeln!(s, "upsampling factors {:?}", self.upsampling_factors);
        let mut channels = self.input_channels;
        for layer in &self.layers {
            let out = layer.kind.out_channels(channels);
            let desc = match &layer.kind {
                LayerKind::Conv(c) => format!(
                    "{} {}->{} k{} s{} d{} p{}{}{}",
                    if c.transposed { "conv_transpose1d" } else { "conv1d" },
                    c.in_channels,
                    c.out_channels,
                    c.kernel_size,
                    c.stride,
                    c.dilation,
                    c.padding,
                    if c.groups > 1 { format!(" g{}", c.groups) } else { String::new() },
                    if c.bias { "" } else { " nobias" },
                ),
                LayerKind::LeakyRelu { slope } => format!("leaky_relu {slope}"),
                LayerKind::Relu => "relu".into(),
                LayerKind::Tanh => "tanh".into(),
                LayerKind::AffineNorm { channels } => format!("affine_norm {channels}"),
                LayerKind::Residual { channels, kernel_size, dilation, second_kernel, .. } => {
                    format!("residual {channels}ch k{kernel_size} d{dilation} k2:{second_kernel}")
                }
                LayerKind::Mrf { channels, kernels, dilations, .. } => {
                    format!("mrf {channels}ch kernels {kernels:?} dilations {dilations:?}")
                }
                LayerKind::AvgPool { kernel, stride, padding } => {
                    format!("avg_pool k{kernel} s{stride} p{padding}")
                }
                LayerKind::BasisSynthesis { window_len, n_basis, hop } => {
                    format!("basis_synthesis window {window_len} atoms {n_basis} hop {hop}")
                }
            };
            let _ = writeln!(s, "  {:24} {} [{} params]", layer.name, desc, layer.kind.params());
            channels = out;
        }
        let _ = writeln!(s, "total params {}", self.layers.iter().map(|l| l.kind.params()).sum::<u64>());
        s
    }
}

/// The four generator presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    BasisMelganLarge,
    BasisMelganLight,
    MelganReference,
    HifiganV1Reference,
}

impl Preset {
    pub fn all() -> [Preset; 4] {
        [
            Preset::BasisMelganLarge,
            Preset::BasisMelganLight,
            Preset::MelganReference,
            Preset::HifiganV1Reference,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::BasisMelganLarge => "basis-melgan-large",
            Preset::BasisMelganLight => "basis-melgan-light",
            Preset::MelganReference => "melgan-reference",
            Preset::HifiganV1Reference => "hifigan-v1-reference",
        }
    }

    pub fn index(&self) -> u32 {
        match self {
            Preset::BasisMelganLarge => 0,
            Preset::BasisMelganLight => 1,
            Preset::MelganReference => 2,
            Preset::HifiganV1Reference => 3,
        }
    }

    pub fn from_index(i: u32) -> Result<Self> {
        Preset::all()
            .into_iter()
            .find(|p| p.index() == i)
            .ok_or_else(|| Error::UnknownPreset(format!("preset id {i}")))
    }

    pub fn parse(s: &str) -> Result<Self> {
        Preset::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }

    /// True for graphs that predict basis weights instead of raw samples.
    pub fn is_basis(&self) -> bool {
        matches!(self, Preset::BasisMelganLarge | Preset::BasisMelganLight)
    }
}

/// Conv specs of a residual block's two convolutions; same padding rule as
/// `dsp::ResidualBlockParams`, so analyzer and executor agree exactly.
pub(crate) fn residual_conv_specs(
    channels: usize,
    kernel_size: usize,
    dilation: usize,
    second_kernel: usize,
) -> (ConvSpec, ConvSpec) {
    (
        ConvSpec::plain(channels, channels, kernel_size)
            .with_dilation(dilation)
            .with_padding(dilation * (kernel_size - 1) / 2),
        ConvSpec::plain(channels, channels, second_kernel).with_padding((second_kernel - 1) / 2),
    )
}

const N_MELS: usize = 80;
const LRELU_SLOPE: f32 = 0.2;
const HIFIGAN_SLOPE: f32 = 0.1;

/// Basis window length shared by both basis presets.
pub const BASIS_WINDOW_LEN: usize = 32;
/// Basis atom count shared by both basis presets.
pub const BASIS_N_BASIS: usize = 256;
/// Weight-frame stride in samples: two 4x upsampling stages turn one mel
/// frame into 16 weight frames, and 16 frames x 16 samples == one mel hop.
pub const BASIS_HOP: usize = 16;

struct BasisDims {
    trunk: usize,
    trunk_blocks: usize,
    mid: usize,
    mid_blocks: usize,
    narrow: usize,
    narrow_blocks: usize,
    hidden: usize,
}

/// Dilation pattern used by all residual stacks.
fn dilation_cycle(i: usize) -> usize {
    [1, 3, 9][i % 3]
}

fn conv(name: &str, spec: ConvSpec) -> LayerSpec {
    LayerSpec { name: name.into(), kind: LayerKind::Conv(spec) }
}

fn lrelu(name: &str, slope: f32) -> LayerSpec {
    LayerSpec { name: name.into(), kind: LayerKind::LeakyRelu { slope } }
}

fn residual(name: &str, channels: usize, dilation: usize, slope: f32) -> LayerSpec {
    LayerSpec {
        name: name.into(),
        kind: LayerKind::Residual { channels, kernel_size: 3, dilation, second_kernel: 1, slope },
    }
}

fn build_basis_generator(name: &str, dims: BasisDims) -> Graph {
    let mut layers = Vec::new();
    layers.push(conv(
        "pre.conv",
        ConvSpec::plain(N_MELS, dims.trunk, 7).with_padding(3),
    ));
    for i in 0..dims.trunk_blocks {
        layers.push(residual(&format!("pre.block{i}"), dims.trunk, dilation_cycle(i), LRELU_SLOPE));
    }
    layers.push(lrelu("up1.act", LRELU_SLOPE));
    layers.push(conv(
        "up1.conv",
        ConvSpec::plain(dims.trunk, dims.mid, 8).with_stride(4).with_padding(2).transposed(),
    ));
    for i in 0..dims.mid_blocks {
        layers.push(residual(&format!("up1.block{i}"), dims.mid, dilation_cycle(i), LRELU_SLOPE));
    }
    layers.push(lrelu("up2.act", LRELU_SLOPE));
    layers.push(conv(
        "up2.conv",
        ConvSpec::plain(dims.mid, dims.narrow, 8).with_stride(4).with_padding(2).transposed(),
    ));
    for i in 0..dims.narrow_blocks {
        layers.push(residual(&format!("up2.block{i}"), dims.narrow, dilation_cycle(i), LRELU_SLOPE));
    }
    // transform layer: two linear+leaky stacks, folded norm, output linear
    layers.push(conv("transform.fc1", ConvSpec::plain(dims.narrow, dims.hidden, 1)));
    layers.push(lrelu("transform.act1", LRELU_SLOPE));
    layers.push(conv("transform.fc2", ConvSpec::plain(dims.hidden, dims.hidden, 1)));
    layers.push(lrelu("transform.act2", LRELU_SLOPE));
    layers.push(LayerSpec {
        name: "transform.norm".into(),
        kind: LayerKind::AffineNorm { channels: dims.hidden },
    });
    layers.push(conv("transform.out", ConvSpec::plain(dims.hidden, BASIS_N_BASIS, 1)));
    layers.push(LayerSpec { name: "output.relu".into(), kind: LayerKind::Relu });
    layers.push(LayerSpec {
        name: "output.synthesis".into(),
        kind: LayerKind::BasisSynthesis {
            window_len: BASIS_WINDOW_LEN,
            n_basis: BASIS_N_BASIS,
            hop: BASIS_HOP,
        },
    });
    Graph {
        name: name.into(),
        input_channels: N_MELS,
        layers,
        upsampling_factors: vec![4, 4],
    }
}

fn build_conventional_generator(
    name: &str,
    initial: usize,
    ups: &[(usize, usize)], // (kernel, stride) per stage; channels halve
    blocks_per_stage: usize,
    mrf: bool,
    slope: f32,
) -> Graph {
    let mut layers = Vec::new();
    layers.push(conv("pre.conv", ConvSpec::plain(N_MELS, initial, 7).with_padding(3)));
    let mut ch = initial;
    for (i, &(k, s)) in ups.iter().enumerate() {
        let out = ch / 2;
        layers.push(lrelu(&format!("up{i}.act"), slope));
        layers.push(conv(
            &format!("up{i}.conv"),
            ConvSpec::plain(ch, out, k).with_stride(s).with_padding((k - s) / 2).transposed(),
        ));
        if mrf {
            layers.push(LayerSpec {
                name: format!("up{i}.mrf"),
                kind: LayerKind::Mrf {
                    channels: out,
                    kernels: vec![3, 7, 11],
                    dilations: vec![1, 3, 5],
                    slope,
                },
            });
        } else {
            for j in 0..blocks_per_stage {
                layers.push(residual(&format!("up{i}.block{j}"), out, dilation_cycle(j), slope));
            }
        }
        ch = out;
    }
    layers.push(lrelu("post.act", slope));
    layers.push(conv("post.conv", ConvSpec::plain(ch, 1, 7).with_padding(3)));
    layers.push(LayerSpec { name: "post.tanh".into(), kind: LayerKind::Tanh });
    Graph {
        name: name.into(),
        input_channels: N_MELS,
        layers,
        upsampling_factors: ups.iter().map(|&(_, s)| s).collect(),
    }
}

/// Builds one of the four generator presets. Channel widths of the basis
/// presets are pinned so their parameter totals land on the published sizes
/// (15.9M large, 3.3M light); the reference widths are pinned so the analyzer
/// reproduces the published per-second FLOPs under the 2-FLOPs-per-MAC
/// convention.
pub fn build_preset(preset: Preset) -> Graph {
    let g = match preset {
        Preset::BasisMelganLarge => build_basis_generator(
            preset.name(),
            BasisDims {
                trunk: 640,
                trunk_blocks: 5,
                mid: 384,
                mid_blocks: 5,
                narrow: 256,
                narrow_blocks: 4,
                hidden: 256,
            },
        ),
        Preset::BasisMelganLight => build_basis_generator(
            preset.name(),
            BasisDims {
                trunk: 320,
                trunk_blocks: 5,
                mid: 160,
                mid_blocks: 3,
                narrow: 96,
                narrow_blocks: 2,
                hidden: 128,
            },
        ),
        Preset::MelganReference => build_conventional_generator(
            preset.name(),
            512,
            &[(16, 8), (16, 8), (4, 2), (4, 2)],
            3,
            false,
            LRELU_SLOPE,
        ),
        Preset::HifiganV1Reference => build_conventional_generator(
            preset.name(),
            288,
            &[(16, 8), (16, 8), (4, 2), (4, 2)],
            0,
            true,
            HIFIGAN_SLOPE,
        ),
    };
    debug_assert!(g.validate().is_ok());
    debug_assert_eq!(
        g.upsampling_factors.iter().product::<usize>()
            * g.synthesis_layer().map_or(1, |(_, _, hop)| hop),
        MEL_HOP
    );
    g
}

/// Waveform discriminator: three identical score stacks on the input, its
/// 2x average-pooled, and 4x average-pooled versions.
#[derive(Debug, Clone)]
pub struct MultiScaleDiscriminator {
    pub subs: Vec<Graph>,
}

/// Spectrogram discriminator: one score stack per STFT resolution, fed with
/// magnitude spectrograms.
#[derive(Debug, Clone)]
pub struct MultiResolutionStftDiscriminator {
    pub subs: Vec<(StftConfig, Graph)>,
}

fn score_stack(layers: &mut Vec<LayerSpec>, in_channels: usize) {
    layers.push(conv("conv0", ConvSpec::plain(in_channels, 16, 15).with_padding(7)));
    layers.push(lrelu("act0", LRELU_SLOPE));
    let downs = [(16usize, 64usize, 4usize), (64, 256, 16), (256, 1024, 64), (1024, 1024, 256)];
    for (i, &(ci, co, g)) in downs.iter().enumerate() {
        layers.push(conv(
            &format!("conv{}", i + 1),
            ConvSpec::plain(ci, co, 41).with_stride(4).with_padding(20).with_groups(g),
        ));
        layers.push(lrelu(&format!("act{}", i + 1), LRELU_SLOPE));
    }
    layers.push(conv("conv5", ConvSpec::plain(1024, 1024, 5).with_padding(2)));
    layers.push(lrelu("act5", LRELU_SLOPE));
    layers.push(conv("conv6", ConvSpec::plain(1024, 1, 3).with_padding(1)));
}

/// Three-scale waveform discriminator.
pub fn build_msd() -> MultiScaleDiscriminator {
    let mut subs = Vec::new();
    for scale in 0..3 {
        let mut layers = Vec::new();
        for p in 0..scale {
            layers.push(LayerSpec {
                name: format!("pool{p}"),
                kind: LayerKind::AvgPool { kernel: 4, stride: 2, padding: 1 },
            });
        }
        score_stack(&mut layers, 1);
        subs.push(Graph {
            name: format!("msd.sub{scale}"),
            input_channels: 1,
            layers,
            upsampling_factors: vec![],
        });
    }
    MultiScaleDiscriminator { subs }
}

/// Spectrogram discriminator over the shared multi-resolution settings; the
/// score stack mirrors the waveform discriminator with the frequency bins as
/// input channels.
pub fn build_mfd() -> MultiResolutionStftDiscriminator {
    let subs = multi_resolution_configs()
        .into_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let mut layers = Vec::new();
            score_stack(&mut layers, cfg.bins());
            (
                cfg,
                Graph {
                    name: format!("mfd.sub{i}"),
                    input_channels: cfg.bins(),
                    layers,
                    upsampling_factors: vec![],
                },
            )
        })
        .collect();
    MultiResolutionStftDiscriminator { subs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::all() {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
            assert_eq!(Preset::from_index(p.index()).unwrap(), p);
        }
        assert!(Preset::parse("nope").is_err());
    }

    #[test]
    fn upsampling_factors_match_published_structure() {
        assert_eq!(build_preset(Preset::BasisMelganLarge).upsampling_factors, vec![4, 4]);
        assert_eq!(build_preset(Preset::BasisMelganLight).upsampling_factors, vec![4, 4]);
        assert_eq!(build_preset(Preset::MelganReference).upsampling_factors, vec![8, 8, 2, 2]);
        assert_eq!(build_preset(Preset::HifiganV1Reference).upsampling_factors, vec![8, 8, 2, 2]);
    }

    #[test]
    fn basis_presets_end_with_transform_relu_synthesis() {
        for p in [Preset::BasisMelganLarge, Preset::BasisMelganLight] {
            let g = build_preset(p);
            let n = g.layers.len();
            assert!(matches!(&g.layers[n - 3].kind, LayerKind::Conv(c) if c.kernel_size == 1));
            assert!(matches!(g.layers[n - 2].kind, LayerKind::Relu));
            assert!(matches!(g.layers[n - 1].kind, LayerKind::BasisSynthesis { .. }));
            assert_eq!(g.synthesis_layer(), Some((32, 256, 16)));
        }
    }

    #[test]
    fn transposed_stage_counts() {
        assert_eq!(build_preset(Preset::BasisMelganLarge).transposed_conv_count(), 2);
        assert_eq!(build_preset(Preset::BasisMelganLight).transposed_conv_count(), 2);
        assert_eq!(build_preset(Preset::MelganReference).transposed_conv_count(), 4);
        assert_eq!(build_preset(Preset::HifiganV1Reference).transposed_conv_count(), 4);
    }

    #[test]
    fn graphs_validate() {
        for p in Preset::all() {
            build_preset(p).validate().unwrap();
        }
        for sub in build_msd().subs {
            sub.validate().unwrap();
        }
        for (_, sub) in build_mfd().subs {
            sub.validate().unwrap();
        }
    }

    #[test]
    fn msd_has_three_scales() {
        let msd = build_msd();
        assert_eq!(msd.subs.len(), 3);
        // each extra scale adds one pooling layer
        for (i, sub) in msd.subs.iter().enumerate() {
            let pools = sub
                .layers
                .iter()
                .filter(|l| matches!(l.kind, LayerKind::AvgPool { .. }))
                .count();
            assert_eq!(pools, i);
        }
    }

    #[test]
    fn mfd_has_three_resolutions() {
        let mfd = build_mfd();
        assert_eq!(mfd.subs.len(), 3);
        for (cfg, sub) in &mfd.subs {
            assert_eq!(sub.input_channels, cfg.fft_size / 2 + 1);
        }
    }

    #[test]
    fn describe_lists_every_layer() {
        let g = build_preset(Preset::BasisMelganLight);
        let text = g.describe();
        for l in &g.layers {
            assert!(text.contains(&l.name), "missing {}", l.name);
        }
    }
}

//! Graph execution on top of the dsp kernels.

use crate::basis::{synthesize, BasisMatrix, WeightMatrix};
use crate::dsp::{
    affine_norm, conv1d_counted, conv_transpose1d_counted, leaky_relu, relu,
    residual_dilated_block_counted, tanh, FeatureMap, ResidualBlockParams,
};
use crate::error::{Error, Result};
use crate::spectral::{stft_magnitude, MagnitudeSpectrogram, MelSpectrogram};

use super::graph::{
    Graph, LayerKind, MultiResolutionStftDiscriminator, MultiScaleDiscriminator,
};
use super::weights::{validate_weights, DiscriminatorWeights, LayerWeights, ModelWeights, ResidualWeights};
use super::MEL_HOP;

/// Execution options; kernels split output channels over `threads` workers
/// and stay bit-identical for any count.
#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub threads: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// Multiply-adds and bias additions actually performed by the kernels.
/// Total FLOPs follow the fixed convention: 2 per multiply-add, 1 per bias
/// addition; activations, pooling and normalization are not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub macs: u64,
    pub bias_adds: u64,
}

impl FlopCounter {
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.bias_adds
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// Predicted nonnegative weight matrix (basis presets only).
    pub weights: Option<WeightMatrix>,
    pub waveform: Vec<f64>,
    pub flops: FlopCounter,
}

fn at_layer(name: &str, e: Error) -> Error {
    match e {
        Error::ShapeMismatch { context, expected, actual } => Error::ShapeMismatch {
            context: format!("{name} ({context})"),
            expected,
            actual,
        },
        other => Error::InvalidArgument(format!("layer {name}: {other}")),
    }
}

fn avg_pool(x: &FeatureMap, kernel: usize, stride: usize, padding: usize) -> FeatureMap {
    let padded = x.time() + 2 * padding;
    let out_len = if padded < kernel { 0 } else { (padded - kernel) / stride + 1 };
    let mut out = FeatureMap::zeros(x.channels(), out_len);
    let inv = 1.0 / kernel as f64;
    for c in 0..x.channels() {
        let row = x.row(c);
        for o in 0..out_len {
            let mut acc = 0.0f64;
            for j in 0..kernel {
                let i = o * stride + j;
                if i >= padding && i - padding < x.time() {
                    acc += f64::from(row[i - padding]);
                }
            }
            out.data_mut()[c * out_len + o] = (acc * inv) as f32;
        }
    }
    out
}

fn residual_params<'a>(
    kind: &LayerKind,
    w: &'a ResidualWeights,
) -> ResidualBlockParams<'a> {
    let (channels, kernel_size, dilation, second_kernel, slope) = match kind {
        LayerKind::Residual { channels, kernel_size, dilation, second_kernel, slope } => {
            (*channels, *kernel_size, *dilation, *second_kernel, *slope)
        }
        _ => unreachable!("residual_params on non-residual layer"),
    };
    ResidualBlockParams {
        channels,
        kernel_size,
        dilation,
        second_kernel,
        slope,
        conv_weight: &w.conv_weight,
        conv_bias: &w.conv_bias,
        second_weight: &w.second_weight,
        second_bias: &w.second_bias,
    }
}

fn run_mrf(
    x: &FeatureMap,
    channels: usize,
    kernels: &[usize],
    dilations: &[usize],
    slope: f32,
    blocks: &[ResidualWeights],
    opts: ExecOptions,
    counter: &mut FlopCounter,
) -> Result<FeatureMap> {
    let mut sum: Option<FeatureMap> = None;
    for (ki, &k) in kernels.iter().enumerate() {
        let mut branch = x.clone();
        for (di, &d) in dilations.iter().enumerate() {
            let w = &blocks[ki * dilations.len() + di];
            let params = ResidualBlockParams {
                channels,
                kernel_size: k,
                dilation: d,
                second_kernel: k,
                slope,
                conv_weight: &w.conv_weight,
                conv_bias: &w.conv_bias,
                second_weight: &w.second_weight,
                second_bias: &w.second_bias,
            };
            let (next, macs) = residual_dilated_block_counted(&branch, &params, opts.threads)?;
            counter.macs += macs;
            counter.bias_adds +=
                params.dilated_spec().bias_count(branch.time()) + params.second_spec().bias_count(branch.time());
            branch = next;
        }
        sum = Some(match sum {
            None => branch,
            Some(mut acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(branch.data()) {
                    *a += b;
                }
                acc
            }
        });
    }
    let mut out = sum.expect("mrf has at least one kernel");
    let inv = 1.0 / kernels.len() as f32;
    for v in out.data_mut() {
        *v *= inv;
    }
    Ok(out)
}

/// Runs all layers except a trailing basis-synthesis layer.
fn run_layers(
    graph: &Graph,
    weights: &ModelWeights,
    mut x: FeatureMap,
    opts: ExecOptions,
    counter: &mut FlopCounter,
) -> Result<FeatureMap> {
    for layer in &graph.layers {
        let name = layer.name.as_str();
        x = match &layer.kind {
            LayerKind::Conv(spec) => {
                let (w, b) = match weights.get(name).map_err(|e| at_layer(name, e))? {
                    LayerWeights::Conv { weight, bias } => (weight, bias.as_deref()),
                    _ => return Err(Error::InvalidArgument(format!("layer {name}: wrong weight kind"))),
                };
                counter.bias_adds += spec.bias_count(x.time());
                let (y, macs) = if spec.transposed {
                    conv_transpose1d_counted(&x, spec, w, b, opts.threads)
                } else {
                    conv1d_counted(&x, spec, w, b, opts.threads)
                }
                .map_err(|e| at_layer(name, e))?;
                counter.macs += macs;
                y
            }
            LayerKind::LeakyRelu { slope } => leaky_relu(&x, *slope).map_err(|e| at_layer(name, e))?,
            LayerKind::Relu => relu(&x),
            LayerKind::Tanh => tanh(&x),
            LayerKind::AffineNorm { .. } => {
                let (s, b) = match weights.get(name).map_err(|e| at_layer(name, e))? {
                    LayerWeights::Affine { scale, shift } => (scale, shift),
                    _ => return Err(Error::InvalidArgument(format!("layer {name}: wrong weight kind"))),
                };
                affine_norm(&x, s, b).map_err(|e| at_layer(name, e))?
            }
            LayerKind::Residual { .. } => {
                let w = match weights.get(name).map_err(|e| at_layer(name, e))? {
                    LayerWeights::Residual(r) => r,
                    _ => return Err(Error::InvalidArgument(format!("layer {name}: wrong weight kind"))),
                };
                let params = residual_params(&layer.kind, w);
                counter.bias_adds +=
                    params.dilated_spec().bias_count(x.time()) + params.second_spec().bias_count(x.time());
                let (y, macs) =
                    residual_dilated_block_counted(&x, &params, opts.threads).map_err(|e| at_layer(name, e))?;
                counter.macs += macs;
                y
            }
            LayerKind::Mrf { channels, kernels, dilations, slope } => {
                let blocks = match weights.get(name).map_err(|e| at_layer(name, e))? {
                    LayerWeights::Mrf(blocks) => blocks,
                    _ => return Err(Error::InvalidArgument(format!("layer {name}: wrong weight kind"))),
                };
                run_mrf(&x, *channels, kernels, dilations, *slope, blocks, opts, counter)
                    .map_err(|e| at_layer(name, e))?
            }
            LayerKind::AvgPool { kernel, stride, padding } => avg_pool(&x, *kernel, *stride, *padding),
            LayerKind::BasisSynthesis { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "layer {name}: basis synthesis must be executed by forward_generator"
                )))
            }
        };
    }
    Ok(x)
}

/// Runs a generator preset on a mel spectrogram. Basis presets return the
/// predicted weight matrix alongside the waveform, which is trimmed to
/// `mel frames * 256` samples; the overlap-add tail past the last hop is
/// dropped. `basis` must be supplied for basis presets (checked before any
/// compute) and is ignored otherwise.
pub fn forward_generator(
    graph: &Graph,
    weights: &ModelWeights,
    mel: &MelSpectrogram,
    basis: Option<&BasisMatrix>,
    opts: ExecOptions,
) -> Result<GeneratorOutput> {
    graph.validate()?;
    validate_weights(graph, weights)?;
    if mel.n_mels() != graph.input_channels {
        return Err(Error::shape("input mel bands", graph.input_channels, mel.n_mels()));
    }
    let synthesis = graph.synthesis_layer();
    let basis = match (synthesis, basis) {
        (Some((wl, nb, hop)), Some(b)) => {
            if b.window_len() != wl || b.n_basis() != nb || b.hop() != hop {
                return Err(Error::shape(
                    "basis matrix",
                    format!("[{wl}, {nb}] hop {hop}"),
                    format!("[{}, {}] hop {}", b.window_len(), b.n_basis(), b.hop()),
                ));
            }
            Some(b)
        }
        (Some(_), None) => {
            return Err(Error::InvalidArgument(format!(
                "preset {} requires a basis matrix",
                graph.name
            )))
        }
        (None, _) => None,
    };

    let frames = mel.frames();
    let input = FeatureMap::new(
        mel.data().iter().map(|&v| v as f32).collect(),
        mel.n_mels(),
        frames,
    )?;

    let mut counter = FlopCounter::default();
    let body = Graph {
        name: graph.name.clone(),
        input_channels: graph.input_channels,
        layers: graph
            .layers
            .iter()
            .filter(|l| !matches!(l.kind, LayerKind::BasisSynthesis { .. }))
            .cloned()
            .collect(),
        upsampling_factors: graph.upsampling_factors.clone(),
    };
    let out = run_layers(&body, weights, input, opts, &mut counter)?;
    out.assert_finite(&format!("graph {}", graph.name))?;

    let target_len = frames * MEL_HOP;
    if let Some(b) = basis {
        let (wl, nb, _) = synthesis.unwrap();
        if out.channels() != nb {
            return Err(Error::shape("output.synthesis input", nb, out.channels()));
        }
        let w = WeightMatrix::new(out.data().iter().map(|&v| f64::from(v)).collect(), nb, out.time())?;
        counter.macs += (wl * nb * w.n_frames()) as u64;
        let mut waveform = synthesize(b, &w)?;
        waveform.truncate(target_len);
        Ok(GeneratorOutput { weights: Some(w), waveform, flops: counter })
    } else {
        if out.channels() != 1 {
            return Err(Error::shape("generator output channels", 1, out.channels()));
        }
        let waveform = out.row(0).iter().map(|&v| f64::from(v)).collect();
        Ok(GeneratorOutput { weights: None, waveform, flops: counter })
    }
}

fn waveform_map(x: &[f64]) -> FeatureMap {
    FeatureMap::new(x.iter().map(|&v| v as f32).collect(), 1, x.len()).expect("1 x n map")
}

/// Runs the three-scale waveform discriminator; returns one score map per
/// scale (time lengths strictly decrease).
pub fn forward_msd(
    msd: &MultiScaleDiscriminator,
    weights: &DiscriminatorWeights,
    x: &[f64],
    opts: ExecOptions,
) -> Result<Vec<FeatureMap>> {
    if weights.subs.len() != msd.subs.len() {
        return Err(Error::shape("msd weights", msd.subs.len(), weights.subs.len()));
    }
    let input = waveform_map(x);
    let mut scores = Vec::with_capacity(msd.subs.len());
    for (g, w) in msd.subs.iter().zip(&weights.subs) {
        validate_weights(g, w)?;
        let mut counter = FlopCounter::default();
        scores.push(run_layers(g, w, input.clone(), opts, &mut counter)?);
    }
    Ok(scores)
}

/// The magnitude spectrograms the spectrogram discriminator consumes, one
/// per resolution. Entries are nonnegative by construction.
pub fn mfd_input_spectrograms(
    mfd: &MultiResolutionStftDiscriminator,
    x: &[f64],
) -> Result<Vec<MagnitudeSpectrogram>> {
    mfd.subs.iter().map(|(cfg, _)| stft_magnitude(x, cfg)).collect()
}

/// Runs the spectrogram discriminator over all resolutions.
pub fn forward_mfd(
    mfd: &MultiResolutionStftDiscriminator,
    weights: &DiscriminatorWeights,
    x: &[f64],
    opts: ExecOptions,
) -> Result<Vec<FeatureMap>> {
    if weights.subs.len() != mfd.subs.len() {
        return Err(Error::shape("mfd weights", mfd.subs.len(), weights.subs.len()));
    }
    let mut scores = Vec::with_capacity(mfd.subs.len());
    for ((cfg, g), w) in mfd.subs.iter().zip(&weights.subs) {
        validate_weights(g, w)?;
        let mag = stft_magnitude(x, cfg)?;
        // band-major feature map: channel k is bin k over frames
        let (bins, frames) = (mag.bins(), mag.frames());
        let mut data = vec![0.0f32; bins * frames];
        for f in 0..frames {
            for (k, &v) in mag.frame(f).iter().enumerate() {
                data[k * frames + f] = v as f32;
            }
        }
        let input = FeatureMap::new(data, bins, frames)?;
        let mut counter = FlopCounter::default();
        scores.push(run_layers(g, w, input, opts, &mut counter)?);
    }
    Ok(scores)
}

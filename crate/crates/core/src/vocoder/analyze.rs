//! Analytic per-layer FLOPs and parameter accounting.
//!
//! Conventions, fixed: one multiply-add costs 2 FLOPs, a bias addition 1;
//! activations, pooling, normalization, and overlap-add accumulation are
//! excluded (convolution work dominates). Edge padding is modeled exactly —
//! the counts equal what the instrumented kernels report, tap for tap — and
//! totals are normalized per second of 22.05 kHz audio.

use crate::error::Result;
use crate::spectral::StftConfig;

use super::graph::{residual_conv_specs, Graph, LayerKind, MultiResolutionStftDiscriminator, MultiScaleDiscriminator};
use super::{MEL_HOP, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub flops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub graph_name: String,
    pub layers: Vec<LayerCost>,
    pub total_flops: u64,
    pub total_params: u64,
    /// Seconds of audio the analyzed input corresponds to.
    pub audio_seconds: f64,
    pub gflops_per_second: f64,
    pub params_millions: f64,
}

impl ComplexityReport {
    fn from_layers(graph_name: String, layers: Vec<LayerCost>, audio_seconds: f64) -> Self {
        let total_flops: u64 = layers.iter().map(|l| l.flops).sum();
        let total_params: u64 = layers.iter().map(|l| l.params).sum();
        ComplexityReport {
            graph_name,
            gflops_per_second: total_flops as f64 / audio_seconds / 1e9,
            params_millions: total_params as f64 / 1e6,
            layers,
            total_flops,
            total_params,
            audio_seconds,
        }
    }
}

/// FLOPs of one layer at a given input length, exact about edges.
fn layer_flops(kind: &LayerKind, in_len: usize) -> u64 {
    match kind {
        LayerKind::Conv(spec) => 2 * spec.mac_count(in_len) + spec.bias_count(in_len),
        LayerKind::Residual { channels, kernel_size, dilation, second_kernel, .. } => {
            let (a, b) = residual_conv_specs(*channels, *kernel_size, *dilation, *second_kernel);
            2 * (a.mac_count(in_len) + b.mac_count(in_len)) + a.bias_count(in_len) + b.bias_count(in_len)
        }
        LayerKind::Mrf { channels, kernels, dilations, .. } => kernels
            .iter()
            .map(|&k| {
                dilations
                    .iter()
                    .map(|&d| {
                        let (a, b) = residual_conv_specs(*channels, k, d, k);
                        2 * (a.mac_count(in_len) + b.mac_count(in_len))
                            + a.bias_count(in_len)
                            + b.bias_count(in_len)
                    })
                    .sum::<u64>()
            })
            .sum(),
        LayerKind::BasisSynthesis { window_len, n_basis, .. } => {
            2 * (*window_len as u64) * (*n_basis as u64) * in_len as u64
        }
        _ => 0,
    }
}

fn walk_graph(graph: &Graph, input_len: usize, prefix: &str) -> (Vec<LayerCost>, usize) {
    let mut layers = Vec::with_capacity(graph.layers.len());
    let mut len = input_len;
    for layer in &graph.layers {
        layers.push(LayerCost {
            name: format!("{prefix}{}", layer.name),
            flops: layer_flops(&layer.kind, len),
            params: layer.kind.params(),
        });
        len = layer.kind.out_len(len);
    }
    (layers, len)
}

/// Analyzes a generator preset for a mel input of `mel_frames` frames
/// (each frame accounts for 256 output samples).
pub fn analyze_generator(graph: &Graph, mel_frames: usize) -> Result<ComplexityReport> {
    graph.validate()?;
    let (layers, _) = walk_graph(graph, mel_frames, "");
    let audio_seconds = (mel_frames * MEL_HOP) as f64 / f64::from(SAMPLE_RATE);
    Ok(ComplexityReport::from_layers(graph.name.clone(), layers, audio_seconds))
}

/// Analyzes the waveform discriminator for an input of `samples` samples.
pub fn analyze_msd(msd: &MultiScaleDiscriminator, samples: usize) -> Result<ComplexityReport> {
    let mut layers = Vec::new();
    for sub in &msd.subs {
        sub.validate()?;
        let (sub_layers, _) = walk_graph(sub, samples, &format!("{}.", sub.name));
        layers.extend(sub_layers);
    }
    let audio_seconds = samples as f64 / f64::from(SAMPLE_RATE);
    Ok(ComplexityReport::from_layers("msd".into(), layers, audio_seconds))
}

/// Analyzes the spectrogram discriminator for an input of `samples` samples;
/// each resolution sees its own frame count.
pub fn analyze_mfd(mfd: &MultiResolutionStftDiscriminator, samples: usize) -> Result<ComplexityReport> {
    let mut layers = Vec::new();
    for (cfg, sub) in &mfd.subs {
        sub.validate()?;
        let frames = StftConfig::frames(cfg, samples);
        let (sub_layers, _) = walk_graph(sub, frames, &format!("{}.", sub.name));
        layers.extend(sub_layers);
    }
    let audio_seconds = samples as f64 / f64::from(SAMPLE_RATE);
    Ok(ComplexityReport::from_layers("mfd".into(), layers, audio_seconds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ConvSpec;
    use crate::vocoder::graph::{build_mfd, build_msd, build_preset, LayerSpec, Preset};
    use crate::vocoder::DEFAULT_ANALYSIS_FRAMES;

    #[test]
    fn single_conv_matches_hand_count() {
        // 1-layer graph: conv 3->4, k5, no padding, with bias, 20 -> 16 steps
        let g = Graph {
            name: "hand".into(),
            input_channels: 3,
            layers: vec![LayerSpec {
                name: "only.conv".into(),
                kind: LayerKind::Conv(ConvSpec::plain(3, 4, 5)),
            }],
            upsampling_factors: vec![],
        };
        let report = analyze_generator(&g, 20).unwrap();
        // flops = 2 * out_len * out_ch * in_ch * k + out_len * out_ch
        let expected = 2 * 16 * 4 * 3 * 5 + 16 * 4;
        assert_eq!(report.total_flops, expected as u64);
        assert_eq!(report.total_params, (4 * 3 * 5 + 4) as u64);
    }

    #[test]
    fn totals_equal_layer_sums() {
        for p in Preset::all() {
            let r = analyze_generator(&build_preset(p), 100).unwrap();
            assert_eq!(r.total_flops, r.layers.iter().map(|l| l.flops).sum::<u64>());
            assert_eq!(r.total_params, r.layers.iter().map(|l| l.params).sum::<u64>());
        }
    }

    #[test]
    fn published_flops_bands() {
        let hifigan =
            analyze_generator(&build_preset(Preset::HifiganV1Reference), DEFAULT_ANALYSIS_FRAMES).unwrap();
        assert!(
            (15.0..=20.5).contains(&hifigan.gflops_per_second),
            "hifigan-v1-reference: {}",
            hifigan.gflops_per_second
        );
        let large =
            analyze_generator(&build_preset(Preset::BasisMelganLarge), DEFAULT_ANALYSIS_FRAMES).unwrap();
        assert!(
            (6.8..=9.2).contains(&large.gflops_per_second),
            "basis-melgan-large: {}",
            large.gflops_per_second
        );
        assert!(hifigan.gflops_per_second / large.gflops_per_second >= 1.9);
    }

    #[test]
    fn published_parameter_counts() {
        let large = analyze_generator(&build_preset(Preset::BasisMelganLarge), 10).unwrap();
        assert!(
            (large.params_millions - 15.90).abs() <= 1.59,
            "large: {} M",
            large.params_millions
        );
        let light = analyze_generator(&build_preset(Preset::BasisMelganLight), 10).unwrap();
        assert!((light.params_millions - 3.30).abs() <= 0.33, "light: {} M", light.params_millions);
        assert!(light.total_params < large.total_params);
    }

    #[test]
    fn params_independent_of_input_length() {
        let g = build_preset(Preset::BasisMelganLarge);
        let a = analyze_generator(&g, 1).unwrap();
        let b = analyze_generator(&g, 500).unwrap();
        assert_eq!(a.total_params, b.total_params);
        assert!(b.total_flops > a.total_flops);
    }

    #[test]
    fn discriminator_reports_cover_subs() {
        let msd = analyze_msd(&build_msd(), 22050).unwrap();
        assert!(msd.total_flops > 0 && msd.total_params > 0);
        assert!(msd.layers.iter().any(|l| l.name.starts_with("msd.sub2.")));
        let mfd = analyze_mfd(&build_mfd(), 22050).unwrap();
        assert!(mfd.total_flops > 0 && mfd.total_params > 0);
        assert!(mfd.layers.iter().any(|l| l.name.starts_with("mfd.sub2.")));
    }
}

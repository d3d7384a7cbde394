//! Weight storage, random initialization, and archive serialization.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::ConvSpec;
use crate::error::{Error, Result};
use crate::io::archive::{archive_read, archive_write, find_entry, TensorEntry};

use super::graph::{build_mfd, build_msd, build_preset, residual_conv_specs, Graph, LayerKind, Preset};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWeights {
    pub conv_weight: Vec<f32>,
    pub conv_bias: Vec<f32>,
    pub second_weight: Vec<f32>,
    pub second_bias: Vec<f32>,
}

/// Tensors of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Conv { weight: Vec<f32>, bias: Option<Vec<f32>> },
    Affine { scale: Vec<f32>, shift: Vec<f32> },
    Residual(ResidualWeights),
    Mrf(Vec<ResidualWeights>),
}

impl LayerWeights {
    pub fn element_count(&self) -> u64 {
        fn res(r: &ResidualWeights) -> u64 {
            (r.conv_weight.len() + r.conv_bias.len() + r.second_weight.len() + r.second_bias.len())
                as u64
        }
        match self {
            LayerWeights::Conv { weight, bias } => {
                weight.len() as u64 + bias.as_ref().map_or(0, |b| b.len() as u64)
            }
            LayerWeights::Affine { scale, shift } => (scale.len() + shift.len()) as u64,
            LayerWeights::Residual(r) => res(r),
            LayerWeights::Mrf(blocks) => blocks.iter().map(res).sum(),
        }
    }
}

/// Map from layer name to its tensors, tagged with the graph it was built
/// for. Parameterless layers have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub graph_name: String,
    entries: BTreeMap<String, LayerWeights>,
}

impl ModelWeights {
    pub fn new(graph_name: impl Into<String>) -> Self {
        Self { graph_name: graph_name.into(), entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, w: LayerWeights) {
        self.entries.insert(name.into(), w);
    }

    pub fn get(&self, name: &str) -> Result<&LayerWeights> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing weights for layer {name}")))
    }

    pub fn param_count(&self) -> u64 {
        self.entries.values().map(|w| w.element_count()).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

fn layer_needs_weights(kind: &LayerKind) -> bool {
    matches!(
        kind,
        LayerKind::Conv(_) | LayerKind::AffineNorm { .. } | LayerKind::Residual { .. } | LayerKind::Mrf { .. }
    )
}

fn check_residual(name: &str, r: &ResidualWeights, a: &ConvSpec, b: &ConvSpec) -> Result<()> {
    let checks = [
        ("conv.weight", r.conv_weight.len(), a.weight_len()),
        ("conv.bias", r.conv_bias.len(), a.out_channels),
        ("second.weight", r.second_weight.len(), b.weight_len()),
        ("second.bias", r.second_bias.len(), b.out_channels),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(Error::shape(format!("layer {name} {what}"), want, got));
        }
    }
    Ok(())
}

/// Checks that every parameterized layer has exactly one matching entry and
/// no entry is orphaned.
pub fn validate_weights(graph: &Graph, weights: &ModelWeights) -> Result<()> {
    let mut expected = 0usize;
    for layer in &graph.layers {
        if !layer_needs_weights(&layer.kind) {
            continue;
        }
        expected += 1;
        let w = weights.get(&layer.name)?;
        match (&layer.kind, w) {
            (LayerKind::Conv(spec), LayerWeights::Conv { weight, bias }) => {
                if weight.len() != spec.weight_len() {
                    return Err(Error::shape(
                        format!("layer {} weight", layer.name),
                        spec.weight_len(),
                        weight.len(),
                    ));
                }
                match (spec.bias, bias) {
                    (true, Some(b)) if b.len() == spec.out_channels => {}
                    (false, None) => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "layer {} bias does not match spec",
                            layer.name
                        )))
                    }
                }
            }
            (LayerKind::AffineNorm { channels }, LayerWeights::Affine { scale, shift }) => {
                if scale.len() != *channels || shift.len() != *channels {
                    return Err(Error::shape(
                        format!("layer {} affine", layer.name),
                        channels,
                        format!("{}/{}", scale.len(), shift.len()),
                    ));
                }
            }
            (
                LayerKind::Residual { channels, kernel_size, dilation, second_kernel, .. },
                LayerWeights::Residual(r),
            ) => {
                let (a, b) = residual_conv_specs(*channels, *kernel_size, *dilation, *second_kernel);
                check_residual(&layer.name, r, &a, &b)?;
            }
            (LayerKind::Mrf { channels, kernels, dilations, .. }, LayerWeights::Mrf(blocks)) => {
                if blocks.len() != kernels.len() * dilations.len() {
                    return Err(Error::shape(
                        format!("layer {} blocks", layer.name),
                        kernels.len() * dilations.len(),
                        blocks.len(),
                    ));
                }
                for (i, block) in blocks.iter().enumerate() {
                    let k = kernels[i / dilations.len()];
                    let d = dilations[i % dilations.len()];
                    let (a, b) = residual_conv_specs(*channels, k, d, k);
                    check_residual(&format!("{}.block{i}", layer.name), block, &a, &b)?;
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "layer {} has weights of the wrong kind",
                    layer.name
                )))
            }
        }
    }
    if weights.len() != expected {
        let orphans: Vec<&str> = weights
            .names()
            .filter(|n| !graph.layers.iter().any(|l| &l.name == n))
            .collect();
        return Err(Error::InvalidArgument(format!(
            "weight map has {} entries but graph needs {expected}; orphans: {orphans:?}",
            weights.len()
        )));
    }
    Ok(())
}

/// Exact number of weight elements; always equals the analyzer's parameter
/// total for the same graph.
pub fn count_params(graph: &Graph, weights: &ModelWeights) -> Result<u64> {
    validate_weights(graph, weights)?;
    Ok(weights.param_count())
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f32> {
    (0..n).map(|_| { let v: f64 = StandardNormal.sample(rng); (v * std) as f32 }).collect()
}

fn init_conv(rng: &mut ChaCha8Rng, spec: &ConvSpec) -> LayerWeights {
    let fan_in = (spec.in_channels / spec.groups * spec.kernel_size).max(1);
    let std = 1.0 / (fan_in as f64).sqrt();
    LayerWeights::Conv {
        weight: normal_vec(rng, spec.weight_len(), std),
        bias: spec.bias.then(|| normal_vec(rng, spec.out_channels, 0.01)),
    }
}

fn init_residual(rng: &mut ChaCha8Rng, a: &ConvSpec, b: &ConvSpec) -> ResidualWeights {
    let std_a = 1.0 / ((a.in_channels * a.kernel_size) as f64).sqrt();
    let std_b = 1.0 / ((b.in_channels * b.kernel_size) as f64).sqrt();
    ResidualWeights {
        conv_weight: normal_vec(rng, a.weight_len(), std_a),
        conv_bias: normal_vec(rng, a.out_channels, 0.01),
        second_weight: normal_vec(rng, b.weight_len(), std_b),
        second_bias: normal_vec(rng, b.out_channels, 0.01),
    }
}

/// Seeded random weights for a graph (fan-in-scaled normals).
pub fn init_weights(graph: &Graph, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ModelWeights::new(graph.name.clone());
    for layer in &graph.layers {
        let w = match &layer.kind {
            LayerKind::Conv(spec) => init_conv(&mut rng, spec),
            LayerKind::AffineNorm { channels } => LayerWeights::Affine {
                scale: normal_vec(&mut rng, *channels, 0.2)
                    .into_iter()
                    .map(|v| 1.0 + v)
                    .collect(),
                shift: normal_vec(&mut rng, *channels, 0.1),
            },
            LayerKind::Residual { channels, kernel_size, dilation, second_kernel, .. } => {
                let (a, b) = residual_conv_specs(*channels, *kernel_size, *dilation, *second_kernel);
                LayerWeights::Residual(init_residual(&mut rng, &a, &b))
            }
            LayerKind::Mrf { channels, kernels, dilations, .. } => {
                let mut blocks = Vec::new();
                for &k in kernels {
                    for &d in dilations {
                        let (a, b) = residual_conv_specs(*channels, k, d, k);
                        blocks.push(init_residual(&mut rng, &a, &b));
                    }
                }
                LayerWeights::Mrf(blocks)
            }
            _ => continue,
        };
        out.insert(layer.name.clone(), w);
    }
    out
}

/// Per-sub-discriminator weight maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorWeights {
    pub subs: Vec<ModelWeights>,
}

pub fn init_msd_weights(seed: u64) -> DiscriminatorWeights {
    let msd = build_msd();
    DiscriminatorWeights {
        subs: msd.subs.iter().enumerate().map(|(i, g)| init_weights(g, seed ^ (i as u64) << 32)).collect(),
    }
}

pub fn init_mfd_weights(seed: u64) -> DiscriminatorWeights {
    let mfd = build_mfd();
    DiscriminatorWeights {
        subs: mfd
            .subs
            .iter()
            .enumerate()
            .map(|(i, (_, g))| init_weights(g, seed ^ 0xF0F0 ^ ((i as u64) << 32)))
            .collect(),
    }
}

const META_PRESET: &str = "meta.preset_id";

fn push_residual(entries: &mut Vec<TensorEntry>, prefix: &str, r: &ResidualWeights) -> Result<()> {
    entries.push(TensorEntry::new(format!("{prefix}.conv.weight"), vec![r.conv_weight.len()], r.conv_weight.clone())?);
    entries.push(TensorEntry::new(format!("{prefix}.conv.bias"), vec![r.conv_bias.len()], r.conv_bias.clone())?);
    entries.push(TensorEntry::new(format!("{prefix}.second.weight"), vec![r.second_weight.len()], r.second_weight.clone())?);
    entries.push(TensorEntry::new(format!("{prefix}.second.bias"), vec![r.second_bias.len()], r.second_bias.clone())?);
    Ok(())
}

/// Serializes preset weights to a tensor archive.
pub fn save_model(path: &Path, preset: Preset, weights: &ModelWeights) -> Result<()> {
    let graph = build_preset(preset);
    validate_weights(&graph, weights)?;
    let mut entries = vec![TensorEntry::scalar(META_PRESET, preset.index() as f32)];
    for layer in &graph.layers {
        if !layer_needs_weights(&layer.kind) {
            continue;
        }
        let prefix = format!("layers.{}", layer.name);
        match weights.get(&layer.name)? {
            LayerWeights::Conv { weight, bias } => {
                entries.push(TensorEntry::new(format!("{prefix}.weight"), vec![weight.len()], weight.clone())?);
                if let Some(b) = bias {
                    entries.push(TensorEntry::new(format!("{prefix}.bias"), vec![b.len()], b.clone())?);
                }
            }
            LayerWeights::Affine { scale, shift } => {
                entries.push(TensorEntry::new(format!("{prefix}.scale"), vec![scale.len()], scale.clone())?);
                entries.push(TensorEntry::new(format!("{prefix}.shift"), vec![shift.len()], shift.clone())?);
            }
            LayerWeights::Residual(r) => push_residual(&mut entries, &prefix, r)?,
            LayerWeights::Mrf(blocks) => {
                for (i, r) in blocks.iter().enumerate() {
                    push_residual(&mut entries, &format!("{prefix}.block{i}"), r)?;
                }
            }
        }
    }
    archive_write(path, &entries)
}

fn pull(entries: &[TensorEntry], name: &str) -> Result<Vec<f32>> {
    Ok(find_entry(entries, name)?.data.clone())
}

fn pull_residual(entries: &[TensorEntry], prefix: &str) -> Result<ResidualWeights> {
    Ok(ResidualWeights {
        conv_weight: pull(entries, &format!("{prefix}.conv.weight"))?,
        conv_bias: pull(entries, &format!("{prefix}.conv.bias"))?,
        second_weight: pull(entries, &format!("{prefix}.second.weight"))?,
        second_bias: pull(entries, &format!("{prefix}.second.bias"))?,
    })
}

/// Loads a model archive written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(Preset, ModelWeights)> {
    let entries = archive_read(path)?;
    let meta = find_entry(&entries, META_PRESET)?;
    let preset = Preset::from_index(meta.data.first().copied().unwrap_or(-1.0) as u32)?;
    let graph = build_preset(preset);
    let mut weights = ModelWeights::new(graph.name.clone());
    for layer in &graph.layers {
        if !layer_needs_weights(&layer.kind) {
            continue;
        }
        let prefix = format!("layers.{}", layer.name);
        let w = match &layer.kind {
            LayerKind::Conv(spec) => LayerWeights::Conv {
                weight: pull(&entries, &format!("{prefix}.weight"))?,
                bias: if spec.bias { Some(pull(&entries, &format!("{prefix}.bias"))?) } else { None },
            },
            LayerKind::AffineNorm { .. } => LayerWeights::Affine {
                scale: pull(&entries, &format!("{prefix}.scale"))?,
                shift: pull(&entries, &format!("{prefix}.shift"))?,
            },
            LayerKind::Residual { .. } => LayerWeights::Residual(pull_residual(&entries, &prefix)?),
            LayerKind::Mrf { kernels, dilations, .. } => {
                let mut blocks = Vec::new();
                for i in 0..kernels.len() * dilations.len() {
                    blocks.push(pull_residual(&entries, &format!("{prefix}.block{i}"))?);
                }
                LayerWeights::Mrf(blocks)
            }
            _ => unreachable!(),
        };
        weights.insert(layer.name.clone(), w);
    }
    validate_weights(&graph, &weights)?;
    Ok((preset, weights))
}

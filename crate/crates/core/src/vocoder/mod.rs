//! Model graphs, forward execution, and complexity analysis.
//!
//! Graphs are declarative layer lists: generators map a mel spectrogram to a
//! waveform (basis presets predict weight frames and finish with overlap-add
//! synthesis; reference presets upsample all the way to sample rate), and the
//! two discriminators score waveforms at multiple scales / spectrogram
//! resolutions. The analyzer walks the same layer list the executor runs, so
//! analytic FLOPs/parameter totals and instrumented counts agree exactly.

mod analyze;
mod forward;
mod graph;
mod weights;

pub use analyze::{analyze_generator, analyze_mfd, analyze_msd, ComplexityReport, LayerCost};
pub use forward::{
    forward_generator, forward_mfd, forward_msd, mfd_input_spectrograms, ExecOptions, FlopCounter,
    GeneratorOutput,
};
pub use graph::{
    build_mfd, build_msd, build_preset, Graph, LayerKind, LayerSpec, MultiResolutionStftDiscriminator,
    MultiScaleDiscriminator, Preset,
};
pub use weights::{
    count_params, init_mfd_weights, init_msd_weights, init_weights, load_model, save_model,
    DiscriminatorWeights, LayerWeights, ModelWeights, ResidualWeights,
};

/// Sample rate all presets are normalized against.
pub const SAMPLE_RATE: u32 = 22050;

/// Samples of audio per mel frame.
pub const MEL_HOP: usize = 256;

/// Mel frame count used by default when reporting per-second complexity.
pub const DEFAULT_ANALYSIS_FRAMES: usize = 400;

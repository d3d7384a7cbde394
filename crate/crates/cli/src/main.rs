//! `bmg` — command-line toolkit for the basis-decomposition vocoder engine.
//!
//! Subcommands cover synthesis (mel or wav input), analytic FLOPs/parameter
//! reports, RTF benchmarking, signal decomposition, basis learning, loss
//! evaluation, and archive creation. Every command exits 0 on success and
//! prints a single-line `error: ...` to stderr otherwise. Randomized
//! commands take `--seed` (falling back to the `BMG_SEED` environment
//! variable, then 0) and are bit-reproducible for a fixed seed and a single
//! worker thread.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bmg", version, about = "Basis-decomposition vocoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a waveform from a mel archive or by copy-synthesis from a wav.
    Synth {
        /// Model weights archive written by init-model.
        #[arg(long)]
        model: PathBuf,
        /// Basis archive; required for basis presets.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Mel-spectrogram archive (entry "mel", shape [80, frames]).
        #[arg(long, conflicts_with = "wav_in")]
        mel: Option<PathBuf>,
        /// Input wav for copy-synthesis (mel is extracted first).
        #[arg(long)]
        wav_in: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Analytic per-layer FLOPs and parameter report for a preset (or msd/mfd).
    Flops {
        #[arg(long)]
        preset: String,
        /// Mel frames to analyze (generators only).
        #[arg(long, default_value_t = bmg_core::vocoder::DEFAULT_ANALYSIS_FRAMES)]
        frames: usize,
        #[arg(long)]
        json: bool,
    },
    /// Real-time-factor benchmark on seeded random mel input.
    Bench {
        #[arg(long)]
        preset: String,
        /// Seconds of audio per repetition (>= 1).
        #[arg(long, default_value_t = 2)]
        seconds: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Timed repetitions after one warmup (>= 3).
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decompose a wav into nonnegative basis weights.
    Decompose {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        wav_in: PathBuf,
        #[arg(long)]
        out_weights: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Learn a basis from a directory of wav clips.
    LearnBasis {
        #[arg(long)]
        corpus_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        window_len: usize,
        #[arg(long, default_value_t = 256)]
        n_basis: usize,
        #[arg(long, default_value_t = 16)]
        hop: usize,
        #[arg(long, default_value_t = 25)]
        iters: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Loss breakdown between a reference and an estimate wav.
    Loss {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Include adversarial terms from seeded random discriminators.
        #[arg(long)]
        adversarial: bool,
        /// Adversarial form: soft-target (published) or real-label.
        #[arg(long, default_value = "soft-target")]
        adv_form: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a seeded random weight archive for a preset.
    InitModel {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a seeded random basis archive.
    InitBasis {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        window_len: usize,
        #[arg(long, default_value_t = 256)]
        n_basis: usize,
        #[arg(long, default_value_t = 16)]
        hop: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract a mel spectrogram from a wav into a tensor archive.
    Mel {
        #[arg(long)]
        wav_in: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset's layer list for audit.
    DumpPreset {
        #[arg(long)]
        preset: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { model, basis, mel, wav_in, out, threads } => {
            commands::synth(&model, basis.as_deref(), mel.as_deref(), wav_in.as_deref(), &out, threads)
        }
        Command::Flops { preset, frames, json } => commands::flops(&preset, frames, json),
        Command::Bench { preset, seconds, threads, reps, seed } => {
            commands::bench(&preset, seconds, threads, reps, resolve_seed(seed))
        }
        Command::Decompose { basis, wav_in, out_weights, tol, max_iter, threads } => {
            commands::decompose(&basis, &wav_in, &out_weights, tol, max_iter, threads)
        }
        Command::LearnBasis { corpus_dir, out, window_len, n_basis, hop, iters, seed } => {
            commands::learn_basis(&corpus_dir, &out, window_len, n_basis, hop, iters, resolve_seed(seed))
        }
        Command::Loss { reference, est, adversarial, adv_form, seed } => {
            commands::loss(&reference, &est, adversarial, &adv_form, resolve_seed(seed))
        }
        Command::InitModel { preset, out, seed } => commands::init_model(&preset, &out, resolve_seed(seed)),
        Command::InitBasis { out, window_len, n_basis, hop, seed } => {
            commands::init_basis(&out, window_len, n_basis, hop, resolve_seed(seed))
        }
        Command::Mel { wav_in, out } => commands::mel(&wav_in, &out),
        Command::DumpPreset { preset } => commands::dump_preset(&preset),
    };
    if let Err(e) = result {
        let msg: String = format!("{e:#}").replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}

/// `--seed`, then `BMG_SEED`, then 0.
fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("BMG_SEED").ok().and_then(|s| s.parse().ok())).unwrap_or(0)
}

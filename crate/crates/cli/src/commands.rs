use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use bmg_core::basis::{
    decompose_signal, load_basis, save_basis, si_snr, synthesize, BasisMatrix, LearnConfig,
};
use bmg_core::bench::measure_rtf;
use bmg_core::io::archive::{archive_read, archive_write, find_entry, TensorEntry};
use bmg_core::io::wav::{wav_read, wav_write, WavAudio};
use bmg_core::objectives::{generator_total, AdvLossForm, AdversarialContext};
use bmg_core::spectral::{mel_spectrogram, MelConfig, MelSpectrogram};
use bmg_core::vocoder::{
    analyze_generator, analyze_mfd, analyze_msd, build_mfd, build_msd, build_preset,
    forward_generator, init_weights, load_model, save_model, ComplexityReport, ExecOptions, Preset,
    MEL_HOP, SAMPLE_RATE,
};

pub fn synth(
    model: &Path,
    basis: Option<&Path>,
    mel: Option<&Path>,
    wav_in: Option<&Path>,
    out: &Path,
    threads: usize,
) -> Result<()> {
    let t_load = Instant::now();
    let (preset, weights) = load_model(model).context("loading model archive")?;
    let graph = build_preset(preset);
    // fail fast on a missing basis, before any expensive work
    let basis = match (preset.is_basis(), basis) {
        (true, Some(p)) => Some(load_basis(p).context("loading basis archive")?),
        (true, None) => bail!("preset {} requires --basis", preset.name()),
        (false, _) => None,
    };
    let load_seconds = t_load.elapsed().as_secs_f64();

    let t_mel = Instant::now();
    let mel = match (mel, wav_in) {
        (Some(path), None) => read_mel_archive(path)?,
        (None, Some(path)) => {
            let audio = wav_read(path)?;
            mel_spectrogram(&audio.samples, audio.sample_rate, &MelConfig::hifigan_22k())
                .context("extracting mel")?
        }
        _ => bail!("exactly one of --mel or --wav-in is required"),
    };
    let mel_seconds = t_mel.elapsed().as_secs_f64();

    let t_fwd = Instant::now();
    let result = forward_generator(&graph, &weights, &mel, basis.as_ref(), ExecOptions { threads })?;
    let forward_seconds = t_fwd.elapsed().as_secs_f64();

    let t_write = Instant::now();
    wav_write(out, &WavAudio { samples: result.waveform.clone(), sample_rate: SAMPLE_RATE })?;
    let write_seconds = t_write.elapsed().as_secs_f64();

    let audio_seconds = result.waveform.len() as f64 / f64::from(SAMPLE_RATE);
    println!("preset={}", preset.name());
    println!("samples={} audio_seconds={audio_seconds:.4}", result.waveform.len());
    println!("load_seconds={load_seconds:.4} mel_seconds={mel_seconds:.4} forward_seconds={forward_seconds:.4} write_seconds={write_seconds:.4}");
    println!("rtf={:.4}", forward_seconds / audio_seconds);
    Ok(())
}

fn read_mel_archive(path: &Path) -> Result<MelSpectrogram> {
    let entries = archive_read(path)?;
    let e = find_entry(&entries, "mel")?;
    if e.dims.len() != 2 {
        bail!("mel entry must be 2-D [bands, frames], got dims {:?}", e.dims);
    }
    let data: Vec<f64> = e.data.iter().map(|&v| f64::from(v)).collect();
    Ok(MelSpectrogram::new(data, e.dims[0], e.dims[1], SAMPLE_RATE, MEL_HOP)?)
}

pub fn mel(wav_in: &Path, out: &Path) -> Result<()> {
    let audio = wav_read(wav_in)?;
    let mel = mel_spectrogram(&audio.samples, audio.sample_rate, &MelConfig::hifigan_22k())?;
    let entries = vec![
        TensorEntry::new(
            "mel",
            vec![mel.n_mels(), mel.frames()],
            mel.data().iter().map(|&v| v as f32).collect(),
        )?,
        TensorEntry::scalar("mel.sample_rate", mel.sample_rate as f32),
        TensorEntry::scalar("mel.hop", mel.hop_size as f32),
    ];
    archive_write(out, &entries)?;
    println!("bands={} frames={}", mel.n_mels(), mel.frames());
    Ok(())
}

fn generator_report(name: &str, frames: usize) -> Result<(ComplexityReport, Option<f64>)> {
    match name {
        "msd" => Ok((analyze_msd(&build_msd(), frames * MEL_HOP)?, None)),
        "mfd" => Ok((analyze_mfd(&build_mfd(), frames * MEL_HOP)?, None)),
        _ => {
            let preset = Preset::parse(name)?;
            let report = analyze_generator(&build_preset(preset), frames)?;
            let reference = analyze_generator(&build_preset(Preset::HifiganV1Reference), frames)?;
            let ratio = reference.gflops_per_second / report.gflops_per_second;
            Ok((report, Some(ratio)))
        }
    }
}

pub fn flops(preset: &str, frames: usize, json: bool) -> Result<()> {
    let (report, ratio) = generator_report(preset, frames)?;
    if json {
        let layers: Vec<serde_json::Value> = report
            .layers
            .iter()
            .map(|l| serde_json::json!({"name": l.name, "flops": l.flops, "params": l.params}))
            .collect();
        let mut obj = serde_json::json!({
            "graph": report.graph_name,
            "audio_seconds": report.audio_seconds,
            "total_flops": report.total_flops,
            "total_params": report.total_params,
            "gflops_per_second": report.gflops_per_second,
            "params_millions": report.params_millions,
            "layers": layers,
        });
        if let Some(r) = ratio {
            obj["reduction_vs_hifigan_v1"] = serde_json::json!(r);
        }
        println!("{}", serde_json::to_string_pretty(&obj)?);
        return Ok(());
    }
    println!("graph {} over {:.3} s of audio", report.graph_name, report.audio_seconds);
    println!("{:<40} {:>16} {:>12}", "layer", "flops", "params");
    for l in &report.layers {
        println!("{:<40} {:>16} {:>12}", l.name, l.flops, l.params);
    }
    println!("{:<40} {:>16} {:>12}", "total", report.total_flops, report.total_params);
    println!("gflops_per_second={:.4}", report.gflops_per_second);
    println!("params_millions={:.4}", report.params_millions);
    if let Some(r) = ratio {
        println!("reduction_vs_hifigan_v1={r:.4}");
    }
    Ok(())
}

pub fn bench(preset: &str, seconds: u64, threads: usize, reps: usize, seed: u64) -> Result<()> {
    if seconds < 1 {
        bail!("--seconds must be >= 1");
    }
    let preset = Preset::parse(preset)?;
    let result = measure_rtf(preset, seconds as f64, threads, reps, seed)?;
    println!(
        "preset={} seconds={:.3} threads={} reps={} warmup={} seed={seed}",
        result.preset, result.audio_seconds, result.threads, result.repetitions, result.warmup
    );
    for (i, (rtf, wall)) in result.rtf_values.iter().zip(&result.wall_seconds).enumerate() {
        println!("rep{i}_rtf={rtf:.4} rep{i}_wall={wall:.4}");
    }
    println!("rtf_median={:.4} rtf_spread={:.3}", result.rtf, result.spread());
    println!("platform={}", result.platform);
    Ok(())
}

pub fn decompose(
    basis_path: &Path,
    wav_in: &Path,
    out_weights: &Path,
    tol: f64,
    max_iter: usize,
    threads: usize,
) -> Result<()> {
    let basis = load_basis(basis_path)?;
    let audio = wav_read(wav_in)?;
    let t0 = Instant::now();
    let weights = decompose_signal(&basis, &audio.samples, tol, max_iter, threads)?;
    let solve_seconds = t0.elapsed().as_secs_f64();
    let entries = vec![
        TensorEntry::new(
            "weights.matrix",
            vec![weights.n_basis(), weights.n_frames()],
            weights.data().iter().map(|&v| v as f32).collect(),
        )?,
        TensorEntry::scalar("weights.hop", basis.hop() as f32),
    ];
    archive_write(out_weights, &entries)?;
    let mut recon = synthesize(&basis, &weights)?;
    recon.truncate(audio.samples.len());
    let snr = si_snr(&recon, &audio.samples)?;
    println!("frames={} solve_seconds={solve_seconds:.3}", weights.n_frames());
    println!("si_snr_db={snr:.3}");
    Ok(())
}

pub fn learn_basis(
    corpus_dir: &Path,
    out: &Path,
    window_len: usize,
    n_basis: usize,
    hop: usize,
    iters: usize,
    seed: u64,
) -> Result<()> {
    let mut paths: Vec<_> = std::fs::read_dir(corpus_dir)
        .with_context(|| format!("reading {}", corpus_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .wav files in {}", corpus_dir.display());
    }
    let mut corpus = Vec::with_capacity(paths.len());
    for p in &paths {
        corpus.push(wav_read(p)?.samples);
    }
    let cfg = LearnConfig {
        window_len,
        n_basis,
        hop,
        iters,
        seed,
        ..Default::default()
    };
    let t0 = Instant::now();
    let outcome = bmg_core::basis::learn_basis(&corpus, &cfg)?;
    let learn_seconds = t0.elapsed().as_secs_f64();
    save_basis(out, &outcome.basis)?;

    let trace = &outcome.objective_trace;
    let decreasing = trace.windows(2).filter(|p| p[1] < p[0]).count();
    println!(
        "clips={} iters={iters} objective_first={:.6} objective_last={:.6} decreasing_iterations={decreasing}/{}",
        corpus.len(),
        trace[0],
        trace.last().unwrap(),
        trace.len() - 1
    );
    // reconstruction quality on the first clip (capped for speed)
    let clip: Vec<f64> = corpus[0].iter().copied().take(2 * SAMPLE_RATE as usize).collect();
    if clip.iter().any(|&v| v != 0.0) {
        let w = decompose_signal(&outcome.basis, &clip, 1e-10, 500, 1)?;
        let mut recon = synthesize(&outcome.basis, &w)?;
        recon.truncate(clip.len());
        println!("si_snr_db={:.3}", si_snr(&recon, &clip)?);
    }
    println!(
        "basis_shape=[{}, {}] hop={} learn_seconds={learn_seconds:.3} out={}",
        outcome.basis.window_len(),
        outcome.basis.n_basis(),
        outcome.basis.hop(),
        out.display()
    );
    Ok(())
}

pub fn loss(reference: &Path, est: &Path, adversarial: bool, adv_form: &str, seed: u64) -> Result<()> {
    let r = wav_read(reference)?;
    let e = wav_read(est)?;
    if r.sample_rate != e.sample_rate {
        bail!("sample rate mismatch: {} vs {}", r.sample_rate, e.sample_rate);
    }
    let (mut y, mut y_hat) = (r.samples, e.samples);
    if y.len() != y_hat.len() {
        let diff = y.len().abs_diff(y_hat.len());
        if diff > MEL_HOP {
            bail!(
                "length mismatch of {diff} samples exceeds one hop ({MEL_HOP}); refusing to compare"
            );
        }
        let n = y.len().min(y_hat.len());
        eprintln!("warning: trimming both signals to {n} samples (mismatch of {diff})");
        y.truncate(n);
        y_hat.truncate(n);
    }
    let ctx = if adversarial {
        let form = match adv_form {
            "soft-target" => AdvLossForm::SoftTarget,
            "real-label" => AdvLossForm::RealLabel,
            other => bail!("unknown --adv-form {other} (use soft-target or real-label)"),
        };
        Some(AdversarialContext::seeded(seed, form))
    } else {
        None
    };
    let b = generator_total(&y, &y_hat, None, ctx.as_ref())?;
    if let Some(w) = b.weight_loss {
        println!("weight_loss={w:.9}");
    }
    println!("sc={:.9}", b.sc);
    println!("mg={:.9}", b.mg);
    println!("mr_stft={:.9}", b.mr_stft);
    if let Some(v) = b.adv_s {
        println!("adv_s={v:.9}");
    }
    if let Some(v) = b.adv_f {
        println!("adv_f={v:.9}");
    }
    println!("total={:.9}", b.total);
    Ok(())
}

pub fn init_model(preset: &str, out: &Path, seed: u64) -> Result<()> {
    let preset = Preset::parse(preset)?;
    let graph = build_preset(preset);
    let weights = init_weights(&graph, seed);
    save_model(out, preset, &weights)?;
    println!("preset={} params={} seed={seed} out={}", preset.name(), weights.param_count(), out.display());
    Ok(())
}

pub fn init_basis(out: &Path, window_len: usize, n_basis: usize, hop: usize, seed: u64) -> Result<()> {
    let basis = BasisMatrix::random(window_len, n_basis, hop, seed)?;
    save_basis(out, &basis)?;
    println!("basis_shape=[{window_len}, {n_basis}] hop={hop} seed={seed} out={}", out.display());
    Ok(())
}

pub fn dump_preset(name: &str) -> Result<()> {
    match name {
        "msd" => {
            for sub in build_msd().subs {
                print!("{}", sub.describe());
            }
        }
        "mfd" => {
            for (cfg, sub) in build_mfd().subs {
                println!("resolution fft {} hop {} win {}", cfg.fft_size, cfg.hop_size, cfg.win_size);
                print!("{}", sub.describe());
            }
        }
        _ => {
            let preset = Preset::parse(name)?;
            print!("{}", build_preset(preset).describe());
        }
    }
    Ok(())
}

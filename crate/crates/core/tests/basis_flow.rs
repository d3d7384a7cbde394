//! End-to-end flows through the basis machinery: construct-then-recover
//! round trips, basis learning on synthetic corpora, and copy-synthesis by
//! descent.

use bmg_core::basis::{
    decompose_signal, learn_basis, si_snr, signal_frames, synthesize, BasisMatrix, LearnConfig,
    WeightMatrix,
};
use bmg_core::objectives::fit_weights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Synthetic voiced-speech stand-in: harmonic stacks with drifting pitch
/// and a slow amplitude envelope.
fn speechlike_clip(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.random_range(90.0..280.0);
    let drift = rng.random_range(-20.0..20.0);
    (0..len)
        .map(|t| {
            let tt = t as f64 / 22050.0;
            let f = f0 + drift * tt;
            let mut v = 0.0;
            for h in 1..=8 {
                v += (2.0 * std::f64::consts::PI * f * h as f64 * tt).sin() / h as f64;
            }
            let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * 2.5 * tt).sin();
            0.2 * v * env
        })
        .collect()
}

#[test]
fn non_overlapping_round_trip_exceeds_40_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let basis = BasisMatrix::random(32, 256, 32, 1).unwrap();
    let frames = 40;
    let data: Vec<f64> = (0..256 * frames)
        .map(|_| if rng.random_bool(0.1) { rng.random_range(0.0..1.0) } else { 0.0 })
        .collect();
    let w_star = WeightMatrix::new(data, 256, frames).unwrap();
    let y = synthesize(&basis, &w_star).unwrap();
    let w_rec = decompose_signal(&basis, &y, 1e-13, 3000, 2).unwrap();
    let y_rec = synthesize(&basis, &w_rec).unwrap();
    let snr = si_snr(&y_rec, &y).unwrap();
    assert!(snr > 40.0, "round-trip SI-SNR {snr} dB");
}

#[test]
fn learned_basis_reconstructs_speechlike_signal_over_15_db() {
    let corpus: Vec<Vec<f64>> = (0..8).map(|i| speechlike_clip(50 + i, 4000)).collect();
    let cfg = LearnConfig { iters: 20, seed: 9, ..Default::default() };
    let outcome = learn_basis(&corpus, &cfg).unwrap();
    assert_eq!(outcome.basis.window_len(), 32);
    assert_eq!(outcome.basis.n_basis(), 256);
    assert_eq!(outcome.basis.hop(), 16);

    // held-out clip, overlapping hop: overlap-add doubles the interior,
    // which SI-SNR absorbs by scale invariance
    let clip = speechlike_clip(99, 6000);
    let w = decompose_signal(&outcome.basis, &clip, 1e-11, 800, 2).unwrap();
    let mut recon = synthesize(&outcome.basis, &w).unwrap();
    recon.truncate(clip.len());
    let snr = si_snr(&recon, &clip).unwrap();
    assert!(snr > 15.0, "learned-basis reconstruction SI-SNR {snr} dB");
}

#[test]
fn learn_objective_decreases_nearly_every_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..1500).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let cfg = LearnConfig {
        window_len: 16,
        n_basis: 64,
        hop: 8,
        iters: 30,
        seed: 4,
        ..Default::default()
    };
    let outcome = learn_basis(&corpus, &cfg).unwrap();
    let trace = &outcome.objective_trace;
    assert_eq!(trace.len(), 31);
    assert!(trace.last().unwrap() <= &trace[0]);
    let strict = trace.windows(2).filter(|p| p[1] < p[0]).count();
    let non_increasing = trace.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12));
    assert!(non_increasing, "objective increased somewhere: {trace:?}");
    assert!(strict as f64 >= 0.99 * (trace.len() - 1) as f64, "only {strict}/30 strict decreases");
}

/// Basis whose atoms share a windowed oscillating carrier with small
/// per-atom variation; copy-synthesis by plain projected gradient descent is
/// well-posed on such bases.
fn carrier_basis(seed: u64) -> BasisMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wl, nb) = (32, 256);
    let carrier: Vec<f64> = (0..wl)
        .map(|t| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / wl as f64).cos());
            w * (2.0 * std::f64::consts::PI * 2.0 * t as f64 / wl as f64).cos()
        })
        .collect();
    let cnorm = carrier.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut data = vec![0.0f64; wl * nb];
    for j in 0..nb {
        let mut col: Vec<f64> =
            carrier.iter().map(|&c| c / cnorm + 0.2 * rng.random_range(-0.5..0.5f64)).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.iter_mut().for_each(|v| *v /= norm);
        for (t, c) in col.iter().enumerate() {
            data[t * nb + j] = *c;
        }
    }
    BasisMatrix::new(data, wl, nb, 16).unwrap()
}

#[test]
fn copy_synthesis_by_descent_recovers_waveform() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let basis = carrier_basis(5);
    let n = 2048;
    let nf = signal_frames(&basis, n);
    let star: Vec<f64> = (0..256 * nf).map(|_| rng.random_range(0.0..0.15)).collect();
    let w_star = WeightMatrix::new(star, 256, nf).unwrap();
    let mut target = synthesize(&basis, &w_star).unwrap();
    target.truncate(n);
    let init: Vec<f64> = (0..256 * nf).map(|_| rng.random_range(0.0..0.1)).collect();
    let init = WeightMatrix::new(init, 256, nf).unwrap();

    let out = fit_weights(&target, &basis, &init, 400, 100.0).unwrap();
    for pair in out.loss_trace.windows(2) {
        assert!(pair[1] <= pair[0], "trace increased: {} -> {}", pair[0], pair[1]);
    }
    let mut rec = synthesize(&basis, &out.weights).unwrap();
    rec.truncate(n);
    let snr = si_snr(&rec, &target).unwrap();
    assert!(snr > 20.0, "copy-synthesis SI-SNR {snr} dB after {} steps", out.steps_taken);
}

#[test]
fn fit_weights_divergence_guard_trips() {
    // an absurd objective blowup is reported as divergence rather than
    // silently iterated; force it with an enormous initial weight scale
    let basis = carrier_basis(6);
    let n = 512;
    let nf = signal_frames(&basis, n);
    let target = speechlike_clip(1, n);
    let init = WeightMatrix::new(vec![1e8; 256 * nf], 256, nf).unwrap();
    let err = fit_weights(&target, &basis, &init, 5, 1.0);
    assert!(err.is_err(), "expected divergence error");
}

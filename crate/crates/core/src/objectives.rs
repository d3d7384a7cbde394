//! Loss functions with analytic gradients, and copy-synthesis by descent.
//!
//! Gradients are taken with respect to predicted signals/weights only; the
//! graph parameters themselves are never differentiated. Every gradient
//! vector is a plain `f64` buffer matching the shape of the input it
//! differentiates, finite everywhere, and is validated against central
//! finite differences in the test suite (which is why this whole path
//! computes in `f64`).
//!
//! L1-style losses are mean-normalized (per element); the adversarial BCE
//! averages per element, then per sub-discriminator.

use crate::basis::{signal_frames, synthesize, BasisMatrix, WeightMatrix};
use crate::dsp::FeatureMap;
use crate::error::{Error, Result};
use crate::spectral::{multi_resolution_configs, stft_analysis, StftConfig, LOG_FLOOR};
use crate::vocoder::{
    build_mfd, build_msd, forward_mfd, forward_msd, init_mfd_weights, init_msd_weights,
    DiscriminatorWeights, ExecOptions, MultiResolutionStftDiscriminator, MultiScaleDiscriminator,
};

/// Per-component loss values; `total` always equals the sum of the enabled
/// components exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Mean L1 between weight matrices; absent without weights or during
    /// adversarial training (where it is excluded from the objective).
    pub weight_loss: Option<f64>,
    /// Spectral convergence, averaged over the three resolutions.
    pub sc: f64,
    /// Log-magnitude L1, averaged over the three resolutions.
    pub mg: f64,
    /// `sc + mg`.
    pub mr_stft: f64,
    pub adv_s: Option<f64>,
    pub adv_f: Option<f64>,
    pub total: f64,
}

impl LossBreakdown {
    /// Recomputes the total from the enabled components.
    pub fn component_sum(&self) -> f64 {
        self.weight_loss.unwrap_or(0.0)
            + self.mr_stft
            + self.adv_s.unwrap_or(0.0)
            + self.adv_f.unwrap_or(0.0)
    }
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} gradient is not finite")))
    }
}

/// Mean L1 between target and predicted weights, with the subgradient with
/// respect to the prediction (`sign(0) = 0`).
pub fn weight_loss(target: &WeightMatrix, predicted: &WeightMatrix) -> Result<(f64, Vec<f64>)> {
    if target.n_basis() != predicted.n_basis() || target.n_frames() != predicted.n_frames() {
        return Err(Error::shape(
            "weight_loss",
            format!("[{}, {}]", target.n_basis(), target.n_frames()),
            format!("[{}, {}]", predicted.n_basis(), predicted.n_frames()),
        ));
    }
    let n = target.data().len() as f64;
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f64; target.data().len()];
    for (i, (&t, &p)) in target.data().iter().zip(predicted.data()).enumerate() {
        let d = p - t;
        loss += d.abs();
        grad[i] = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((loss / n, grad))
}

/// Spectral convergence and log-magnitude terms of one resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftLossValue {
    pub sc: f64,
    pub mg: f64,
}

impl StftLossValue {
    pub fn total(&self) -> f64 {
        self.sc + self.mg
    }
}

/// Reference-side data reused across evaluations against the same target.
struct StftReference {
    mags: Vec<f64>,
    logs: Vec<f64>,
    fro_norm: f64,
    cfg: StftConfig,
}

fn prepare_reference(y: &[f64], cfg: &StftConfig) -> Result<StftReference> {
    let mags = stft_analysis(y, cfg)?.magnitudes();
    let fro_norm = mags.data().iter().map(|m| m * m).sum::<f64>().sqrt();
    if fro_norm == 0.0 {
        return Err(Error::DegenerateInput(
            "stft loss: reference signal has zero spectrum".into(),
        ));
    }
    Ok(StftReference {
        logs: mags.data().iter().map(|m| m.max(LOG_FLOOR).ln()).collect(),
        mags: mags.data().to_vec(),
        fro_norm,
        cfg: *cfg,
    })
}

fn loss_vs_reference(r: &StftReference, y_hat: &[f64], want_grad: bool) -> Result<(StftLossValue, Option<Vec<f64>>)> {
    let analysis = stft_analysis(y_hat, &r.cfg)?;
    let est = analysis.magnitudes();
    if est.data().len() != r.mags.len() {
        return Err(Error::shape("stft loss frames", r.mags.len(), est.data().len()));
    }
    let n = r.mags.len() as f64;
    let mut diff_sq = 0.0f64;
    let mut mg = 0.0f64;
    for (&a, (&b, &la)) in r.mags.iter().zip(est.data().iter().zip(&r.logs)) {
        let d = b - a;
        diff_sq += d * d;
        mg += (b.max(LOG_FLOOR).ln() - la).abs();
    }
    let diff_norm = diff_sq.sqrt();
    let value = StftLossValue { sc: diff_norm / r.fro_norm, mg: mg / n };
    if !want_grad {
        return Ok((value, None));
    }
    // d(sc)/d|S_hat| = (|S_hat| - |S|) / (||diff||_F * ||S||_F); 0 at the kink
    // d(mg)/d|S_hat| = sign(log|S_hat|_f - log|S|_f) / (N * |S_hat|), 0 below the floor
    let mut d_mag = vec![0.0f64; r.mags.len()];
    let sc_den = diff_norm * r.fro_norm;
    for (i, (&a, (&b, &la))) in r.mags.iter().zip(est.data().iter().zip(&r.logs)).enumerate() {
        let mut g = 0.0f64;
        if sc_den > 0.0 {
            g += (b - a) / sc_den;
        }
        if b > LOG_FLOOR {
            let diff = b.ln() - la;
            // sign with sign(0) = 0; f64::signum maps +0.0 to 1.0
            if diff > 0.0 {
                g += 1.0 / (n * b);
            } else if diff < 0.0 {
                g -= 1.0 / (n * b);
            }
        }
        d_mag[i] = g;
    }
    let grad = analysis.grad_to_signal(&d_mag);
    check_finite(&grad, "stft loss")?;
    Ok((value, Some(grad)))
}

/// Single-resolution STFT loss `(L_sc, L_mg)` with the gradient with respect
/// to the estimate. The reference must not be all zero.
pub fn stft_loss_single(
    y: &[f64],
    y_hat: &[f64],
    cfg: &StftConfig,
) -> Result<(StftLossValue, Vec<f64>)> {
    if y.len() != y_hat.len() {
        return Err(Error::shape("stft loss lengths", y.len(), y_hat.len()));
    }
    let r = prepare_reference(y, cfg)?;
    let (value, grad) = loss_vs_reference(&r, y_hat, true)?;
    Ok((value, grad.expect("gradient requested")))
}

/// Multi-resolution STFT loss: the mean of the three single losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrStftValue {
    pub sc: f64,
    pub mg: f64,
}

impl MrStftValue {
    pub fn total(&self) -> f64 {
        self.sc + self.mg
    }
}

fn mr_stft_impl(y: &[f64], y_hat: &[f64], want_grad: bool) -> Result<(MrStftValue, Option<Vec<f64>>)> {
    if y.len() != y_hat.len() {
        return Err(Error::shape("mr_stft lengths", y.len(), y_hat.len()));
    }
    let cfgs = multi_resolution_configs();
    let m = cfgs.len() as f64;
    let mut sc = 0.0f64;
    let mut mg = 0.0f64;
    let mut grad = want_grad.then(|| vec![0.0f64; y_hat.len()]);
    for cfg in &cfgs {
        let r = prepare_reference(y, cfg)?;
        let (v, g) = loss_vs_reference(&r, y_hat, want_grad)?;
        sc += v.sc / m;
        mg += v.mg / m;
        if let (Some(total), Some(part)) = (grad.as_mut(), g) {
            for (t, p) in total.iter_mut().zip(&part) {
                *t += p / m;
            }
        }
    }
    Ok((MrStftValue { sc, mg }, grad))
}

pub fn mr_stft_loss(y: &[f64], y_hat: &[f64]) -> Result<(MrStftValue, Vec<f64>)> {
    let (v, g) = mr_stft_impl(y, y_hat, true)?;
    Ok((v, g.expect("gradient requested")))
}

/// Loss value only; cheaper inside line searches.
pub fn mr_stft_loss_value(y: &[f64], y_hat: &[f64]) -> Result<MrStftValue> {
    Ok(mr_stft_impl(y, y_hat, false)?.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const BCE_EPS: f64 = 1e-7;

fn bce(target: f64, p: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// How the generator's adversarial term reads the discriminator outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvLossForm {
    /// Cross-entropy of the fake-pass scores against the real-pass scores
    /// (both sigmoid-squashed), taking the real pass as a soft target.
    SoftTarget,
    /// Conventional non-saturating form: cross-entropy of the fake-pass
    /// scores against the real label 1.
    RealLabel,
}

/// Per-element BCE between two score-map lists, averaged per map and then
/// across maps. Raw scores are sigmoid-squashed first.
pub fn score_bce(targets: &[FeatureMap], predictions: &[FeatureMap], form: AdvLossForm) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::shape("score_bce maps", targets.len(), predictions.len()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("score_bce: no score maps".into()));
    }
    let mut per_map = 0.0f64;
    for (t, p) in targets.iter().zip(predictions) {
        if t.data().len() != p.data().len() {
            return Err(Error::shape("score map size", t.data().len(), p.data().len()));
        }
        if t.data().is_empty() {
            return Err(Error::InvalidArgument("score_bce: empty score map".into()));
        }
        let mut acc = 0.0f64;
        for (&tv, &pv) in t.data().iter().zip(p.data()) {
            let target = match form {
                AdvLossForm::SoftTarget => sigmoid(f64::from(tv)),
                AdvLossForm::RealLabel => 1.0,
            };
            acc += bce(target, sigmoid(f64::from(pv)));
        }
        per_map += acc / t.data().len() as f64;
    }
    Ok(per_map / targets.len() as f64)
}

/// BCE of a score-map list against a constant label.
pub fn score_bce_label(scores: &[FeatureMap], label: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("score_bce_label: no score maps".into()));
    }
    let mut per_map = 0.0f64;
    for s in scores {
        if s.data().is_empty() {
            return Err(Error::InvalidArgument("score_bce_label: empty score map".into()));
        }
        let mut acc = 0.0f64;
        for &v in s.data() {
            acc += bce(label, sigmoid(f64::from(v)));
        }
        per_map += acc / s.data().len() as f64;
    }
    Ok(per_map / scores.len() as f64)
}

/// Both discriminators with their (randomly initialized, frozen) weights.
pub struct AdversarialContext {
    pub msd: MultiScaleDiscriminator,
    pub msd_weights: DiscriminatorWeights,
    pub mfd: MultiResolutionStftDiscriminator,
    pub mfd_weights: DiscriminatorWeights,
    pub form: AdvLossForm,
    pub exec: ExecOptions,
}

impl AdversarialContext {
    /// Discriminators with seeded random weights; no training happens here.
    pub fn seeded(seed: u64, form: AdvLossForm) -> Self {
        Self {
            msd: build_msd(),
            msd_weights: init_msd_weights(seed),
            mfd: build_mfd(),
            mfd_weights: init_mfd_weights(seed.wrapping_add(1)),
            form,
            exec: ExecOptions::default(),
        }
    }
}

/// Generator-side adversarial terms `(L_adv_s, L_adv_f)`.
pub fn adversarial_losses(ctx: &AdversarialContext, y: &[f64], y_hat: &[f64]) -> Result<(f64, f64)> {
    let real_s = forward_msd(&ctx.msd, &ctx.msd_weights, y, ctx.exec)?;
    let fake_s = forward_msd(&ctx.msd, &ctx.msd_weights, y_hat, ctx.exec)?;
    let adv_s = score_bce(&real_s, &fake_s, ctx.form)?;
    let real_f = forward_mfd(&ctx.mfd, &ctx.mfd_weights, y, ctx.exec)?;
    let fake_f = forward_mfd(&ctx.mfd, &ctx.mfd_weights, y_hat, ctx.exec)?;
    let adv_f = score_bce(&real_f, &fake_f, ctx.form)?;
    Ok((adv_s, adv_f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorLosses {
    pub msd_real: f64,
    pub msd_fake: f64,
    pub mfd_real: f64,
    pub mfd_fake: f64,
}

/// Discriminator-side terms: real scores against label 1, fake scores
/// against label 0, for each discriminator.
pub fn discriminator_losses(
    ctx: &AdversarialContext,
    y: &[f64],
    y_hat: &[f64],
) -> Result<DiscriminatorLosses> {
    let real_s = forward_msd(&ctx.msd, &ctx.msd_weights, y, ctx.exec)?;
    let fake_s = forward_msd(&ctx.msd, &ctx.msd_weights, y_hat, ctx.exec)?;
    let real_f = forward_mfd(&ctx.mfd, &ctx.mfd_weights, y, ctx.exec)?;
    let fake_f = forward_mfd(&ctx.mfd, &ctx.mfd_weights, y_hat, ctx.exec)?;
    Ok(DiscriminatorLosses {
        msd_real: score_bce_label(&real_s, 1.0)?,
        msd_fake: score_bce_label(&fake_s, 0.0)?,
        mfd_real: score_bce_label(&real_f, 1.0)?,
        mfd_fake: score_bce_label(&fake_f, 0.0)?,
    })
}

/// Total generator loss. Pre-adversarial mode (`adversarial == None`) sums
/// the weight loss (when weights are provided) and the multi-resolution STFT
/// loss; adversarial mode sums the STFT and adversarial terms and drops the
/// weight term.
pub fn generator_total(
    y: &[f64],
    y_hat: &[f64],
    weights: Option<(&WeightMatrix, &WeightMatrix)>,
    adversarial: Option<&AdversarialContext>,
) -> Result<LossBreakdown> {
    let (mr, _) = mr_stft_impl(y, y_hat, false)?;
    let mr_total = mr.sc + mr.mg;
    match adversarial {
        None => {
            let w = match weights {
                Some((t, p)) => Some(weight_loss(t, p)?.0),
                None => None,
            };
            Ok(LossBreakdown {
                weight_loss: w,
                sc: mr.sc,
                mg: mr.mg,
                mr_stft: mr_total,
                adv_s: None,
                adv_f: None,
                total: w.unwrap_or(0.0) + mr_total,
            })
        }
        Some(ctx) => {
            let (adv_s, adv_f) = adversarial_losses(ctx, y, y_hat)?;
            Ok(LossBreakdown {
                weight_loss: None,
                sc: mr.sc,
                mg: mr.mg,
                mr_stft: mr_total,
                adv_s: Some(adv_s),
                adv_f: Some(adv_f),
                total: mr_total + adv_s + adv_f,
            })
        }
    }
}

/// Multi-resolution STFT loss of `synthesize(basis, weights)` against a
/// target, with the gradient with respect to the weight matrix (layout
/// matches `WeightMatrix::data`). The synthesized signal is trimmed to the
/// target length before the loss; the gradient chains back through the trim,
/// the overlap-add, and the basis product.
pub fn synthesis_loss_grad(
    target: &[f64],
    basis: &BasisMatrix,
    weights: &WeightMatrix,
) -> Result<(MrStftValue, Vec<f64>)> {
    let mut y_hat = synthesize(basis, weights)?;
    y_hat.truncate(target.len());
    if y_hat.len() < target.len() {
        return Err(Error::shape("synthesis_loss_grad length", target.len(), y_hat.len()));
    }
    let (value, grad_y) = mr_stft_loss(target, &y_hat)?;
    // adjoint of overlap-add + trim: grad_W[j, f] = sum_t B[t, j] * g[f*hop + t]
    let (wl, nb, hop) = (basis.window_len(), basis.n_basis(), basis.hop());
    let nf = weights.n_frames();
    let mut grad_w = vec![0.0f64; nb * nf];
    for f in 0..nf {
        let start = f * hop;
        for t in 0..wl {
            let Some(&g) = grad_y.get(start + t) else { break };
            if g == 0.0 {
                continue;
            }
            let brow = &basis.data()[t * nb..(t + 1) * nb];
            for (j, &b) in brow.iter().enumerate() {
                grad_w[j * nf + f] += b * g;
            }
        }
    }
    check_finite(&grad_w, "synthesis loss")?;
    Ok((value, grad_w))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub weights: WeightMatrix,
    /// Objective after the initial point and each accepted step;
    /// non-increasing under the backtracking line search.
    pub loss_trace: Vec<f64>,
    pub steps_taken: usize,
}

/// Copy-synthesis by projected gradient descent: fits nonnegative weights so
/// that `synthesize(basis, W)` matches `target` under the multi-resolution
/// STFT loss. `lr` caps the line-search step. Stops early when no descent
/// step can be found.
pub fn fit_weights(
    target: &[f64],
    basis: &BasisMatrix,
    init: &WeightMatrix,
    steps: usize,
    lr: f64,
) -> Result<FitOutcome> {
    if steps == 0 {
        return Err(Error::InvalidArgument("fit_weights: steps must be >= 1".into()));
    }
    if lr <= 0.0 {
        return Err(Error::InvalidArgument("fit_weights: lr must be positive".into()));
    }
    let expected_frames = signal_frames(basis, target.len());
    if init.n_basis() != basis.n_basis() || init.n_frames() != expected_frames {
        return Err(Error::shape(
            "fit_weights init",
            format!("[{}, {expected_frames}]", basis.n_basis()),
            format!("[{}, {}]", init.n_basis(), init.n_frames()),
        ));
    }

    let eval = |w: &WeightMatrix| -> Result<f64> {
        let mut y_hat = synthesize(basis, w)?;
        y_hat.truncate(target.len());
        Ok(mr_stft_loss_value(target, &y_hat)?.total())
    };

    let mut w = init.clone();
    let mut loss = eval(&w)?;
    let mut trace = vec![loss];
    let mut step_size = lr;
    let mut steps_taken = 0;
    for _ in 0..steps {
        if loss > 1e6 {
            return Err(Error::Divergence(format!("fit_weights objective {loss} exceeded 1e6")));
        }
        let (_, grad) = synthesis_loss_grad(target, basis, &w)?;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            break;
        }
        step_size = (step_size * 2.0).min(lr);
        let mut accepted = false;
        for _ in 0..40 {
            let data: Vec<f64> = w
                .data()
                .iter()
                .zip(&grad)
                .map(|(x, g)| (x - step_size * g).max(0.0))
                .collect();
            let cand = WeightMatrix::new(data, w.n_basis(), w.n_frames())?;
            let f = eval(&cand)?;
            if f <= loss {
                w = cand;
                loss = f;
                accepted = true;
                break;
            }
            step_size *= 0.5;
        }
        if !accepted {
            break; // stalled at (numerical) stationarity
        }
        trace.push(loss);
        steps_taken += 1;
    }
    Ok(FitOutcome { weights: w, loss_trace: trace, steps_taken })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::StftConfig;

    fn wave(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn weight_loss_identity_and_scale() {
        let a = WeightMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let (l, g) = weight_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));

        let zeros = WeightMatrix::zeros(2, 2);
        let ones = WeightMatrix::new(vec![1.0; 4], 2, 2).unwrap();
        let (l, g) = weight_loss(&zeros, &ones).unwrap();
        assert_eq!(l, 1.0); // mean-normalized
        assert!(g.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn weight_loss_shape_mismatch() {
        let a = WeightMatrix::zeros(2, 2);
        let b = WeightMatrix::zeros(2, 3);
        assert!(weight_loss(&a, &b).is_err());
    }

    #[test]
    fn stft_loss_zero_at_identity() {
        let y = wave(512, 3);
        let cfg = StftConfig::new(256, 64, 128).unwrap();
        let (v, _) = stft_loss_single(&y, &y, &cfg).unwrap();
        assert_eq!(v.sc, 0.0);
        assert_eq!(v.mg, 0.0);
    }

    #[test]
    fn spectral_convergence_is_one_for_zero_estimate() {
        let y = wave(512, 4);
        let cfg = StftConfig::new(256, 64, 128).unwrap();
        let (v, _) = stft_loss_single(&y, &vec![0.0; 512], &cfg).unwrap();
        assert_eq!(v.sc, 1.0);
        assert!(v.mg > 0.0);
    }

    #[test]
    fn zero_reference_is_an_error() {
        let cfg = StftConfig::new(256, 64, 128).unwrap();
        assert!(stft_loss_single(&vec![0.0; 512], &wave(512, 5), &cfg).is_err());
    }

    #[test]
    fn mr_stft_is_mean_of_singles() {
        let y = wave(1500, 6);
        let y_hat = wave(1500, 7);
        let (mr, _) = mr_stft_loss(&y, &y_hat).unwrap();
        let cfgs = multi_resolution_configs();
        let mut sc = 0.0;
        let mut mg = 0.0;
        for cfg in &cfgs {
            let (v, _) = stft_loss_single(&y, &y_hat, cfg).unwrap();
            sc += v.sc / 3.0;
            mg += v.mg / 3.0;
        }
        assert!((mr.sc - sc).abs() < 1e-15);
        assert!((mr.mg - mg).abs() < 1e-15);
        // identity still zero
        let (z, _) = mr_stft_loss(&y, &y).unwrap();
        assert_eq!(z.total(), 0.0);
    }

    #[test]
    fn bce_self_entropy_at_half() {
        // raw score 0 squashes to 0.5; BCE(0.5, 0.5) = ln 2
        let maps = vec![FeatureMap::zeros(1, 4)];
        let v = score_bce(&maps, &maps, AdvLossForm::SoftTarget).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12, "{v}");
        let r = score_bce_label(&maps, 1.0).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_limits_vanish_for_perfect_scores() {
        let big = FeatureMap::new(vec![30.0; 4], 1, 4).unwrap();
        let small = FeatureMap::new(vec![-30.0; 4], 1, 4).unwrap();
        // prediction ~1 against target ~1
        let v = score_bce(std::slice::from_ref(&big), std::slice::from_ref(&big), AdvLossForm::SoftTarget).unwrap();
        assert!(v < 1e-6, "{v}");
        let real = score_bce_label(&[big], 1.0).unwrap();
        assert!(real < 1e-6);
        let fake = score_bce_label(&[small], 0.0).unwrap();
        assert!(fake < 1e-6);
    }

    #[test]
    fn bce_two_element_hand_case() {
        // real scores [0.3, -0.2], fake scores [0.1, 0.4]
        let real = FeatureMap::new(vec![0.3, -0.2], 1, 2).unwrap();
        let fake = FeatureMap::new(vec![0.1, 0.4], 1, 2).unwrap();
        let got = score_bce(&[real], &[fake], AdvLossForm::SoftTarget).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let bce = |t: f64, p: f64| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        let expected = (bce(sig(0.3), sig(0.1)) + bce(sig(-0.2), sig(0.4))) / 2.0;
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn breakdown_total_matches_component_sum() {
        let y = wave(1400, 8);
        let y_hat = wave(1400, 9);
        let wt = WeightMatrix::new(vec![0.5, 0.25], 2, 1).unwrap();
        let wp = WeightMatrix::new(vec![0.75, 0.0], 2, 1).unwrap();
        let b = generator_total(&y, &y_hat, Some((&wt, &wp)), None).unwrap();
        assert!(b.weight_loss.is_some());
        assert_eq!(b.total, b.component_sum());
        assert_eq!(b.mr_stft, b.sc + b.mg);
        // identity inputs, pre-adversarial: exactly zero
        let z = generator_total(&y, &y, Some((&wt, &wt)), None).unwrap();
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn adversarial_mode_excludes_weight_term() {
        let y = wave(2048, 10);
        let y_hat = wave(2048, 11);
        let wt = WeightMatrix::new(vec![0.5; 8], 4, 2).unwrap();
        let wp = WeightMatrix::new(vec![0.9; 8], 4, 2).unwrap();
        let ctx = AdversarialContext::seeded(3, AdvLossForm::SoftTarget);
        let b = generator_total(&y, &y_hat, Some((&wt, &wp)), Some(&ctx)).unwrap();
        assert!(b.weight_loss.is_none(), "weight term must be dropped in adversarial mode");
        let (adv_s, adv_f) = (b.adv_s.unwrap(), b.adv_f.unwrap());
        assert!(adv_s > 0.0 && adv_f > 0.0);
        assert_eq!(b.total, b.mr_stft + adv_s + adv_f);
        assert_eq!(b.total, b.component_sum());
    }

    #[test]
    fn discriminator_losses_are_finite_and_positive() {
        let y = wave(2048, 12);
        let y_hat = wave(2048, 13);
        let ctx = AdversarialContext::seeded(4, AdvLossForm::SoftTarget);
        let d = discriminator_losses(&ctx, &y, &y_hat).unwrap();
        for v in [d.msd_real, d.msd_fake, d.mfd_real, d.mfd_fake] {
            assert!(v.is_finite() && v > 0.0, "{d:?}");
        }
        // same inputs, same seed: bit-identical
        let d2 = discriminator_losses(&ctx, &y, &y_hat).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn fit_weights_fixed_point_stays_put() {
        let basis = BasisMatrix::random(16, 48, 8, 2).unwrap();
        let data: Vec<f64> = (0..48 * 12).map(|i| if i % 11 == 0 { 0.4 } else { 0.0 }).collect();
        let w_star = WeightMatrix::new(data, 48, 12).unwrap();
        let target = synthesize(&basis, &w_star).unwrap();
        let out = fit_weights(&target, &basis, &w_star, 10, 1.0).unwrap();
        assert!(out.loss_trace[0] < 1e-9);
        for (a, b) in out.weights.data().iter().zip(w_star.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_weights_trace_is_monotone() {
        let basis = BasisMatrix::random(16, 48, 8, 3).unwrap();
        let data: Vec<f64> = (0..48 * 10).map(|i| ((i * 7 % 13) as f64) / 13.0).collect();
        let w_star = WeightMatrix::new(data, 48, 10).unwrap();
        let target = synthesize(&basis, &w_star).unwrap();
        let init = WeightMatrix::new(vec![0.1; 48 * 10], 48, 10).unwrap();
        let out = fit_weights(&target, &basis, &init, 40, 10.0).unwrap();
        for pair in out.loss_trace.windows(2) {
            assert!(pair[1] <= pair[0], "{} -> {}", pair[0], pair[1]);
        }
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
    }
}

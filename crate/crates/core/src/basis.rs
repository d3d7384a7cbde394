//! Waveform decomposition over a fixed overcomplete basis.
//!
//! A window of `window_len` samples is represented as `B * v` with `v >= 0`;
//! a whole signal is a matrix of per-frame weight columns combined by
//! overlap-add at stride `hop`. Decomposition solves the convex NNLS problem
//! per window with projected gradient descent; [`learn_basis`] fits a basis
//! to a corpus by alternating projected-gradient steps (nonnegativity on the
//! weights only — the basis itself is unconstrained).

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SI-SNR is clamped to +/- this value where the ratio degenerates.
pub const SI_SNR_CAP_DB: f64 = 120.0;

/// Frozen decomposition basis, `[window_len, n_basis]` row-major, with the
/// frame stride used for overlap-add.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    data: Vec<f64>,
    window_len: usize,
    n_basis: usize,
    hop: usize,
}

impl BasisMatrix {
    pub fn new(data: Vec<f64>, window_len: usize, n_basis: usize, hop: usize) -> Result<Self> {
        if data.len() != window_len * n_basis {
            return Err(Error::shape("BasisMatrix::new", window_len * n_basis, data.len()));
        }
        if window_len >= n_basis {
            return Err(Error::InvalidArgument(format!(
                "basis must be overcomplete: window_len {window_len} >= n_basis {n_basis}"
            )));
        }
        if hop == 0 {
            return Err(Error::InvalidArgument("basis hop must be >= 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("basis contains non-finite values".into()));
        }
        for j in 0..n_basis {
            if (0..window_len).all(|t| data[t * n_basis + j] == 0.0) {
                return Err(Error::DegenerateInput(format!("basis column {j} is all zero")));
            }
        }
        Ok(Self { data, window_len, n_basis, hop })
    }

    /// Random basis with unit-norm columns; handy as a stand-in before a
    /// learned one is available.
    pub fn random(window_len: usize, n_basis: usize, hop: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0f64; window_len * n_basis];
        for v in data.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        normalize_columns(&mut data, window_len, n_basis, &mut rng);
        Self::new(data, window_len, n_basis, hop)
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.n_basis + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.window_len).map(|t| self.at(t, j)).collect()
    }
}

/// Nonnegative weights `[n_basis, n_frames]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    data: Vec<f64>,
    n_basis: usize,
    n_frames: usize,
}

impl WeightMatrix {
    pub fn new(data: Vec<f64>, n_basis: usize, n_frames: usize) -> Result<Self> {
        if data.len() != n_basis * n_frames {
            return Err(Error::shape("WeightMatrix::new", n_basis * n_frames, data.len()));
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "weight matrix must be nonnegative and finite".into(),
            ));
        }
        Ok(Self { data, n_basis, n_frames })
    }

    pub fn zeros(n_basis: usize, n_frames: usize) -> Self {
        Self { data: vec![0.0; n_basis * n_frames], n_basis, n_frames }
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, basis: usize, frame: usize) -> f64 {
        self.data[basis * self.n_frames + frame]
    }

    /// One weight column (all basis coefficients of a frame).
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_basis).map(|j| self.at(j, frame)).collect()
    }
}

/// Output length of [`synthesize`] for a frame count.
pub fn synthesis_len(basis: &BasisMatrix, n_frames: usize) -> usize {
    if n_frames == 0 {
        0
    } else {
        (n_frames - 1) * basis.hop + basis.window_len
    }
}

/// Overlap-add synthesis: frame `f` contributes `B * W[:, f]` starting at
/// sample `f * hop`. Linear in the weights.
pub fn synthesize(basis: &BasisMatrix, weights: &WeightMatrix) -> Result<Vec<f64>> {
    if weights.n_basis != basis.n_basis {
        return Err(Error::shape("synthesize weights", basis.n_basis, weights.n_basis));
    }
    let mut out = vec![0.0f64; synthesis_len(basis, weights.n_frames)];
    for f in 0..weights.n_frames {
        let start = f * basis.hop;
        for t in 0..basis.window_len {
            let brow = &basis.data[t * basis.n_basis..(t + 1) * basis.n_basis];
            let mut acc = 0.0f64;
            for (j, &b) in brow.iter().enumerate() {
                acc += b * weights.at(j, f);
            }
            out[start + t] += acc;
        }
    }
    Ok(out)
}

/// Elementwise product of weights with a mask in `[0, 1]`.
pub fn apply_mask(weights: &WeightMatrix, mask: &[f64]) -> Result<WeightMatrix> {
    if mask.len() != weights.data.len() {
        return Err(Error::shape("apply_mask", weights.data.len(), mask.len()));
    }
    if mask.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(Error::InvalidArgument("mask entries must lie in [0, 1]".into()));
    }
    let data = weights.data.iter().zip(mask).map(|(w, m)| w * m).collect();
    WeightMatrix::new(data, weights.n_basis, weights.n_frames)
}

/// Result of a projected-gradient NNLS solve.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub weights: Vec<f64>,
    /// `||B v - w||_2` at the returned iterate.
    pub residual_norm: f64,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// `0.5 ||B v - w||^2` at start and after every iteration; non-increasing.
    pub objective_trace: Vec<f64>,
}

fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for (r, slot) in out.iter_mut().enumerate().take(rows) {
        let row = &m[r * cols..(r + 1) * cols];
        *slot = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn mat_t_vec(m: &[f64], rows: usize, cols: usize, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        let s = u[r];
        if s == 0.0 {
            continue;
        }
        for (slot, &a) in out.iter_mut().zip(row) {
            *slot += s * a;
        }
    }
}

/// Largest eigenvalue of `MᵀM` by power iteration, inflated 5% so that
/// `1 / L` is a safe descent step.
fn gram_spectral_bound(m: &[f64], rows: usize, cols: usize) -> f64 {
    let mut v = vec![1.0f64 / (cols as f64).sqrt(); cols];
    let mut mv = vec![0.0f64; rows];
    let mut mtmv = vec![0.0f64; cols];
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        mat_vec(m, rows, cols, &v, &mut mv);
        mat_t_vec(m, rows, cols, &mv, &mut mtmv);
        let norm = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return 0.0;
        }
        let prev = lambda;
        lambda = norm;
        for (a, b) in v.iter_mut().zip(&mtmv) {
            *a = b / norm;
        }
        if (lambda - prev).abs() <= 1e-13 * lambda {
            break;
        }
    }
    lambda * 1.05
}

/// Solves `min 0.5 ||M v - target||^2  s.t. v >= 0` by projected gradient
/// with the fixed Lipschitz step `1 / ||MᵀM||_2`. `matrix` is `[rows, cols]`
/// row-major. Stops when the relative objective change drops below `tol`.
pub fn nnls(
    matrix: &[f64],
    rows: usize,
    cols: usize,
    target: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NnlsSolution> {
    if matrix.len() != rows * cols {
        return Err(Error::shape("nnls matrix", rows * cols, matrix.len()));
    }
    if target.len() != rows {
        return Err(Error::shape("nnls target", rows, target.len()));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("nnls tol must be positive".into()));
    }
    let lipschitz = gram_spectral_bound(matrix, rows, cols);
    let mut v = vec![0.0f64; cols];
    let mut residual = vec![0.0f64; rows];
    let mut grad = vec![0.0f64; cols];

    let objective = |v: &[f64], residual: &mut [f64]| -> f64 {
        mat_vec(matrix, rows, cols, v, residual);
        let mut acc = 0.0;
        for (r, t) in residual.iter_mut().zip(target) {
            *r -= t;
            acc += *r * *r;
        }
        0.5 * acc
    };

    let mut f_prev = objective(&v, &mut residual);
    let mut trace = vec![f_prev];
    let mut converged = lipschitz == 0.0 || f_prev == 0.0;
    let mut iterations = 0;
    if !converged {
        let step = 1.0 / lipschitz;
        for it in 1..=max_iter {
            mat_t_vec(matrix, rows, cols, &residual, &mut grad);
            for (x, g) in v.iter_mut().zip(&grad) {
                *x = (*x - step * g).max(0.0);
            }
            let f = objective(&v, &mut residual);
            trace.push(f);
            iterations = it;
            let rel = (f_prev - f).abs() / f_prev.max(1e-300);
            f_prev = f;
            if rel < tol {
                converged = true;
                break;
            }
        }
    }
    Ok(NnlsSolution {
        weights: v,
        residual_norm: (2.0 * f_prev).sqrt(),
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// Nonnegative coefficients of a single window over the basis.
pub fn decompose_window(
    basis: &BasisMatrix,
    window: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NnlsSolution> {
    if window.len() != basis.window_len {
        return Err(Error::shape("decompose_window", basis.window_len, window.len()));
    }
    nnls(&basis.data, basis.window_len, basis.n_basis, window, tol, max_iter)
}

/// Number of analysis frames for a signal of `len` samples at the basis
/// stride (tail windows are zero-padded).
pub fn signal_frames(basis: &BasisMatrix, len: usize) -> usize {
    if len <= basis.window_len {
        1
    } else {
        (len - basis.window_len).div_ceil(basis.hop) + 1
    }
}

/// Per-frame NNLS decomposition of a whole signal. Frames are the raw
/// segments at stride `hop`; with an overlapping hop, overlap-add synthesis
/// of the result sums overlapping windows and reproduces the input only up
/// to scale. `threads` splits frames over workers; the result is
/// bit-identical for any thread count.
pub fn decompose_signal(
    basis: &BasisMatrix,
    signal: &[f64],
    tol: f64,
    max_iter: usize,
    threads: usize,
) -> Result<WeightMatrix> {
    if signal.is_empty() {
        return Err(Error::InvalidArgument("decompose_signal: empty signal".into()));
    }
    let n_frames = signal_frames(basis, signal.len());
    let wl = basis.window_len;
    let mut frames: Vec<Vec<f64>> = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * basis.hop;
        let mut w = vec![0.0f64; wl];
        for (t, slot) in w.iter_mut().enumerate() {
            if start + t < signal.len() {
                *slot = signal[start + t];
            }
        }
        frames.push(w);
    }

    let threads = threads.max(1).min(n_frames);
    fn solve_all(basis: &BasisMatrix, frames: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Vec<Vec<f64>>> {
        frames.iter().map(|w| decompose_window(basis, w, tol, max_iter).map(|s| s.weights)).collect()
    }
    let columns: Vec<Vec<f64>> = if threads == 1 {
        solve_all(basis, &frames, tol, max_iter)?
    } else {
        let chunk = n_frames.div_ceil(threads);
        let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
            frames
                .chunks(chunk)
                .map(|part| scope.spawn(move || solve_all(basis, part, tol, max_iter)))
                .collect::<Vec<_>>()
                .into_iter()
                .map(|h| h.join().expect("decompose worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(n_frames);
        for r in results {
            all.extend(r?);
        }
        all
    };

    let mut data = vec![0.0f64; basis.n_basis * n_frames];
    for (f, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            data[j * n_frames + f] = v;
        }
    }
    WeightMatrix::new(data, basis.n_basis, n_frames)
}

/// Controls for [`learn_basis`].
#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub window_len: usize,
    pub n_basis: usize,
    pub hop: usize,
    /// Outer alternating iterations; the objective is logged once per iteration.
    pub iters: usize,
    pub seed: u64,
    pub weight_steps: usize,
    pub basis_steps: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            window_len: 32,
            n_basis: 256,
            hop: 16,
            iters: 25,
            seed: 0,
            weight_steps: 3,
            basis_steps: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub basis: BasisMatrix,
    /// `0.5 ||B W - X||_F^2` after each outer iteration (first entry is the
    /// initial objective). Non-increasing by construction.
    pub objective_trace: Vec<f64>,
}

fn normalize_columns(data: &mut [f64], rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
    for j in 0..cols {
        let norm: f64 = (0..rows).map(|t| data[t * cols + j] * data[t * cols + j]).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for t in 0..rows {
                data[t * cols + j] /= norm;
            }
        } else {
            // dead atom: replace with a fresh random direction
            let col: Vec<f64> = (0..rows).map(|_| -> f64 { StandardNormal.sample(rng) }).collect();
            let n: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (t, c) in col.iter().enumerate() {
                data[t * cols + j] = c / n;
            }
        }
    }
}

/// Fits a basis to a corpus by alternating projected-gradient descent on
/// `0.5 ||B W - X||_F^2` with `W >= 0` and `B` unconstrained. Each inner step
/// uses the `1 / L` Lipschitz step of its subproblem, so the objective never
/// increases. Columns are normalized to unit norm after the final iteration.
pub fn learn_basis(corpus: &[Vec<f64>], cfg: &LearnConfig) -> Result<LearnOutcome> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("learn_basis: empty corpus".into()));
    }
    if cfg.window_len >= cfg.n_basis {
        return Err(Error::InvalidArgument(format!(
            "learn_basis: window_len {} must be < n_basis {}",
            cfg.window_len, cfg.n_basis
        )));
    }
    if cfg.hop == 0 || cfg.iters == 0 {
        return Err(Error::InvalidArgument("learn_basis: hop and iters must be >= 1".into()));
    }

    // Gather frames from every clip, frame-major [n_frames, window_len].
    let wl = cfg.window_len;
    let mut x: Vec<f64> = Vec::new();
    for clip in corpus {
        if clip.is_empty() {
            continue;
        }
        let n = if clip.len() <= wl { 1 } else { (clip.len() - wl).div_ceil(cfg.hop) + 1 };
        for f in 0..n {
            let start = f * cfg.hop;
            for t in 0..wl {
                x.push(if start + t < clip.len() { clip[start + t] } else { 0.0 });
            }
        }
    }
    let n_frames = x.len() / wl;
    if n_frames == 0 || x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput(
            "learn_basis: corpus contains no non-silent frames".into(),
        ));
    }

    let nb = cfg.n_basis;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // B: [wl, nb] row-major, random unit columns.
    let mut b: Vec<f64> = (0..wl * nb).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect();
    normalize_columns(&mut b, wl, nb, &mut rng);
    // W: [nb, n_frames] column-per-frame, stored frame-major [n_frames, nb]
    // for cache-friendly per-frame updates.
    let mut w = vec![0.0f64; n_frames * nb];

    let mut resid = vec![0.0f64; n_frames * wl]; // frame-major [n_frames, wl]
    let objective = |b: &[f64], w: &[f64], resid: &mut Vec<f64>| -> f64 {
        let mut acc = 0.0f64;
        for f in 0..n_frames {
            let wf = &w[f * nb..(f + 1) * nb];
            let xf = &x[f * wl..(f + 1) * wl];
            let rf = &mut resid[f * wl..(f + 1) * wl];
            for t in 0..wl {
                let brow = &b[t * nb..(t + 1) * nb];
                let mut s = -xf[t];
                for (bj, wj) in brow.iter().zip(wf) {
                    s += bj * wj;
                }
                rf[t] = s;
                acc += s * s;
            }
        }
        0.5 * acc
    };

    let mut trace = Vec::with_capacity(cfg.iters + 1);
    trace.push(objective(&b, &w, &mut resid));

    let mut grad_w = vec![0.0f64; nb];
    for _ in 0..cfg.iters {
        // W-step: projected gradient per frame with step 1/||BᵀB||.
        let lb = gram_spectral_bound(&b, wl, nb);
        if lb > 0.0 {
            let step = 1.0 / lb;
            for _ in 0..cfg.weight_steps.max(1) {
                for f in 0..n_frames {
                    let xf = &x[f * wl..(f + 1) * wl];
                    let wf = &mut w[f * nb..(f + 1) * nb];
                    // grad = Bᵀ(B wf - xf)
                    grad_w.iter_mut().for_each(|g| *g = 0.0);
                    for t in 0..wl {
                        let brow = &b[t * nb..(t + 1) * nb];
                        let mut s = -xf[t];
                        for (bj, wj) in brow.iter().zip(wf.iter()) {
                            s += bj * wj;
                        }
                        if s != 0.0 {
                            for (g, bj) in grad_w.iter_mut().zip(brow) {
                                *g += s * bj;
                            }
                        }
                    }
                    for (wv, g) in wf.iter_mut().zip(&grad_w) {
                        *wv = (*wv - step * g).max(0.0);
                    }
                }
            }
        }

        // B-step: gradient descent with step 1/||W Wᵀ||. The Gram bound needs
        // W as a [nb, n_frames]-shaped operator; our frame-major storage is
        // exactly its transpose, and ||Wᵀ(W v)|| has the same spectrum.
        let lw = gram_spectral_bound(&w, n_frames, nb);
        if lw > 0.0 {
            let step = 1.0 / lw;
            for _ in 0..cfg.basis_steps.max(1) {
                objective(&b, &w, &mut resid); // refresh residuals
                // grad_B[t][j] = sum_f resid[f][t] * w[f][j]
                for t in 0..wl {
                    let mut grad_row = vec![0.0f64; nb];
                    for f in 0..n_frames {
                        let r = resid[f * wl + t];
                        if r == 0.0 {
                            continue;
                        }
                        let wf = &w[f * nb..(f + 1) * nb];
                        for (g, wj) in grad_row.iter_mut().zip(wf) {
                            *g += r * wj;
                        }
                    }
                    let brow = &mut b[t * nb..(t + 1) * nb];
                    for (bv, g) in brow.iter_mut().zip(&grad_row) {
                        *bv -= step * g;
                    }
                }
            }
        }

        trace.push(objective(&b, &w, &mut resid));
    }

    normalize_columns(&mut b, wl, nb, &mut rng);
    Ok(LearnOutcome {
        basis: BasisMatrix::new(b, wl, nb, cfg.hop)?,
        objective_trace: trace,
    })
}

/// Writes a basis to a tensor archive under `basis.matrix` (shape
/// `[window_len, n_basis]`) plus the scalar `basis.hop`. Storage is f32.
pub fn save_basis(path: &std::path::Path, basis: &BasisMatrix) -> Result<()> {
    use crate::io::archive::{archive_write, TensorEntry};
    let entries = vec![
        TensorEntry::new(
            "basis.matrix",
            vec![basis.window_len, basis.n_basis],
            basis.data.iter().map(|&v| v as f32).collect(),
        )?,
        TensorEntry::scalar("basis.hop", basis.hop as f32),
    ];
    archive_write(path, &entries)
}

pub fn load_basis(path: &std::path::Path) -> Result<BasisMatrix> {
    use crate::io::archive::{archive_read, find_entry};
    let entries = archive_read(path)?;
    let m = find_entry(&entries, "basis.matrix")?;
    if m.dims.len() != 2 {
        return Err(Error::Archive(format!(
            "basis.matrix must be 2-D, got dims {:?}",
            m.dims
        )));
    }
    let hop = find_entry(&entries, "basis.hop")?
        .data
        .first()
        .copied()
        .ok_or_else(|| Error::Archive("basis.hop is empty".into()))? as usize;
    BasisMatrix::new(m.data.iter().map(|&v| f64::from(v)).collect(), m.dims[0], m.dims[1], hop)
}

/// Scale-invariant signal-to-noise ratio in dB: both signals are mean-
/// removed, the estimate is projected onto the target, and the ratio of
/// projection to residual energy is reported, clamped to
/// +/-[`SI_SNR_CAP_DB`].
pub fn si_snr(estimate: &[f64], target: &[f64]) -> Result<f64> {
    if estimate.len() != target.len() {
        return Err(Error::shape("si_snr lengths", target.len(), estimate.len()));
    }
    if target.is_empty() {
        return Err(Error::InvalidArgument("si_snr: empty signals".into()));
    }
    let n = target.len() as f64;
    let mean_e: f64 = estimate.iter().sum::<f64>() / n;
    let mean_t: f64 = target.iter().sum::<f64>() / n;
    let mut dot = 0.0f64;
    let mut t_energy = 0.0f64;
    for (&e, &t) in estimate.iter().zip(target) {
        let (e, t) = (e - mean_e, t - mean_t);
        dot += e * t;
        t_energy += t * t;
    }
    if t_energy == 0.0 {
        return Err(Error::DegenerateInput("si_snr: target is constant/zero".into()));
    }
    let alpha = dot / t_energy;
    let mut s_energy = 0.0f64;
    let mut n_energy = 0.0f64;
    for (&e, &t) in estimate.iter().zip(target) {
        let (e, t) = (e - mean_e, t - mean_t);
        let s = alpha * t;
        s_energy += s * s;
        n_energy += (e - s) * (e - s);
    }
    if n_energy == 0.0 {
        return Ok(SI_SNR_CAP_DB);
    }
    if s_energy == 0.0 {
        return Ok(-SI_SNR_CAP_DB);
    }
    Ok((10.0 * (s_energy / n_energy).log10()).clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_basis() -> BasisMatrix {
        // window_len 2, n_basis 3: columns e0, e1, (1,1)/sqrt(2)
        let s = 1.0 / 2.0f64.sqrt();
        BasisMatrix::new(vec![1.0, 0.0, s, 0.0, 1.0, s], 2, 3, 2).unwrap()
    }

    #[test]
    fn zero_weights_give_silence() {
        let b = toy_basis();
        let w = WeightMatrix::zeros(3, 4);
        let y = synthesize(&b, &w).unwrap();
        assert_eq!(y.len(), 3 * 2 + 2);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_selects_a_column() {
        let b = toy_basis();
        let w = WeightMatrix::new(vec![0.0, 0.0, 1.0], 3, 1).unwrap();
        let y = synthesize(&b, &w).unwrap();
        assert_eq!(y, b.column(2));
    }

    #[test]
    fn non_overlapping_frames_concatenate() {
        let b = toy_basis(); // hop == window_len == 2
        let w = WeightMatrix::new(vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0], 3, 2).unwrap();
        // frame 0: col0 * 1 = [1, 0]; frame 1: col1 * 2 = [0, 2]
        let y = synthesize(&b, &w).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn synthesize_rejects_mismatched_basis_count() {
        let b = toy_basis();
        let w = WeightMatrix::zeros(4, 1);
        assert!(synthesize(&b, &w).is_err());
    }

    #[test]
    fn mask_identity_zero_and_partition() {
        let w = WeightMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        let ones = vec![1.0; 4];
        assert_eq!(apply_mask(&w, &ones).unwrap().data(), w.data());
        let zeros = vec![0.0; 4];
        assert!(apply_mask(&w, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let m1 = vec![0.25, 0.5, 0.75, 1.0];
        let m2: Vec<f64> = m1.iter().map(|v| 1.0 - v).collect();
        let a = apply_mask(&w, &m1).unwrap();
        let b = apply_mask(&w, &m2).unwrap();
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(w.data()) {
            assert!((x + y - z).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_range_checked() {
        let w = WeightMatrix::zeros(1, 1);
        assert!(apply_mask(&w, &[1.5]).is_err());
        assert!(apply_mask(&w, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn nnls_zero_target_stays_zero() {
        let b = toy_basis();
        let sol = decompose_window(&b, &[0.0, 0.0], 1e-10, 100).unwrap();
        assert!(sol.weights.iter().all(|&v| v == 0.0));
        assert_eq!(sol.residual_norm, 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn nnls_recovers_representable_window() {
        let b = BasisMatrix::random(8, 24, 8, 7).unwrap();
        // build w from nonnegative coefficients
        let coeffs: Vec<f64> = (0..24).map(|j| if j % 5 == 0 { 0.7 + j as f64 * 0.01 } else { 0.0 }).collect();
        let mut w = vec![0.0f64; 8];
        for t in 0..8 {
            for (j, &c) in coeffs.iter().enumerate() {
                w[t] += b.at(t, j) * c;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sol = decompose_window(&b, &w, 1e-14, 5000).unwrap();
        assert!(sol.residual_norm < 1e-4 * norm, "residual {} vs {}", sol.residual_norm, norm);
    }

    #[test]
    fn nnls_objective_never_increases() {
        let b = BasisMatrix::random(8, 24, 8, 11).unwrap();
        let w: Vec<f64> = (0..8).map(|t| ((t * 13 % 7) as f64 - 3.0) / 3.0).collect();
        let sol = decompose_window(&b, &w, 1e-14, 300).unwrap();
        for pair in sol.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn nnls_matches_grid_search_on_2x2_toy() {
        // 2 samples, 2 atoms; exhaustive grid over v in [0,2]^2 at step 1e-3
        let m = vec![1.0, 0.4, -0.3, 0.9]; // row-major [2,2]
        let target = vec![0.8, 0.55];
        let sol = nnls(&m, 2, 2, &target, 1e-14, 10_000).unwrap();
        let obj = |v0: f64, v1: f64| {
            let r0 = m[0] * v0 + m[1] * v1 - target[0];
            let r1 = m[2] * v0 + m[3] * v1 - target[1];
            0.5 * (r0 * r0 + r1 * r1)
        };
        let mut best = f64::INFINITY;
        for i in 0..=2000 {
            for j in 0..=2000 {
                let f = obj(i as f64 * 1e-3, j as f64 * 1e-3);
                if f < best {
                    best = f;
                }
            }
        }
        let ours = obj(sol.weights[0], sol.weights[1]);
        assert!(ours <= best + 1e-3, "nnls {ours} vs grid {best}");
    }

    #[test]
    fn decompose_silence_is_zero() {
        let b = BasisMatrix::random(32, 256, 16, 3).unwrap();
        let w = decompose_signal(&b, &vec![0.0; 512], 1e-8, 200, 1).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decompose_threads_bit_identical() {
        let b = BasisMatrix::random(16, 48, 8, 5).unwrap();
        let sig: Vec<f64> = (0..200).map(|t| (t as f64 * 0.21).sin() * 0.5).collect();
        let a = decompose_signal(&b, &sig, 1e-10, 150, 1).unwrap();
        let c = decompose_signal(&b, &sig, 1e-10, 150, 4).unwrap();
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn si_snr_identity_and_scale() {
        let t: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        assert_eq!(si_snr(&t, &t).unwrap(), SI_SNR_CAP_DB);
        let e2: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_snr(&e2, &t).unwrap(), SI_SNR_CAP_DB);
    }

    #[test]
    fn si_snr_hand_projection_case() {
        // t = [1,1,-1,-1], e = [1,0,1,-2]; both zero-mean.
        // alpha = <e,t>/<t,t> = 2/4; s = alpha t, ||s||^2 = 1, ||e-s||^2 = 5
        let t = [1.0, 1.0, -1.0, -1.0];
        let e = [1.0, 0.0, 1.0, -2.0];
        let v = si_snr(&e, &t).unwrap();
        let expected = 10.0 * (1.0f64 / 5.0).log10();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!(v <= 0.0);
    }

    #[test]
    fn si_snr_orthogonal_hits_negative_cap() {
        let t = [1.0, 1.0, -1.0, -1.0];
        let e = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(si_snr(&e, &t).unwrap(), -SI_SNR_CAP_DB);
    }

    #[test]
    fn si_snr_zero_target_is_error() {
        let t = [0.5, 0.5, 0.5]; // constant => zero after mean removal
        assert!(si_snr(&[1.0, 2.0, 3.0], &t).is_err());
    }

    #[test]
    fn basis_invariants_enforced() {
        assert!(BasisMatrix::new(vec![0.0; 4], 2, 2, 1).is_err()); // not overcomplete
        assert!(BasisMatrix::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0], 2, 3, 1).is_err()); // zero col
        assert!(WeightMatrix::new(vec![-0.1], 1, 1).is_err());
    }

    #[test]
    fn learned_columns_unit_norm() {
        let corpus: Vec<Vec<f64>> =
            (0..3).map(|c| (0..160).map(|t| ((t + c * 31) as f64 * 0.17).sin()).collect()).collect();
        let cfg = LearnConfig { window_len: 8, n_basis: 16, hop: 4, iters: 5, ..Default::default() };
        let out = learn_basis(&corpus, &cfg).unwrap();
        for j in 0..16 {
            let norm: f64 = out.basis.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "column {j}: {norm}");
        }
    }

    #[test]
    fn learn_rejects_silence() {
        let corpus = vec![vec![0.0; 100], vec![0.0; 50]];
        let cfg = LearnConfig { window_len: 8, n_basis: 16, hop: 4, iters: 3, ..Default::default() };
        assert!(learn_basis(&corpus, &cfg).is_err());
    }
}

//! Deterministic 1-D convolution kernels and pointwise ops.
//!
//! All kernels operate on channels-first [`FeatureMap`]s stored contiguously
//! as `f32` and accumulate in `f64`, so identical inputs produce bit-identical
//! outputs on every platform. Each kernel also reports the number of
//! multiply-adds it actually performed (zero-padding taps are skipped and not
//! counted), which the graph analyzer cross-checks against its analytic model.

use crate::error::{Error, Result};

/// Channels-first real matrix `[channels, time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Vec<f32>,
    channels: usize,
    time: usize,
}

impl FeatureMap {
    pub fn new(data: Vec<f32>, channels: usize, time: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("FeatureMap channels must be > 0".into()));
        }
        if data.len() != channels * time {
            return Err(Error::shape(
                "FeatureMap::new",
                format!("{} values ({channels} x {time})", channels * time),
                data.len(),
            ));
        }
        Ok(Self { data, channels, time })
    }

    pub fn zeros(channels: usize, time: usize) -> Self {
        Self { data: vec![0.0; channels * time], channels, time }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// One channel as a contiguous slice.
    pub fn row(&self, channel: usize) -> &[f32] {
        &self.data[channel * self.time..(channel + 1) * self.time]
    }

    pub fn at(&self, channel: usize, t: usize) -> f32 {
        self.data[channel * self.time + t]
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("non-finite value after {context}")))
        }
    }
}

/// Parameters of a 1-D (possibly transposed) convolution.
///
/// Weight layout is `[out_channels, in_channels / groups, kernel_size]` for
/// plain convolutions and `[in_channels, out_channels / groups, kernel_size]`
/// for transposed ones, so a transposed convolution applied with the same
/// buffer as a plain one is its exact adjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
    pub transposed: bool,
    pub bias: bool,
}

impl ConvSpec {
    pub fn plain(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            dilation: 1,
            padding: 0,
            groups: 1,
            transposed: false,
            bias: true,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn transposed(mut self) -> Self {
        self.transposed = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::InvalidArgument(
                "kernel_size, stride and dilation must all be >= 1".into(),
            ));
        }
        if self.groups == 0 {
            return Err(Error::InvalidArgument("groups must be >= 1".into()));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::InvalidArgument(format!(
                "channels ({} in, {} out) must be divisible by groups ({})",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    /// Effective kernel extent under dilation.
    pub fn effective_kernel(&self) -> usize {
        self.dilation * (self.kernel_size - 1) + 1
    }

    /// Number of weight elements.
    pub fn weight_len(&self) -> usize {
        // both layouts hold out*in/groups*k elements
        self.out_channels * self.in_channels / self.groups * self.kernel_size
    }

    /// Output length for the given input length.
    pub fn output_len(&self, in_len: usize) -> usize {
        if self.transposed {
            if in_len == 0 {
                return 0;
            }
            let full = (in_len - 1) * self.stride + self.effective_kernel();
            full.saturating_sub(2 * self.padding)
        } else {
            let padded = in_len + 2 * self.padding;
            let ek = self.effective_kernel();
            if padded < ek {
                0
            } else {
                (padded - ek) / self.stride + 1
            }
        }
    }

    /// Exact multiply-add count for the given input length, skipping taps
    /// that fall in the zero padding. Matches what the kernels report.
    pub fn mac_count(&self, in_len: usize) -> u64 {
        let out_len = self.output_len(in_len);
        let mut taps = 0u64;
        if self.transposed {
            for t in 0..in_len {
                for j in 0..self.kernel_size {
                    let o = t * self.stride + j * self.dilation;
                    if o >= self.padding && o - self.padding < out_len {
                        taps += 1;
                    }
                }
            }
        } else {
            for ow in 0..out_len {
                for j in 0..self.kernel_size {
                    let iw = ow * self.stride + j * self.dilation;
                    if iw >= self.padding && iw - self.padding < in_len {
                        taps += 1;
                    }
                }
            }
        }
        taps * (self.in_channels / self.groups) as u64 * self.out_channels as u64
    }

    /// Bias additions performed (counted as 1 FLOP each by the analyzer).
    pub fn bias_count(&self, in_len: usize) -> u64 {
        if self.bias {
            (self.output_len(in_len) * self.out_channels) as u64
        } else {
            0
        }
    }
}

fn check_conv_args(
    x: &FeatureMap,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
) -> Result<()> {
    spec.validate()?;
    if x.channels != spec.in_channels {
        return Err(Error::shape("conv input channels", spec.in_channels, x.channels));
    }
    if weights.len() != spec.weight_len() {
        return Err(Error::shape("conv weights", spec.weight_len(), weights.len()));
    }
    match (spec.bias, bias) {
        (true, Some(b)) if b.len() != spec.out_channels => {
            Err(Error::shape("conv bias", spec.out_channels, b.len()))
        }
        (true, None) => Err(Error::InvalidArgument("spec requires a bias vector".into())),
        (false, Some(_)) => Err(Error::InvalidArgument("spec declares no bias".into())),
        _ => Ok(()),
    }
}

/// Direct-form 1-D convolution. Weights `[out, in/groups, k]`.
pub fn conv1d(
    x: &FeatureMap,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
) -> Result<FeatureMap> {
    conv1d_counted(x, spec, weights, bias, 1).map(|(y, _)| y)
}

/// As [`conv1d`], returning the multiply-add count and splitting output
/// channels over `threads` workers. Channel partitions are independent, so
/// the result is bit-identical for any thread count.
pub fn conv1d_counted(
    x: &FeatureMap,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
    threads: usize,
) -> Result<(FeatureMap, u64)> {
    if spec.transposed {
        return Err(Error::InvalidArgument(
            "conv1d called with a transposed spec; use conv_transpose1d".into(),
        ));
    }
    check_conv_args(x, spec, weights, bias)?;
    let out_len = spec.output_len(x.time);
    let mut out = FeatureMap::zeros(spec.out_channels, out_len);
    // Promote to f64 once and switch to layouts that make the per-output
    // work a handful of contiguous dot products: input goes time-major,
    // weights are regrouped as [oc][tap][in-channel].
    let time = x.time;
    let c = spec.in_channels;
    let icpg = c / spec.groups;
    let k = spec.kernel_size;
    let mut xt = vec![0.0f64; time * c];
    for ch in 0..c {
        for (t, &v) in x.row(ch).iter().enumerate() {
            xt[t * c + ch] = f64::from(v);
        }
    }
    let mut wt = vec![0.0f64; weights.len()];
    for oc in 0..spec.out_channels {
        for icl in 0..icpg {
            for j in 0..k {
                wt[(oc * k + j) * icpg + icl] = f64::from(weights[(oc * icpg + icl) * k + j]);
            }
        }
    }
    let macs = run_channel_chunks(out.data_mut(), out_len, spec.out_channels, threads, &|oc0, rows, dst| {
        conv_rows(&xt, time, spec, &wt, bias, oc0, rows, dst)
    });
    Ok((out, macs))
}

/// Contiguous dot product with four running partials.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (pa, pb) in ca.zip(cb) {
        acc[0] += pa[0] * pb[0];
        acc[1] += pa[1] * pb[1];
        acc[2] += pa[2] * pb[2];
        acc[3] += pa[3] * pb[3];
    }
    let mut t = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        t += x * y;
    }
    t
}

/// Output positions are processed in tiles with the channel loop inside, so
/// a tile of the time-major input stays cache-resident while every output
/// channel consumes it and the weights stream once per tile.
const TIME_TILE: usize = 64;

fn conv_rows(
    xt: &[f64],
    time: usize,
    spec: &ConvSpec,
    wt: &[f64],
    bias: Option<&[f32]>,
    oc0: usize,
    rows: usize,
    dst: &mut [f32],
) -> u64 {
    let c = spec.in_channels;
    let icpg = c / spec.groups;
    let oc_per_group = spec.out_channels / spec.groups;
    let (k, s, d, p) = (spec.kernel_size, spec.stride, spec.dilation, spec.padding);
    let out_len = if rows == 0 { 0 } else { dst.len() / rows };
    let mut macs = 0u64;
    for tile in (0..out_len).step_by(TIME_TILE) {
        let tile_end = (tile + TIME_TILE).min(out_len);
        for r in 0..rows {
            let oc = oc0 + r;
            let ic0 = (oc / oc_per_group) * icpg;
            let b = bias.map_or(0.0, |b| f64::from(b[oc]));
            for ow in tile..tile_end {
                // valid tap range: 0 <= ow*s + j*d - p < time
                let base = ow * s;
                let j_lo = if base >= p { 0 } else { (p - base).div_ceil(d) };
                let j_hi = if time + p > base { (((time + p - base - 1) / d) + 1).min(k) } else { 0 };
                let mut acc = b;
                for j in j_lo..j_hi {
                    let t = base + j * d - p;
                    let xrow = &xt[t * c + ic0..t * c + ic0 + icpg];
                    let wrow = &wt[(oc * k + j) * icpg..(oc * k + j + 1) * icpg];
                    acc += dot(xrow, wrow);
                }
                macs += (j_hi.saturating_sub(j_lo)) as u64 * icpg as u64;
                dst[r * out_len + ow] = acc as f32;
            }
        }
    }
    macs
}

/// Transposed 1-D convolution (fractionally strided). Weights
/// `[in, out/groups, k]`; with `stride` equal to the upsampling factor this
/// is the exact adjoint of [`conv1d`] with the same weight buffer.
pub fn conv_transpose1d(
    x: &FeatureMap,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
) -> Result<FeatureMap> {
    conv_transpose1d_counted(x, spec, weights, bias, 1).map(|(y, _)| y)
}

pub fn conv_transpose1d_counted(
    x: &FeatureMap,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
    threads: usize,
) -> Result<(FeatureMap, u64)> {
    if !spec.transposed {
        return Err(Error::InvalidArgument(
            "conv_transpose1d requires spec.transposed".into(),
        ));
    }
    check_conv_args(x, spec, weights, bias)?;
    let out_len = spec.output_len(x.time);
    let mut out = FeatureMap::zeros(spec.out_channels, out_len);
    // gather form with the same layouts as conv1d: per output position,
    // each valid tap is one contiguous dot over the input channels
    let time = x.time;
    let c = spec.in_channels;
    let icpg = c / spec.groups;
    let ocpg = spec.out_channels / spec.groups;
    let k = spec.kernel_size;
    let mut xt = vec![0.0f64; time * c];
    for ch in 0..c {
        for (t, &v) in x.row(ch).iter().enumerate() {
            xt[t * c + ch] = f64::from(v);
        }
    }
    // weights [in, out/groups, k] regrouped as [oc][tap][in-channel-in-group]
    let mut wt = vec![0.0f64; weights.len()];
    for oc in 0..spec.out_channels {
        let group = oc / ocpg;
        let ocl = oc % ocpg;
        for icl in 0..icpg {
            let ic = group * icpg + icl;
            for j in 0..k {
                wt[(oc * k + j) * icpg + icl] = f64::from(weights[(ic * ocpg + ocl) * k + j]);
            }
        }
    }
    let macs = run_channel_chunks(out.data_mut(), out_len, spec.out_channels, threads, &|oc0, rows, dst| {
        conv_transpose_rows(&xt, time, spec, &wt, bias, oc0, rows, dst)
    });
    Ok((out, macs))
}

fn conv_transpose_rows(
    xt: &[f64],
    time: usize,
    spec: &ConvSpec,
    wt: &[f64],
    bias: Option<&[f32]>,
    oc0: usize,
    rows: usize,
    dst: &mut [f32],
) -> u64 {
    let c = spec.in_channels;
    let icpg = c / spec.groups;
    let ocpg = spec.out_channels / spec.groups;
    let (k, s, d, p) = (spec.kernel_size, spec.stride, spec.dilation, spec.padding);
    let out_len = if rows == 0 { 0 } else { dst.len() / rows };
    let mut macs = 0u64;
    for tile in (0..out_len).step_by(TIME_TILE) {
        let tile_end = (tile + TIME_TILE).min(out_len);
        for r in 0..rows {
            let oc = oc0 + r;
            let ic0 = (oc / ocpg) * icpg;
            let b = bias.map_or(0.0, |b| f64::from(b[oc]));
            for o in tile..tile_end {
                // taps satisfy t*s + j*d == o + p with 0 <= t < time
                let target = o + p;
                let mut acc = b;
                for j in 0..k {
                    let jd = j * d;
                    if jd > target || (target - jd) % s != 0 {
                        continue;
                    }
                    let t = (target - jd) / s;
                    if t >= time {
                        continue;
                    }
                    let xrow = &xt[t * c + ic0..t * c + ic0 + icpg];
                    let wrow = &wt[(oc * k + j) * icpg..(oc * k + j + 1) * icpg];
                    acc += dot(xrow, wrow);
                    macs += icpg as u64;
                }
                dst[r * out_len + o] = acc as f32;
            }
        }
    }
    macs
}

/// Runs `f(first_channel, channel_count, rows)` over contiguous output
/// channel ranges, one per worker. Ranges are independent, so results are
/// bit-identical for any thread count.
fn run_channel_chunks(
    data: &mut [f32],
    out_len: usize,
    out_channels: usize,
    threads: usize,
    f: &(dyn Fn(usize, usize, &mut [f32]) -> u64 + Sync),
) -> u64 {
    let threads = threads.max(1).min(out_channels.max(1));
    if threads <= 1 || out_len == 0 {
        return f(0, out_channels, data);
    }
    let rows_per_chunk = out_channels.div_ceil(threads);
    let chunks: Vec<(usize, &mut [f32])> = data
        .chunks_mut(rows_per_chunk * out_len)
        .enumerate()
        .map(|(i, c)| (i * rows_per_chunk, c))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|(oc0, chunk)| {
                scope.spawn(move || {
                    let rows = chunk.len() / out_len;
                    f(oc0, rows, chunk)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("conv worker panicked")).sum()
    })
}

/// Elementwise `max(x, slope * x)`, `slope` in (0, 1).
pub fn leaky_relu(x: &FeatureMap, slope: f32) -> Result<FeatureMap> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::InvalidArgument(format!(
            "leaky_relu slope must be in [0, 1), got {slope}"
        )));
    }
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    Ok(out)
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &FeatureMap) -> FeatureMap {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub fn tanh(x: &FeatureMap) -> FeatureMap {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.tanh();
    }
    out
}

/// Per-channel `x * scale + shift`; inference-time folded batch norm.
pub fn affine_norm(x: &FeatureMap, scale: &[f32], shift: &[f32]) -> Result<FeatureMap> {
    if scale.len() != x.channels() || shift.len() != x.channels() {
        return Err(Error::shape(
            "affine_norm scale/shift",
            x.channels(),
            format!("{}/{}", scale.len(), shift.len()),
        ));
    }
    let mut out = x.clone();
    let time = x.time();
    for c in 0..x.channels() {
        let (s, b) = (f64::from(scale[c]), f64::from(shift[c]));
        for v in &mut out.data_mut()[c * time..(c + 1) * time] {
            *v = (f64::from(*v) * s + b) as f32;
        }
    }
    Ok(out)
}

/// Weights of one residual block: a dilated convolution followed by a
/// pointwise projection, both channel-preserving.
#[derive(Debug, Clone)]
pub struct ResidualBlockParams<'a> {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    /// Kernel size of the second convolution (1 for a pointwise projection).
    pub second_kernel: usize,
    pub slope: f32,
    pub conv_weight: &'a [f32],
    pub conv_bias: &'a [f32],
    pub second_weight: &'a [f32],
    pub second_bias: &'a [f32],
}

impl ResidualBlockParams<'_> {
    pub fn dilated_spec(&self) -> ConvSpec {
        ConvSpec::plain(self.channels, self.channels, self.kernel_size)
            .with_dilation(self.dilation)
            .with_padding(self.dilation * (self.kernel_size - 1) / 2)
    }

    pub fn second_spec(&self) -> ConvSpec {
        ConvSpec::plain(self.channels, self.channels, self.second_kernel)
            .with_padding((self.second_kernel - 1) / 2)
    }
}

/// `x + F(x)` with `F = leaky_relu -> dilated conv -> leaky_relu -> conv`.
///
/// Kernel sizes must be odd so matched padding preserves the time axis.
pub fn residual_dilated_block(x: &FeatureMap, params: &ResidualBlockParams) -> Result<FeatureMap> {
    residual_dilated_block_counted(x, params, 1).map(|(y, _)| y)
}

pub fn residual_dilated_block_counted(
    x: &FeatureMap,
    params: &ResidualBlockParams,
    threads: usize,
) -> Result<(FeatureMap, u64)> {
    if x.channels() != params.channels {
        return Err(Error::shape("residual block channels", params.channels, x.channels()));
    }
    if params.kernel_size.is_multiple_of(2) || params.second_kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "residual block kernel sizes must be odd for shape-preserving padding".into(),
        ));
    }
    let h = leaky_relu(x, params.slope)?;
    let (h, m1) = conv1d_counted(&h, &params.dilated_spec(), params.conv_weight, Some(params.conv_bias), threads)?;
    let h = leaky_relu(&h, params.slope)?;
    let (mut h, m2) =
        conv1d_counted(&h, &params.second_spec(), params.second_weight, Some(params.second_bias), threads)?;
    debug_assert_eq!(h.time(), x.time());
    for (o, &i) in h.data_mut().iter_mut().zip(x.data()) {
        *o += i;
    }
    Ok((h, m1 + m2))
}

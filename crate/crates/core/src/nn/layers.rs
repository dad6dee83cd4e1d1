use matrixmultiply::dgemm;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::tensor::Tensor3;
use crate::dsp::hann;
use crate::error::{Error, Result};
use crate::signal::SeededRng;

/// Added to the normalized power before the logarithm.
pub const STFT_FLOOR: f64 = 1e-6;

/// Maps normalized bin power to the layer output: the floor goes to -1 and
/// unit power to +1.
pub fn stft_level(p: f64) -> f64 {
    1.0 + 2.0 * (p + STFT_FLOOR).ln() / -STFT_FLOOR.ln()
}

fn stft_level_slope(p: f64) -> f64 {
    2.0 / (-STFT_FLOOR.ln() * (p + STFT_FLOOR))
}

/// A trainable array with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Self { value, grad: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// (out_ch, in_ch, kernel)
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// (outputs, inputs)
    pub weight: Param,
    pub bias: Param,
}

/// Zeroes impulses in place; returns the per-element keep mask.
///
/// The threshold moves with the median, but the kept set is locally
/// constant, so passing gradients through kept samples only is exact almost
/// everywhere.
fn blank(x: &mut Tensor3, k: f64) -> Vec<bool> {
    let len = x.length();
    let mut mask = Vec::with_capacity(x.data().len());
    for b in 0..x.batch() {
        let sample = x.sample_mut(b);
        let mags: Vec<f64> = (0..len).map(|t| sample[t].hypot(sample[len + t])).collect();
        let mut sorted = mags.clone();
        let (_, median, _) = sorted.select_nth_unstable_by(len / 2, f64::total_cmp);
        let limit = k * *median;
        let keep: Vec<bool> = mags.iter().map(|m| *m <= limit).collect();
        for (t, kept) in keep.iter().enumerate() {
            if !kept {
                sample[t] = 0.0;
                sample[len + t] = 0.0;
            }
        }
        mask.extend_from_slice(&keep);
        mask.extend_from_slice(&keep);
    }
    mask
}

/// Signal whose short-time spectrum an [`Stft`] layer takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StftView {
    /// The complex input itself.
    Iq,
    /// x², which turns BPSK-like phase flips into a spectral line.
    Square,
    /// |x|², the power envelope.
    Envelope,
}

impl StftView {
    pub fn as_str(self) -> &'static str {
        match self {
            StftView::Iq => "iq",
            StftView::Square => "square",
            StftView::Envelope => "envelope",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [StftView::Iq, StftView::Square, StftView::Envelope].into_iter().find(|v| v.as_str() == s)
    }

    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            StftView::Iq => z,
            StftView::Square => z * z,
            StftView::Envelope => Complex64::new(z.norm_sqr(), 0.0),
        }
    }

    /// Maps `g = dL/dRe(y) + j·dL/dIm(y)` back through `y = apply(z)`.
    fn chain(self, z: Complex64, g: Complex64) -> Complex64 {
        match self {
            StftView::Iq => g,
            StftView::Square => g * z.conj() * 2.0,
            StftView::Envelope => z * (2.0 * g.re),
        }
    }
}

/// Fixed short-time log-power spectra of a 2-channel (I, Q) input.
///
/// Output channel `v * frames + f` is frame `f` of view `v`; the length axis
/// holds the `nfft` frequency bins from -fs/2 upward, so later convolutions
/// slide along frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft {
    pub nfft: usize,
    pub hop: usize,
    pub views: Vec<StftView>,
    window: Vec<f64>,
    /// Σ w², so a unit-power white input sits near +1 in every bin.
    norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Noise blanker on a 2-channel (I, Q) input: zeroes every sample whose
    /// magnitude exceeds this multiple of the record's median magnitude.
    Blank(f64),
    Stft(Stft),
    Conv1d(Conv1d),
    Relu,
    MaxPool2,
    Dense(Dense),
    Dropout(f64),
    Softmax,
}

/// What a layer keeps from its forward pass for the backward pass.
pub(crate) enum Cache {
    Input(Tensor3),
    Spectra { input: Tensor3, spectra: Vec<Complex64> },
    Mask(Vec<bool>),
    Argmax { input_shape: [usize; 3], index: Vec<usize> },
    Scale(Option<Vec<f64>>),
    Nothing,
}

/// C = A·B + beta·C over strided row/column views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

impl Stft {
    pub fn new(nfft: usize, hop: usize, views: Vec<StftView>) -> Self {
        let window = hann(nfft);
        let norm = window.iter().map(|w| w * w).sum();
        Self { nfft, hop, views, window, norm }
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.nfft {
            0
        } else {
            (len - self.nfft) / self.hop + 1
        }
    }

    pub fn out_channels(&self, len: usize) -> usize {
        self.views.len() * self.frames(len)
    }

    fn forward(&self, x: &Tensor3) -> (Tensor3, Vec<Complex64>) {
        let (bsz, len, n) = (x.batch(), x.length(), self.nfft);
        let frames = self.frames(len);
        let channels = self.out_channels(len);
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut y = Tensor3::zeros(bsz, channels, n);
        let mut spectra = vec![Complex64::new(0.0, 0.0); bsz * channels * n];
        for b in 0..bsz {
            let (i, q) = x.sample(b).split_at(len);
            for (v, view) in self.views.iter().enumerate() {
                for f in 0..frames {
                    let ch = v * frames + f;
                    let buf = &mut spectra[(b * channels + ch) * n..][..n];
                    for (k, z) in buf.iter_mut().enumerate() {
                        let t = f * self.hop + k;
                        *z = view.apply(Complex64::new(i[t], q[t])) * self.window[k];
                    }
                    fft.process(buf);
                    let out = &mut y.sample_mut(b)[ch * n..(ch + 1) * n];
                    for (k, z) in buf.iter().enumerate() {
                        out[(k + n / 2) % n] = stft_level(z.norm_sqr() / self.norm);
                    }
                }
            }
        }
        (y, spectra)
    }

    fn backward(&self, x: &Tensor3, spectra: &[Complex64], dy: &Tensor3) -> Tensor3 {
        let (bsz, len, n) = (x.batch(), x.length(), self.nfft);
        let frames = self.frames(len);
        let channels = self.out_channels(len);
        let ifft = FftPlanner::new().plan_fft_inverse(n);
        let mut dx = Tensor3::zeros(bsz, 2, len);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..bsz {
            let g = dy.sample(b);
            let (i, q) = x.sample(b).split_at(len);
            let dxb = dx.sample_mut(b);
            for (v, view) in self.views.iter().enumerate() {
                for f in 0..frames {
                    let ch = v * frames + f;
                    let spec = &spectra[(b * channels + ch) * n..][..n];
                    for (k, z) in buf.iter_mut().enumerate() {
                        let p = spec[k].norm_sqr() / self.norm;
                        let dl_dp = g[ch * n + (k + n / 2) % n] * stft_level_slope(p) / self.norm;
                        *z = spec[k] * dl_dp;
                    }
                    // dL/dRe(y) + j·dL/dIm(y) = 2·w[t]·Σ_k a_k Y_k e^{+j2πkt/N}
                    ifft.process(&mut buf);
                    for (k, z) in buf.iter().enumerate() {
                        let t = f * self.hop + k;
                        let gx = view.chain(Complex64::new(i[t], q[t]), *z * (2.0 * self.window[k]));
                        dxb[t] += gx.re;
                        dxb[len + t] += gx.im;
                    }
                }
            }
        }
        dx
    }
}

impl Conv1d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut SeededRng) -> Self {
        let fan_in = in_ch * kernel;
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = (0..out_ch * fan_in).map(|_| rng.uniform(-limit, limit)).collect();
        Self { in_ch, out_ch, kernel, weight: Param::new(w), bias: Param::new(vec![0.0; out_ch]) }
    }

    fn im2col(&self, x: &[f64], len: usize, cols: &mut [f64]) {
        let pad = (self.kernel / 2) as isize;
        for ci in 0..self.in_ch {
            let xs = &x[ci * len..(ci + 1) * len];
            for k in 0..self.kernel {
                let row = &mut cols[(ci * self.kernel + k) * len..][..len];
                let shift = k as isize - pad;
                let lo = (-shift).max(0) as usize;
                let hi = (len as isize - shift).min(len as isize).max(0) as usize;
                row[..lo.min(len)].iter_mut().for_each(|v| *v = 0.0);
                if lo < hi {
                    let s = (lo as isize + shift) as usize;
                    row[lo..hi].copy_from_slice(&xs[s..s + hi - lo]);
                }
                row[hi.max(lo).min(len)..].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], len: usize, dx: &mut [f64]) {
        let pad = (self.kernel / 2) as isize;
        for ci in 0..self.in_ch {
            let dxs = &mut dx[ci * len..(ci + 1) * len];
            for k in 0..self.kernel {
                let row = &cols[(ci * self.kernel + k) * len..][..len];
                let shift = k as isize - pad;
                let lo = (-shift).max(0) as usize;
                let hi = (len as isize - shift).min(len as isize).max(0) as usize;
                if lo < hi {
                    let s = (lo as isize + shift) as usize;
                    for (d, r) in dxs[s..s + hi - lo].iter_mut().zip(&row[lo..hi]) {
                        *d += r;
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor3) -> Tensor3 {
        let (bsz, len) = (x.batch(), x.length());
        let ck = self.in_ch * self.kernel;
        let mut y = Tensor3::zeros(bsz, self.out_ch, len);
        let mut cols = vec![0.0; ck * len];
        for b in 0..bsz {
            self.im2col(x.sample(b), len, &mut cols);
            let yb = y.sample_mut(b);
            for (co, row) in yb.chunks_exact_mut(len).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias.value[co]);
            }
            gemm(self.out_ch, ck, len, &self.weight.value, (ck, 1), &cols, (len, 1), 1.0, yb, len);
        }
        y
    }

    fn backward(&mut self, x: &Tensor3, dy: &Tensor3, need_dx: bool) -> Option<Tensor3> {
        let (bsz, len) = (x.batch(), x.length());
        let ck = self.in_ch * self.kernel;
        let mut cols = vec![0.0; ck * len];
        let mut dcols = vec![0.0; ck * len];
        let mut dx = need_dx.then(|| Tensor3::zeros(bsz, self.in_ch, len));
        for b in 0..bsz {
            let dyb = dy.sample(b);
            self.im2col(x.sample(b), len, &mut cols);
            gemm(self.out_ch, len, ck, dyb, (len, 1), &cols, (1, len), 1.0, &mut self.weight.grad, ck);
            for (co, row) in dyb.chunks_exact(len).enumerate() {
                self.bias.grad[co] += row.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(ck, self.out_ch, len, &self.weight.value, (1, ck), dyb, (len, 1), 0.0, &mut dcols, len);
                self.col2im_add(&dcols, len, dx.sample_mut(b));
            }
        }
        dx
    }
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let w = (0..outputs * inputs).map(|_| rng.uniform(-limit, limit)).collect();
        Self { inputs, outputs, weight: Param::new(w), bias: Param::new(vec![0.0; outputs]) }
    }

    fn forward(&self, x: &Tensor3) -> Tensor3 {
        let bsz = x.batch();
        let mut y = Tensor3::zeros(bsz, self.outputs, 1);
        for row in y.data_mut().chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        let n = self.inputs;
        gemm(bsz, n, self.outputs, x.data(), (n, 1), &self.weight.value, (1, n), 1.0, y.data_mut(), self.outputs);
        y
    }

    fn backward(&mut self, x: &Tensor3, dy: &Tensor3, need_dx: bool) -> Option<Tensor3> {
        let bsz = x.batch();
        let (n, o) = (self.inputs, self.outputs);
        gemm(o, bsz, n, dy.data(), (1, o), x.data(), (n, 1), 1.0, &mut self.weight.grad, n);
        for row in dy.data().chunks_exact(o) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        need_dx.then(|| {
            let mut dx = vec![0.0; bsz * n];
            gemm(bsz, o, n, dy.data(), (o, 1), &self.weight.value, (n, 1), 0.0, &mut dx, n);
            Tensor3::from_vec(x.shape(), dx).expect("shape preserved")
        })
    }
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Blank(_) => "blank",
            Layer::Stft(_) => "stft",
            Layer::Conv1d(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool2 => "maxpool",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
            Layer::Softmax => "softmax",
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, (c, l): (usize, usize)) -> Result<(usize, usize)> {
        let mismatch = |expected: String| Error::ShapeMismatch { expected, actual: format!("({c}, {l})") };
        match self {
            Layer::Blank(_) if c != 2 => Err(mismatch("2 input channels (I, Q)".into())),
            Layer::Stft(_) if c != 2 => Err(mismatch("2 input channels (I, Q)".into())),
            Layer::Stft(s) if l < s.nfft => Err(mismatch(format!("length of at least {}", s.nfft))),
            Layer::Stft(s) => Ok((s.out_channels(l), s.nfft)),
            Layer::Conv1d(conv) if conv.in_ch != c => Err(mismatch(format!("{} input channels", conv.in_ch))),
            Layer::Conv1d(conv) => Ok((conv.out_ch, l)),
            Layer::MaxPool2 if l < 2 => Err(mismatch("length of at least 2".into())),
            Layer::MaxPool2 => Ok((c, l / 2)),
            Layer::Dense(d) if d.inputs != c * l => Err(mismatch(format!("{} flattened inputs", d.inputs))),
            Layer::Dense(d) => Ok((d.outputs, 1)),
            Layer::Softmax if l != 1 => Err(mismatch("(classes, 1)".into())),
            _ => Ok((c, l)),
        }
    }

    /// Inference-mode forward pass of this layer alone.
    pub fn infer(&self, x: Tensor3) -> Result<Tensor3> {
        Ok(self.forward(x, None, false)?.0)
    }

    pub(crate) fn forward(
        &self,
        x: Tensor3,
        dropout: Option<&mut SeededRng>,
        keep: bool,
    ) -> Result<(Tensor3, Cache)> {
        let shape = x.shape();
        let (c, l) = self.output_shape((shape[1], shape[2]))?;
        let cache_input = |x: Tensor3| if keep { Cache::Input(x) } else { Cache::Nothing };
        Ok(match self {
            Layer::Blank(k) => {
                let mut y = x;
                let mask = blank(&mut y, *k);
                (y, if keep { Cache::Mask(mask) } else { Cache::Nothing })
            }
            Layer::Stft(stft) => {
                let (y, spectra) = stft.forward(&x);
                let cache = if keep { Cache::Spectra { input: x, spectra } } else { Cache::Nothing };
                (y, cache)
            }
            Layer::Conv1d(conv) => (conv.forward(&x), cache_input(x)),
            Layer::Dense(d) => (d.forward(&x), cache_input(x)),
            Layer::Relu => {
                let mut y = x;
                let mask: Vec<bool> = y.data().iter().map(|v| *v > 0.0).collect();
                for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                (y, if keep { Cache::Mask(mask) } else { Cache::Nothing })
            }
            Layer::MaxPool2 => {
                let mut y = Tensor3::zeros(shape[0], c, l);
                let mut index = Vec::with_capacity(if keep { y.data().len() } else { 0 });
                let src = x.data();
                let inlen = shape[2];
                for (row, out) in y.data_mut().chunks_exact_mut(l).enumerate() {
                    let base = row * inlen;
                    for (t, o) in out.iter_mut().enumerate() {
                        let i = base + 2 * t;
                        // ties go to the first element
                        let j = if src[i + 1] > src[i] { i + 1 } else { i };
                        *o = src[j];
                        if keep {
                            index.push(j);
                        }
                    }
                }
                let cache = if keep { Cache::Argmax { input_shape: shape, index } } else { Cache::Nothing };
                (y, cache)
            }
            Layer::Dropout(rate) => match dropout {
                Some(rng) if *rate > 0.0 => {
                    let keep_scale = 1.0 / (1.0 - rate);
                    let mut y = x;
                    let scale: Vec<f64> =
                        (0..y.data().len()).map(|_| if rng.bernoulli(*rate) { 0.0 } else { keep_scale }).collect();
                    for (v, s) in y.data_mut().iter_mut().zip(&scale) {
                        *v *= s;
                    }
                    (y, Cache::Scale(keep.then_some(scale)))
                }
                _ => (x, Cache::Scale(None)),
            },
            Layer::Softmax => {
                let mut y = x;
                for row in y.data_mut().chunks_exact_mut(c) {
                    softmax_in_place(row);
                }
                (y, Cache::Nothing)
            }
        })
    }

    /// Accumulates parameter gradients and returns the input gradient when
    /// `need_dx` is set.
    pub(crate) fn backward(&mut self, dy: Tensor3, cache: Cache, need_dx: bool) -> Result<Option<Tensor3>> {
        Ok(match (self, cache) {
            (Layer::Stft(stft), Cache::Spectra { input, spectra }) => {
                need_dx.then(|| stft.backward(&input, &spectra, &dy))
            }
            (Layer::Conv1d(conv), Cache::Input(x)) => conv.backward(&x, &dy, need_dx),
            (Layer::Dense(d), Cache::Input(x)) => d.backward(&x, &dy, need_dx),
            (Layer::Relu | Layer::Blank(_), Cache::Mask(mask)) => {
                let mut dx = dy;
                for (v, m) in dx.data_mut().iter_mut().zip(&mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                Some(dx)
            }
            (Layer::MaxPool2, Cache::Argmax { input_shape, index }) => {
                let mut dx = Tensor3::zeros(input_shape[0], input_shape[1], input_shape[2]);
                let d = dx.data_mut();
                for (g, &j) in dy.data().iter().zip(&index) {
                    d[j] += g;
                }
                Some(dx)
            }
            (Layer::Dropout(_), Cache::Scale(scale)) => {
                let mut dx = dy;
                if let Some(scale) = scale {
                    for (v, s) in dx.data_mut().iter_mut().zip(&scale) {
                        *v *= s;
                    }
                }
                Some(dx)
            }
            (layer, _) => {
                return Err(Error::InvalidArgument(format!("no backward pass cached for {}", layer.kind())))
            }
        })
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

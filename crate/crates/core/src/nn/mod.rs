//! 1D convolutional classifier with hand-written backpropagation.

mod checkpoint;
mod layers;
mod tensor;
mod train;

use std::fmt;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layers::{stft_level, Conv1d, Dense, Layer, Param, Stft, StftView, STFT_FLOOR};
pub use tensor::Tensor3;
pub use train::{
    batch_order, evaluate_loss_accuracy, records_to_tensor, train, train_to_files, Adam, EpochLog,
    TrainConfig, TrainOutcome, LOG_HEADER,
};

use crate::error::{Error, Result};
use crate::signal::SeededRng;
use crate::RECORD_LEN;

const INIT_STREAM: u64 = 0x696e_6974;

/// One line of an architecture descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Blank { threshold: f64 },
    Stft { nfft: usize, hop: usize, views: Vec<StftView> },
    Conv { out: usize, kernel: usize },
    Relu,
    MaxPool2,
    Dense { out: usize },
    Dropout { rate: f64 },
    Softmax,
}

/// Text-describable network layout.
///
/// ```text
/// input 2 4096
/// conv 8 7
/// relu
/// maxpool 2
/// dense 18
/// softmax
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_len: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// `[conv(kernel) → relu → maxpool]` per width, then dense → relu →
    /// dropout → dense(classes) → softmax.
    pub fn conv_stack(widths: &[usize], kernel: usize, hidden: usize, dropout: f64, classes: usize) -> Self {
        let mut layers = Vec::new();
        for &w in widths {
            layers.extend([LayerSpec::Conv { out: w, kernel }, LayerSpec::Relu, LayerSpec::MaxPool2]);
        }
        layers.extend([
            LayerSpec::Dense { out: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense { out: classes },
            LayerSpec::Softmax,
        ]);
        Self { input_channels: 2, input_len: RECORD_LEN, layers }
    }

    /// `stft` front end, then `[conv(kernel) → relu → maxpool]` per width
    /// along the frequency axis, max-pooled down to one value per channel,
    /// then dense → relu → dropout → dense(classes) → softmax.
    ///
    /// The global pooling makes the features independent of where in the
    /// passband a signal sits.
    pub fn spectral_stack(
        blank: Option<f64>,
        stft: (usize, usize, &[StftView]),
        widths: &[usize],
        kernel: usize,
        hidden: usize,
        dropout: f64,
        classes: usize,
    ) -> Self {
        let (nfft, hop, views) = stft;
        let mut layers: Vec<LayerSpec> = blank.map(|threshold| LayerSpec::Blank { threshold }).into_iter().collect();
        layers.push(LayerSpec::Stft { nfft, hop, views: views.to_vec() });
        let mut len = nfft;
        for &w in widths {
            layers.extend([LayerSpec::Conv { out: w, kernel }, LayerSpec::Relu, LayerSpec::MaxPool2]);
            len /= 2;
        }
        while len > 1 {
            layers.push(LayerSpec::MaxPool2);
            len /= 2;
        }
        layers.extend([
            LayerSpec::Dense { out: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense { out: classes },
            LayerSpec::Softmax,
        ]);
        Self { input_channels: 2, input_len: RECORD_LEN, layers }
    }

    /// Default model, sized for CPU training.
    pub fn desk(classes: usize) -> Self {
        Self::spectral_stack(Some(4.0), (512, 128, &[StftView::Iq]), &[48, 64, 96, 128, 128], 5, 128, 0.5, classes)
    }

    /// Six raw-IQ convolution blocks into a 256-unit dense head: about
    /// 2.2 M parameters.
    pub fn raw_iq(classes: usize) -> Self {
        Self::conv_stack(&[16, 32, 48, 64, 96, 128], 7, 256, 0.5, classes)
    }

    pub fn class_count(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { out } => Some(*out),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("input {} {}\n", self.input_channels, self.input_len);
        for l in &self.layers {
            let line = match l {
                LayerSpec::Stft { nfft, hop, views } => {
                    let names: Vec<&str> = views.iter().map(|v| v.as_str()).collect();
                    format!("stft {nfft} {hop} {}", names.join(" "))
                }
                LayerSpec::Conv { out, kernel } => format!("conv {out} {kernel}"),
                LayerSpec::Blank { threshold } => format!("blank {threshold}"),
                LayerSpec::Relu => "relu".to_string(),
                LayerSpec::MaxPool2 => "maxpool 2".to_string(),
                LayerSpec::Dense { out } => format!("dense {out}"),
                LayerSpec::Dropout { rate } => format!("dropout {rate}"),
                LayerSpec::Softmax => "softmax".to_string(),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Config { line: n + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<usize> {
                f.get(i)
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|v| *v > 0)
                    .ok_or_else(|| err(&format!("'{}' needs positive integer arguments", f[0])))
            };
            let spec = match (f[0], f.len()) {
                ("input", 3) => {
                    if input.is_some() || !layers.is_empty() {
                        return Err(err("input must be the first line"));
                    }
                    input = Some((num(1)?, num(2)?));
                    continue;
                }
                ("stft", 3..) => {
                    let nfft = num(1)?;
                    if nfft % 2 == 1 {
                        return Err(err("stft length must be even"));
                    }
                    let mut views = Vec::new();
                    for name in &f[3..] {
                        let v = StftView::parse(name).ok_or_else(|| err(&format!("unknown stft view '{name}'")))?;
                        if views.contains(&v) {
                            return Err(err("repeated stft view"));
                        }
                        views.push(v);
                    }
                    if views.is_empty() {
                        views.push(StftView::Iq);
                    }
                    LayerSpec::Stft { nfft, hop: num(2)?, views }
                }
                ("conv", 3) => {
                    let kernel = num(2)?;
                    if kernel % 2 == 0 {
                        return Err(err("conv kernel must be odd for same padding"));
                    }
                    LayerSpec::Conv { out: num(1)?, kernel }
                }
                ("blank", 2) => {
                    let threshold: f64 = f[1].parse().map_err(|_| err("bad blanking threshold"))?;
                    if !(threshold.is_finite() && threshold > 0.0) {
                        return Err(err("blanking threshold must be positive"));
                    }
                    LayerSpec::Blank { threshold }
                }
                ("relu", 1) => LayerSpec::Relu,
                ("maxpool", 2) if f[1] == "2" => LayerSpec::MaxPool2,
                ("dense", 2) => LayerSpec::Dense { out: num(1)? },
                ("dropout", 2) => {
                    let rate: f64 = f[1].parse().map_err(|_| err("bad dropout rate"))?;
                    if !(0.0..1.0).contains(&rate) {
                        return Err(err("dropout rate must be in [0, 1)"));
                    }
                    LayerSpec::Dropout { rate }
                }
                ("softmax", 1) => LayerSpec::Softmax,
                _ => return Err(err(&format!("unrecognized layer '{line}'"))),
            };
            layers.push(spec);
        }
        let (input_channels, input_len) =
            input.ok_or_else(|| Error::Config { line: 0, msg: "missing input line".into() })?;
        let arch = Self { input_channels, input_len, layers };
        arch.shapes()?;
        Ok(arch)
    }

    /// Per-sample (channels, length) after each layer. Checks that the
    /// network ends in dense → softmax.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let bad = |msg: &str| Error::ArchitectureMismatch(msg.to_string());
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { .. }, LayerSpec::Softmax] => {}
            _ => return Err(bad("network must end with dense then softmax")),
        }
        if self.layers[..self.layers.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(bad("softmax is only allowed as the last layer"));
        }
        let mut shape = (self.input_channels, self.input_len);
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = match l {
                LayerSpec::Blank { .. } | LayerSpec::Stft { .. } if shape.0 != 2 => {
                    return Err(bad("blank and stft need 2 input channels"))
                }
                LayerSpec::Stft { nfft, .. } if shape.1 < *nfft => return Err(bad("stft longer than its input")),
                LayerSpec::Stft { nfft, hop, views } => (views.len() * ((shape.1 - nfft) / hop + 1), *nfft),
                LayerSpec::Conv { out, .. } => (*out, shape.1),
                LayerSpec::MaxPool2 if shape.1 < 2 => return Err(bad("maxpool on length < 2")),
                LayerSpec::MaxPool2 => (shape.0, shape.1 / 2),
                LayerSpec::Dense { out } => (*out, 1),
                _ => shape,
            };
            out.push(shape);
        }
        Ok(out)
    }
}

/// An instantiated network.
#[derive(Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    layers: Vec<Layer>,
    training: bool,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("layers", &self.layers.iter().map(Layer::kind).collect::<Vec<_>>())
            .field("classes", &self.class_count())
            .field("params", &self.param_count())
            .field("training", &self.training)
            .finish()
    }
}

impl Model {
    /// He-uniform weights, zero biases; each layer draws from its own
    /// sub-stream of `seed`.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.shapes()?;
        let root = SeededRng::new(seed, INIT_STREAM);
        let mut shape = (arch.input_channels, arch.input_len);
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            let mut rng = root.derive(i as u64);
            let layer = match spec {
                LayerSpec::Stft { nfft, hop, views } => Layer::Stft(Stft::new(*nfft, *hop, views.clone())),
                LayerSpec::Conv { out, kernel } => Layer::Conv1d(Conv1d::new(shape.0, *out, *kernel, &mut rng)),
                LayerSpec::Blank { threshold } => Layer::Blank(*threshold),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Dense { out } => Layer::Dense(Dense::new(shape.0 * shape.1, *out, &mut rng)),
                LayerSpec::Dropout { rate } => Layer::Dropout(*rate),
                LayerSpec::Softmax => Layer::Softmax,
            };
            shape = layer.output_shape(shape)?;
            layers.push(layer);
        }
        Ok(Self { arch: arch.clone(), layers, training: false })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count()
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.arch.input_channels, self.arch.input_len)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Dropout is applied only while training mode is on.
    pub fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grads(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        let (c, l) = self.input_shape();
        if x.channels() != c || x.length() != l || x.batch() == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("(batch ≥ 1, {c}, {l})"),
                actual: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Logits (pre-softmax), inference mode.
    pub fn logits(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            h = layer.forward(h, None, false)?.0;
        }
        Ok(h)
    }

    /// Class probabilities, one row per batch element. Dropout is the
    /// identity here regardless of the training flag.
    pub fn forward(&self, x: &Tensor3) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(x)?;
        let (probs, _) = Layer::Softmax.forward(logits, None, false)?;
        Ok(probs.rows())
    }

    fn check_labels(&self, x: &Tensor3, labels: &[usize]) -> Result<()> {
        if labels.len() != x.batch() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", x.batch()),
                actual: format!("{} labels", labels.len()),
            });
        }
        let classes = self.class_count();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(())
    }

    /// Mean cross-entropy without touching gradients. With training mode on,
    /// `dropout` supplies the masks.
    pub fn loss(&self, x: &Tensor3, labels: &[usize], dropout: Option<&mut SeededRng>) -> Result<f64> {
        self.check_input(x)?;
        self.check_labels(x, labels)?;
        let mut rng = if self.training { dropout } else { None };
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            h = layer.forward(h, rng.as_deref_mut(), false)?.0;
        }
        Ok(cross_entropy(&h, labels).0)
    }

    /// Mean cross-entropy of the batch; parameter gradients are accumulated
    /// into each `Param::grad` (call [`Model::zero_grads`] first).
    pub fn loss_and_backward(
        &mut self,
        x: &Tensor3,
        labels: &[usize],
        dropout: Option<&mut SeededRng>,
    ) -> Result<f64> {
        Ok(self.backprop(x, labels, dropout, false)?.0)
    }

    /// Like [`Model::loss_and_backward`], also returning the loss gradient
    /// with respect to the input.
    pub fn loss_and_input_gradient(
        &mut self,
        x: &Tensor3,
        labels: &[usize],
        dropout: Option<&mut SeededRng>,
    ) -> Result<(f64, Tensor3)> {
        let (loss, dx) = self.backprop(x, labels, dropout, true)?;
        Ok((loss, dx.expect("input gradient requested")))
    }

    fn backprop(
        &mut self,
        x: &Tensor3,
        labels: &[usize],
        dropout: Option<&mut SeededRng>,
        input_grad: bool,
    ) -> Result<(f64, Option<Tensor3>)> {
        self.check_input(x)?;
        self.check_labels(x, labels)?;
        let mut rng = if self.training { dropout } else { None };
        let body = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(body);
        let mut h = x.clone();
        for layer in &self.layers[..body] {
            let (out, cache) = layer.forward(h, rng.as_deref_mut(), true)?;
            caches.push(cache);
            h = out;
        }
        let (loss, mut grad) = cross_entropy(&h, labels);
        for (i, cache) in caches.into_iter().enumerate().rev() {
            match self.layers[i].backward(grad, cache, i > 0 || input_grad)? {
                Some(g) => grad = g,
                None => return Ok((loss, None)),
            }
        }
        Ok((loss, Some(grad)))
    }
}

/// Mean negative log-likelihood of the labels under softmax(logits) and its
/// gradient with respect to the logits.
fn cross_entropy(logits: &Tensor3, labels: &[usize]) -> (f64, Tensor3) {
    let c = logits.channels();
    let bsz = logits.batch();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (b, row) in grad.data_mut().chunks_exact_mut(c).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[b]];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / bsz as f64;
        }
        row[labels[b]] -= 1.0 / bsz as f64;
    }
    (loss / bsz as f64, grad)
}

#[cfg(test)]
mod tests;

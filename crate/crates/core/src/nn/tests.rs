use proptest::prelude::*;

use super::*;
use crate::dataset::DatasetRecord;

fn random_input(shape: [usize; 3], seed: u64) -> Tensor3 {
    let mut rng = SeededRng::new(seed, 5);
    let n = shape.iter().product();
    Tensor3::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).unwrap()
}

fn tiny_arch(c_in: usize, len: usize, w1: usize, w2: usize, hidden: usize, classes: usize) -> Architecture {
    Architecture {
        input_channels: c_in,
        input_len: len,
        layers: vec![
            LayerSpec::Conv { out: w1, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv { out: w2, kernel: 5 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Dense { out: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { out: classes },
            LayerSpec::Softmax,
        ],
    }
}

/// Worst relative error per layer index between backprop and central
/// differences.
fn gradient_errors(model: &mut Model, x: &Tensor3, labels: &[usize], dropout: &SeededRng) -> Vec<(String, f64)> {
    let eps = 1e-5;
    model.set_training(true);
    model.zero_grads();
    model.loss_and_backward(x, labels, Some(&mut dropout.clone())).unwrap();
    let mut out = Vec::new();
    for li in 0..model.layers().len() {
        let kind = model.layers()[li].kind();
        let nparams = model.layers()[li].params().len();
        let mut worst: f64 = 0.0;
        for pi in 0..nparams {
            let n = model.layers()[li].params()[pi].len();
            for k in 0..n {
                let analytic = model.layers()[li].params()[pi].grad[k];
                let orig = model.layers()[li].params()[pi].value[k];
                model.layers_mut()[li].params_mut()[pi].value[k] = orig + eps;
                let up = model.loss(x, labels, Some(&mut dropout.clone())).unwrap();
                model.layers_mut()[li].params_mut()[pi].value[k] = orig - eps;
                let down = model.loss(x, labels, Some(&mut dropout.clone())).unwrap();
                model.layers_mut()[li].params_mut()[pi].value[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
        if nparams > 0 {
            out.push((format!("{li}:{kind}"), worst));
        }
    }
    out
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for (seed, (c_in, len, w1, w2, hidden, classes)) in
        [(2, 16, 3, 4, 5, 3), (2, 23, 2, 3, 4, 4), (1, 12, 4, 2, 6, 2)].into_iter().enumerate()
    {
        let arch = tiny_arch(c_in, len, w1, w2, hidden, classes);
        let mut model = Model::new(&arch, seed as u64).unwrap();
        // non-zero biases so their gradients are exercised off the origin
        let mut rng = SeededRng::new(seed as u64, 77);
        for p in model.params_mut() {
            if p.len() <= 8 {
                p.value.iter_mut().for_each(|v| *v = rng.uniform(-0.1, 0.1));
            }
        }
        let x = random_input([3, c_in, len], seed as u64);
        let labels: Vec<usize> = (0..3).map(|i| i % classes).collect();
        let drop = SeededRng::new(seed as u64, 9);
        for (layer, err) in gradient_errors(&mut model, &x, &labels, &drop) {
            assert!(err < 1e-4, "shape set {seed}, layer {layer}: relative error {err}");
        }
    }
}

#[test]
fn forward_rows_are_distributions() {
    let model = Model::new(&Architecture::desk(18), 1).unwrap();
    let probs = model.forward(&random_input([2, 2, 4096], 3)).unwrap();
    assert_eq!(probs.len(), 2);
    for row in probs {
        assert_eq!(row.len(), 18);
        assert!(row.iter().all(|p| *p >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn wrong_input_shape_is_reported() {
    let model = Model::new(&Architecture::desk(18), 1).unwrap();
    let err = model.forward(&random_input([1, 2, 1000], 3)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("4096") && msg.contains("1000"), "{msg}");
    assert!(matches!(err, Error::ShapeMismatch { .. }));
}

#[test]
fn invalid_label_is_rejected() {
    let mut model = Model::new(&tiny_arch(2, 16, 2, 2, 3, 3), 0).unwrap();
    let x = random_input([1, 2, 16], 0);
    assert!(matches!(model.loss_and_backward(&x, &[3], None), Err(Error::InvalidLabel { label: 3, classes: 3 })));
}

#[test]
fn identity_kernel_convolution_is_passthrough() {
    let mut rng = SeededRng::new(0, 0);
    let mut conv = Conv1d::new(3, 3, 5, &mut rng);
    conv.weight.value.iter_mut().for_each(|w| *w = 0.0);
    for c in 0..3 {
        conv.weight.value[(c * 3 + c) * 5 + 2] = 1.0;
    }
    let x = random_input([2, 3, 11], 4);
    let (y, _) = Layer::Conv1d(conv).forward(x.clone(), None, false).unwrap();
    assert_eq!(y, x);
}

#[test]
fn maxpool_definition() {
    let x = Tensor3::from_vec([1, 1, 4], vec![1.0, 3.0, 2.0, 8.0]).unwrap();
    let (y, _) = Layer::MaxPool2.forward(x, None, false).unwrap();
    assert_eq!(y.data(), &[3.0, 8.0]);
    let odd = Tensor3::from_vec([1, 1, 5], vec![1.0, 3.0, 2.0, 8.0, 99.0]).unwrap();
    assert_eq!(Layer::MaxPool2.forward(odd, None, false).unwrap().0.data(), &[3.0, 8.0]);
}

#[test]
fn raw_iq_shapes_follow_the_closed_form() {
    let arch = Architecture::raw_iq(18);
    let shapes = arch.shapes().unwrap();
    let mut expect = (2, 4096);
    for (spec, shape) in arch.layers.iter().zip(&shapes) {
        expect = match spec {
            LayerSpec::Conv { out, .. } => (*out, expect.1),
            LayerSpec::MaxPool2 => (expect.0, expect.1 / 2),
            LayerSpec::Dense { out } => (*out, 1),
            _ => expect,
        };
        assert_eq!(*shape, expect);
    }
    assert_eq!(shapes[17], (128, 64));
    assert_eq!(*shapes.last().unwrap(), (18, 1));
    // convolutions plus the two dense layers
    let widths = [2, 16, 32, 48, 64, 96, 128];
    let conv: usize = widths.windows(2).map(|w| w[0] * w[1] * 7 + w[1]).sum();
    let expected = conv + 128 * 64 * 256 + 256 + 256 * 18 + 18;
    assert_eq!(Model::new(&arch, 0).unwrap().param_count(), expected);
}

#[test]
fn desk_shapes_follow_the_closed_form() {
    let arch = Architecture::desk(18);
    let shapes = arch.shapes().unwrap();
    assert_eq!(arch.layers[0], LayerSpec::Blank { threshold: 4.0 });
    assert_eq!(shapes[0], (2, 4096));
    // (4096 - 512) / 128 + 1 frames of 512 bins
    assert_eq!(shapes[1], (29, 512));
    let widths = [29, 48, 64, 96, 128, 128];
    for (i, w) in widths[1..].iter().enumerate() {
        assert_eq!(shapes[2 + 3 * i], (*w, 512 >> i));
        assert_eq!(shapes[4 + 3 * i], (*w, 256 >> i));
    }
    // pooled to a single value per channel before the dense head
    let head = shapes.iter().position(|s| s.1 == 1).unwrap();
    assert_eq!(shapes[head - 1], (128, 2));
    assert_eq!(shapes[head], (128, 1));
    assert_eq!(*shapes.last().unwrap(), (18, 1));
    let conv: usize = widths.windows(2).map(|w| w[0] * w[1] * 5 + w[1]).sum();
    let expected = conv + 128 * 128 + 128 + 128 * 18 + 18;
    assert_eq!(Model::new(&arch, 0).unwrap().param_count(), expected);
}

proptest! {
    #[test]
    fn same_padding_and_pooling_lengths(len in 2usize..300, c in 1usize..4, k in 0usize..4) {
        let kernel = 2 * k + 1;
        let mut rng = SeededRng::new(len as u64, 0);
        let conv = Layer::Conv1d(Conv1d::new(c, 2, kernel, &mut rng));
        let x = random_input([1, c, len], 1);
        let (y, _) = conv.forward(x, None, false).unwrap();
        prop_assert_eq!(y.shape(), [1, 2, len]);
        let (p, _) = Layer::MaxPool2.forward(y, None, false).unwrap();
        prop_assert_eq!(p.shape(), [1, 2, len / 2]);
    }
}

#[test]
fn uniform_output_gives_log_c_loss() {
    for (classes, expected) in [(18usize, 2.8904), (160, 5.0752)] {
        let arch = Architecture::conv_stack(&[2], 3, 4, 0.0, classes);
        let mut model = Model::new(&arch, 0).unwrap();
        if let Some(Layer::Dense(d)) = model.layers_mut().iter_mut().rev().find(|l| l.kind() == "dense") {
            d.weight.value.iter_mut().for_each(|w| *w = 0.0);
        }
        let x = random_input([4, 2, 4096], 1);
        let labels = [0, 1, 2, classes - 1];
        let loss = model.loss_and_backward(&x, &labels, None).unwrap();
        assert!((loss - (classes as f64).ln()).abs() < 1e-12);
        assert!((loss - expected).abs() < 1e-4);
    }
}

#[test]
fn dropout_contract() {
    let rate = 0.3;
    let layer = Layer::Dropout(rate);
    let x = Tensor3::from_vec([4, 10, 2500], vec![2.0; 100_000]).unwrap();
    let (eval, _) = layer.forward(x.clone(), None, false).unwrap();
    assert_eq!(eval, x);
    let (y, _) = layer.forward(x, Some(&mut SeededRng::new(1, 1)), false).unwrap();
    let zeros = y.data().iter().filter(|v| **v == 0.0).count() as f64 / 100_000.0;
    let sigma = (rate * (1.0 - rate) / 100_000.0).sqrt();
    assert!((zeros - rate).abs() < 4.0 * sigma, "{zeros}");
    let survivor = 2.0 / (1.0 - rate);
    assert!(y.data().iter().all(|v| *v == 0.0 || (*v - survivor).abs() < 1e-12));

    // a model in inference mode ignores the dropout stream entirely
    let mut model = Model::new(&tiny_arch(2, 16, 2, 2, 3, 3), 0).unwrap();
    let x = random_input([2, 2, 16], 0);
    let a = model.loss(&x, &[0, 1], Some(&mut SeededRng::new(1, 1))).unwrap();
    let b = model.loss(&x, &[0, 1], None).unwrap();
    assert_eq!(a, b);
    model.set_training(true);
    let c = model.loss(&x, &[0, 1], Some(&mut SeededRng::new(1, 1))).unwrap();
    assert_ne!(a, c);
}

#[test]
fn lr_schedule_steps() {
    let config = TrainConfig::default();
    assert_eq!(config.lr_at(0), 1e-3);
    assert_eq!(config.lr_at(9), 1e-3);
    assert_eq!(config.lr_at(10), 5e-4);
    assert!((config.lr_at(25) - 2.5e-4).abs() < 1e-18);
    assert!((config.lr_at(24) - 2.5e-4).abs() < 1e-18);
    assert!(TrainConfig { lr_decay: 0.0, ..config.clone() }.validate().is_err());
    assert!(TrainConfig { epochs: 0, ..config }.validate().is_err());
}

#[test]
fn shuffle_is_reproducible() {
    assert_eq!(batch_order(1000, 5, 3), batch_order(1000, 5, 3));
    assert_ne!(batch_order(1000, 5, 3), batch_order(1000, 5, 4));
    let mut sorted = batch_order(1000, 5, 3);
    sorted.sort();
    assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut model = Model::new(&tiny_arch(2, 16, 2, 2, 3, 3), 0).unwrap();
    let before: Vec<Vec<f64>> = model.params().iter().map(|p| p.value.clone()).collect();
    let grads: Vec<Vec<f64>> = model.params().iter().map(|p| p.value.iter().map(|v| v * 3.0 + 0.5).collect()).collect();
    for (p, g) in model.params_mut().into_iter().zip(&grads) {
        p.grad.clone_from(g);
    }
    Adam::new(0.9, 0.999, 1e-8).step(&mut model, 0.01);
    for ((p, b), g) in model.params().iter().zip(&before).zip(&grads) {
        for k in 0..p.len() {
            // m̂ = g and v̂ = g² after one step
            let expected = b[k] - 0.01 * g[k] / (g[k].abs() + 1e-8);
            assert!((p.value[k] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hfnn");
    let model = Model::new(&Architecture::desk(18), 11).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.params(), model.params());
    let x = random_input([2, 2, 4096], 8);
    assert_eq!(model.forward(&x).unwrap(), loaded.forward(&x).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    let dlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12 + dlen..20 + dlen].try_into().unwrap());
    assert_eq!(count as usize, model.param_count());
    assert_eq!(bytes.len(), 20 + dlen + 8 * model.param_count());

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(model_from_bytes(&bad), Err(Error::BadMagic { .. })));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(model_from_bytes(&v2), Err(Error::UnsupportedVersion(2))));
    let mut wrong_count = bytes.clone();
    wrong_count[12 + dlen] ^= 1;
    assert!(matches!(model_from_bytes(&wrong_count), Err(Error::ArchitectureMismatch(_))));
    assert!(model_from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn architecture_text_round_trip() {
    for arch in [Architecture::desk(18), Architecture::raw_iq(160), tiny_arch(1, 12, 4, 2, 6, 2)] {
        assert_eq!(Architecture::parse(&arch.to_text()).unwrap(), arch);
    }
    assert!(Architecture::parse("input 2 64\nconv 4 4\ndense 2\nsoftmax\n").is_err());
    assert!(Architecture::parse("input 2 64\nconv 4 3\nsoftmax\n").is_err());
    assert!(Architecture::parse("input 2 64\nconv 4 3\nsoftmax\ndense 2\nsoftmax\n").is_err());
    assert!(Architecture::parse("conv 4 3\ndense 2\nsoftmax\n").is_err());
    assert!(Architecture::parse("input 2 64\ndropout 1.0\ndense 2\nsoftmax\n").is_err());
}

#[test]
fn records_become_iq_channels() {
    let mut iq = vec![num_complex::Complex32::new(0.0, 0.0); 4096];
    iq[5] = num_complex::Complex32::new(1.5, -2.0);
    let r = DatasetRecord::new(0, iq).unwrap();
    let t = records_to_tensor(&[&r]);
    assert_eq!(t.shape(), [1, 2, 4096]);
    assert_eq!(t.data()[5], 1.5);
    assert_eq!(t.data()[4096 + 5], -2.0);
}

#[test]
fn stft_input_gradient_matches_finite_differences() {
    let views = vec![StftView::Iq, StftView::Square, StftView::Envelope];
    let mut layer = Layer::Stft(Stft::new(8, 3, views));
    let x = random_input([2, 2, 20], 11);
    let (y, cache) = layer.forward(x.clone(), None, true).unwrap();
    let g = random_input(y.shape(), 12);
    let dx = layer.backward(g.clone(), cache, true).unwrap().unwrap();
    let objective = |x: Tensor3| -> f64 {
        let y = layer.infer(x).unwrap();
        y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
    };
    let eps = 1e-6;
    for k in 0..x.data().len() {
        let mut up = x.clone();
        up.data_mut()[k] += eps;
        let mut down = x.clone();
        down.data_mut()[k] -= eps;
        let numeric = (objective(up) - objective(down)) / (2.0 * eps);
        let analytic = dx.data()[k];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        assert!(rel < 1e-4, "input {k}: analytic {analytic} numeric {numeric}");
    }
}

#[test]
fn blanker_removes_impulses_and_passes_gaussian_noise() {
    let len = 2000;
    let mut x = random_input([1, 2, len], 21);
    let clean = x.clone();
    let hits = [17, 400, 1333];
    for &t in &hits {
        x.data_mut()[t] = 40.0;
        x.data_mut()[len + t] = -25.0;
    }
    let mut layer = Layer::Blank(6.0);
    let (y, cache) = layer.forward(x.clone(), None, true).unwrap();
    for t in 0..len {
        let (i, q) = (y.data()[t], y.data()[len + t]);
        if hits.contains(&t) {
            assert_eq!((i, q), (0.0, 0.0));
        } else {
            assert_eq!((i, q), (clean.data()[t], clean.data()[len + t]));
        }
    }
    // gradient is the identity on kept samples and zero on blanked ones
    let g = random_input([1, 2, len], 22);
    let dx = layer.backward(g.clone(), cache, true).unwrap().unwrap();
    for t in 0..len {
        let expect = if hits.contains(&t) { 0.0 } else { g.data()[t] };
        assert_eq!(dx.data()[t], expect);
    }
}

#[test]
fn blank_descriptor_lines() {
    let arch = Architecture::parse("input 2 64\nblank 3.5\nconv 2 3\ndense 2\nsoftmax\n").unwrap();
    assert_eq!(arch.layers[0], LayerSpec::Blank { threshold: 3.5 });
    assert_eq!(Architecture::parse(&arch.to_text()).unwrap(), arch);
    for bad in ["blank 0", "blank -1", "blank x", "blank"] {
        let text = format!("input 2 64\n{bad}\ndense 2\nsoftmax\n");
        assert!(Architecture::parse(&text).is_err(), "{bad}");
    }
    assert!(Architecture::parse("input 3 64\nblank 4\ndense 2\nsoftmax\n").is_err());
}

#[test]
fn gradients_flow_through_stft_front_end() {
    let arch = Architecture {
        input_channels: 2,
        input_len: 40,
        layers: vec![
            LayerSpec::Blank { threshold: 3.0 },
            LayerSpec::Stft { nfft: 16, hop: 8, views: vec![StftView::Envelope, StftView::Iq] },
            LayerSpec::Conv { out: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Dense { out: 3 },
            LayerSpec::Softmax,
        ],
    };
    let mut model = Model::new(&arch, 4).unwrap();
    let x = random_input([2, 2, 40], 4);
    for (layer, err) in gradient_errors(&mut model, &x, &[0, 2], &SeededRng::new(0, 0)) {
        assert!(err < 1e-4, "{layer}: {err}");
    }
}

#[test]
fn stft_places_a_tone_in_its_bin() {
    // 16-point transform, tone at bin +3 → shifted index 8 + 3
    let n = 64;
    let data: Vec<f64> = (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / 16.0).cos())
        .chain((0..n).map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / 16.0).sin()))
        .collect();
    let layer = Layer::Stft(Stft::new(16, 16, vec![StftView::Iq, StftView::Square, StftView::Envelope]));
    let y = layer.infer(Tensor3::from_vec([1, 2, n], data).unwrap()).unwrap();
    assert_eq!(y.shape(), [1, 12, 16]);
    // x² doubles the frequency; a constant envelope is all DC
    for (ch, frame) in y.data().chunks(16).enumerate() {
        let peak = (0..16).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
        assert_eq!(peak, [11, 14, 8][ch / 4], "channel {ch}");
    }
}

#[test]
fn stft_descriptor_lines() {
    let text = "input 2 64\nstft 16 8 envelope square\ndense 2\nsoftmax\n";
    let arch = Architecture::parse(text).unwrap();
    assert_eq!(arch.layers[0], LayerSpec::Stft { nfft: 16, hop: 8, views: vec![StftView::Envelope, StftView::Square] });
    assert_eq!(arch.shapes().unwrap()[0], (14, 16));
    let plain = Architecture::parse("input 2 64\nstft 16 8\ndense 2\nsoftmax\n").unwrap();
    assert_eq!(plain.layers[0], LayerSpec::Stft { nfft: 16, hop: 8, views: vec![StftView::Iq] });
    for bad in ["stft 15 8", "stft 16 8 iq iq", "stft 16 8 phase", "stft 128 8"] {
        assert!(Architecture::parse(&format!("input 2 64\n{bad}\ndense 2\nsoftmax\n")).is_err(), "{bad}");
    }
    assert!(Architecture::parse("input 1 64\nstft 16 8\ndense 2\nsoftmax\n").is_err());
}

use candle_core::{DType, Device, Tensor, Var};
use proptest::prelude::*;

use super::*;
use crate::nn::masked::Reduction;

fn dev() -> Device {
    Device::Cpu
}

fn tiny_cfg() -> RefEncoderConfig {
    RefEncoderConfig { conv_channels: vec![4, 8], gru_hidden: 8, embed_dim: 16 }
}

#[test]
fn emotion_encoder_shape_and_determinism() {
    let mut store = ParamStore::new(3, dev());
    let cfg = tiny_cfg();
    let enc = RefEncoder::new(&mut store, "e", 16, &cfg).unwrap();
    let mel = Tensor::from_vec((0..2 * 9 * 16).map(|i| (i as f32 * 0.37).sin()).collect::<Vec<_>>(), (2, 9, 16), &dev()).unwrap();
    let a = enc.forward(&mel).unwrap();
    assert_eq!(a.dims(), &[2, 16]);
    let av = a.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert!(av.iter().all(|v| v.is_finite()));
    let b = enc.forward(&mel).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert_eq!(av, b);
}

#[test]
fn encoder_handles_single_frame() {
    let mut store = ParamStore::new(3, dev());
    let enc = RefEncoder::new(&mut store, "e", 16, &tiny_cfg()).unwrap();
    let mel = Tensor::ones((1, 1, 16), DType::F32, &dev()).unwrap();
    assert_eq!(enc.forward(&mel).unwrap().dims(), &[1, 16]);
}

#[test]
fn emotion_and_speaker_parameters_are_disjoint() {
    let mut store = ParamStore::new(5, dev());
    let edm = Edm::new(&mut store, "edm", 16, 3, &tiny_cfg(), 1.0).unwrap();
    let mel = Tensor::from_vec((0..7 * 16).map(|i| (i as f32 * 0.11).cos()).collect::<Vec<_>>(), (1, 7, 16), &dev()).unwrap();
    let s_before = edm.speaker_encoder.forward(&mel).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    // Perturb every emotion-encoder parameter.
    for name in store.names() {
        if name.starts_with("edm.emotion.") {
            let var = store.get(&name).unwrap();
            let bumped = (var.as_tensor() + 0.25).unwrap();
            store.set_value(&name, &bumped).unwrap();
        }
    }
    let s_after = edm.speaker_encoder.forward(&mel).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert_eq!(s_before, s_after, "speaker encoder must not share emotion-encoder parameters");
}

#[test]
fn two_instances_share_nothing() {
    let mut store = ParamStore::new(5, dev());
    let _enc_side = Edm::new(&mut store, "edm_enc", 16, 3, &tiny_cfg(), 1.0).unwrap();
    let dec_side = Edm::new(&mut store, "edm_dec", 16, 3, &tiny_cfg(), 1.0).unwrap();
    let mel = Tensor::from_vec((0..5 * 16).map(|i| (i as f32 * 0.21).sin()).collect::<Vec<_>>(), (1, 5, 16), &dev()).unwrap();
    let before = dec_side.emotion_encoder.forward(&mel).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    for name in store.names() {
        if name.starts_with("edm_enc.") {
            let var = store.get(&name).unwrap();
            store.set_value(&name, &(var.as_tensor() * 2.0).unwrap()).unwrap();
        }
    }
    let after = dec_side.emotion_encoder.forward(&mel).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert_eq!(before, after);
}

#[test]
fn ort_worked_examples() {
    let d = dev();
    // Orthogonal pair.
    let s = Tensor::from_vec(vec![1.0f32, 0.0, 0.0], (1, 3), &d).unwrap();
    let e = Tensor::from_vec(vec![0.0f32, 1.0, 0.0], (1, 3), &d).unwrap();
    let v = loss_ort(&s, &e, Reduction::Sum).unwrap().to_scalar::<f32>().unwrap();
    assert_eq!(v, 0.0);
    // Parallel unit pair.
    let u = Tensor::from_vec(vec![0.6f32, 0.8, 0.0], (1, 3), &d).unwrap();
    let v = loss_ort(&u, &u, Reduction::Sum).unwrap().to_scalar::<f32>().unwrap();
    assert!((v - 1.0).abs() < 1e-6);
    // Batch with dots 0.5 and -2 sums to 4.25.
    let s = Tensor::from_vec(vec![0.5f32, 0.0, 1.0, 1.0], (2, 2), &d).unwrap();
    let e = Tensor::from_vec(vec![1.0f32, 0.0, -1.0, -1.0], (2, 2), &d).unwrap();
    let v = loss_ort(&s, &e, Reduction::Sum).unwrap().to_scalar::<f32>().unwrap();
    assert!((v - 4.25).abs() < 1e-6);
    let m = loss_ort(&s, &e, Reduction::Mean).unwrap().to_scalar::<f32>().unwrap();
    assert!((m - 2.125).abs() < 1e-6);
}

#[test]
fn ort_gradient_matches_closed_form_and_finite_differences() {
    let d = dev();
    let n = 6;
    let sv: Vec<f64> = (0..n).map(|i| 0.4 * (i as f64) - 1.0).collect();
    let ev: Vec<f64> = (0..n).map(|i| 0.3 * (i as f64 + 1.0) - 0.9).collect();
    let s = Tensor::from_vec(sv.clone(), (1, n), &d).unwrap();
    let e = Var::from_tensor(&Tensor::from_vec(ev.clone(), (1, n), &d)).unwrap();
    let loss = loss_ort(&s, e.as_tensor(), Reduction::Sum).unwrap();
    let grads = loss.backward().unwrap();
    let g = grads.get(e.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();

    let dot: f64 = sv.iter().zip(&ev).map(|(a, b)| a * b).sum();
    let f = |ev: &Vec<f64>| -> f64 {
        let dot: f64 = sv.iter().zip(ev).map(|(a, b)| a * b).sum();
        dot * dot
    };
    let h = 1e-5;
    for i in 0..n {
        // Closed form: d/de sum (s.e)^2 = 2 (s.e) s.
        let closed = 2.0 * dot * sv[i];
        let mut plus = ev.clone();
        plus[i] += h;
        let mut minus = ev.clone();
        minus[i] -= h;
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        let rel = (g[i] - fd).abs() / fd.abs().max(1e-8);
        assert!(rel < 1e-4, "coord {i}: autodiff {} vs fd {}", g[i], fd);
        assert!((g[i] - closed).abs() < 1e-8, "coord {i}: autodiff {} vs closed {}", g[i], closed);
    }
}

#[test]
fn adv_classifier_gradient_unaffected_by_grl_and_encoder_gradient_negated() {
    let d = dev();
    let s_data = Tensor::from_vec(vec![0.2f64, -0.4, 0.9, 1.3], (1, 4), &d).unwrap();
    let w = Var::from_tensor(&Tensor::from_vec((0..8).map(|i| 0.1 * i as f64 - 0.3).collect::<Vec<_>>(), (2, 4), &d)).unwrap();
    let s = Var::from_tensor(&s_data).unwrap();
    let labels = [1u32];

    let ce_of = |input: &Tensor| -> Tensor {
        let logits = input.matmul(&w.as_tensor().t().unwrap()).unwrap();
        crate::nn::masked::cross_entropy(&logits, &labels, Reduction::Mean).unwrap()
    };
    let lambda = 1.0;
    let with_grl = ce_of(&grad_reverse(s.as_tensor(), lambda).unwrap());
    let without = ce_of(s.as_tensor());
    let g1 = with_grl.backward().unwrap();
    let g2 = without.backward().unwrap();

    // Classifier weights sit above the reversal: identical gradients.
    let gw1 = g1.get(w.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let gw2 = g2.get(w.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    for (a, b) in gw1.iter().zip(&gw2) {
        assert!((a - b).abs() < 1e-12);
    }
    // The embedding sits below: gradients are negated.
    let gs1 = g1.get(s.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let gs2 = g2.get(s.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    for (a, b) in gs1.iter().zip(&gs2) {
        assert!((a + b).abs() < 1e-12, "grl grad {a} should equal -({b})");
    }
}

#[test]
fn adv_full_path_matches_finite_differences_through_toy_encoder() {
    // Encoder: s = tanh(x W1); head: CE(W2 grl(s), y). Check dL/dW1 against
    // central differences of the same scalar with the reversal folded in as
    // a factor of -lambda.
    let d = dev();
    let x_v: Vec<f64> = vec![0.5, -0.3, 0.8, 0.1];
    let w1_v: Vec<f64> = (0..16).map(|i| 0.2 * ((i * 7 % 11) as f64 / 11.0 - 0.5)).collect();
    let w2_v: Vec<f64> = (0..8).map(|i| 0.3 * ((i * 5 % 7) as f64 / 7.0 - 0.5)).collect();
    let labels = [1u32];
    let lambda = 1.0;

    let forward_no_grl = |w1: &Vec<f64>| -> f64 {
        // Plain f64 reference implementation.
        let mut s = [0.0f64; 4];
        for j in 0..4 {
            let mut acc = 0.0;
            for i in 0..4 {
                acc += x_v[i] * w1[i * 4 + j];
            }
            s[j] = acc.tanh();
        }
        let mut logits = [0.0f64; 2];
        for k in 0..2 {
            for j in 0..4 {
                logits[k] += s[j] * w2_v[k * 4 + j];
            }
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
        -(logits[labels[0] as usize] - m - z.ln())
    };

    let x = Tensor::from_vec(x_v.clone(), (1, 4), &d).unwrap();
    let w1 = Var::from_tensor(&Tensor::from_vec(w1_v.clone(), (4, 4), &d)).unwrap();
    let w2 = Tensor::from_vec(w2_v.clone(), (2, 4), &d).unwrap();
    let s = x.matmul(w1.as_tensor()).unwrap().tanh().unwrap();
    let logits = grad_reverse(&s, lambda).unwrap().matmul(&w2.t().unwrap()).unwrap();
    let loss = crate::nn::masked::cross_entropy(&logits, &labels, Reduction::Mean).unwrap();
    let grads = loss.backward().unwrap();
    let g = grads.get(w1.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();

    let h = 1e-6;
    for i in 0..16 {
        let mut plus = w1_v.clone();
        plus[i] += h;
        let mut minus = w1_v.clone();
        minus[i] -= h;
        let fd = (forward_no_grl(&plus) - forward_no_grl(&minus)) / (2.0 * h);
        let expected = -lambda * fd;
        let rel = (g[i] - expected).abs() / expected.abs().max(1e-6);
        assert!(rel < 1e-4, "w1[{i}]: autodiff {} vs -lambda*fd {}", g[i], expected);
    }
}

#[test]
fn edm_losses_worked_composition() {
    let l = EdmLosses::from_components(1.0, 2.0, 3.0, 4.0, 0.02, 0.5);
    assert_eq!(l.total, 4.54);
    assert_eq!(l.total, l.recomposed());
    // Ablation limit: alpha = 0, beta = 1 leaves classification terms only.
    let l = EdmLosses::from_components(1.5, 99.0, 2.5, 77.0, 0.0, 1.0);
    assert_eq!(l.total, 1.5 + 2.5);
}

#[test]
fn edm_losses_on_random_batch_recompose_exactly() {
    let mut store = ParamStore::new(11, dev());
    let edm = Edm::new(&mut store, "edm", 16, 3, &tiny_cfg(), 1.0).unwrap();
    let mel = Tensor::from_vec(
        (0..2 * 11 * 16).map(|i| ((i * 31 % 17) as f32 / 17.0 - 0.5)).collect::<Vec<_>>(),
        (2, 11, 16),
        &dev(),
    )
    .unwrap();
    let (tensors, e, s) = edm.losses(&mel, &[0, 3], &[1, 2], 0.02, 0.5, Reduction::Mean).unwrap();
    assert_eq!(e.dims(), &[2, 16]);
    assert_eq!(s.dims(), &[2, 16]);
    let scalars = tensors.to_scalars(0.02, 0.5).unwrap();
    assert_eq!(scalars.total, scalars.recomposed(), "struct algebra must be bit-exact");
    for v in [scalars.l_ec, scalars.l_ort, scalars.l_sc, scalars.l_adv] {
        assert!(v >= 0.0 && v.is_finite());
    }
    // The graph total agrees with the struct total up to f32 evaluation.
    let graph_total = tensors.total.to_scalar::<f32>().unwrap() as f64;
    assert!((graph_total - scalars.total).abs() < 1e-5);
}

#[test]
fn emotion_matching_loss_examples_and_stop_gradient() {
    let d = dev();
    let e_ref = Var::from_tensor(&Tensor::from_vec((0..8).map(|i| i as f32 * 0.1).collect::<Vec<_>>(), (1, 8), &d)).unwrap();
    let same = emotion_matching_loss(e_ref.as_tensor(), e_ref.as_tensor()).unwrap().to_scalar::<f32>().unwrap();
    assert_eq!(same, 0.0);

    let e_syn = Var::from_tensor(&(e_ref.as_tensor() + 1.0).unwrap()).unwrap();
    let off = emotion_matching_loss(e_ref.as_tensor(), e_syn.as_tensor()).unwrap();
    assert!((off.to_scalar::<f32>().unwrap() - 1.0).abs() < 1e-6);

    let grads = off.backward().unwrap();
    assert!(grads.get(e_ref.as_tensor()).is_none(), "reference side must be gradient-blocked");
    assert!(grads.get(e_syn.as_tensor()).is_some(), "synthesized side must receive gradient");

    // Random pair against a direct mean of squared differences.
    let a: Vec<f32> = (0..8).map(|i| ((i * 13 % 7) as f32) * 0.2 - 0.5).collect();
    let b: Vec<f32> = (0..8).map(|i| ((i * 5 % 9) as f32) * 0.1 - 0.3).collect();
    let expected: f32 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>() / 8.0;
    let ta = Tensor::from_vec(a, (1, 8), &d).unwrap();
    let tb = Tensor::from_vec(b, (1, 8), &d).unwrap();
    let got = emotion_matching_loss(&ta, &tb).unwrap().to_scalar::<f32>().unwrap();
    assert!((got - expected).abs() < 1e-6);
}

#[test]
fn scale_embedding_examples() {
    let d = dev();
    let e = Tensor::from_vec(vec![1.0f32, -2.0, 0.5], (1, 3), &d).unwrap();
    let id = scale_embedding(&e, 1.0).unwrap();
    assert_eq!(id.to_vec2::<f32>().unwrap(), e.to_vec2::<f32>().unwrap());
    let zero = scale_embedding(&e, 0.0).unwrap();
    assert_eq!(zero.to_vec2::<f32>().unwrap(), vec![vec![0.0, 0.0, 0.0]]);
    let two = scale_embedding(&e, 2.0).unwrap().to_vec2::<f32>().unwrap();
    let one = scale_embedding(&e, 1.0).unwrap().to_vec2::<f32>().unwrap();
    for (a, b) in two[0].iter().zip(&one[0]) {
        assert_eq!(*a, 2.0 * b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ort_is_nonnegative_and_matches_brute_force(
        sv in prop::collection::vec(-2.0f64..2.0, 4),
        ev in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let d = Device::Cpu;
        let s = Tensor::from_vec(sv.clone(), (1, 4), &d).unwrap();
        let e = Tensor::from_vec(ev.clone(), (1, 4), &d).unwrap();
        let got = loss_ort(&s, &e, Reduction::Sum).unwrap().to_scalar::<f64>().unwrap();
        let dot: f64 = sv.iter().zip(&ev).map(|(a, b)| a * b).sum();
        prop_assert!(got >= 0.0);
        prop_assert!((got - dot * dot).abs() < 1e-9);
    }

    #[test]
    fn eq5_algebra_reconstructs_for_random_components(
        l_ec in 0.0f64..10.0,
        l_ort in 0.0f64..10.0,
        l_sc in 0.0f64..10.0,
        l_adv in 0.0f64..10.0,
    ) {
        let l = EdmLosses::from_components(l_ec, l_ort, l_sc, l_adv, 0.02, 0.5);
        prop_assert_eq!(l.total, l.recomposed());
    }
}

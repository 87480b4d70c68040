//! Encoder locality/causality, label encoders and the joint network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tt_core::attention::ContextConfig;
use tt_core::infer::LabelCache;
use tt_core::nn::{ParamStore, Tensor2};
use tt_core::transducer::{label_window, LabelEncoder, LabelMode, Model, ModelConfig, StackSpec, Vocab};

fn small(label_mode: LabelMode) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        ffn_dim: 32,
        joint_dim: 16,
        label_mode,
        ..ModelConfig::default()
    }
}

fn features(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Tensor2 {
    Tensor2::from_vec(t, dim, (0..t * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn max_row_diff(a: &Tensor2, b: &Tensor2, row: usize) -> f64 {
    a.row(row).iter().zip(b.row(row)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn lookahead_locality_sums_rights() {
    let (model, store) = Model::new(small(LabelMode::Bigram), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t_len = 24;
    let x = features(&mut rng, t_len, 16);
    for rights in [vec![0, 0, 0, 0, 0, 4], vec![1, 0, 2, 0, 0, 1], vec![0; 6]] {
        let total: usize = rights.iter().sum();
        let cfg = ContextConfig::from_rights(rights.clone());
        let base = model.audio_encode(&store, &x, &cfg).unwrap();
        for t in [0, 5, 11] {
            let mut y = x.clone();
            for s in t + total + 1..t_len {
                for v in y.row_mut(s) {
                    *v += 3.0;
                }
            }
            let out = model.audio_encode(&store, &y, &cfg).unwrap();
            for r in 0..=t {
                assert_eq!(max_row_diff(&base, &out, r), 0.0, "{rights:?} row {r} perturb > {}", t + total);
            }
            // the bound is tight: the first perturbed frame reaches row t
            let mut z = x.clone();
            for v in z.row_mut(t + total) {
                *v += 3.0;
            }
            let out = model.audio_encode(&store, &z, &cfg).unwrap();
            assert!(max_row_diff(&base, &out, t) > 0.0);
        }
    }
}

#[test]
fn causal_prefix_equality() {
    let (model, store) = Model::new(small(LabelMode::Bigram), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = features(&mut rng, 20, 16);
    let cfg = ContextConfig::causal(6);
    let full = model.audio_encode(&store, &x, &cfg).unwrap();
    for t in [1, 7, 19] {
        let pre = model.audio_encode(&store, &x.slice_rows(0, t), &cfg).unwrap();
        assert!(pre.max_abs_diff(&full.slice_rows(0, t)) <= 1e-9);
    }
}

#[test]
fn saturated_rights_equal_full_attention() {
    let (model, store) = Model::new(small(LabelMode::Bigram), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = features(&mut rng, 12, 16);
    let sat = model.audio_encode(&store, &x, &ContextConfig::from_rights(vec![11; 6])).unwrap();
    let full = model.audio_encode(&store, &x, &ContextConfig::full(6)).unwrap();
    assert!(sat.max_abs_diff(&full) <= 1e-9);
}

#[test]
fn stacked_encoder_halves_frames_and_keeps_locality() {
    let mut config = small(LabelMode::Bigram);
    config.stack = Some(StackSpec {
        after_layers: 2,
        factor: 2,
    });
    let (model, store) = Model::new(config, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = features(&mut rng, 15, 16);
    let cfg = ContextConfig::causal(6);
    let out = model.audio_encode(&store, &x, &cfg).unwrap();
    assert_eq!(out.rows(), 8);
    // causal everywhere: output row i depends on input frames < 2(i+1)
    let mut y = x.clone();
    for v in y.row_mut(10) {
        *v -= 2.0;
    }
    let out2 = model.audio_encode(&store, &y, &cfg).unwrap();
    for r in 0..5 {
        assert_eq!(max_row_diff(&out, &out2, r), 0.0);
    }
    assert!(max_row_diff(&out, &out2, 5) > 0.0);
}

#[test]
fn output_delay_shifts_alignment() {
    let (model, store) = Model::new(small(LabelMode::Bigram), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = features(&mut rng, 10, 16);
    let cfg = ContextConfig::causal(6).with_output_delay(2);
    let out = model.audio_encode(&store, &x, &cfg).unwrap();
    assert_eq!(out.rows(), 10);
    // row t now sees frame t+2 but not t+3
    let mut y = x.clone();
    for v in y.row_mut(5) {
        *v += 1.0;
    }
    let out2 = model.audio_encode(&store, &y, &cfg).unwrap();
    assert_eq!(max_row_diff(&out, &out2, 2), 0.0);
    assert!(max_row_diff(&out, &out2, 3) > 0.0);
}

#[test]
fn depth_mismatch_is_rejected() {
    let (model, store) = Model::new(small(LabelMode::Bigram), 1).unwrap();
    let x = Tensor2::zeros(3, 16);
    assert!(model.audio_encode(&store, &x, &ContextConfig::causal(5)).is_err());
}

#[test]
fn transformer_label_encoder_reads_only_its_window() {
    let (model, store) = Model::new(small(LabelMode::Transformer { context: 3 }), 11).unwrap();
    let a = model.label.encode(&store, &[1, 2, 3, 4, 5]).unwrap();
    let b = model.label.encode(&store, &[7, 7, 3, 4, 5]).unwrap();
    assert_eq!(a, b);
    let c = model.label.encode(&store, &[1, 2, 9, 4, 5]).unwrap();
    assert_ne!(a, c);
    // short prefixes are encoded whole
    for prefix in [&[][..], &[4][..], &[4, 2][..], &[4, 2, 8][..]] {
        let whole = model.label.encode(&store, &label_window(prefix, 100)).unwrap();
        assert_eq!(model.label.encode(&store, prefix).unwrap(), whole);
    }
    let sos = model.label.encode(&store, &[]).unwrap();
    assert_eq!(sos, model.label.encode(&store, &[]).unwrap());
    assert!(sos.iter().all(|v| v.is_finite()));
}

#[test]
fn bigram_table_is_n_squared_d() {
    let config = ModelConfig {
        d_model: 8,
        heads: 2,
        vocab: Vocab::new(["<b>", "x", "y", "z"].map(String::from).to_vec()).unwrap(),
        label_mode: LabelMode::Bigram,
        ..ModelConfig::default()
    };
    let (model, store) = Model::new(config, 12).unwrap();
    let LabelEncoder::Bigram(table) = &model.label else {
        panic!("bigram mode");
    };
    assert_eq!(table.num_params(&store), 4 * 4 * 8);
    assert_eq!(table.lookup(&store, 0, 0).unwrap(), store.get(table.table).row(0));
    assert_eq!(table.lookup(&store, 2, 3).unwrap(), store.get(table.table).row(11));
    assert_eq!(model.label.encode(&store, &[1, 2, 3]).unwrap(), table.lookup(&store, 2, 3).unwrap());
    assert_eq!(model.label.encode(&store, &[]).unwrap(), table.lookup(&store, 0, 0).unwrap());
    assert!(table.lookup(&store, 4, 0).is_err());
}

/// `W_o·tanh(W_a·a + b_a + W_l·l + b_l) + b_o` written out longhand.
fn joint_oracle(model: &Model, store: &ParamStore, a: &[f64], l: &[f64]) -> Vec<f64> {
    let j = &model.joint;
    let affine = |x: &[f64], w: &Tensor2, b: &[f64]| -> Vec<f64> {
        (0..w.cols())
            .map(|c| b[c] + x.iter().enumerate().map(|(r, v)| v * w.get(r, c)).sum::<f64>())
            .collect()
    };
    let pa = affine(a, store.get(j.audio.w), store.vec(j.audio.b));
    let pl = affine(l, store.get(j.label.w), store.vec(j.label.b));
    let h: Vec<f64> = pa.iter().zip(&pl).map(|(x, y)| (x + y).tanh()).collect();
    affine(&h, store.get(j.out.w), store.vec(j.out.b))
}

#[test]
fn joint_matches_longhand_arithmetic() {
    let (model, mut store) = Model::new(small(LabelMode::Bigram), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for v in store.get_mut(model.joint.out.b).data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    for _ in 0..5 {
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = model.joint.logits(&store, &a, &l).unwrap();
        let want = joint_oracle(&model, &store, &a, &l);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }
    // with W_l = 0 and b_l = 0 the label vector is ignored
    store.get_mut(model.joint.label.w).fill(0.0);
    let a = [0.5; 16];
    assert_eq!(
        model.joint.logits(&store, &a, &[1.0; 16]).unwrap(),
        model.joint.logits(&store, &a, &[-3.0; 16]).unwrap()
    );
}

#[test]
fn zero_parameters_give_uniform_distribution() {
    let (model, mut store) = Model::new(small(LabelMode::Transformer { context: 2 }), 15).unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).fill(0.0);
    }
    let x = Tensor2::zeros(3, 16);
    let lat = model.logits_grid(&store, &x, &[1, 2], &ContextConfig::full(6), None).unwrap();
    let n = model.vocab_size() as f64;
    for t in 0..3 {
        for u in 0..=2 {
            for k in 0..model.vocab_size() {
                assert!((lat.log_prob(t, u, k) + n.ln()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn grid_rows_normalized_and_prefix_dependent() {
    let (model, store) = Model::new(small(LabelMode::Transformer { context: 2 }), 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = features(&mut rng, 5, 16);
    let cfg = ContextConfig::full(6);
    let one = model.logits_grid(&store, &features(&mut rng, 1, 16), &[], &cfg, None).unwrap();
    assert_eq!((one.t_len(), one.u_len()), (1, 0));

    let a = model.logits_grid(&store, &x, &[1, 2, 3], &cfg, None).unwrap();
    let b = model.logits_grid(&store, &x, &[1, 2, 9], &cfg, None).unwrap();
    for t in 0..5 {
        for u in 0..=3 {
            let mass: f64 = (0..model.vocab_size()).map(|k| a.log_prob(t, u, k).exp()).sum();
            assert!((mass - 1.0).abs() <= 1e-9);
            let same = (0..model.vocab_size()).all(|k| a.log_prob(t, u, k) == b.log_prob(t, u, k));
            assert_eq!(same, u < 3, "node ({t},{u})");
        }
    }
}

#[test]
fn cached_grid_is_identical() {
    for mode in [LabelMode::Bigram, LabelMode::Transformer { context: 3 }] {
        let (model, store) = Model::new(small(mode), 18).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = features(&mut rng, 6, 16);
        let labels = [3, 3, 1, 3, 3, 1];
        let cfg = ContextConfig::causal(6);
        let plain = model.logits_grid(&store, &x, &labels, &cfg, None).unwrap();
        let mut cache = LabelCache::new();
        let cached = model.logits_grid(&store, &x, &labels, &cfg, Some(&mut cache)).unwrap();
        assert_eq!(plain.log_probs(), cached.log_probs());
        assert!(cache.hits() > 0);
    }
}

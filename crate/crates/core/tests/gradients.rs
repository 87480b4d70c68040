//! Central finite-difference checks of every backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tt_core::attention::{build_context_mask, ContextConfig, RelPos, TransformerLayer};
use tt_core::nn::{grad_check, ParamStore, Tensor2};
use tt_core::rnnt::AlignMask;
use tt_core::transducer::{LabelMode, Model, ModelConfig, StackSpec, Vocab};

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn toy_config(label_mode: LabelMode) -> ModelConfig {
    ModelConfig {
        input_dim: 3,
        d_model: 4,
        heads: 2,
        ffn_dim: 6,
        layers: 2,
        stack: None,
        relpos_clip: 2,
        label_mode,
        label_layers: 1,
        joint_dim: 5,
        vocab: Vocab::new(["<b>", "a", "b", "c"].map(String::from).to_vec()).unwrap(),
        menu: vec![],
        frame_ms: 30.0,
    }
}

/// Perturbs every parameter so no gradient is structurally zero.
fn jitter(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

fn check_model(config: ModelConfig, cfg: &ContextConfig, t_len: usize, mask: Option<&AlignMask>) -> f64 {
    let (model, mut store) = Model::new(config, 7).unwrap();
    jitter(&mut store, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_tensor(&mut rng, t_len, model.config.input_dim);
    let labels = [1, 3];
    grad_check(&mut store, EPS, 64, 10, |s, g| model.loss_and_grad(s, g, &x, &labels, cfg, mask)).unwrap()
}

#[test]
fn transformer_layer_with_relpos() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let rp = RelPos {
        clip_left: 2,
        clip_right: 1,
    };
    let layer = TransformerLayer::new(&mut store, "l", 4, 2, 6, rp, &mut rng).unwrap();
    jitter(&mut store, 2);
    let x = random_tensor(&mut rng, 5, 4);
    let target = random_tensor(&mut rng, 5, 4);
    for (left, right) in [(None, 0), (Some(1), 1), (None, 100)] {
        let mask = build_context_mask(5, left, right);
        let err = grad_check(&mut store, EPS, 64, 3, |s, g| {
            let (y, cache) = layer.forward(s, &x, &mask)?;
            let mut dy = y.clone();
            let mut loss = 0.0;
            for (d, t) in dy.data_mut().iter_mut().zip(target.data()) {
                *d -= t;
                loss += 0.5 * *d * *d;
            }
            layer.backward(s, g, &cache, &dy)?;
            Ok(loss)
        })
        .unwrap();
        assert!(err <= TOL, "left {left:?} right {right}: {err}");
    }
}

#[test]
fn full_model_transformer_labels() {
    let err = check_model(toy_config(LabelMode::Transformer { context: 2 }), &ContextConfig::full(2), 4, None);
    assert!(err <= TOL, "{err}");
}

#[test]
fn full_model_bigram_labels() {
    let err = check_model(toy_config(LabelMode::Bigram), &ContextConfig::full(2), 4, None);
    assert!(err <= TOL, "{err}");
}

#[test]
fn streaming_context_with_delay() {
    let cfg = ContextConfig::from_rights(vec![0, 1]).with_left(Some(2)).with_output_delay(1);
    let err = check_model(toy_config(LabelMode::Transformer { context: 2 }), &cfg, 4, None);
    assert!(err <= TOL, "{err}");
}

#[test]
fn stacked_encoder() {
    let mut config = toy_config(LabelMode::Transformer { context: 2 });
    config.stack = Some(StackSpec {
        after_layers: 1,
        factor: 2,
    });
    let err = check_model(config, &ContextConfig::full(2), 7, None);
    assert!(err <= TOL, "{err}");
}

#[test]
fn constrained_loss() {
    let mut mask = AlignMask::all(4, 2);
    mask.set(0, 0, false);
    mask.set(3, 1, false);
    let err = check_model(toy_config(LabelMode::Bigram), &ContextConfig::full(2), 4, Some(&mask));
    assert!(err <= TOL, "{err}");
}

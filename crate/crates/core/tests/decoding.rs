//! Greedy and beam search on real models, with and without the label cache.

use tt_core::attention::ContextConfig;
use tt_core::data::{generate_dataset, GenParams};
use tt_core::infer::{beam_decode, greedy_decode, LabelCache, MAX_SYMBOLS_PER_FRAME};
use tt_core::nn::ParamStore;
use tt_core::transducer::{LabelMode, Model, ModelConfig, StackSpec, Vocab};

fn model(label_mode: LabelMode, seed: u64) -> (Model, ParamStore) {
    let (m, mut store) = Model::new(
        ModelConfig {
            d_model: 16,
            heads: 2,
            ffn_dim: 32,
            joint_dim: 16,
            label_mode,
            ..ModelConfig::default()
        },
        seed,
    )
    .unwrap();
    // make blank and labels competitive so searches branch
    store.get_mut(m.joint.out.b).data_mut()[0] = 1.5;
    (m, store)
}

fn encodings(m: &Model, store: &ParamStore, n: usize) -> Vec<tt_core::nn::Tensor2> {
    let ds = generate_dataset(n, 3, "dec-", &Vocab::graphemes(), &GenParams::default()).unwrap();
    ds.utterances
        .iter()
        .map(|u| m.audio_encode(store, &u.features, &ContextConfig::full(6)).unwrap())
        .collect()
}

#[test]
fn beam_of_one_is_greedy() {
    for mode in [LabelMode::Bigram, LabelMode::Transformer { context: 3 }] {
        let (m, store) = model(mode, 1);
        for enc in encodings(&m, &store, 5) {
            let g = greedy_decode(&m, &store, &enc, &mut LabelCache::new()).unwrap();
            let b = beam_decode(&m, &store, &enc, 1, &mut LabelCache::new()).unwrap();
            assert_eq!(b.len(), 1);
            assert_eq!(b[0].labels, g.labels);
            assert_eq!(b[0].times, g.times);
            assert!((b[0].score - g.score).abs() <= 1e-9);
        }
    }
}

#[test]
fn cache_changes_nothing_but_evaluation_count() {
    for mode in [LabelMode::Bigram, LabelMode::Transformer { context: 3 }] {
        let (m, store) = model(mode, 2);
        let mut nonempty = 0;
        for enc in encodings(&m, &store, 5) {
            let mut on = LabelCache::new();
            let mut off = LabelCache::disabled();
            let a = beam_decode(&m, &store, &enc, 4, &mut on).unwrap();
            let b = beam_decode(&m, &store, &enc, 4, &mut off).unwrap();
            assert_eq!(a, b);
            assert!(on.hits() > 0);
            assert!(on.evaluations() < off.evaluations(), "{} vs {}", on.evaluations(), off.evaluations());
            nonempty += usize::from(!a[0].labels.is_empty());
        }
        assert!(nonempty > 0, "searches produced only empty hypotheses");
    }
}

#[test]
fn hypotheses_are_well_formed() {
    let (m, store) = model(LabelMode::Transformer { context: 3 }, 4);
    for enc in encodings(&m, &store, 5) {
        let nbest = beam_decode(&m, &store, &enc, 4, &mut LabelCache::new()).unwrap();
        assert!(nbest.windows(2).all(|w| w[0].score >= w[1].score));
        for h in &nbest {
            assert_eq!(h.labels.len(), h.times.len());
            assert!(h.times.windows(2).all(|w| w[0] <= w[1]));
            assert!(h.times.iter().all(|&t| t < enc.rows()));
            assert!(h.labels.iter().all(|&l| l > 0 && l < m.vocab_size()));
            assert!(h.score.is_finite());
            assert_eq!(h.key, m.label.key(&h.labels));
            for t in 0..enc.rows() {
                assert!(h.times.iter().filter(|&&x| x == t).count() <= MAX_SYMBOLS_PER_FRAME);
            }
        }
    }
}

#[test]
fn stacked_model_decodes() {
    let (m, store) = Model::new(
        ModelConfig {
            d_model: 16,
            heads: 2,
            ffn_dim: 32,
            joint_dim: 16,
            stack: Some(StackSpec {
                after_layers: 2,
                factor: 2,
            }),
            ..ModelConfig::default()
        },
        5,
    )
    .unwrap();
    for enc in encodings(&m, &store, 2) {
        let h = greedy_decode(&m, &store, &enc, &mut LabelCache::new()).unwrap();
        assert!(h.times.iter().all(|&t| t < enc.rows()));
    }
}

#[test]
fn empty_input_gives_empty_hypothesis() {
    let (m, store) = model(LabelMode::Bigram, 6);
    let enc = tt_core::nn::Tensor2::empty(16);
    assert!(greedy_decode(&m, &store, &enc, &mut LabelCache::new()).unwrap().labels.is_empty());
    let nbest = beam_decode(&m, &store, &enc, 3, &mut LabelCache::new()).unwrap();
    assert!(nbest[0].labels.is_empty());
}

//! Training loop behavior on the synthetic grapheme task.

use tt_core::attention::ContextConfig;
use tt_core::data::{generate_dataset, GenParams, Utterance};
use tt_core::infer::{greedy_decode, LabelCache};
use tt_core::train::{
    onset_alignments, reference_alignments, reference_mask, utterance_step, ConfigMenu, ConstraintWindow, LossMode, TrainOptions, Trainer,
    UttOutcome,
};
use tt_core::transducer::{LabelMode, Model, ModelConfig, Vocab};

fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        ffn_dim: 32,
        layers: 2,
        joint_dim: 16,
        label_mode: LabelMode::Bigram,
        menu: vec!["[0] x 1 + [4]".into(), "[0] x 2".into()],
        ..ModelConfig::default()
    }
}

fn data(n: usize, seed: u64) -> Vec<Utterance> {
    generate_dataset(n, seed, "tr-", &Vocab::graphemes(), &GenParams::default())
        .unwrap()
        .utterances
}

fn full_menu() -> ConfigMenu {
    ConfigMenu::new(vec![ContextConfig::full(2)]).unwrap()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn zero_init_first_loss_is_uniform_path_sum() {
    let (model, mut store) = Model::new(small_config(), 1).unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).fill(0.0);
    }
    let utts = data(8, 2);
    let n = model.vocab_size() as f64;
    let mut want = 0.0;
    for u in &utts {
        let (t, k) = (u.frames(), u.labels.len());
        // every path has probability N^-(T+U); there are C(T+U−1, U) of them
        want += (t + k) as f64 * n.ln() - binom(t + k - 1, k).ln();
    }
    want /= utts.len() as f64;
    let mut trainer = Trainer::new(model, store, full_menu(), TrainOptions::default()).unwrap();
    let batch: Vec<&Utterance> = utts.iter().collect();
    let report = trainer.train_step(&batch).unwrap();
    assert!((report.loss - want).abs() <= 1e-9 * want, "{} vs {want}", report.loss);
}

#[test]
fn loss_decreases_over_two_hundred_steps() {
    let (model, store) = Model::new(small_config(), 3).unwrap();
    let utts = data(50, 4);
    let options = TrainOptions {
        lr: 3e-3,
        seed: 5,
        ..TrainOptions::default()
    };
    let mut trainer = Trainer::new(model, store, full_menu(), options).unwrap();
    let mut losses = Vec::new();
    trainer.fit(&utts, 200, |r| losses.push(r.loss)).unwrap();
    assert_eq!(trainer.steps_done(), 200);
    let first = losses[0];
    let tail: f64 = losses[190..].iter().sum::<f64>() / 10.0;
    assert!(tail < first, "first {first}, last ten {tail}");
}

#[test]
fn same_seed_same_run() {
    let run = || {
        let (model, store) = Model::new(small_config(), 6).unwrap();
        let menu = ConfigMenu::from_model(&small_config(), None).unwrap();
        let options = TrainOptions {
            seed: 7,
            batch_size: 4,
            ..TrainOptions::default()
        };
        let mut trainer = Trainer::new(model, store, menu, options).unwrap();
        let mut configs = Vec::new();
        let last = trainer.fit(&data(12, 8), 10, |r| configs.push(r.config.clone())).unwrap();
        (last, configs)
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ca, cb);
    assert!(ca.iter().any(|c| c != &ca[0]), "menu sampling never varied: {ca:?}");
}

#[test]
fn constrained_loss_is_never_below_plain() {
    let (model, store) = Model::new(small_config(), 9).unwrap();
    let utts = data(10, 10);
    let cfg = ContextConfig::full(2);
    let refs = reference_alignments(&model, &store, &utts, &cfg).unwrap();
    for window in [
        ConstraintWindow::default(),
        ConstraintWindow {
            w_left: Some(1),
            w_right: Some(0),
            words: false,
        },
        ConstraintWindow {
            w_left: Some(0),
            w_right: Some(1),
            words: true,
        },
    ] {
        for u in &utts {
            let plain = utterance_step(&model, &store, u, &cfg, &LossMode::Plain, None).unwrap();
            let cons = utterance_step(&model, &store, u, &cfg, &LossMode::Constrained(window), refs.get(&u.id)).unwrap();
            let (UttOutcome::Loss { loss: p, .. }, UttOutcome::Loss { loss: c, .. }) = (plain, cons) else {
                panic!("reference path is always admitted");
            };
            assert!(c >= p - 1e-12, "{c} < {p}");
        }
    }
    let unbounded = ConstraintWindow {
        w_left: None,
        w_right: None,
        words: false,
    };
    let u = &utts[0];
    let plain = utterance_step(&model, &store, u, &cfg, &LossMode::Plain, None).unwrap();
    let cons = utterance_step(&model, &store, u, &cfg, &LossMode::Constrained(unbounded), refs.get(&u.id)).unwrap();
    match (plain, cons) {
        (UttOutcome::Loss { loss: p, .. }, UttOutcome::Loss { loss: c, .. }) => assert_eq!(p, c),
        _ => panic!("unexpected skip"),
    }
}

#[test]
fn infeasible_references_are_skipped_and_counted() {
    let (model, store) = Model::new(small_config(), 11).unwrap();
    let utts = data(4, 12);
    let mut refs = reference_alignments(&model, &store, &utts, &ContextConfig::full(2)).unwrap();
    // push one reference past the end of its utterance
    let bad = &utts[1];
    refs.get_mut(&bad.id).unwrap().emissions = vec![bad.frames() + 3; bad.labels.len()];
    let options = TrainOptions {
        mode: LossMode::Constrained(ConstraintWindow::default()),
        ..TrainOptions::default()
    };
    let mut trainer = Trainer::new(model, store, full_menu(), options).unwrap();
    trainer.set_references(refs);
    let batch: Vec<&Utterance> = utts.iter().collect();
    let r = trainer.train_step(&batch).unwrap();
    assert_eq!((r.utterances, r.skipped), (3, 1));
    assert_eq!(trainer.skipped(), 1);
    assert!(r.loss.is_finite());
}

#[test]
fn missing_reference_is_an_error() {
    let (model, store) = Model::new(small_config(), 13).unwrap();
    let u = &data(1, 14)[0];
    let mode = LossMode::Constrained(ConstraintWindow::default());
    assert!(utterance_step(&model, &store, u, &ContextConfig::full(2), &mode, None).is_err());
}

#[test]
fn y_menu_trains_and_both_configs_decode() {
    let (model, store) = Model::new(small_config(), 15).unwrap();
    let menu = ConfigMenu::from_model(&small_config(), None).unwrap();
    assert_eq!(menu.len(), 2);
    let mut trainer = Trainer::new(model, store, menu.clone(), TrainOptions::default()).unwrap();
    let utts = data(16, 16);
    trainer.fit(&utts, 6, |_| {}).unwrap();
    for cfg in menu.entries() {
        for u in &utts[..3] {
            let enc = trainer.model.audio_encode(&trainer.store, &u.features, cfg).unwrap();
            let h = greedy_decode(&trainer.model, &trainer.store, &enc, &mut LabelCache::new()).unwrap();
            assert!(h.labels.iter().all(|&l| l < trainer.model.vocab_size()));
        }
    }
}

#[test]
fn single_entry_menu_is_plain_training() {
    let (model, store) = Model::new(small_config(), 17).unwrap();
    let mut trainer = Trainer::new(model, store, full_menu(), TrainOptions::default()).unwrap();
    assert!(!trainer.options.per_layer_sampling);
    for _ in 0..20 {
        assert_eq!(trainer.sample(), ContextConfig::full(2));
    }
}

#[test]
fn batches_cover_each_epoch_once() {
    let (model, store) = Model::new(small_config(), 19).unwrap();
    let options = TrainOptions {
        batch_size: 5,
        ..TrainOptions::default()
    };
    let mut trainer = Trainer::new(model, store, full_menu(), options).unwrap();
    let mut seen: Vec<usize> = (0..4).flat_map(|_| trainer.next_batch(20)).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..20).collect::<Vec<_>>());
}

#[test]
fn onset_alignments_emit_at_span_starts() {
    let (model, _) = Model::new(small_config(), 15).unwrap();
    let utts = data(5, 16);
    let refs = onset_alignments(&model, &utts).unwrap();
    let exact = ConstraintWindow {
        w_left: Some(0),
        w_right: Some(0),
        words: false,
    };
    for u in &utts {
        let r = &refs[&u.id];
        assert_eq!(r.emissions, u.ref_times);
        // each label is admitted on exactly its onset frame
        let mask = reference_mask(&model, u, r, &exact).unwrap();
        for (i, &t) in u.ref_times.iter().enumerate() {
            assert!((0..u.frames()).all(|f| mask.allowed(f, i) == (f == t)));
        }
    }
    let mut broken = utts[0].clone();
    broken.ref_times.pop();
    assert!(onset_alignments(&model, &[broken]).is_err());
}

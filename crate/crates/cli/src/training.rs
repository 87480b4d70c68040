//! Data-parallel training: the utterances of a batch run their forward and
//! backward passes on the rayon pool, then the gradients are combined in
//! batch order so results do not depend on the thread count.

use rayon::prelude::*;
use tt_core::data::Utterance;
use tt_core::train::{utterance_step, StepReport, Trainer, UttOutcome};

use crate::error::Result;

pub fn parallel_step(trainer: &mut Trainer, data: &[Utterance]) -> Result<StepReport> {
    let cfg = trainer.sample();
    let idx = trainer.next_batch(data.len());
    let outcomes = {
        let t = &*trainer;
        idx.par_iter()
            .map(|&i| {
                let u = &data[i];
                utterance_step(&t.model, &t.store, u, &cfg, &t.options.mode, t.reference(&u.id))
            })
            .collect::<tt_core::Result<Vec<UttOutcome>>>()?
    };
    Ok(trainer.apply(&cfg, outcomes)?)
}

/// Runs `steps` parallel steps, handing each report to `log`.
pub fn parallel_fit(
    trainer: &mut Trainer,
    data: &[Utterance],
    steps: usize,
    mut log: impl FnMut(&StepReport),
) -> Result<Option<StepReport>> {
    let mut last = None;
    for _ in 0..steps {
        let r = parallel_step(trainer, data)?;
        log(&r);
        last = Some(r);
    }
    Ok(last)
}

mod menu;
mod notation;
mod trainer;

pub use menu::{menu_contains, sample_config, sample_per_layer, ConfigMenu};
pub use notation::{
    cumulative_lookahead, cumulative_lookahead_for, format_rights, lookahead_frames, parse_context_config,
    parse_rights,
};
pub use trainer::{
    onset_alignments, reference_alignments, reference_mask, utterance_step, ConstraintWindow, LossMode, StepReport, TrainOptions,
    Trainer, UttOutcome,
};

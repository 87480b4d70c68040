//! RNN-T loss, constrained-alignment masking and Viterbi alignment.

mod align;
mod lattice;
mod loss;

pub use align::{
    constrained_mask, constrained_mask_words, viterbi_alignment, viterbi_alignment_constrained, AlignMask,
    AlignmentPath,
};
pub use lattice::Lattice;
pub use loss::{rnnt_grad, rnnt_loss, rnnt_loss_and_grad, rnnt_loss_constrained};

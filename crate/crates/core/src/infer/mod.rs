mod cache;
mod decode;
mod qslice;
mod stream;
mod ymodel;

pub use cache::LabelCache;
pub use decode::{
    beam_decode, beam_search, greedy_decode, greedy_search, project_audio, GreedySearch, Hypothesis, ModelScorer,
    Scorer, MAX_SYMBOLS_PER_FRAME,
};
pub use qslice::{query_slice_encode, QuerySliceStats};
pub use stream::{stream_encode, LayerState, Pipeline, StreamState};
pub use ymodel::{
    check_shared_prefix, emission_ms, split_point, y_start, Branch, BranchKind, Clock, EventKind, FinalResult,
    NoClock, SharedEncoder, YEvent, YSession,
};

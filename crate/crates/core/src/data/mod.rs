//! Interaction logs, embedding tables, checkpoints and the temporal split.

mod checkpoint;
mod embeddings;
mod interactions;
mod split;

pub use checkpoint::Checkpoint;
pub use embeddings::{load_embeddings, EmbeddingTable, BINARY_MAGIC, TEXT_MAGIC};
pub use interactions::{parse_events_for, parse_interactions, write_events, Event, InteractionLog};
pub use split::{
    interaction_matrix, read_split, temporal_split, write_split, DatasetSplit, SplitIndex, SplitParams, DAY,
    DEFAULT_LOOKBACK, DEFAULT_VAL_FRACTION, EVAL_WINDOW,
};

//! Learned sparse retrieval with trainable thresholds.
//!
//! Documents and queries are sparse vocabulary-weight vectors. A per-token
//! toy encoder is trained jointly with a document threshold `t_D` (sigmoid
//! surrogate during training, exact hard threshold at index time) and a
//! query threshold `t_Q` (soft thresholding). The pruned documents go into a
//! block-compressed, impact-quantized inverted index searched with MaxScore.

pub mod error;
pub mod eval;
mod fsutil;
pub mod index;
pub mod search;
pub mod threshold;
pub mod train;
pub mod vector;

pub use error::{Error, Result};
pub use eval::{EvalReport, Qrels, SynthConfig, SynthCorpus};
pub use fsutil::atomic_write;
pub use index::{InvertedIndex, QuantizationSpec, SparsifyMode};
pub use search::{Algorithm, LatencyStats, PreparedQuery, Run, ScoredDoc, TopKResult};
pub use threshold::{SideThresholding, ThresholdConfig, ThresholdFn};
pub use train::{TrainConfig, TrainOptions, TrainState, TrainingTriple, TripleRef};
pub use vector::{Collection, SparseVector, TokenId};

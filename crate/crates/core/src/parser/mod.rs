//! Document dependency parsing: candidate parents, biaffine scoring,
//! training and tree decoding.

pub mod candidates;
pub mod decode;
pub mod head;
pub mod train;

pub use candidates::{build_candidates, geo_features, CandidateConfig, CandidateSet, GeoFeatures, HeaderPrior, GEO_DIM};
pub use decode::{decode_argmax, decode_mst, flatten_scores, total_score, ScoredEdge};
pub use head::{
    child_softmax, edge_score, hidden, hidden_states, loss_and_grad, score_document, Dropout, EncodedDoc,
    HeadParams, LossOutput, DEFAULT_HIDDEN, TENSOR_NAMES,
};
pub use train::{parse_encoded, train, train_from, Decoder, EpochLog, TrainConfig, TrainOutcome};

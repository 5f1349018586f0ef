//! The bi-encoder student: offline document cache, context-free query
//! encoding, the document-conditioned predictor, and top-k retrieval.

pub mod cache;
pub mod predictor;
pub mod score;

pub use cache::{
    cache_from_str, cache_to_string, content_hash, index_documents, load_cache, save_cache, DocCache,
    DocCacheEntry, CACHE_VERSION,
};
pub use predictor::{
    init_predictor, predictor_depth, predictor_forward, predictor_group_names, predictor_mlp,
    PredictSpan, StudentConfig,
};
pub use score::{encode_query_solo, retrieve, student_score, StudentOutput};

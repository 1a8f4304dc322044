//! Tabular ingestion, feature typing and encoding, and deterministic splits.
//!
//! Continuous features are standardized with training-split statistics and
//! then positionally encoded; categorical features are one-hot encoded up to
//! [`ONE_HOT_MAX_CARDINALITY`] values.

mod encode;
mod schema;
mod split;
mod table;

pub use encode::{
    decode_one_hot, encode_categorical, positional_encode, CategoricalEncoding, FeatureKind, FeatureSpec,
    FeatureValue,
};
pub use schema::{
    ColumnKind, ColumnSchema, Schema, TaskKind, DEFAULT_FREQUENCIES, DEFAULT_SPLIT, ONE_HOT_MAX_CARDINALITY,
};
pub use split::SplitIndices;
pub use table::{load_csv, Column, DatasetTable, EncodedBatch, Target, TargetSpec, Targets};

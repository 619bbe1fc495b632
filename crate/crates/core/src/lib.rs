//! Graph-based retrieval-augmented generation over formula-recommendation corpora.

pub mod bounds;
pub mod clients;
pub mod community;
pub mod corpus;
pub mod dataset;
pub mod engine;
pub mod index;
pub mod kg;
pub mod metrics;
pub mod numeric;
pub mod retrieval;
pub mod service;
pub mod taxonomy;
pub mod text;

pub use numeric::Scalar;

/// Knowledge-graph weighted adjacency in double precision.
pub type Graph = community::WeightedGraph<f64>;

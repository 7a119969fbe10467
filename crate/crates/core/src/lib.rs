//! Hierarchical graph classification with coarsened-graph infomax pooling.
//!
//! The crate is self-contained: a small reverse-mode tape over dense
//! matrices ([`tensor`]), GCN layers ([`layers`]), the pooling layers
//! ([`pool`]), the pair discriminator and infomax loss ([`infomax`]),
//! TUDataset ingestion ([`graph`]) and the training and experiment protocol
//! ([`train`]). [`cli`] wires everything into the `cgipool` binary.

pub mod cli;
pub mod graph;
pub mod infomax;
pub mod layers;
pub mod params;
pub mod pool;
pub mod tensor;
pub mod train;

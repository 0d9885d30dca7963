//! BIM models as attributed graphs, self-supervised pretraining of a graph
//! attention encoder over them, and transfer of that encoder to design-checking
//! tasks framed as node classification.
//!
//! The pipeline runs end to end from a neutral "BIM-lite" JSON description of a
//! building: floor models are parsed and validated ([`bim`]), spatial
//! relationships are discovered and described geometrically ([`spatial`]),
//! component attributes are embedded into fixed-width node features
//! ([`features`]), per-floor graphs are assembled ([`graph`]), and a masked
//! graph autoencoder is pretrained over the corpus ([`pretrain`]) before its
//! encoder is transferred to 4-way error classification ([`transfer`]).
//! A parametric generator plus error injector ([`synth`]) provides a fully
//! synthetic corpus so everything runs offline at desk scale.

pub mod bim;
pub mod cli;
pub mod config;
pub mod embedder;
pub mod error;
pub mod features;
pub mod geom;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod pretrain;
pub mod spatial;
pub mod synth;
pub mod transfer;

pub use error::{BignetError, Result};

//! New node prediction: given a candidate neighbor set for a previously
//! isolated node, decide whether those links exist.
//!
//! The crate covers graph handling and synthetic generators, purity-constrained
//! example generation, a small hand-differentiated GNN (GCN or mean-SAGE) with
//! an MLP head, training with early stopping, ranking metrics, and the file
//! formats used by the command-line tool.

pub mod error;
pub mod eval;
pub mod examples;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use examples::{CountStrategy, Example, ExampleScope, ExampleSet, Purity};
pub use graph::{Graph, NegativeGraph, NegativeScope, Partition};
pub use matrix::Matrix;
pub use model::{GnnConfig, LayerKind, NodePredictor};

//! Causal disentanglement of shortcut subgraphs for node classification on
//! heterophilic graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: graphs, heterophily ratios, propagation, ego subgraphs
//! * [`synth`]: seeded synthetic benchmarks and heterophily relabeling
//! * [`autodiff`]: a small dense reverse-mode tape and Adam
//! * [`gnn`]: GCN encoder, readout, softmax heads
//! * [`disentangle`]: masks, branch embeddings and the four loss terms
//! * [`theory`]: analytic layer gains, Monte-Carlo checks and audits
//! * [`harness`]: splits, training loops, evaluation, sweeps, persistence

pub mod autodiff;
pub mod disentangle;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use graph::Graph;
pub use matrix::Matrix;

//! Monte Carlo dropout LSTM text classification with uncertainty estimates
//! and a 2-D projection visualization of per-document predictive samples.
//!
//! The crate is organized as a stack: [`numcore`] provides tensors and
//! reverse-mode differentiation; [`layers`] builds the variational-dropout
//! LSTM on top of it; [`optim`] trains it; [`textpipe`] turns raw documents
//! into features; [`mcd`] runs stochastic inference; [`evalharness`] scores
//! predictions under cross-validation; [`projviz`] renders the sample space;
//! and [`pipeline`] wires everything into the commands exposed by the CLI.

pub mod evalharness;
pub mod layers;
pub mod mcd;
pub mod numcore;
pub mod optim;
pub mod pipeline;
pub mod projviz;
pub mod rng;
pub mod synth;
pub mod textpipe;

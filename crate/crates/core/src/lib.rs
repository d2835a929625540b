//! Hydrogen-bond graph drug-target affinity (HBGSA) pipeline.
//!
//! Structure parsing ([`pdb`]), hydrogen-bond extraction and featurisation
//! ([`hbond`]), sequence / pocket / SMILES encoding ([`featurize`]), a small
//! reverse-mode autodiff library ([`nn`]), the hydrogen-bond graph encoder
//! ([`gnn`]), the four-branch model ([`model`]), losses and metrics
//! ([`objective`]), training harnesses ([`train`]) and dataset handling
//! ([`dataset`]).
//!
//! The `examples/` directory has one runnable program per capability:
//!
//! | example | shows |
//! |---|---|
//! | `hbond_extract` | parse a structure, detect and rank hydrogen bonds |
//! | `hbond_density` | ligand atom counts from SMILES and bond density |
//! | `encode_sample` | build the four model inputs for a complex |
//! | `gradient_check` | finite-difference check of the tape and the model |
//! | `train_synthetic` | fit the model on generated data |
//! | `cross_validation` | k-fold harness with mean / std summary |
//! | `lambda_sweep` | the Pearson-weight sweep table |
//! | `evaluate` | metrics and plot-ready CSV for a checkpoint |
//! | `screen` | rank unlabeled ligands by predicted affinity |
//!
//! The `hbgsa` binary exposes the same functionality as subcommands.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod featurize;
pub mod geom;
pub mod gnn;
pub mod hbond;
pub mod model;
pub mod nn;
pub mod objective;
pub mod pdb;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

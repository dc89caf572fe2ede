//! Fused Gromov-Wasserstein (FGW) solvers and FGW-barycenter graph mixup.
//!
//! * [`graph`]: attributed graphs `(mu, X, A)` and feature-distance matrices.
//! * [`fgw`]: FGW objective/gradient, a strict mirror-descent solver with
//!   Sinkhorn projection, and a relaxed single-loop solver.
//! * [`barycenter`]: two-graph barycenter (mixup) by block-coordinate descent.
//! * [`augment`]: the dataset augmentation pipeline (pair sampling, sizing,
//!   discretization, soft labels).
//! * [`io`]: TUDataset text files and JSONL output.
//! * [`bench`]: solver-infeasibility and mixup-timing harnesses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod barycenter;
pub mod bench;
pub mod error;
pub mod fgw;
pub mod graph;
pub mod io;
pub mod synth;

pub use augment::{augment_dataset, AugmentConfig, MixupOrigin, SizePolicy, SoftLabeledGraph};
pub use barycenter::{solve_mixup, MixupProblem, MixupResult};
pub use error::{Error, Result};
pub use fgw::{solve_fgw_relaxed, solve_fgw_strict, Coupling, FgwConfig, FgwSolution, SolveTrace};
pub use graph::{FeatureDistanceMatrix, Graph};
pub use io::{Dataset, FeatureKind};

//! Uncertainty-aware mode-surface features for ensembles of symmetric
//! second-order tensor fields.
//!
//! The pipeline: an [`Ensemble`] of co-registered [`TensorField`]s is reduced
//! to [`ModeStats`] (mean tensor, mean mode, mode standard deviation), from
//! which [`features`] extracts attributed [`TriMesh`]es with marching cubes.

// Range checks are written `!(x <= hi)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod grid;
pub mod io;
pub mod isosurface;
mod mc_tables;
pub mod mesh;
pub mod stats;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{GridGeometry, ScalarField, TensorField, Vec3};
pub use mesh::{mesh_diagnostics, MeshReport, TriMesh};
pub use stats::{Ensemble, ModeStats};
pub use tensor::{ModeValue, SymTensor3};

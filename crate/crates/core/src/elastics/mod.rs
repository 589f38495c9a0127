//! Linear elastodynamics of one periodic cell: element matrices, assembly,
//! Bloch reduction, eigensolvers and band structures.

pub mod assembly;
pub mod banded;
pub mod bands;
pub mod bloch;
pub mod eigen;
pub mod element;
pub mod symmetry;

pub use assembly::{assemble, CsrMatrix, GlobalOperators};
pub use bands::{band_diagram, band_diagram_with, uniform_k_path, BandModel, BandStructure, KPointModes};
pub use bloch::{bloch_phase, BlochProblem, BlochReduction};
pub use eigen::{solve_bands, EigenMethod, EigenOptions, ModeSet};
pub use symmetry::{classify_symmetry, Mirrors, Parity, SymmetrySector};

//! Phononic-crystal band structures, phonon densities of states and the
//! orbital-relaxation models and fits used to interpret lifetime data.

pub mod dynamics;
pub mod elastics;
pub mod error;
pub mod fitkit;
pub mod geometry;
pub mod material;
pub mod rates;
pub mod spectrum;
pub mod tempfit;

pub use error::{Error, Result};

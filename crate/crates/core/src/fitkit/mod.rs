//! Nonlinear least squares and the curve and contour fits built on it.

pub mod cells;
pub mod conic;
pub mod lm;
pub mod models;
pub mod stats;
pub mod tether;

pub use cells::{
    fit_cell, summarize_cells, synthetic_cell_contours, synthetic_ensemble, CellContours, CellFit, ParamSummary,
};
pub use conic::{fit_circle, fit_ellipse, Circle, Ellipse, PointSet2D};
pub use lm::{minimize, LmOptions, LmSolution, Residuals};
pub use models::{
    fit_lorentzian, fit_nonlinear, fit_recovery, fit_saturation, CurveModel, FitResult, LorentzianFit, RecoveryFit,
    SaturationFit,
};
pub use stats::{gaussian_histogram_stats, HistogramStats};
pub use tether::{fit_tether_width, TetherFit};

//! Robustness battery: multiple-testing control, block bootstrap,
//! orthogonalization, placebo timing tests and the signal × asset grid.

mod bh;
mod bootstrap;
mod controls;
mod grid;

pub use bh::{benjamini_hochberg, bonferroni, BhOutcome};
pub use bootstrap::{block_resample_indices, moving_block_bootstrap, BootstrapOptions, BootstrapResult};
pub use controls::{lead_lag_test, orthogonalize, release_window_dummy, window_dummy, LeadLag, Orthogonalized};
pub use grid::{grid_long_csv, grid_matrix_csv, run_grid, GridResult, GridTemplate};

pub const DEFAULT_FDR_Q: f64 = 0.05;

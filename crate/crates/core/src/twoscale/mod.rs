//! Two-scale plate model: macro plate, unfolding and residuals.

pub mod macro_model;
pub mod mup;
pub mod residual;
pub mod space;
pub mod spectrum;
pub mod unfold;

pub use macro_model::{assemble_macro, run_macro, MacroSolver, MacroState, MacroSystem, WarpingMap};
pub use space::{clamped_map, plate_quadrature, PlatePoint, PLATE_DOFS};
pub use unfold::{gradient_identity_error, micro_l2_sq, unfold, unfold_elements, unfold_on, UnfoldedField};
pub use mup::{assemble_mup, mup_dof_count, run_mup, solve_mup_direct, trajectory_deviation, MupSystem, TwoScaleState, DEFAULT_DOF_BUDGET};
pub use residual::{kirchhoff_love_residual, KirchhoffLoveResidual};
pub use spectrum::{norm_equivalence_spectrum, norm_equivalence_spectrum_on, SpectrumReport};

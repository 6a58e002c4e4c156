//! Element kernels, sparse assembly, constraints and linear solvers.

pub mod assembly;
pub mod constraints;
pub mod hex;
pub mod plate;
pub mod quadrature;
pub mod solve;
pub mod sparse;

pub use assembly::*;
pub use constraints::{ConstraintSet, DofMap, MeanZero};
pub use solve::{
    pcg, solve_saddle, solve_spd, CgStats, CholeskySolver, LdltSolver, PcgSolver, SaddleOptions, SaddleSolution, SpdSolve,
    SADDLE_TOL, SPD_TOL,
};
pub use sparse::CsrMatrix;

/// Kind of finite element used for a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    /// Trilinear hexahedron (vector or scalar fields).
    HexTrilinear,
    /// Bilinear rectangle for in-plane mid-surface fields.
    QuadBilinear,
    /// C1 rectangle with value, slopes and twist per node for the deflection.
    RectC1Bending,
}

impl ElementKind {
    pub fn dofs_per_node(self, components: usize) -> usize {
        match self {
            ElementKind::HexTrilinear | ElementKind::QuadBilinear => components,
            ElementKind::RectC1Bending => 4,
        }
    }
}

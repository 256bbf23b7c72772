//! One-dimensional multiscale closure laboratory.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases in [`f64s`] and [`f32s`] fix the scalar for application code.

pub mod basis;
pub mod error;
pub mod greens;
pub mod io;
pub mod linalg;
pub mod memory;
pub mod meshproj;
pub mod operators;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

macro_rules! scalar_aliases {
    ($name:ident, $t:ty) => {
        pub mod $name {
            pub type Mesh1D = crate::meshproj::Mesh1D<$t>;
            pub type Discretization = crate::meshproj::Discretization<$t>;
            pub type ModalField = crate::meshproj::ModalField<$t>;
            pub type GridFunction = crate::meshproj::GridFunction<$t>;
            pub type KernelTable = crate::meshproj::KernelTable<$t>;
            pub type LinearOperator1D = crate::operators::LinearOperator1D<$t>;
            pub type Physics = crate::operators::Physics<$t>;
            pub type SemiDiscreteProblem = crate::operators::SemiDiscreteProblem<$t>;
            pub type LinearSystem = crate::operators::LinearSystem<$t>;
            pub type MemoryModelConfig = crate::memory::MemoryModelConfig<$t>;
            pub type KernelSample = crate::memory::KernelSample<$t>;
            pub type FiniteMemoryAux = crate::memory::FiniteMemoryAux<$t>;
            pub type SteadyProblem = crate::greens::SteadyProblem<$t>;
            pub type GreensField = crate::greens::GreensField<$t>;
            pub type IntegratorConfig = crate::solver::IntegratorConfig<$t>;
            pub type Trajectory = crate::solver::Trajectory<$t>;
            pub type DenseMatrix = crate::linalg::DenseMatrix<$t>;
        }
    };
}

scalar_aliases!(f64s, f64);
scalar_aliases!(f32s, f32);

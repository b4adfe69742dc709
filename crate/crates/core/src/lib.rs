//! Boundary values of resolvents, spectral densities and Fermi maps for
//! operators with an embedded eigenvalue, and the manifold of perturbations
//! under which that eigenvalue survives.

pub mod construct;
pub mod error;
pub mod export;
pub mod fermi;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod operator;
pub mod problem;
pub mod resolvent;
pub mod spectral;

pub use error::{Error, Result};
pub use operator::{
    apply_perturbation, build_operator, Angular, Boundary, Branch, Bump, DiscreteOperator, Grid1D,
    KindTag, Layout, lattice_sech_eigenvalue, Mode, ModelKind, ModelSpec, PerturbationBasis, PotentialSpec,
};
pub use problem::{EmbeddedProblem, ProblemOptions};
pub use resolvent::{BoundaryResolvent, DensityPair, Method};
pub use spectral::{SpectralData, SpectralOptions};
pub use nalgebra::{DMatrix, DVector};
pub use construct::{construct_w, ConstructOptions, ConstructedW};
pub use fermi::{FermiFrame, FermiSetup, FermiValue, LambdaSolve};
pub use manifold::{ManifoldOptions, ManifoldPoint, SplitBasis};

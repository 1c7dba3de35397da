//! Potential theory for nearest-neighbour random walks on infinite trees.
//!
//! Trees are given by a finite core plus self-similar tails ([`tree`]). On
//! top of that the crate computes hitting probabilities ([`hitting`]), Martin
//! kernels and boundary direction classes ([`kernel`]), harmonic measures of
//! boundary cylinders ([`harmonic`]), and decides the weak and strong mean
//! value properties of signed measures ([`mvp`]). [`oracle`] is an
//! independent Monte Carlo estimator used to cross-check the exact values.
//!
//! All numerical code is generic over [`Scalar`]; the `*64` aliases below fix
//! the scalar to `f64`, which is what the file formats and the CLI use.

pub mod error;
pub mod fixtures;
pub mod harmonic;
pub mod hitting;
pub mod io;
pub mod kernel;
pub mod mvp;
pub mod oracle;
pub mod scalar;
pub mod tree;

pub use error::{Error, Result, SpecViolation};
pub use harmonic::{
    cylinder_measure, flux, harmonic_extension, harmonicity_residual, CylinderFunction, FluxReport,
};
pub use hitting::{
    branch_scan, f_between, return_probability, solve_hitting, BranchReport, EdgeF, SolveOptions,
};
pub use kernel::{direction_classes, kernel_boundary, kernel_sup, kernel_vertex, DirectionClass};
pub use mvp::{
    classify_mvp, cylinder_mvp, l_value, tail_integrability, tail_weak_mvp, trees1_equivalence,
    GeometricTailMeasure, MvpVerdict, SignedMeasure,
};
pub use scalar::Scalar;
pub use tree::{validate_spec, Hull, TreeSpec, Vertex};

pub type TreeSpec64 = TreeSpec<f64>;
pub type EdgeF64 = EdgeF<f64>;
pub type DirectionClass64 = DirectionClass<f64>;
pub type SignedMeasure64 = SignedMeasure<f64>;
pub type GeometricTailMeasure64 = GeometricTailMeasure<f64>;
pub type MvpVerdict64 = MvpVerdict<f64>;
pub type CylinderFunction64 = CylinderFunction<f64>;

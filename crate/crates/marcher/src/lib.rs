//! A desk-scale toolkit for integrating ODE and DAE systems written in the
//! implicit form `F(t, u, udot) = G(t, u)`, with explicit, implicit, IMEX,
//! linearly implicit, and multistep schemes behind one stepping loop, plus
//! error-controlled adaptivity, event location, discrete adjoint and tangent
//! sensitivities, and run instrumentation.

pub mod adapt;
pub mod error;
pub mod events;
pub mod linalg;
pub mod matrix;
pub mod monitor;
pub mod newton;
pub mod options;
pub mod problem;
pub mod problems;
pub mod sensitivity;
pub mod steppers;
pub mod tableaux;

pub use adapt::{AdaptConfig, Controller, NormType};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use options::{Atol, FinalTimePolicy, SolveOptions, ToleranceSpec};
pub use problem::{make_problem, EquationKind, FormCallbacks, FormKind, Problem};
pub use steppers::{
    solve, solve_adaptive, solve_fixed, SolveHooks, SolveResult, SolveStats, StepperConfig,
    Termination,
};
pub use tableaux::registry::{parse_scheme, registry_get, Scheme};

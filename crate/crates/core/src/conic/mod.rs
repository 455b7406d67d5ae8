//! Conic modeling layer, the bundled interior-point backend and SDR post-processing.

pub mod ipm;
pub mod model;
pub mod sdr;

pub use ipm::{solve, ConicBackend, ConicSolution, InteriorPoint, SolveStatus, SolverOptions};
pub use model::{
    Census, ConicProgram, Constraint, ConstraintBody, ConstraintClass, Env, HermAffine, MatrixId, RealAffine,
    ScalarId, Var, VarDecl, VecAffine,
};
pub use sdr::{extract_rank_one, gaussian_randomize, project_phases, psd_factor, sample_cn};

//! Box-constrained trajectory optimization.

mod adjoint;
mod fd;
mod lbfgs;
mod ocp;

pub use adjoint::{gradient_adjoint, WelfareProblem};
pub use fd::{gradient_fd, gradient_fd_stencil, FdGradient, FdStencil};
pub use lbfgs::{
    maximize, maximize_scaled, DecisionVector, LineSearch, SolveOptions, SolveReport, Termination,
};
pub use ocp::{optimize_profile, optimize_region, ProfileSolution, SolveDiagnostics};

//! Closed-form oracles and theoretical tools: the linear equilibrium, the
//! state/error Jacobian, Hessian congruence and the wavefront decay model.

mod decay;
mod equilibrium;
mod jacobian;

pub use decay::{
    binomial_magnitude, poisson_limit, simulate_simplified_wavefront,
    simulate_simplified_wavefront_log, write_log_table_csv, DecayModel,
};
pub use equilibrium::{analytic_equilibrium_dense, analytic_equilibrium_linear, BlockTridiagonalSystem};
pub use jacobian::{
    build_jacobian, congruent_error_hessian, hessian_inertia_check, jacobian_at_states,
    numerical_hessian_errors, numerical_hessian_states, Inertia, InertiaReport,
    CRITICAL_POINT_TOL, DEFAULT_JACOBIAN_CAP, HESSIAN_DIM_CAP, HESSIAN_STEP, INERTIA_THRESHOLD,
};

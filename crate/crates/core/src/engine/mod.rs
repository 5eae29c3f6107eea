//! Stochastic time evolution and ensemble averaging.

pub mod ensemble;
pub mod output;
pub mod perturbative;
pub mod propagator;
pub mod trajectory;

pub use ensemble::{average, collect_trajectories, run_ensemble, EnsembleConfig, EnsembleResult};
pub use propagator::{ideal_pulse, pulse_propagator, step_propagator};
pub use trajectory::{
    run_trajectory, Frame, InitialState, IntegratorConfig, PulseModel, SampleSchedule, Scenario, Trajectory,
};

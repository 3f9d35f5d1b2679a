//! Problem data: agent costs and coupling, the communication graph,
//! spectral constants, and step-size parameters with their sufficient
//! conditions.

mod cost;
mod generate;
mod instance;
mod params;
mod topology;

pub use cost::{cost_gradient, cost_value, AgentCost, AgentSpec, CostOracle, QuadraticCost};
pub use generate::{generate_instance, generate_with, GeneratorConfig};
pub use instance::{AgentDoc, InstanceDoc, ProblemInstance, TopologyDoc};
pub use params::{
    spectral_constants, spectral_constants_with, validate_hyperparams, Bound, BufferSchedule,
    ConditionCheck, ConditionReport, HyperParams, Mode, SpectralConstants,
};
pub use topology::{metropolis_weights, Topology};

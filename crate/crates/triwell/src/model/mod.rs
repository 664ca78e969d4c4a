//! Model definition: trap geometry, coupling parameters, Fock basis and the
//! second-quantized operators of the three-mode system.

mod fock;
mod operators;
mod params;

pub use fock::FockBasis;
pub use operators::{
    build_hamiltonian, generator_matrices, hamiltonian_from_generators, observable_matrices,
    GeneratorSet, ObservableSet, OperatorMatrix,
};
pub use params::{
    derive_collision_rates, params_from_rates, CollisionRates, ModelParams, ParamsConfig,
    RatesConversion, TrapConfig, TrapGeometry,
};

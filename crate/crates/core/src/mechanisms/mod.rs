//! The data custodian: sensitivities and noise-adding mechanisms.

mod custodian;
mod laplace;
mod sensitivity;

pub use custodian::{
    answer_bdp_existence, answer_threshold, dataset_size_query, BdpCustodian, DefenseMode, ExistenceMechanism,
    GlobalLaplaceCustodian, GroupIdpCustodian, GroupIdpParams, MechanismAnswer, ThresholdMechanism, TruthfulOracle,
};
pub use laplace::{laplace_from_bits, sample_laplace, NoiseSource};
pub use sensitivity::{bootstrap_sensitivity, k_local_sensitivity, k_local_sensitivity_bruteforce, sensitivity_from_count};

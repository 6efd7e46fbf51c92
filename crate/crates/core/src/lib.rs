//! Spectral and algebraic invariants of finite-dimensional Popescu systems.
//!
//! A Popescu system is a tuple of `n x n` matrices `V_0, …, V_{d-1}` with
//! `Σ V_i V_i* = 1`. It determines a unital completely positive transfer
//! map `σ(X) = Σ V_i X V_i*`, a state on the Cuntz algebra `O_d`, and a
//! translation-invariant finitely correlated state on the two-sided chain
//! `⊗_Z M_d`. This crate computes the invariants that classify those
//! states:
//!
//! * [`cpmap`]: the superoperator, fixed points, commutants, generated
//!   algebras, invariant states, peripheral spectrum, intertwiners.
//! * [`classify`]: purity of the Cuntz state, gauge-subgroup order `k`,
//!   purity and factoriality of the chain state.
//! * [`chain`]: local expectations, two-point functions and clustering.
//! * [`dilation`]: truncated Cuntz dilations and moment tables.
//! * [`modular`]: modular data of a faithful invariant state and the dual
//!   system living in the commutant.
//! * [`cli`]: JSON file formats and the command implementations behind the
//!   `popescu` binary.

pub mod chain;
pub mod classify;
pub mod cli;
pub mod cpmap;
pub mod dilation;
pub mod error;
pub mod modular;
pub mod numerics;
pub mod popescu;

pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector};
pub use popescu::{random_system, PopescuSystem, Word};

use serde::{Deserialize, Serialize};

/// Tolerances shared by the analysis pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Accepted residual of `Σ V_i V_i* = 1`.
    pub validate: f64,
    /// An eigenvalue `λ` is peripheral when `|1 - |λ|| <= peripheral`.
    pub peripheral: f64,
    /// Matching slack when comparing or clustering spectral sets.
    pub spectral_set: f64,
    /// Relative singular-value threshold for null spaces of superoperators.
    pub kernel: f64,
    /// Eigenvalue threshold defining the support of a density matrix.
    pub support: f64,
    /// Mutual projection residual for subspace equality.
    pub subspace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            validate: 1e-9,
            peripheral: 1e-9,
            spectral_set: 1e-8,
            kernel: 1e-9,
            support: 1e-9,
            subspace: 1e-8,
        }
    }
}

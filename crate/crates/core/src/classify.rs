//! Verdicts assembled from the transfer-map data: purity of the state on
//! `O_d`, the order `k` of its gauge-invariance subgroup, and purity of the
//! translation-invariant chain state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{clustering_defect, LocalObservable, DEFAULT_DECAY_TOL, DEFAULT_N_MAX};
use crate::cpmap::{
    commutant, fixed_points, gauge_group_order, generated_algebra, invariant_state,
    mixed_fixed_points, peripheral_on_subspace, peripheral_spectrum, peripheral_values, GaugeGroup,
    InvariantState, OperatorSubspace, PeripheralEigenvalue,
};
use crate::error::{Error, Result};
use crate::numerics::ONE;
use crate::popescu::PopescuSystem;
use crate::Tolerances;

/// Data of the Cuntz-algebra analysis.
#[derive(Debug, Clone)]
pub struct OdClassification {
    pub validate_residual: f64,
    pub fixed_dim: usize,
    pub mixed_fixed_dim: usize,
    pub ergodic: bool,
    pub od_state_pure: bool,
    pub invariant: InvariantState,
    /// The system compressed to the support of the invariant state.
    pub compressed: PopescuSystem,
    pub compressed_ergodic: bool,
    /// Peripheral eigenvalues of the compressed system.
    pub peripheral: Vec<PeripheralEigenvalue>,
    /// Set when the system is not ergodic: the peripheral set carries no
    /// group-theoretic meaning then.
    pub peripheral_informational: bool,
    pub gauge: Option<GaugeGroup>,
    pub notes: Vec<String>,
}

impl OdClassification {
    pub fn k(&self) -> Option<usize> {
        self.gauge.as_ref().map(|g| g.k)
    }
}

/// Ergodicity of `σ`, checked two independent ways.
fn ergodicity(sys: &PopescuSystem, tol: &Tolerances) -> Result<(usize, usize)> {
    let fixed_dim = fixed_points(sys, tol.kernel)?.dim();
    let mixed_dim = mixed_fixed_points(sys, sys, tol.kernel)?.dim();
    if fixed_dim != mixed_dim {
        return Err(Error::NumericalHealth(format!(
            "fixed-point dimension {fixed_dim} differs from intertwiner dimension {mixed_dim}"
        )));
    }
    Ok((fixed_dim, mixed_dim))
}

pub fn classify_od(sys: &PopescuSystem, tol: &Tolerances) -> Result<OdClassification> {
    let validate_residual = sys.validate();
    let (fixed_dim, mixed_fixed_dim) = ergodicity(sys, tol)?;
    let ergodic = fixed_dim == 1;
    let invariant = invariant_state(sys, tol.support)?;
    let mut notes = Vec::new();
    let compressed = if invariant.state.faithful {
        sys.clone()
    } else {
        notes.push(format!(
            "compressed from dimension {} to the support of the invariant state (rank {})",
            sys.n(),
            invariant.state.support_rank
        ));
        sys.compress(&invariant.state.support, tol.validate.max(1e-9))?
    };
    let compressed_ergodic = if compressed.n() == sys.n() {
        ergodic
    } else {
        ergodicity(&compressed, tol)?.0 == 1
    };
    let peripheral = peripheral_spectrum(&compressed, tol)?;
    let mut gauge = None;
    if ergodic {
        if !compressed_ergodic {
            return Err(Error::NumericalHealth(
                "ergodicity is lost after compression to the support".into(),
            ));
        }
        let values = peripheral_values(&peripheral);
        let max_den = (compressed.n() * compressed.n()) as u64;
        gauge = Some(gauge_group_order(&values, max_den, tol.spectral_set)?);
    } else {
        notes.push("not ergodic: peripheral set is informational and k is undefined".into());
    }
    // a faithful invariant state rules out Jordan blocks on the circle
    if let Some(p) = peripheral.iter().find(|p| !p.semisimple) {
        return Err(Error::NumericalHealth(format!(
            "peripheral eigenvalue {} has geometric multiplicity {} but algebraic multiplicity {}",
            p.value, p.geometric, p.algebraic
        )));
    }
    Ok(OdClassification {
        validate_residual,
        fixed_dim,
        mixed_fixed_dim,
        ergodic,
        od_state_pure: ergodic,
        invariant,
        compressed,
        compressed_ergodic,
        peripheral,
        peripheral_informational: !ergodic,
        gauge,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHypotheses {
    #[serde(rename = "M_is_factor")]
    pub m_is_factor: bool,
    #[serde(rename = "fixed_equals_M_prime")]
    pub fixed_equals_m_prime: bool,
    pub phi_faithful: bool,
}

impl ChainHypotheses {
    pub fn all(&self) -> bool {
        self.m_is_factor && self.fixed_equals_m_prime && self.phi_faithful
    }

    pub fn failing(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.m_is_factor {
            out.push("M_is_factor".to_string());
        }
        if !self.fixed_equals_m_prime {
            out.push("fixed_equals_M_prime".to_string());
        }
        if !self.phi_faithful {
            out.push("phi_faithful".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainVerdict {
    Pure,
    NotPure,
    HypothesesNotMet(Vec<String>),
}

impl ChainVerdict {
    pub fn is_pure(&self) -> Option<bool> {
        match self {
            ChainVerdict::Pure => Some(true),
            ChainVerdict::NotPure => Some(false),
            ChainVerdict::HypothesesNotMet(_) => None,
        }
    }
}

/// Data of the two-sided chain analysis.
#[derive(Debug, Clone)]
pub struct ChainClassification {
    /// The system the analysis ran on (compressed to the support if needed).
    pub system: PopescuSystem,
    pub invariant: InvariantState,
    pub algebra_dim: usize,
    pub commutant_dim: usize,
    pub fixed_dim: usize,
    pub hypotheses: ChainHypotheses,
    pub verdict: ChainVerdict,
    pub chain_factor: Option<bool>,
    /// Peripheral eigenvalues of `σ` restricted to the generated algebra.
    pub peripheral_on_m: Vec<PeripheralEigenvalue>,
    /// Largest clustering defect at the end of the window, over the probe
    /// observables.
    pub clustering_tail: Option<f64>,
    pub notes: Vec<String>,
}

fn is_trivial_set(values: &[Complex64], tol: f64) -> bool {
    values.len() == 1 && (values[0] - ONE).norm() <= tol
}

pub fn classify_chain(sys: &PopescuSystem, tol: &Tolerances) -> Result<ChainClassification> {
    chain_inner(sys, tol, None)
}

/// As [`classify_chain`], reusing what `od` already computed for `sys`.
pub fn classify_chain_with(
    sys: &PopescuSystem,
    tol: &Tolerances,
    od: &OdClassification,
) -> Result<ChainClassification> {
    chain_inner(sys, tol, Some(od))
}

fn chain_inner(
    sys: &PopescuSystem,
    tol: &Tolerances,
    prior: Option<&OdClassification>,
) -> Result<ChainClassification> {
    let mut notes = Vec::new();
    let mut system = sys.clone();
    let mut invariant = match prior {
        Some(od) => od.invariant.clone(),
        None => invariant_state(&system, tol.support)?,
    };
    for _ in 0..sys.n() {
        if invariant.state.faithful {
            break;
        }
        notes.push(format!(
            "invariant state not faithful: compressed from dimension {} to {}",
            system.n(),
            invariant.state.support_rank
        ));
        system = system.compress(&invariant.state.support, tol.validate.max(1e-9))?;
        invariant = invariant_state(&system, tol.support)?;
    }
    let n = system.n();
    let m = generated_algebra(system.ops(), tol.kernel)?;
    // the commutant of the full matrix algebra is the scalars
    let mp = if m.dim() == n * n {
        OperatorSubspace::scalars(n)
    } else {
        commutant(system.ops(), tol.kernel)?
    };
    let fixed = fixed_points(&system, tol.kernel)?;
    let hypotheses = ChainHypotheses {
        m_is_factor: m.intersection_dim(&mp, tol.subspace) == 1,
        fixed_equals_m_prime: fixed.same_span(&mp, tol.subspace),
        phi_faithful: invariant.state.faithful,
    };
    if !hypotheses.fixed_equals_m_prime
        && mp.dim() < fixed.dim()
        && mp.is_subspace_of(&fixed, tol.subspace)
    {
        notes.push("system is a non-minimal presentation; consider compressing".into());
    }
    let mut peripheral_on_m = Vec::new();
    let mut clustering_tail = None;
    let verdict = if hypotheses.all() {
        peripheral_on_m = match prior {
            Some(od) if m.dim() == n * n && od.compressed.ops() == system.ops() => {
                od.peripheral.clone()
            }
            _ => peripheral_on_subspace(&system, &m, tol)?,
        };
        let pure = is_trivial_set(&peripheral_values(&peripheral_on_m), tol.spectral_set);
        let d = system.d();
        let probes = [
            (LocalObservable::matrix_unit(d, 0, 0), LocalObservable::matrix_unit(d, 0, 0)),
            (LocalObservable::matrix_unit(d, 0, 1), LocalObservable::matrix_unit(d, 1, 0)),
        ];
        let mut tail: f64 = 0.0;
        for (x, y) in &probes {
            let cd = clustering_defect(
                &system,
                &invariant.state,
                x,
                y,
                DEFAULT_N_MAX,
                DEFAULT_DECAY_TOL,
                1e3 * tol.support.max(1e-12),
            )?;
            tail = tail.max(*cd.defects.last().unwrap_or(&0.0));
        }
        clustering_tail = Some(tail);
        if pure && tail > DEFAULT_DECAY_TOL {
            notes.push(format!(
                "clustering defect {tail:e} at n = {DEFAULT_N_MAX} is still above {DEFAULT_DECAY_TOL:e}; decay may be slow"
            ));
        }
        if !pure && tail <= DEFAULT_DECAY_TOL {
            notes.push("probe observables cluster although the peripheral set is nontrivial".into());
        }
        if pure {
            ChainVerdict::Pure
        } else {
            ChainVerdict::NotPure
        }
    } else {
        ChainVerdict::HypothesesNotMet(hypotheses.failing())
    };
    let chain_factor = verdict.is_pure();
    if n != sys.n() && hypotheses.all() {
        notes.push(format!("chain analysis ran on the compressed system of dimension {n}"));
    }
    Ok(ChainClassification {
        system,
        invariant,
        algebra_dim: m.dim(),
        commutant_dim: mp.dim(),
        fixed_dim: fixed.dim(),
        hypotheses,
        verdict,
        chain_factor,
        peripheral_on_m,
        clustering_tail,
        notes,
    })
}

/// Both analyses of one system.
#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub od: OdClassification,
    pub chain: ChainClassification,
}

impl ClassificationReport {
    pub fn notes(&self) -> Vec<String> {
        self.od.notes.iter().chain(&self.chain.notes).cloned().collect()
    }
}

pub fn classify(sys: &PopescuSystem, tol: &Tolerances) -> Result<ClassificationReport> {
    let od = classify_od(sys, tol)?;
    let chain = classify_chain_with(sys, tol, &od)?;
    Ok(ClassificationReport { od, chain })
}

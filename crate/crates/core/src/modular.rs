//! Modular data of a faithful invariant state and the dual Popescu system.
//!
//! The GNS space of `(M_n, φ)` is `M_n` with the trace inner product,
//! vectorized by column stacking. The cyclic vector is `Φ = ρ^{1/2}`,
//! `Δ^{1/2} X = ρ^{1/2} X ρ^{-1/2}` and `J X = X*`. Operators that are
//! linear overall, such as `J A J`, are stored as ordinary matrices:
//! `J A J = P conj(A) P` where `P` is the transposition permutation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cpmap::{
    apply_predual, fixed_points, peripheral_of_matrix, peripheral_spectrum, peripheral_values,
    predual_matrix, DensityState, PeripheralEigenvalue,
};
use crate::error::{Error, Result};
use crate::numerics::{
    c, conj, fro, herm_inv_sqrt, herm_sqrt, identity, kron, op_norm, set_contained, unvec, vec_of,
    CMatrix, CVector,
};
use crate::popescu::PopescuSystem;
use crate::Tolerances;

#[derive(Debug, Clone)]
pub struct ModularData {
    pub state: DensityState,
    /// `ρ^{1/2}`, the cyclic and separating vector.
    pub phi: CMatrix,
    pub rho_inv_half: CMatrix,
    pub delta_half: CMatrix,
    pub delta_minus_half: CMatrix,
    /// `vec(X) ↦ vec(X^T)`; `J v = P conj(v)`.
    pub transpose_perm: CMatrix,
}

/// `X ↦ A X` on column-stacked `n x n` matrices.
pub fn left_mult(a: &CMatrix) -> CMatrix {
    kron(&identity(a.nrows()), a)
}

/// `X ↦ X B` on column-stacked `n x n` matrices.
pub fn right_mult(b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), &identity(b.nrows()))
}

fn transpose_permutation(n: usize) -> CMatrix {
    let mut p = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            // vec index of (i, j) is j*n + i
            p[(i * n + j, j * n + i)] = c(1.0, 0.0);
        }
    }
    p
}

impl ModularData {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn phi_vector(&self) -> CVector {
        vec_of(&self.phi)
    }

    /// `J v`.
    pub fn apply_j(&self, v: &CVector) -> CVector {
        &self.transpose_perm * v.map(|z| z.conj())
    }

    /// `J A J` for a linear operator `A`.
    pub fn conjugate_by_j(&self, a: &CMatrix) -> CMatrix {
        &self.transpose_perm * conj(a) * &self.transpose_perm
    }

    /// `Δ = Δ^{1/2} Δ^{1/2}`.
    pub fn delta(&self) -> CMatrix {
        &self.delta_half * &self.delta_half
    }

    /// `<Φ, X Φ>` for an operator on the GNS space.
    pub fn vector_state(&self, x: &CMatrix) -> Complex64 {
        let v = self.phi_vector();
        v.dotc(&(x * &v))
    }
}

fn check_state(sys: &PopescuSystem, phi: &DensityState, tol: f64) -> Result<()> {
    if phi.n() != sys.n() {
        return Err(Error::Shape("state and system dimensions differ".into()));
    }
    if !phi.faithful || phi.min_eigenvalue <= tol {
        return Err(Error::NotFaithful(phi.min_eigenvalue));
    }
    let r = fro(&(apply_predual(sys, &phi.rho) - &phi.rho));
    if r > tol {
        return Err(Error::NotInvariant(r));
    }
    Ok(())
}

pub fn gns(sys: &PopescuSystem, phi: &DensityState, tol: f64) -> Result<ModularData> {
    check_state(sys, phi, tol)?;
    let n = sys.n();
    let half = herm_sqrt(&phi.rho, tol)?;
    let inv_half = herm_inv_sqrt(&phi.rho, tol)?;
    let delta_half = kron(&inv_half.transpose(), &half);
    let delta_minus_half = kron(&half.transpose(), &inv_half);
    Ok(ModularData {
        state: phi.clone(),
        phi: half,
        rho_inv_half: inv_half,
        delta_half,
        delta_minus_half,
        transpose_perm: transpose_permutation(n),
    })
}

#[derive(Debug, Clone)]
pub struct DualSystem {
    pub modular: ModularData,
    /// `Ṽ_j = J Δ^{-1/2} L(V_j*) Δ^{1/2} J` on the GNS space.
    pub ops: Vec<CMatrix>,
    /// `W_j = ρ^{1/2} V_j ρ^{-1/2}`, with `Ṽ_j = R(W_j)`.
    pub params: Vec<CMatrix>,
    /// `max_j ||Ṽ_j - R(W_j)||`.
    pub parameter_residual: f64,
}

impl DualSystem {
    /// The dual transfer map in parameter form, `Y ↦ Σ W_j* Y W_j`, as the
    /// Popescu system with operators `W_j*`.
    pub fn parameter_system(&self, tol: f64) -> Result<PopescuSystem> {
        PopescuSystem::new(self.params.iter().map(|w| w.adjoint()).collect(), tol)
    }
}

pub fn dual_system(sys: &PopescuSystem, phi: &DensityState, tol: f64) -> Result<DualSystem> {
    let md = gns(sys, phi, tol)?;
    let mut ops = Vec::with_capacity(sys.d());
    let mut params = Vec::with_capacity(sys.d());
    let mut worst: f64 = 0.0;
    for v in sys.ops() {
        let inner = &md.delta_minus_half * left_mult(&v.adjoint()) * &md.delta_half;
        let vt = md.conjugate_by_j(&inner);
        let w = &md.phi * v * &md.rho_inv_half;
        let r = fro(&(&vt - right_mult(&w)));
        worst = worst.max(r / fro(&w).max(1.0));
        ops.push(vt);
        params.push(w);
    }
    if worst > 1e-10 {
        return Err(Error::NumericalHealth(format!(
            "dual operator differs from right multiplication by W (residual {worst:e})"
        )));
    }
    Ok(DualSystem { modular: md, ops, params, parameter_residual: worst })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualityReport {
    /// `||Σ Ṽ_j Ṽ_j* - 1||`.
    pub dual_relation: f64,
    /// `||Σ W_j* W_j - 1||`.
    pub parameter_relation: f64,
    /// `||Σ V_j* ρ V_j - ρ||`.
    pub invariance: f64,
    /// `max_j ||J Δ^{1/2} Ṽ_j* Δ^{-1/2} J - L(V_j)||`.
    pub double_dual: f64,
    /// Same comparison on the extracted `n x n` parameters.
    pub double_dual_parameter: f64,
    /// `max |φ̃(σ̃(X)) - φ̃(X)|` over `X = R(e_ab)`.
    pub dual_state_invariance: f64,
    /// `max_j ||Ṽ_j* Φ - V_j* Φ||`.
    pub cyclic_vector: f64,
    /// `max_ij ||[Ṽ_i, L(V_j)]||`.
    pub commutation: f64,
    pub parameter_residual: f64,
}

impl DualityReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.dual_relation,
            self.parameter_relation,
            self.invariance,
            self.double_dual,
            self.double_dual_parameter,
            self.dual_state_invariance,
            self.cyclic_vector,
            self.commutation,
            self.parameter_residual,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn verify_duality(sys: &PopescuSystem, phi: &DensityState, tol: f64) -> Result<DualityReport> {
    let dual = dual_system(sys, phi, tol)?;
    let md = &dual.modular;
    let n = sys.n();
    let big = n * n;

    let mut sum = -identity(big);
    for vt in &dual.ops {
        sum += vt * vt.adjoint();
    }
    let dual_relation = op_norm(&sum);

    let mut wsum = -identity(n);
    for w in &dual.params {
        wsum += w.adjoint() * w;
    }
    let parameter_relation = op_norm(&wsum);
    let invariance = op_norm(&(apply_predual(sys, &phi.rho) - &phi.rho));

    // The commutant has modular conjugation J and modular operator Δ^{-1}.
    let mut double_dual: f64 = 0.0;
    let mut double_dual_parameter: f64 = 0.0;
    for (vt, v) in dual.ops.iter().zip(sys.ops()) {
        let inner = &md.delta_half * vt.adjoint() * &md.delta_minus_half;
        let back = md.conjugate_by_j(&inner);
        double_dual = double_dual.max(op_norm(&(&back - left_mult(v))));
        let block = back.view((0, 0), (n, n)).into_owned();
        double_dual_parameter = double_dual_parameter.max(op_norm(&(block - v)));
    }

    // φ̃(X) = <Φ, X Φ> on the commutant, σ̃(X) = Σ Ṽ_j X Ṽ_j*.
    let phi_vec = md.phi_vector();
    let u: Vec<CVector> = dual.ops.iter().map(|vt| vt.adjoint() * &phi_vec).collect();
    let mut dual_state_invariance: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let x = right_mult(&crate::numerics::unit(n, n, a, b));
            let lhs: Complex64 = u.iter().map(|uj| uj.dotc(&(&x * uj))).sum();
            let rhs = md.vector_state(&x);
            dual_state_invariance = dual_state_invariance.max((lhs - rhs).norm());
        }
    }

    let cyclic_vector = u
        .iter()
        .zip(sys.ops())
        .map(|(uj, v)| (uj - vec_of(&(v.adjoint() * &md.phi))).norm())
        .fold(0.0, f64::max);

    let mut commutation: f64 = 0.0;
    for vt in &dual.ops {
        for v in sys.ops() {
            let l = left_mult(v);
            commutation = commutation.max(op_norm(&(vt * &l - &l * vt)));
        }
    }

    Ok(DualityReport {
        dual_relation,
        parameter_relation,
        invariance,
        double_dual,
        double_dual_parameter,
        dual_state_invariance,
        cyclic_vector,
        commutation,
        parameter_residual: dual.parameter_residual,
    })
}

#[derive(Debug, Clone)]
pub struct DualComparison {
    pub fixed_dim: usize,
    pub dual_fixed_dim: usize,
    pub ergodic_match: bool,
    pub peripheral: Vec<PeripheralEigenvalue>,
    pub dual_peripheral: Vec<PeripheralEigenvalue>,
    pub psp_match: bool,
    /// Every unimodular eigenvalue of the predual is an eigenvalue of `σ`.
    pub predual_in_forward: bool,
}

pub fn compare_duals(sys: &PopescuSystem, phi: &DensityState, tol: &Tolerances) -> Result<DualComparison> {
    let dual = dual_system(sys, phi, tol.validate.max(1e-9))?;
    let dsys = dual.parameter_system(tol.validate.max(1e-9))?;
    let fixed_dim = fixed_points(sys, tol.kernel)?.dim();
    let dual_fixed_dim = fixed_points(&dsys, tol.kernel)?.dim();
    let peripheral = peripheral_spectrum(sys, tol)?;
    let dual_peripheral = peripheral_spectrum(&dsys, tol)?;
    let a = peripheral_values(&peripheral);
    let b = peripheral_values(&dual_peripheral);
    let psp_match = set_contained(&a, &b, tol.spectral_set) && set_contained(&b, &a, tol.spectral_set);
    let n = sys.n();
    let pred = peripheral_of_matrix(&predual_matrix(sys).matrix, &|v| unvec(v, n, n), tol)?;
    let predual_in_forward = set_contained(&peripheral_values(&pred), &a, tol.spectral_set);
    if !predual_in_forward {
        return Err(Error::NumericalHealth(
            "a unimodular eigenvalue of the predual is missing from the spectrum of σ".into(),
        ));
    }
    Ok(DualComparison {
        fixed_dim,
        dual_fixed_dim,
        ergodic_match: (fixed_dim == 1) == (dual_fixed_dim == 1),
        peripheral,
        dual_peripheral,
        psp_match,
        predual_in_forward,
    })
}

//! The translation-invariant state on the two-sided chain `⊗_Z M_d`
//! determined by a Popescu system and an invariant state `φ`:
//! `ω(A_1 ⊗ ⋯ ⊗ A_m) = φ(𝔼_{A_1} ∘ ⋯ ∘ 𝔼_{A_m}(1))`.

use serde::{Deserialize, Serialize};

use crate::cpmap::{apply_predual, apply_sigma, DensityState};
use crate::error::{Error, Result};
use crate::numerics::{conj, fro, identity, kron, unit, CMatrix, ZERO};
use crate::popescu::PopescuSystem;
use num_complex::Complex64;

/// Default number of gaps examined by [`clustering_defect`].
pub const DEFAULT_N_MAX: usize = 200;
/// Default threshold below which a clustering defect counts as decayed.
pub const DEFAULT_DECAY_TOL: f64 = 1e-6;

/// A product observable `A_1 ⊗ ⋯ ⊗ A_m` on consecutive sites starting at
/// `start_site`. Gaps must be filled with explicit identity factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObservable {
    pub start_site: i64,
    pub factors: Vec<CMatrix>,
}

impl LocalObservable {
    pub fn new(start_site: i64, factors: Vec<CMatrix>) -> Result<Self> {
        let d = factors
            .first()
            .map(|f| f.nrows())
            .ok_or_else(|| Error::Shape("observable needs at least one factor".into()))?;
        for f in &factors {
            if f.shape() != (d, d) {
                return Err(Error::Shape("observable factors must all be d x d".into()));
            }
        }
        Ok(Self { start_site, factors })
    }

    /// A single-site observable at site 1.
    pub fn single(a: CMatrix) -> Result<Self> {
        Self::new(1, vec![a])
    }

    /// The matrix unit `e_ij` of `M_d` at site 1.
    pub fn matrix_unit(d: usize, i: usize, j: usize) -> Self {
        Self { start_site: 1, factors: vec![unit(d, d, i, j)] }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.factors.is_empty() || self.factors.iter().any(|f| f.shape() != (d, d)) {
            return Err(Error::Shape(format!("observable factors must be {d} x {d}")));
        }
        Ok(())
    }
}

fn check_invariant(sys: &PopescuSystem, phi: &DensityState, tol: f64) -> Result<()> {
    if phi.n() != sys.n() {
        return Err(Error::Shape("state and system dimensions differ".into()));
    }
    let r = fro(&(apply_predual(sys, &phi.rho) - &phi.rho));
    if r > tol {
        return Err(Error::NotInvariant(r));
    }
    Ok(())
}

/// `𝔼_A` as an `n² x n²` matrix: `B ↦ Σ_ij A_ij V_i B V_j*`.
pub fn e_map(sys: &PopescuSystem, a: &CMatrix) -> Result<CMatrix> {
    let (d, n) = (sys.d(), sys.n());
    if a.shape() != (d, d) {
        return Err(Error::Shape(format!("e_map needs a {d} x {d} matrix")));
    }
    let mut m = CMatrix::zeros(n * n, n * n);
    for i in 0..d {
        for j in 0..d {
            if a[(i, j)] != ZERO {
                m += kron(&conj(sys.op(j)), sys.op(i)) * a[(i, j)];
            }
        }
    }
    Ok(m)
}

/// `𝔼_A(B)` evaluated directly.
pub fn apply_e(sys: &PopescuSystem, a: &CMatrix, b: &CMatrix) -> CMatrix {
    let d = sys.d();
    let mut out = CMatrix::zeros(b.nrows(), b.ncols());
    for i in 0..d {
        let mut right = CMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..d {
            if a[(i, j)] != ZERO {
                right += sys.op(j).adjoint() * a[(i, j)];
            }
        }
        out += sys.op(i) * b * right;
    }
    out
}

fn fold_observable(sys: &PopescuSystem, obs: &LocalObservable, x: CMatrix) -> CMatrix {
    obs.factors.iter().rev().fold(x, |acc, a| apply_e(sys, a, &acc))
}

/// `ω(obs)`. The start site is irrelevant by translation invariance.
pub fn expectation(
    sys: &PopescuSystem,
    phi: &DensityState,
    obs: &LocalObservable,
    tol: f64,
) -> Result<Complex64> {
    check_invariant(sys, phi, tol)?;
    obs.check(sys.d())?;
    let x = fold_observable(sys, obs, identity(sys.n()));
    Ok(phi.expect(&x))
}

/// `ω(x ⊗ 1^{⊗gap} ⊗ y)`: `y` starts `gap` sites after the last site of `x`.
pub fn two_point(
    sys: &PopescuSystem,
    phi: &DensityState,
    x: &LocalObservable,
    y: &LocalObservable,
    gap: usize,
    tol: f64,
) -> Result<Complex64> {
    check_invariant(sys, phi, tol)?;
    x.check(sys.d())?;
    y.check(sys.d())?;
    let mut z = fold_observable(sys, y, identity(sys.n()));
    for _ in 0..gap {
        z = apply_sigma(sys, &z);
    }
    Ok(phi.expect(&fold_observable(sys, x, z)))
}

/// Defects `d_n = |ω(x ⊗ 1^{⊗n} ⊗ y) - ω(x)ω(y)|` for `n = 0..=n_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringDefect {
    pub defects: Vec<f64>,
    pub decay_tol: f64,
    /// First `n` from which every later defect is below `decay_tol`.
    pub decayed_from: Option<usize>,
}

impl ClusteringDefect {
    /// The last defect is below the tolerance.
    pub fn decays(&self) -> bool {
        self.defects.last().is_some_and(|&v| v <= self.decay_tol)
    }
}

pub fn clustering_defect(
    sys: &PopescuSystem,
    phi: &DensityState,
    x: &LocalObservable,
    y: &LocalObservable,
    n_max: usize,
    decay_tol: f64,
    tol: f64,
) -> Result<ClusteringDefect> {
    check_invariant(sys, phi, tol)?;
    x.check(sys.d())?;
    y.check(sys.d())?;
    let n = sys.n();
    let ey = fold_observable(sys, y, identity(n));
    let wx = phi.expect(&fold_observable(sys, x, identity(n)));
    let wy = phi.expect(&ey);
    let product = wx * wy;
    let mut z = ey;
    let mut defects = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        if step > 0 {
            z = apply_sigma(sys, &z);
        }
        let v = phi.expect(&fold_observable(sys, x, z.clone()));
        defects.push((v - product).norm());
    }
    let decayed_from = match defects.iter().rposition(|&v| v > decay_tol) {
        None => Some(0),
        Some(k) if k + 1 < defects.len() => Some(k + 1),
        Some(_) => None,
    };
    Ok(ClusteringDefect { defects, decay_tol, decayed_from })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmap::{invariant_state, sigma_matrix};
    use crate::numerics::{c, diag, vec_of};
    use crate::popescu::named::*;

    fn half() -> DensityState {
        DensityState::new(diag(&[0.5, 0.5]), 1e-12).unwrap()
    }

    #[test]
    fn e_map_of_identity_is_sigma() {
        for sys in [swap(), rank_one(), arveson()] {
            let m = e_map(&sys, &identity(sys.d())).unwrap();
            assert!((m - sigma_matrix(&sys).matrix).norm() < 1e-14);
        }
    }

    #[test]
    fn e_map_of_matrix_unit() {
        let sys = arveson();
        let b = CMatrix::from_fn(3, 3, |i, j| c(i as f64 + 1.0, j as f64 - 1.0));
        let m = e_map(&sys, &unit(4, 4, 2, 1)).unwrap();
        let expected = sys.op(2) * &b * sys.op(1).adjoint();
        assert!((m * vec_of(&b) - vec_of(&expected)).norm() < 1e-14);
        assert!((apply_e(&sys, &unit(4, 4, 2, 1), &b) - expected).norm() < 1e-14);
    }

    #[test]
    fn e_map_swap_example() {
        let sys = swap();
        let x = apply_e(&sys, &unit(2, 2, 0, 0), &identity(2));
        assert!((x - unit(2, 2, 0, 0)).norm() < 1e-15);
        assert!(e_map(&sys, &identity(3)).is_err());
    }

    #[test]
    fn swap_expectations() {
        let sys = swap();
        let e11 = unit(2, 2, 0, 0);
        let e22 = unit(2, 2, 1, 1);
        let o = LocalObservable::new(1, vec![e11.clone(), e11.clone()]).unwrap();
        assert!(expectation(&sys, &half(), &o, 1e-9).unwrap().norm() < 1e-12);
        let o = LocalObservable::new(-7, vec![e11, e22]).unwrap();
        assert!((expectation(&sys, &half(), &o, 1e-9).unwrap() - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn scalar_expectation() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sys = scalar_real(s, s);
        let phi = DensityState::new(identity(1), 1e-12).unwrap();
        let o = LocalObservable::matrix_unit(2, 0, 1);
        assert!((expectation(&sys, &phi, &o, 1e-9).unwrap() - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_invariant_state() {
        let phi = DensityState::new(diag(&[0.25, 0.75]), 1e-12).unwrap();
        let o = LocalObservable::matrix_unit(2, 0, 0);
        assert!(matches!(expectation(&swap(), &phi, &o, 1e-9), Err(Error::NotInvariant(_))));
    }

    #[test]
    fn swap_two_point_alternates() {
        let sys = swap();
        let x = LocalObservable::matrix_unit(2, 0, 0);
        for gap in 0..8 {
            let v = two_point(&sys, &half(), &x, &x, gap, 1e-9).unwrap();
            // sites 1 and 2 + gap; distance gap + 1
            let expected = if (gap + 1) % 2 == 0 { 0.5 } else { 0.0 };
            assert!((v - c(expected, 0.0)).norm() < 1e-12, "gap {gap}");
        }
    }

    #[test]
    fn identity_right_factor_reduces_to_expectation() {
        let sys = arveson();
        let phi = invariant_state(&sys, 1e-9).unwrap().state;
        let x = LocalObservable::new(0, vec![unit(4, 4, 1, 1), unit(4, 4, 0, 1)]).unwrap();
        let y = LocalObservable::single(identity(4)).unwrap();
        let a = two_point(&sys, &phi, &x, &y, 3, 1e-9).unwrap();
        let b = expectation(&sys, &phi, &x, 1e-9).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn clustering_examples() {
        let x = LocalObservable::matrix_unit(2, 0, 0);
        let cd = clustering_defect(&swap(), &half(), &x, &x, 20, 1e-6, 1e-9).unwrap();
        assert!(cd.defects.iter().all(|&v| (v - 0.25).abs() < 1e-12));
        assert!(!cd.decays());
        assert_eq!(cd.decayed_from, None);

        let sys = scalar_real(0.6, 0.8);
        let phi = DensityState::new(identity(1), 1e-12).unwrap();
        let y = LocalObservable::matrix_unit(2, 1, 0);
        let cd = clustering_defect(&sys, &phi, &x, &y, 10, 1e-6, 1e-9).unwrap();
        assert!(cd.defects.iter().all(|&v| v < 1e-14));
        assert_eq!(cd.decayed_from, Some(0));
    }

    #[test]
    fn rank_one_compressed_clusters() {
        let sys = rank_one().compress(&unit(2, 2, 0, 0), 1e-9).unwrap();
        let phi = DensityState::new(identity(1), 1e-12).unwrap();
        let x = LocalObservable::matrix_unit(2, 0, 0);
        let cd = clustering_defect(&sys, &phi, &x, &x, 10, 1e-6, 1e-9).unwrap();
        assert!(cd.defects.iter().all(|&v| v < 1e-14));
        let v = expectation(&sys, &phi, &x, 1e-9).unwrap();
        assert!((v - c(1.0, 0.0)).norm() < 1e-14);
    }
}

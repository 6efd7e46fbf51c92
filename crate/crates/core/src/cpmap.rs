//! The transfer map `σ(X) = Σ V_i X V_i*`, its predual
//! `σ_*(ρ) = Σ V_i* ρ V_i`, and the spectral and algebraic data derived
//! from them.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{
    c, conj, eig, fro, hermitian_eigen, hermitian_part, identity, kernel, kron,
    orthogonal_remainder, trace_norm, unvec, vec_of, CMatrix, CVector, ONE, ZERO,
};
use crate::popescu::PopescuSystem;
use crate::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperKind {
    /// `σ`, acting on observables; unital.
    Forward,
    /// `σ_*`, acting on density matrices; trace preserving.
    Predual,
}

/// An operator on `n x n` matrices, as an `n² x n²` matrix acting on
/// column-stacked vectors.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub n: usize,
    pub matrix: CMatrix,
    pub kind: SuperKind,
}

impl Superoperator {
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        unvec(&(&self.matrix * vec_of(x)), self.n, self.n)
    }
}

/// `Σ conj(V_i) ⊗ V_i`.
pub fn sigma_matrix(sys: &PopescuSystem) -> Superoperator {
    let n = sys.n();
    let mut m = CMatrix::zeros(n * n, n * n);
    for v in sys.ops() {
        m += kron(&conj(v), v);
    }
    Superoperator { n, matrix: m, kind: SuperKind::Forward }
}

/// `Σ V_i^T ⊗ V_i*`.
pub fn predual_matrix(sys: &PopescuSystem) -> Superoperator {
    let n = sys.n();
    let mut m = CMatrix::zeros(n * n, n * n);
    for v in sys.ops() {
        m += kron(&v.transpose(), &v.adjoint());
    }
    Superoperator { n, matrix: m, kind: SuperKind::Predual }
}

/// `σ(X)` evaluated directly.
pub fn apply_sigma(sys: &PopescuSystem, x: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(x.nrows(), x.ncols());
    for v in sys.ops() {
        out += v * x * v.adjoint();
    }
    out
}

/// `σ_*(ρ)` evaluated directly.
pub fn apply_predual(sys: &PopescuSystem, rho: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for v in sys.ops() {
        out += v.adjoint() * rho * v;
    }
    out
}

fn shifted(m: &CMatrix, shift: Complex64) -> CMatrix {
    let mut a = m.clone();
    for k in 0..a.nrows().min(a.ncols()) {
        a[(k, k)] -= shift;
    }
    a
}

/// A linear subspace of `rows x cols` matrices with a basis orthonormal in
/// the trace inner product `<A, B> = tr(A* B)`.
#[derive(Debug, Clone)]
pub struct OperatorSubspace {
    rows: usize,
    cols: usize,
    basis: Vec<CMatrix>,
    columns: CMatrix,
}

impl OperatorSubspace {
    /// Orthonormalizes the given vectorized matrices, dropping dependent ones.
    pub fn from_vectors(rows: usize, cols: usize, vectors: &[CVector], tol: f64) -> Self {
        let mut q: Vec<CVector> = Vec::new();
        for v in vectors {
            if let Some(w) = orthogonal_remainder(&q, v, tol) {
                q.push(w);
            }
        }
        Self::from_orthonormal(rows, cols, q)
    }

    pub fn from_matrices(rows: usize, cols: usize, mats: &[CMatrix], tol: f64) -> Self {
        let v: Vec<CVector> = mats.iter().map(vec_of).collect();
        Self::from_vectors(rows, cols, &v, tol)
    }

    fn from_orthonormal(rows: usize, cols: usize, q: Vec<CVector>) -> Self {
        let mut columns = CMatrix::zeros(rows * cols, q.len());
        for (k, v) in q.iter().enumerate() {
            columns.set_column(k, v);
        }
        let basis = q.iter().map(|v| unvec(v, rows, cols)).collect();
        Self { rows, cols, basis, columns }
    }

    fn from_column_matrix(rows: usize, cols: usize, k: &CMatrix) -> Self {
        let q: Vec<CVector> = k.column_iter().map(|c| c.into_owned()).collect();
        Self::from_orthonormal(rows, cols, q)
    }

    /// All `n x n` matrices, with the matrix-unit basis.
    pub fn full(n: usize) -> Self {
        let q = (0..n * n)
            .map(|k| {
                let mut v = CVector::zeros(n * n);
                v[k] = ONE;
                v
            })
            .collect();
        Self::from_orthonormal(n, n, q)
    }

    /// Scalar multiples of the identity.
    pub fn scalars(n: usize) -> Self {
        let v = vec_of(&identity(n)) / c((n as f64).sqrt(), 0.0);
        Self::from_orthonormal(n, n, vec![v])
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Basis vectors (vectorized) as columns of a `rows*cols x dim` matrix.
    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn coordinates(&self, x: &CMatrix) -> CVector {
        self.columns.adjoint() * vec_of(x)
    }

    pub fn from_coordinates(&self, coords: &CVector) -> CMatrix {
        unvec(&(&self.columns * coords), self.rows, self.cols)
    }

    pub fn project(&self, x: &CMatrix) -> CMatrix {
        self.from_coordinates(&self.coordinates(x))
    }

    /// Frobenius distance from `x` to the subspace.
    pub fn residual(&self, x: &CMatrix) -> f64 {
        fro(&(x - self.project(x)))
    }

    /// `x` lies in the subspace up to `tol * ||x||`.
    pub fn contains(&self, x: &CMatrix, tol: f64) -> bool {
        self.residual(x) <= tol * fro(x).max(f64::MIN_POSITIVE)
    }

    /// Largest distance of a basis element of `self` from `other`.
    pub fn excess_over(&self, other: &OperatorSubspace) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let p = &other.columns * (other.columns.adjoint() * &self.columns);
        (&self.columns - p)
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Same span, tested by mutual projection residuals.
    pub fn same_span(&self, other: &OperatorSubspace, tol: f64) -> bool {
        self.shape() == other.shape()
            && self.dim() == other.dim()
            && self.excess_over(other) <= tol
            && other.excess_over(self) <= tol
    }

    /// Every basis element of `self` lies in `other`.
    pub fn is_subspace_of(&self, other: &OperatorSubspace, tol: f64) -> bool {
        self.shape() == other.shape() && self.excess_over(other) <= tol
    }

    /// Dimension of the intersection: singular values of `Q_1* Q_2` equal to
    /// one within `tol`.
    pub fn intersection_dim(&self, other: &OperatorSubspace, tol: f64) -> usize {
        if self.dim() == 0 || other.dim() == 0 {
            return 0;
        }
        let overlap = self.columns.adjoint() * &other.columns;
        overlap
            .singular_values()
            .iter()
            .filter(|&&s| s >= 1.0 - tol)
            .count()
    }

    /// The subspace is closed under the adjoint.
    pub fn is_star_closed(&self, tol: f64) -> bool {
        self.rows == self.cols && self.basis.iter().all(|b| self.contains(&b.adjoint(), tol))
    }

    /// Re-expresses a `*`-closed subspace in an orthonormal basis of
    /// Hermitian matrices. Returns `self` unchanged when the subspace is not
    /// `*`-closed.
    pub fn with_hermitian_basis(self, tol: f64) -> Self {
        if !self.is_star_closed(tol.max(1e-8)) {
            return self;
        }
        let n = self.rows;
        let to_real = |h: &CMatrix| -> DVector<f64> {
            let v = vec_of(h);
            DVector::from_iterator(2 * n * n, v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)))
        };
        let mut real_basis: Vec<DVector<f64>> = Vec::new();
        for b in &self.basis {
            let scale = fro(b);
            let re_part = hermitian_part(b);
            let im_part = (b - b.adjoint()) * c(0.0, -0.5);
            for h in [re_part, im_part] {
                let mut w = to_real(&h);
                if w.norm() <= 1e-8 * scale {
                    continue;
                }
                for _ in 0..2 {
                    for q in &real_basis {
                        let coeff = q.dot(&w);
                        w.axpy(-coeff, q, 1.0);
                    }
                }
                let nw = w.norm();
                if nw > 1e-8 * scale && real_basis.len() < self.basis.len() {
                    real_basis.push(w / nw);
                }
            }
        }
        if real_basis.len() != self.basis.len() {
            return self;
        }
        let q: Vec<CVector> = real_basis
            .iter()
            .map(|r| {
                let m = n * n;
                CVector::from_fn(m, |k, _| c(r[k], r[m + k]))
            })
            .map(|v| {
                // exact Hermitization of the reconstructed matrix
                vec_of(&hermitian_part(&unvec(&v, n, n)))
            })
            .collect();
        OperatorSubspace::from_vectors(n, n, &q, 1e-8)
    }
}

/// Fixed points of the σ: an orthonormal (Hermitian when possible) basis
/// of `ker(σ - 1)`.
pub fn fixed_points(sys: &PopescuSystem, tol: f64) -> Result<OperatorSubspace> {
    let n = sys.n();
    let m = shifted(&sigma_matrix(sys).matrix, ONE);
    let k = kernel(&m, Some(tol))?;
    Ok(OperatorSubspace::from_column_matrix(n, n, &k).with_hermitian_basis(tol))
}

/// True iff `1` lies in the span and all pairwise products of basis
/// elements stay in it.
pub fn is_algebra(sub: &OperatorSubspace, tol: f64) -> bool {
    let (rows, cols) = sub.shape();
    if rows != cols || sub.dim() == 0 {
        return false;
    }
    if sub.dim() == rows * rows {
        return true;
    }
    if !sub.contains(&identity(rows), tol) {
        return false;
    }
    let b = sub.basis();
    for x in b {
        for y in b {
            let p = x * y;
            if fro(&p) > tol && !sub.contains(&p, tol) {
                return false;
            }
        }
    }
    true
}

/// `{X : XA = AX and XA* = A*X for every generator A}`.
pub fn commutant(generators: &[CMatrix], tol: f64) -> Result<OperatorSubspace> {
    let n = generators
        .first()
        .map(|g| g.nrows())
        .ok_or_else(|| Error::Shape("commutant needs at least one generator".into()))?;
    for g in generators {
        if g.shape() != (n, n) {
            return Err(Error::Shape("generators must share one square shape".into()));
        }
    }
    let id = identity(n);
    let blocks = 2 * generators.len();
    let mut stacked = CMatrix::zeros(blocks * n * n, n * n);
    for (k, g) in generators.iter().enumerate() {
        for (j, a) in [g.clone(), g.adjoint()].iter().enumerate() {
            let block = kron(&id, a) - kron(&a.transpose(), &id);
            stacked
                .view_mut(((2 * k + j) * n * n, 0), (n * n, n * n))
                .copy_from(&block);
        }
    }
    let k = kernel(&stacked, Some(tol))?;
    Ok(OperatorSubspace::from_column_matrix(n, n, &k).with_hermitian_basis(tol))
}

/// The unital `*`-algebra generated by the given matrices: the span of
/// all words in the generators and their adjoints, grown breadth-first by
/// left multiplication until no new direction appears.
pub fn generated_algebra(generators: &[CMatrix], tol: f64) -> Result<OperatorSubspace> {
    let n = generators
        .first()
        .map(|g| g.nrows())
        .ok_or_else(|| Error::Shape("generated_algebra needs at least one generator".into()))?;
    for g in generators {
        if g.shape() != (n, n) {
            return Err(Error::Shape("generators must share one square shape".into()));
        }
    }
    let mut letters: Vec<CMatrix> = Vec::with_capacity(2 * generators.len());
    for g in generators {
        letters.push(g.clone());
        letters.push(g.adjoint());
    }
    let add_tol = tol.max(1e-10);
    let mut basis: Vec<CVector> = vec![vec_of(&identity(n)) / c((n as f64).sqrt(), 0.0)];
    let mut queue = 0usize;
    while queue < basis.len() && basis.len() < n * n {
        let b = unvec(&basis[queue], n, n);
        queue += 1;
        for a in &letters {
            let p = vec_of(&(a * &b));
            if let Some(w) = orthogonal_remainder(&basis, &p, add_tol) {
                basis.push(w);
                if basis.len() == n * n {
                    break;
                }
            }
        }
    }
    let sub = if basis.len() == n * n {
        OperatorSubspace::full(n)
    } else {
        OperatorSubspace::from_orthonormal(n, n, basis).with_hermitian_basis(tol)
    };
    Ok(sub)
}

/// A density matrix with its support projection.
#[derive(Debug, Clone)]
pub struct DensityState {
    pub rho: CMatrix,
    pub support: CMatrix,
    pub faithful: bool,
    pub min_eigenvalue: f64,
    pub support_rank: usize,
}

impl DensityState {
    /// Checks Hermiticity, positivity (down to `-tol`) and unit trace
    /// (within `tol`), then computes the support as the spectral projection
    /// onto eigenvalues above `tol`.
    pub fn new(rho: CMatrix, tol: f64) -> Result<Self> {
        let n = rho.nrows();
        if rho.ncols() != n || n == 0 {
            return Err(Error::Shape("density matrix must be square and nonempty".into()));
        }
        let defect = crate::numerics::hermiticity_defect(&rho);
        if defect > tol.max(1e-12) {
            return Err(Error::NotHermitian(defect));
        }
        let rho = hermitian_part(&rho);
        let tr = rho.trace();
        if (tr - ONE).norm() > tol.max(1e-12) {
            return Err(Error::Shape(format!("density matrix has trace {tr}, expected 1")));
        }
        let (vals, vecs) = hermitian_eigen(&rho)?;
        let min_eigenvalue = vals[0];
        if min_eigenvalue < -tol {
            return Err(Error::NotPsd(min_eigenvalue));
        }
        let mut support = CMatrix::zeros(n, n);
        let mut rank = 0;
        for (k, &lam) in vals.iter().enumerate() {
            if lam > tol {
                let u = vecs.column(k);
                support += u * u.adjoint();
                rank += 1;
            }
        }
        Ok(Self {
            rho,
            support: hermitian_part(&support),
            faithful: min_eigenvalue > tol,
            min_eigenvalue,
            support_rank: rank,
        })
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    /// `φ(X) = tr(ρ X)`.
    pub fn expect(&self, x: &CMatrix) -> Complex64 {
        (&self.rho * x).trace()
    }

    /// `ρ^{1/2}`.
    pub fn sqrt(&self) -> Result<CMatrix> {
        crate::numerics::herm_sqrt(&self.rho, 1e-10)
    }
}

/// Result of [`invariant_state`].
#[derive(Debug, Clone)]
pub struct InvariantState {
    pub state: DensityState,
    /// The eigenvalue-1 eigenspace of the predual is one-dimensional.
    pub unique: bool,
    /// Dimension of that eigenspace.
    pub eigenspace_dim: usize,
    /// `||σ_*(ρ) - ρ||_F` for the returned state.
    pub residual: f64,
    pub iterations: usize,
}

/// Convergence threshold of the Cesàro loop.
pub const CESARO_THRESHOLD: f64 = 1e-12;

/// Invariant state from the canonical start `ρ_0 = 1/n`.
pub fn invariant_state(sys: &PopescuSystem, tol: f64) -> Result<InvariantState> {
    let n = sys.n();
    invariant_state_from(sys, &(identity(n) / c(n as f64, 0.0)), tol)
}

/// Cesàro means of `σ_*^k(ρ_0)`, followed by an oblique Rayleigh–Ritz
/// step onto the eigenvalue-1 eigenspace of the predual: with `R` spanning
/// `ker(σ_* - 1)` and `L` spanning `ker(σ - 1)` (the left eigenvectors of
/// `σ_*`), the Cesàro limit is `R (L*R)^{-1} L* vec(ρ)`.
pub fn invariant_state_from(sys: &PopescuSystem, rho0: &CMatrix, tol: f64) -> Result<InvariantState> {
    let n = sys.n();
    let cap = 100 * n * n;
    let mut cur = rho0.clone();
    let mut sum = CMatrix::zeros(n, n);
    let mut iterations = 0;
    let mut limit = None;
    while iterations < cap {
        let next = apply_predual(sys, &cur);
        sum += &cur;
        iterations += 1;
        if fro(&(&next - &cur)) <= CESARO_THRESHOLD {
            limit = Some(next);
            break;
        }
        cur = next;
        if iterations % 16 == 0 {
            let avg = &sum / c(iterations as f64, 0.0);
            if fro(&(apply_predual(sys, &avg) - &avg)) <= CESARO_THRESHOLD {
                limit = Some(avg);
                break;
            }
        }
    }
    let approx = limit.unwrap_or_else(|| &sum / c(iterations as f64, 0.0));

    let right = kernel(&shifted(&predual_matrix(sys).matrix, ONE), Some(tol))?;
    let left = kernel(&shifted(&sigma_matrix(sys).matrix, ONE), Some(tol))?;
    if right.ncols() != left.ncols() {
        return Err(Error::NumericalHealth(format!(
            "eigenvalue-1 multiplicities of σ ({}) and σ_* ({}) differ",
            left.ncols(),
            right.ncols()
        )));
    }
    if right.ncols() == 0 {
        return Err(Error::NumericalHealth("predual has no fixed point".into()));
    }
    let gram = left.adjoint() * &right;
    let refined = match gram.clone().lu().solve(&(left.adjoint() * vec_of(&approx))) {
        Some(coeffs) => unvec(&(&right * coeffs), n, n),
        None => approx.clone(),
    };

    let h = hermitian_part(&refined);
    let (vals, vecs) = hermitian_eigen(&h)?;
    if vals[0] < -tol.max(1e-10) * vals[n - 1].abs().max(1.0) {
        return Err(Error::NumericalHealth(format!(
            "refined invariant state has eigenvalue {:e}",
            vals[0]
        )));
    }
    let mut rho = CMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam > tol {
            let u = vecs.column(k);
            rho += (u * u.adjoint()) * c(lam, 0.0);
        }
    }
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::NumericalHealth("invariant state has zero trace".into()));
    }
    let rho = hermitian_part(&(rho / c(tr, 0.0)));
    let residual = fro(&(apply_predual(sys, &rho) - &rho));
    if residual > 1e3 * tol.max(CESARO_THRESHOLD) {
        return Err(Error::NonConvergence(format!(
            "invariant state residual {residual:e} after {iterations} Cesàro steps"
        )));
    }
    let state = DensityState::new(rho, tol)?;
    Ok(InvariantState {
        state,
        unique: right.ncols() == 1,
        eigenspace_dim: right.ncols(),
        residual,
        iterations,
    })
}

/// Co-invariance conditions for a projection `p`:
/// (1) `σ(p) <= λp` for some `λ >= 0`, (2) `V_i p = p V_i p`, (3) `σ(p) <= p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coinvariance {
    pub cond1: bool,
    pub cond2: bool,
    pub cond3: bool,
}

impl Coinvariance {
    pub fn all(&self) -> bool {
        self.cond1 && self.cond2 && self.cond3
    }
}

pub fn coinvariance_check(sys: &PopescuSystem, p: &CMatrix, tol: f64) -> Result<Coinvariance> {
    let n = sys.n();
    if p.shape() != (n, n) {
        return Err(Error::Shape("projection has the wrong size".into()));
    }
    let defect = fro(&(p - p.adjoint())).max(fro(&(p * p - p)));
    if defect > tol {
        return Err(Error::NotProjection(defect));
    }
    let sp = apply_sigma(sys, p);
    let q = identity(n) - p;
    // σ(p) >= 0, so σ(p) <= λp for some λ iff its compression to 1-p vanishes.
    let cond1 = fro(&(&q * &sp * &q)) <= tol;
    let cond2 = sys.ops().iter().all(|v| fro(&(v * p - p * v * p)) <= tol);
    let (vals, _) = hermitian_eigen(&(p - &sp))?;
    let cond3 = vals[0] >= -tol;
    let out = Coinvariance { cond1, cond2, cond3 };
    if !(cond1 == cond2 && cond2 == cond3) {
        return Err(Error::NumericalHealth(format!(
            "co-invariance conditions disagree: {out:?}"
        )));
    }
    Ok(out)
}

/// A unimodular eigenvalue of the transfer map.
#[derive(Debug, Clone)]
pub struct PeripheralEigenvalue {
    pub value: Complex64,
    pub algebraic: usize,
    pub geometric: usize,
    /// Geometric and algebraic multiplicities agree.
    pub semisimple: bool,
    /// Basis of the eigenspace, each scaled to unit trace norm.
    pub eigen_operators: Vec<CMatrix>,
}

fn phase_key(z: Complex64, tol: f64) -> f64 {
    let a = z.arg();
    if a < -tol {
        a + 2.0 * std::f64::consts::PI
    } else {
        a.max(0.0)
    }
}

/// Peripheral eigenvalues of a superoperator given as a square matrix;
/// `to_operator` turns an eigenvector into the matrix it represents.
pub fn peripheral_of_matrix(
    m: &CMatrix,
    to_operator: &dyn Fn(&CVector) -> CMatrix,
    tol: &Tolerances,
) -> Result<Vec<PeripheralEigenvalue>> {
    let e = eig(m)?;
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for &z in &e.eigenvalues {
        if (1.0 - z.norm()).abs() > tol.peripheral {
            continue;
        }
        match clusters.iter_mut().find(|cl| (cl[0] - z).norm() <= tol.spectral_set) {
            Some(cl) => cl.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let mut out = Vec::with_capacity(clusters.len());
    for cl in clusters {
        let mean = cl.iter().sum::<Complex64>() / c(cl.len() as f64, 0.0);
        let k = kernel(&shifted(m, mean), Some(tol.kernel))?;
        let eigen_operators: Vec<CMatrix> = k
            .column_iter()
            .map(|col| {
                let x = to_operator(&col.into_owned());
                let tn = trace_norm(&x);
                if tn > 0.0 {
                    x / c(tn, 0.0)
                } else {
                    x
                }
            })
            .collect();
        out.push(PeripheralEigenvalue {
            value: mean,
            algebraic: cl.len(),
            geometric: eigen_operators.len(),
            semisimple: eigen_operators.len() == cl.len(),
            eigen_operators,
        });
    }
    out.sort_by(|a, b| phase_key(a.value, tol.spectral_set).total_cmp(&phase_key(b.value, tol.spectral_set)));
    Ok(out)
}

/// Eigenvalues of `σ` on the unit circle, with multiplicities and
/// eigen-operators.
pub fn peripheral_spectrum(sys: &PopescuSystem, tol: &Tolerances) -> Result<Vec<PeripheralEigenvalue>> {
    let n = sys.n();
    let m = sigma_matrix(sys).matrix;
    peripheral_of_matrix(&m, &|v| unvec(v, n, n), tol)
}

/// Peripheral eigenvalues of `σ` restricted to an invariant subspace.
pub fn peripheral_on_subspace(
    sys: &PopescuSystem,
    sub: &OperatorSubspace,
    tol: &Tolerances,
) -> Result<Vec<PeripheralEigenvalue>> {
    let n = sys.n();
    if sub.dim() == n * n {
        return peripheral_spectrum(sys, tol);
    }
    let q = sub.columns();
    let restricted = q.adjoint() * sigma_matrix(sys).matrix * q;
    peripheral_of_matrix(&restricted, &|coords| sub.from_coordinates(coords), tol)
}

pub fn peripheral_values(p: &[PeripheralEigenvalue]) -> Vec<Complex64> {
    p.iter().map(|e| e.value).collect()
}

/// The unitary eigen-operator `U` with `σ(U) = conj(t) U`, and the
/// covariance residual `max_i ||U V_i U* - t V_i||`.
#[derive(Debug, Clone)]
pub struct EigenUnitary {
    pub unitary: CMatrix,
    pub unitarity_residual: f64,
    pub covariance_residual: f64,
}

pub fn peripheral_eigenunitary(
    sys: &PopescuSystem,
    state: &DensityState,
    t: Complex64,
    tol: f64,
) -> Result<EigenUnitary> {
    let n = sys.n();
    if !state.faithful {
        return Err(Error::NotFaithful(state.min_eigenvalue));
    }
    let m = shifted(&sigma_matrix(sys).matrix, t.conj());
    let k = kernel(&m, Some(tol.max(1e-12)))?;
    if k.ncols() == 0 {
        return Err(Error::Hypothesis(format!("{} is not an eigenvalue of σ", t.conj())));
    }
    let mut u = unvec(&k.column(0).into_owned(), n, n);
    let scale = ((u.adjoint() * &u).trace().re / n as f64).sqrt();
    if scale <= 0.0 {
        return Err(Error::NumericalHealth("zero eigen-operator".into()));
    }
    u /= c(scale, 0.0);
    // Fix the phase: the first entry of maximal modulus becomes real positive.
    let mut pivot = ZERO;
    let mut best = 0.0;
    for j in 0..n {
        for i in 0..n {
            let z = u[(i, j)];
            if z.norm() > best + 1e-12 {
                best = z.norm();
                pivot = z;
            }
        }
    }
    if best > 0.0 {
        u *= pivot.conj() / c(best, 0.0);
    }
    let unitarity_residual = fro(&(u.adjoint() * &u - identity(n)));
    if unitarity_residual > tol {
        return Err(Error::Hypothesis(format!(
            "eigen-operator for {t} is not unitary after rescaling (residual {unitarity_residual:e})"
        )));
    }
    let covariance_residual = sys
        .ops()
        .iter()
        .map(|v| fro(&(&u * v * u.adjoint() - v * t)))
        .fold(0.0, f64::max);
    if covariance_residual > tol {
        return Err(Error::NumericalHealth(format!(
            "U V_i U* = t V_i fails (residual {covariance_residual:e})"
        )));
    }
    Ok(EigenUnitary { unitary: u, unitarity_residual, covariance_residual })
}

/// The finite subgroup of the circle formed by peripheral eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeGroup {
    pub k: usize,
    /// Each value as a reduced fraction `p/q` of a full turn.
    pub phases: Vec<(u64, u64)>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Best rational approximation of `x ∈ [0, 1)` with denominator at most
/// `max_den`, from continued-fraction convergents and semiconvergents.
pub fn best_rational(x: f64, max_den: u64) -> (u64, u64) {
    let max_den = max_den.max(1);
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut y = x;
    for _ in 0..64 {
        let a = y.floor();
        if !a.is_finite() || a > 1e15 {
            break;
        }
        let a = a as u64;
        let q2 = q0 + a * q1;
        if q2 > max_den {
            break;
        }
        let p2 = p0 + a * p1;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = y - y.floor();
        if frac < 1e-14 {
            break;
        }
        y = 1.0 / frac;
    }
    let k = (max_den - q0) / q1;
    let (pa, qa) = (p0 + k * p1, q0 + k * q1);
    let da = (x - pa as f64 / qa as f64).abs();
    let db = (x - p1 as f64 / q1 as f64).abs();
    let (p, q) = if da < db { (pa, qa) } else { (p1, q1) };
    let g = gcd(p, q).max(1);
    let (p, q) = (p / g, q / g);
    if p == q {
        (0, 1)
    } else {
        (p, q)
    }
}

/// Snaps each phase to a rational multiple of a full turn with denominator
/// at most `max_den`, verifies `|t^q - 1| <= tol` and closure of the snapped
/// set under multiplication, and returns the group order.
pub fn gauge_group_order(values: &[Complex64], max_den: u64, tol: f64) -> Result<GaugeGroup> {
    let mut phases: Vec<(u64, u64)> = Vec::with_capacity(values.len());
    for &t in values {
        if (t.norm() - 1.0).abs() > tol.max(1e-12) * 10.0 {
            return Err(Error::NotFiniteSubgroup(format!("{t} is not unimodular")));
        }
        let mut theta = t.arg() / (2.0 * std::f64::consts::PI);
        if theta < 0.0 {
            theta += 1.0;
        }
        let (p, q) = best_rational(theta, max_den);
        let tq = t.powu(q as u32);
        if (tq - ONE).norm() > tol {
            return Err(Error::NotFiniteSubgroup(format!(
                "{t} is not a root of unity of order <= {max_den} (best guess {p}/{q}, |t^q - 1| = {:e})",
                (tq - ONE).norm()
            )));
        }
        if phases.contains(&(p, q)) {
            return Err(Error::NotFiniteSubgroup(format!("phase {p}/{q} appears twice")));
        }
        phases.push((p, q));
    }
    if !phases.contains(&(0, 1)) {
        return Err(Error::NotFiniteSubgroup("the set does not contain 1".into()));
    }
    for &(p1, q1) in &phases {
        for &(p2, q2) in &phases {
            let den = q1 * q2;
            let num = (p1 * q2 + p2 * q1) % den;
            let g = gcd(num, den).max(1);
            let sum = if num == 0 { (0, 1) } else { (num / g, den / g) };
            if !phases.contains(&sum) {
                return Err(Error::NotFiniteSubgroup(format!(
                    "{p1}/{q1} + {p2}/{q2} = {}/{} is missing",
                    sum.0, sum.1
                )));
            }
        }
    }
    phases.sort_by(|a, b| (a.0 as f64 / a.1 as f64).total_cmp(&(b.0 as f64 / b.1 as f64)));
    Ok(GaugeGroup { k: phases.len(), phases })
}

/// `{X : Σ W_i X V_i* = X}` for `X` of shape `n_W x n_V`.
pub fn mixed_fixed_points(
    sys_w: &PopescuSystem,
    sys_v: &PopescuSystem,
    tol: f64,
) -> Result<OperatorSubspace> {
    if sys_w.d() != sys_v.d() {
        return Err(Error::Shape(format!(
            "generator counts differ: {} vs {}",
            sys_w.d(),
            sys_v.d()
        )));
    }
    let (nw, nv) = (sys_w.n(), sys_v.n());
    let mut m = CMatrix::zeros(nw * nv, nw * nv);
    for (w, v) in sys_w.ops().iter().zip(sys_v.ops()) {
        m += kron(&conj(v), w);
    }
    let k = kernel(&shifted(&m, ONE), Some(tol))?;
    let sub = OperatorSubspace::from_column_matrix(nw, nv, &k);
    Ok(if nw == nv { sub.with_hermitian_basis(tol) } else { sub })
}

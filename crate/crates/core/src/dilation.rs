//! Truncated Cuntz dilation of a Popescu system and the moment functions
//! `C(I, J) = <V_I* Ω, V_J* Ω>` of the associated states on `O_d`.
//!
//! The dilation space is the quotient of `C[words of length <= L] ⊗ K` by
//! the null vectors of the semi-inner product
//! `<I ⊗ ξ, IJ ⊗ η> = <ξ, V_J η>`. Words are ordered by length, then
//! lexicographically; the basis vector `(w, a)` sits at `index(w) * n + a`.

use serde::{Deserialize, Serialize};

use crate::cpmap::{apply_sigma, DensityState};
use crate::error::{Error, Result};
use crate::numerics::{c, fro, hermitian_eigen, hermiticity_defect, op_norm, CMatrix, CVector};
use crate::popescu::{words_up_to, PopescuSystem, Word};

/// Default relative threshold for discarding null directions of the Gram
/// matrix.
pub const DEFAULT_GRAM_TOL: f64 = 1e-10;

/// Position of `word` in the length-then-lex enumeration over `d` letters.
pub fn word_index(d: usize, word: &Word) -> usize {
    let mut offset = 0;
    let mut block = 1;
    for _ in 0..word.len() {
        offset += block;
        block *= d;
    }
    offset + word.letters().iter().fold(0, |acc, &l| acc * d + l)
}

#[derive(Debug, Clone)]
pub struct TruncatedDilation {
    pub level: usize,
    pub d: usize,
    pub n: usize,
    pub words: Vec<Word>,
    pub gram: CMatrix,
    /// `r x N` map taking coefficient vectors to quotient coordinates.
    pub quotient_map: CMatrix,
    /// `N x r` right inverse of `quotient_map`.
    lift: CMatrix,
    /// The dilated isometries `S_i` on the `r`-dimensional quotient.
    pub s: Vec<CMatrix>,
    /// Their adjoints, exact on the whole quotient.
    pub s_adj: Vec<CMatrix>,
    /// Isometric embedding of `K` (the empty-word block), `r x n`.
    pub embedding: CMatrix,
}

impl TruncatedDilation {
    pub fn quotient_dim(&self) -> usize {
        self.quotient_map.nrows()
    }

    /// Quotient coordinates of `Λ(w ⊗ ξ)`.
    pub fn class_of(&self, word: &Word, xi: &CVector) -> CVector {
        let start = word_index(self.d, word) * self.n;
        self.quotient_map.columns(start, self.n) * xi
    }

    /// `S_I* x` for the word `I = (i_1, …, i_m)`.
    pub fn apply_s_word_adjoint(&self, word: &Word, x: &CVector) -> CVector {
        word.letters().iter().fold(x.clone(), |acc, &l| &self.s_adj[l] * acc)
    }

    /// `<Λ(∅ ⊗ Ω), S_I S_J* Λ(∅ ⊗ Ω)>`.
    pub fn vector_moment(&self, omega: &CVector, i: &Word, j: &Word) -> num_complex::Complex64 {
        let w = &self.embedding * omega;
        let a = self.apply_s_word_adjoint(i, &w);
        let b = self.apply_s_word_adjoint(j, &w);
        a.dotc(&b)
    }

    /// The moment table `<S_I* Λ(∅ ⊗ Ω), S_J* Λ(∅ ⊗ Ω)>` for all words of
    /// length at most `max_len`.
    pub fn vector_moments(&self, omega: &CVector, max_len: usize) -> MomentTable {
        let words = words_up_to(self.d, max_len);
        let mut vecs: Vec<CVector> = Vec::with_capacity(words.len());
        vecs.push(&self.embedding * omega);
        for w in words.iter().skip(1) {
            let (last, head) = w.letters().split_last().expect("nonempty word");
            let parent = &vecs[word_index(self.d, &Word::new(head.to_vec()))];
            let v = &self.s_adj[*last] * parent;
            vecs.push(v);
        }
        let m = words.len();
        let values = CMatrix::from_fn(m, m, |a, b| vecs[a].dotc(&vecs[b]));
        MomentTable { d: self.d, max_len, words, values }
    }

    /// Orthonormal basis (columns) of the image of vectors supported on
    /// words of length at most `len`.
    pub fn image_basis(&self, len: usize) -> CMatrix {
        let count = self.words.iter().filter(|w| w.len() <= len).count() * self.n;
        let cols: Vec<CVector> = (0..count).map(|k| self.quotient_map.column(k).into_owned()).collect();
        let q = crate::numerics::orthonormalize(&cols, 1e-10);
        let mut out = CMatrix::zeros(self.quotient_dim(), q.len());
        for (k, v) in q.iter().enumerate() {
            out.set_column(k, v);
        }
        out
    }

    /// Coefficient vector in `C[words] ⊗ K` representing quotient coordinates.
    pub fn lift(&self, x: &CVector) -> CVector {
        &self.lift * x
    }
}

pub fn build(sys: &PopescuSystem, level: usize, tol: f64) -> Result<TruncatedDilation> {
    if level == 0 {
        return Err(Error::Shape("dilation level must be at least 1".into()));
    }
    let (d, n) = (sys.d(), sys.n());
    let words = words_up_to(d, level);
    let nw = words.len();
    let big = nw * n;
    let mut v_cache: Vec<CMatrix> = Vec::with_capacity(nw);
    for w in &words {
        v_cache.push(sys.v_word(w)?);
    }
    let mut gram = CMatrix::zeros(big, big);
    for (a, wa) in words.iter().enumerate() {
        for (b, wb) in words.iter().enumerate() {
            let block = if let Some(k) = wb.strip_prefix(wa) {
                v_cache[word_index(d, &k)].clone()
            } else if let Some(k) = wa.strip_prefix(wb) {
                v_cache[word_index(d, &k)].adjoint()
            } else {
                continue;
            };
            gram.view_mut((a * n, b * n), (n, n)).copy_from(&block);
        }
    }
    let defect = hermiticity_defect(&gram);
    if defect > 1e-12 * fro(&gram) {
        return Err(Error::NumericalHealth(format!("Gram matrix is not Hermitian ({defect:e})")));
    }
    let (vals, vecs) = hermitian_eigen(&gram)?;
    let lam_max = vals[big - 1];
    if vals[0] < -tol * lam_max {
        return Err(Error::NumericalHealth(format!(
            "Gram matrix is indefinite (min eigenvalue {:e})",
            vals[0]
        )));
    }
    let keep: Vec<usize> = (0..big).filter(|&k| vals[k] > tol * lam_max).collect();
    let r = keep.len();
    let mut quotient_map = CMatrix::zeros(r, big);
    let mut lift = CMatrix::zeros(big, r);
    for (row, &k) in keep.iter().enumerate() {
        let u = vecs.column(k);
        let s = vals[k].sqrt();
        quotient_map.set_row(row, &(u.adjoint() * c(s, 0.0)));
        lift.set_column(row, &(u * c(1.0 / s, 0.0)));
    }
    // Coefficient action of S_i*: (i w) ⊗ η ↦ w ⊗ η, ∅ ⊗ η ↦ ∅ ⊗ V_i* η.
    // Columns of quotient_map * A_i are copied block by block.
    let mut s_adj = Vec::with_capacity(d);
    for i in 0..d {
        let mut ma = CMatrix::zeros(r, big);
        ma.columns_mut(0, n).copy_from(&(quotient_map.columns(0, n) * sys.op(i).adjoint()));
        for (col, w) in words.iter().enumerate() {
            if w.letters().first() == Some(&i) {
                let rest = Word::new(w.letters()[1..].to_vec());
                let src = word_index(d, &rest) * n;
                ma.columns_mut(col * n, n).copy_from(&quotient_map.columns(src, n));
            }
        }
        s_adj.push(ma * &lift);
    }
    let s = s_adj.iter().map(|m| m.adjoint()).collect();
    let embedding = quotient_map.columns(0, n).into_owned();
    Ok(TruncatedDilation { level, d, n, words, gram, quotient_map, lift, s, s_adj, embedding })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CuntzResiduals {
    pub isometry_residual: f64,
    pub completeness_residual: f64,
}

/// Residuals of `S_i* S_j = δ_ij` and `Σ S_i S_i* = 1` on the image of
/// vectors of length at most `level - 1`.
pub fn cuntz_residuals(dil: &TruncatedDilation) -> CuntzResiduals {
    let q = dil.image_basis(dil.level - 1);
    let sq: Vec<CMatrix> = dil.s.iter().map(|s| s * &q).collect();
    let mut iso: f64 = 0.0;
    for i in 0..dil.d {
        for (j, t) in sq.iter().enumerate() {
            let mut m = &dil.s_adj[i] * t;
            if i == j {
                m -= &q;
            }
            iso = iso.max(op_norm(&m));
        }
    }
    let mut sum = -q.clone();
    for (s, sa) in dil.s.iter().zip(&dil.s_adj) {
        sum += s * (sa * &q);
    }
    CuntzResiduals { isometry_residual: iso, completeness_residual: op_norm(&sum) }
}

/// `max_i ||E* S_i* E - V_i*||` for the embedding `E` of `K`.
pub fn compression_residual(dil: &TruncatedDilation, sys: &PopescuSystem) -> f64 {
    let e = &dil.embedding;
    sys.ops()
        .iter()
        .zip(&dil.s_adj)
        .map(|(v, sa)| op_norm(&(e.adjoint() * sa * e - v.adjoint())))
        .fold(0.0, f64::max)
}

/// Where the moments come from.
#[derive(Debug, Clone)]
pub enum MomentSource<'a> {
    /// `C(I, J) = <V_I* Ω, V_J* Ω>` for a unit vector `Ω`.
    Vector(&'a CVector),
    /// `C(I, J) = tr(ρ V_I V_J*)`.
    State(&'a DensityState),
}

/// `C(I, J)` for all words with `|I|, |J| <= max_len`, indexed by
/// [`word_index`].
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub d: usize,
    pub max_len: usize,
    pub words: Vec<Word>,
    pub values: CMatrix,
}

impl MomentTable {
    pub fn get(&self, i: &Word, j: &Word) -> num_complex::Complex64 {
        self.values[(word_index(self.d, i), word_index(self.d, j))]
    }
}

pub fn moments(sys: &PopescuSystem, source: MomentSource<'_>, max_len: usize) -> Result<MomentTable> {
    let (d, n) = (sys.d(), sys.n());
    let words = words_up_to(d, max_len);
    let mut vw = Vec::with_capacity(words.len());
    for w in &words {
        vw.push(sys.v_word(w)?);
    }
    let m = words.len();
    let values = match source {
        MomentSource::Vector(omega) => {
            if omega.len() != n {
                return Err(Error::Shape(format!("Ω must have length {n}")));
            }
            if (omega.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::Hypothesis(format!("Ω has norm {}", omega.norm())));
            }
            let u: Vec<CVector> = vw.iter().map(|v| v.adjoint() * omega).collect();
            CMatrix::from_fn(m, m, |a, b| u[a].dotc(&u[b]))
        }
        MomentSource::State(phi) => {
            if phi.n() != n {
                return Err(Error::Shape("state and system dimensions differ".into()));
            }
            let left: Vec<CMatrix> = vw.iter().map(|v| &phi.rho * v).collect();
            CMatrix::from_fn(m, m, |a, b| (&left[a] * vw[b].adjoint()).trace())
        }
    };
    Ok(MomentTable { d, max_len, words, values })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentChecks {
    pub psd_min_eig: f64,
    pub recursion_residual: f64,
}

/// Smallest eigenvalue of the moment Gram and the largest violation of
/// `Σ_i C(Ii, Ji) = C(I, J)` over `|I|, |J| < max_len`.
pub fn moment_checks(table: &MomentTable) -> Result<MomentChecks> {
    let (vals, _) = hermitian_eigen(&table.values)?;
    let herm = hermiticity_defect(&table.values);
    let d = table.d;
    let mut rec: f64 = herm;
    let short: Vec<&Word> = table.words.iter().filter(|w| w.len() < table.max_len).collect();
    for i in &short {
        for j in &short {
            let mut s = num_complex::Complex64::new(0.0, 0.0);
            for l in 0..d {
                s += table.get(&i.push(l), &j.push(l));
            }
            rec = rec.max((s - table.get(i, j)).norm());
        }
    }
    Ok(MomentChecks { psd_min_eig: vals[0], recursion_residual: rec })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DominationCheck {
    pub psd: bool,
    pub dominated: bool,
    pub psd_min_eig: f64,
    pub dominated_min_eig: f64,
}

/// Positivity of `(I, J) ↦ <V_I* Ω, D V_J* Ω>` and of its difference from
/// the moment Gram, for a `σ`-fixed Hermitian `D`.
pub fn moment_psd_with_d(
    sys: &PopescuSystem,
    omega: &CVector,
    dmat: &CMatrix,
    max_len: usize,
    tol: f64,
) -> Result<DominationCheck> {
    let n = sys.n();
    if dmat.shape() != (n, n) || omega.len() != n {
        return Err(Error::Shape("D and Ω must match the system dimension".into()));
    }
    let herm = hermiticity_defect(dmat);
    if herm > tol {
        return Err(Error::NotHermitian(herm));
    }
    let r = fro(&(apply_sigma(sys, dmat) - dmat));
    if r > tol {
        return Err(Error::Hypothesis(format!("D is not σ-fixed (residual {r:e})")));
    }
    let words = words_up_to(sys.d(), max_len);
    let mut u = Vec::with_capacity(words.len());
    for w in &words {
        u.push(sys.v_word(w)?.adjoint() * omega);
    }
    let m = words.len();
    let g = CMatrix::from_fn(m, m, |a, b| u[a].dotc(&u[b]));
    let du: Vec<CVector> = u.iter().map(|x| dmat * x).collect();
    let gd = CMatrix::from_fn(m, m, |a, b| u[a].dotc(&du[b]));
    let psd_min_eig = hermitian_eigen(&gd)?.0[0];
    let dominated_min_eig = hermitian_eigen(&(g - &gd))?.0[0];
    Ok(DominationCheck {
        psd: psd_min_eig >= -tol,
        dominated: dominated_min_eig >= -tol,
        psd_min_eig,
        dominated_min_eig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{diag, identity, unit, ONE};
    use crate::popescu::named::*;

    fn e1(n: usize) -> CVector {
        let mut v = CVector::zeros(n);
        v[0] = ONE;
        v
    }

    #[test]
    fn word_indices_follow_enumeration() {
        let words = words_up_to(3, 3);
        for (k, w) in words.iter().enumerate() {
            assert_eq!(word_index(3, w), k);
        }
    }

    #[test]
    fn scalar_level_two_quotient() {
        let dil = build(&scalar_real(1.0, 0.0), 2, DEFAULT_GRAM_TOL).unwrap();
        assert_eq!(dil.quotient_dim(), 4);
        // ∅, (0), (0,0) are one class
        let one = CVector::from_element(1, ONE);
        let a = dil.class_of(&Word::empty(), &one);
        let b = dil.class_of(&Word::new(vec![0]), &one);
        let cc = dil.class_of(&Word::new(vec![0, 0]), &one);
        assert!((&a - &b).norm() < 1e-12 && (&a - &cc).norm() < 1e-12);
        let others = [vec![1], vec![0, 1], vec![1, 1]];
        for w in others {
            assert!((dil.class_of(&Word::new(w), &one).norm() - 1.0).abs() < 1e-12);
        }
        let x = dil.class_of(&Word::new(vec![1, 0]), &one);
        assert!((x - dil.class_of(&Word::new(vec![1]), &one)).norm() < 1e-12);
    }

    #[test]
    fn level_one_dimension_bound() {
        for sys in [arveson(), swap(), rank_one()] {
            let dil = build(&sys, 1, DEFAULT_GRAM_TOL).unwrap();
            assert!(dil.quotient_dim() <= (1 + sys.d()) * sys.n());
            let r = cuntz_residuals(&dil);
            assert!(r.isometry_residual < 1e-12 && r.completeness_residual < 1e-12);
        }
    }

    #[test]
    fn exact_below_the_boundary() {
        let r = cuntz_residuals(&build(&scalar_real(1.0, 0.0), 3, DEFAULT_GRAM_TOL).unwrap());
        assert!(r.isometry_residual <= 1e-12 && r.completeness_residual <= 1e-12);
        let sys = swap();
        let dil = build(&sys, 3, DEFAULT_GRAM_TOL).unwrap();
        let r = cuntz_residuals(&dil);
        assert!(r.isometry_residual <= 1e-12 && r.completeness_residual <= 1e-12);
        assert!(compression_residual(&dil, &sys) < 1e-12);
    }

    #[test]
    fn embedding_is_isometric() {
        let dil = build(&arveson(), 2, DEFAULT_GRAM_TOL).unwrap();
        assert!((dil.embedding.adjoint() * &dil.embedding - identity(3)).norm() < 1e-12);
    }

    #[test]
    fn rank_one_moments() {
        let sys = rank_one();
        let phi = DensityState::new(unit(2, 2, 0, 0), 1e-12).unwrap();
        let t = moments(&sys, MomentSource::State(&phi), 2).unwrap();
        let (w0, w1) = (Word::new(vec![0]), Word::new(vec![1]));
        assert!((t.get(&w0, &w0) - ONE).norm() < 1e-14);
        assert!(t.get(&w1, &w1).norm() < 1e-14);
        assert!((t.get(&Word::empty(), &Word::empty()) - ONE).norm() < 1e-14);
    }

    #[test]
    fn scalar_vector_moments() {
        let (a, b) = (c(0.6, 0.0), c(0.0, 0.8));
        let sys = scalar(a, b).unwrap();
        let t = moments(&sys, MomentSource::Vector(&e1(1)), 1).unwrap();
        let v = t.get(&Word::new(vec![0]), &Word::new(vec![1]));
        assert!((v - a * b.conj()).norm() < 1e-14);
    }

    #[test]
    fn moment_checks_detect_corruption() {
        let sys = swap();
        let phi = DensityState::new(diag(&[0.5, 0.5]), 1e-12).unwrap();
        let mut t = moments(&sys, MomentSource::State(&phi), 3).unwrap();
        let ch = moment_checks(&t).unwrap();
        assert!(ch.recursion_residual <= 1e-12);
        assert!(ch.psd_min_eig >= -1e-10);
        t.values[(1, 1)] += c(0.1, 0.0);
        assert!(moment_checks(&t).unwrap().recursion_residual >= 0.05);
    }

    #[test]
    fn arveson_domination() {
        let sys = arveson();
        let r = moment_psd_with_d(&sys, &e1(3), &diag(&[1.0, 0.0, 0.5]), 3, 1e-9).unwrap();
        assert!(r.psd && r.dominated);
        let r = moment_psd_with_d(&sys, &e1(3), &identity(3), 3, 1e-9).unwrap();
        assert!(r.psd && r.dominated);
        let r = moment_psd_with_d(&sys, &e1(3), &(-identity(3)), 3, 1e-9).unwrap();
        assert!(!r.psd);
        assert!(moment_psd_with_d(&sys, &e1(3), &diag(&[1.0, 0.0, 0.0]), 3, 1e-9).is_err());
    }
}

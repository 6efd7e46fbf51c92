//! Popescu systems: `d` operators `V_0, …, V_{d-1}` on `C^n` with
//! `Σ V_i V_i* = 1`, and words over the alphabet `{0, …, d-1}`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c, fro, identity, op_norm, CMatrix};

/// Default tolerance on the defining relation.
pub const TOL_VALIDATE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PopescuSystem {
    ops: Vec<CMatrix>,
}

/// `||Σ V_i V_i* − 1||` (operator norm).
pub fn relation_residual(ops: &[CMatrix]) -> Result<f64> {
    let n = check_shapes(ops)?;
    let mut sum = CMatrix::zeros(n, n);
    for v in ops {
        sum += v * v.adjoint();
    }
    Ok(op_norm(&(sum - identity(n))))
}

fn check_shapes(ops: &[CMatrix]) -> Result<usize> {
    if ops.len() < 2 {
        return Err(Error::Shape(format!("need d >= 2 operators, got {}", ops.len())));
    }
    let n = ops[0].nrows();
    if n == 0 {
        return Err(Error::Shape("operators must be at least 1x1".into()));
    }
    for (i, v) in ops.iter().enumerate() {
        if v.nrows() != n || v.ncols() != n {
            return Err(Error::Shape(format!(
                "operator {i} is {}x{}, expected {n}x{n}",
                v.nrows(),
                v.ncols()
            )));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Shape(format!("operator {i} has non-finite entries")));
        }
    }
    Ok(n)
}

impl PopescuSystem {
    /// Builds a system, rejecting it when the defining relation fails by
    /// more than `tol`.
    pub fn new(ops: Vec<CMatrix>, tol: f64) -> Result<Self> {
        let residual = relation_residual(&ops)?;
        if residual > tol {
            return Err(Error::Relation { residual, tol });
        }
        Ok(Self { ops })
    }

    /// The number of generators `d`.
    pub fn d(&self) -> usize {
        self.ops.len()
    }

    /// The dimension `n` of the underlying space.
    pub fn n(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn op(&self, i: usize) -> &CMatrix {
        &self.ops[i]
    }

    pub fn validate(&self) -> f64 {
        relation_residual(&self.ops).expect("shapes checked at construction")
    }

    /// `V_I = V_{i_1} ⋯ V_{i_m}`; the empty word gives the identity.
    pub fn v_word(&self, word: &Word) -> Result<CMatrix> {
        let mut out = identity(self.n());
        for &letter in word.letters() {
            if letter >= self.d() {
                return Err(Error::Letter { letter, d: self.d() });
            }
            out *= &self.ops[letter];
        }
        Ok(out)
    }

    /// Replaces `V_i` by `E V_i E` restricted to `range(E)`, in a
    /// deterministic orthonormal basis of the range (see [`range_basis`]).
    pub fn compress(&self, projection: &CMatrix, tol: f64) -> Result<PopescuSystem> {
        let n = self.n();
        if projection.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "projection is {}x{}, expected {n}x{n}",
                projection.nrows(),
                projection.ncols()
            )));
        }
        let e = projection;
        let defect = fro(&(e - e.adjoint())).max(fro(&(e * e - e)));
        if defect > tol {
            return Err(Error::NotProjection(defect));
        }
        let coinv = self
            .ops
            .iter()
            .map(|v| fro(&(e * v - e * v * e)))
            .fold(0.0, f64::max);
        if coinv > tol {
            return Err(Error::CoInvariance(coinv));
        }
        let basis = range_basis(e, tol);
        if basis.ncols() == 0 {
            return Err(Error::Hypothesis("cannot compress to the zero projection".into()));
        }
        let ops: Vec<CMatrix> = self.ops.iter().map(|v| basis.adjoint() * v * &basis).collect();
        PopescuSystem::new(ops, tol)
    }
}

/// Orthonormal basis of the range of a projection, obtained by
/// Gram–Schmidt on its columns taken in order of descending diagonal entry
/// (ties by index). Each basis vector has a real positive entry at its pivot.
pub fn range_basis(e: &CMatrix, tol: f64) -> CMatrix {
    let n = e.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e[(j, j)].re.total_cmp(&e[(i, i)].re).then(i.cmp(&j)));
    let mut basis = Vec::new();
    let thr = tol.sqrt().max(1e-6);
    for j in order {
        let col = e.column(j).into_owned();
        if col.norm() <= thr {
            continue;
        }
        if let Some(q) = crate::numerics::orthogonal_remainder(&basis, &col, thr) {
            basis.push(q);
        }
    }
    let mut out = CMatrix::zeros(n, basis.len());
    for (k, q) in basis.iter().enumerate() {
        out.set_column(k, q);
    }
    out
}

/// Deterministic random system: an `nd x n` complex Gaussian matrix is
/// orthonormalized and cut into `d` blocks `B_i`; the system is `V_i = B_i*`.
pub fn random_system(d: usize, n: usize, seed: u64) -> PopescuSystem {
    assert!(d >= 2 && n >= 1, "random_system needs d >= 2 and n >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(n * d, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        c(re, im)
    });
    let q = g.qr().q();
    let ops = (0..d)
        .map(|i| q.view((i * n, 0), (n, n)).adjoint())
        .collect();
    PopescuSystem::new(ops, 1e-12).expect("orthonormal columns give a valid system")
}

/// A finite word `I = (i_1, …, i_m)` over `{0, …, d-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn push(&self, letter: usize) -> Word {
        let mut v = self.0.clone();
        v.push(letter);
        Word(v)
    }

    pub fn prepend(&self, letter: usize) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(letter);
        v.extend_from_slice(&self.0);
        Word(v)
    }

    /// If `self = prefix · rest`, returns `rest`.
    pub fn strip_prefix(&self, prefix: &Word) -> Option<Word> {
        self.0.strip_prefix(prefix.0.as_slice()).map(|r| Word(r.to_vec()))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        write!(f, "(")?;
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// All words of length `<= max_len`, ordered by length then
/// lexicographically.
pub fn words_up_to(d: usize, max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    let mut layer = vec![Word::empty()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * d);
        for w in &layer {
            for letter in 0..d {
                next.push(w.push(letter));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Worked example systems.
pub mod named {
    use super::*;
    use crate::numerics::unit;

    /// `d = 4, n = 3`: `V_1 = e11, V_2 = e22, V_3 = e31/√2, V_4 = e32/√2`.
    /// Its fixed-point space is two-dimensional and not an algebra.
    pub fn arveson() -> PopescuSystem {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let ops = vec![
            unit(3, 3, 0, 0),
            unit(3, 3, 1, 1),
            unit(3, 3, 2, 0) * c(r, 0.0),
            unit(3, 3, 2, 1) * c(r, 0.0),
        ];
        PopescuSystem::new(ops, 1e-12).unwrap()
    }

    /// `d = 2, n = 2`: `V_i = e_{i1}`.
    pub fn rank_one() -> PopescuSystem {
        PopescuSystem::new(vec![unit(2, 2, 0, 0), unit(2, 2, 1, 0)], 1e-12).unwrap()
    }

    /// `d = 2, n = 2`: `V_1 = e12, V_2 = e21`.
    pub fn swap() -> PopescuSystem {
        PopescuSystem::new(vec![unit(2, 2, 0, 1), unit(2, 2, 1, 0)], 1e-12).unwrap()
    }

    /// `d = 2, n = 1`: `V = (α, β)` with `|α|² + |β|² = 1`.
    pub fn scalar(alpha: num_complex::Complex64, beta: num_complex::Complex64) -> Result<PopescuSystem> {
        let ops = vec![
            CMatrix::from_element(1, 1, alpha),
            CMatrix::from_element(1, 1, beta),
        ];
        PopescuSystem::new(ops, TOL_VALIDATE)
    }

    pub fn scalar_real(alpha: f64, beta: f64) -> PopescuSystem {
        scalar(c(alpha, 0.0), c(beta, 0.0)).unwrap()
    }
}

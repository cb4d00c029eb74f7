//! Dense real-matrix primitives used by the kernel constructions and the
//! converse diagnostics.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::{Error, Result};

/// Row/column dense real matrix. Every public entry point that accepts one
/// rejects NaN and infinite entries.
pub type Matrix = DMatrix<f64>;

/// Default relative tolerance for numerical rank.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Below this eigenvalue separation the vectorized Sylvester system is
/// treated as singular.
pub const EIGEN_COLLISION_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// Absolute threshold, `rel_tol * sigma_max`.
    pub tolerance_used: f64,
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Singular values sorted nonincreasing.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// L2-induced norm.
pub fn operator_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn rank_with_tolerance(m: &Matrix, rel_tol: f64) -> Result<RankReport> {
    if m.is_empty() {
        return Err(Error::ShapeMismatch("rank of an empty matrix".into()));
    }
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::ShapeMismatch(format!("rel_tol must be positive, got {rel_tol}")));
    }
    ensure_finite(m, "rank input")?;
    let singular_values = singular_values(m);
    let tolerance_used = rel_tol * singular_values[0];
    let rank = singular_values.iter().filter(|&&s| s > tolerance_used).count();
    Ok(RankReport { rank, singular_values, tolerance_used })
}

/// Numerical rank at [`DEFAULT_REL_TOL`].
pub fn rank(m: &Matrix) -> Result<usize> {
    rank_with_tolerance(m, DEFAULT_REL_TOL).map(|r| r.rank)
}

/// Inverse via LU, `None` when the matrix is numerically singular.
pub fn try_inverse(m: &Matrix) -> Option<Matrix> {
    if !m.is_square() || m.is_empty() {
        return None;
    }
    let sv = singular_values(m);
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if smax == 0.0 || smin <= 1e-14 * smax {
        return None;
    }
    m.clone().try_inverse()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Matrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Eigenvalues of a square matrix as complex numbers.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(m, "eigenvalue input")?;
    ensure_finite(m, "eigenvalue input")?;
    let n = m.nrows();
    let max_iter = 200 * n.max(1);
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, max_iter) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // The shifted QR iteration can stall on orthogonal-like inputs such as
    // signed permutations; a fixed orthogonal similarity breaks the symmetry.
    for attempt in 1..=4 {
        let seed = Matrix::from_fn(n, n, |i, j| ((attempt * 7 + i * 13 + j * 29) as f64).sin());
        let q = seed.qr().q();
        let rotated = q.transpose() * m * &q;
        if let Some(schur) = Schur::try_new(rotated, f64::EPSILON, max_iter) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::ConditionViolation("eigenvalue iteration did not converge".into()))
}

/// Minimum distance in the complex plane between an eigenvalue of `a` and an
/// eigenvalue of `b`.
pub fn eigen_separation(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "eigen_separation operands {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let ea = eigenvalues(a)?;
    let eb = eigenvalues(b)?;
    let mut best = f64::INFINITY;
    for x in &ea {
        for y in &eb {
            best = best.min((x - y).norm());
        }
    }
    Ok(best)
}

/// `X·a − b·X = c` on square matrices of equal side.
#[derive(Debug, Clone)]
pub struct SylvesterProblem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl SylvesterProblem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        ensure_square(&a, "sylvester a")?;
        if b.shape() != a.shape() || c.shape() != a.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sylvester operands {:?}, {:?}, {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        ensure_finite(&a, "sylvester a")?;
        ensure_finite(&b, "sylvester b")?;
        ensure_finite(&c, "sylvester c")?;
        Ok(Self { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `X·a − b·X − c`.
    pub fn residual(&self, x: &Matrix) -> Matrix {
        x * &self.a - &self.b * x - &self.c
    }
}

/// Solves `X·a − b·X = c` through the column-major vectorization
/// `(aᵀ ⊗ I − I ⊗ b) vec(X) = vec(c)` and a dense LU with two rounds of
/// iterative refinement.
pub fn solve_sylvester(p: &SylvesterProblem) -> Result<Matrix> {
    let n = p.dim();
    let separation = eigen_separation(&p.a, &p.b)?;
    if separation < EIGEN_COLLISION_THRESHOLD {
        return Err(Error::EigenvalueCollision { separation, threshold: EIGEN_COLLISION_THRESHOLD });
    }
    let eye = Matrix::identity(n, n);
    let system = kron(&p.a.transpose(), &eye) - kron(&eye, &p.b);
    let lu = system.lu();
    // Column-major storage makes the flat slice exactly vec(·).
    let rhs = DVector::from_column_slice(p.c.as_slice());
    let mut vec_x = lu
        .solve(&rhs)
        .ok_or(Error::EigenvalueCollision { separation, threshold: EIGEN_COLLISION_THRESHOLD })?;
    for _ in 0..2 {
        let x = Matrix::from_column_slice(n, n, vec_x.as_slice());
        let r = p.residual(&x);
        let r_vec = DVector::from_column_slice(r.as_slice());
        if let Some(dx) = lu.solve(&r_vec) {
            vec_x -= dx;
        }
    }
    let x = Matrix::from_column_slice(n, n, vec_x.as_slice());
    ensure_finite(&x, "sylvester solution")?;
    Ok(x)
}

/// `[v, a·v, a²·v, …, a^{n−1}·v]`.
pub fn krylov_matrix(a: &Matrix, v: &DVector<f64>) -> Result<Matrix> {
    ensure_square(a, "krylov operator")?;
    if a.nrows() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "krylov operator {}x{} with vector of length {}",
            a.nrows(),
            a.ncols(),
            v.len()
        )));
    }
    ensure_finite(a, "krylov operator")?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("krylov vector"));
    }
    let n = v.len();
    let mut k = Matrix::zeros(n, n);
    let mut col = v.clone();
    for j in 0..n {
        k.set_column(j, &col);
        col = a * col;
    }
    Ok(k)
}

/// Controllability of the pair `(a, v)`. Columns are normalized before the
/// rank test so growth of `aᵏ·v` does not masquerade as deficiency.
pub fn krylov_full_rank(a: &Matrix, v: &DVector<f64>) -> Result<bool> {
    let mut k = krylov_matrix(a, v)?;
    for mut col in k.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return Ok(false);
        }
        col /= norm;
    }
    Ok(rank(&k)? == v.len())
}

/// `e_i` of length `n`.
pub fn unit_vector(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// The cyclic shift with a −1 in the bottom-left corner: ones on the
/// superdiagonal, `−1` at `(n−1, 0)`.
pub fn signed_cyclic_shift(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    m[(n - 1, 0)] = -1.0;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_with_tolerance(&Matrix::identity(3, 3), 1e-9).unwrap().rank, 3);
        assert_eq!(rank_with_tolerance(&Matrix::zeros(2, 2), 1e-9).unwrap().rank, 0);
        let r = rank_with_tolerance(&mat(2, 2, &[1.0, 1.0, 1.0, 1.0]), 1e-9).unwrap();
        assert_eq!(r.rank, 1);
        assert!((r.singular_values[0] - 2.0).abs() < 1e-12);
        assert!(r.singular_values[1].abs() < 1e-12);
    }

    #[test]
    fn rank_rejects_non_finite_and_empty() {
        let m = mat(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(rank_with_tolerance(&m, 1e-9), Err(Error::NonFinite(_))));
        assert!(rank_with_tolerance(&Matrix::zeros(0, 0), 1e-9).is_err());
    }

    #[test]
    fn sylvester_scaled_identity() {
        let p = SylvesterProblem::new(
            Matrix::identity(2, 2) * 2.0,
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let x = solve_sylvester(&p).unwrap();
        assert!((x - Matrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn sylvester_cyclic_witness_is_invertible() {
        for n in 2..=6 {
            let pi = signed_cyclic_shift(n);
            let q = unit_vector(n, 0);
            let p = unit_vector(n, n - 1);
            let c = &q * p.transpose();
            let prob = SylvesterProblem::new(pi.clone(), 2.0 * &pi, c.clone()).unwrap();
            let x = solve_sylvester(&prob).unwrap();
            assert!(prob.residual(&x).norm() <= 1e-10 * c.norm().max(1.0));
            assert_eq!(rank(&x).unwrap(), n, "n = {n}");
        }
    }

    #[test]
    fn sylvester_shared_eigenvalue_collides() {
        let p = SylvesterProblem::new(
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
            mat(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert!(matches!(solve_sylvester(&p), Err(Error::EigenvalueCollision { .. })));
    }

    #[test]
    fn sylvester_rejects_mismatched_shapes() {
        let r = SylvesterProblem::new(Matrix::identity(2, 2), Matrix::identity(3, 3), Matrix::identity(2, 2));
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn separation_examples() {
        let i2 = Matrix::identity(2, 2);
        assert!((eigen_separation(&i2, &(2.0 * &i2)).unwrap() - 1.0).abs() < 1e-12);
        assert!(eigen_separation(&i2, &i2).unwrap().abs() < 1e-12);
        let a = Matrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let b = Matrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
        // |1-2|, |1-5|, |3-2|, |3-5| -> 1
        assert!((eigen_separation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separation_sees_complex_pairs() {
        // rotation has eigenvalues ±i; 0 is at distance 1
        let rot = mat(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let zero_ish = Matrix::from_diagonal(&DVector::from_vec(vec![0.0, 5.0]));
        assert!((eigen_separation(&rot, &zero_ish).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn krylov_examples() {
        for n in 1..=6 {
            let pi = signed_cyclic_shift(n);
            assert!(krylov_full_rank(&pi, &unit_vector(n, n - 1)).unwrap(), "n = {n}");
        }
        let i2 = Matrix::identity(2, 2);
        assert!(!krylov_full_rank(&i2, &DVector::from_vec(vec![0.3, -1.7])).unwrap());
        let rot = mat(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(krylov_full_rank(&rot, &DVector::from_vec(vec![1.0, 0.0])).unwrap());
        assert!(!krylov_full_rank(&rot, &DVector::zeros(2)).unwrap());
    }

    #[test]
    fn krylov_dimension_mismatch() {
        let r = krylov_full_rank(&Matrix::identity(3, 3), &DVector::zeros(2));
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = mat(1, 2, &[1.0, 2.0]);
        let b = mat(2, 1, &[3.0, 4.0]);
        let k = kron(&a, &b);
        assert_eq!(k, mat(2, 2, &[3.0, 6.0, 4.0, 8.0]));
    }
}

//! Converse diagnostics: the scalar decomposition of the direct links into
//! the cross links, its matrix counterpart, and rank-based DoF upper bounds.

use serde::Serialize;

use crate::channel::{check_scalar_conditions, ChannelPair, ZERO_TOL};
use crate::linalg::{rank, Matrix, DEFAULT_REL_TOL};
use crate::relaying::{end_to_end, RelayKernel};
use crate::{Error, Result};

/// `G11 = λ1 G12 + λ2 G21` and `G22 = μ1 G12 + μ2 G21` for every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCoefficients {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

pub fn decomposition_coefficients(cp: &ChannelPair) -> Result<DecompositionCoefficients> {
    let cond = check_scalar_conditions(cp)?;
    let d = cond.det_values.cross;
    if d.abs() <= ZERO_TOL {
        return Err(Error::ConditionViolation(format!("cross determinant {d:e} vanishes")));
    }
    let (h1, h2) = (cp.h1(), cp.h2());
    let (s1u, s2u, s1v, s2v) = (h1[(0, 0)], h1[(0, 1)], h1[(1, 0)], h1[(1, 1)]);
    let (ud1, vd1, ud2, vd2) = (h2[(0, 0)], h2[(0, 1)], h2[(1, 0)], h2[(1, 1)]);
    let (det1, det2) = (cond.det_values.det_h1, cond.det_values.det_h2);
    Ok(DecompositionCoefficients {
        lambda1: s1u * s1v * det2 / d,
        lambda2: -ud1 * vd1 * det1 / d,
        mu1: -ud2 * vd2 * det1 / d,
        mu2: s2u * s2v * det2 / d,
    })
}

/// The scalar channel repeated over `l` symbol extensions: every hop block
/// becomes `h · I_l`.
pub fn symbol_extension(cp: &ChannelPair, l: usize) -> Result<ChannelPair> {
    cp.require_scalar_real()?;
    if l == 0 {
        return Err(Error::ShapeMismatch("extension length must be positive".into()));
    }
    let ext = |h: &Matrix| crate::linalg::kron(h, &Matrix::identity(l, l));
    ChannelPair::real(l, ext(cp.h1()), ext(cp.h2()))
}

/// Largest relative Frobenius residual of both identities over `kernels`,
/// each `l × l` on the `l`-fold extension of a scalar channel.
pub fn verify_decomposition(cp: &ChannelPair, kernels: &[RelayKernel], l: usize) -> Result<f64> {
    let coeffs = decomposition_coefficients(cp)?;
    verify_with_coefficients(cp, kernels, l, &coeffs)
}

pub fn verify_with_coefficients(
    cp: &ChannelPair,
    kernels: &[RelayKernel],
    l: usize,
    c: &DecompositionCoefficients,
) -> Result<f64> {
    let ext = symbol_extension(cp, l)?;
    let mut worst: f64 = 0.0;
    for k in kernels {
        let e = end_to_end(&ext, k)?;
        let scale = e.max_block_norm();
        if scale == 0.0 {
            continue;
        }
        let r1 = (&e.g11 - &e.g12 * c.lambda1 - &e.g21 * c.lambda2).norm();
        let r2 = (&e.g22 - &e.g12 * c.mu1 - &e.g21 * c.mu2).norm();
        worst = worst.max(r1.max(r2) / scale);
    }
    Ok(worst)
}

/// `g11 = g12 Λ1 + Λ2 g21 + Λ3 [Γ1; 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoDecomposition {
    pub lambda1: Matrix,
    pub lambda2: Matrix,
    pub lambda3: Matrix,
    /// `(M − 1) × M`.
    pub gamma1: Matrix,
    pub relative_residual: f64,
    pub correction_rank: usize,
}

impl MimoDecomposition {
    /// `[Γ1; 0]`.
    pub fn padded_gamma(&self) -> Matrix {
        let m = self.lambda3.nrows();
        let mut out = Matrix::zeros(m, m);
        out.view_mut((0, 0), (m - 1, m)).copy_from(&self.gamma1);
        out
    }

    pub fn reconstruct(&self, g12: &Matrix, g21: &Matrix) -> Matrix {
        g12 * &self.lambda1 + &self.lambda2 * g21 + &self.lambda3 * self.padded_gamma()
    }
}

fn pinv(m: &Matrix) -> Result<Matrix> {
    let smax = crate::linalg::operator_norm(m);
    m.clone()
        .pseudo_inverse(DEFAULT_REL_TOL * smax)
        .map_err(|e| Error::DecompositionImpossible(format!("pseudo-inverse failed: {e}")))
}

/// Factors a rank-deficient remainder as `Λ3 [Γ1; 0]`.
fn pack_remainder(r: &Matrix, threshold: f64) -> (Matrix, Matrix) {
    let m = r.nrows();
    let svd = r.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut lambda3 = Matrix::zeros(m, m);
    let mut gamma1 = Matrix::zeros(m - 1, m);
    for (row, &i) in order.iter().take(m - 1).enumerate() {
        if svd.singular_values[i] <= threshold {
            break;
        }
        lambda3.set_column(row, &u.column(i));
        gamma1.set_row(row, &(vt.row(i) * svd.singular_values[i]));
    }
    (lambda3, gamma1)
}

/// Splits `g11` into the column space of `g12` (or, when `g12 = 0`, the row
/// space of `g21`) plus a correction of rank at most `M − 1`.
pub fn mimo_decompose(g11: &Matrix, g12: &Matrix, g21: &Matrix) -> Result<MimoDecomposition> {
    let m = g11.nrows();
    for g in [g11, g12, g21] {
        if g.shape() != (m, m) {
            return Err(Error::ShapeMismatch(format!("blocks must all be {m}x{m}")));
        }
        crate::linalg::ensure_finite(g, "decomposition block")?;
    }
    if m < 2 {
        return Err(Error::ShapeMismatch("matrix decomposition needs M ≥ 2".into()));
    }
    let zero = Matrix::zeros(m, m);
    let (lambda1, lambda2, remainder) = if rank(g12)? >= 1 && g12.norm() > 0.0 {
        let l1 = pinv(g12)? * g11;
        let r = g11 - g12 * &l1;
        (l1, zero.clone(), r)
    } else if rank(g21)? >= 1 && g21.norm() > 0.0 {
        let l2 = g11 * pinv(g21)?;
        let r = g11 - &l2 * g21;
        (zero.clone(), l2, r)
    } else if g11.norm() == 0.0 {
        (zero.clone(), zero.clone(), zero.clone())
    } else {
        return Err(Error::DecompositionImpossible("both interference blocks vanish but the direct block does not".into()));
    };
    let scale = g11.norm().max(g12.norm()).max(g21.norm());
    let threshold = DEFAULT_REL_TOL * scale;
    let (lambda3, gamma1) = pack_remainder(&remainder, threshold);
    let mut out = MimoDecomposition { lambda1, lambda2, lambda3, gamma1, relative_residual: 0.0, correction_rank: 0 };
    let correction = &out.lambda3 * out.padded_gamma();
    out.correction_rank = crate::linalg::singular_values(&correction).iter().filter(|&&s| s > threshold).count();
    out.relative_residual = if scale > 0.0 { (g11 - out.reconstruct(g12, g21)).norm() / scale } else { 0.0 };
    Ok(out)
}

/// The same split for `g22`, with the roles of the interference blocks
/// exchanged: `g22 = g21 Λ1 + Λ2 g12 + Λ3 [Γ1; 0]`.
pub fn mimo_decompose_g22(g22: &Matrix, g12: &Matrix, g21: &Matrix) -> Result<MimoDecomposition> {
    mimo_decompose(g22, g21, g12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    /// Scalar channel with `ℓ`-symbol kernels; bounds divided by `ℓ`.
    Scalar,
    Mimo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofBoundReport {
    pub mode: BoundMode,
    /// `ℓ` in scalar mode, `M` otherwise.
    pub dim: usize,
    pub bound_i: f64,
    pub bound_ii: f64,
    pub bound_iii: f64,
    pub min_bound: f64,
    /// `(rank G12, rank G21)` per kernel.
    pub per_block_ranks: Vec<(usize, usize)>,
}

impl DofBoundReport {
    /// Integer numerators of the three bounds before averaging and scaling.
    pub fn rank_sums(&self) -> (usize, usize, usize) {
        let d = self.dim;
        let offset = if self.mode == BoundMode::Mimo { 2 * d - 2 } else { 0 };
        self.per_block_ranks.iter().fold((0, 0, 0), |(a, b, c), &(r12, r21)| {
            (a + offset + r12 + r21, b + 2 * d - r12, c + 2 * d - r21)
        })
    }
}

/// Rank bounds over a kernel sequence. A scalar channel takes `ℓ × ℓ`
/// kernels on its `ℓ`-fold extension; an `M × M` channel takes `M × M`
/// kernels. Bound (i) counts `rank G12 + rank G21`.
pub fn dof_upper_bound(cp: &ChannelPair, kernels: &[RelayKernel]) -> Result<DofBoundReport> {
    cp.require_real()?;
    let first = kernels.first().ok_or_else(|| Error::ShapeMismatch("empty kernel sequence".into()))?;
    let dim = first.dim();
    if kernels.iter().any(|k| k.dim() != dim) {
        return Err(Error::ShapeMismatch("kernels of mixed sizes".into()));
    }
    let (mode, channel) = if cp.m() == 1 {
        (BoundMode::Scalar, symbol_extension(cp, dim)?)
    } else if dim == cp.m() {
        (BoundMode::Mimo, cp.clone())
    } else {
        return Err(Error::ShapeMismatch(format!("{dim}x{dim} kernels on an m = {} channel", cp.m())));
    };
    let per_block_ranks = kernels
        .iter()
        .map(|k| {
            let e = end_to_end(&channel, k)?;
            Ok((block_rank(&e.g12, &e)?, block_rank(&e.g21, &e)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = DofBoundReport {
        mode,
        dim,
        bound_i: 0.0,
        bound_ii: 0.0,
        bound_iii: 0.0,
        min_bound: 0.0,
        per_block_ranks,
    };
    let (a, b, c) = report.rank_sums();
    let denom = kernels.len() as f64 * if mode == BoundMode::Scalar { dim as f64 } else { 1.0 };
    report.bound_i = a as f64 / denom;
    report.bound_ii = b as f64 / denom;
    report.bound_iii = c as f64 / denom;
    report.min_bound = report.bound_i.min(report.bound_ii).min(report.bound_iii);
    Ok(report)
}

/// Rank relative to the largest block of the same kernel, so a nulled block
/// counts as rank zero.
fn block_rank(g: &Matrix, e: &crate::relaying::EndToEndChannel) -> Result<usize> {
    let scale = e.max_block_norm();
    if scale == 0.0 {
        return Ok(0);
    }
    let sv = crate::linalg::singular_values(g);
    Ok(sv.iter().filter(|&&s| s > DEFAULT_REL_TOL * scale).count())
}

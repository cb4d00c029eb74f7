//! Stacked three-phase observation model.
//!
//! Over the three phases each source sends `3M − 1` distinct symbols. Phase 1
//! and phase 2 carry fresh symbols on every antenna. In phase 3 one antenna of
//! each source repeats a symbol that leaked in an earlier phase (the S leak
//! for `s1`, the Z leak for `s2`) and the remaining antennas carry fresh
//! symbols. Destination `d_i` stacks its three received blocks into
//! `y_i = F_own x_own + F_other x_other + z̃_i`.

use crate::channel::ChannelPair;
use crate::linalg::{try_inverse, Matrix};
use crate::relaying::{end_to_end, noise_covariance, RelayKernel};
use crate::{Error, Result};

/// Relative size below which a stacked interference column counts as nulled.
pub const STRUCTURE_TOL: f64 = 1e-8;

/// Which symbol each source antenna carries in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolPlan {
    pub m: usize,
    /// Antenna of `s1` repeating the S-leak symbol in phase 3.
    pub s1_col: usize,
    /// Antenna of `s2` repeating the Z-leak symbol in phase 3.
    pub s2_col: usize,
}

impl SymbolPlan {
    pub fn new(m: usize, s1_col: usize, s2_col: usize) -> Result<Self> {
        if m == 0 || s1_col >= m || s2_col >= m {
            return Err(Error::ShapeMismatch(format!("symbol plan ({s1_col}, {s2_col}) on m = {m}")));
        }
        Ok(Self { m, s1_col, s2_col })
    }

    /// Distinct symbols per source.
    pub fn n_symbols(&self) -> usize {
        3 * self.m - 1
    }

    /// Index of the symbol that leaks from `s1` into `d2` (phase 1, last
    /// antenna).
    pub fn s1_leak_symbol(&self) -> usize {
        self.m - 1
    }

    /// Index of the symbol that leaks from `s2` into `d1` (phase 2, first
    /// antenna).
    pub fn s2_leak_symbol(&self) -> usize {
        self.m
    }

    /// Symbol sent by antenna `antenna` of source `src ∈ {1, 2}` in phase
    /// `phase ∈ {0, 1, 2}`.
    pub fn symbol(&self, src: usize, phase: usize, antenna: usize) -> usize {
        let m = self.m;
        match phase {
            0 => antenna,
            1 => m + antenna,
            _ => {
                let (col, repeat) =
                    if src == 1 { (self.s1_col, self.s1_leak_symbol()) } else { (self.s2_col, self.s2_leak_symbol()) };
                if antenna == col {
                    repeat
                } else {
                    2 * m + antenna - usize::from(antenna > col)
                }
            }
        }
    }

    /// The other user's symbol destination `dst` must resolve jointly.
    pub fn interferer(&self, dst: usize) -> usize {
        if dst == 1 {
            self.s2_leak_symbol()
        } else {
            self.s1_leak_symbol()
        }
    }
}

/// One destination's view of the three phases.
#[derive(Debug, Clone)]
pub struct DestinationModel {
    /// `3M × (3M − 1)` gains of the intended source's symbols.
    pub f_own: Matrix,
    /// `3M × (3M − 1)` gains of the other source's symbols.
    pub f_other: Matrix,
    /// Block-diagonal effective noise covariance, `3M × 3M`.
    pub noise_cov: Matrix,
}

#[derive(Debug, Clone)]
pub struct StackedModel {
    pub plan: SymbolPlan,
    pub dest: [DestinationModel; 2],
}

impl StackedModel {
    pub fn build(cp: &ChannelPair, kernels: &[RelayKernel; 3], plan: SymbolPlan) -> Result<Self> {
        cp.require_real()?;
        let m = cp.m();
        if plan.m != m {
            return Err(Error::ShapeMismatch(format!("plan for m = {} on m = {m}", plan.m)));
        }
        let n = plan.n_symbols();
        let mut f = [[Matrix::zeros(3 * m, n), Matrix::zeros(3 * m, n)], [Matrix::zeros(3 * m, n), Matrix::zeros(3 * m, n)]];
        let mut cov = [Matrix::zeros(3 * m, 3 * m), Matrix::zeros(3 * m, 3 * m)];
        for (phase, k) in kernels.iter().enumerate() {
            let e2e = end_to_end(cp, k)?;
            let sigma = noise_covariance(cp, k)?;
            for dst in 1..=2 {
                for src in 1..=2 {
                    let g = e2e.block(dst, src);
                    for ant in 0..m {
                        let sym = plan.symbol(src, phase, ant);
                        let mut col = f[dst - 1][src - 1].view_mut((phase * m, sym), (m, 1));
                        col += g.column(ant);
                    }
                }
                cov[dst - 1]
                    .view_mut((phase * m, phase * m), (m, m))
                    .copy_from(&sigma.view(((dst - 1) * m, (dst - 1) * m), (m, m)));
            }
        }
        let [[f11, f12], [f21, f22]] = f;
        let [c1, c2] = cov;
        Ok(Self {
            plan,
            dest: [
                DestinationModel { f_own: f11, f_other: f12, noise_cov: c1 },
                DestinationModel { f_own: f22, f_other: f21, noise_cov: c2 },
            ],
        })
    }

    /// Zero-forcing decoder of destination `dst`: the `3M × 3M` matrix
    /// mapping the stacked observation to `[own symbols; interferer]`.
    pub fn decoder(&self, dst: usize) -> Result<Matrix> {
        let d = &self.dest[dst - 1];
        let n = self.plan.n_symbols();
        let t = self.plan.interferer(dst);
        let scale = d.f_own.norm().max(d.f_other.norm()).max(f64::MIN_POSITIVE);
        for j in (0..n).filter(|&j| j != t) {
            let leak = d.f_other.column(j).norm();
            if leak > STRUCTURE_TOL * scale {
                return Err(Error::SingularConstruction(format!(
                    "destination {dst}: interfering symbol {j} not nulled (relative {:.3e})",
                    leak / scale
                )));
            }
        }
        let mut fs = Matrix::zeros(n + 1, n + 1);
        fs.view_mut((0, 0), (n + 1, n)).copy_from(&d.f_own);
        fs.set_column(n, &d.f_other.column(t));
        try_inverse(&fs).ok_or_else(|| Error::SingularConstruction(format!("destination {dst}: stacked system is singular")))
    }

    /// Effective noise variance of each own stream after zero forcing.
    pub fn stream_noise_vars(&self, dst: usize) -> Result<Vec<f64>> {
        let w = self.decoder(dst)?;
        let post = &w * &self.dest[dst - 1].noise_cov * w.transpose();
        Ok((0..self.plan.n_symbols()).map(|s| post[(s, s)]).collect())
    }
}

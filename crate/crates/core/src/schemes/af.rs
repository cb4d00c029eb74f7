//! Fixed amplify-and-forward baseline: one time-invariant scalar per relay,
//! interference treated as noise.

use std::f64::consts::{PI, TAU};

use nalgebra::Complex;
use serde::Serialize;

use crate::channel::ChannelPair;
use crate::{Error, Result};

use super::{check_power, SchemeRateReport};

const MAG_LEVELS: usize = 16;
const PHASE_LEVELS: usize = 64;
const REFINE_ROUNDS: usize = 80;

/// Maximizing relay scalars as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AfPoint {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub sum_rate: f64,
}

struct Gains {
    s1u: Complex<f64>,
    s2u: Complex<f64>,
    s1v: Complex<f64>,
    s2v: Complex<f64>,
    ud1: Complex<f64>,
    vd1: Complex<f64>,
    ud2: Complex<f64>,
    vd2: Complex<f64>,
}

impl Gains {
    fn of(cp: &ChannelPair) -> Result<Self> {
        if cp.m() != 1 {
            return Err(Error::ShapeMismatch(format!("scalar AF on an m = {} channel", cp.m())));
        }
        let c = |re: &crate::linalg::Matrix, im: &crate::linalg::Matrix, i, j| Complex::new(re[(i, j)], im[(i, j)]);
        let (h1, h1i, h2, h2i) = (cp.h1(), cp.h1_im(), cp.h2(), cp.h2_im());
        Ok(Self {
            s1u: c(h1, h1i, 0, 0),
            s2u: c(h1, h1i, 0, 1),
            s1v: c(h1, h1i, 1, 0),
            s2v: c(h1, h1i, 1, 1),
            ud1: c(h2, h2i, 0, 0),
            vd1: c(h2, h2i, 0, 1),
            ud2: c(h2, h2i, 1, 0),
            vd2: c(h2, h2i, 1, 1),
        })
    }

    fn g(&self, alpha: Complex<f64>, beta: Complex<f64>) -> [[Complex<f64>; 2]; 2] {
        [
            [self.s1u * self.ud1 * alpha + self.s1v * self.vd1 * beta, self.s2u * self.ud1 * alpha + self.s2v * self.vd1 * beta],
            [self.s1u * self.ud2 * alpha + self.s1v * self.vd2 * beta, self.s2u * self.ud2 * alpha + self.s2v * self.vd2 * beta],
        ]
    }
}

/// Per-user rates of the complex AF objective at `(α, β)`.
fn complex_rates(gains: &Gains, p: f64, alpha: Complex<f64>, beta: Complex<f64>) -> (f64, f64) {
    let g = gains.g(alpha, beta);
    let relay_noise = alpha.norm_sqr() + beta.norm_sqr() + 1.0;
    let r1 = (1.0 + g[0][0].norm_sqr() * p / (g[0][1].norm_sqr() * p + relay_noise)).log2();
    let r2 = (1.0 + g[1][1].norm_sqr() * p / (g[1][0].norm_sqr() * p + relay_noise)).log2();
    (r1, r2)
}

/// Sum-rate objective of the complex AF baseline.
pub fn af_objective(cp: &ChannelPair, p: f64, alpha: [f64; 2], beta: [f64; 2]) -> Result<f64> {
    let gains = Gains::of(cp)?;
    let (r1, r2) = complex_rates(&gains, p, Complex::new(alpha[0], alpha[1]), Complex::new(beta[0], beta[1]));
    Ok(r1 + r2)
}

/// Maximizes `f(a, b, θ)` over `a, b ∈ [0, a_max] × [0, b_max]` and the given
/// relative phases, then polishes by coordinate search.
fn maximize(
    f: &dyn Fn(f64, f64, f64) -> f64,
    a_max: f64,
    b_max: f64,
    phases: &[f64],
    continuous_phase: bool,
    extra: &[(f64, f64, f64)],
) -> (f64, f64, f64, f64) {
    let mut best = (0.0, 0.0, 0.0, f(0.0, 0.0, 0.0));
    let consider = |a: f64, b: f64, t: f64, best: &mut (f64, f64, f64, f64)| {
        let v = f(a, b, t);
        if v > best.3 {
            *best = (a, b, t, v);
        }
    };
    for i in 0..MAG_LEVELS {
        let a = a_max * i as f64 / (MAG_LEVELS - 1) as f64;
        for j in 0..MAG_LEVELS {
            let b = b_max * j as f64 / (MAG_LEVELS - 1) as f64;
            for &t in phases {
                consider(a, b, t, &mut best);
            }
        }
    }
    for &(a, b, t) in extra {
        consider(a, b, t, &mut best);
    }
    let mut steps = [a_max / (MAG_LEVELS - 1) as f64, b_max / (MAG_LEVELS - 1) as f64, TAU / PHASE_LEVELS as f64];
    for _ in 0..REFINE_ROUNDS {
        let mut improved = false;
        for coord in 0..if continuous_phase { 3 } else { 2 } {
            for sign in [-1.0, 1.0] {
                let mut cand = [best.0, best.1, best.2];
                cand[coord] += sign * steps[coord];
                cand[0] = cand[0].clamp(0.0, a_max);
                cand[1] = cand[1].clamp(0.0, b_max);
                let v = f(cand[0], cand[1], cand[2]);
                if v > best.3 {
                    best = (cand[0], cand[1], cand[2], v);
                    improved = true;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s /= 2.0;
            }
        }
    }
    best
}

/// Candidates that null one cross link, pushed to the magnitude boundary.
fn nulling_candidates(ratios: &[Complex<f64>], a_max: f64, b_max: f64) -> Vec<(f64, f64, f64)> {
    ratios
        .iter()
        .filter(|r| r.norm().is_finite())
        .map(|r| {
            let a = a_max.min(b_max / r.norm().max(f64::MIN_POSITIVE));
            (a, a * r.norm(), r.arg())
        })
        .collect()
}

/// Best complex AF sum rate with `|α|, |β| ≤ √(p / (p + 1))`. The objective
/// only depends on the phase of `β` relative to `α`, so `α` is taken real.
pub fn af_rate(cp: &ChannelPair, p: f64) -> Result<(SchemeRateReport, AfPoint)> {
    check_power(p)?;
    let gains = Gains::of(cp)?;
    let bound = (p / (p + 1.0)).sqrt();
    let f = |a: f64, b: f64, t: f64| {
        let (r1, r2) = complex_rates(&gains, p, Complex::new(a, 0.0), Complex::from_polar(b, t));
        r1 + r2
    };
    let ratios = [
        -(gains.s2u * gains.ud1) / (gains.s2v * gains.vd1),
        -(gains.s1u * gains.ud2) / (gains.s1v * gains.vd2),
    ];
    let phases: Vec<f64> = (0..PHASE_LEVELS).map(|k| TAU * k as f64 / PHASE_LEVELS as f64).collect();
    let (a, b, t, _) = maximize(&f, bound, bound, &phases, true, &nulling_candidates(&ratios, bound, bound));
    let alpha = Complex::new(a, 0.0);
    let beta = Complex::from_polar(b, t);
    let (r1, r2) = complex_rates(&gains, p, alpha, beta);
    let point = AfPoint { alpha: [alpha.re, alpha.im], beta: [beta.re, beta.im], sum_rate: r1 + r2 };
    Ok((SchemeRateReport::new("af", p, r1, r2, Vec::new()), point))
}

/// Fixed AF on a real scalar channel with real relay gains, exact relay-noise
/// terms and the exact per-relay power constraint.
pub fn af_rate_real(cp: &ChannelPair, p: f64) -> Result<(SchemeRateReport, AfPoint)> {
    check_power(p)?;
    cp.require_scalar_real()?;
    let (h1, h2) = (cp.h1(), cp.h2());
    let (s1u, s2u, s1v, s2v) = (h1[(0, 0)], h1[(0, 1)], h1[(1, 0)], h1[(1, 1)]);
    let (ud1, vd1, ud2, vd2) = (h2[(0, 0)], h2[(0, 1)], h2[(1, 0)], h2[(1, 1)]);
    let a_max = (p / (p * (s1u * s1u + s2u * s2u) + 1.0)).sqrt();
    let b_max = (p / (p * (s1v * s1v + s2v * s2v) + 1.0)).sqrt();
    let rates = |alpha: f64, beta: f64| {
        let g11 = s1u * ud1 * alpha + s1v * vd1 * beta;
        let g12 = s2u * ud1 * alpha + s2v * vd1 * beta;
        let g21 = s1u * ud2 * alpha + s1v * vd2 * beta;
        let g22 = s2u * ud2 * alpha + s2v * vd2 * beta;
        let n1 = (ud1 * alpha).powi(2) + (vd1 * beta).powi(2) + 1.0;
        let n2 = (ud2 * alpha).powi(2) + (vd2 * beta).powi(2) + 1.0;
        let r1 = 0.5 * (1.0 + g11 * g11 * p / (g12 * g12 * p + n1)).log2();
        let r2 = 0.5 * (1.0 + g22 * g22 * p / (g21 * g21 * p + n2)).log2();
        (r1, r2)
    };
    let f = |a: f64, b: f64, t: f64| {
        let (r1, r2) = rates(a, b * t.cos());
        r1 + r2
    };
    let ratios = [
        Complex::new(-(s2u * ud1) / (s2v * vd1), 0.0),
        Complex::new(-(s1u * ud2) / (s1v * vd2), 0.0),
    ];
    let (a, b, t, _) = maximize(&f, a_max, b_max, &[0.0, PI], false, &nulling_candidates(&ratios, a_max, b_max));
    let beta = b * t.cos();
    let (r1, r2) = rates(a, beta);
    let point = AfPoint { alpha: [a, 0.0], beta: [beta, 0.0], sum_rate: r1 + r2 };
    Ok((SchemeRateReport::new("af_real", p, r1, r2, Vec::new()), point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn complex_scalar(h1: [[f64; 2]; 2], h2: [[f64; 2]; 2]) -> ChannelPair {
        let m = |h: [[f64; 2]; 2]| Matrix::from_row_slice(2, 2, &[h[0][0], h[0][1], h[1][0], h[1][1]]);
        ChannelPair::complex(1, m(h1), Matrix::zeros(2, 2), m(h2), Matrix::zeros(2, 2)).unwrap()
    }

    #[test]
    fn interference_free_channel() {
        let cp = complex_scalar([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]);
        let p = 100.0;
        let (rep, point) = af_rate(&cp, p).unwrap();
        let b2 = p / (p + 1.0);
        let expected = 2.0 * (1.0 + b2 * p / (2.0 * b2 + 1.0)).log2();
        assert!((rep.sum_rate - expected).abs() < 1e-9, "{} vs {expected}", rep.sum_rate);
        assert!((point.alpha[0].hypot(point.alpha[1]) - b2.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_channel_caps_at_two_bits() {
        let cp = complex_scalar([[1.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 1.0]]);
        for p in [1.0, 100.0, 1e6] {
            let (rep, _) = af_rate(&cp, p).unwrap();
            assert!(rep.sum_rate <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn returned_point_reevaluates() {
        let cp = complex_scalar([[1.0, -0.4], [0.7, 1.2]], [[0.9, 0.3], [-0.5, 1.1]]);
        let (rep, point) = af_rate(&cp, 300.0).unwrap();
        let again = af_objective(&cp, 300.0, point.alpha, point.beta).unwrap();
        assert!((again - rep.sum_rate).abs() <= 1e-12);
        // dominates a coarse independent grid
        let bound = (300.0_f64 / 301.0).sqrt();
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..8 {
                    let b = Complex::from_polar(bound * j as f64 / 4.0, TAU * k as f64 / 8.0);
                    let v = af_objective(&cp, 300.0, [bound * i as f64 / 4.0, 0.0], [b.re, b.im]).unwrap();
                    assert!(rep.sum_rate >= v - 1e-12);
                }
            }
        }
    }

    #[test]
    fn real_af_nulling_gives_one_dof() {
        let cp = ChannelPair::scalar([[1.0, 0.6], [-0.8, 1.3]], [[1.1, 0.5], [0.4, -0.9]]).unwrap();
        let lo = af_rate_real(&cp, 1e5).unwrap().0.sum_rate;
        let hi = af_rate_real(&cp, 1e8).unwrap().0.sum_rate;
        let slope = (hi - lo) / (0.5 * (1e8_f64.log2() - 1e5_f64.log2()));
        assert!(slope > 0.9 && slope < 1.05, "{slope}");
    }
}

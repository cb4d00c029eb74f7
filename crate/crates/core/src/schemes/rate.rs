use crate::channel::{augment, check_scalar_conditions, ChannelPair, SwapVariant};
use crate::relaying::{end_to_end, mimo_phase_kernels, scalar_phase_kernels, RelayKernel};
use crate::{Error, Result};

use super::model::{StackedModel, SymbolPlan};
use super::{check_power, SchemeRateReport};

fn stream_rate(p_sym: f64, vars: &[f64]) -> f64 {
    vars.iter().map(|v| (1.0 + p_sym / v).log2()).sum::<f64>() / 6.0
}

/// Closed-form rates of the scalar real scheme.
pub fn three_phase_scalar_rate(cp: &ChannelPair, p: f64) -> Result<SchemeRateReport> {
    check_power(p)?;
    let cond = check_scalar_conditions(cp)?;
    if !cond.all_hold() {
        return Err(Error::ConditionViolation(format!("scalar channel conditions fail: {cond:?}")));
    }
    let kernels = scalar_phase_kernels(cp)?;
    let mut g = [[[0.0; 3]; 2]; 2];
    let mut var = [[0.0; 3]; 2];
    let (ud, vd) = ([cp.h2()[(0, 0)], cp.h2()[(1, 0)]], [cp.h2()[(0, 1)], cp.h2()[(1, 1)]]);
    for (k, kern) in kernels.iter().enumerate() {
        let e = end_to_end(cp, kern)?;
        let (alpha, beta) = (kern.a[(0, 0)], kern.b[(0, 0)]);
        for i in 0..2 {
            for j in 0..2 {
                g[i][j][k] = e.block(i + 1, j + 1)[(0, 0)];
            }
            var[i][k] = ud[i].powi(2) * alpha.powi(2) + vd[i].powi(2) * beta.powi(2) + 1.0;
        }
    }
    let g11 = g[0][0];
    let g12 = g[0][1];
    let g21 = g[1][0];
    let g22 = g[1][1];

    let sigma_a1 = var[0][0] / g11[0].powi(2);
    let c_a2 = [
        g11[2] * g12[1] / (g11[0] * g11[1] * g12[2]),
        1.0 / g11[1],
        -g12[1] / (g11[1] * g12[2]),
    ];
    let sigma_a2: f64 = (0..3).map(|k| c_a2[k].powi(2) * var[0][k]).sum();

    let c_b1 = [
        1.0 / g22[0],
        g21[0] * g22[2] / (g22[0] * g21[2] * g22[1]),
        -g21[0] / (g22[0] * g21[2]),
    ];
    let sigma_b1: f64 = (0..3).map(|k| c_b1[k].powi(2) * var[1][k]).sum();
    let sigma_b2 = var[1][1] / g22[1].powi(2);

    let vars = vec![sigma_a1, sigma_a2, sigma_b1, sigma_b2];
    if vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::ConditionViolation(format!("degenerate stream noise variances {vars:?}")));
    }
    let r1 = stream_rate(p, &vars[..2]);
    let r2 = stream_rate(p, &vars[2..]);
    Ok(SchemeRateReport::new("three_phase_scalar", p, r1, r2, vars))
}

/// Kernels and symbol plan of the three-phase scheme on a real channel:
/// the scalar construction for `m = 1`, the Sylvester construction otherwise.
pub fn phase_kernels(cp: &ChannelPair) -> Result<([RelayKernel; 3], SymbolPlan)> {
    cp.require_real()?;
    let m = cp.m();
    if m == 1 {
        Ok((scalar_phase_kernels(cp)?, SymbolPlan::new(1, 0, 0)?))
    } else {
        let (c1, c2) = SwapVariant::RealLastFirst.columns(m);
        Ok((mimo_phase_kernels(cp, SwapVariant::RealLastFirst)?, SymbolPlan::new(m, c1, c2)?))
    }
}

/// Zero-forcing rates of arbitrary three-phase kernels that realize the
/// plan's decoding structure. Symbols get `p / m` each.
pub fn three_phase_rate_with_kernels(
    cp: &ChannelPair,
    kernels: &[RelayKernel; 3],
    plan: SymbolPlan,
    p: f64,
    label: &str,
) -> Result<SchemeRateReport> {
    check_power(p)?;
    let model = StackedModel::build(cp, kernels, plan)?;
    let v1 = model.stream_noise_vars(1)?;
    let v2 = model.stream_noise_vars(2)?;
    let p_sym = p / cp.m() as f64;
    let (r1, r2) = (stream_rate(p_sym, &v1), stream_rate(p_sym, &v2));
    let mut vars = v1;
    vars.extend(v2);
    if vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::SingularConstruction(format!("degenerate stream noise variances {vars:?}")));
    }
    Ok(SchemeRateReport::new(label, p, r1, r2, vars))
}

pub fn three_phase_mimo_rate(cp: &ChannelPair, p: f64) -> Result<SchemeRateReport> {
    let (kernels, plan) = phase_kernels(cp)?;
    three_phase_rate_with_kernels(cp, &kernels, plan, p, "three_phase_mimo")
}

/// Complex scheme run on the augmented real channel. Unit complex noise is
/// half a unit per real dimension, so the real model runs at power `2p`.
///
/// A complex pair with vanishing imaginary parts augments to two identical
/// decoupled real channels, where the regrouped-source construction is never
/// controllable; the real scheme then runs on each dimension separately.
pub fn three_phase_complex_rate(cp: &ChannelPair, p: f64) -> Result<SchemeRateReport> {
    check_power(p)?;
    if cp.is_real() {
        return Err(Error::ShapeMismatch("three_phase_complex_rate expects a complex channel pair".into()));
    }
    if cp.h1_im().iter().chain(cp.h2_im().iter()).all(|&x| x == 0.0) {
        let re = ChannelPair::real(cp.m(), cp.h1().clone(), cp.h2().clone())?;
        let half = three_phase_mimo_rate(&re, p)?;
        let mut vars = half.stream_noise_vars.clone();
        vars.extend(half.stream_noise_vars.iter().copied());
        return Ok(SchemeRateReport::new("three_phase_complex", p, 2.0 * half.r1, 2.0 * half.r2, vars));
    }
    let aug = augment(cp)?;
    let (c1, c2) = SwapVariant::ComplexFirstFirst.columns(aug.m());
    let kernels = mimo_phase_kernels(&aug, SwapVariant::ComplexFirstFirst)?;
    let mut report =
        three_phase_rate_with_kernels(&aug, &kernels, SymbolPlan::new(aug.m(), c1, c2)?, 2.0 * p, "three_phase_complex")?;
    report.p = p;
    Ok(report)
}

//! Achievable rates of the three-phase schemes and the baselines, kernel
//! refinement and a symbol-level transmission simulator.

mod af;
mod model;
mod rate;
mod refine;
mod simulate;

use serde::{Deserialize, Serialize};

pub use af::{af_objective, af_rate, af_rate_real, AfPoint};
pub use model::{DestinationModel, StackedModel, SymbolPlan};
pub use rate::{
    phase_kernels, three_phase_complex_rate, three_phase_mimo_rate, three_phase_rate_with_kernels,
    three_phase_scalar_rate,
};
pub use refine::{kernel_power_bounds, DEFAULT_BUDGET, mutual_information_sum_rate, refine_kernels, RefineResult};
pub use simulate::{simulate_transmission, SimOptions, TransmissionStats};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRateReport {
    pub scheme: String,
    /// Linear transmit power.
    pub p: f64,
    pub r1: f64,
    pub r2: f64,
    pub sum_rate: f64,
    /// Destination 1 streams first, then destination 2.
    pub stream_noise_vars: Vec<f64>,
}

impl SchemeRateReport {
    pub(crate) fn new(scheme: &str, p: f64, r1: f64, r2: f64, stream_noise_vars: Vec<f64>) -> Self {
        Self { scheme: scheme.to_string(), p, r1, r2, sum_rate: r1 + r2, stream_noise_vars }
    }
}

pub(crate) fn check_power(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::BadConfig(format!("power must be positive and finite, got {p}")))
    }
}

/// Time sharing between the two users: `log2(1 + p)` in total.
pub fn tdma_rate(p: f64) -> Result<SchemeRateReport> {
    check_power(p)?;
    let sum = (1.0 + p).log2();
    Ok(SchemeRateReport::new("tdma", p, sum / 2.0, sum / 2.0, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tdma_examples() {
        assert_eq!(tdma_rate(1.0).unwrap().sum_rate, 1.0);
        assert_eq!(tdma_rate(3.0).unwrap().sum_rate, 2.0);
        let r = tdma_rate(1e6).unwrap();
        assert!((r.sum_rate - 19.93157).abs() < 1e-5);
        assert_eq!(r.r1, r.r2);
        assert!(tdma_rate(0.0).is_err());
    }
}

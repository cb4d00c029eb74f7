//! Symbol-level Monte Carlo run of the three-phase scheme.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{splitmix64, ChannelPair};
use crate::linalg::Matrix;
use crate::relaying::RelayKernel;
use crate::{Error, Result};

use super::check_power;
use super::model::{StackedModel, SymbolPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Multiplies every relay and destination noise sample; `0` gives a
    /// noiseless run.
    pub noise_scale: f64,
    /// Number of independently seeded chunks.
    pub partitions: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { noise_scale: 1.0, partitions: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmissionStats {
    pub n_symbols: usize,
    /// Destination 1 streams first, then destination 2.
    pub empirical_stream_vars: Vec<f64>,
    /// Per stream, mean squared correlation with the other user's symbols.
    pub interference_leakage: Vec<f64>,
    /// `[u, v]`: largest per-phase mean transmit energy.
    pub relay_power_used: Vec<f64>,
    pub max_abs_error: f64,
}

/// Row-major copy for tight loops.
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn of(m: &Matrix) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().iter().copied().collect() }
    }

    fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

struct PhaseOps {
    /// `[relay][src]` first-hop blocks.
    hop1: [[Dense; 2]; 2],
    relay: [Dense; 2],
    /// `[dst][relay]` second-hop blocks.
    hop2: [[Dense; 2]; 2],
}

#[derive(Clone)]
struct Accum {
    err_sq: Vec<f64>,
    /// `[dst][stream][other symbol]` cross sums of estimate and interferer.
    cross: Vec<f64>,
    est_sq: Vec<f64>,
    sym_sq: Vec<f64>,
    relay_energy: [[f64; 3]; 2],
    max_abs_error: f64,
}

impl Accum {
    fn new(n: usize) -> Self {
        Self {
            err_sq: vec![0.0; 2 * n],
            cross: vec![0.0; 2 * n * n],
            est_sq: vec![0.0; 2 * n],
            sym_sq: vec![0.0; 2 * n],
            relay_energy: [[0.0; 3]; 2],
            max_abs_error: 0.0,
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.err_sq, &other.err_sq);
        add(&mut self.cross, &other.cross);
        add(&mut self.est_sq, &other.est_sq);
        add(&mut self.sym_sq, &other.sym_sq);
        for r in 0..2 {
            for k in 0..3 {
                self.relay_energy[r][k] += other.relay_energy[r][k];
            }
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self
    }
}

struct Setup {
    m: usize,
    n: usize,
    plan: SymbolPlan,
    phases: Vec<PhaseOps>,
    decoders: [Dense; 2],
    amplitude: f64,
    noise_scale: f64,
}

impl Setup {
    fn run_chunk(&self, count: usize, seed: u64) -> Accum {
        let (m, n) = (self.m, self.n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let mut acc = Accum::new(n);
        let mut x = [vec![0.0; n], vec![0.0; n]];
        let mut tx = [vec![0.0; m], vec![0.0; m]];
        let mut y_relay = [vec![0.0; m], vec![0.0; m]];
        let mut x_relay = [vec![0.0; m], vec![0.0; m]];
        let mut y_dst = [vec![0.0; 3 * m], vec![0.0; 3 * m]];
        let mut est = vec![0.0; n + 1];
        for _ in 0..count {
            for xs in &mut x {
                xs.iter_mut().for_each(|v| *v = self.amplitude * normal());
            }
            for (phase, ops) in self.phases.iter().enumerate() {
                for src in 0..2 {
                    for (ant, t) in tx[src].iter_mut().enumerate() {
                        *t = x[src][self.plan.symbol(src + 1, phase, ant)];
                    }
                }
                for r in 0..2 {
                    y_relay[r].iter_mut().for_each(|v| *v = self.noise_scale * normal());
                    for src in 0..2 {
                        ops.hop1[r][src].apply_add(&tx[src], &mut y_relay[r]);
                    }
                    x_relay[r].iter_mut().for_each(|v| *v = 0.0);
                    ops.relay[r].apply_add(&y_relay[r], &mut x_relay[r]);
                    acc.relay_energy[r][phase] += x_relay[r].iter().map(|v| v * v).sum::<f64>();
                }
                for d in 0..2 {
                    let out = &mut y_dst[d][phase * m..(phase + 1) * m];
                    out.iter_mut().for_each(|v| *v = self.noise_scale * normal());
                    for r in 0..2 {
                        ops.hop2[d][r].apply_add(&x_relay[r], out);
                    }
                }
            }
            for d in 0..2 {
                est.iter_mut().for_each(|v| *v = 0.0);
                self.decoders[d].apply_add(&y_dst[d], &mut est);
                let (own, other) = (&x[d], &x[1 - d]);
                for s in 0..n {
                    let e = est[s] - own[s];
                    acc.err_sq[d * n + s] += e * e;
                    acc.max_abs_error = acc.max_abs_error.max(e.abs());
                    acc.est_sq[d * n + s] += est[s] * est[s];
                    acc.sym_sq[d * n + s] += other[s] * other[s];
                    let row = &mut acc.cross[(d * n + s) * n..(d * n + s + 1) * n];
                    for (c, o) in row.iter_mut().zip(other) {
                        *c += est[s] * o;
                    }
                }
            }
        }
        acc
    }
}

/// Sends `n_symbols` Gaussian symbol vectors of power `p` per source through
/// both hops and the zero-forcing decoders. Results depend only on `seed`
/// and `opts.partitions`.
pub fn simulate_transmission(
    cp: &ChannelPair,
    kernels: &[RelayKernel; 3],
    plan: SymbolPlan,
    p: f64,
    n_symbols: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<TransmissionStats> {
    check_power(p)?;
    if n_symbols == 0 || opts.partitions == 0 {
        return Err(Error::BadConfig("n_symbols and partitions must be positive".into()));
    }
    if !(opts.noise_scale.is_finite() && opts.noise_scale >= 0.0) {
        return Err(Error::BadConfig(format!("noise scale {}", opts.noise_scale)));
    }
    let model = StackedModel::build(cp, kernels, plan)?;
    let decoders = [Dense::of(&model.decoder(1)?), Dense::of(&model.decoder(2)?)];
    let m = cp.m();
    let phases = kernels
        .iter()
        .map(|k| PhaseOps {
            hop1: [[Dense::of(&cp.s1u()), Dense::of(&cp.s2u())], [Dense::of(&cp.s1v()), Dense::of(&cp.s2v())]],
            relay: [Dense::of(&k.a), Dense::of(&k.b)],
            hop2: [[Dense::of(&cp.ud1()), Dense::of(&cp.vd1())], [Dense::of(&cp.ud2()), Dense::of(&cp.vd2())]],
        })
        .collect();
    let setup = Setup {
        m,
        n: plan.n_symbols(),
        plan,
        phases,
        decoders,
        amplitude: (p / m as f64).sqrt(),
        noise_scale: opts.noise_scale,
    };
    let parts = opts.partitions.min(n_symbols);
    let sizes: Vec<usize> = (0..parts).map(|i| n_symbols / parts + usize::from(i < n_symbols % parts)).collect();
    let chunks: Vec<Accum> = sizes
        .par_iter()
        .enumerate()
        .map(|(i, &count)| setup.run_chunk(count, seed ^ splitmix64(i as u64)))
        .collect();
    let acc = chunks.iter().skip(1).fold(chunks[0].clone(), |a, b| a.merge(b));

    let n = setup.n;
    let total = n_symbols as f64;
    let empirical_stream_vars = acc.err_sq.iter().map(|e| e / total).collect();
    let interference_leakage = (0..2 * n)
        .map(|ds| {
            let d = ds / n;
            let other_sq = |j: usize| acc.sym_sq[d * n + j];
            (0..n)
                .map(|j| {
                    let c = acc.cross[ds * n + j];
                    let denom = acc.est_sq[ds] * other_sq(j);
                    if denom > 0.0 {
                        (c * c / denom).min(1.0)
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let relay_power_used =
        acc.relay_energy.iter().map(|phases| phases.iter().fold(0.0_f64, |a, e| a.max(e / total))).collect();
    Ok(TransmissionStats {
        n_symbols,
        empirical_stream_vars,
        interference_leakage,
        relay_power_used,
        max_abs_error: acc.max_abs_error,
    })
}

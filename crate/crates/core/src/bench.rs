//! Monte Carlo SNR sweeps over channel ensembles, DoF slope fits and result
//! files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    augment, check_scalar_conditions, sample_ensemble, splitmix64, ChannelPair, EnsembleSpec, Field, SwapVariant,
};
use crate::relaying::{mimo_phase_kernels, RelayKernel};
use crate::schemes::{
    af_rate, af_rate_real, kernel_power_bounds, phase_kernels, refine_kernels, tdma_rate, three_phase_complex_rate,
    three_phase_mimo_rate, SymbolPlan, DEFAULT_BUDGET,
};
use crate::{Error, Result};

/// Redraws allowed per channel index before the sweep gives up.
const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Tdma,
    Af,
    ThreePhase,
    ThreePhaseRefined,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Tdma => "tdma",
            Scheme::Af => "af",
            Scheme::ThreePhase => "three_phase",
            Scheme::ThreePhaseRefined => "three_phase_refined",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdma" => Ok(Scheme::Tdma),
            "af" => Ok(Scheme::Af),
            "three_phase" => Ok(Scheme::ThreePhase),
            "three_phase_refined" => Ok(Scheme::ThreePhaseRefined),
            other => Err(Error::BadConfig(format!("unknown scheme {other:?}"))),
        }
    }
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ensemble: EnsembleSpec,
    pub schemes: Vec<Scheme>,
    pub p_grid_db: Vec<f64>,
    pub n_channels: usize,
    /// Channel `i` is drawn with seed `seed ^ splitmix64(i)`; the ensemble's
    /// own seed is ignored.
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default = "default_budget")]
    pub refine_budget: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.n_channels == 0 {
            return Err(Error::BadConfig("n_channels must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::BadConfig("no schemes requested".into()));
        }
        if self.p_grid_db.is_empty() || self.p_grid_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::BadConfig("p_grid_db must be nonempty and finite".into()));
        }
        if self.p_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadConfig("p_grid_db must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn db_to_linear(p_db: f64) -> f64 {
    10f64.powf(p_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    pub p_db: f64,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    /// Channels that contributed to the mean.
    pub n_channels: usize,
    pub skips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    /// Ordered by scheme (config order), then power.
    pub rows: Vec<SweepRow>,
    /// Channel draws rejected for failing the scheme conditions.
    pub rejections: usize,
}

impl SweepTable {
    pub fn scheme_rows(&self, scheme: &str) -> Vec<SweepRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).cloned().collect()
    }
}

/// Everything that depends on the channel only.
struct Prepared {
    cp: ChannelPair,
    /// Real channel, kernels and plan the three-phase schemes run on, with
    /// the power multiplier of the real model.
    three_phase: Option<(ChannelPair, [RelayKernel; 3], SymbolPlan, f64)>,
}

fn prepare(cp: ChannelPair, needs_three_phase: bool) -> Result<Prepared> {
    if !needs_three_phase {
        return Ok(Prepared { cp, three_phase: None });
    }
    let three_phase = if cp.is_real() {
        if cp.m() == 1 {
            let cond = check_scalar_conditions(&cp)?;
            if !cond.all_hold() {
                return Err(Error::ConditionViolation(format!("{cond:?}")));
            }
        }
        let (k, plan) = phase_kernels(&cp)?;
        (cp.clone(), k, plan, 1.0)
    } else {
        let aug = augment(&cp)?;
        let (c1, c2) = SwapVariant::ComplexFirstFirst.columns(aug.m());
        let k = mimo_phase_kernels(&aug, SwapVariant::ComplexFirstFirst)?;
        let plan = SymbolPlan::new(aug.m(), c1, c2)?;
        (aug, k, plan, 2.0)
    };
    Ok(Prepared { cp, three_phase: Some(three_phase) })
}

fn draw_channel(cfg: &SweepConfig, index: u64, needs_three_phase: bool) -> Result<(Prepared, usize)> {
    let base = EnsembleSpec { seed: cfg.seed, ..cfg.ensemble };
    for attempt in 0..MAX_REDRAWS {
        let spec = base.member(index ^ (attempt << 32));
        let cp = sample_ensemble(&spec)?;
        match prepare(cp, needs_three_phase) {
            Ok(prep) => return Ok((prep, attempt as usize)),
            Err(e) => warn!("channel {index} draw {attempt} rejected: {e}"),
        }
    }
    Err(Error::ConditionViolation(format!("channel {index}: no valid draw in {MAX_REDRAWS} attempts")))
}

fn evaluate(prep: &Prepared, scheme: Scheme, p: f64, budget: usize) -> Result<f64> {
    let cp = &prep.cp;
    match scheme {
        Scheme::Tdma => Ok(tdma_rate(p)?.sum_rate),
        Scheme::Af => match cp.field() {
            Field::Complex => Ok(af_rate(cp, p)?.0.sum_rate),
            Field::Real => Ok(af_rate_real(cp, p)?.0.sum_rate),
        },
        Scheme::ThreePhase => match cp.field() {
            Field::Real => Ok(three_phase_mimo_rate(cp, p)?.sum_rate),
            Field::Complex => Ok(three_phase_complex_rate(cp, p)?.sum_rate),
        },
        Scheme::ThreePhaseRefined => {
            let (ch, kernels, plan, mult) =
                prep.three_phase.as_ref().ok_or_else(|| Error::BadConfig("three-phase kernels missing".into()))?;
            let p_real = mult * p;
            let (a_max, b_max) = kernel_power_bounds(ch, p_real)?;
            let start = kernels.clone().map(|mut k| {
                let norm_a = crate::linalg::operator_norm(&k.a);
                let norm_b = crate::linalg::operator_norm(&k.b);
                let s = (a_max / norm_a).min(b_max / norm_b);
                if s < 1.0 {
                    k.a *= s;
                    k.b *= s;
                    k.scale *= s;
                }
                k
            });
            Ok(refine_kernels(ch, &start, *plan, p_real, budget)?.sum_rate)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("TWOHOP_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::BadConfig(format!("TWOHOP_THREADS={v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::BadConfig(format!("thread pool: {e}")))
}

/// Mean and population standard deviation of every scheme at every power
/// over `n_channels` draws. Output is independent of the worker count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let needs_three_phase = cfg.schemes.iter().any(|s| matches!(s, Scheme::ThreePhase | Scheme::ThreePhaseRefined));
    let powers: Vec<f64> = cfg.p_grid_db.iter().map(|&d| db_to_linear(d)).collect();
    let per_channel: Vec<(usize, Vec<Vec<Option<f64>>>)> = thread_pool()?.install(|| {
        (0..cfg.n_channels as u64)
            .into_par_iter()
            .map(|i| {
                let (prep, rejected) = draw_channel(cfg, i, needs_three_phase)?;
                let cells = cfg
                    .schemes
                    .iter()
                    .map(|&scheme| {
                        powers
                            .iter()
                            .map(|&p| match evaluate(&prep, scheme, p, cfg.refine_budget) {
                                Ok(v) if v.is_finite() => Some(v),
                                Ok(v) => {
                                    warn!("channel {i} {} at {p:e}: non-finite rate {v}", scheme.label());
                                    None
                                }
                                Err(e) => {
                                    warn!("channel {i} {} at {p:e} skipped: {e}", scheme.label());
                                    None
                                }
                            })
                            .collect()
                    })
                    .collect();
                Ok((rejected, cells))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rejections = per_channel.iter().map(|(r, _)| r).sum();
    let mut rows = Vec::new();
    for (si, scheme) in cfg.schemes.iter().enumerate() {
        for (pi, &p_db) in cfg.p_grid_db.iter().enumerate() {
            let values: Vec<f64> = per_channel.iter().filter_map(|(_, cells)| cells[si][pi]).collect();
            let n = values.len();
            let (mean, std) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = values.iter().sum::<f64>() / n as f64;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                (mean, var.sqrt())
            };
            rows.push(SweepRow {
                scheme: scheme.label().to_string(),
                p_db,
                mean_sum_rate: mean,
                std_sum_rate: std,
                n_channels: n,
                skips: cfg.n_channels - n,
            });
        }
    }
    debug!("sweep done: {} rows, {rejections} rejected draws", rows.len());
    Ok(SweepTable { rows, rejections })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// `½ log2 P`, real channels.
    HalfLog2,
    /// `log2 P`, complex channels.
    Log2,
}

impl Normalizer {
    pub fn apply(self, p_db: f64) -> f64 {
        let l = p_db / 10.0 * 10f64.log2();
        match self {
            Normalizer::HalfLog2 => 0.5 * l,
            Normalizer::Log2 => l,
        }
    }
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half-log2" => Ok(Normalizer::HalfLog2),
            "log2" => Ok(Normalizer::Log2),
            other => Err(Error::BadConfig(format!("unknown normalizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DofFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS error of the fit.
    pub residual: f64,
    pub fit_window_db: (f64, f64),
}

/// Least-squares slope of mean sum rate against the normalizer over rows of
/// one scheme whose power lies in `window_db`.
pub fn fit_dof_slope(rows: &[SweepRow], normalizer: Normalizer, window_db: (f64, f64)) -> Result<DofFit> {
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.scheme != first.scheme) {
            return Err(Error::BadConfig("fit rows mix several schemes".into()));
        }
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.p_db >= window_db.0 && r.p_db <= window_db.1 && r.mean_sum_rate.is_finite())
        .map(|r| (normalizer.apply(r.p_db), r.mean_sum_rate))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points in window {window_db:?}, need 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DofFit { slope, intercept, residual, fit_window_db: window_db })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub const CSV_HEADER: &str = "scheme,p_db,mean_sum_rate,std_sum_rate,n_channels,skips";

fn sig12(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scheme,
            sig12(r.p_db),
            sig12(r.mean_sum_rate),
            sig12(r.std_sum_rate),
            r.n_channels,
            r.skips
        );
    }
    out
}

pub fn to_json(rows: &[SweepRow]) -> Result<String> {
    let rounded: Vec<SweepRow> = rows
        .iter()
        .map(|r| {
            let round = |x: f64| sig12(x).parse::<f64>().unwrap_or(x);
            SweepRow { p_db: round(r.p_db), mean_sum_rate: round(r.mean_sum_rate), std_sum_rate: round(r.std_sum_rate), ..r.clone() }
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rounded)?)
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::BadConfig("unexpected CSV header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::BadConfig(format!("malformed CSV line {line:?}"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(SweepRow {
                scheme: f[0].to_string(),
                p_db: f[1].parse().map_err(|_| bad())?,
                mean_sum_rate: f[2].parse().map_err(|_| bad())?,
                std_sum_rate: f[3].parse().map_err(|_| bad())?,
                n_channels: f[4].parse().map_err(|_| bad())?,
                skips: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn emit_results(rows: &[SweepRow], format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Per-channel seed used by the sweep, exposed for reproducing one draw.
pub fn channel_seed(base: u64, index: u64) -> u64 {
    base ^ splitmix64(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Distribution;

    fn cfg(schemes: Vec<Scheme>, field: Field, m: usize) -> SweepConfig {
        SweepConfig {
            ensemble: EnsembleSpec {
                m,
                r: 1.0,
                seed: 0,
                distribution: if field == Field::Complex { Distribution::UniformPhase } else { Distribution::GaussianEntries },
                field,
            },
            schemes,
            p_grid_db: vec![10.0, 20.0, 30.0],
            n_channels: 4,
            seed: 9,
            output_path: None,
            refine_budget: 20,
        }
    }

    #[test]
    fn tdma_curve_is_exact() {
        let t = run_sweep(&cfg(vec![Scheme::Tdma], Field::Real, 1)).unwrap();
        for r in &t.rows {
            assert_eq!(r.mean_sum_rate, (1.0 + db_to_linear(r.p_db)).log2());
            assert_eq!(r.std_sum_rate, 0.0);
        }
    }

    #[test]
    fn synthetic_fits() {
        let rows = |f: &dyn Fn(f64) -> f64| -> Vec<SweepRow> {
            (0..7)
                .map(|i| {
                    let p_db = 50.0 + 5.0 * i as f64;
                    SweepRow {
                        scheme: "x".into(),
                        p_db,
                        mean_sum_rate: f(p_db),
                        std_sum_rate: 0.0,
                        n_channels: 1,
                        skips: 0,
                    }
                })
                .collect()
        };
        let lin = rows(&|db| 2.0 / 3.0 * (db / 10.0 * 10f64.log2()) + 5.0);
        let fit = fit_dof_slope(&lin, Normalizer::HalfLog2, (50.0, 80.0)).unwrap();
        assert!((fit.slope - 4.0 / 3.0).abs() < 1e-9);
        let flat = fit_dof_slope(&rows(&|_| 3.0), Normalizer::Log2, (50.0, 80.0)).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(matches!(fit_dof_slope(&lin, Normalizer::Log2, (50.0, 55.0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn csv_contract() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
        let row = SweepRow {
            scheme: "tdma".into(),
            p_db: 30.0,
            mean_sum_rate: 1.0 / 3.0,
            std_sum_rate: 0.0,
            n_channels: 5,
            skips: 0,
        };
        let csv = to_csv(std::slice::from_ref(&row));
        assert_eq!(csv.lines().count(), 2);
        let back = parse_csv(&csv).unwrap();
        assert!((back[0].mean_sum_rate - row.mean_sum_rate).abs() <= 1e-12 * row.mean_sum_rate);
        assert_eq!(back[0].n_channels, 5);
    }

    #[test]
    fn sweep_is_deterministic() {
        let c = cfg(vec![Scheme::ThreePhase, Scheme::Af, Scheme::ThreePhaseRefined], Field::Complex, 1);
        let a = to_csv(&run_sweep(&c).unwrap().rows);
        let b = to_csv(&run_sweep(&c).unwrap().rows);
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(vec![Scheme::Tdma], Field::Real, 1);
        c.p_grid_db = vec![10.0, 10.0];
        assert!(matches!(run_sweep(&c), Err(Error::BadConfig(_))));
        c.p_grid_db = vec![];
        assert!(c.validate().is_err());
    }
}

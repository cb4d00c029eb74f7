//! Channel pairs `(H1, H2)`, random ensembles and genericity checks.
//!
//! Block layout follows the node ordering used everywhere else:
//! `H1 = [[H_s1u, H_s2u], [H_s1v, H_s2v]]` (rows are relays, columns are
//! sources) and `H2 = [[H_ud1, H_vd1], [H_ud2, H_vd2]]` (rows are
//! destinations, columns are relays).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{ensure_finite, Matrix};
use crate::{Error, Result};

/// Absolute tolerance for zero gains and vanishing determinants.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// Two hop matrices with `m` antennas per node. Complex pairs keep the
/// imaginary parts alongside; real pairs have them identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    m: usize,
    field: Field,
    h1: Matrix,
    h2: Matrix,
    h1_im: Matrix,
    h2_im: Matrix,
}

fn check_hop(h: &Matrix, m: usize, what: &'static str) -> Result<()> {
    if m == 0 || h.shape() != (2 * m, 2 * m) {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be {0}x{0}, got {1}x{2}",
            2 * m,
            h.nrows(),
            h.ncols()
        )));
    }
    ensure_finite(h, what)
}

impl ChannelPair {
    pub fn real(m: usize, h1: Matrix, h2: Matrix) -> Result<Self> {
        check_hop(&h1, m, "h1")?;
        check_hop(&h2, m, "h2")?;
        let zero = Matrix::zeros(2 * m, 2 * m);
        Ok(Self { m, field: Field::Real, h1, h2, h1_im: zero.clone(), h2_im: zero })
    }

    pub fn complex(m: usize, h1: Matrix, h1_im: Matrix, h2: Matrix, h2_im: Matrix) -> Result<Self> {
        check_hop(&h1, m, "h1")?;
        check_hop(&h1_im, m, "h1 imaginary part")?;
        check_hop(&h2, m, "h2")?;
        check_hop(&h2_im, m, "h2 imaginary part")?;
        Ok(Self { m, field: Field::Complex, h1, h2, h1_im, h2_im })
    }

    /// Scalar real pair from `[[h_s1u, h_s2u], [h_s1v, h_s2v]]` and
    /// `[[h_ud1, h_vd1], [h_ud2, h_vd2]]`.
    pub fn scalar(h1: [[f64; 2]; 2], h2: [[f64; 2]; 2]) -> Result<Self> {
        let to_m = |h: [[f64; 2]; 2]| Matrix::from_row_slice(2, 2, &[h[0][0], h[0][1], h[1][0], h[1][1]]);
        Self::real(1, to_m(h1), to_m(h2))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_real(&self) -> bool {
        self.field == Field::Real
    }

    /// Real part of `H1`.
    pub fn h1(&self) -> &Matrix {
        &self.h1
    }

    /// Real part of `H2`.
    pub fn h2(&self) -> &Matrix {
        &self.h2
    }

    pub fn h1_im(&self) -> &Matrix {
        &self.h1_im
    }

    pub fn h2_im(&self) -> &Matrix {
        &self.h2_im
    }

    fn block(h: &Matrix, m: usize, row: usize, col: usize) -> Matrix {
        h.view((row * m, col * m), (m, m)).into_owned()
    }

    pub fn s1u(&self) -> Matrix {
        Self::block(&self.h1, self.m, 0, 0)
    }
    pub fn s2u(&self) -> Matrix {
        Self::block(&self.h1, self.m, 0, 1)
    }
    pub fn s1v(&self) -> Matrix {
        Self::block(&self.h1, self.m, 1, 0)
    }
    pub fn s2v(&self) -> Matrix {
        Self::block(&self.h1, self.m, 1, 1)
    }
    pub fn ud1(&self) -> Matrix {
        Self::block(&self.h2, self.m, 0, 0)
    }
    pub fn vd1(&self) -> Matrix {
        Self::block(&self.h2, self.m, 0, 1)
    }
    pub fn ud2(&self) -> Matrix {
        Self::block(&self.h2, self.m, 1, 0)
    }
    pub fn vd2(&self) -> Matrix {
        Self::block(&self.h2, self.m, 1, 1)
    }

    /// `H_{s_j u}` for source `j ∈ {1, 2}`.
    pub fn src_u(&self, j: usize) -> Matrix {
        Self::block(&self.h1, self.m, 0, j - 1)
    }
    /// `H_{s_j v}`.
    pub fn src_v(&self, j: usize) -> Matrix {
        Self::block(&self.h1, self.m, 1, j - 1)
    }
    /// `H_{u d_i}` for destination `i ∈ {1, 2}`.
    pub fn u_dst(&self, i: usize) -> Matrix {
        Self::block(&self.h2, self.m, i - 1, 0)
    }
    /// `H_{v d_i}`.
    pub fn v_dst(&self, i: usize) -> Matrix {
        Self::block(&self.h2, self.m, i - 1, 1)
    }

    pub fn require_real(&self) -> Result<()> {
        if self.is_real() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("operation needs a real channel pair; augment it first".into()))
        }
    }

    pub fn require_scalar_real(&self) -> Result<()> {
        self.require_real()?;
        if self.m != 1 {
            return Err(Error::ShapeMismatch(format!("scalar operation on an m = {} channel", self.m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Unit-magnitude direct links, `√r` cross links, uniform phases.
    UniformPhase,
    /// Every real (and imaginary) part i.i.d. standard normal.
    GaussianEntries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: f64,
    pub seed: u64,
    pub distribution: Distribution,
    #[serde(default = "default_field")]
    pub field: Field,
}

fn default_r() -> f64 {
    1.0
}

fn default_field() -> Field {
    Field::Real
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::BadSpec("m must be at least 1".into()));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::BadSpec(format!("r must lie in (0, 1], got {}", self.r)));
        }
        if self.distribution == Distribution::UniformPhase && self.field != Field::Complex {
            return Err(Error::BadSpec("uniform_phase ensembles are complex".into()));
        }
        Ok(())
    }

    /// Same spec with the seed of the `index`-th ensemble member.
    pub fn member(&self, index: u64) -> Self {
        Self { seed: self.seed ^ splitmix64(index), ..*self }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn is_direct(row_block: usize, col_block: usize) -> bool {
    row_block == col_block
}

pub fn sample_ensemble(spec: &EnsembleSpec) -> Result<ChannelPair> {
    spec.validate()?;
    let m = spec.m;
    let n = 2 * m;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut hops = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut re = Matrix::zeros(n, n);
        let mut im = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                match spec.distribution {
                    Distribution::GaussianEntries => {
                        re[(i, j)] = rng.sample(StandardNormal);
                        if spec.field == Field::Complex {
                            im[(i, j)] = rng.sample(StandardNormal);
                        }
                    }
                    Distribution::UniformPhase => {
                        let mag = if is_direct(i / m, j / m) { 1.0 } else { spec.r.sqrt() };
                        let theta = rng.random_range(0.0..std::f64::consts::TAU);
                        re[(i, j)] = mag * theta.cos();
                        im[(i, j)] = mag * theta.sin();
                    }
                }
            }
        }
        hops.push((re, im));
    }
    let (h2, h2_im) = hops.pop().unwrap();
    let (h1, h1_im) = hops.pop().unwrap();
    match spec.field {
        Field::Real => ChannelPair::real(m, h1, h2),
        Field::Complex => ChannelPair::complex(m, h1, h1_im, h2, h2_im),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetValues {
    pub det_h1: f64,
    pub det_h2: f64,
    /// `det [[h_s2u h_ud1, h_s1u h_ud2], [h_s2v h_vd1, h_s1v h_vd2]]`.
    pub cross: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub c1_all_nonzero: bool,
    pub c2_hops_invertible: bool,
    pub c3_cross_det_nonzero: bool,
    pub det_values: DetValues,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.c1_all_nonzero && self.c2_hops_invertible && self.c3_cross_det_nonzero
    }
}

/// `det [[h_s2u h_ud1, h_s1u h_ud2], [h_s2v h_vd1, h_s1v h_vd2]]` on a scalar
/// pair.
pub fn cross_determinant(cp: &ChannelPair) -> f64 {
    let (s1u, s2u, s1v, s2v) = (cp.h1[(0, 0)], cp.h1[(0, 1)], cp.h1[(1, 0)], cp.h1[(1, 1)]);
    let (ud1, vd1, ud2, vd2) = (cp.h2[(0, 0)], cp.h2[(0, 1)], cp.h2[(1, 0)], cp.h2[(1, 1)]);
    s2u * ud1 * s1v * vd2 - s1u * ud2 * s2v * vd1
}

fn det2(h: &Matrix) -> f64 {
    h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]
}

pub fn check_scalar_conditions(cp: &ChannelPair) -> Result<ConditionReport> {
    cp.require_scalar_real()?;
    let det_values = DetValues { det_h1: det2(&cp.h1), det_h2: det2(&cp.h2), cross: cross_determinant(cp) };
    let c1_all_nonzero = cp.h1.iter().chain(cp.h2.iter()).all(|g| g.abs() > ZERO_TOL);
    Ok(ConditionReport {
        c1_all_nonzero,
        c2_hops_invertible: det_values.det_h1.abs() > ZERO_TOL && det_values.det_h2.abs() > ZERO_TOL,
        c3_cross_det_nonzero: det_values.cross.abs() > ZERO_TOL,
        det_values,
    })
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn augment_block(re: &Matrix, im: &Matrix) -> Matrix {
    let (r, c) = re.shape();
    let mut out = Matrix::zeros(2 * r, 2 * c);
    out.view_mut((0, 0), (r, c)).copy_from(re);
    out.view_mut((0, c), (r, c)).copy_from(&(-im));
    out.view_mut((r, 0), (r, c)).copy_from(im);
    out.view_mut((r, c), (r, c)).copy_from(re);
    out
}

fn augment_hop(re: &Matrix, im: &Matrix, m: usize) -> Matrix {
    let mut out = Matrix::zeros(4 * m, 4 * m);
    for bi in 0..2 {
        for bj in 0..2 {
            let block = augment_block(
                &re.view((bi * m, bj * m), (m, m)).into_owned(),
                &im.view((bi * m, bj * m), (m, m)).into_owned(),
            );
            out.view_mut((bi * 2 * m, bj * 2 * m), (2 * m, 2 * m)).copy_from(&block);
        }
    }
    out
}

/// Real pair with `2m` antennas per node equivalent to a complex pair.
pub fn augment(cp: &ChannelPair) -> Result<ChannelPair> {
    if cp.is_real() {
        return Err(Error::ShapeMismatch("augment expects a complex channel pair".into()));
    }
    ChannelPair::real(2 * cp.m, augment_hop(&cp.h1, &cp.h1_im, cp.m), augment_hop(&cp.h2, &cp.h2_im, cp.m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapVariant {
    /// s1's last antenna trades places with s2's first.
    RealLastFirst,
    /// The two first antennas trade places.
    ComplexFirstFirst,
}

impl SwapVariant {
    /// `(s1 column, s2 column)` exchanged between the sources.
    pub fn columns(self, m: usize) -> (usize, usize) {
        match self {
            SwapVariant::RealLastFirst => (m - 1, 0),
            SwapVariant::ComplexFirstFirst => (0, 0),
        }
    }
}

/// Hop-1 blocks seen from the regrouped sources `s̃1`, `s̃2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedSources {
    pub s1u: Matrix,
    pub s1v: Matrix,
    pub s2u: Matrix,
    pub s2v: Matrix,
    /// Column of `s̃1` holding the antenna borrowed from `s2`.
    pub s1_col: usize,
    /// Column of `s̃2` holding the antenna borrowed from `s1`.
    pub s2_col: usize,
}

impl ModifiedSources {
    pub fn src_u(&self, j: usize) -> &Matrix {
        if j == 1 {
            &self.s1u
        } else {
            &self.s2u
        }
    }

    pub fn src_v(&self, j: usize) -> &Matrix {
        if j == 1 {
            &self.s1v
        } else {
            &self.s2v
        }
    }
}

pub fn modified_source_channels(cp: &ChannelPair, variant: SwapVariant) -> Result<ModifiedSources> {
    cp.require_real()?;
    let (c1, c2) = variant.columns(cp.m);
    let swap = |own: Matrix, other: &Matrix, own_col: usize, other_col: usize| {
        let mut out = own;
        out.set_column(own_col, &other.column(other_col));
        out
    };
    let (s1u, s2u, s1v, s2v) = (cp.s1u(), cp.s2u(), cp.s1v(), cp.s2v());
    Ok(ModifiedSources {
        s1u: swap(s1u.clone(), &s2u, c1, c2),
        s1v: swap(s1v.clone(), &s2v, c1, c2),
        s2u: swap(s2u, &s1u, c2, c1),
        s2v: swap(s2v, &s1v, c2, c1),
        s1_col: c1,
        s2_col: c2,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    m: usize,
    field: Field,
    h1: Vec<Vec<Entry>>,
    h2: Vec<Vec<Entry>>,
}

fn rows_to_parts(rows: &[Vec<Entry>], n: usize, field: Field) -> Result<(Matrix, Matrix)> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch(format!("hop matrix must be {n}x{n}")));
    }
    let mut re = Matrix::zeros(n, n);
    let mut im = Matrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            match (e, field) {
                (Entry::Real(x), _) => re[(i, j)] = *x,
                (Entry::Complex([a, b]), Field::Complex) => {
                    re[(i, j)] = *a;
                    im[(i, j)] = *b;
                }
                (Entry::Complex(_), Field::Real) => {
                    return Err(Error::ShapeMismatch("complex entry in a real channel".into()))
                }
            }
        }
    }
    Ok((re, im))
}

fn parts_to_rows(re: &Matrix, im: &Matrix, field: Field) -> Vec<Vec<Entry>> {
    (0..re.nrows())
        .map(|i| {
            (0..re.ncols())
                .map(|j| match field {
                    Field::Real => Entry::Real(re[(i, j)]),
                    Field::Complex => Entry::Complex([re[(i, j)], im[(i, j)]]),
                })
                .collect()
        })
        .collect()
}

impl ChannelPair {
    pub fn to_json(&self) -> serde_json::Value {
        let doc = ChannelJson {
            m: self.m,
            field: self.field,
            h1: parts_to_rows(&self.h1, &self.h1_im, self.field),
            h2: parts_to_rows(&self.h2, &self.h2_im, self.field),
        };
        serde_json::to_value(doc).expect("channel json")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ChannelJson = serde_json::from_value(value.clone())?;
        let n = 2 * doc.m;
        let (h1, h1_im) = rows_to_parts(&doc.h1, n, doc.field)?;
        let (h2, h2_im) = rows_to_parts(&doc.h2, n, doc.field)?;
        match doc.field {
            Field::Real => Self::real(doc.m, h1, h2),
            Field::Complex => Self::complex(doc.m, h1, h1_im, h2, h2_im),
        }
    }
}

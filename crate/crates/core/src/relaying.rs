//! Relay kernels realizing the S, Z and X end-to-end topologies.
//!
//! Topology naming: S nulls `s2 → d1` and leaves a single antenna of `s1`
//! leaking into `d2`; Z is the mirror image; X keeps both cross links on one
//! antenna pair. The three-phase schemes use them in the order of
//! [`PHASE_TOPOLOGIES`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::{modified_source_channels, ChannelPair, SwapVariant, ZERO_TOL};
use crate::linalg::{
    eigen_separation, ensure_finite, krylov_full_rank, operator_norm, rank, solve_sylvester, try_inverse, Matrix, SylvesterProblem, EIGEN_COLLISION_THRESHOLD,
};
use crate::{Error, Result};

/// Relative tolerance for constructed nulls and leak patterns.
pub const CONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    S,
    Z,
    X,
}

/// Topology used in each of the three phases.
pub const PHASE_TOPOLOGIES: [Topology; 3] = [Topology::S, Topology::Z, Topology::X];

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Topology::S),
            "Z" | "z" => Ok(Topology::Z),
            "X" | "x" => Ok(Topology::X),
            other => Err(Error::BadConfig(format!("unknown topology {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelLabel {
    S,
    Z,
    X,
    #[serde(rename = "custom")]
    Custom,
}

impl From<Topology> for KernelLabel {
    fn from(t: Topology) -> Self {
        match t {
            Topology::S => KernelLabel::S,
            Topology::Z => KernelLabel::Z,
            Topology::X => KernelLabel::X,
        }
    }
}

/// Amplifying matrices of relays `u` (`a`) and `v` (`b`) for one block.
/// `scale` has already been multiplied into `a` and `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct RelayKernel {
    pub a: Matrix,
    pub b: Matrix,
    pub scale: f64,
    pub label: KernelLabel,
}

impl RelayKernel {
    pub fn new(a: Matrix, b: Matrix, scale: f64, label: KernelLabel) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() || a.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "kernel matrices must be square and equal, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        ensure_finite(&a, "kernel a")?;
        ensure_finite(&b, "kernel b")?;
        if !scale.is_finite() {
            return Err(Error::NonFinite("kernel scale"));
        }
        Ok(Self { a, b, scale, label })
    }

    /// Scalar kernel `(α, β)`.
    pub fn scalar(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Matrix::from_element(1, 1, alpha), Matrix::from_element(1, 1, beta), 1.0, KernelLabel::Custom)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn zeros(dim: usize) -> Self {
        Self { a: Matrix::zeros(dim, dim), b: Matrix::zeros(dim, dim), scale: 1.0, label: KernelLabel::Custom }
    }
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    scale: f64,
    label: KernelLabel,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
}

impl TryFrom<KernelJson> for RelayKernel {
    type Error = Error;

    fn try_from(k: KernelJson) -> Result<Self> {
        RelayKernel::new(matrix_from_rows(&k.a)?, matrix_from_rows(&k.b)?, k.scale, k.label)
    }
}

impl From<RelayKernel> for KernelJson {
    fn from(k: RelayKernel) -> Self {
        KernelJson { a: rows_of(&k.a), b: rows_of(&k.b), scale: k.scale, label: k.label }
    }
}

/// Effective blocks `G_ij` and the map from relay noise to destination
/// observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndChannel {
    pub g11: Matrix,
    pub g12: Matrix,
    pub g21: Matrix,
    pub g22: Matrix,
    /// `[[H_ud1 A, H_vd1 B], [H_ud2 A, H_vd2 B]]`.
    pub noise_map: Matrix,
}

impl EndToEndChannel {
    /// `G_ij` for `i, j ∈ {1, 2}`.
    pub fn block(&self, i: usize, j: usize) -> &Matrix {
        match (i, j) {
            (1, 1) => &self.g11,
            (1, 2) => &self.g12,
            (2, 1) => &self.g21,
            _ => &self.g22,
        }
    }

    pub fn max_block_norm(&self) -> f64 {
        [&self.g11, &self.g12, &self.g21, &self.g22].iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    /// Full `2M × 2M` matrix `[[G11, G12], [G21, G22]]`.
    pub fn stacked(&self) -> Matrix {
        let m = self.g11.nrows();
        let mut g = Matrix::zeros(2 * m, 2 * m);
        g.view_mut((0, 0), (m, m)).copy_from(&self.g11);
        g.view_mut((0, m), (m, m)).copy_from(&self.g12);
        g.view_mut((m, 0), (m, m)).copy_from(&self.g21);
        g.view_mut((m, m), (m, m)).copy_from(&self.g22);
        g
    }
}

fn check_kernel_dim(cp: &ChannelPair, k: &RelayKernel) -> Result<()> {
    cp.require_real()?;
    if k.dim() != cp.m() {
        return Err(Error::ShapeMismatch(format!("kernel dimension {} on an m = {} channel", k.dim(), cp.m())));
    }
    Ok(())
}

fn effective(ud: &Matrix, vd: &Matrix, su: &Matrix, sv: &Matrix, a: &Matrix, b: &Matrix) -> Matrix {
    ud * a * su + vd * b * sv
}

pub fn end_to_end(cp: &ChannelPair, k: &RelayKernel) -> Result<EndToEndChannel> {
    check_kernel_dim(cp, k)?;
    let g = |i: usize, j: usize| effective(&cp.u_dst(i), &cp.v_dst(i), &cp.src_u(j), &cp.src_v(j), &k.a, &k.b);
    let m = cp.m();
    let mut noise_map = Matrix::zeros(2 * m, 2 * m);
    for i in 1..=2 {
        noise_map.view_mut(((i - 1) * m, 0), (m, m)).copy_from(&(cp.u_dst(i) * &k.a));
        noise_map.view_mut(((i - 1) * m, m), (m, m)).copy_from(&(cp.v_dst(i) * &k.b));
    }
    Ok(EndToEndChannel { g11: g(1, 1), g12: g(1, 2), g21: g(2, 1), g22: g(2, 2), noise_map })
}

/// Covariance of the effective destination noise, `N Nᵀ + I`.
pub fn noise_covariance(cp: &ChannelPair, k: &RelayKernel) -> Result<Matrix> {
    let e = end_to_end(cp, k)?;
    let n = e.noise_map.nrows();
    Ok(&e.noise_map * e.noise_map.transpose() + Matrix::identity(n, n))
}

/// Scalar power constant `c`.
pub fn scalar_power_constant(cp: &ChannelPair) -> Result<f64> {
    cp.require_scalar_real()?;
    let (s1u, s2u, s1v, s2v) = (cp.h1()[(0, 0)], cp.h1()[(0, 1)], cp.h1()[(1, 0)], cp.h1()[(1, 1)]);
    let (ud1, vd1, ud2, vd2) = (cp.h2()[(0, 0)], cp.h2()[(0, 1)], cp.h2()[(1, 0)], cp.h2()[(1, 1)]);
    for (name, g) in [
        ("h_s1u", s1u),
        ("h_s2u", s2u),
        ("h_s1v", s1v),
        ("h_s2v", s2v),
        ("h_ud1", ud1),
        ("h_vd1", vd1),
        ("h_ud2", ud2),
        ("h_vd2", vd2),
    ] {
        if g.abs() <= ZERO_TOL {
            return Err(Error::ConditionViolation(format!("{name} vanishes")));
        }
    }
    let l = (vd1 * s2v / (ud1 * s2u)).abs().min((vd2 * s1v / (ud2 * s1u)).abs());
    let cu = (1.0 / (s1u * s1u + s2u * s2u + 1.0)).sqrt();
    let cv = l * (1.0 / (s1v * s1v + s2v * s2v + 1.0)).sqrt();
    Ok(cu.min(cv))
}

pub fn scalar_kernel(cp: &ChannelPair, topology: Topology) -> Result<RelayKernel> {
    let c = scalar_power_constant(cp)?;
    let (s1u, s2u, s1v, s2v) = (cp.h1()[(0, 0)], cp.h1()[(0, 1)], cp.h1()[(1, 0)], cp.h1()[(1, 1)]);
    let (ud1, vd1, ud2, vd2) = (cp.h2()[(0, 0)], cp.h2()[(0, 1)], cp.h2()[(1, 0)], cp.h2()[(1, 1)]);
    let beta = match topology {
        Topology::S => -c * ud1 * s2u / (vd1 * s2v),
        Topology::Z => -c * ud2 * s1u / (vd2 * s1v),
        Topology::X => 0.0,
    };
    let mut k = RelayKernel::scalar(c, beta)?;
    k.scale = c;
    k.label = topology.into();
    Ok(k)
}

/// The three scalar kernels in phase order.
pub fn scalar_phase_kernels(cp: &ChannelPair) -> Result<[RelayKernel; 3]> {
    Ok([
        scalar_kernel(cp, PHASE_TOPOLOGIES[0])?,
        scalar_kernel(cp, PHASE_TOPOLOGIES[1])?,
        scalar_kernel(cp, PHASE_TOPOLOGIES[2])?,
    ])
}

/// Which source/destination indices play which role in a nulling problem.
struct Roles {
    /// Destination that must see no interference.
    clean_dst: usize,
    /// Source nulled at `clean_dst`.
    nulled_src: usize,
    /// Destination receiving the single leak.
    other_dst: usize,
    /// Source leaking into `other_dst`.
    leak_src: usize,
    /// `(row, col)` of the only nonzero entry of the leak block.
    leak_entry: (usize, usize),
}

fn roles(topology: Topology, m: usize, s1_col: usize) -> Roles {
    match topology {
        Topology::S | Topology::X => Roles {
            clean_dst: 1,
            nulled_src: 2,
            other_dst: 2,
            leak_src: 1,
            leak_entry: (0, if topology == Topology::S { m - 1 } else { s1_col }),
        },
        Topology::Z => Roles { clean_dst: 2, nulled_src: 1, other_dst: 1, leak_src: 2, leak_entry: (m - 1, 0) },
    }
}

fn inv(m: &Matrix, what: &str) -> Result<Matrix> {
    try_inverse(m).ok_or_else(|| Error::ConditionViolation(format!("{what} is singular")))
}

/// Source-side blocks `(H_{s_j u}, H_{s_j v})` for `j = 1, 2` in the
/// coordinates a topology is posed in.
fn source_blocks(cp: &ChannelPair, topology: Topology, variant: SwapVariant) -> Result<([Matrix; 2], [Matrix; 2], usize)> {
    if topology == Topology::X {
        let ms = modified_source_channels(cp, variant)?;
        Ok(([ms.s1u, ms.s2u], [ms.s1v, ms.s2v], ms.s1_col))
    } else {
        Ok(([cp.s1u(), cp.s2u()], [cp.s1v(), cp.s2v()], cp.m() - 1))
    }
}

/// Unscaled `(A, B)` with the topology's null and the leak block equal to the
/// unit pattern.
pub fn mimo_raw_kernel(cp: &ChannelPair, topology: Topology, variant: SwapVariant) -> Result<(Matrix, Matrix)> {
    cp.require_real()?;
    let m = cp.m();
    let (su, sv, s1_col) = source_blocks(cp, topology, variant)?;
    let r = roles(topology, m, s1_col);
    let (dc, sn, dn, sl) = (r.clean_dst, r.nulled_src, r.other_dst, r.leak_src);

    let u_dc_inv = inv(&cp.u_dst(dc), "H_{u,clean}")?;
    let v_do_inv = inv(&cp.v_dst(dn), "H_{v,other}")?;
    let sl_u_inv = inv(&su[sl - 1], "H_{leak,u}")?;
    let sn_u_inv = inv(&su[sn - 1], "H_{nulled,u}")?;
    let sn_v_inv = inv(&sv[sn - 1], "H_{nulled,v}")?;
    inv(&cp.v_dst(dc), "H_{v,clean}")?;
    inv(&cp.u_dst(dn), "H_{u,other}")?;
    inv(&sv[sl - 1], "H_{leak,v}")?;

    let rr = &sl_u_inv * &su[sn - 1] * &sn_v_inv;
    let syl_a = &sv[sl - 1] * &rr;
    let syl_b = &v_do_inv * cp.u_dst(dn) * &u_dc_inv * cp.v_dst(dc);
    let (row, col) = r.leak_entry;
    let q: DVector<f64> = v_do_inv.column(row).into_owned();
    let p: DVector<f64> = rr.row(col).transpose();
    let c = &q * p.transpose();

    let separation = eigen_separation(&syl_a, &syl_b)?;
    if separation < EIGEN_COLLISION_THRESHOLD {
        return Err(Error::EigenvalueCollision { separation, threshold: EIGEN_COLLISION_THRESHOLD });
    }
    if !krylov_full_rank(&syl_a.transpose(), &p)? || !krylov_full_rank(&syl_b, &q)? {
        return Err(Error::SingularConstruction(format!("{topology:?}: Krylov condition fails, B would be singular")));
    }
    let b = solve_sylvester(&SylvesterProblem::new(syl_a, syl_b, c)?)?;
    let a = -(&u_dc_inv * cp.v_dst(dc) * &b * &sv[sn - 1] * &sn_u_inv);
    Ok((a, b))
}

/// Outcome of checking a kernel against its declared topology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyCheck {
    pub topology: Topology,
    /// `‖G_null‖_F / max_ij ‖G_ij‖_F`.
    pub null_residual: f64,
    /// `‖G_leak − scale·E‖_F / max_ij ‖G_ij‖_F`, `E` the unit leak pattern.
    pub leak_pattern_residual: f64,
    pub leak_rank: usize,
    pub direct_ranks: (usize, usize),
}

impl TopologyCheck {
    pub fn passes(&self, m: usize) -> bool {
        self.null_residual <= CONSTRUCTION_TOL
            && self.leak_pattern_residual <= CONSTRUCTION_TOL
            && self.leak_rank == 1
            && self.direct_ranks == (m, m)
    }
}

/// Checks a MIMO kernel against the null/leak/rank pattern of `topology`
/// (posed on the regrouped sources for X).
pub fn check_mimo_topology(
    cp: &ChannelPair,
    k: &RelayKernel,
    topology: Topology,
    variant: SwapVariant,
) -> Result<TopologyCheck> {
    check_kernel_dim(cp, k)?;
    let m = cp.m();
    let (su, sv, s1_col) = source_blocks(cp, topology, variant)?;
    let r = roles(topology, m, s1_col);
    let g = |i: usize, j: usize| effective(&cp.u_dst(i), &cp.v_dst(i), &su[j - 1], &sv[j - 1], &k.a, &k.b);
    let blocks = [[g(1, 1), g(1, 2)], [g(2, 1), g(2, 2)]];
    let scale_norm = blocks.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let null = &blocks[r.clean_dst - 1][r.nulled_src - 1];
    let leak = &blocks[r.other_dst - 1][r.leak_src - 1];
    let mut pattern = Matrix::zeros(m, m);
    pattern[r.leak_entry] = k.scale;
    Ok(TopologyCheck {
        topology,
        null_residual: null.norm() / scale_norm,
        leak_pattern_residual: (leak - pattern).norm() / scale_norm,
        leak_rank: rank(leak)?,
        direct_ranks: (rank(&blocks[0][0])?, rank(&blocks[1][1])?),
    })
}

/// Common power constant `d` for a set of unscaled kernels.
pub fn mimo_power_constant(cp: &ChannelPair, raw: &[(Matrix, Matrix)]) -> f64 {
    let m = cp.m() as f64;
    let l = raw.iter().flat_map(|(a, b)| [operator_norm(a), operator_norm(b)]).fold(0.0, f64::max);
    let u_load = operator_norm(&cp.s1u()).powi(2) + operator_norm(&cp.s2u()).powi(2) + m;
    let v_load = operator_norm(&cp.s1v()).powi(2) + operator_norm(&cp.s2v()).powi(2) + m;
    ((1.0 / u_load).sqrt() / l).min((1.0 / v_load).sqrt() / l)
}

/// S, Z and X kernels in phase order, sharing one power constant and each
/// verified against its pattern.
pub fn mimo_phase_kernels(cp: &ChannelPair, variant: SwapVariant) -> Result<[RelayKernel; 3]> {
    let raw = PHASE_TOPOLOGIES
        .iter()
        .map(|&t| mimo_raw_kernel(cp, t, variant))
        .collect::<Result<Vec<_>>>()?;
    let d = mimo_power_constant(cp, &raw);
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::SingularConstruction(format!("power constant {d}")));
    }
    let mut out = Vec::with_capacity(3);
    for ((a, b), &t) in raw.into_iter().zip(PHASE_TOPOLOGIES.iter()) {
        let k = RelayKernel::new(a * d, b * d, d, t.into())?;
        let check = check_mimo_topology(cp, &k, t, variant)?;
        if !check.passes(cp.m()) {
            return Err(Error::SingularConstruction(format!("{t:?} kernel fails verification: {check:?}")));
        }
        out.push(k);
    }
    Ok(out.try_into().expect("three kernels"))
}

/// One verified MIMO kernel, scaled by the common power constant of the
/// three-phase set.
pub fn mimo_kernel(cp: &ChannelPair, topology: Topology) -> Result<RelayKernel> {
    mimo_kernel_with(cp, topology, SwapVariant::RealLastFirst)
}

pub fn mimo_kernel_with(cp: &ChannelPair, topology: Topology, variant: SwapVariant) -> Result<RelayKernel> {
    let kernels = mimo_phase_kernels(cp, variant)?;
    let idx = PHASE_TOPOLOGIES.iter().position(|&t| t == topology).expect("topology in phase table");
    Ok(kernels[idx].clone())
}

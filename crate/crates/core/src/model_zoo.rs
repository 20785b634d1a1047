//! Kernel matrices `K` for quadratic lattice Hamiltonians `H = sum_ij c_i^dag K_ij c_j`.
//!
//! Sites are grouped into unit cells; the mode index of `(cell, sublattice)`
//! is `cell * orbitals + sublattice`. Two-dimensional lattices are flattened
//! row-major with x fastest. Periodic chains may carry a boundary twist
//! `phi`: hoppings that cross the wrap bond in the +x direction pick up
//! `exp(i phi)`, so the allowed momenta become `(2 pi m + phi) / N`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use ndarray::{arr2, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Position,
    Momentum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteLabel {
    pub cell: usize,
    pub sublattice: usize,
}

#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub entries: CMat,
    pub bc: Boundary,
    pub basis: Basis,
    pub site_labels: Vec<SiteLabel>,
    /// Extent of the cell lattice along each axis (one or two axes).
    pub shape: Vec<usize>,
    pub orbitals: usize,
    /// Boundary twist on the x axis (radians); zero unless requested.
    pub twist: f64,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// Wrap an arbitrary square matrix as an open-boundary kernel with one
    /// mode per cell.
    pub fn from_matrix(entries: CMat) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::Size(format!(
                "kernel must be square and nonempty, got {:?}",
                entries.dim()
            )));
        }
        crate::linalg::check_finite(&entries)?;
        Ok(KernelMatrix {
            entries,
            bc: Boundary::Open,
            basis: Basis::Position,
            site_labels: (0..n).map(|i| SiteLabel { cell: i, sublattice: 0 }).collect(),
            shape: vec![n],
            orbitals: 1,
            twist: 0.0,
        })
    }

    /// Momenta of the cell lattice along x, `(2 pi m + twist) / N`.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.shape[0];
        (0..n)
            .map(|m| (2.0 * PI * m as f64 + self.twist) / n as f64)
            .collect()
    }
}

/// Accumulates kernel entries on a one-dimensional cell lattice.
struct Chain {
    k: CMat,
    cells: usize,
    orb: usize,
    bc: Boundary,
    phase: C64,
}

impl Chain {
    fn new(cells: usize, orb: usize, bc: Boundary, twist: f64) -> Self {
        Chain {
            k: CMat::zeros((cells * orb, cells * orb)),
            cells,
            orb,
            bc,
            phase: C64::from_polar(1.0, twist),
        }
    }

    /// `K[(x, a), (x + r, b)] += v`; silently dropped if the bond leaves an
    /// open chain.
    fn add(&mut self, x: usize, a: usize, r: i64, b: usize, v: C64) {
        let n = self.cells as i64;
        let y = x as i64 + r;
        let (y, v) = if y >= n {
            if self.bc == Boundary::Open {
                return;
            }
            (y - n, v * self.phase)
        } else if y < 0 {
            if self.bc == Boundary::Open {
                return;
            }
            (y + n, v * self.phase.conj())
        } else {
            (y, v)
        };
        let i = x * self.orb + a;
        let j = y as usize * self.orb + b;
        self.k[[i, j]] += v;
    }

    /// Nearest-cell block hopping: `K[x, x+1] += fwd`, `K[x+1, x] += bwd` for
    /// every bond of the chain, plus the on-site block.
    fn translation_invariant(&mut self, onsite: &CMat, fwd: &CMat, bwd: &CMat) {
        let o = self.orb;
        for x in 0..self.cells {
            for a in 0..o {
                for b in 0..o {
                    if onsite[[a, b]] != ZERO {
                        self.add(x, a, 0, b, onsite[[a, b]]);
                    }
                    if fwd[[a, b]] != ZERO {
                        self.add(x, a, 1, b, fwd[[a, b]]);
                    }
                    if bwd[[a, b]] != ZERO {
                        self.add(x, a, -1, b, bwd[[a, b]]);
                    }
                }
            }
        }
    }

    fn finish(self) -> KernelMatrix {
        let orb = self.orb;
        let twist = if self.bc == Boundary::Periodic {
            self.phase.arg()
        } else {
            0.0
        };
        KernelMatrix {
            site_labels: (0..self.cells * orb)
                .map(|i| SiteLabel { cell: i / orb, sublattice: i % orb })
                .collect(),
            entries: self.k,
            bc: self.bc,
            basis: Basis::Position,
            shape: vec![self.cells],
            orbitals: orb,
            twist,
        }
    }
}

pub fn sigma_x() -> CMat {
    arr2(&[[ZERO, ONE], [ONE, ZERO]])
}

pub fn sigma_y() -> CMat {
    arr2(&[[ZERO, -I], [I, ZERO]])
}

pub fn sigma_z() -> CMat {
    arr2(&[[ONE, ZERO], [ZERO, -ONE]])
}

fn pauli(x: C64, y: C64, z: C64) -> CMat {
    sigma_x() * x + sigma_y() * y + sigma_z() * z
}

fn need_len(l: usize, min: usize, what: &str) -> Result<()> {
    if l < min {
        Err(Error::Size(format!("{what} must be at least {min}, got {l}")))
    } else {
        Ok(())
    }
}

pub fn build_hatano_nelson(l: usize, t: f64, alpha: f64, bc: Boundary) -> Result<KernelMatrix> {
    build_hatano_nelson_twisted(l, t, alpha, bc, 0.0)
}

pub fn build_hatano_nelson_twisted(
    l: usize,
    t: f64,
    alpha: f64,
    bc: Boundary,
    twist: f64,
) -> Result<KernelMatrix> {
    need_len(l, 2, "chain length")?;
    let mut ch = Chain::new(l, 1, bc, twist);
    let fwd = Array2::from_elem((1, 1), c(-t * alpha.exp(), 0.0));
    let bwd = Array2::from_elem((1, 1), c(-t * (-alpha).exp(), 0.0));
    ch.translation_invariant(&CMat::zeros((1, 1)), &fwd, &bwd);
    Ok(ch.finish())
}

pub fn hatano_nelson_bloch(k: f64, t: f64, alpha: f64) -> C64 {
    -t * (alpha.exp() * C64::from_polar(1.0, k) + (-alpha).exp() * C64::from_polar(1.0, -k))
}

/// Non-Hermitian SSH chain: cell `x` holds sites `2x` (gain `+iu`) and
/// `2x + 1` (loss `-iu`); `omega` couples `2x, 2x+1` and `upsilon` couples
/// `2x+1, 2x+2`.
pub fn build_nh_ssh_real(
    n_cells: usize,
    omega: f64,
    upsilon: f64,
    u: f64,
    bc: Boundary,
) -> Result<KernelMatrix> {
    build_nh_ssh_twisted(n_cells, omega, upsilon, u, bc, 0.0)
}

pub fn build_nh_ssh_twisted(
    n_cells: usize,
    omega: f64,
    upsilon: f64,
    u: f64,
    bc: Boundary,
    twist: f64,
) -> Result<KernelMatrix> {
    need_len(n_cells, 2, "cell count")?;
    let mut ch = Chain::new(n_cells, 2, bc, twist);
    let onsite = arr2(&[[c(0.0, u), c(omega, 0.0)], [c(omega, 0.0), c(0.0, -u)]]);
    let mut fwd = CMat::zeros((2, 2));
    fwd[[1, 0]] = c(upsilon, 0.0);
    let bwd = fwd.t().to_owned();
    ch.translation_invariant(&onsite, &fwd, &bwd);
    Ok(ch.finish())
}

/// Bloch matrix `[[iu, v_k], [v_k*, -iu]]`, `v_k = omega e^{-ik} + upsilon`,
/// with eigenvalues `+sqrt(|v_k|^2 - u^2)` and its negative.
pub fn build_nh_ssh_bloch(k: f64, omega: f64, upsilon: f64, u: f64) -> (CMat, [C64; 2]) {
    let vk = omega * C64::from_polar(1.0, -k) + upsilon;
    let m = arr2(&[[c(0.0, u), vk], [vk.conj(), c(0.0, -u)]]);
    let e = c(vk.norm_sqr() - u * u, 0.0).sqrt();
    (m, [e, -e])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuasiPotential {
    ExpPhase,
    MobilityEdge { a: f64 },
}

/// Rational approximant `p/q` for an incommensurate modulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approximant {
    pub p: u64,
    pub q: u64,
}

impl Approximant {
    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// `F_{n-1}/F_n` when `q` is a Fibonacci number (approximates the
    /// inverse golden ratio).
    pub fn fibonacci(q: u64) -> Option<Self> {
        let (mut a, mut b) = (1u64, 1u64);
        while b < q {
            let next = a + b;
            a = b;
            b = next;
        }
        (b == q && q >= 2).then_some(Approximant { p: a, q })
    }
}

/// Quasiperiodic chain with `J_R` on `c_{n+1}^dag c_n`, `J_L` on
/// `c_n^dag c_{n+1}` and an on-site potential set by `potential`.
pub fn build_quasicrystal(
    l: usize,
    j_l: f64,
    j_r: f64,
    v: f64,
    approximant: Approximant,
    potential: QuasiPotential,
    bc: Boundary,
) -> Result<KernelMatrix> {
    need_len(l, 2, "chain length")?;
    if approximant.q == 0 {
        return Err(Error::InvalidParameter("approximant denominator is zero".into()));
    }
    if bc == Boundary::Periodic && approximant.q as usize != l {
        return Err(Error::InvalidParameter(format!(
            "periodic quasicrystal needs q = L, got q = {} and L = {l}",
            approximant.q
        )));
    }
    let alpha = approximant.value();
    let mut ch = Chain::new(l, 1, bc, 0.0);
    let fwd = Array2::from_elem((1, 1), c(j_l, 0.0));
    let bwd = Array2::from_elem((1, 1), c(j_r, 0.0));
    ch.translation_invariant(&CMat::zeros((1, 1)), &fwd, &bwd);
    let mut km = ch.finish();
    for n in 0..l {
        let theta = 2.0 * PI * alpha * n as f64;
        km.entries[[n, n]] += match potential {
            QuasiPotential::ExpPhase => v * C64::from_polar(1.0, -theta),
            QuasiPotential::MobilityEdge { a } => {
                let den = ONE - a * C64::from_polar(1.0, theta);
                if den.norm() < 1e-12 {
                    return Err(Error::SingularPotential { site: n });
                }
                v / den
            }
        };
    }
    Ok(km)
}

/// Chain with `n` sites per cell. The first bond of each cell is
/// nonreciprocal: `1 + gamma/2` on `c_i^dag c_{i+1}` and `1 - gamma/2` on
/// `c_{i+1}^dag c_i`; every other bond has amplitude `t`.
pub fn build_guo_chain(l: usize, n: usize, t: f64, gamma: f64, bc: Boundary) -> Result<KernelMatrix> {
    if n == 0 || l % n != 0 || l < 2 {
        return Err(Error::Size(format!(
            "chain length {l} must be a positive multiple of the cell size {n}"
        )));
    }
    let cells = l / n;
    let (onsite, fwd, bwd) = guo_blocks(n, t, gamma);
    let mut ch = Chain::new(cells, n, bc, 0.0);
    ch.translation_invariant(&onsite, &fwd, &bwd);
    Ok(ch.finish())
}

fn guo_blocks(n: usize, t: f64, gamma: f64) -> (CMat, CMat, CMat) {
    let tl = c(1.0 + gamma / 2.0, 0.0);
    let tr = c(1.0 - gamma / 2.0, 0.0);
    let tt = c(t, 0.0);
    let mut onsite = CMat::zeros((n, n));
    for s in 0..n.saturating_sub(1) {
        let (f, b) = if s == 0 { (tl, tr) } else { (tt, tt) };
        onsite[[s, s + 1]] = f;
        onsite[[s + 1, s]] = b;
    }
    let mut fwd = CMat::zeros((n, n));
    let mut bwd = CMat::zeros((n, n));
    let (f, b) = if n == 1 { (tl, tr) } else { (tt, tt) };
    fwd[[n - 1, 0]] = f;
    bwd[[0, n - 1]] = b;
    (onsite, fwd, bwd)
}

pub fn guo_chain_bloch(k: f64, n: usize, t: f64, gamma: f64) -> CMat {
    let (h0, h1, hm1) = guo_blocks(n, t, gamma);
    h0 + h1 * C64::from_polar(1.0, k) + hm1 * C64::from_polar(1.0, -k)
}

/// Two-dimensional lattice dimerized along both axes. Along each axis the
/// bond from (0-indexed) even coordinate `2i` to `2i + 1` carries
/// `1 + gamma/2` forward and `1 - gamma/2` backward; the remaining bonds
/// are symmetric with unit amplitude.
pub fn build_guo_2d(lx: usize, ly: usize, gamma: f64, bc: Boundary) -> Result<KernelMatrix> {
    if lx < 2 || ly < 2 || lx % 2 != 0 || ly % 2 != 0 {
        return Err(Error::Size(format!("Lx and Ly must be even, got {lx} x {ly}")));
    }
    let n = lx * ly;
    let idx = |x: usize, y: usize| x + lx * y;
    let tl = c(1.0 + gamma / 2.0, 0.0);
    let tr = c(1.0 - gamma / 2.0, 0.0);
    let mut k = CMat::zeros((n, n));
    let bond = |k: &mut CMat, s: usize, a: usize, b: usize| {
        let (f, bw) = if s % 2 == 0 { (tl, tr) } else { (ONE, ONE) };
        k[[a, b]] += f;
        k[[b, a]] += bw;
    };
    for y in 0..ly {
        for x in 0..lx {
            if x + 1 < lx || bc == Boundary::Periodic {
                bond(&mut k, x, idx(x, y), idx((x + 1) % lx, y));
            }
            if y + 1 < ly || bc == Boundary::Periodic {
                bond(&mut k, y, idx(x, y), idx(x, (y + 1) % ly));
            }
        }
    }
    Ok(KernelMatrix {
        entries: k,
        bc,
        basis: Basis::Position,
        site_labels: (0..n).map(|i| SiteLabel { cell: i, sublattice: 0 }).collect(),
        shape: vec![lx, ly],
        orbitals: 1,
        twist: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// Chern insulator `H_k = (m + t cos kx + t cos ky) sx + (i gamma + t sin kx) sy
/// + t sin ky sz` on a ribbon. `cut_axis` is the direction that stays
/// momentum-resolved (with momentum `k_perp`); the other axis is open with
/// `l` sites.
pub fn build_chern_ribbon(
    l: usize,
    k_perp: f64,
    t: f64,
    m: f64,
    gamma: f64,
    cut_axis: Axis,
) -> Result<KernelMatrix> {
    need_len(l, 2, "ribbon width")?;
    let (cp, sp) = (k_perp.cos(), k_perp.sin());
    let half = c(t / 2.0, 0.0);
    let odd = c(0.0, -t / 2.0); // t / (2i)
    let (onsite, fwd, bwd) = match cut_axis {
        Axis::X => (
            pauli(c(m + t * cp, 0.0), c(t * sp, gamma), ZERO),
            pauli(half, ZERO, odd),
            pauli(half, ZERO, -odd),
        ),
        Axis::Y => (
            pauli(c(m + t * cp, 0.0), c(0.0, gamma), c(t * sp, 0.0)),
            pauli(half, odd, ZERO),
            pauli(half, -odd, ZERO),
        ),
    };
    let mut ch = Chain::new(l, 2, Boundary::Open, 0.0);
    ch.translation_invariant(&onsite, &fwd, &bwd);
    Ok(ch.finish())
}

pub fn chern_bloch(kx: f64, ky: f64, t: f64, m: f64, gamma: f64) -> CMat {
    pauli(
        c(m + t * kx.cos() + t * ky.cos(), 0.0),
        c(t * kx.sin(), gamma),
        c(t * ky.sin(), 0.0),
    )
}

/// Generalized non-Hermitian SSH chain with Bloch form
/// `(nu - w cos k) sx + gamma0 sin k sy + i (nu - w) sz`. With `swap_yz` the
/// `sy` and `sz` labels are exchanged before the inverse Fourier transform,
/// giving `(nu - w cos k) sx + i (nu - w) sy + gamma0 sin k sz`.
pub fn build_eb_ssh(
    n_cells: usize,
    nu: f64,
    w: f64,
    gamma0: f64,
    bc: Boundary,
) -> Result<KernelMatrix> {
    build_eb_ssh_with(n_cells, nu, w, gamma0, bc, true, 0.0)
}

pub fn build_eb_ssh_with(
    n_cells: usize,
    nu: f64,
    w: f64,
    gamma0: f64,
    bc: Boundary,
    swap_yz: bool,
    twist: f64,
) -> Result<KernelMatrix> {
    need_len(n_cells, 2, "cell count")?;
    let (onsite, fwd, bwd) = eb_blocks(nu, w, gamma0, swap_yz);
    let mut ch = Chain::new(n_cells, 2, bc, twist);
    ch.translation_invariant(&onsite, &fwd, &bwd);
    Ok(ch.finish())
}

fn eb_blocks(nu: f64, w: f64, gamma0: f64, swap_yz: bool) -> (CMat, CMat, CMat) {
    let mass = c(0.0, nu - w);
    let odd = c(0.0, -gamma0 / 2.0); // gamma0 / (2i)
    let hw = c(-w / 2.0, 0.0);
    if swap_yz {
        (
            pauli(c(nu, 0.0), mass, ZERO),
            pauli(hw, ZERO, odd),
            pauli(hw, ZERO, -odd),
        )
    } else {
        (
            pauli(c(nu, 0.0), ZERO, mass),
            pauli(hw, odd, ZERO),
            pauli(hw, -odd, ZERO),
        )
    }
}

pub fn eb_ssh_bloch(k: f64, nu: f64, w: f64, gamma0: f64, swap_yz: bool) -> CMat {
    let x = c(nu - w * k.cos(), 0.0);
    let s = c(gamma0 * k.sin(), 0.0);
    let mass = c(0.0, nu - w);
    if swap_yz {
        pauli(x, mass, s)
    } else {
        pauli(x, s, mass)
    }
}

/// Effective kernel of the continuously monitored chain: per bond,
/// `(Gamma - t)/4` on `c_i^dag c_{i+1}`, `-(t + Gamma)/4` on
/// `c_{i+1}^dag c_i`, and `-i Gamma/4` on both end sites.
pub fn build_measurement_heff(l: usize, t: f64, gamma: f64, bc: Boundary) -> Result<KernelMatrix> {
    need_len(l, 2, "chain length")?;
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!("Gamma must be non-negative, got {gamma}")));
    }
    let mut ch = Chain::new(l, 1, bc, 0.0);
    let bonds = if bc == Boundary::Periodic { l } else { l - 1 };
    for x in 0..bonds {
        ch.add(x, 0, 1, 0, c((gamma - t) / 4.0, 0.0));
        let y = (x + 1) % l;
        ch.add(y, 0, -1, 0, c(-(t + gamma) / 4.0, 0.0));
        ch.add(x, 0, 0, 0, c(0.0, -gamma / 4.0));
        ch.add(y, 0, 0, 0, c(0.0, -gamma / 4.0));
    }
    Ok(ch.finish())
}

pub fn measurement_bloch(k: f64, t: f64, gamma: f64) -> C64 {
    c(0.0, -gamma / 2.0)
        + (gamma - t) / 4.0 * C64::from_polar(1.0, k)
        - (t + gamma) / 4.0 * C64::from_polar(1.0, -k)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Jump {
    /// `L = sum_j u_j c_j`.
    Linear(Vec<C64>),
    /// `P = xi^dag xi` with `xi^dag = sum_j xi_j c_j^dag`, `|xi| = 1`.
    Projector(Vec<C64>),
}

/// `H_eff = H - (i/2) sum_i Gamma_i L_i^dag L_i` for linear or projector jumps.
pub fn build_heff_from_jumps(h: &KernelMatrix, jumps: &[Jump], rates: &[f64]) -> Result<KernelMatrix> {
    if jumps.len() != rates.len() {
        return Err(Error::InvalidParameter(format!(
            "{} jumps but {} rates",
            jumps.len(),
            rates.len()
        )));
    }
    let n = h.dim();
    let mut out = h.clone();
    for (jump, &rate) in jumps.iter().zip(rates) {
        if rate < 0.0 {
            return Err(Error::InvalidParameter(format!("negative rate {rate}")));
        }
        let pref = c(0.0, -0.5 * rate);
        let (v, conj_outer) = match jump {
            Jump::Linear(u) => (u, true),
            Jump::Projector(xi) => {
                let norm = xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::Normalization { norm });
                }
                (xi, false)
            }
        };
        if v.len() != n {
            return Err(Error::Size(format!("jump vector has length {}, kernel has {n} modes", v.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let outer = v[i] * v[j].conj();
                let w = if conj_outer { outer.conj() } else { outer };
                out.entries[[i, j]] += pref * w;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    HatanoNelson,
    NhSsh,
    Quasicrystal,
    GuoChain,
    Guo2d,
    ChernRibbon,
    EbSsh,
    MeasurementHeff,
}

pub struct FamilyInfo {
    pub name: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [(&'static str, f64)],
    pub length: &'static str,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::HatanoNelson,
        Family::NhSsh,
        Family::Quasicrystal,
        Family::GuoChain,
        Family::Guo2d,
        Family::ChernRibbon,
        Family::EbSsh,
        Family::MeasurementHeff,
    ];

    pub fn info(self) -> FamilyInfo {
        match self {
            Family::HatanoNelson => FamilyInfo {
                name: "hatano_nelson",
                required: &["t", "alpha"],
                optional: &[("flux", 0.0)],
                length: "sites",
            },
            Family::NhSsh => FamilyInfo {
                name: "nh_ssh",
                required: &["omega", "upsilon", "u"],
                optional: &[("flux", 0.0)],
                length: "unit cells (2 sites each)",
            },
            Family::Quasicrystal => FamilyInfo {
                name: "quasicrystal",
                required: &["J_L", "J_R", "V"],
                optional: &[("a", 0.0)],
                length: "sites",
            },
            Family::GuoChain => FamilyInfo {
                name: "guo_chain",
                required: &["gamma"],
                optional: &[("t", 1.0)],
                length: "sites (multiple of `sublattices`)",
            },
            Family::Guo2d => FamilyInfo {
                name: "guo_2d",
                required: &["gamma"],
                optional: &[],
                length: "sites along x (`width` along y)",
            },
            Family::ChernRibbon => FamilyInfo {
                name: "chern_ribbon",
                required: &["t", "m", "gamma", "k_perp"],
                optional: &[],
                length: "sites along the open axis (2 orbitals each)",
            },
            Family::EbSsh => FamilyInfo {
                name: "eb_ssh",
                required: &["nu", "w", "gamma0"],
                optional: &[("flux", 0.0)],
                length: "unit cells (2 sites each)",
            },
            Family::MeasurementHeff => FamilyInfo {
                name: "measurement_heff",
                required: &["t", "Gamma"],
                optional: &[],
                length: "sites",
            },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.info().name)
    }
}

fn default_true() -> bool {
    true
}

/// Serializable model description; `build` validates the parameter set
/// against the family and dispatches to the matching builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub length: usize,
    pub bc: Boundary,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Second lattice extent (`guo_2d`).
    #[serde(default)]
    pub width: Option<usize>,
    /// Sites per unit cell (`guo_chain`).
    #[serde(default)]
    pub sublattices: Option<usize>,
    /// `[p, q]`; defaults to the Fibonacci approximant with `q = length`.
    #[serde(default)]
    pub approximant: Option<[u64; 2]>,
    #[serde(default)]
    pub potential: Option<QuasiPotentialKind>,
    #[serde(default)]
    pub cut_axis: Option<Axis>,
    #[serde(default = "default_true")]
    pub swap_yz: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasiPotentialKind {
    ExpPhase,
    MobilityEdge,
}

impl ModelSpec {
    pub fn new(family: Family, length: usize, bc: Boundary) -> Self {
        ModelSpec {
            family,
            length,
            bc,
            params: BTreeMap::new(),
            width: None,
            sublattices: None,
            approximant: None,
            potential: None,
            cut_axis: None,
            swap_yz: true,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// Checks parameter names against the family and returns the complete
    /// parameter set with optional defaults filled in.
    pub fn resolved_params(&self) -> Result<BTreeMap<String, f64>> {
        let info = self.family.info();
        for name in self.params.keys() {
            let known = info.required.contains(&name.as_str())
                || info.optional.iter().any(|(o, _)| o == name);
            if !known {
                return Err(Error::UnknownParameter {
                    family: info.name.into(),
                    param: name.clone(),
                });
            }
        }
        let mut out = BTreeMap::new();
        for &name in info.required {
            let v = self.params.get(name).ok_or_else(|| Error::MissingParameter {
                family: info.name.into(),
                param: name.into(),
            })?;
            out.insert(name.to_string(), *v);
        }
        for &(name, default) in info.optional {
            out.insert(name.to_string(), *self.params.get(name).unwrap_or(&default));
        }
        for (name, v) in &out {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not finite")));
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<KernelMatrix> {
        let p = self.resolved_params()?;
        let g = |name: &str| p[name];
        let l = self.length;
        match self.family {
            Family::HatanoNelson => build_hatano_nelson_twisted(l, g("t"), g("alpha"), self.bc, g("flux")),
            Family::NhSsh => build_nh_ssh_twisted(l, g("omega"), g("upsilon"), g("u"), self.bc, g("flux")),
            Family::Quasicrystal => {
                let approx = match self.approximant {
                    Some([p, q]) => Approximant { p, q },
                    None => Approximant::fibonacci(l as u64).ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "length {l} is not a Fibonacci number; give `approximant` explicitly"
                        ))
                    })?,
                };
                let potential = match self.potential.unwrap_or(QuasiPotentialKind::ExpPhase) {
                    QuasiPotentialKind::ExpPhase => {
                        if self.params.contains_key("a") {
                            return Err(Error::UnknownParameter {
                                family: "quasicrystal (exp_phase)".into(),
                                param: "a".into(),
                            });
                        }
                        QuasiPotential::ExpPhase
                    }
                    QuasiPotentialKind::MobilityEdge => {
                        let a = self.params.get("a").ok_or_else(|| Error::MissingParameter {
                            family: "quasicrystal (mobility_edge)".into(),
                            param: "a".into(),
                        })?;
                        QuasiPotential::MobilityEdge { a: *a }
                    }
                };
                build_quasicrystal(l, g("J_L"), g("J_R"), g("V"), approx, potential, self.bc)
            }
            Family::GuoChain => {
                let n = self.sublattices.ok_or_else(|| Error::MissingParameter {
                    family: "guo_chain".into(),
                    param: "sublattices".into(),
                })?;
                build_guo_chain(l, n, g("t"), g("gamma"), self.bc)
            }
            Family::Guo2d => {
                let ly = self.width.ok_or_else(|| Error::MissingParameter {
                    family: "guo_2d".into(),
                    param: "width".into(),
                })?;
                build_guo_2d(l, ly, g("gamma"), self.bc)
            }
            Family::ChernRibbon => {
                if self.bc != Boundary::Open {
                    return Err(Error::InvalidParameter("chern_ribbon is open along its real-space axis".into()));
                }
                build_chern_ribbon(
                    l,
                    g("k_perp"),
                    g("t"),
                    g("m"),
                    g("gamma"),
                    self.cut_axis.unwrap_or(Axis::X),
                )
            }
            Family::EbSsh => build_eb_ssh_with(l, g("nu"), g("w"), g("gamma0"), self.bc, self.swap_yz, g("flux")),
            Family::MeasurementHeff => build_measurement_heff(l, g("t"), g("Gamma"), self.bc),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigvals, is_hermitian, max_abs_diff, multiset_distance};
    use ndarray::Array1;

    fn hermitian_limit(k: &KernelMatrix) -> bool {
        is_hermitian(&k.entries, 1e-14)
    }

    #[test]
    fn hermitian_limits() {
        use Boundary::*;
        assert!(hermitian_limit(&build_hatano_nelson(7, 1.0, 0.0, Periodic).unwrap()));
        assert!(hermitian_limit(&build_nh_ssh_real(4, 1.0, 0.6, 0.0, Periodic).unwrap()));
        let fib = Approximant::fibonacci(8).unwrap();
        assert!(hermitian_limit(
            &build_quasicrystal(8, 1.0, 1.0, 0.0, fib, QuasiPotential::ExpPhase, Periodic).unwrap()
        ));
        assert!(hermitian_limit(&build_guo_chain(8, 2, 1.0, 0.0, Periodic).unwrap()));
        assert!(hermitian_limit(&build_guo_2d(4, 4, 0.0, Periodic).unwrap()));
        assert!(hermitian_limit(&build_chern_ribbon(6, 0.3, 1.0, -1.0, 0.0, Axis::X).unwrap()));
        assert!(hermitian_limit(&build_chern_ribbon(6, 0.3, 1.0, -1.0, 0.0, Axis::Y).unwrap()));
        assert!(hermitian_limit(&build_eb_ssh(5, 1.0, 1.0, 0.7, Periodic).unwrap()));
        assert!(hermitian_limit(&build_measurement_heff(6, 1.0, 0.0, Periodic).unwrap()));
    }

    #[test]
    fn hatano_nelson_entries() {
        let k = build_hatano_nelson(4, 1.0, 0.0, Boundary::Open).unwrap();
        for x in 0..3 {
            assert_eq!(k.entries[[x, x + 1]], c(-1.0, 0.0));
            assert_eq!(k.entries[[x + 1, x]], c(-1.0, 0.0));
        }
        assert_eq!(k.entries[[0, 3]], ZERO);

        let k = build_hatano_nelson(3, 1.0, 0.5, Boundary::Open).unwrap();
        assert!((k.entries[[0, 1]].re + 0.5f64.exp()).abs() < 1e-15);
        assert!((k.entries[[1, 0]].re + (-0.5f64).exp()).abs() < 1e-15);
        assert!((k.entries[[1, 2]].re + 0.5f64.exp()).abs() < 1e-15);
        assert_eq!(k.entries[[2, 0]], ZERO);

        // L = 2 periodic: bulk and wrap bonds land on the same pair.
        let k = build_hatano_nelson(2, 1.0, 1.0, Boundary::Periodic).unwrap();
        let both = -(1f64.exp() + (-1f64).exp());
        assert!((k.entries[[0, 1]].re - both).abs() < 1e-14);
        assert!((k.entries[[1, 0]].re - both).abs() < 1e-14);
    }

    #[test]
    fn too_short_is_size_error() {
        assert!(matches!(build_hatano_nelson(1, 1.0, 0.0, Boundary::Open), Err(Error::Size(_))));
        assert!(matches!(build_guo_chain(9, 2, 1.0, 0.1, Boundary::Open), Err(Error::Size(_))));
        assert!(matches!(build_guo_2d(3, 4, 0.1, Boundary::Open), Err(Error::Size(_))));
    }

    #[test]
    fn nh_ssh_real_entries() {
        let k = build_nh_ssh_real(2, 1.0, 1.0, 0.0, Boundary::Open).unwrap();
        let uni = build_hatano_nelson(4, -1.0, 0.0, Boundary::Open).unwrap();
        assert_eq!(k.entries, uni.entries);

        let k = build_nh_ssh_real(2, 1.0, 0.5, 0.3, Boundary::Open).unwrap();
        let d: Vec<C64> = k.entries.diag().to_vec();
        assert_eq!(d, vec![c(0.0, 0.3), c(0.0, -0.3), c(0.0, 0.3), c(0.0, -0.3)]);
        assert_eq!(k.entries[[0, 1]], c(1.0, 0.0));
        assert_eq!(k.entries[[1, 2]], c(0.5, 0.0));
        assert_eq!(k.entries[[2, 1]], c(0.5, 0.0));
    }

    /// Bloch block of a real-space kernel, `sum_r K[(0,.), (r,.)] e^{ikr}`.
    fn bloch_of(k: &KernelMatrix, q: f64) -> CMat {
        let o = k.orbitals;
        let n = k.shape[0];
        let mut h = CMat::zeros((o, o));
        for y in 0..n {
            let r = if y > n / 2 { y as f64 - n as f64 } else { y as f64 };
            for a in 0..o {
                for b in 0..o {
                    h[[a, b]] += k.entries[[a, y * o + b]] * C64::from_polar(1.0, q * r);
                }
            }
        }
        h
    }

    #[test]
    fn nh_ssh_bloch_reduction() {
        let (w, v, u) = (1.0, 0.6, 0.25);
        let k = build_nh_ssh_real(8, w, v, u, Boundary::Periodic).unwrap();
        for q in k.momenta() {
            let h = bloch_of(&k, q);
            // The closed form uses the (2x+1, 2x+2) cell; the two are related
            // by k -> -k and the intra-cell gauge diag(1, e^{ik}).
            let g = arr2(&[[ONE, ZERO], [ZERO, C64::from_polar(1.0, q)]]);
            let gauged = g.t().mapv(|z| z.conj()).dot(&h).dot(&g);
            let (m, _) = build_nh_ssh_bloch(-q, w, v, u);
            assert!(max_abs_diff(gauged.view(), m.view()) < 1e-14);
        }
    }

    #[test]
    fn nh_ssh_bloch_values() {
        let (_, e) = build_nh_ssh_bloch(0.0, 1.0, 0.5, 0.3);
        assert!((e[0].re - (2.25f64 - 0.09).sqrt()).abs() < 1e-14);
        assert!((e[0].re - 1.4697).abs() < 1e-4);
        assert!((e[1] + e[0]).norm() < 1e-15);
        // |v_k| = u: exceptional point at k = pi for omega - upsilon = u.
        let (_, e) = build_nh_ssh_bloch(PI, 1.0, 0.5, 0.5);
        assert!(e[0].norm() < 1e-7 && e[1].norm() < 1e-7);
        let (_, e) = build_nh_ssh_bloch(0.7, 1.0, 0.5, 0.0);
        let vk = (C64::from_polar(1.0, -0.7) + 0.5).norm();
        assert!((e[0].re - vk).abs() < 1e-14 && e[0].im == 0.0);
    }

    #[test]
    fn quasicrystal_entries() {
        let a = Approximant { p: 2, q: 5 };
        let k = build_quasicrystal(5, 1.0, 1.0, 0.5, a, QuasiPotential::ExpPhase, Boundary::Periodic).unwrap();
        for n in 0..5 {
            let want = 0.5 * C64::from_polar(1.0, -2.0 * PI * 0.4 * n as f64);
            assert!((k.entries[[n, n]] - want).norm() < 1e-15);
        }
        let k = build_quasicrystal(5, 0.2, 0.9, 0.0, a, QuasiPotential::ExpPhase, Boundary::Open).unwrap();
        let hn_like = build_hatano_nelson(5, -(0.2f64 * 0.9).sqrt(), 0.5 * (0.2f64 / 0.9).ln(), Boundary::Open).unwrap();
        assert!(max_abs_diff(k.entries.view(), hn_like.entries.view()) < 1e-14);
        assert_eq!(k.entries[[1, 0]], c(0.9, 0.0));
        assert_eq!(k.entries[[0, 1]], c(0.2, 0.0));

        let k = build_quasicrystal(5, 1.0, 1.0, 1.0, a, QuasiPotential::MobilityEdge { a: 0.5 }, Boundary::Open).unwrap();
        assert!((k.entries[[0, 0]] - c(2.0, 0.0)).norm() < 1e-15);
        let err = build_quasicrystal(5, 1.0, 1.0, 1.0, a, QuasiPotential::MobilityEdge { a: 1.0 }, Boundary::Open);
        assert!(matches!(err, Err(Error::SingularPotential { site: 0 })));
        assert!(build_quasicrystal(6, 1.0, 1.0, 1.0, a, QuasiPotential::ExpPhase, Boundary::Periodic).is_err());
    }

    #[test]
    fn fibonacci_approximants() {
        assert_eq!(Approximant::fibonacci(144), Some(Approximant { p: 89, q: 144 }));
        assert_eq!(Approximant::fibonacci(8), Some(Approximant { p: 5, q: 8 }));
        assert_eq!(Approximant::fibonacci(100), None);
    }

    #[test]
    fn guo_chain_bonds() {
        let k = build_guo_chain(8, 2, 1.0, 0.4, Boundary::Periodic).unwrap();
        for i in 0..8 {
            let j = (i + 1) % 8;
            let (f, b) = (k.entries[[i, j]].re, k.entries[[j, i]].re);
            if i % 2 == 0 {
                assert!((f - 1.2).abs() < 1e-15 && (b - 0.8).abs() < 1e-15);
            } else {
                assert_eq!((f, b), (1.0, 1.0));
            }
        }
    }

    #[test]
    fn guo_chain_folded_band() {
        let k = build_guo_chain(64, 2, 1.0, 0.0, Boundary::Periodic).unwrap();
        let mut e: Vec<f64> = eigvals(&k.entries).unwrap().iter().map(|z| z.re).collect();
        e.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..64).map(|m| 2.0 * (2.0 * PI * m as f64 / 64.0).cos()).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn guo_2d_bonds_and_blocks() {
        let k = build_guo_2d(4, 4, 0.4, Boundary::Open).unwrap();
        let idx = |x: usize, y: usize| x + 4 * y;
        // Bond between 1-indexed sites 1 -> 2 along each axis.
        assert!((k.entries[[idx(0, 1), idx(1, 1)]].re - 1.2).abs() < 1e-15);
        assert!((k.entries[[idx(1, 1), idx(0, 1)]].re - 0.8).abs() < 1e-15);
        assert!((k.entries[[idx(2, 0), idx(2, 1)]].re - 1.2).abs() < 1e-15);
        assert!((k.entries[[idx(2, 1), idx(2, 0)]].re - 0.8).abs() < 1e-15);
        assert_eq!(k.entries[[idx(1, 0), idx(2, 0)]], ONE);
        assert_eq!(k.entries[[idx(2, 0), idx(1, 0)]], ONE);
        // A cut along y at fixed x separates Ly-site columns; each row y is a
        // chain, rows couple only through vertical bonds at equal x.
        for a in 0..16 {
            for b in 0..16 {
                if k.entries[[a, b]] != ZERO {
                    let (xa, ya, xb, yb) = (a % 4, a / 4, b % 4, b / 4);
                    assert!(xa == xb || ya == yb);
                }
            }
        }
    }

    #[test]
    fn measurement_entries() {
        let k = build_measurement_heff(3, 1.0, 0.5, Boundary::Open).unwrap();
        let d: Vec<C64> = k.entries.diag().to_vec();
        assert_eq!(d, vec![c(0.0, -0.125), c(0.0, -0.25), c(0.0, -0.125)]);
        let k = build_measurement_heff(5, 1.0, 1.0, Boundary::Open).unwrap();
        for x in 0..4 {
            assert_eq!(k.entries[[x, x + 1]], ZERO);
            assert_eq!(k.entries[[x + 1, x]], c(-0.5, 0.0));
        }
    }

    #[test]
    fn jumps_reproduce_measurement_chain() {
        let (l, t, g) = (6, 1.0, 0.7);
        let h = build_measurement_heff(l, t, 0.0, Boundary::Open).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let jumps: Vec<Jump> = (0..l - 1)
            .map(|i| {
                let mut xi = vec![ZERO; l];
                xi[i] = c(s, 0.0);
                xi[i + 1] = c(0.0, -s);
                Jump::Projector(xi)
            })
            .collect();
        let rates = vec![g; l - 1];
        let heff = build_heff_from_jumps(&h, &jumps, &rates).unwrap();
        let direct = build_measurement_heff(l, t, g, Boundary::Open).unwrap();
        assert!(max_abs_diff(heff.entries.view(), direct.entries.view()) < 1e-15);
    }

    #[test]
    fn jumps_linear_loss_and_errors() {
        let h = build_hatano_nelson(4, 1.0, 0.0, Boundary::Open).unwrap();
        assert_eq!(build_heff_from_jumps(&h, &[], &[]).unwrap().entries, h.entries);
        let jumps: Vec<Jump> = (0..4)
            .map(|i| {
                let mut u = vec![ZERO; 4];
                u[i] = ONE;
                Jump::Linear(u)
            })
            .collect();
        let heff = build_heff_from_jumps(&h, &jumps, &[0.3; 4]).unwrap();
        let shift = &heff.entries - &h.entries;
        let want = Array2::from_diag(&Array1::from_elem(4, c(0.0, -0.15)));
        assert!(max_abs_diff(shift.view(), want.view()) < 1e-16);

        let bad = Jump::Projector(vec![ONE, ONE, ZERO, ZERO]);
        assert!(matches!(build_heff_from_jumps(&h, &[bad], &[1.0]), Err(Error::Normalization { .. })));
    }

    #[test]
    fn eb_bloch_reduction() {
        for swap in [false, true] {
            let (nu, w, g0) = (1.3, 0.8, 0.6);
            let k = build_eb_ssh_with(8, nu, w, g0, Boundary::Periodic, swap, 0.0).unwrap();
            for q in k.momenta() {
                let h = bloch_of(&k, q);
                let m = eb_ssh_bloch(q, nu, w, g0, swap);
                assert!(max_abs_diff(h.view(), m.view()) < 1e-14);
            }
        }
        // Unswapped at k = pi/2: sx coefficient nu, sy coefficient gamma0.
        let m = eb_ssh_bloch(PI / 2.0, 1.3, 0.8, 0.6, false);
        let sx = 0.5 * (m[[0, 1]] + m[[1, 0]]);
        let sy = 0.5 * (m[[1, 0]] - m[[0, 1]]) / I;
        assert!((sx - c(1.3, 0.0)).norm() < 1e-15);
        assert!((sy - c(0.6, 0.0)).norm() < 1e-15);
        // gamma0 = 0 and nu = w: the mass term vanishes.
        let k = build_eb_ssh(4, 1.0, 1.0, 0.0, Boundary::Open).unwrap();
        assert!(is_hermitian(&k.entries, 1e-15));
    }

    #[test]
    fn eb_long_wavelength_form() {
        // Swapped form near k = 0: [[g0 k, a0 + O(k^2)], [b0 k^2, -g0 k]].
        let (nu, w, g0) = (1.4, 0.9, 0.5);
        let q = 1e-3;
        let m = eb_ssh_bloch(q, nu, w, g0, true);
        assert!((m[[0, 0]].re - g0 * q).abs() < 1e-9);
        assert!((m[[0, 1]].re - 2.0 * (nu - w)).abs() < 1e-6);
        assert!((m[[1, 0]].re / (q * q) - w / 2.0).abs() < 1e-6);
        assert!(m[[0, 1]].im.abs() < 1e-15 && m[[1, 0]].im.abs() < 1e-15);
    }

    #[test]
    fn chern_ribbon_edge_branches() {
        // At the topological point, the ribbon spectrum has states inside the
        // bulk gap for some k_perp.
        let (t, m, g) = (1.0, -1.0, 0.5);
        let mut bulk_gap = f64::INFINITY;
        let nk = 64;
        for a in 0..nk {
            for b in 0..nk {
                let kx = 2.0 * PI * a as f64 / nk as f64;
                let ky = 2.0 * PI * b as f64 / nk as f64;
                for e in eigvals(&chern_bloch(kx, ky, t, m, g)).unwrap() {
                    bulk_gap = bulk_gap.min(e.re.abs());
                }
            }
        }
        let mut in_gap = 0;
        for a in 0..nk {
            let kp = 2.0 * PI * a as f64 / nk as f64;
            let k = build_chern_ribbon(40, kp, t, m, g, Axis::Y).unwrap();
            in_gap += eigvals(&k.entries).unwrap().iter().filter(|e| e.re.abs() < 0.5 * bulk_gap).count();
        }
        assert!(bulk_gap > 0.1);
        assert!(in_gap > 0);
    }

    fn bloch_union(k: &KernelMatrix, bloch: impl Fn(f64) -> CMat) -> f64 {
        let direct = eigvals(&k.entries).unwrap();
        let mut union = Vec::new();
        for q in k.momenta() {
            union.extend(eigvals(&bloch(q)).unwrap());
        }
        multiset_distance(&direct, &union)
    }

    #[test]
    fn bloch_spectra_match_real_space() {
        use Boundary::Periodic;
        let k = build_hatano_nelson_twisted(12, 1.0, 0.4, Periodic, 0.3).unwrap();
        assert!(bloch_union(&k, |q| Array2::from_elem((1, 1), hatano_nelson_bloch(q, 1.0, 0.4))) < 1e-10);
        let k = build_nh_ssh_twisted(10, 0.8, 1.1, 0.3, Periodic, 0.2).unwrap();
        assert!(bloch_union(&k, |q| build_nh_ssh_bloch(q, 0.8, 1.1, 0.3).0) < 1e-10);
        let k = build_guo_chain(24, 3, 0.9, 1.5, Periodic).unwrap();
        assert!(bloch_union(&k, |q| guo_chain_bloch(q, 3, 0.9, 1.5)) < 1e-10);
        let k = build_eb_ssh_with(10, 1.5, 1.0, 2.0, Periodic, true, 0.1).unwrap();
        assert!(bloch_union(&k, |q| eb_ssh_bloch(q, 1.5, 1.0, 2.0, true)) < 1e-10);
        let k = build_measurement_heff(12, 1.0, 0.5, Periodic).unwrap();
        assert!(bloch_union(&k, |q| Array2::from_elem((1, 1), measurement_bloch(q, 1.0, 0.5))) < 1e-10);
    }

    fn shift_cells(k: &KernelMatrix, s: usize) -> CMat {
        let n = k.dim();
        let o = k.orbitals;
        let cells = k.cells();
        let p = |i: usize| ((i / o + s) % cells) * o + i % o;
        let mut out = CMat::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                out[[p(i), p(j)]] = k.entries[[i, j]];
            }
        }
        out
    }

    #[test]
    fn periodic_translation_covariance() {
        use Boundary::Periodic;
        let models = vec![
            build_hatano_nelson(9, 1.0, 0.3, Periodic).unwrap(),
            build_nh_ssh_real(6, 1.0, 0.4, 0.2, Periodic).unwrap(),
            build_guo_chain(12, 2, 1.0, 0.7, Periodic).unwrap(),
            build_eb_ssh(6, 1.1, 0.9, 0.4, Periodic).unwrap(),
            build_measurement_heff(7, 1.0, 0.3, Periodic).unwrap(),
        ];
        for k in &models {
            for s in [1, 2, k.cells() - 1] {
                assert!(max_abs_diff(shift_cells(k, s).view(), k.entries.view()) < 1e-15);
            }
        }
    }

    #[test]
    fn spec_parameter_validation() {
        let spec = ModelSpec::new(Family::NhSsh, 4, Boundary::Open).with("omega", 1.0).with("u", 0.1);
        assert!(matches!(spec.build(), Err(Error::MissingParameter { .. })));
        let spec = spec.with("upsilon", 0.5).with("omgea", 1.0);
        assert!(matches!(spec.build(), Err(Error::UnknownParameter { .. })));
        let mut spec = ModelSpec::new(Family::Quasicrystal, 144, Boundary::Periodic)
            .with("J_L", 0.0)
            .with("J_R", 1.0)
            .with("V", 0.5);
        let k = spec.build().unwrap();
        assert!((k.entries[[1, 1]] - 0.5 * C64::from_polar(1.0, -2.0 * PI * 89.0 / 144.0)).norm() < 1e-14);
        spec.potential = Some(QuasiPotentialKind::MobilityEdge);
        assert!(matches!(spec.build(), Err(Error::MissingParameter { .. })));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::new(Family::EbSsh, 16, Boundary::Periodic)
            .with("nu", 1.5)
            .with("w", 1.0)
            .with("gamma0", 0.0);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = text.replace("\"swap_yz\"", "\"swapyz\"");
        assert!(serde_json::from_str::<ModelSpec>(&bad).is_err());
    }
}

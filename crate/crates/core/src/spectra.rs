//! Biorthogonal eigendecomposition and ground-state occupation.
//!
//! Right eigenvectors come from the general eigensolver; the left set is
//! read off the inverse of the right-eigenvector matrix, so pairing is
//! structural. Before diagonalizing, non-Hermitian kernels are brought to a
//! diagonally similar form `B = D^-1 K D` with `|B_ij| = |B_ji|` wherever
//! possible. For skin-effect chains this removes the exponential spread of
//! the eigenvectors, which otherwise destroys every digit of the
//! biorthogonal products. Vectors are stored in this balanced frame; the
//! original-frame vectors are `D R` and `D^-1 L`.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning, WarningKind};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::model_zoo::{Basis, KernelMatrix};

pub const DEFECT_THRESHOLD: f64 = 1e12;
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Condition estimates above this are accepted but flagged as close to an
/// exceptional point. Rounding splits an exact 2x2 Jordan block by about
/// sqrt(eps), which gives estimates near 1e8, far below the defect
/// threshold; this level catches those.
pub const ILL_CONDITIONED: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingPolicy {
    #[default]
    RealPart,
    ImagPart,
    Modulus,
}

impl FromStr for OrderingPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_part" => Ok(OrderingPolicy::RealPart),
            "imag_part" => Ok(OrderingPolicy::ImagPart),
            "modulus" => Ok(OrderingPolicy::Modulus),
            _ => Err(Error::InvalidParameter(format!("unknown ordering policy `{s}`"))),
        }
    }
}

/// Filling fraction `num/den`, serialized as the string `"num/den"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Filling {
    num: u64,
    den: u64,
}

impl Filling {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::InvalidParameter(format!(
                "filling {num}/{den} must lie in (0, 1]"
            )));
        }
        Ok(Filling { num, den })
    }

    pub fn half() -> Self {
        Filling { num: 1, den: 2 }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `round(filling * n)`, halves rounded up.
    pub fn count(&self, n: usize) -> usize {
        ((2 * self.num * n as u64 + self.den) / (2 * self.den)) as usize
    }
}

impl fmt::Display for Filling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Filling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse filling `{s}` (expected p/q)"));
        let (a, b) = s.split_once('/').ok_or_else(bad)?;
        let num = a.trim().parse().map_err(|_| bad())?;
        let den = b.trim().parse().map_err(|_| bad())?;
        Filling::new(num, den)
    }
}

impl TryFrom<String> for Filling {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Filling> for String {
    fn from(f: Filling) -> String {
        f.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct BiorthogonalSystem {
    eigenvalues: Vec<C64>,
    right: CMat,
    left: CMat,
    scale: Vec<f64>,
    condition_estimate: f64,
    hermitian: bool,
    basis: Basis,
}

#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    pub defect_threshold: f64,
    pub balance: bool,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { defect_threshold: DEFECT_THRESHOLD, balance: true }
    }
}

pub fn biorthogonal_eig(k: &KernelMatrix) -> Result<BiorthogonalSystem> {
    biorthogonal_eig_with(k, EigOptions::default())
}

pub fn biorthogonal_eig_with(k: &KernelMatrix, opts: EigOptions) -> Result<BiorthogonalSystem> {
    let a = &k.entries;
    linalg::check_finite(a)?;
    let n = a.nrows();
    if linalg::is_hermitian(a, 1e-14) {
        let herm = (a + &linalg::dagger(a)).mapv(|z| z * 0.5);
        let (vals, vecs) = linalg::eigh(&herm)?;
        return Ok(BiorthogonalSystem {
            eigenvalues: vals.iter().map(|&x| C64::new(x, 0.0)).collect(),
            left: vecs.clone(),
            right: vecs,
            scale: vec![0.0; n],
            condition_estimate: 1.0,
            hermitian: true,
            basis: k.basis,
        });
    }
    let scale = if opts.balance {
        linalg::symmetrizing_scale(a)?
    } else {
        vec![0.0; n]
    };
    let b = linalg::apply_scale(a, &scale);
    let (vals, mut r) = linalg::eig(&b)?;
    for mut col in r.axis_iter_mut(Axis(1)) {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.mapv_inplace(|z| z / nrm);
    }
    let rinv = linalg::inv(&r)?;
    let cond = linalg::cond1(&r, &rinv);
    if !(cond <= opts.defect_threshold) {
        return Err(Error::Defective {
            condition: cond,
            threshold: opts.defect_threshold,
            clustered: clustered(&vals),
        });
    }
    Ok(BiorthogonalSystem {
        eigenvalues: vals,
        right: r,
        left: linalg::dagger(&rinv),
        scale,
        condition_estimate: cond.max(1.0),
        hermitian: false,
        basis: k.basis,
    })
}

fn clustered(vals: &[C64]) -> Vec<C64> {
    let scale = vals.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    vals.iter()
        .enumerate()
        .filter(|(i, z)| {
            vals.iter()
                .enumerate()
                .any(|(j, w)| j != *i && (*z - w).norm() < 1e-6 * scale)
        })
        .map(|(_, z)| *z)
        .collect()
}

impl BiorthogonalSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// 1-norm condition number of the (balanced, column-normalized) right
    /// eigenvector matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Flags an eigenbasis that passed the defect check but is
    /// ill-conditioned enough to cost digits downstream.
    pub fn warnings(&self) -> Vec<Warning> {
        if self.condition_estimate > ILL_CONDITIONED {
            vec![Warning::new(
                WarningKind::Defectiveness,
                format!("eigenvector condition estimate {:.3e}", self.condition_estimate),
            )]
        } else {
            Vec::new()
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Log-domain diagonal similarity `d` (`D = diag(exp d)`).
    pub fn balancing_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn balanced_right(&self) -> &CMat {
        &self.right
    }

    pub fn balanced_left(&self) -> &CMat {
        &self.left
    }

    /// Right eigenvectors in the original frame, unit 2-norm columns.
    /// Can overflow for extreme balancing scales; prefer the balanced frame.
    pub fn right_vectors(&self) -> CMat {
        self.original_frame().0
    }

    /// Left eigenvectors in the original frame with `<L_a|R_b> = delta_ab`.
    pub fn left_vectors(&self) -> CMat {
        self.original_frame().1
    }

    fn original_frame(&self) -> (CMat, CMat) {
        let n = self.dim();
        let mut r = self.right.clone();
        let mut l = self.left.clone();
        for i in 0..n {
            let d = self.scale[i].exp();
            r.row_mut(i).mapv_inplace(|z| z * d);
            l.row_mut(i).mapv_inplace(|z| z / d);
        }
        for a in 0..n {
            let nrm = r.column(a).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            r.column_mut(a).mapv_inplace(|z| z / nrm);
            l.column_mut(a).mapv_inplace(|z| z * nrm);
        }
        (r, l)
    }

    /// `sum_a eps_a |R_a><L_a|` in the original frame.
    pub fn reconstruct(&self) -> CMat {
        let mut rl = self.right.clone();
        for (a, e) in self.eigenvalues.iter().enumerate() {
            rl.column_mut(a).mapv_inplace(|z| z * e);
        }
        let b = rl.dot(&linalg::dagger(&self.left));
        let neg: Vec<f64> = self.scale.iter().map(|x| -x).collect();
        linalg::apply_scale(&b, &neg)
    }

    /// `sum_{a in occ} |R_a><L_a|` in the balanced frame.
    pub fn balanced_projector(&self, occupied: &[usize]) -> CMat {
        let r = self.right.select(Axis(1), occupied);
        let l = self.left.select(Axis(1), occupied);
        r.dot(&linalg::dagger(&l))
    }

    /// `R_occ` and `L_occ` restricted to the given rows, balanced frame.
    pub(crate) fn occupied_rows(&self, occupied: &[usize], rows: &[usize]) -> (CMat, CMat) {
        let r = self.right.select(Axis(1), occupied).select(Axis(0), rows);
        let l = self.left.select(Axis(1), occupied).select(Axis(0), rows);
        (r, l)
    }

    /// Largest biorthonormality error `max |<L_a|R_b> - delta_ab|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let g = linalg::dagger(&self.left).dot(&self.right);
        linalg::max_abs_diff(g.view(), linalg::identity(self.dim()).view())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundStateSelection {
    pub occupied: Vec<usize>,
    pub policy: OrderingPolicy,
    pub filling: Filling,
    pub warnings: Vec<Warning>,
}

fn cmp_key(policy: OrderingPolicy, a: (usize, C64), b: (usize, C64)) -> std::cmp::Ordering {
    let tail = |x: (usize, C64), y: (usize, C64)| {
        x.1.re.total_cmp(&y.1.re).then(x.1.im.total_cmp(&y.1.im)).then(x.0.cmp(&y.0))
    };
    match policy {
        OrderingPolicy::RealPart => tail(a, b),
        OrderingPolicy::ImagPart => a.1.im.total_cmp(&b.1.im).then_with(|| tail(a, b)),
        OrderingPolicy::Modulus => a.1.norm().total_cmp(&b.1.norm()).then_with(|| tail(a, b)),
    }
}

pub fn policy_key(policy: OrderingPolicy, z: C64) -> f64 {
    match policy {
        OrderingPolicy::RealPart => z.re,
        OrderingPolicy::ImagPart => z.im,
        OrderingPolicy::Modulus => z.norm(),
    }
}

/// Occupies the `round(filling * N)` smallest eigenvalues under the policy,
/// ties broken by ascending (Re, Im, index).
pub fn select_from_eigenvalues(
    eigenvalues: &[C64],
    filling: Filling,
    policy: OrderingPolicy,
) -> GroundStateSelection {
    let n = eigenvalues.len();
    let m = filling.count(n);
    let mut order: Vec<(usize, C64)> = eigenvalues.iter().copied().enumerate().collect();
    order.sort_by(|a, b| cmp_key(policy, *a, *b));
    let mut warnings = Vec::new();
    if m > 0 && m < n {
        let last = policy_key(policy, order[m - 1].1);
        let next = policy_key(policy, order[m].1);
        let gap = (next - last).abs();
        if gap <= DEGENERACY_TOL * last.abs().max(1.0) {
            warnings.push(Warning::new(
                WarningKind::Degeneracy,
                format!(
                    "ordering key ties at the Fermi boundary: {} vs {} (gap {gap:.2e}); tie broken by (Re, Im, index)",
                    order[m - 1].1, order[m].1
                ),
            ));
        }
    }
    let mut occupied: Vec<usize> = order[..m].iter().map(|x| x.0).collect();
    occupied.sort_unstable();
    GroundStateSelection { occupied, policy, filling, warnings }
}

pub fn select_occupied(
    sys: &BiorthogonalSystem,
    filling: Filling,
    policy: OrderingPolicy,
) -> GroundStateSelection {
    select_from_eigenvalues(sys.eigenvalues(), filling, policy)
}

/// `|<R_m|R_n>|^2 / (<R_m|R_m> <R_n|R_n>)` for original-frame right vectors.
pub fn petermann_factor(sys: &BiorthogonalSystem, m: usize, n: usize) -> Result<f64> {
    let dim = sys.dim();
    if m == n || m >= dim || n >= dim {
        return Err(Error::InvalidParameter(format!(
            "Petermann factor needs two distinct indices below {dim}, got ({m}, {n})"
        )));
    }
    // Common rescaling by exp(-max d) keeps the original-frame vectors finite.
    let dmax = sys.scale.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = sys.scale.iter().map(|d| (d - dmax).exp()).collect();
    let (mut rm, mut rn, mut mn) = (0.0, 0.0, ZERO);
    for i in 0..dim {
        let a = sys.right[[i, m]] * w[i];
        let b = sys.right[[i, n]] * w[i];
        rm += a.norm_sqr();
        rn += b.norm_sqr();
        mn += a.conj() * b;
    }
    Ok(overlap_ratio(mn, rm, rn))
}

fn overlap_ratio(mn: C64, mm: f64, nn: f64) -> f64 {
    (mn.norm_sqr() / (mm * nn)).clamp(0.0, 1.0)
}

/// Petermann factor of two explicit vectors.
pub fn petermann_of(u: &[C64], v: &[C64]) -> f64 {
    let mn: C64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
    let mm: f64 = u.iter().map(|a| a.norm_sqr()).sum();
    let nn: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    overlap_ratio(mn, mm, nn)
}

/// Top-left `rows x rows` block helper used by tests and the duality check.
pub(crate) fn block(m: &CMat, idx: &[usize]) -> CMat {
    m.select(Axis(0), idx).select(Axis(1), idx)
}

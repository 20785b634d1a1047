//! No-jump evolution of number-conserving Gaussian states,
//! `M(t) = exp(-i K t) M(0)` with column re-orthonormalization, and the
//! entanglement of the right-state density matrix along the way.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corr::{CorrelationMatrix, Partition};
use crate::ent::{entanglement_report, EntOptions, EntanglementReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE};
use crate::model_zoo::KernelMatrix;
use crate::spectra::{biorthogonal_eig, Filling};

/// Orbital condition number allowed to build up between normalizations.
pub const COND_LIMIT: f64 = 1e6;
pub const RANK_TOL: f64 = 1e-12;
/// Cap on internal steps per output interval. Beyond it the step grows and
/// the rank check decides whether the orbitals survived.
pub const MAX_SUBSTEPS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct GaussianState {
    /// `N x M`, occupied orbitals as orthonormal columns.
    pub orbitals: CMat,
    pub time: f64,
}

impl GaussianState {
    pub fn new(orbitals: CMat) -> Result<Self> {
        if orbitals.ncols() == 0 || orbitals.ncols() > orbitals.nrows() {
            return Err(Error::Size(format!("orbital matrix {:?} needs 1 <= M <= N", orbitals.dim())));
        }
        let q = linalg::orthonormalize(&orbitals, RANK_TOL)?
            .ok_or(Error::InvalidParameter("initial orbitals are linearly dependent".into()))?;
        Ok(GaussianState { orbitals: q, time: 0.0 })
    }

    /// Product state with the listed sites filled.
    pub fn product(n: usize, sites: &[usize]) -> Result<Self> {
        let mut m = CMat::zeros((n, sites.len()));
        for (a, &s) in sites.iter().enumerate() {
            if s >= n {
                return Err(Error::Size(format!("site {s} outside 0..{n}")));
            }
            m[[s, a]] = ONE;
        }
        GaussianState::new(m)
    }

    /// Every even site filled.
    pub fn neel(n: usize) -> Result<Self> {
        GaussianState::product(n, &(0..n).step_by(2).collect::<Vec<_>>())
    }

    /// The first `m` sites filled.
    pub fn domain_wall(n: usize, m: usize) -> Result<Self> {
        GaussianState::product(n, &(0..m).collect::<Vec<_>>())
    }

    /// Ground state of the Hermitian part `(K + K^dag)/2`.
    pub fn hermitian_ground_state(k: &KernelMatrix, filling: Filling) -> Result<Self> {
        let h = (&k.entries + &linalg::dagger(&k.entries)).mapv(|z| z * 0.5);
        let (_, v) = linalg::eigh(&h)?;
        let m = filling.count(k.dim());
        GaussianState::new(v.slice(ndarray::s![.., ..m]).to_owned())
    }

    pub fn n_particles(&self) -> usize {
        self.orbitals.ncols()
    }

    /// `C = M M^dag`, i.e. `C_ij = <c_j^dag c_i>` of the normalized right state.
    pub fn correlation(&self) -> CMat {
        self.orbitals.dot(&linalg::dagger(&self.orbitals))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorPath {
    Hermitian,
    Eigen,
    Pade,
}

pub fn kernel_exponential(k: &KernelMatrix, t: f64) -> Result<CMat> {
    Ok(kernel_exponential_with_path(k, t)?.0)
}

/// `exp(-i K t)`: unitary eigendecomposition for Hermitian kernels, the
/// biorthogonal one when its condition estimate is below `COND_LIMIT`,
/// Pade scaling-and-squaring otherwise.
pub fn kernel_exponential_with_path(k: &KernelMatrix, t: f64) -> Result<(CMat, PropagatorPath)> {
    let n = k.dim();
    if t == 0.0 {
        return Ok((linalg::identity(n), PropagatorPath::Hermitian));
    }
    if linalg::is_hermitian(&k.entries, 1e-14) {
        let (vals, v) = linalg::eigh(&k.entries)?;
        let phases: Vec<C64> = vals.iter().map(|&e| C64::from_polar(1.0, -e * t)).collect();
        return Ok((spectral(&v, &phases, &linalg::dagger(&v)), PropagatorPath::Hermitian));
    }
    if let Ok(sys) = biorthogonal_eig(k) {
        if sys.condition_estimate() <= COND_LIMIT {
            let phases: Vec<C64> = sys.eigenvalues().iter().map(|&e| (C64::new(0.0, -t) * e).exp()).collect();
            let u = spectral(sys.balanced_right(), &phases, &linalg::dagger(sys.balanced_left()));
            let neg: Vec<f64> = sys.balancing_scale().iter().map(|x| -x).collect();
            return Ok((linalg::apply_scale(&u, &neg), PropagatorPath::Eigen));
        }
    }
    let a = k.entries.mapv(|z| z * C64::new(0.0, -t));
    Ok((linalg::expm(&a)?, PropagatorPath::Pade))
}

fn spectral(v: &CMat, d: &[C64], w: &CMat) -> CMat {
    let mut vd = v.clone();
    for (j, &z) in d.iter().enumerate() {
        vd.column_mut(j).mapv_inplace(|x| x * z);
    }
    vd.dot(w)
}

/// Largest step over which `exp(-i K dt)` can change the orbital condition
/// number by at most `limit`. With `K = H + i G` the singular values of the
/// propagator lie in `[e^{g_min dt}, e^{g_max dt}]`.
pub fn max_internal_step(k: &KernelMatrix, limit: f64) -> Result<f64> {
    let g = (&k.entries - &linalg::dagger(&k.entries)).mapv(|z| z * C64::new(0.0, -0.5));
    let (vals, _) = linalg::eigh(&g)?;
    let spread = vals.last().copied().unwrap_or(0.0) - vals.first().copied().unwrap_or(0.0);
    Ok(if spread > 0.0 { limit.ln() / spread } else { f64::INFINITY })
}

#[derive(Clone, Debug)]
pub struct DynamicsOptions {
    pub partition: Partition,
    pub ent: EntOptions,
    pub cond_limit: f64,
}

impl DynamicsOptions {
    pub fn new(partition: Partition) -> Self {
        DynamicsOptions { partition, ent: EntOptions::default(), cond_limit: COND_LIMIT }
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsPoint {
    pub time: f64,
    pub correlation: CorrelationMatrix,
    pub report: EntanglementReport,
    /// `|Tr C - M|` on the full system.
    pub trace_residual: f64,
    /// `sum |C^2 - C|` on the full system.
    pub purity_residual: f64,
    pub path: PropagatorPath,
    pub substeps: usize,
}

pub fn evolve_no_jump(
    k: &KernelMatrix,
    psi0: &GaussianState,
    t_grid: &[f64],
    opts: &DynamicsOptions,
) -> Result<Vec<DynamicsPoint>> {
    check_grid(k, psi0, t_grid)?;
    let dt_max = max_internal_step(k, opts.cond_limit)?;
    let mut cache: HashMap<u64, (CMat, PropagatorPath)> = HashMap::new();
    let mut m = psi0.orbitals.clone();
    let mut now = psi0.time;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let span = t - now;
        let steps = if span > 0.0 { (span / dt_max).ceil().clamp(1.0, MAX_SUBSTEPS as f64) as usize } else { 0 };
        let mut path = PropagatorPath::Hermitian;
        if steps > 0 {
            let h = span / steps as f64;
            if !cache.contains_key(&h.to_bits()) {
                cache.insert(h.to_bits(), kernel_exponential_with_path(k, h)?);
            }
            let (u, p) = &cache[&h.to_bits()];
            path = *p;
            for s in 1..=steps {
                m = linalg::orthonormalize(&u.dot(&m), RANK_TOL)?
                    .ok_or(Error::Collapse { time: now + s as f64 * h })?;
            }
        }
        now = t;
        out.push(point(&m, t, opts, path, steps)?);
    }
    Ok(out)
}

/// Unitary reference evolution for Hermitian kernels, straight from the
/// eigendecomposition at each output time.
pub fn evolve_unitary_reference(
    k: &KernelMatrix,
    psi0: &GaussianState,
    t_grid: &[f64],
    opts: &DynamicsOptions,
) -> Result<Vec<DynamicsPoint>> {
    if !linalg::is_hermitian(&k.entries, 1e-14) {
        return Err(Error::Unsupported("unitary reference needs a Hermitian kernel".into()));
    }
    check_grid(k, psi0, t_grid)?;
    let (vals, v) = linalg::eigh(&k.entries)?;
    let vm = linalg::dagger(&v).dot(&psi0.orbitals);
    t_grid
        .iter()
        .map(|&t| {
            let dt = t - psi0.time;
            let mut w = vm.clone();
            for (i, &e) in vals.iter().enumerate() {
                w.row_mut(i).mapv_inplace(|z| z * C64::from_polar(1.0, -e * dt));
            }
            point(&v.dot(&w), t, opts, PropagatorPath::Hermitian, 1)
        })
        .collect()
}

fn check_grid(k: &KernelMatrix, psi0: &GaussianState, t_grid: &[f64]) -> Result<()> {
    if psi0.orbitals.nrows() != k.dim() {
        return Err(Error::Size(format!(
            "state has {} modes, kernel has {}",
            psi0.orbitals.nrows(),
            k.dim()
        )));
    }
    if t_grid.first().is_some_and(|&t| t < psi0.time) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must increase and start at or after the state time".into()));
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("time grid must be finite".into()));
    }
    Ok(())
}

fn point(m: &CMat, t: f64, opts: &DynamicsOptions, path: PropagatorPath, substeps: usize) -> Result<DynamicsPoint> {
    let c = m.dot(&linalg::dagger(m));
    let trace_residual = (linalg::trace(&c) - C64::new(m.ncols() as f64, 0.0)).norm();
    let purity_residual = (c.dot(&c) - &c).iter().map(|z| z.norm()).sum();
    let block = crate::spectra::block(&c, opts.partition.indices());
    let correlation = CorrelationMatrix::from_hermitian(block, opts.partition.clone())?;
    let report = entanglement_report(&correlation, &opts.ent)?;
    Ok(DynamicsPoint { time: t, correlation, report, trace_residual, purity_residual, path, substeps })
}

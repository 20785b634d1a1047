//! Entanglement spectrum and entropies from a subsystem correlation matrix.
//!
//! All logarithms use the principal branch. Eigenvalues within `clamp_tol`
//! of 0 or 1 contribute nothing (the `x ln x -> 0` limit) and carry no
//! single-particle level.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corr::{CorrelationMatrix, Partition};
use crate::error::{Error, Result, Warning, WarningKind};
use crate::linalg::{self, CMat, C64, ONE};

pub const CLAMP_TOL: f64 = 1e-12;
pub const MIDGAP_TOL: f64 = 0.05;
/// Largest `|Im S_mod|` accepted before the input is declared not
/// conjugate-closed.
pub const MODIFIED_IMAG_TOL: f64 = 1e-6;
pub const RENYI_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct EntOptions {
    pub clamp_tol: f64,
    pub midgap_tol: f64,
    pub renyi_orders: Vec<u32>,
}

impl Default for EntOptions {
    fn default() -> Self {
        EntOptions { clamp_tol: CLAMP_TOL, midgap_tol: MIDGAP_TOL, renyi_orders: vec![2] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglementSpectrum {
    /// Eigenvalues of `C`, sorted by (Re, Im).
    pub epsilon: Vec<C64>,
    /// `xi = ln(1/eps - 1)` for every unclamped eigenvalue.
    pub xi: Vec<C64>,
    /// Position in `epsilon` of each `xi` entry.
    pub xi_modes: Vec<usize>,
    pub clamped: Vec<usize>,
}

pub fn is_clamped(eps: C64, tol: f64) -> bool {
    eps.norm() < tol || (ONE - eps).norm() < tol
}

pub fn xi_of(eps: C64) -> C64 {
    (ONE / eps - ONE).ln()
}

pub fn eps_of(xi: C64) -> C64 {
    ONE / (xi.exp() + ONE)
}

pub fn spectrum_from_eigenvalues(mut epsilon: Vec<C64>, clamp_tol: f64) -> EntanglementSpectrum {
    linalg::sort_complex(&mut epsilon);
    let mut xi = Vec::new();
    let mut xi_modes = Vec::new();
    let mut clamped = Vec::new();
    for (n, &e) in epsilon.iter().enumerate() {
        if is_clamped(e, clamp_tol) {
            clamped.push(n);
        } else {
            xi.push(xi_of(e));
            xi_modes.push(n);
        }
    }
    EntanglementSpectrum { epsilon, xi, xi_modes, clamped }
}

/// Hermitian correlation matrices have spectra in [0, 1]; anything outside
/// is roundoff and gets clipped so it cannot leak into the logarithms.
fn correlation_eigenvalues(c: &CorrelationMatrix) -> Result<Vec<C64>> {
    let mut eps = c.eigenvalues()?;
    if c.is_hermitian() {
        for e in eps.iter_mut() {
            *e = C64::new(e.re.clamp(0.0, 1.0), 0.0);
        }
    }
    Ok(eps)
}

pub fn entanglement_spectrum(c: &CorrelationMatrix) -> Result<EntanglementSpectrum> {
    Ok(spectrum_from_eigenvalues(correlation_eigenvalues(c)?, CLAMP_TOL))
}

fn xlnx(x: C64) -> C64 {
    x * x.ln()
}

pub fn vn_entropy(eps: &[C64]) -> C64 {
    vn_entropy_with(eps, CLAMP_TOL)
}

pub fn vn_entropy_with(eps: &[C64], clamp_tol: f64) -> C64 {
    -eps.iter()
        .filter(|&&e| !is_clamped(e, clamp_tol))
        .map(|&e| xlnx(e) + xlnx(ONE - e))
        .sum::<C64>()
}

/// `S_n = ln Tr rho^n / (1 - n)` through the product of per-mode factors.
pub fn renyi_entropy(eps: &[C64], n: u32) -> Result<C64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Renyi order must be >= 2, got {n}")));
    }
    let mut acc = C64::new(0.0, 0.0);
    for &e in eps {
        let f = e.powu(n) + (ONE - e).powu(n);
        if f.norm() < RENYI_FLOOR {
            return Err(Error::Branch { value: f, tol: RENYI_FLOOR });
        }
        acc += f.ln();
    }
    Ok(acc / (1.0 - n as f64))
}

/// `-sum [eps ln|eps| + (1 - eps) ln|1 - eps|]` before the realness check.
pub fn modified_entropy_complex(eps: &[C64]) -> C64 {
    modified_entropy_complex_with(eps, CLAMP_TOL)
}

pub fn modified_entropy_complex_with(eps: &[C64], clamp_tol: f64) -> C64 {
    -eps.iter()
        .filter(|&&e| !is_clamped(e, clamp_tol))
        .map(|&e| e * e.norm().ln() + (ONE - e) * (ONE - e).norm().ln())
        .sum::<C64>()
}

pub fn modified_entropy(eps: &[C64]) -> Result<f64> {
    let s = modified_entropy_complex(eps);
    if s.im.abs() > MODIFIED_IMAG_TOL {
        return Err(Error::Consistency { residual: s.im.abs(), tol: MODIFIED_IMAG_TOL });
    }
    Ok(s.re)
}

/// `h = ln(C^-1 - 1)` built from the eigendecomposition of `C`.
pub fn entanglement_hamiltonian(c: &CorrelationMatrix) -> Result<CMat> {
    let b = c.balanced_entries();
    let n = b.nrows();
    let h = if c.is_hermitian() {
        let (vals, v) = linalg::eigh(b)?;
        let eps: Vec<C64> = vals.iter().map(|&x| C64::new(x, 0.0)).collect();
        let xi = xi_or_clamped(&eps)?;
        let mut vx = v.clone();
        for j in 0..n {
            vx.column_mut(j).mapv_inplace(|z| z * xi[j]);
        }
        vx.dot(&linalg::dagger(&v))
    } else {
        let (eps, v) = linalg::eig(b)?;
        let xi = xi_or_clamped(&eps)?;
        let vinv = linalg::inv(&v)?;
        let cond = linalg::cond1(&v, &vinv);
        if cond > 1e12 {
            return Err(Error::Defective { condition: cond, threshold: 1e12, clustered: eps });
        }
        let mut vx = v.clone();
        for j in 0..n {
            vx.column_mut(j).mapv_inplace(|z| z * xi[j]);
        }
        vx.dot(&vinv)
    };
    let neg: Vec<f64> = c.balancing_scale().iter().map(|x| -x).collect();
    Ok(linalg::apply_scale(&h, &neg))
}

fn xi_or_clamped(eps: &[C64]) -> Result<Vec<C64>> {
    let modes: Vec<usize> = (0..eps.len()).filter(|&i| is_clamped(eps[i], CLAMP_TOL)).collect();
    if !modes.is_empty() {
        return Err(Error::PartialSpectrum { modes });
    }
    Ok(eps.iter().map(|&e| xi_of(e)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglementReport {
    pub partition: Partition,
    pub correlation_eigenvalues: Vec<C64>,
    pub single_particle_spectrum: Vec<C64>,
    pub clamped_modes: Vec<usize>,
    pub entropy_vn: C64,
    pub entropy_renyi: BTreeMap<u32, C64>,
    /// Real part of the modified entropy; `modified_residual` holds `|Im|`.
    pub entropy_modified: f64,
    pub modified_residual: f64,
    pub midgap_modes: Vec<usize>,
    pub realness_residual: f64,
    pub warnings: Vec<Warning>,
}

impl EntanglementReport {
    pub fn midgap_count(&self) -> usize {
        self.midgap_modes.len()
    }

    pub fn renyi(&self, n: u32) -> Option<C64> {
        self.entropy_renyi.get(&n).copied()
    }
}

pub fn entanglement_report(c: &CorrelationMatrix, opts: &EntOptions) -> Result<EntanglementReport> {
    let eps = correlation_eigenvalues(c)?;
    Ok(report_from_eigenvalues(c.partition.clone(), eps, opts))
}

pub fn report_from_eigenvalues(partition: Partition, eps: Vec<C64>, opts: &EntOptions) -> EntanglementReport {
    let spec = spectrum_from_eigenvalues(eps, opts.clamp_tol);
    let eps = &spec.epsilon;
    let mut warnings = Vec::new();
    let entropy_vn = vn_entropy_with(eps, opts.clamp_tol);
    let mut entropy_renyi = BTreeMap::new();
    for &n in &opts.renyi_orders {
        match renyi_entropy(eps, n) {
            Ok(s) => {
                entropy_renyi.insert(n, s);
            }
            Err(e) => warnings.push(Warning::new(WarningKind::Branch, format!("S_{n} skipped: {e}"))),
        }
    }
    let smod = modified_entropy_complex_with(eps, opts.clamp_tol);
    if smod.im.abs() > MODIFIED_IMAG_TOL {
        warnings.push(Warning::new(
            WarningKind::Consistency,
            format!("modified entropy has imaginary part {:.3e}; spectrum not conjugate-closed", smod.im),
        ));
    }
    let realness_residual = entropy_vn.im.abs();
    if realness_residual > 1e-9 {
        warnings.push(Warning::new(
            WarningKind::Realness,
            format!("Im S_vn = {:.3e}", entropy_vn.im),
        ));
    }
    let midgap_modes = (0..eps.len()).filter(|&i| (eps[i].re - 0.5).abs() < opts.midgap_tol).collect();
    EntanglementReport {
        partition,
        correlation_eigenvalues: spec.epsilon.clone(),
        single_particle_spectrum: spec.xi,
        clamped_modes: spec.clamped,
        entropy_vn,
        entropy_renyi,
        entropy_modified: smod.re,
        modified_residual: smod.im.abs(),
        midgap_modes,
        realness_residual,
        warnings,
    }
}

/// `I(A:B) = S_A + S_B - S_AB` from the von Neumann entropies.
pub fn mutual_information(
    a: &EntanglementReport,
    b: &EntanglementReport,
    ab: &EntanglementReport,
) -> Result<C64> {
    if !a.partition.is_disjoint(&b.partition) {
        return Err(Error::Partition("A and B overlap".into()));
    }
    let u = a.partition.union(&b.partition)?;
    if u != ab.partition {
        return Err(Error::Partition("AB is not the union of A and B".into()));
    }
    Ok(a.entropy_vn + b.entropy_vn - ab.entropy_vn)
}

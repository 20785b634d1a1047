//! Ground-state correlation matrices `C_ij = <G_L| c_j^dag c_i |G_R>` on a
//! subsystem, the occupied-state projector, and the RPR / PRP spectrum check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::model_zoo::{Basis, Boundary, KernelMatrix, SiteLabel};
use crate::spectra::{BiorthogonalSystem, GroundStateSelection};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub space: Basis,
    indices: Vec<usize>,
    n_modes: usize,
}

impl Partition {
    /// Sorted, duplicate-free, nonempty subset of `0..n_modes`.
    pub fn new(space: Basis, mut indices: Vec<usize>, n_modes: usize) -> Result<Self> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.len() != len {
            return Err(Error::Partition("duplicate mode index".into()));
        }
        if indices.is_empty() {
            return Err(Error::Partition("partition is empty".into()));
        }
        if *indices.last().unwrap() >= n_modes {
            return Err(Error::Partition(format!(
                "mode index {} outside 0..{n_modes}",
                indices.last().unwrap()
            )));
        }
        Ok(Partition { space, indices, n_modes })
    }

    /// Contiguous block `start..start + len`.
    pub fn range(space: Basis, start: usize, len: usize, n_modes: usize) -> Result<Self> {
        Partition::new(space, (start..start + len).collect(), n_modes)
    }

    pub fn full(space: Basis, n_modes: usize) -> Self {
        Partition { space, indices: (0..n_modes).collect(), n_modes }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// True unless the partition covers every mode.
    pub fn is_proper(&self) -> bool {
        self.indices.len() < self.n_modes
    }

    pub fn complement(&self) -> Vec<usize> {
        let mut inside = vec![false; self.n_modes];
        for &i in &self.indices {
            inside[i] = true;
        }
        (0..self.n_modes).filter(|&i| !inside[i]).collect()
    }

    pub fn is_disjoint(&self, other: &Partition) -> bool {
        self.indices.iter().all(|i| other.indices.binary_search(i).is_err())
    }

    pub fn union(&self, other: &Partition) -> Result<Partition> {
        if self.space != other.space || self.n_modes != other.n_modes {
            return Err(Error::Partition("partitions live in different mode spaces".into()));
        }
        let mut all = self.indices.clone();
        all.extend(other.indices.iter().copied());
        all.sort_unstable();
        all.dedup();
        Partition::new(self.space, all, self.n_modes)
    }
}

/// Subsystem correlation matrix. Stored in the balanced frame of the
/// source system (`C = D_A C' D_A^-1`), which has the same spectrum.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    pub partition: Partition,
    balanced: CMat,
    scale: Vec<f64>,
    hermitian: bool,
    pub n_occupied: usize,
}

impl CorrelationMatrix {
    /// Wrap an explicit matrix (no balancing).
    pub fn from_matrix(entries: CMat, partition: Partition) -> Result<Self> {
        if entries.nrows() != partition.len() || entries.ncols() != partition.len() {
            return Err(Error::Size(format!(
                "correlation matrix {:?} does not match partition of size {}",
                entries.dim(),
                partition.len()
            )));
        }
        let hermitian = linalg::is_hermitian(&entries, 1e-13);
        let n = partition.len();
        Ok(CorrelationMatrix {
            partition,
            balanced: entries,
            scale: vec![0.0; n],
            hermitian,
            n_occupied: 0,
        })
    }

    /// Wrap a matrix known to be Hermitian up to roundoff; the
    /// anti-Hermitian residue is discarded.
    pub fn from_hermitian(entries: CMat, partition: Partition) -> Result<Self> {
        let sym = (&entries + &linalg::dagger(&entries)).mapv(|z| z * 0.5);
        let mut cm = CorrelationMatrix::from_matrix(sym, partition)?;
        cm.hermitian = true;
        Ok(cm)
    }

    pub fn entries(&self) -> CMat {
        let neg: Vec<f64> = self.scale.iter().map(|x| -x).collect();
        linalg::apply_scale(&self.balanced, &neg)
    }

    pub fn balanced_entries(&self) -> &CMat {
        &self.balanced
    }

    pub fn balancing_scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.balanced.nrows()
    }

    /// Restriction to a sub-partition (same mode space, subset of indices).
    pub fn restrict(&self, part: &Partition) -> Result<CorrelationMatrix> {
        if part.space != self.partition.space || part.n_modes != self.partition.n_modes {
            return Err(Error::Partition("sub-partition lives in a different mode space".into()));
        }
        let mut local = Vec::with_capacity(part.len());
        for i in part.indices() {
            match self.partition.indices.binary_search(i) {
                Ok(p) => local.push(p),
                Err(_) => {
                    return Err(Error::Partition(format!("mode {i} is outside the parent partition")))
                }
            }
        }
        Ok(CorrelationMatrix {
            partition: part.clone(),
            balanced: crate::spectra::block(&self.balanced, &local),
            scale: local.iter().map(|&p| self.scale[p]).collect(),
            hermitian: self.hermitian,
            n_occupied: self.n_occupied,
        })
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        if self.hermitian {
            let (vals, _) = linalg::eigh(&self.balanced)?;
            Ok(vals.into_iter().map(|x| C64::new(x, 0.0)).collect())
        } else {
            linalg::eigvals(&self.balanced)
        }
    }
}

pub fn correlation_matrix(
    sys: &BiorthogonalSystem,
    sel: &GroundStateSelection,
    part: &Partition,
) -> Result<CorrelationMatrix> {
    if part.space != sys.basis() {
        return Err(Error::Unsupported(format!(
            "{:?}-space partition on a system diagonalized in the {:?} basis; apply momentum_transform first",
            part.space,
            sys.basis()
        )));
    }
    if part.n_modes != sys.dim() {
        return Err(Error::Partition(format!(
            "partition over {} modes applied to a {}-mode system",
            part.n_modes,
            sys.dim()
        )));
    }
    let (r, l) = sys.occupied_rows(&sel.occupied, part.indices());
    let mut c = r.dot(&linalg::dagger(&l));
    if sys.is_hermitian() {
        c = (&c + &linalg::dagger(&c)).mapv(|z| z * 0.5);
    }
    let scale: Vec<f64> = part.indices().iter().map(|&i| sys.balancing_scale()[i]).collect();
    Ok(CorrelationMatrix {
        partition: part.clone(),
        balanced: c,
        scale,
        hermitian: sys.is_hermitian(),
        n_occupied: sel.occupied.len(),
    })
}

/// Unitary discrete Fourier matrix of a periodic kernel's cell lattice,
/// `F[(m, s), (x, s')] = delta_{s s'} exp(-i k_m . x) / sqrt(N_cells)`.
pub fn fourier_matrix(k: &KernelMatrix) -> Result<CMat> {
    if k.bc != Boundary::Periodic {
        return Err(Error::Unsupported("momentum transform needs periodic boundaries".into()));
    }
    let o = k.orbitals;
    let n = k.dim();
    let cells = k.cells();
    let coords = |i: usize| -> Vec<usize> {
        let mut rest = i;
        k.shape
            .iter()
            .map(|&len| {
                let c = rest % len;
                rest /= len;
                c
            })
            .collect()
    };
    let twists: Vec<f64> = (0..k.shape.len()).map(|a| if a == 0 { k.twist } else { 0.0 }).collect();
    let norm = (cells as f64).sqrt();
    let mut f = CMat::zeros((n, n));
    for m in 0..cells {
        let mc = coords(m);
        for x in 0..cells {
            let xc = coords(x);
            let mut phase = 0.0;
            for a in 0..k.shape.len() {
                let km = (2.0 * PI * mc[a] as f64 + twists[a]) / k.shape[a] as f64;
                phase -= km * xc[a] as f64;
            }
            let z = C64::from_polar(1.0 / norm, phase);
            for s in 0..o {
                f[[m * o + s, x * o + s]] = z;
            }
        }
    }
    Ok(f)
}

/// `F K F^dag`; mode `(m, s)` of the result is momentum `k_m` on orbital `s`.
pub fn momentum_transform(k: &KernelMatrix) -> Result<KernelMatrix> {
    let f = fourier_matrix(k)?;
    let entries = f.dot(&k.entries).dot(&linalg::dagger(&f));
    let o = k.orbitals;
    Ok(KernelMatrix {
        entries,
        bc: k.bc,
        basis: Basis::Momentum,
        site_labels: (0..k.dim()).map(|i| SiteLabel { cell: i / o, sublattice: i % o }).collect(),
        shape: k.shape.clone(),
        orbitals: o,
        twist: k.twist,
    })
}

/// `P = sum_{a in occ} |R_a><L_a|` in the original frame.
pub fn projector_p(sys: &BiorthogonalSystem, sel: &GroundStateSelection) -> CMat {
    let p = sys.balanced_projector(&sel.occupied);
    let neg: Vec<f64> = sys.balancing_scale().iter().map(|x| -x).collect();
    linalg::apply_scale(&p, &neg)
}

/// Correlation matrix of the ground state viewed in momentum space: the
/// block of `F P F^dag` on a momentum-basis partition. Works for any
/// periodic kernel, whatever basis `sys` was diagonalized in.
pub fn momentum_correlation(
    k: &KernelMatrix,
    sys: &BiorthogonalSystem,
    sel: &GroundStateSelection,
    part: &Partition,
) -> Result<CorrelationMatrix> {
    if part.space != Basis::Momentum {
        return Err(Error::Partition("momentum_correlation needs a momentum-basis partition".into()));
    }
    if part.n_modes != k.dim() {
        return Err(Error::Partition(format!(
            "partition over {} modes applied to a {}-mode system",
            part.n_modes,
            k.dim()
        )));
    }
    let f = fourier_matrix(k)?;
    let pk = f.dot(&projector_p(sys, sel)).dot(&linalg::dagger(&f));
    let idx = part.indices();
    let block = CMat::from_shape_fn((idx.len(), idx.len()), |(i, j)| pk[[idx[i], idx[j]]]);
    if sys.is_hermitian() {
        CorrelationMatrix::from_hermitian(block, part.clone())
    } else {
        CorrelationMatrix::from_matrix(block, part.clone())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    /// Spectrum of `C_A`, the nontrivial block of `R P R`.
    pub rpr: Vec<C64>,
    /// Spectrum of `P R P` restricted to the occupied subspace.
    pub prp: Vec<C64>,
    pub max_mismatch: f64,
    pub nonzero_rpr: usize,
    pub nonzero_prp: usize,
    /// Whether the single-particle spectrum was real (the regime in which
    /// the equality is a theorem); complex spectra are checked anyway.
    pub real_spectrum: bool,
}

pub fn check_duality(
    sys: &BiorthogonalSystem,
    sel: &GroundStateSelection,
    part: &Partition,
) -> Result<DualityReport> {
    let c = correlation_matrix(sys, sel, part)?;
    let rpr = c.eigenvalues()?;
    let (r, l) = sys.occupied_rows(&sel.occupied, part.indices());
    let g = linalg::dagger(&l).dot(&r);
    let prp = linalg::eigvals(&g)?;
    let nz = |v: &[C64]| v.iter().filter(|z| z.norm() > 1e-9).count();
    Ok(DualityReport {
        max_mismatch: linalg::multiset_distance(&rpr, &prp),
        nonzero_rpr: nz(&rpr),
        nonzero_prp: nz(&prp),
        real_spectrum: sys.eigenvalues().iter().all(|e| e.im.abs() < 1e-9),
        rpr,
        prp,
    })
}

/// Restriction operator `R` onto a partition as an `N x N` 0/1 diagonal.
pub fn restriction(part: &Partition) -> CMat {
    let mut r = CMat::zeros((part.n_modes, part.n_modes));
    for &i in part.indices() {
        r[[i, i]] = linalg::ONE;
    }
    r
}

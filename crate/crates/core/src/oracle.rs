//! Brute-force Fock-space reference for small systems.
//!
//! Basis state `s` has bit `i` set when mode `i` is occupied, and
//! `c_i^dag` carries the Jordan-Wigner sign `(-1)^{sum_{j<i} n_j}`. Modes
//! of the kept subsystem are placed first so the partial trace over the
//! rest is a plain block trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corr::{correlation_matrix, Partition};
use crate::ent::{entanglement_report, modified_entropy_complex, EntOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::model_zoo::{Basis, KernelMatrix};
use crate::spectra::{biorthogonal_eig, select_from_eigenvalues, select_occupied, Filling, OrderingPolicy};

pub const MAX_MODES: usize = 14;
/// Relative gap below which two many-body eigenvalues count as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Number-conserving many-body operator, stored by particle-number sector.
#[derive(Clone, Debug)]
pub struct FockOperator {
    pub n_modes: usize,
    /// Original mode label of each Fock mode (kept subsystem first).
    pub mode_order: Vec<usize>,
    /// Single-particle kernel in Fock mode order.
    pub kernel: CMat,
    /// `sectors[n]` lists the basis states with `n` particles, ascending.
    sectors: Vec<Vec<usize>>,
    blocks: Vec<CMat>,
}

impl FockOperator {
    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    pub fn sector_states(&self, n: usize) -> &[usize] {
        &self.sectors[n]
    }

    pub fn block(&self, n: usize) -> &CMat {
        &self.blocks[n]
    }

    /// Full `2^N x 2^N` matrix.
    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros((self.dim(), self.dim()));
        for (states, b) in self.sectors.iter().zip(&self.blocks) {
            for (a, &s) in states.iter().enumerate() {
                for (c, &t) in states.iter().enumerate() {
                    m[[s, t]] = b[[a, c]];
                }
            }
        }
        m
    }
}

fn jw_sign(s: usize, i: usize) -> f64 {
    if (s & ((1 << i) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `c_i^dag c_j |s>` as `(sign, s')`, or `None` when it vanishes.
fn hop(s: usize, i: usize, j: usize) -> Option<(f64, usize)> {
    if s & (1 << j) == 0 {
        return None;
    }
    let mid = s ^ (1 << j);
    if mid & (1 << i) != 0 {
        return None;
    }
    Some((jw_sign(s, j) * jw_sign(mid, i), mid | (1 << i)))
}

pub fn fock_hamiltonian(k: &KernelMatrix) -> Result<FockOperator> {
    let order: Vec<usize> = (0..k.dim()).collect();
    fock_hamiltonian_ordered(k, &order)
}

/// Kept modes first, then the complement, both ascending.
pub fn a_first_order(part: &Partition) -> Vec<usize> {
    let mut order = part.indices().to_vec();
    order.extend(part.complement());
    order
}

/// `sum K_ij c_i^dag c_j` with Fock mode `p` standing for `mode_order[p]`.
pub fn fock_hamiltonian_ordered(k: &KernelMatrix, mode_order: &[usize]) -> Result<FockOperator> {
    let n = k.dim();
    if n > MAX_MODES {
        return Err(Error::Size(format!("{n} modes exceeds the Fock-space limit of {MAX_MODES}")));
    }
    let mut sorted = mode_order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::Ordering("mode order must be a permutation of all modes".into()));
    }
    let kernel = k.entries.select(ndarray::Axis(0), mode_order).select(ndarray::Axis(1), mode_order);
    let mut sectors = vec![Vec::new(); n + 1];
    for s in 0..(1usize << n) {
        sectors[s.count_ones() as usize].push(s);
    }
    let mut blocks = Vec::with_capacity(n + 1);
    for states in &sectors {
        let mut b = CMat::zeros((states.len(), states.len()));
        for (col, &s) in states.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let kij = kernel[[i, j]];
                    if kij == ZERO {
                        continue;
                    }
                    if let Some((sign, t)) = hop(s, i, j) {
                        let row = states.binary_search(&t).unwrap();
                        b[[row, col]] += kij * sign;
                    }
                }
            }
        }
        blocks.push(b);
    }
    Ok(FockOperator { n_modes: n, mode_order: mode_order.to_vec(), kernel, sectors, blocks })
}

#[derive(Clone, Debug)]
pub struct ManyBodyGround {
    pub right: Vec<C64>,
    pub left: Vec<C64>,
    pub energy: C64,
    /// Sum of the occupied single-particle eigenvalues.
    pub target: C64,
    /// Distance from `energy` to the nearest other eigenvalue of the sector.
    pub gap: f64,
}

/// Right and left many-body eigenvectors of the `n_particles` sector at the
/// eigenvalue matching the occupied single-particle sum, with
/// `<G_L|G_R> = 1` and `|G_R| = 1`.
pub fn manybody_biortho_ground(h: &FockOperator, n_particles: usize, policy: OrderingPolicy) -> Result<ManyBodyGround> {
    let n = h.n_modes;
    if n_particles > n {
        return Err(Error::InvalidParameter(format!("{n_particles} particles in {n} modes")));
    }
    let sp = linalg::eigvals(&h.kernel)?;
    let sel = select_from_eigenvalues(&sp, Filling::new(n_particles as u64, n.max(1) as u64)?, policy);
    let target: C64 = sel.occupied.iter().map(|&i| sp[i]).sum();

    let block = &h.blocks[n_particles];
    let (vals, vecs) = linalg::eig(block)?;
    let pick = nearest(&vals, target);
    let energy = vals[pick];
    let gap = vals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pick)
        .map(|(_, v)| (v - energy).norm())
        .fold(f64::INFINITY, f64::min);
    if gap <= DEGENERACY_GAP * (1.0 + energy.norm()) {
        return Err(Error::Degeneracy { energy, gap });
    }
    let (lvals, lvecs) = linalg::eig(&linalg::dagger(block))?;
    let lpick = nearest(&lvals, energy.conj());

    let mut r: Vec<C64> = vecs.column(pick).to_vec();
    let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    r.iter_mut().for_each(|z| *z /= norm);
    let mut l: Vec<C64> = lvecs.column(lpick).to_vec();
    let overlap: C64 = l.iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
    if overlap.norm() < 1e-12 {
        return Err(Error::Degeneracy { energy, gap: overlap.norm() });
    }
    l.iter_mut().for_each(|z| *z /= overlap.conj());

    let states = &h.sectors[n_particles];
    let mut right = vec![ZERO; h.dim()];
    let mut left = vec![ZERO; h.dim()];
    for (a, &s) in states.iter().enumerate() {
        right[s] = r[a];
        left[s] = l[a];
    }
    Ok(ManyBodyGround { right, left, energy, target, gap })
}

fn nearest(vals: &[C64], z: C64) -> usize {
    (0..vals.len()).min_by(|&a, &b| (vals[a] - z).norm().total_cmp(&(vals[b] - z).norm())).unwrap()
}

/// `|G_R><G_L|` as a dense matrix.
pub fn density_matrix(g: &ManyBodyGround) -> CMat {
    let d = g.right.len();
    CMat::from_shape_fn((d, d), |(i, j)| g.right[i] * g.left[j].conj())
}

/// Trace over every mode but the leading `keep`. `keep` must be
/// `0..N_A` in Fock mode order.
pub fn partial_trace(rho: &CMat, n_modes: usize, keep: &[usize]) -> Result<CMat> {
    if rho.nrows() != 1 << n_modes || rho.ncols() != rho.nrows() {
        return Err(Error::Size(format!("density matrix {:?} is not 2^{n_modes} square", rho.dim())));
    }
    if keep.iter().enumerate().any(|(p, &m)| p != m) || keep.len() > n_modes {
        return Err(Error::Ordering(format!(
            "kept modes {keep:?} are not the leading block; reorder modes before building the Fock operator"
        )));
    }
    let da = 1usize << keep.len();
    let db = 1usize << (n_modes - keep.len());
    let mut out = CMat::zeros((da, da));
    for a in 0..da {
        for ap in 0..da {
            let mut acc = ZERO;
            for b in 0..db {
                acc += rho[[a + da * b, ap + da * b]];
            }
            out[[a, ap]] = acc;
        }
    }
    Ok(out)
}

/// `Tr_B |G_R><G_L|` without forming the full density matrix.
pub fn reduced_density_matrix(g: &ManyBodyGround, n_keep: usize) -> CMat {
    let da = 1usize << n_keep;
    let db = g.right.len() / da;
    let r = CMat::from_shape_fn((da, db), |(a, b)| g.right[a + da * b]);
    let l = CMat::from_shape_fn((da, db), |(a, b)| g.left[a + da * b]);
    r.dot(&linalg::dagger(&l))
}

/// `C_ij = <G_L| c_j^dag c_i |G_R>` in Fock mode order.
pub fn fock_correlation(g: &ManyBodyGround, n_modes: usize) -> CMat {
    let mut c = CMat::zeros((n_modes, n_modes));
    for (s, &amp) in g.right.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        for i in 0..n_modes {
            for j in 0..n_modes {
                if let Some((sign, t)) = hop(s, j, i) {
                    c[[i, j]] += g.left[t].conj() * amp * sign;
                }
            }
        }
    }
    c
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub eigenvalues: Vec<C64>,
    pub entropy_vn: C64,
    pub entropy_modified: C64,
    pub condition: f64,
}

/// Eigenvalues of `rho_A`, `-Tr rho ln rho` (principal branch) and
/// `-Tr rho ln|rho|`.
pub fn oracle_report(rho_a: &CMat) -> Result<OracleReport> {
    let (vals, v) = linalg::eig(rho_a)?;
    let vinv = linalg::inv(&v)?;
    let condition = linalg::cond1(&v, &vinv);
    if condition > 1e12 {
        return Err(Error::Defective { condition, threshold: 1e12, clustered: vals });
    }
    let live = || vals.iter().filter(|z| z.norm() > 1e-300);
    let entropy_vn = -live().map(|&z| z * z.ln()).sum::<C64>();
    let entropy_modified = -live().map(|&z| z * z.norm().ln()).sum::<C64>();
    let mut eigenvalues = vals.clone();
    linalg::sort_complex(&mut eigenvalues);
    Ok(OracleReport { eigenvalues, entropy_vn, entropy_modified, condition })
}

/// All `2^n` products `prod_k (eps_k or 1 - eps_k)`.
pub fn product_spectrum(eps: &[C64]) -> Vec<C64> {
    let mut out = vec![ONE];
    for &e in eps {
        out = out.iter().flat_map(|&p| [p * e, p * (ONE - e)]).collect();
    }
    out
}

/// Products as in `product_spectrum`, each with the winding number `k` in
/// `Ln(prod f) = sum Ln f + 2 pi i k` (principal logarithms).
pub fn product_windings(eps: &[C64]) -> Vec<(C64, i64)> {
    let mut out = vec![(ONE, 0.0f64)];
    for &e in eps {
        out = out
            .iter()
            .flat_map(|&(p, a)| [(p * e, a + e.arg()), (p * (ONE - e), a + (ONE - e).arg())])
            .collect();
    }
    out.into_iter()
        .map(|(p, a)| (p, ((p.arg() - a) / (2.0 * std::f64::consts::PI)).round() as i64))
        .collect()
}

/// Comparison of the correlation-matrix pipeline against the Fock oracle.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCase {
    pub n_modes: usize,
    pub n_keep: usize,
    pub s_corr: C64,
    pub s_oracle: C64,
    pub s_mod_corr: f64,
    pub s_mod_oracle: C64,
    /// `|S_corr - S_oracle|`.
    pub entropy_residual: f64,
    pub modified_residual: f64,
    /// Multiset distance between `rho_A` eigenvalues and the products.
    pub spectrum_residual: f64,
    /// `max|rho^2 - rho| / max|rho|`.
    pub idempotence_residual: f64,
    /// `max|C_corr - C_fock|` on the full system.
    pub correlation_residual: f64,
    pub energy_residual: f64,
    /// Products of the single-particle factors whose principal logarithm
    /// wraps; for these the per-mode and many-body entropies differ by
    /// `winding_correction`.
    pub branch_windings: usize,
    /// `-2 pi i sum_lambda lambda k_lambda`, the predicted `S_oracle - S_corr`.
    pub winding_correction: C64,
}

impl OracleCase {
    pub fn passes(&self, entropy_tol: f64, spectrum_tol: f64, rho_tol: f64) -> bool {
        self.entropy_residual < entropy_tol
            && self.modified_residual < entropy_tol
            && self.spectrum_residual < spectrum_tol
            && self.idempotence_residual < rho_tol
    }
}

pub fn run_case(k: &KernelMatrix, part: &Partition, filling: Filling, policy: OrderingPolicy) -> Result<OracleCase> {
    if part.space != Basis::Position || part.n_modes() != k.dim() {
        return Err(Error::Partition("oracle partitions are position-space subsets of the kernel modes".into()));
    }
    let n = k.dim();
    let sys = biorthogonal_eig(k)?;
    let sel = select_occupied(&sys, filling, policy);
    let cm = correlation_matrix(&sys, &sel, part)?;
    let rep = entanglement_report(&cm, &EntOptions::default())?;
    let full = correlation_matrix(&sys, &sel, &Partition::full(Basis::Position, n))?.entries();

    let order = a_first_order(part);
    let h = fock_hamiltonian_ordered(k, &order)?;
    let g = manybody_biortho_ground(&h, sel.occupied.len(), policy)?;
    let rho = density_matrix(&g);
    let rho_sq = rho.dot(&rho);
    let idempotence_residual = linalg::max_abs_diff(rho_sq.view(), rho.view()) / linalg::max_abs(&rho);
    let keep: Vec<usize> = (0..part.len()).collect();
    let rho_a = partial_trace(&rho, n, &keep)?;
    let orep = oracle_report(&rho_a)?;

    let fc = fock_correlation(&g, n);
    let mut back = CMat::zeros((n, n));
    for (p, &i) in order.iter().enumerate() {
        for (q, &j) in order.iter().enumerate() {
            back[[i, j]] = fc[[p, q]];
        }
    }
    let correlation_residual = linalg::max_abs_diff(back.view(), full.view());

    let products = product_spectrum(&rep.correlation_eigenvalues);
    let windings = product_windings(&rep.correlation_eigenvalues);
    let branch_windings = windings.iter().filter(|w| w.1 != 0).count();
    let winding_correction: C64 = windings
        .iter()
        .map(|&(p, k)| p * C64::new(0.0, -2.0 * std::f64::consts::PI * k as f64))
        .sum();
    Ok(OracleCase {
        n_modes: n,
        n_keep: part.len(),
        s_corr: rep.entropy_vn,
        s_oracle: orep.entropy_vn,
        s_mod_corr: rep.entropy_modified,
        s_mod_oracle: orep.entropy_modified,
        entropy_residual: (rep.entropy_vn - orep.entropy_vn).norm(),
        modified_residual: (modified_entropy_complex(&rep.correlation_eigenvalues) - orep.entropy_modified).norm(),
        spectrum_residual: linalg::multiset_distance(&orep.eigenvalues, &products),
        idempotence_residual,
        correlation_residual,
        energy_residual: (g.energy - g.target).norm(),
        branch_windings,
        winding_correction,
    })
}

/// `K = H + i eta H'` with independent random Hermitian `H`, `H'`
/// (entries uniform in the unit square).
pub fn random_kernel(n: usize, eta: f64, seed: u64) -> Result<KernelMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut herm = || {
        let a = CMat::from_shape_fn((n, n), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + &linalg::dagger(&a)).mapv(|z| z * 0.5)
    };
    let h = herm();
    let hp = herm();
    KernelMatrix::from_matrix(&h + &hp.mapv(|z| z * C64::new(0.0, eta)))
}

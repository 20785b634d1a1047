//! Dense complex helpers shared by the numeric modules.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, EigVals, Eigh, Inverse, Solve, QR, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

pub fn identity(n: usize) -> CMat {
    Array2::from_diag_elem(n, ONE)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    let n = a.nrows();
    let scale = max_abs(a).max(1.0);
    for i in 0..n {
        for j in i..n {
            if (a[[i, j]] - a[[j, i]].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &CMat) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number given a matrix and its inverse.
pub fn cond1(a: &CMat, ainv: &CMat) -> f64 {
    norm1(a) * norm1(ainv)
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

pub fn eig(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    let (vals, vecs) = a.eig()?;
    Ok((vals.to_vec(), vecs))
}

pub fn eigvals(a: &CMat) -> Result<Vec<C64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    Ok(a.eigvals()?.to_vec())
}

pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    // ndarray-linalg hands row-major input to LAPACK as its transpose, which
    // for a Hermitian matrix conjugates the eigenvectors. Go column-major.
    let f = a.t().as_standard_layout().reversed_axes().to_owned();
    let (vals, vecs) = f.eigh(UPLO::Upper)?;
    Ok((vals.to_vec(), vecs))
}

pub fn inv(a: &CMat) -> Result<CMat> {
    Ok(a.inv()?)
}

/// Log-domain diagonal scaling `d` such that `exp(-d_i) K_ij exp(d_j)` has
/// `|K'_ij| = |K'_ji|` in the least-squares sense over all bonds that are
/// nonzero in both directions. Exact on trees (open chains); on loops the
/// inconsistent part of the ratio field is left in place.
pub fn symmetrizing_scale(k: &CMat) -> Result<Vec<f64>> {
    let n = k.nrows();
    let floor = max_abs(k) * 1e-14;
    let mut lap = Array2::<f64>::zeros((n, n));
    let mut rhs = Array1::<f64>::zeros(n);
    let mut any = false;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = k[[i, j]].norm();
            let b = k[[j, i]].norm();
            if a <= floor || b <= floor {
                continue;
            }
            let target = 0.5 * (b.ln() - a.ln());
            if target.abs() > 1e-15 {
                any = true;
            }
            lap[[i, i]] += 1.0;
            lap[[j, j]] += 1.0;
            lap[[i, j]] -= 1.0;
            lap[[j, i]] -= 1.0;
            rhs[i] -= target;
            rhs[j] += target;
        }
    }
    if !any {
        return Ok(vec![0.0; n]);
    }
    // Pin one node per connected component.
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        lap[[root, root]] += 1.0;
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if w != v && !seen[w] && lap[[v, w]] != 0.0 {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    let d = lap.solve_into(rhs)?;
    Ok(d.to_vec())
}

/// `exp(-d) K exp(d)` for a log-domain diagonal `d`.
pub fn apply_scale(k: &CMat, d: &[f64]) -> CMat {
    let mut out = k.clone();
    for ((i, j), z) in out.indexed_iter_mut() {
        if d[i] != d[j] {
            *z *= (d[j] - d[i]).exp();
        }
    }
    out
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by degree-13 Pade approximation with scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));
    let b = PADE13;
    let id = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a.dot(&(a6.dot(&inner_u) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]));
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = a6.dot(&inner_v) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = inv(&(&v - &u))?.dot(&(&v + &u));
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Thin QR orthonormalization of the columns of `m`. Returns `None` when a
/// diagonal entry of R falls below `rank_tol` relative to the largest one.
pub fn orthonormalize(m: &CMat, rank_tol: f64) -> Result<Option<CMat>> {
    let (q, r) = m.qr()?;
    let dmax = r.diag().iter().fold(0.0f64, |x, z| x.max(z.norm()));
    let dmin = r.diag().iter().fold(f64::INFINITY, |x, z| x.min(z.norm()));
    if !(dmax > 0.0) || dmin < rank_tol * dmax {
        return Ok(None);
    }
    Ok(Some(q))
}

/// Greedy nearest-neighbour pairing of two multisets, after sorting both by
/// (Re, Im). The shorter list is padded with zeros. Returns the largest
/// paired distance.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    let n = a.len().max(b.len());
    let mut x: Vec<C64> = a.to_vec();
    let mut y: Vec<C64> = b.to_vec();
    x.resize(n, ZERO);
    y.resize(n, ZERO);
    sort_complex(&mut x);
    sort_complex(&mut y);
    let mut used = vec![false; n];
    let mut worst = 0.0f64;
    for z in &x {
        let mut best = usize::MAX;
        let mut bd = f64::INFINITY;
        for (j, w) in y.iter().enumerate() {
            if !used[j] && (z - w).norm() < bd {
                bd = (z - w).norm();
                best = j;
            }
        }
        used[best] = true;
        worst = worst.max(bd);
    }
    worst
}

pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

pub(crate) fn check_finite(a: &CMat) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("matrix has non-finite entries".into()))
    }
}

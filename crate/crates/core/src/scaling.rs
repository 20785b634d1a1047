//! Central-charge fits of entropy-vs-size data and Fermi-point counting on
//! momentum-resolved band structures.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corr::{correlation_matrix, momentum_transform, CorrelationMatrix, Partition};
use crate::ent::vn_entropy;
use crate::error::{Error, Result, Warning, WarningKind};
use crate::linalg::{self, C64};
use crate::model_zoo::{Basis, Boundary, KernelMatrix};
use crate::spectra::{select_from_eigenvalues, BiorthogonalSystem, Filling, GroundStateSelection, OrderingPolicy};

pub const MIN_POINTS: usize = 4;
pub const DEFAULT_MAX_IMAG: f64 = 1e-6;
/// Change in `c` tolerated when the window shrinks by one point per end.
pub const WINDOW_STABILITY: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `S = (c/3) ln sin(pi L_A / L) + b`, periodic chains.
    Chord,
    /// `S = (c/3) ln L_A + b`.
    OpenLog,
}

impl std::str::FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chord" => Ok(Geometry::Chord),
            "open_log" => Ok(Geometry::OpenLog),
            other => Err(Error::InvalidParameter(format!("unknown geometry `{other}` (chord, open_log)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub total_length: usize,
    pub points: Vec<(usize, C64)>,
    pub geometry: Geometry,
}

impl ScalingSeries {
    pub fn new(total_length: usize, points: Vec<(usize, C64)>, geometry: Geometry) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParameter(format!(
                    "subsystem sizes must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(la, _)) = points.iter().find(|p| p.0 < 1 || p.0 >= total_length) {
            return Err(Error::InvalidParameter(format!(
                "subsystem size {la} outside 1..{total_length}"
            )));
        }
        Ok(ScalingSeries { total_length, points, geometry })
    }

    fn abscissa(&self, la: usize) -> f64 {
        match self.geometry {
            Geometry::Chord => (PI * la as f64 / self.total_length as f64).sin().ln(),
            Geometry::OpenLog => (la as f64).ln(),
        }
    }

    pub fn default_window(&self) -> (usize, usize) {
        (4, self.total_length.saturating_sub(4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Inclusive `(L_A_min, L_A_max)`; `None` means `(4, L - 4)`.
    pub window: Option<(usize, usize)>,
    /// Points with `|Im S|` above this are unusable.
    pub max_imag: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { window: None, max_imag: DEFAULT_MAX_IMAG }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub window: (usize, usize),
    pub n_points: usize,
    /// Points inside the window dropped for a large imaginary part.
    pub rejected_imag: usize,
}

impl FitResult {
    pub fn slope(&self) -> f64 {
        self.c / 3.0
    }
}

pub fn fit_central_charge(series: &ScalingSeries) -> Result<FitResult> {
    fit_central_charge_with(series, &FitOptions::default())
}

pub fn fit_central_charge_with(series: &ScalingSeries, opts: &FitOptions) -> Result<FitResult> {
    let (lo, hi) = opts.window.unwrap_or_else(|| series.default_window());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rejected_imag = 0;
    for &(la, s) in &series.points {
        if la < lo || la > hi {
            continue;
        }
        if !(s.im.abs() <= opts.max_imag) || !s.re.is_finite() {
            rejected_imag += 1;
            continue;
        }
        xs.push(series.abscissa(la));
        ys.push(s.re);
    }
    let n = xs.len();
    if n < MIN_POINTS {
        return Err(Error::InsufficientData { usable: n, min: lo, max: hi });
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(FitResult {
        c: 3.0 * slope,
        intercept,
        rms_residual: (ss / n as f64).sqrt(),
        window: (lo, hi),
        n_points: n,
        rejected_imag,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub full: FitResult,
    pub shrunk: FitResult,
    pub delta_c: f64,
    pub converged: bool,
}

/// Refit with the window shrunk by one usable point at each end.
pub fn window_robustness(series: &ScalingSeries, opts: &FitOptions) -> Result<WindowCheck> {
    let full = fit_central_charge_with(series, opts)?;
    let (lo, hi) = full.window;
    let inside: Vec<usize> = series.points.iter().map(|p| p.0).filter(|&la| la >= lo && la <= hi).collect();
    if inside.len() < MIN_POINTS + 2 {
        return Err(Error::InsufficientData { usable: inside.len().saturating_sub(2), min: lo, max: hi });
    }
    let window = Some((inside[1], inside[inside.len() - 2]));
    let shrunk = fit_central_charge_with(series, &FitOptions { window, ..*opts })?;
    let delta_c = (shrunk.c - full.c).abs();
    Ok(WindowCheck { full, shrunk, delta_c, converged: delta_c < WINDOW_STABILITY })
}

/// Entropies of the contiguous blocks of the first `L_A` cells, for every
/// `L_A` in `sizes` (cells, strictly increasing, each below the cell count).
pub fn entropy_series(
    k: &KernelMatrix,
    sys: &BiorthogonalSystem,
    sel: &GroundStateSelection,
    sizes: &[usize],
    geometry: Geometry,
) -> Result<(ScalingSeries, Vec<Warning>)> {
    if k.shape.len() != 1 {
        return Err(Error::Unsupported("entropy series are defined for chains".into()));
    }
    let cells = k.cells();
    let o = k.orbitals;
    let series = ScalingSeries::new(cells, sizes.iter().map(|&l| (l, C64::new(0.0, 0.0))).collect(), geometry)?;
    let largest = match sizes.last() {
        Some(&l) => l,
        None => return Ok((series, Vec::new())),
    };
    let parent = correlation_matrix(sys, sel, &Partition::range(Basis::Position, 0, largest * o, k.dim())?)?;
    let mut points = Vec::with_capacity(sizes.len());
    let mut warnings = Vec::new();
    for &la in sizes {
        let cm = parent.restrict(&Partition::range(Basis::Position, 0, la * o, k.dim())?)?;
        let s = block_entropy(&cm)?;
        if s.im.abs() > 1e-9 {
            warnings.push(Warning::new(WarningKind::Realness, format!("L_A = {la}: Im S = {:.3e}", s.im)));
        }
        points.push((la, s));
    }
    Ok((ScalingSeries { points, ..series }, warnings))
}

fn block_entropy(cm: &CorrelationMatrix) -> Result<C64> {
    let mut eps = cm.eigenvalues()?;
    if cm.is_hermitian() {
        for e in eps.iter_mut() {
            *e = C64::new(e.re.clamp(0.0, 1.0), 0.0);
        }
    }
    Ok(vn_entropy(&eps))
}

/// `lo, lo + stride, ...` up to and including `hi` when it lies on the grid.
pub fn size_grid(lo: usize, hi: usize, stride: usize) -> Vec<usize> {
    (lo..=hi).step_by(stride.max(1)).collect()
}

/// Band energies `E_b(k_m)` on the periodic momentum grid, with band labels
/// carried continuously across `m`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentumBands {
    pub momenta: Vec<f64>,
    /// `energies[[m, b]]`.
    pub energies: Array2<C64>,
    /// Band `b` at the last momentum continues into band `closure[b]` at the
    /// first one.
    pub closure: Vec<usize>,
}

pub fn momentum_bands(k: &KernelMatrix) -> Result<MomentumBands> {
    if k.bc != Boundary::Periodic {
        return Err(Error::Unsupported("Fermi points need a periodic momentum grid".into()));
    }
    if k.shape.len() != 1 {
        return Err(Error::Unsupported("Fermi-point counting is implemented for chains".into()));
    }
    let kk = match k.basis {
        Basis::Position => momentum_transform(k)?,
        Basis::Momentum => k.clone(),
    };
    let cells = kk.cells();
    let o = kk.orbitals;
    let mut raw = Vec::with_capacity(cells);
    for m in 0..cells {
        let idx: Vec<usize> = (m * o..(m + 1) * o).collect();
        let block = crate::spectra::block(&kk.entries, &idx);
        let mut e = linalg::eigvals(&block)?;
        linalg::sort_complex(&mut e);
        raw.push(e);
    }
    let mut energies = Array2::<C64>::zeros((cells, o));
    for b in 0..o {
        energies[[0, b]] = raw[0][b];
    }
    for m in 1..cells {
        let pred = predict(&energies, m);
        let perm = best_match(&pred, &raw[m]);
        for b in 0..o {
            energies[[m, b]] = raw[m][perm[b]];
        }
    }
    let closure = if cells >= 2 {
        best_match(&predict(&energies, cells), &raw[0])
    } else {
        (0..o).collect()
    };
    Ok(MomentumBands { momenta: kk.momenta(), energies, closure })
}

fn predict(e: &Array2<C64>, m: usize) -> Vec<C64> {
    let o = e.ncols();
    (0..o)
        .map(|b| if m >= 2 { e[[m - 1, b]] * 2.0 - e[[m - 2, b]] } else { e[[m - 1, b]] })
        .collect()
}

/// Assignment `band -> candidate index` minimizing the summed distance.
fn best_match(pred: &[C64], cand: &[C64]) -> Vec<usize> {
    let o = pred.len();
    if o > 7 {
        // Greedy beyond a handful of bands.
        let mut used = vec![false; o];
        return pred
            .iter()
            .map(|p| {
                let j = (0..o)
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| (cand[a] - p).norm().total_cmp(&(cand[b] - p).norm()))
                    .unwrap();
                used[j] = true;
                j
            })
            .collect();
    }
    let mut best = (f64::INFINITY, (0..o).collect::<Vec<_>>());
    let mut perm: Vec<usize> = (0..o).collect();
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(b, &j)| (cand[j] - pred[b]).norm()).sum();
        if cost < best.0 {
            best = (cost, p.to_vec());
        }
    });
    best.1
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FermiCount {
    pub n_f: usize,
    /// Switch count along each closed band loop (cycles of the closure map).
    pub per_loop: Vec<usize>,
    /// `occupied[[m, b]]` under the global selection.
    pub occupied: Array2<bool>,
    pub warnings: Vec<Warning>,
}

/// Number of occupied/unoccupied boundaries along the tracked bands,
/// traversed cyclically through the momentum grid.
pub fn count_fermi_points(k: &KernelMatrix, filling: Filling, policy: OrderingPolicy) -> Result<FermiCount> {
    let bands = momentum_bands(k)?;
    Ok(fermi_points_of(&bands, filling, policy))
}

pub fn fermi_points_of(bands: &MomentumBands, filling: Filling, policy: OrderingPolicy) -> FermiCount {
    let (cells, o) = bands.energies.dim();
    let flat: Vec<C64> = bands.energies.iter().copied().collect();
    let sel = select_from_eigenvalues(&flat, filling, policy);
    let mut occupied = Array2::from_elem((cells, o), false);
    for &i in &sel.occupied {
        occupied[[i / o, i % o]] = true;
    }
    let mut seen = vec![false; o];
    let mut per_loop = Vec::new();
    for start in 0..o {
        if seen[start] {
            continue;
        }
        let mut trail = Vec::new();
        let mut b = start;
        while !seen[b] {
            seen[b] = true;
            trail.extend((0..cells).map(|m| occupied[[m, b]]));
            b = bands.closure[b];
        }
        let switches = (0..trail.len()).filter(|&i| trail[i] != trail[(i + 1) % trail.len()]).count();
        per_loop.push(switches);
    }
    FermiCount { n_f: per_loop.iter().sum(), per_loop, occupied, warnings: sel.warnings }
}

#[derive(Clone, Debug, Serialize)]
pub struct LifshitzScan {
    pub points: Vec<(f64, usize)>,
    /// First `(gamma_before, gamma_after)` bracket where `N_f` changes.
    pub bracket: Option<(f64, f64)>,
}

pub fn lifshitz_scan(
    gammas: &[f64],
    build: impl Fn(f64) -> Result<KernelMatrix>,
    filling: Filling,
    policy: OrderingPolicy,
) -> Result<LifshitzScan> {
    let mut points = Vec::with_capacity(gammas.len());
    for &g in gammas {
        points.push((g, count_fermi_points(&build(g)?, filling, policy)?.n_f));
    }
    let bracket = points.windows(2).find(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0));
    Ok(LifshitzScan { points, bracket })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::{build_guo_chain, build_hatano_nelson, build_nh_ssh_real};
    use crate::spectra::{biorthogonal_eig, select_occupied};
    use proptest::prelude::*;

    fn synthetic(l: usize, c: f64, b: f64, geometry: Geometry) -> ScalingSeries {
        let mut s = ScalingSeries::new(l, vec![], geometry).unwrap();
        s.points = (1..l).map(|la| (la, C64::new(c / 3.0 * s.abscissa(la) + b, 0.0))).collect();
        s
    }

    #[test]
    fn synthetic_round_trip() {
        let f = fit_central_charge(&synthetic(128, 1.0, 2.0, Geometry::Chord)).unwrap();
        assert!((f.c - 1.0).abs() < 1e-12 && (f.intercept - 2.0).abs() < 1e-12);
        assert!(f.rms_residual < 1e-12);
        assert_eq!(f.window, (4, 124));
    }

    #[test]
    fn quoted_slope_gives_c_near_minus_two() {
        let mut s = synthetic(200, 0.0, 0.0, Geometry::Chord);
        for p in s.points.iter_mut() {
            p.1 = C64::new(-0.666 * s_abscissa(200, p.0) - 8.81185, 0.0);
        }
        let f = fit_central_charge(&s).unwrap();
        assert!((f.c + 1.998).abs() < 1e-9, "{}", f.c);
        assert!((f.intercept + 8.81185).abs() < 1e-9);
    }

    fn s_abscissa(l: usize, la: usize) -> f64 {
        (PI * la as f64 / l as f64).sin().ln()
    }

    #[test]
    fn too_few_points() {
        let s = synthetic(10, 1.0, 0.0, Geometry::Chord);
        match fit_central_charge(&s) {
            Err(Error::InsufficientData { usable, min, max }) => assert_eq!((usable, min, max), (3, 4, 6)),
            other => panic!("{other:?}"),
        }
        let mut s = synthetic(64, 1.0, 0.0, Geometry::Chord);
        for p in s.points.iter_mut() {
            p.1.im = 1e-3;
        }
        assert!(matches!(fit_central_charge(&s), Err(Error::InsufficientData { usable: 0, .. })));
        let opts = FitOptions { max_imag: f64::INFINITY, ..Default::default() };
        assert!(fit_central_charge_with(&s, &opts).is_ok());
    }

    #[test]
    fn series_invariants() {
        let z = C64::new(0.0, 0.0);
        assert!(ScalingSeries::new(8, vec![(2, z), (2, z)], Geometry::Chord).is_err());
        assert!(ScalingSeries::new(8, vec![(0, z)], Geometry::Chord).is_err());
        assert!(ScalingSeries::new(8, vec![(8, z)], Geometry::Chord).is_err());
    }

    #[test]
    fn critical_chain_pipeline() {
        let k = build_hatano_nelson(128, 1.0, 0.0, Boundary::Periodic).unwrap();
        let sys = biorthogonal_eig(&k).unwrap();
        // Filling 63/128 closes the shell; exact half filling is degenerate.
        let sel = select_occupied(&sys, Filling::new(63, 128).unwrap(), OrderingPolicy::RealPart);
        let (series, warns) = entropy_series(&k, &sys, &sel, &size_grid(8, 120, 1), Geometry::Chord).unwrap();
        assert!(warns.is_empty());
        let f = fit_central_charge_with(&series, &FitOptions { window: Some((8, 120)), ..Default::default() })
            .unwrap();
        assert!((f.c - 1.0).abs() < 0.05, "{}", f.c);
        let w = window_robustness(&series, &FitOptions::default()).unwrap();
        assert!(w.converged, "{w:?}");
    }

    #[test]
    fn fermi_point_examples() {
        let k = build_hatano_nelson(32, 1.0, 0.0, Boundary::Periodic).unwrap();
        assert_eq!(count_fermi_points(&k, Filling::new(1, 1).unwrap(), OrderingPolicy::RealPart).unwrap().n_f, 0);
        let f = count_fermi_points(&k, Filling::new(15, 32).unwrap(), OrderingPolicy::RealPart).unwrap();
        assert_eq!(f.n_f, 2);
        let open = build_hatano_nelson(32, 1.0, 0.0, Boundary::Open).unwrap();
        assert!(matches!(
            count_fermi_points(&open, Filling::half(), OrderingPolicy::RealPart),
            Err(Error::Unsupported(_))
        ));
        // Gapped two-band chain at half filling: lower band full.
        let k = build_nh_ssh_real(16, 1.0, 0.5, 0.0, Boundary::Periodic).unwrap();
        assert_eq!(count_fermi_points(&k, Filling::half(), OrderingPolicy::RealPart).unwrap().n_f, 0);
    }

    #[test]
    fn guo_chain_fermi_points_double() {
        let nf = |g: f64| {
            let k = build_guo_chain(64, 2, 1.0, g, Boundary::Periodic).unwrap();
            count_fermi_points(&k, Filling::half(), OrderingPolicy::RealPart).unwrap().n_f
        };
        let (below, above) = (nf(3.0), nf(5.0));
        assert_eq!(above, 2 * below, "{below} {above}");
        let scan = lifshitz_scan(
            &[2.0, 3.0, 3.5, 4.5, 5.0],
            |g| build_guo_chain(64, 2, 1.0, g, Boundary::Periodic),
            Filling::half(),
            OrderingPolicy::RealPart,
        )
        .unwrap();
        assert_eq!(scan.bracket, Some((3.5, 4.5)));
    }

    #[test]
    fn band_tracking_follows_crossings() {
        // Two decoupled chains with opposite hopping signs: bands cross at
        // k = pi/2 and 3pi/2 and must keep their identity.
        let l = 40;
        let mut m = crate::linalg::CMat::zeros((2 * l, 2 * l));
        for x in 0..l {
            let y = (x + 1) % l;
            for (s, t) in [(0, -1.0), (1, 1.0)] {
                m[[2 * x + s, 2 * y + s]] = C64::new(t, 0.0);
                m[[2 * y + s, 2 * x + s]] = C64::new(t, 0.0);
            }
        }
        let mut k = KernelMatrix::from_matrix(m).unwrap();
        k.bc = Boundary::Periodic;
        k.shape = vec![l];
        k.orbitals = 2;
        let bands = momentum_bands(&k).unwrap();
        for b in 0..2 {
            let e: Vec<f64> = (0..l).map(|mm| bands.energies[[mm, b]].re).collect();
            let want0 = e[0].signum() * 2.0;
            for (mm, v) in e.iter().enumerate() {
                let q = 2.0 * PI * mm as f64 / l as f64;
                assert!((v - want0 * q.cos()).abs() < 1e-9);
            }
        }
        assert_eq!(bands.closure, vec![0, 1]);
    }

    proptest! {
        #[test]
        fn fit_round_trip(c in -3.0f64..3.0, b in -10.0f64..10.0, l in 16usize..300, open in any::<bool>()) {
            let g = if open { Geometry::OpenLog } else { Geometry::Chord };
            let f = fit_central_charge(&synthetic(l, c, b, g)).unwrap();
            prop_assert!((f.c - c).abs() < 1e-10);
            prop_assert!((f.intercept - b).abs() < 1e-10);
            prop_assert!(f.rms_residual >= 0.0);
            prop_assert!(f.window.0 >= 1 && f.window.1 < l);
        }
    }
}

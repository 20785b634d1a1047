use std::path::{Path, PathBuf};

use nhfermion::corr::{check_duality, correlation_matrix, momentum_correlation, DualityReport, Partition};
use nhfermion::dynamics::{evolve_no_jump, evolve_unitary_reference, DynamicsOptions, GaussianState};
use nhfermion::ent::{entanglement_hamiltonian, entanglement_report, mutual_information, EntOptions, EntanglementReport};
use nhfermion::linalg::max_abs_diff;
use nhfermion::model_zoo::{self, Basis, Boundary, Family, KernelMatrix};
use nhfermion::oracle::{random_kernel, run_case, OracleCase};
use nhfermion::scaling::{
    entropy_series, fit_central_charge_with, size_grid, window_robustness, FitOptions, FitResult, Geometry,
    WindowCheck,
};
use nhfermion::spectra::{biorthogonal_eig, select_occupied, BiorthogonalSystem, Filling, GroundStateSelection};
use nhfermion::{CMat, Error, Warning, WarningKind, C64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, InitialState, LoadedConfig, OracleSpec, PartitionSpec, Quantity, RunConfig, SweepPoint, Tolerances};
use crate::error::{CliError, Result};
use crate::output::{num, re_im, read_series, series_table, write_json, Manifest, PointEntry, Status, Table};

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub overrides: Vec<(String, f64)>,
}

impl Context {
    fn out_dir(&self, cfg: Option<&RunConfig>) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Runs `f` on every point with `workers` threads; results come back in
    /// input order whatever the completion order.
    fn map_points<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.workers.max(1)).build().expect("thread pool");
        pool.install(|| items.par_iter().map(&f).collect())
    }
}

/// Output of one sweep point: table rows, a JSON record, side files and
/// warnings. `failed` marks a completed point whose check missed its
/// tolerance.
struct PointRun<J> {
    rows: Vec<Vec<String>>,
    record: J,
    files: Vec<(String, Table)>,
    warnings: Vec<Warning>,
    failed: bool,
}

impl<J> PointRun<J> {
    fn new(record: J) -> Self {
        PointRun { rows: Vec::new(), record, files: Vec::new(), warnings: Vec::new(), failed: false }
    }
}

/// Collects per-point results into the table, the JSON records and the
/// manifest, writes everything, and returns the exit status.
fn finish<J: Serialize>(
    name: &str,
    dir: &Path,
    mut manifest: Manifest,
    header: Vec<String>,
    points: &[SweepPoint],
    results: Vec<Result<PointRun<J>>>,
) -> Result<i32> {
    let mut table = Table::new(header);
    let mut records = Vec::new();
    let mut validation = false;
    for (p, r) in points.iter().zip(results) {
        let (status, error, warnings) = match r {
            Ok(run) => {
                for row in run.rows {
                    table.push(row);
                }
                for (file, t) in run.files {
                    let path = dir.join(&file);
                    t.write(&path)?;
                    manifest.outputs.push(PathBuf::from(file));
                }
                records.push(serde_json::json!({ "point": p.index, "result": run.record }));
                let status = if run.failed { Status::Failed } else { Status::Ok };
                (status, None, run.warnings)
            }
            Err(e) => {
                validation |= !e.is_numerical();
                (Status::Error, Some(e.to_string()), Vec::new())
            }
        };
        manifest.points.push(PointEntry { index: p.index, params: p.values.clone(), status, error, warnings });
    }
    let csv = format!("{name}.csv");
    let json = format!("{name}.json");
    table.write(&dir.join(&csv))?;
    write_json(&dir.join(&json), &records)?;
    manifest.outputs.insert(0, PathBuf::from(json));
    manifest.outputs.insert(0, PathBuf::from(csv));
    manifest.collect_warnings();
    write_json(&dir.join("manifest.json"), &manifest)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    for p in &manifest.points {
        if let Some(e) = &p.error {
            eprintln!("error: point {}: {e}", p.index);
        }
    }
    Ok(manifest.exit_code(validation))
}

/// Point columns: the index and the swept parameter values.
fn point_header(points: &[SweepPoint]) -> Vec<String> {
    let mut h = vec!["point".to_string()];
    if let Some(p) = points.first() {
        h.extend(p.values.iter().map(|(n, _)| n.clone()));
    }
    h
}

fn point_cells(p: &SweepPoint) -> Vec<String> {
    let mut row = vec![p.index.to_string()];
    row.extend(p.values.iter().map(|(_, v)| num(*v)));
    row
}

fn ent_options(tol: &Tolerances) -> EntOptions {
    EntOptions { clamp_tol: tol.get("clamp_tol"), midgap_tol: tol.get("midgap_tol"), ..EntOptions::default() }
}

struct Ground {
    kernel: KernelMatrix,
    sys: BiorthogonalSystem,
    sel: GroundStateSelection,
    warnings: Vec<Warning>,
}

fn ground(p: &SweepPoint, cfg: &RunConfig) -> Result<Ground> {
    let kernel = p.build().map_err(classify)?;
    let sys = biorthogonal_eig(&kernel)?;
    let sel = select_occupied(&sys, cfg.filling, cfg.policy);
    let mut warnings = sys.warnings();
    warnings.extend(sel.warnings.iter().cloned());
    Ok(Ground { kernel, sys, sel, warnings })
}

/// Builder errors that come from the parameter values are input problems.
fn classify(e: Error) -> CliError {
    if e.is_numerical() {
        CliError::Core(e)
    } else {
        CliError::validation("model", e.to_string())
    }
}

fn resolve_partition(spec: &PartitionSpec, i: usize, n_modes: usize) -> Result<Partition> {
    spec.resolve(n_modes).map_err(|e| CliError::validation(format!("partitions[{i}]"), e.to_string()))
}

fn correlation(g: &Ground, part: &Partition) -> Result<nhfermion::corr::CorrelationMatrix> {
    Ok(match part.space {
        Basis::Position => correlation_matrix(&g.sys, &g.sel, part)?,
        Basis::Momentum => momentum_correlation(&g.kernel, &g.sys, &g.sel, part)?,
    })
}

fn prepare(loaded: &LoadedConfig, ctx: &Context, command: &str) -> Result<(Tolerances, Vec<SweepPoint>, PathBuf, Manifest)> {
    let cfg = &loaded.config;
    let tol = Tolerances::resolve(&cfg.tolerances, &ctx.overrides)?;
    let points = cfg.sweep_points()?;
    let dir = ctx.out_dir(Some(cfg))?;
    let manifest = Manifest::new(command, config::digest(&loaded.text, &ctx.overrides), tol.clone());
    Ok((tol, points, dir, manifest))
}

#[derive(Serialize)]
struct EntanglementRecord {
    partitions: Vec<(String, EntanglementReport)>,
    entanglement_hamiltonians: Vec<(String, CMat)>,
    mutual_information: Option<C64>,
    series: Option<SeriesRecord>,
}

#[derive(Serialize)]
struct SeriesRecord {
    file: String,
    fit: Option<FitResult>,
    window_check: Option<WindowCheck>,
}

pub fn cmd_entanglement(loaded: &LoadedConfig, ctx: &Context) -> Result<i32> {
    let cfg = &loaded.config;
    cfg.check_quantities()?;
    let (tol, points, dir, manifest) = prepare(loaded, ctx, "entanglement")?;
    let specs = cfg.partition_specs();
    let opts = ent_options(&tol);
    let results = ctx.map_points(&points, |p| entanglement_point(p, cfg, &specs, &opts, &tol));
    let mut header = point_header(&points);
    header.extend(
        [
            "partition",
            "basis",
            "L_A",
            "re_S",
            "im_S",
            "re_S_renyi2",
            "im_S_renyi2",
            "S_modified",
            "modified_residual",
            "n_midgap",
        ]
        .map(String::from),
    );
    finish("entanglement", &dir, manifest, header, &points, results)
}

fn entanglement_point(
    p: &SweepPoint,
    cfg: &RunConfig,
    specs: &[PartitionSpec],
    opts: &EntOptions,
    tol: &Tolerances,
) -> Result<PointRun<EntanglementRecord>> {
    let g = ground(p, cfg)?;
    let wants = |q: Quantity| cfg.quantities.contains(&q);
    let mut run = PointRun::new(EntanglementRecord {
        partitions: Vec::new(),
        entanglement_hamiltonians: Vec::new(),
        mutual_information: None,
        series: None,
    });
    run.warnings.extend(g.warnings.iter().cloned());
    let mut reports = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let label = spec.label(i);
        let part = resolve_partition(spec, i, g.kernel.dim())?;
        let c = correlation(&g, &part)?;
        let r = entanglement_report(&c, opts)?;
        run.warnings.extend(r.warnings.iter().map(|w| Warning::new(w.kind, format!("{label}: {}", w.message))));
        let mut row = point_cells(p);
        let renyi = r.renyi(2).map(re_im).unwrap_or_default();
        row.extend([label.clone(), format!("{:?}", part.space).to_lowercase(), part.len().to_string()]);
        row.extend(re_im(r.entropy_vn));
        row.extend(renyi);
        row.extend([num(r.entropy_modified), num(r.modified_residual), r.midgap_count().to_string()]);
        run.rows.push(row);
        if wants(Quantity::EntanglementHamiltonian) {
            match entanglement_hamiltonian(&c) {
                Ok(h) => run.record.entanglement_hamiltonians.push((label.clone(), h)),
                Err(Error::PartialSpectrum { modes }) => run.warnings.push(Warning::new(
                    WarningKind::Clamped,
                    format!("{label}: entanglement Hamiltonian skipped, modes {modes:?} are clamped"),
                )),
                Err(e) => return Err(e.into()),
            }
        }
        reports.push((label, r));
    }
    if wants(Quantity::MutualInformation) {
        let (a, b) = (&reports[0].1, &reports[1].1);
        if a.partition.space != Basis::Position || b.partition.space != Basis::Position {
            return Err(CliError::validation("quantities", "mutual_information uses position-space partitions"));
        }
        let union = a.partition.union(&b.partition).map_err(|e| CliError::validation("partitions", e.to_string()))?;
        let ab = entanglement_report(&correlation(&g, &union)?, opts)?;
        let mi = mutual_information(a, b, &ab).map_err(|e| CliError::validation("partitions", e.to_string()))?;
        run.record.mutual_information = Some(mi);
    }
    if wants(Quantity::Series) {
        let s = cfg.series.as_ref().expect("checked by check_quantities");
        let cells = g.kernel.cells();
        let hi = s.hi.unwrap_or(cells.saturating_sub(4));
        if hi >= cells {
            return Err(CliError::validation("series.hi", format!("{hi} cells do not fit in a {cells}-cell chain")));
        }
        let (series, warnings) = entropy_series(&g.kernel, &g.sys, &g.sel, &size_grid(s.lo, hi, s.stride), s.geometry)?;
        run.warnings.extend(warnings);
        let fit_opts = FitOptions { window: None, max_imag: tol.get("max_imag") };
        let fit = match fit_central_charge_with(&series, &fit_opts) {
            Ok(f) => Some(f),
            Err(e) => {
                run.warnings.push(Warning::new(WarningKind::Window, format!("fit failed: {e}")));
                None
            }
        };
        let window_check = fit.as_ref().and_then(|_| window_robustness(&series, &fit_opts).ok());
        if let Some(w) = window_check.as_ref().filter(|w| !w.converged) {
            run.warnings.push(Warning::new(
                WarningKind::Window,
                format!("c moves by {:.3} when the window shrinks", w.delta_c),
            ));
        }
        let file = format!("series_{:04}.csv", p.index);
        run.files.push((file.clone(), series_table(&series)));
        run.record.series = Some(SeriesRecord { file, fit, window_check });
    }
    run.record.partitions = reports;
    Ok(run)
}

#[derive(Serialize)]
struct FitRecord {
    series: PathBuf,
    result: Option<FitResult>,
    window_check: Option<WindowCheck>,
    error: Option<String>,
}

pub fn cmd_fit(series: &[PathBuf], geometry: Geometry, window: Option<(usize, usize)>, ctx: &Context) -> Result<i32> {
    let tol = Tolerances::resolve(&Default::default(), &ctx.overrides)?;
    let dir = ctx.out_dir(None)?;
    let mut text = format!("fit {geometry:?} {window:?}");
    let mut loaded = Vec::new();
    for path in series {
        loaded.push(read_series(path, geometry)?);
        text.push('\n');
        text.push_str(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?);
    }
    let mut manifest = Manifest::new("fit", config::digest(&text, &ctx.overrides), tol.clone());
    let opts = FitOptions { window, max_imag: tol.get("max_imag") };
    let mut records = Vec::new();
    let mut table = Table::new(["series", "c", "intercept", "rms_residual", "window_lo", "window_hi", "n_points", "rejected_imag"]);
    for (i, (path, s)) in series.iter().zip(&loaded).enumerate() {
        let mut warnings = Vec::new();
        let (result, check, error) = match fit_central_charge_with(s, &opts) {
            Ok(f) => {
                let check = window_robustness(s, &opts).ok();
                if let Some(w) = check.as_ref().filter(|w| !w.converged) {
                    warnings.push(Warning::new(WarningKind::Window, format!("c moves by {:.3} when the window shrinks", w.delta_c)));
                }
                if f.rejected_imag > 0 {
                    warnings.push(Warning::new(
                        WarningKind::Realness,
                        format!("{} points rejected for |Im S| > {:e}", f.rejected_imag, opts.max_imag),
                    ));
                }
                table.push(vec![
                    path.display().to_string(),
                    num(f.c),
                    num(f.intercept),
                    num(f.rms_residual),
                    f.window.0.to_string(),
                    f.window.1.to_string(),
                    f.n_points.to_string(),
                    f.rejected_imag.to_string(),
                ]);
                (Some(f), check, None)
            }
            Err(e) => (None, None, Some(e)),
        };
        manifest.points.push(PointEntry {
            index: i,
            params: Vec::new(),
            status: if error.is_some() { Status::Error } else { Status::Ok },
            error: error.as_ref().map(|e| e.to_string()),
            warnings,
        });
        records.push(FitRecord { series: path.clone(), result, window_check: check, error: error.map(|e| e.to_string()) });
    }
    table.write(&dir.join("fit.csv"))?;
    write_json(&dir.join("fit.json"), &records)?;
    manifest.outputs = vec!["fit.csv".into(), "fit.json".into()];
    manifest.collect_warnings();
    write_json(&dir.join("manifest.json"), &manifest)?;
    for r in &records {
        match (&r.result, &r.error) {
            (Some(f), _) => println!("{}: c = {:.4}, window {:?}, {} points", r.series.display(), f.c, f.window, f.n_points),
            (None, Some(e)) => eprintln!("error: {}: {e}", r.series.display()),
            _ => {}
        }
    }
    Ok(manifest.exit_code(false))
}

#[derive(Serialize)]
struct DynamicsRecord {
    reference_deviation: Option<f64>,
    max_purity_residual: f64,
}

pub fn cmd_dynamics(loaded: &LoadedConfig, ctx: &Context) -> Result<i32> {
    let cfg = &loaded.config;
    let spec = cfg.dynamics.as_ref().ok_or_else(|| CliError::validation("dynamics", "missing [dynamics] table"))?;
    let grid = spec.grid()?;
    let (tol, points, dir, manifest) = prepare(loaded, ctx, "dynamics")?;
    let specs = cfg.partition_specs();
    if specs.len() != 1 || specs[0].basis != Basis::Position {
        return Err(CliError::validation("partitions", "dynamics takes exactly one position-space partition"));
    }
    let results = ctx.map_points(&points, |p| dynamics_point(p, cfg, &specs[0], &grid, &tol));
    let mut header = point_header(&points);
    header.extend(
        ["t", "re_S", "im_S", "trace_residual", "purity_residual", "substeps", "path", "reference_deviation"]
            .map(String::from),
    );
    finish("dynamics", &dir, manifest, header, &points, results)
}

fn dynamics_point(
    p: &SweepPoint,
    cfg: &RunConfig,
    spec: &PartitionSpec,
    grid: &[f64],
    tol: &Tolerances,
) -> Result<PointRun<DynamicsRecord>> {
    let d = cfg.dynamics.as_ref().expect("checked");
    let k = p.build().map_err(classify)?;
    let n = k.dim();
    let psi0 = match d.initial {
        InitialState::Neel => GaussianState::neel(n),
        InitialState::DomainWall { filled } => GaussianState::domain_wall(n, filled),
        InitialState::HermitianGround => GaussianState::hermitian_ground_state(&k, cfg.filling),
    }
    .map_err(|e| CliError::validation("dynamics.initial", e.to_string()))?;
    let mut opts = DynamicsOptions::new(resolve_partition(spec, 0, n)?);
    opts.ent = ent_options(tol);
    opts.cond_limit = tol.get("cond_limit");
    let traj = evolve_no_jump(&k, &psi0, grid, &opts)?;
    let reference = if d.reference {
        let r = evolve_unitary_reference(&k, &psi0, grid, &opts)
            .map_err(|e| CliError::validation("dynamics.reference", e.to_string()))?;
        Some(r)
    } else {
        None
    };
    let mut run = PointRun::new(DynamicsRecord { reference_deviation: None, max_purity_residual: 0.0 });
    let mut worst_dev: f64 = 0.0;
    for (i, pt) in traj.iter().enumerate() {
        let dev = reference.as_ref().map(|r| {
            let (a, b) = (pt.correlation.entries(), r[i].correlation.entries());
            max_abs_diff(a.view(), b.view())
        });
        worst_dev = worst_dev.max(dev.unwrap_or(0.0));
        run.record.max_purity_residual = run.record.max_purity_residual.max(pt.purity_residual);
        run.warnings.extend(pt.report.warnings.iter().map(|w| Warning::new(w.kind, format!("t = {}: {}", pt.time, w.message))));
        let mut row = point_cells(p);
        row.push(num(pt.time));
        row.extend(re_im(pt.report.entropy_vn));
        row.extend([num(pt.trace_residual), num(pt.purity_residual), pt.substeps.to_string()]);
        row.push(format!("{:?}", pt.path).to_lowercase());
        row.push(dev.map(num).unwrap_or_default());
        run.rows.push(row);
    }
    if reference.is_some() {
        run.record.reference_deviation = Some(worst_dev);
        run.failed = !(worst_dev < tol.get("reference"));
    }
    Ok(run)
}

pub fn cmd_duality(loaded: &LoadedConfig, ctx: &Context) -> Result<i32> {
    let cfg = &loaded.config;
    let (tol, points, dir, manifest) = prepare(loaded, ctx, "duality")?;
    let specs = cfg.partition_specs();
    if specs.iter().any(|s| s.basis != Basis::Position) {
        return Err(CliError::validation("partitions", "duality checks use position-space partitions"));
    }
    let limit = tol.get("duality");
    let results = ctx.map_points(&points, |p| -> Result<PointRun<Vec<(String, DualityReport)>>> {
        let g = ground(p, cfg)?;
        let mut run = PointRun::new(Vec::new());
        run.warnings = g.warnings.clone();
        for (i, spec) in specs.iter().enumerate() {
            let part = resolve_partition(spec, i, g.kernel.dim())?;
            let r = check_duality(&g.sys, &g.sel, &part)?;
            let pass = r.max_mismatch < limit;
            run.failed |= !pass;
            let mut row = point_cells(p);
            row.extend([
                spec.label(i),
                part.len().to_string(),
                num(r.max_mismatch),
                r.nonzero_rpr.to_string(),
                r.nonzero_prp.to_string(),
                r.real_spectrum.to_string(),
                pass.to_string(),
            ]);
            run.rows.push(row);
            run.record.push((spec.label(i), r));
        }
        Ok(run)
    });
    let mut header = point_header(&points);
    header.extend(["partition", "L_A", "max_mismatch", "nonzero_rpr", "nonzero_prp", "real_spectrum", "pass"].map(String::from));
    finish("duality", &dir, manifest, header, &points, results)
}

#[derive(Serialize)]
struct OracleRecord {
    name: String,
    case: OracleCase,
    /// `|S_corr + winding_correction - S_oracle|`; equals the raw residual
    /// when no product eigenvalue of rho_A wraps the principal branch.
    corrected_entropy_residual: f64,
    pass: bool,
}

const ORACLE_HEADER: [&str; 13] = [
    "case",
    "n_modes",
    "n_keep",
    "re_S_corr",
    "im_S_corr",
    "re_S_oracle",
    "im_S_oracle",
    "entropy_residual",
    "corrected_entropy_residual",
    "spectrum_residual",
    "idempotence_residual",
    "branch_windings",
    "pass",
];

/// Runs the oracle on the configured model sweep, or on the randomized
/// suite (plus NH SSH and Hatano-Nelson instances) without a model.
pub fn cmd_oracle(loaded: Option<&LoadedConfig>, ctx: &Context) -> Result<i32> {
    let cfg = loaded.map(|l| &l.config);
    let overrides = &ctx.overrides;
    let tol = Tolerances::resolve(cfg.map(|c| &c.tolerances).unwrap_or(&Default::default()), overrides)?;
    let digest = config::digest(loaded.map(|l| l.text.as_str()).unwrap_or("default oracle suite"), overrides);
    let dir = ctx.out_dir(cfg)?;
    let manifest = Manifest::new("oracle", digest, tol.clone());
    let (filling, policy) = cfg.map(|c| (c.filling, c.policy)).unwrap_or((Filling::half(), Default::default()));

    // Each job is (sweep point, case name, kernel builder input, partition spec).
    let (points, jobs): (Vec<SweepPoint>, Vec<(String, Job)>) = match cfg.filter(|c| c.model.is_some()) {
        Some(c) => {
            let points = c.sweep_points()?;
            let specs = c.partition_specs();
            let jobs = points
                .iter()
                .flat_map(|p| specs.iter().enumerate().map(move |(i, s)| (format!("point {} {}", p.index, s.label(i)), Job::Model(p.clone(), i, s.clone()))))
                .collect();
            (points, jobs)
        }
        None => {
            let spec = cfg.and_then(|c| c.oracle.clone()).unwrap_or_default();
            suite_jobs(&spec)?
        }
    };
    let results = ctx.map_points(&jobs, |(name, job)| -> Result<OracleRecord> {
        let (k, part) = job.materialize()?;
        let case = run_case(&k, &part, filling, policy)?;
        let corrected = (case.s_corr + case.winding_correction - case.s_oracle).norm();
        let pass = corrected < tol.get("oracle_entropy")
            && case.modified_residual < tol.get("oracle_entropy")
            && case.spectrum_residual < tol.get("oracle_spectrum")
            && case.idempotence_residual < tol.get("oracle_rho");
        Ok(OracleRecord { name: name.clone(), case, corrected_entropy_residual: corrected, pass })
    });

    // One manifest entry per sweep point (or per suite case), one row per job.
    let mut table = Table::new(ORACLE_HEADER);
    let mut records = Vec::new();
    let mut manifest = manifest;
    let mut validation = false;
    let mut entries: Vec<PointEntry> = points
        .iter()
        .map(|p| PointEntry { index: p.index, params: p.values.clone(), status: Status::Ok, error: None, warnings: Vec::new() })
        .collect();
    for ((name, job), r) in jobs.iter().zip(results) {
        let entry = &mut entries[job.point()];
        match r {
            Ok(rec) => {
                let c = &rec.case;
                if c.branch_windings > 0 {
                    entry.warnings.push(Warning::new(
                        WarningKind::Branch,
                        format!(
                            "{name}: {} product eigenvalue(s) of rho_A wrap the principal branch; raw |dS| = {:.3e}, corrected {:.3e}",
                            c.branch_windings, c.entropy_residual, rec.corrected_entropy_residual
                        ),
                    ));
                }
                if !rec.pass {
                    entry.status = Status::Failed;
                }
                let mut row = vec![name.clone(), c.n_modes.to_string(), c.n_keep.to_string()];
                row.extend(re_im(c.s_corr));
                row.extend(re_im(c.s_oracle));
                row.extend([
                    num(c.entropy_residual),
                    num(rec.corrected_entropy_residual),
                    num(c.spectrum_residual),
                    num(c.idempotence_residual),
                    c.branch_windings.to_string(),
                    rec.pass.to_string(),
                ]);
                table.push(row);
                records.push(rec);
            }
            Err(e) => {
                validation |= !e.is_numerical();
                entry.status = Status::Error;
                entry.error = Some(format!("{name}: {e}"));
            }
        }
    }
    manifest.points = entries;
    table.write(&dir.join("oracle.csv"))?;
    write_json(&dir.join("oracle.json"), &records)?;
    manifest.outputs = vec!["oracle.csv".into(), "oracle.json".into()];
    manifest.collect_warnings();
    write_json(&dir.join("manifest.json"), &manifest)?;
    let passed = records.iter().filter(|r| r.pass).count();
    println!("oracle: {passed}/{} cases pass", jobs.len());
    for p in manifest.points.iter().filter(|p| p.error.is_some()) {
        eprintln!("error: {}", p.error.as_deref().unwrap_or(""));
    }
    Ok(manifest.exit_code(validation))
}

enum Job {
    Model(SweepPoint, usize, PartitionSpec),
    Random { index: usize, n: usize, eta: f64, seed: u64 },
    Named { index: usize, kernel: KernelMatrix },
}

impl Job {
    fn point(&self) -> usize {
        match self {
            Job::Model(p, ..) => p.index,
            Job::Random { index, .. } | Job::Named { index, .. } => *index,
        }
    }

    fn materialize(&self) -> Result<(KernelMatrix, Partition)> {
        let k = match self {
            Job::Model(p, ..) => p.build().map_err(classify)?,
            Job::Random { n, eta, seed, .. } => random_kernel(*n, *eta, *seed)?,
            Job::Named { kernel, .. } => kernel.clone(),
        };
        let part = match self {
            Job::Model(_, i, spec) => resolve_partition(spec, *i, k.dim())?,
            _ => Partition::range(Basis::Position, 0, k.dim() / 2, k.dim())?,
        };
        Ok((k, part))
    }
}

fn suite_jobs(spec: &OracleSpec) -> Result<(Vec<SweepPoint>, Vec<(String, Job)>)> {
    if spec.modes < 2 || spec.modes > nhfermion::oracle::MAX_MODES {
        return Err(CliError::validation("oracle.modes", format!("need 2..={} modes", nhfermion::oracle::MAX_MODES)));
    }
    let mut jobs = Vec::new();
    for i in 0..spec.random_cases {
        let seed = spec.first_seed + i as u64;
        jobs.push((format!("random seed {seed}"), Job::Random { index: i, n: spec.modes, eta: spec.eta, seed }));
    }
    if spec.named {
        let named = [
            ("NH SSH topological", model_zoo::build_nh_ssh_real(4, 0.5, 1.5, 0.3, Boundary::Open)?),
            ("NH SSH periodic", model_zoo::build_nh_ssh_real(4, 1.0, 0.5, 0.3, Boundary::Periodic)?),
            ("Hatano-Nelson open", model_zoo::build_hatano_nelson(8, 1.0, 0.6, Boundary::Open)?),
            ("Hatano-Nelson periodic", model_zoo::build_hatano_nelson_twisted(8, 1.0, 0.3, Boundary::Periodic, 0.4)?),
        ];
        for (name, kernel) in named {
            let index = jobs.len();
            jobs.push((name.to_string(), Job::Named { index, kernel }));
        }
    }
    // Suite cases stand in for sweep points in the manifest.
    let base = nhfermion::model_zoo::ModelSpec::new(Family::HatanoNelson, spec.modes, Boundary::Open);
    let points = (0..jobs.len()).map(|index| SweepPoint { index, values: Vec::new(), model: base.clone() }).collect();
    Ok((points, jobs))
}

/// Families with their parameter names, for `model-list`.
pub fn model_list() -> String {
    let mut out = String::new();
    for f in Family::ALL {
        let info = f.info();
        let optional: Vec<String> = info.optional.iter().map(|(n, d)| format!("{n} (default {d})")).collect();
        out.push_str(&format!("{}\n  length: {}\n  required: {}\n", info.name, info.length, info.required.join(", ")));
        if !optional.is_empty() {
            out.push_str(&format!("  optional: {}\n", optional.join(", ")));
        }
    }
    out
}

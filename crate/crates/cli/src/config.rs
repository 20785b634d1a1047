//! Run configuration (TOML). Every table rejects unknown keys so that a
//! misspelled parameter fails the run instead of silently using a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nhfermion::corr::Partition;
use nhfermion::model_zoo::{Basis, Boundary, KernelMatrix, ModelSpec};
use nhfermion::scaling::Geometry;
use nhfermion::spectra::{Filling, OrderingPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    #[serde(default = "Filling::half")]
    pub filling: Filling,
    #[serde(default)]
    pub policy: OrderingPolicy,
    #[serde(default)]
    pub partitions: Vec<PartitionSpec>,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<Quantity>,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    pub series: Option<SeriesSpec>,
    pub dynamics: Option<DynamicsSpec>,
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_quantities() -> Vec<Quantity> {
    vec![Quantity::Entropy]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Entanglement spectrum and von Neumann / Renyi / modified entropies.
    Entropy,
    /// `h^E` for every partition (partial spectra become warnings).
    EntanglementHamiltonian,
    /// `I(A:B)` of the first two partitions.
    MutualInformation,
    /// Entropy series over block sizes plus a central-charge fit.
    Series,
}

/// Contiguous block `start..start + len` or an explicit index list, in
/// kernel modes. Without `len` or `indices` the block is the first half.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub label: Option<String>,
    #[serde(default = "position")]
    pub basis: Basis,
    pub start: Option<usize>,
    pub len: Option<usize>,
    pub indices: Option<Vec<usize>>,
}

fn position() -> Basis {
    Basis::Position
}

impl PartitionSpec {
    pub fn resolve(&self, n_modes: usize) -> nhfermion::Result<Partition> {
        match &self.indices {
            Some(idx) => Partition::new(self.basis, idx.clone(), n_modes),
            None => Partition::range(self.basis, self.start.unwrap_or(0), self.len.unwrap_or(n_modes / 2), n_modes),
        }
    }

    pub fn label(&self, i: usize) -> String {
        self.label.clone().unwrap_or_else(|| format!("p{i}"))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// A model parameter name, or `length`.
    pub param: String,
    pub values: Vec<f64>,
}

/// Block sizes in unit cells, `lo, lo + stride, ...` up to `hi`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    #[serde(default = "chord")]
    pub geometry: Geometry,
    #[serde(default = "four")]
    pub lo: usize,
    /// Defaults to four cells short of the chain.
    pub hi: Option<usize>,
    #[serde(default = "one")]
    pub stride: usize,
}

fn chord() -> Geometry {
    Geometry::Chord
}

fn four() -> usize {
    4
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields, tag = "kind")]
pub enum InitialState {
    Neel,
    DomainWall { filled: usize },
    /// Ground state of the Hermitian part of the kernel at the run filling.
    HermitianGround,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub initial: InitialState,
    /// Explicit output times; otherwise `steps + 1` evenly spaced times on
    /// `[0, t_max]`.
    pub times: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
    /// Also run the exact unitary evolution (Hermitian kernels only) and
    /// report the deviation.
    #[serde(default)]
    pub reference: bool,
}

impl DynamicsSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.times, self.t_max, self.steps) {
            (Some(t), None, None) => t.clone(),
            (None, Some(t_max), Some(steps)) if steps > 0 && t_max > 0.0 => {
                (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect()
            }
            _ => {
                return Err(CliError::validation(
                    "dynamics",
                    "give either `times` or both `t_max` > 0 and `steps` > 0",
                ))
            }
        };
        if grid.is_empty() || grid.iter().any(|t| !t.is_finite() || *t < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::validation("dynamics.times", "times must be finite, nonnegative and increasing"));
        }
        Ok(grid)
    }
}

/// Randomized part of the oracle suite; used when no model is configured.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "twenty")]
    pub random_cases: usize,
    #[serde(default = "eight")]
    pub modes: usize,
    #[serde(default = "eta")]
    pub eta: f64,
    #[serde(default)]
    pub first_seed: u64,
    /// Add the NH SSH and Hatano-Nelson instances.
    #[serde(default = "yes")]
    pub named: bool,
}

fn twenty() -> usize {
    20
}

fn eight() -> usize {
    8
}

fn eta() -> f64 {
    0.3
}

fn yes() -> bool {
    true
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { random_cases: 20, modes: 8, eta: 0.3, first_seed: 0, named: true }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

/// Names accepted by `[tolerances]` and `--tolerance`, with defaults.
pub const TOLERANCES: &[(&str, f64, &str)] = &[
    ("clamp_tol", nhfermion::ent::CLAMP_TOL, "correlation eigenvalues this close to 0 or 1 are dropped"),
    ("midgap_tol", nhfermion::ent::MIDGAP_TOL, "|Re eps - 1/2| below this counts as mid-gap"),
    ("max_imag", nhfermion::scaling::DEFAULT_MAX_IMAG, "fit points with larger |Im S| are rejected"),
    ("cond_limit", nhfermion::dynamics::COND_LIMIT, "largest propagator condition number per substep"),
    ("reference", 1e-8, "dynamics: allowed deviation from the unitary reference"),
    ("duality", 1e-9, "duality: allowed RPR / PRP spectrum mismatch"),
    ("oracle_entropy", 1e-8, "oracle: allowed entropy residual"),
    ("oracle_spectrum", 1e-9, "oracle: allowed rho_A spectrum residual"),
    ("oracle_rho", 1e-10, "oracle: allowed relative rho^2 - rho residual"),
];

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    /// Defaults, then the config table, then command-line overrides.
    pub fn resolve(config: &BTreeMap<String, f64>, overrides: &[(String, f64)]) -> Result<Self> {
        let mut map: BTreeMap<String, f64> = TOLERANCES.iter().map(|(n, v, _)| (n.to_string(), *v)).collect();
        let entries = config.iter().map(|(n, v)| (n.as_str(), *v, "tolerances"));
        let cli = overrides.iter().map(|(n, v)| (n.as_str(), *v, "--tolerance"));
        for (name, value, source) in entries.chain(cli) {
            if !map.contains_key(name) {
                let known: Vec<&str> = TOLERANCES.iter().map(|t| t.0).collect();
                return Err(CliError::validation(
                    format!("{source} `{name}`"),
                    format!("unknown tolerance (known: {})", known.join(", ")),
                ));
            }
            if !(value > 0.0) {
                return Err(CliError::validation(format!("{source} `{name}`"), "must be positive"));
            }
            map.insert(name.to_string(), value);
        }
        Ok(Tolerances(map))
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }
}

pub fn parse_tolerance(arg: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = arg.split_once('=').ok_or("expected NAME=VALUE")?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

/// Raw text and parsed config; the text feeds the manifest digest.
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: RunConfig,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse(&text).map_err(|message| CliError::Config { path: path.into(), message })?;
    Ok(LoadedConfig { path: path.into(), text, config })
}

pub fn parse(text: &str) -> std::result::Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

pub fn digest(text: &str, overrides: &[(String, f64)]) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for (name, value) in overrides {
        h.update(format!("\n--tolerance {name}={value:e}").as_bytes());
    }
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// One point of the parameter sweep: the axis values (config order) and
/// the model with those values substituted.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub model: ModelSpec,
}

impl SweepPoint {
    pub fn build(&self) -> nhfermion::Result<KernelMatrix> {
        self.model.build()
    }
}

impl RunConfig {
    pub fn require_model(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| CliError::validation("model", "this command needs a [model] table"))
    }

    /// Cartesian product of the sweep axes, first axis slowest.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let base = self.require_model()?;
        let family = base.family.info();
        for (i, axis) in self.sweep.iter().enumerate() {
            let field = format!("sweep[{i}] ({})", axis.param);
            let known = axis.param == "length"
                || family.required.contains(&axis.param.as_str())
                || family.optional.iter().any(|(n, _)| *n == axis.param);
            if !known {
                return Err(CliError::validation(field, format!("`{}` has no such parameter", family.name)));
            }
            if axis.values.is_empty() {
                return Err(CliError::validation(field, "no values"));
            }
            if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
                return Err(CliError::validation(field, format!("value {v} is not finite")));
            }
            for (j, v) in axis.values.iter().enumerate() {
                if axis.values[..j].contains(v) {
                    return Err(CliError::validation(field, format!("duplicate value {v}")));
                }
                if axis.param == "length" && (v.fract() != 0.0 || *v < 1.0) {
                    return Err(CliError::validation(field, format!("length {v} is not a positive integer")));
                }
            }
            if self.sweep[..i].iter().any(|a| a.param == axis.param) {
                return Err(CliError::validation(field, "parameter swept twice"));
            }
        }
        let mut combos: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push((axis.param.clone(), v));
                        c
                    })
                })
                .collect();
        }
        let points: Vec<SweepPoint> = combos
            .into_iter()
            .enumerate()
            .map(|(index, values)| {
                let mut model = base.clone();
                for (name, v) in &values {
                    if name == "length" {
                        model.length = *v as usize;
                    } else {
                        model.params.insert(name.clone(), *v);
                    }
                }
                SweepPoint { index, values, model }
            })
            .collect();
        for p in &points {
            p.model.resolved_params().map_err(|e| CliError::validation("model.params", e.to_string()))?;
        }
        Ok(points)
    }

    /// Checks that the requested quantities make sense for the model; runs
    /// before any numerics.
    pub fn check_quantities(&self) -> Result<()> {
        let model = self.require_model()?;
        let momentum = self.partitions.iter().any(|p| p.basis == Basis::Momentum);
        if momentum && model.bc != Boundary::Periodic {
            return Err(CliError::validation("partitions", "momentum-space partitions need periodic boundaries"));
        }
        for q in &self.quantities {
            match q {
                Quantity::MutualInformation if self.partitions.len() < 2 => {
                    return Err(CliError::validation("quantities", "mutual_information needs two partitions"))
                }
                Quantity::Series if self.series.is_none() => {
                    return Err(CliError::validation("quantities", "series needs a [series] table"))
                }
                Quantity::Series if model.family == nhfermion::model_zoo::Family::Guo2d => {
                    return Err(CliError::validation("quantities", "entropy series are defined for chains only"))
                }
                _ => {}
            }
        }
        if let Some(s) = &self.series {
            if s.stride == 0 || s.lo == 0 || s.hi.is_some_and(|hi| hi < s.lo) {
                return Err(CliError::validation("series", "need 0 < lo <= hi and stride > 0"));
            }
        }
        Ok(())
    }

    /// Partitions as configured, or the half-system cut.
    pub fn partition_specs(&self) -> Vec<PartitionSpec> {
        if self.partitions.is_empty() {
            vec![PartitionSpec { label: Some("half".into()), basis: Basis::Position, start: None, len: None, indices: None }]
        } else {
            self.partitions.clone()
        }
    }
}

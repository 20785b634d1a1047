use std::path::{Path, PathBuf};

use nhfermion::scaling::{Geometry, ScalingSeries};
use nhfermion::{Warning, C64};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Fixed 12-significant-digit scientific notation; `-0` prints as `0`.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

pub fn re_im(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

/// Rows are buffered and written in one go, so a failed run never leaves a
/// half-written table behind.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("write to memory");
        for r in &self.rows {
            w.write_record(r).expect("write to memory");
        }
        w.into_inner().expect("flush to memory")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub const SERIES_HEADER: [&str; 4] = ["total_length", "L_A", "re_S", "im_S"];

pub fn series_table(series: &ScalingSeries) -> Table {
    let mut t = Table::new(SERIES_HEADER);
    for &(la, s) in &series.points {
        let [re, im] = re_im(s);
        t.push(vec![series.total_length.to_string(), la.to_string(), re, im]);
    }
    t
}

pub fn read_series(path: &Path, geometry: Geometry) -> Result<ScalingSeries> {
    let bad = |message: String| CliError::Input { path: path.into(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(SERIES_HEADER) {
        return Err(bad(format!("expected header {}", SERIES_HEADER.join(","))));
    }
    let mut total = None;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("").trim();
        let int = |j: usize| field(j).parse::<usize>().map_err(|_| bad(format!("line {line}: bad {}", SERIES_HEADER[j])));
        let float = |j: usize| field(j).parse::<f64>().map_err(|_| bad(format!("line {line}: bad {}", SERIES_HEADER[j])));
        let l = int(0)?;
        if total.is_some_and(|t| t != l) {
            return Err(bad(format!("line {line}: total_length changes within the file")));
        }
        total = Some(l);
        points.push((int(1)?, C64::new(float(2)?, float(3)?)));
    }
    let total = total.ok_or_else(|| bad("no data rows".into()))?;
    ScalingSeries::new(total, points, geometry).map_err(|e| bad(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Ran, but a check exceeded its tolerance.
    Failed,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointEntry {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub status: Status,
    pub error: Option<String>,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub version: String,
    pub timestamp: String,
    pub tolerances: crate::config::Tolerances,
    pub outputs: Vec<PathBuf>,
    pub points: Vec<PointEntry>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_digest: String, tolerances: crate::config::Tolerances) -> Self {
        Manifest {
            command: command.into(),
            config_digest,
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tolerances,
            outputs: Vec::new(),
            points: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Flattened warning list, each prefixed by its point.
    pub fn collect_warnings(&mut self) {
        self.warnings = self
            .points
            .iter()
            .flat_map(|p| p.warnings.iter().map(move |w| format!("point {}: {w}", p.index)))
            .collect();
    }

    pub fn exit_code(&self, validation_failed: bool) -> i32 {
        if validation_failed {
            1
        } else if self.points.iter().any(|p| !matches!(p.status, Status::Ok)) {
            2
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(num(1.0), "1.00000000000e0");
        assert_eq!(num(-0.000123456789012345), "-1.23456789012e-4");
        assert_eq!(num(1.0).len(), num(9.5).len());
        assert_eq!(num(-0.0), num(0.0));
    }

    #[test]
    fn table_uses_lf_and_quotes_when_needed() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "a,b\n\"x,y\",1\n");
    }

    #[test]
    fn series_round_trip() {
        let pts: Vec<(usize, C64)> = (4..12).map(|l| (l, C64::new((l as f64).ln() / 3.0 + 0.1, 1e-13 * l as f64))).collect();
        let s = ScalingSeries::new(32, pts, Geometry::Chord).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        series_table(&s).write(&path).unwrap();
        let back = read_series(&path, Geometry::Chord).unwrap();
        assert_eq!(back.total_length, 32);
        for (a, b) in s.points.iter().zip(&back.points) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).norm() <= 1e-11 * a.1.norm());
        }
        let fa = nhfermion::scaling::fit_central_charge(&s).unwrap();
        let fb = nhfermion::scaling::fit_central_charge(&back).unwrap();
        assert!((fa.c - fb.c).abs() < 1e-9);
    }

    #[test]
    fn series_reader_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "total_length,L_A,re_S,im_S\n32,4,0.5,0\n32,x,0.6,0\n").unwrap();
        let err = read_series(&path, Geometry::Chord).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&path, "L,L_A,re_S,im_S\n").unwrap();
        assert!(read_series(&path, Geometry::Chord).is_err());
    }
}

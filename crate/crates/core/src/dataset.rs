//! Domain types shared by every stage of a run, plus dataset I/O.
//!
//! Two on-disk formats are supported:
//!
//! * CSV: one row per sample, comma separated coordinates, optional trailing
//!   label token. A file is labeled when the last field of its first row does
//!   not parse as a number.
//! * Binary: magic `PEDS`, `u32` sample count, `u32` dimension, `u8` label
//!   flag, row-major little-endian `f64` coordinates, then `u32`
//!   length-prefixed UTF-8 labels.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PeError, Result};

const MAGIC: &[u8; 4] = b"PEDS";

/// A point in the bounded sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Opaque tag forwarded to the generation backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

impl Sample {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords,
            label: None,
            condition: None,
        }
    }

    pub fn labeled(coords: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            coords,
            label: Some(label.into()),
            condition: None,
        }
    }

    pub fn with_condition(mut self, condition: Option<String>) -> Self {
        self.condition = condition;
        self
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Ordered multiset of samples with the set of labels present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset and derives its class set. All samples must share one
    /// dimension.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dim = first.dim();
            for (row, s) in samples.iter().enumerate() {
                if s.dim() != dim {
                    return Err(PeError::DimensionMismatch {
                        expected: dim,
                        found: s.dim(),
                        row: Some(row + 1),
                    });
                }
            }
        }
        let classes = samples.iter().filter_map(|s| s.label.clone()).collect();
        Ok(Self { samples, classes })
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points.into_iter().map(Sample::new).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(Sample::dim)
    }

    pub fn is_conditional(&self) -> bool {
        !self.classes.is_empty()
    }

    /// Samples carrying `label`, in file order.
    pub fn class_subset(&self, label: &str) -> Dataset {
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| s.label.as_deref() == Some(label))
            .cloned()
            .collect();
        let classes = if samples.is_empty() {
            BTreeSet::new()
        } else {
            BTreeSet::from([label.to_string()])
        };
        Dataset { samples, classes }
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.coords.as_slice())
    }
}

/// Generated samples of one generation (the population of an iteration).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub samples: Vec<Sample>,
    pub generation: usize,
}

impl Population {
    pub fn new(samples: Vec<Sample>, generation: usize) -> Self {
        Self {
            samples,
            generation,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        Dataset::new(self.samples)
    }
}

/// The ℓ2 ball that contains both private and generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallWorld {
    pub center: Vec<f64>,
    pub diameter: f64,
}

impl BallWorld {
    pub fn new(center: Vec<f64>, diameter: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(PeError::InvalidArgument("ball dimension must be >= 1".into()));
        }
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(PeError::InvalidArgument(format!(
                "ball diameter must be positive, got {diameter}"
            )));
        }
        Ok(Self { center, diameter })
    }

    /// Ball centered at the origin.
    pub fn centered(dim: usize, diameter: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], diameter)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    pub fn distance_to_center(&self, x: &[f64]) -> f64 {
        crate::distance::l2(x, &self.center)
    }

    /// Membership with a small relative slack for points projected onto the
    /// sphere.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.distance_to_center(x) <= self.radius() * (1.0 + 1e-12)
    }

    /// Radial projection back into the ball.
    pub fn project(&self, x: &mut [f64]) {
        let r = self.distance_to_center(x);
        let radius = self.radius();
        if r > radius {
            let scale = radius / r;
            for (xi, ci) in x.iter_mut().zip(&self.center) {
                *xi = ci + (*xi - ci) * scale;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Binary,
}

impl FromStr for Format {
    type Err = PeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "binary" | "bin" | "peds" => Ok(Format::Binary),
            other => Err(PeError::InvalidArgument(format!(
                "unknown dataset format `{other}` (expected csv or binary)"
            ))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("peds") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    match format {
        Format::Csv => read_csv(BufReader::new(file)),
        Format::Binary => read_binary(BufReader::new(file)),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(dataset, &mut w)?,
        Format::Binary => write_binary(dataset, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut samples = Vec::new();
    let mut width: Option<usize> = None;
    let mut labeled = false;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| PeError::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => {
                width = Some(record.len());
                let last = record.get(record.len() - 1).unwrap_or_default();
                labeled = last.parse::<f64>().is_err();
                if labeled && record.len() < 2 {
                    return Err(PeError::Parse {
                        row,
                        message: "row has a label but no coordinates".into(),
                    });
                }
            }
            Some(w) if w != record.len() => {
                let coords = |n: usize| if labeled { n - 1 } else { n };
                return Err(PeError::DimensionMismatch {
                    expected: coords(w),
                    found: coords(record.len()),
                    row: Some(row),
                });
            }
            Some(_) => {}
        }
        let n_coords = if labeled { record.len() - 1 } else { record.len() };
        let coords = record
            .iter()
            .take(n_coords)
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| PeError::Parse {
                    row,
                    message: format!("`{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = labeled.then(|| record[n_coords].to_string());
        samples.push(Sample {
            coords,
            label,
            condition: None,
        });
    }
    if samples.is_empty() {
        return Err(PeError::NoSamples);
    }
    Dataset::new(samples)
}

/// Writes shortest round-trip decimal representations, which parse back to
/// the identical `f64`.
pub fn write_csv<W: Write>(dataset: &Dataset, w: &mut W) -> Result<()> {
    for s in &dataset.samples {
        let mut line = s
            .coords
            .iter()
            .map(|c| format!("{c:?}"))
            .collect::<Vec<_>>()
            .join(",");
        if let Some(label) = &s.label {
            if label.contains([',', '\n', '\r', '"']) || label.parse::<f64>().is_ok() {
                return Err(PeError::InvalidArgument(format!(
                    "label `{label}` cannot be stored in CSV"
                )));
            }
            line.push(',');
            line.push_str(label);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PeError::Parse {
            row: 0,
            message: "bad magic bytes (expected PEDS)".into(),
        });
    }
    let n = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let has_label = match flag[0] {
        0 => false,
        1 => true,
        other => {
            return Err(PeError::Parse {
                row: 0,
                message: format!("invalid label flag {other}"),
            })
        }
    };
    if n == 0 {
        return Err(PeError::NoSamples);
    }
    let mut samples = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        let mut coords = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf)?;
            coords.push(f64::from_le_bytes(buf));
        }
        samples.push(Sample::new(coords));
    }
    if has_label {
        for (row, s) in samples.iter_mut().enumerate() {
            let len = read_u32(&mut r)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            let label = String::from_utf8(bytes).map_err(|e| PeError::Parse {
                row: row + 1,
                message: e.to_string(),
            })?;
            s.label = Some(label);
        }
    }
    Dataset::new(samples)
}

pub fn write_binary<W: Write>(dataset: &Dataset, w: &mut W) -> Result<()> {
    let n = u32::try_from(dataset.len())
        .map_err(|_| PeError::InvalidArgument("too many samples for u32 count".into()))?;
    let dim = dataset.dim().unwrap_or(0) as u32;
    let has_label = dataset.samples.iter().any(|s| s.label.is_some());
    if has_label && dataset.samples.iter().any(|s| s.label.is_none()) {
        return Err(PeError::InvalidArgument(
            "either every sample or no sample must carry a label".into(),
        ));
    }
    w.write_all(MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&[has_label as u8])?;
    for s in &dataset.samples {
        for c in &s.coords {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    if has_label {
        for s in &dataset.samples {
            let label = s.label.as_deref().unwrap_or_default().as_bytes();
            w.write_all(&(label.len() as u32).to_le_bytes())?;
            w.write_all(label)?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_with_labels() {
        let ds = read_csv("0.1,0.2,a\n0.3,0.4,b\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0].coords, vec![0.1, 0.2]);
        assert_eq!(
            ds.classes,
            BTreeSet::from(["a".to_string(), "b".to_string()])
        );
    }

    #[test]
    fn csv_without_labels_is_unconditional() {
        let ds = read_csv("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(ds.dim(), Some(3));
        assert!(!ds.is_conditional());
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(matches!(read_csv("".as_bytes()), Err(PeError::NoSamples)));
        assert_eq!(read_csv("\n".as_bytes()).unwrap_err().to_string(), "no samples");
    }

    #[test]
    fn inconsistent_columns_report_dimension_mismatch() {
        let err = read_csv("1,2\n3,4,5\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            PeError::DimensionMismatch {
                expected: 2,
                found: 3,
                row: Some(2)
            }
        ));
    }

    #[test]
    fn bad_number_reports_row() {
        let err = read_csv("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PeError::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn binary_round_trip_three_samples() {
        let ds = Dataset::new(vec![
            Sample::labeled(vec![0.1, -2.5e-300], "x"),
            Sample::labeled(vec![f64::MAX, 1.0 / 3.0], "y"),
            Sample::labeled(vec![-0.0, f64::MIN_POSITIVE], "x"),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_binary(&ds, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PEDS");
        let back = read_binary(buf.as_slice()).unwrap();
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.coords), bits(&b.coords));
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let ds = Dataset::from_points(vec![vec![1.0]]).unwrap();
        let err = save_dataset(&ds, "/nonexistent-dir/x/y.csv", Format::Csv).unwrap_err();
        assert!(matches!(err, PeError::Io(_)));
    }

    #[test]
    fn projection_lands_on_sphere() {
        let ball = BallWorld::centered(2, 1.0).unwrap();
        let mut x = vec![3.0, 4.0];
        ball.project(&mut x);
        assert!((ball.distance_to_center(&x) - 0.5).abs() < 1e-15);
        assert!(ball.contains(&x));
    }

    proptest! {
        #[test]
        fn round_trips_preserve_bits(
            rows in proptest::collection::vec(
                proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 3),
                1..20),
        ) {
            let ds = Dataset::from_points(rows).unwrap();
            let mut bin = Vec::new();
            write_binary(&ds, &mut bin).unwrap();
            let mut text = Vec::new();
            write_csv(&ds, &mut text).unwrap();
            for back in [read_binary(bin.as_slice()).unwrap(), read_csv(text.as_slice()).unwrap()] {
                prop_assert_eq!(back.len(), ds.len());
                for (a, b) in ds.samples.iter().zip(&back.samples) {
                    for (x, y) in a.coords.iter().zip(&b.coords) {
                        prop_assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
            }
        }
    }
}

//! Parsers for the on-disk formats: embedding CSV, IDX image/label pairs,
//! per-class accuracy tables and trial summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// One labeled point of a reduced embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSample {
    pub id: u64,
    pub label: u32,
    pub coords: Vec<f64>,
}

/// A validated collection of labeled points sharing one dimensionality.
///
/// Construction checks every invariant: uniform finite coordinates, unique
/// ids and at least two classes. Classes are iterated in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dims: usize,
    samples: Vec<EmbeddedSample>,
    class_index: BTreeMap<u32, Vec<usize>>,
}

impl EmbeddingSet {
    pub fn new(dims: usize, samples: Vec<EmbeddedSample>) -> Result<Self, IngestError> {
        if dims == 0 {
            return Err(IngestError::ZeroDimensions);
        }
        let mut seen = HashSet::with_capacity(samples.len());
        let mut class_index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, s) in samples.iter().enumerate() {
            if s.coords.len() != dims {
                return Err(IngestError::DimensionMismatch {
                    id: s.id,
                    expected: dims,
                    found: s.coords.len(),
                });
            }
            if s.coords.iter().any(|c| !c.is_finite()) {
                return Err(IngestError::NonFinite { id: s.id });
            }
            if !seen.insert(s.id) {
                return Err(IngestError::DuplicateId(s.id));
            }
            class_index.entry(s.label).or_default().push(pos);
        }
        if class_index.len() < 2 {
            return Err(IngestError::FewerThanTwoClasses);
        }
        Ok(Self {
            dims,
            samples,
            class_index,
        })
    }

    /// Re-checks every invariant.
    pub fn validate(&self) -> Result<(), IngestError> {
        Self::new(self.dims, self.samples.clone()).map(|_| ())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[EmbeddedSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<EmbeddedSample> {
        self.samples
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.class_index.keys().copied()
    }

    pub fn class_size(&self, class: u32) -> usize {
        self.class_index.get(&class).map_or(0, Vec::len)
    }

    /// Members of `class` in input order; empty for an unknown class.
    pub fn members(&self, class: u32) -> impl Iterator<Item = &EmbeddedSample> + '_ {
        self.class_index
            .get(&class)
            .into_iter()
            .flatten()
            .map(move |&pos| &self.samples[pos])
    }

    pub fn member_ids(&self, class: u32) -> Vec<u64> {
        self.members(class).map(|s| s.id).collect()
    }

    /// Map from class id to member ids.
    pub fn class_index(&self) -> BTreeMap<u32, Vec<u64>> {
        self.classes().map(|c| (c, self.member_ids(c))).collect()
    }

    /// A new set without the given ids. Every class must keep at least one
    /// sample.
    pub fn without_ids(&self, excluded: &HashSet<u64>) -> Result<Self, IngestError> {
        let kept: Vec<EmbeddedSample> = self
            .samples
            .iter()
            .filter(|s| !excluded.contains(&s.id))
            .cloned()
            .collect();
        let out = Self::new(self.dims, kept)?;
        if out.n_classes() != self.n_classes() {
            return Err(IngestError::FewerThanTwoClasses);
        }
        Ok(out)
    }

    /// Writes the canonical `id,label,d0,...` CSV. Coordinates use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = String::from("id,label");
        for k in 0..self.dims {
            line.push_str(&format!(",d{k}"));
        }
        writeln!(w, "{line}")?;
        for s in &self.samples {
            line.clear();
            line.push_str(&format!("{},{}", s.id, s.label));
            for c in &s.coords {
                line.push_str(&format!(",{c}"));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

/// Parses an embedding CSV with header `id,label,d0,...,d{m-1}`.
pub fn parse_embedding_csv<R: Read>(reader: R) -> Result<EmbeddingSet, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(IngestError::MalformedHeader(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("d{k}") {
            return Err(IngestError::MalformedHeader(format!(
                "column {} is {name:?}, expected \"d{k}\"",
                k + 2
            )));
        }
    }
    let dims = header.len() - 2;

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(IngestError::Arity {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = parse_field::<u64>(&record[0], "id", line)?;
        let label = parse_field::<u32>(&record[1], "label", line)?;
        let coords = (0..dims)
            .map(|k| parse_field::<f64>(&record[k + 2], &format!("d{k}"), line))
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(EmbeddedSample { id, label, coords });
    }
    EmbeddingSet::new(dims, samples)
}

fn parse_field<T: FromStr>(raw: &str, field: &str, line: u64) -> Result<T, IngestError> {
    raw.trim().parse().map_err(|_| IngestError::BadValue {
        line,
        field: field.to_string(),
        value: raw.to_string(),
    })
}

/// Unreduced vectors with ids and labels, e.g. flattened IDX images.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVectorSet {
    pub ids: Vec<u64>,
    pub labels: Vec<u32>,
    pub vectors: Vec<Vec<f64>>,
}

impl RawVectorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self {
            bytes,
            pos: 0,
            what,
        }
    }

    fn u32_be(&mut self) -> Result<u32, IngestError> {
        let chunk = self.take(4)?;
        Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], IngestError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                IngestError::Truncated(format!(
                    "{} stream ends at byte {}, needed {}",
                    self.what,
                    self.bytes.len(),
                    self.pos.saturating_add(len)
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

/// Parses an IDX image file (magic `0x00000803`) and its label file (magic
/// `0x00000801`). Pixels are scaled to `[0, 1]`; ids are the item indices.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<RawVectorSet, IngestError> {
    let mut img = ByteCursor::new(images, "image");
    let magic = img.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IngestError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n_images = img.u32_be()? as usize;
    let rows = img.u32_be()? as usize;
    let cols = img.u32_be()? as usize;

    let mut lab = ByteCursor::new(labels, "label");
    let magic = lab.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IngestError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = lab.u32_be()? as usize;
    if n_images != n_labels {
        return Err(IngestError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let pixels = rows
        .checked_mul(cols)
        .ok_or_else(|| IngestError::Truncated("image dimensions overflow".into()))?;
    let label_bytes = lab.take(n_labels)?;
    let mut vectors = Vec::with_capacity(n_images);
    for _ in 0..n_images {
        let raw = img.take(pixels)?;
        vectors.push(raw.iter().map(|&b| f64::from(b) / 255.0).collect());
    }
    Ok(RawVectorSet {
        ids: (0..n_images as u64).collect(),
        labels: label_bytes.iter().map(|&b| u32::from(b)).collect(),
        vectors,
    })
}

/// Encodes vectors as an IDX image/label pair of `rows x cols` images.
/// Values are quantized to the nearest `k / 255`.
pub fn write_idx(
    set: &RawVectorSet,
    rows: usize,
    cols: usize,
) -> Result<(Vec<u8>, Vec<u8>), IngestError> {
    if set.labels.len() != set.vectors.len() {
        return Err(IngestError::CountMismatch {
            images: set.vectors.len(),
            labels: set.labels.len(),
        });
    }
    let mut images = Vec::with_capacity(16 + set.len() * rows * cols);
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(set.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for (i, v) in set.vectors.iter().enumerate() {
        if v.len() != rows * cols {
            return Err(IngestError::DimensionMismatch {
                id: set.ids.get(i).copied().unwrap_or(i as u64),
                expected: rows * cols,
                found: v.len(),
            });
        }
        for &x in v {
            if !(0.0..=1.0).contains(&x) {
                return Err(IngestError::OutOfRange {
                    class: format!("pixel of vector {i}"),
                    value: x,
                });
            }
            images.push((x * 255.0).round() as u8);
        }
    }

    let mut labels = Vec::with_capacity(8 + set.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(set.len() as u32).to_be_bytes());
    for &l in &set.labels {
        let byte = u8::try_from(l).map_err(|_| IngestError::OutOfRange {
            class: l.to_string(),
            value: f64::from(l),
        })?;
        labels.push(byte);
    }
    Ok((images, labels))
}

/// Per-class accuracies as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: BTreeMap<u32, f64>,
}

impl AccuracyTable {
    pub fn from_rows(rows: impl IntoIterator<Item = (u32, f64)>) -> Result<Self, IngestError> {
        let mut out = BTreeMap::new();
        for (class, acc) in rows {
            check_unit(&class.to_string(), acc)?;
            if out.insert(class, acc).is_some() {
                return Err(IngestError::DuplicateClass(class));
            }
        }
        Ok(Self { rows: out })
    }
}

fn check_unit(what: &str, value: f64) -> Result<(), IngestError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(IngestError::OutOfRange {
            class: what.to_string(),
            value,
        })
    }
}

/// Parses a fraction, or a percentage when the value carries a `%` suffix.
pub fn parse_fraction(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    match raw.strip_suffix('%') {
        Some(pct) => pct.trim().parse::<f64>().ok().map(|v| v / 100.0),
        None => raw.parse().ok(),
    }
}

/// Parses a `class,accuracy` CSV.
pub fn parse_accuracy_table<R: Read>(reader: R) -> Result<AccuracyTable, IngestError> {
    let rows = read_keyed_csv(reader, &["class", "accuracy"], |fields, line| {
        let class = parse_field::<u32>(fields[0], "class", line)?;
        let acc = parse_fraction(fields[1]).ok_or_else(|| IngestError::BadValue {
            line,
            field: "accuracy".into(),
            value: fields[1].to_string(),
        })?;
        Ok((class, acc))
    })?;
    AccuracyTable::from_rows(rows)
}

/// Parses a `class,density` CSV into a class-keyed map.
pub fn parse_density_csv<R: Read>(reader: R) -> Result<BTreeMap<u32, f64>, IngestError> {
    let rows = read_keyed_csv(reader, &["class", "density"], |fields, line| {
        let class = parse_field::<u32>(fields[0], "class", line)?;
        let d = parse_field::<f64>(fields[1], "density", line)?;
        if !d.is_finite() {
            return Err(IngestError::BadValue {
                line,
                field: "density".into(),
                value: fields[1].to_string(),
            });
        }
        Ok((class, d))
    })?;
    let mut out = BTreeMap::new();
    for (class, d) in rows {
        if out.insert(class, d).is_some() {
            return Err(IngestError::DuplicateClass(class));
        }
    }
    Ok(out)
}

fn read_keyed_csv<R: Read, T>(
    reader: R,
    expected_header: &[&str],
    mut row: impl FnMut(&[&str], u64) -> Result<T, IngestError>,
) -> Result<Vec<T>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header
        .iter()
        .map(str::trim)
        .ne(expected_header.iter().copied())
    {
        return Err(IngestError::MalformedHeader(format!(
            "expected {:?}, found {:?}",
            expected_header.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected_header.len() {
            return Err(IngestError::Arity {
                line,
                expected: expected_header.len(),
                found: record.len(),
            });
        }
        let fields: Vec<&str> = record.iter().collect();
        out.push(row(&fields, line)?);
    }
    Ok(out)
}

/// Mean and population standard deviation of accuracy over repeated trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: f64,
    pub std_pop: f64,
    pub n_trials: u32,
}

impl TrialSummary {
    pub fn new(mean: f64, std_pop: f64, n_trials: u32) -> Result<Self, IngestError> {
        check_unit("trial mean", mean)?;
        if !std_pop.is_finite() || std_pop < 0.0 {
            return Err(IngestError::BadTrialSummary(format!(
                "std must be finite and non-negative, got {std_pop}"
            )));
        }
        if n_trials == 0 {
            return Err(IngestError::BadTrialSummary(
                "trial count must be positive".into(),
            ));
        }
        Ok(Self {
            mean,
            std_pop,
            n_trials,
        })
    }
}

impl FromStr for TrialSummary {
    type Err = IngestError;

    /// `mean,std,n`; the mean may be given as a percentage.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [mean, std, n] = parts.as_slice() else {
            return Err(IngestError::BadTrialSummary(format!(
                "expected mean,std,n, got {s:?}"
            )));
        };
        let bad =
            |what: &str| IngestError::BadTrialSummary(format!("cannot parse {what} in {s:?}"));
        let mean = parse_fraction(mean).ok_or_else(|| bad("mean"))?;
        let std = std.parse::<f64>().map_err(|_| bad("std"))?;
        let n = n.parse::<u32>().map_err(|_| bad("n"))?;
        Self::new(mean, std, n)
    }
}

/// Trial summaries keyed by target density, plus the unreduced baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialTable {
    pub baseline: Option<TrialSummary>,
    pub by_target: Vec<(f64, TrialSummary)>,
}

impl TrialTable {
    pub fn for_target(&self, target: f64) -> Option<&TrialSummary> {
        self.by_target
            .iter()
            .find(|(t, _)| (t - target).abs() <= 1e-12 * target.abs().max(1.0))
            .map(|(_, s)| s)
    }
}

/// Parses a `target,mean,std,n` CSV. The baseline row has target `baseline`.
pub fn parse_trial_table<R: Read>(reader: R) -> Result<TrialTable, IngestError> {
    let rows = read_keyed_csv(reader, &["target", "mean", "std", "n"], |fields, line| {
        let summary: TrialSummary = fields[1..].join(",").parse()?;
        let target = if fields[0].trim().eq_ignore_ascii_case("baseline") {
            None
        } else {
            Some(parse_field::<f64>(fields[0], "target", line)?)
        };
        Ok((target, summary))
    })?;
    let mut table = TrialTable::default();
    let mut seen: HashMap<u64, ()> = HashMap::new();
    for (target, summary) in rows {
        match target {
            None if table.baseline.is_some() => {
                return Err(IngestError::BadTrialSummary(
                    "duplicate baseline row".into(),
                ))
            }
            None => table.baseline = Some(summary),
            Some(t) => {
                if seen.insert(t.to_bits(), ()).is_some() {
                    return Err(IngestError::BadTrialSummary(format!(
                        "duplicate target {t}"
                    )));
                }
                table.by_target.push((t, summary));
            }
        }
    }
    Ok(table)
}

//! File formats: dense matrices, long-format predictions, metadata.
//!
//! Two dense CSV matrix layouts share one shape — a `site_id` column
//! followed by one column per species — and differ only in the cell domain:
//! probabilities in [0, 1] versus binary occurrences. Predictions travel as
//! a long `site_id,species_id` CSV paired with a JSON sidecar
//! (`<file>.meta.json`) that pins the full site and species universes plus
//! provenance; the sidecar is what keeps sites with empty predicted sets
//! from disappearing.
//!
//! All CSV is comma-separated, newline-terminated UTF-8 without a BOM.
//! Parse errors name the 1-based data row and the column id. Axes are
//! aligned by id, never by position; a universe mismatch is a hard error.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn file_err(path: &Path, message: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn cell_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::MalformedCell {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read a whole CSV file into rows of string cells. Rows may be ragged;
/// shape checks happen at the call site where column ids are known.
fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(&raw);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(raw.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| file_err(path, e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn check_unique(path: &Path, ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(file_err(path, format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

/// Parse the shared dense layout; `parse_cell` maps a cell to a value or a
/// complaint.
fn parse_dense<T>(
    path: &Path,
    parse_cell: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<(Vec<String>, Vec<String>, Vec<T>)> {
    let rows = read_table(path)?;
    let Some((header, data_rows)) = rows.split_first() else {
        return Err(file_err(path, "file is empty"));
    };
    if header.first().map(String::as_str) != Some("site_id") {
        return Err(file_err(
            path,
            "header must start with a site_id column followed by species columns",
        ));
    }
    let species_ids: Vec<String> = header[1..].to_vec();
    if species_ids.is_empty() {
        return Err(file_err(path, "header names no species columns"));
    }
    check_unique(path, &species_ids, "species")?;
    let mut site_ids = Vec::with_capacity(data_rows.len());
    let mut values = Vec::with_capacity(data_rows.len() * species_ids.len());
    for (i, row) in data_rows.iter().enumerate() {
        let row_number = i + 1;
        if row.len() != header.len() {
            return Err(file_err(
                path,
                format!(
                    "row {row_number} has {} fields, header has {}",
                    row.len(),
                    header.len()
                ),
            ));
        }
        site_ids.push(row[0].clone());
        for (j, cell) in row[1..].iter().enumerate() {
            match parse_cell(cell) {
                Ok(v) => values.push(v),
                Err(message) => {
                    return Err(cell_err(path, row_number, &species_ids[j], message))
                }
            }
        }
    }
    check_unique(path, &site_ids, "site")?;
    Ok((site_ids, species_ids, values))
}

fn write_dense(
    path: &Path,
    site_ids: &[String],
    species_ids: &[String],
    mut cell: impl FnMut(usize, usize) -> String,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header = vec!["site_id".to_string()];
    header.extend_from_slice(species_ids);
    writer
        .write_record(&header)
        .and_then(|_| {
            for (i, site) in site_ids.iter().enumerate() {
                let mut record = vec![site.clone()];
                record.extend((0..species_ids.len()).map(|j| cell(i, j)));
                writer.write_record(&record)?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| file_err(path, e.to_string()))
}

/// Dense per-site, per-species presence probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    site_ids: Vec<String>,
    species_ids: Vec<String>,
    /// Row-major, `n_sites * n_species`.
    values: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(
        site_ids: Vec<String>,
        species_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != site_ids.len() * species_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {} x {} matrix",
                values.len(),
                site_ids.len(),
                species_ids.len()
            )));
        }
        crate::setdist::validate_probabilities(&values)?;
        Ok(ProbabilityMatrix {
            site_ids,
            species_ids,
            values,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn n_species(&self) -> usize {
        self.species_ids.len()
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn species_ids(&self) -> &[String] {
        &self.species_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_species();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.row(i)[j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_species() + j]
    }

    /// Every cell in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (site_ids, species_ids, values) = parse_dense(path, |cell| {
            let v: f64 = cell
                .parse()
                .map_err(|_| format!("non-numeric value {cell:?}"))?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(format!("probability {v} outside [0, 1]"));
            }
            Ok(v)
        })?;
        ProbabilityMatrix::new(site_ids, species_ids, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_dense(
            path.as_ref(),
            &self.site_ids,
            &self.species_ids,
            |i, j| self.get(i, j).to_string(),
        )
    }
}

/// Dense binary presence/absence truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceMatrix {
    site_ids: Vec<String>,
    species_ids: Vec<String>,
    values: Vec<bool>,
}

impl OccurrenceMatrix {
    pub fn new(
        site_ids: Vec<String>,
        species_ids: Vec<String>,
        values: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != site_ids.len() * species_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {} x {} matrix",
                values.len(),
                site_ids.len(),
                species_ids.len()
            )));
        }
        Ok(OccurrenceMatrix {
            site_ids,
            species_ids,
            values,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn n_species(&self) -> usize {
        self.species_ids.len()
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn species_ids(&self) -> &[String] {
        &self.species_ids
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[i * self.n_species() + j]
    }

    /// Species indices present at one site, ascending.
    pub fn row_set(&self, i: usize) -> Vec<usize> {
        (0..self.n_species()).filter(|&j| self.get(i, j)).collect()
    }

    /// Site indices where one species is present, ascending.
    pub fn column_set(&self, j: usize) -> Vec<usize> {
        (0..self.n_sites()).filter(|&i| self.get(i, j)).collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (site_ids, species_ids, values) = parse_dense(path, |cell| {
            let v: f64 = cell
                .parse()
                .map_err(|_| format!("non-numeric value {cell:?}"))?;
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err("non-binary value".to_string())
            }
        })?;
        OccurrenceMatrix::new(site_ids, species_ids, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_dense(
            path.as_ref(),
            &self.site_ids,
            &self.species_ids,
            |i, j| if self.get(i, j) { "1" } else { "0" }.to_string(),
        )
    }

    /// Reorder rows and columns to the given id order. The id sets must
    /// match exactly; extra or missing ids on either side are an error.
    pub fn aligned_to(&self, site_ids: &[String], species_ids: &[String]) -> Result<Self> {
        let site_order = alignment(&self.site_ids, site_ids, "site")?;
        let species_order = alignment(&self.species_ids, species_ids, "species")?;
        let mut values = Vec::with_capacity(self.values.len());
        for &i in &site_order {
            for &j in &species_order {
                values.push(self.get(i, j));
            }
        }
        OccurrenceMatrix::new(site_ids.to_vec(), species_ids.to_vec(), values)
    }
}

/// For each wanted id, its position in `have`. Errors spell out the
/// difference between the two universes.
fn alignment(have: &[String], want: &[String], what: &str) -> Result<Vec<usize>> {
    let positions: std::collections::HashMap<&str, usize> = have
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let missing: Vec<&String> = want.iter().filter(|id| !positions.contains_key(id.as_str())).collect();
    let wanted: HashSet<&str> = want.iter().map(String::as_str).collect();
    let extra: Vec<&String> = have.iter().filter(|id| !wanted.contains(id.as_str())).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing {what} ids {:?}", sample(&missing)));
        }
        if !extra.is_empty() {
            parts.push(format!("unexpected {what} ids {:?}", sample(&extra)));
        }
        return Err(Error::IdMismatch(format!(
            "{what} universes do not match: {}",
            parts.join("; ")
        )));
    }
    Ok(want.iter().map(|id| positions[id.as_str()]).collect())
}

fn sample<'a>(ids: &[&'a String]) -> Vec<&'a str> {
    ids.iter().take(5).map(|s| s.as_str()).collect()
}

/// Provenance recorded next to every prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionMetadata {
    /// Human-readable descriptor of the method that produced the sets.
    pub method: String,
    /// Score token the method targeted, e.g. "f1".
    pub score: String,
    /// RFC 3339 creation time.
    pub timestamp: String,
    /// Version of the tool that wrote the file.
    pub version: String,
}

#[derive(Serialize, Deserialize)]
struct PredictionSidecar {
    site_ids: Vec<String>,
    species_ids: Vec<String>,
    #[serde(flatten)]
    metadata: PredictionMetadata,
}

/// Binary set predictions for every site, with their id universes.
///
/// Sets are stored as ascending species indices into `species_ids`. On disk
/// this is a long `site_id,species_id` CSV plus a `<file>.meta.json`
/// sidecar carrying both id universes and [`PredictionMetadata`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    site_ids: Vec<String>,
    species_ids: Vec<String>,
    sets: Vec<Vec<usize>>,
    pub metadata: PredictionMetadata,
}

impl Predictions {
    /// Build from per-site index sets; sets are deduplicated and sorted.
    pub fn new(
        site_ids: Vec<String>,
        species_ids: Vec<String>,
        mut sets: Vec<Vec<usize>>,
        metadata: PredictionMetadata,
    ) -> Result<Self> {
        if sets.len() != site_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} prediction sets for {} sites",
                sets.len(),
                site_ids.len()
            )));
        }
        for set in &mut sets {
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&j| j >= species_ids.len()) {
                return Err(Error::InvalidValue(format!(
                    "species index {bad} outside universe of size {}",
                    species_ids.len()
                )));
            }
        }
        Ok(Predictions {
            site_ids,
            species_ids,
            sets,
            metadata,
        })
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn species_ids(&self) -> &[String] {
        &self.species_ids
    }

    /// Per-site predicted index sets, ascending, in site order.
    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Path of the JSON sidecar belonging to a prediction CSV.
    pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
        let mut name = path.as_os_str().to_os_string();
        name.push(".meta.json");
        std::path::PathBuf::from(name)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(["site_id", "species_id"])
            .and_then(|_| {
                for (site, set) in self.site_ids.iter().zip(&self.sets) {
                    let mut ids: Vec<&str> =
                        set.iter().map(|&j| self.species_ids[j].as_str()).collect();
                    ids.sort_unstable();
                    for id in ids {
                        writer.write_record([site.as_str(), id])?;
                    }
                }
                writer.flush().map_err(csv::Error::from)
            })
            .map_err(|e| file_err(path, e.to_string()))?;
        let sidecar = PredictionSidecar {
            site_ids: self.site_ids.clone(),
            species_ids: self.species_ids.clone(),
            metadata: self.metadata.clone(),
        };
        let sidecar_path = Self::sidecar_path(path);
        let mut body = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Json {
                path: sidecar_path.display().to_string(),
                source: e,
            })?;
        body.push('\n');
        fs::write(&sidecar_path, body).map_err(|e| io_err(&sidecar_path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sidecar_path = Self::sidecar_path(path);
        let raw = fs::read_to_string(&sidecar_path).map_err(|e| io_err(&sidecar_path, e))?;
        let sidecar: PredictionSidecar =
            serde_json::from_str(&raw).map_err(|e| Error::Json {
                path: sidecar_path.display().to_string(),
                source: e,
            })?;
        check_unique(&sidecar_path, &sidecar.site_ids, "site")?;
        check_unique(&sidecar_path, &sidecar.species_ids, "species")?;
        let site_index: std::collections::HashMap<&str, usize> = sidecar
            .site_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let species_index: std::collections::HashMap<&str, usize> = sidecar
            .species_ids
            .iter()
            .enumerate()
            .map(|(j, id)| (id.as_str(), j))
            .collect();
        let rows = read_table(path)?;
        let Some((header, data_rows)) = rows.split_first() else {
            return Err(file_err(path, "file is empty"));
        };
        if header != &["site_id".to_string(), "species_id".to_string()] {
            return Err(file_err(path, "header must be exactly site_id,species_id"));
        }
        let mut sets = vec![Vec::new(); sidecar.site_ids.len()];
        for (i, row) in data_rows.iter().enumerate() {
            let row_number = i + 1;
            if row.len() != 2 {
                return Err(file_err(
                    path,
                    format!("row {row_number} has {} fields, expected 2", row.len()),
                ));
            }
            let &site = site_index.get(row[0].as_str()).ok_or_else(|| {
                cell_err(path, row_number, "site_id", format!("unknown site id {:?}", row[0]))
            })?;
            let &species = species_index.get(row[1].as_str()).ok_or_else(|| {
                cell_err(
                    path,
                    row_number,
                    "species_id",
                    format!("unknown species id {:?}", row[1]),
                )
            })?;
            if sets[site].contains(&species) {
                return Err(cell_err(
                    path,
                    row_number,
                    "species_id",
                    format!("duplicate prediction of {:?} at {:?}", row[1], row[0]),
                ));
            }
            sets[site].push(species);
        }
        Predictions::new(sidecar.site_ids, sidecar.species_ids, sets, sidecar.metadata)
    }
}

/// Creation timestamp for file metadata: honors `SOURCE_DATE_EPOCH` for
/// reproducible outputs, otherwise the current UTC time.
pub fn creation_timestamp() -> String {
    let moment = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .and_then(|secs| time::OffsetDateTime::from_unix_timestamp(secs).ok())
        .unwrap_or_else(time::OffsetDateTime::now_utc);
    moment
        .format(&time::format_description::well_known::Rfc3339)
        .expect("RFC 3339 formatting of a valid timestamp cannot fail")
}

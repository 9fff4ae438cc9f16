//! CSV ingestion for the four input tables (foods, flavonoid contents,
//! disease associations, optional drug formulations).
//!
//! Headers are matched case-insensitively and in any order. Every record
//! carries the file name and 1-based line number it came from so that later
//! stages can point back at the offending row. Cell values are trimmed of
//! surrounding whitespace; an optional header rename map adapts exports whose
//! column names differ from the expected ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a record came from: file name plus 1-based line number of the row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceProvenance {
    pub file_name: String,
    pub line_number: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodRecord {
    pub food_code: String,
    pub description: String,
    pub food_group: String,
    pub provenance: SourceProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentRecord {
    pub food_code: String,
    pub flavonoid_name: String,
    pub subclass: String,
    pub mean_mg_per_100g: f64,
    pub method: String,
    pub state: String,
    pub provenance: SourceProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRecord {
    pub flavonoid_name: String,
    pub disease_label: String,
    pub external_disease_id: Option<String>,
    pub effect: String,
    pub citation_key: String,
    pub provenance: SourceProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugRecord {
    pub drug_name: String,
    pub food_code: String,
    pub trial_id: Option<String>,
    pub disease_label: Option<String>,
    pub provenance: SourceProvenance,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: missing required column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: duplicate food code {code:?} on lines {first_line} and {second_line}")]
    DuplicateFoodCode {
        file: String,
        code: String,
        first_line: u64,
        second_line: u64,
    },
    #[error("{file}:{line}: column {column:?} is empty")]
    EmptyCell {
        file: String,
        column: String,
        line: u64,
    },
    #[error("{file}:{line}: mean value {value:?} is not a non-negative number")]
    InvalidMean {
        file: String,
        value: String,
        line: u64,
    },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
}

/// Reads the input tables. `renames` maps actual header names (as found in the
/// file) to the canonical ones, compared case-insensitively.
#[derive(Debug, Default, Clone)]
pub struct TableReader {
    renames: HashMap<String, String>,
}

impl TableReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_renames(renames: &HashMap<String, String>) -> Self {
        let renames = renames
            .iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v.trim().to_lowercase()))
            .collect();
        Self { renames }
    }

    pub fn foods(&self, csv_text: &str, file_name: &str) -> Result<Vec<FoodRecord>, IngestError> {
        let table = self.read_table(csv_text, file_name, &["foodcode", "description", "foodgroup"])?;
        let mut seen: HashMap<String, u64> = HashMap::new();
        let mut records = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let food_code = row.require(0)?;
            let description = row.require(1)?;
            let food_group = row.get(2);
            if let Some(first) = seen.get(&food_code) {
                return Err(IngestError::DuplicateFoodCode {
                    file: file_name.to_string(),
                    code: food_code,
                    first_line: *first,
                    second_line: row.line,
                });
            }
            seen.insert(food_code.clone(), row.line);
            records.push(FoodRecord {
                food_code,
                description,
                food_group,
                provenance: row.provenance(),
            });
        }
        Ok(records)
    }

    pub fn contents(
        &self,
        csv_text: &str,
        file_name: &str,
    ) -> Result<Vec<ContentRecord>, IngestError> {
        let table = self.read_table(
            csv_text,
            file_name,
            &["foodcode", "flavonoidname", "subclass", "mean_mg_100g", "method", "state"],
        )?;
        let mut records = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let food_code = row.require(0)?;
            let flavonoid_name = row.require(1)?;
            let subclass = row.get(2);
            let raw_mean = row.get(3);
            if raw_mean.is_empty() {
                return Err(IngestError::EmptyCell {
                    file: file_name.to_string(),
                    column: "Mean_mg_100g".to_string(),
                    line: row.line,
                });
            }
            let mean: f64 = raw_mean.parse().map_err(|_| IngestError::InvalidMean {
                file: file_name.to_string(),
                value: raw_mean.clone(),
                line: row.line,
            })?;
            if !mean.is_finite() || mean < 0.0 {
                return Err(IngestError::InvalidMean {
                    file: file_name.to_string(),
                    value: raw_mean,
                    line: row.line,
                });
            }
            records.push(ContentRecord {
                food_code,
                flavonoid_name,
                subclass,
                mean_mg_per_100g: mean,
                method: row.get(4),
                state: row.get(5),
                provenance: row.provenance(),
            });
        }
        Ok(records)
    }

    pub fn associations(
        &self,
        csv_text: &str,
        file_name: &str,
    ) -> Result<Vec<AssociationRecord>, IngestError> {
        let table = self.read_table(
            csv_text,
            file_name,
            &["flavonoidname", "diseaselabel", "diseaseid", "effect", "citation"],
        )?;
        let mut records = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let flavonoid_name = row.require(0)?;
            let disease_label = row.require(1)?;
            let disease_id = row.get(2);
            records.push(AssociationRecord {
                flavonoid_name,
                disease_label,
                external_disease_id: if disease_id.is_empty() { None } else { Some(disease_id) },
                effect: row.get(3),
                citation_key: row.get(4),
                provenance: row.provenance(),
            });
        }
        Ok(records)
    }

    pub fn drugs(&self, csv_text: &str, file_name: &str) -> Result<Vec<DrugRecord>, IngestError> {
        let table = self.read_table(
            csv_text,
            file_name,
            &["drugname", "compositionoffoodcode", "trialid", "diseaselabel"],
        )?;
        let mut records = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            let drug_name = row.require(0)?;
            let food_code = row.require(1)?;
            let trial_id = row.get(2);
            let disease_label = row.get(3);
            records.push(DrugRecord {
                drug_name,
                food_code,
                trial_id: if trial_id.is_empty() { None } else { Some(trial_id) },
                disease_label: if disease_label.is_empty() { None } else { Some(disease_label) },
                provenance: row.provenance(),
            });
        }
        Ok(records)
    }

    /// Reads all rows, projecting the required columns in the requested order.
    /// Column names are compared lowercased; `required` lists lowercased names.
    fn read_table(
        &self,
        csv_text: &str,
        file_name: &str,
        required: &[&str],
    ) -> Result<Table, IngestError> {
        let text = csv_text.strip_prefix('\u{feff}').unwrap_or(csv_text);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let wrap = |source: csv::Error| IngestError::Csv {
            file: file_name.to_string(),
            source,
        };
        let headers = reader.headers().map_err(wrap)?.clone();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, name) in headers.iter().enumerate() {
            let mut key = name.trim().trim_start_matches('\u{feff}').to_lowercase();
            if let Some(renamed) = self.renames.get(&key) {
                key = renamed.clone();
            }
            index.entry(key).or_insert(i);
        }
        let mut projection = Vec::with_capacity(required.len());
        for name in required {
            match index.get(*name) {
                Some(i) => projection.push(*i),
                None => {
                    return Err(IngestError::MissingColumn {
                        file: file_name.to_string(),
                        column: canonical_column_name(name).to_string(),
                    })
                }
            }
        }
        let mut rows = Vec::new();
        // csv's Position::line lags one line behind for CRLF input, so derive
        // the physical line from the record's byte offset instead.
        let mut lines = LineTracker::new(text);
        for record in reader.records() {
            let record = record.map_err(wrap)?;
            let line = record
                .position()
                .map(|p| lines.line_at(p.byte() as usize))
                .unwrap_or(0);
            let fields = projection
                .iter()
                .map(|&i| record.get(i).unwrap_or("").trim().to_string())
                .collect();
            rows.push(Row {
                fields,
                line,
                file: file_name.to_string(),
                columns: required.iter().map(|s| canonical_column_name(s).to_string()).collect(),
            });
        }
        Ok(Table { rows })
    }
}

/// Display-cased column names for error messages.
fn canonical_column_name(lower: &str) -> &'static str {
    match lower {
        "foodcode" => "FoodCode",
        "description" => "Description",
        "foodgroup" => "FoodGroup",
        "flavonoidname" => "FlavonoidName",
        "subclass" => "Subclass",
        "mean_mg_100g" => "Mean_mg_100g",
        "method" => "Method",
        "state" => "State",
        "diseaselabel" => "DiseaseLabel",
        "diseaseid" => "DiseaseId",
        "effect" => "Effect",
        "citation" => "Citation",
        "drugname" => "DrugName",
        "compositionoffoodcode" => "CompositionOfFoodCode",
        "trialid" => "TrialId",
        _ => "unknown",
    }
}

/// 1-based physical line of a byte offset; offsets must arrive in increasing order.
struct LineTracker<'a> {
    bytes: &'a [u8],
    offset: usize,
    line: u64,
}

impl<'a> LineTracker<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            bytes: text.as_bytes(),
            offset: 0,
            line: 1,
        }
    }

    fn line_at(&mut self, offset: usize) -> u64 {
        let mut end = offset.min(self.bytes.len());
        // CRLF input: the reported offset lands on the terminator's final \n
        // rather than on the first byte of the record itself.
        if self.bytes.get(end) == Some(&b'\n') {
            end += 1;
        }
        if end > self.offset {
            let newlines = self.bytes[self.offset..end]
                .iter()
                .filter(|&&b| b == b'\n')
                .count();
            self.line += newlines as u64;
            self.offset = end;
        }
        self.line
    }
}

struct Table {
    rows: Vec<Row>,
}

struct Row {
    fields: Vec<String>,
    line: u64,
    file: String,
    columns: Vec<String>,
}

impl Row {
    fn get(&self, i: usize) -> String {
        self.fields[i].clone()
    }

    fn require(&self, i: usize) -> Result<String, IngestError> {
        let v = &self.fields[i];
        if v.is_empty() {
            return Err(IngestError::EmptyCell {
                file: self.file.clone(),
                column: self.columns[i].clone(),
                line: self.line,
            });
        }
        Ok(v.clone())
    }

    fn provenance(&self) -> SourceProvenance {
        SourceProvenance {
            file_name: self.file.clone(),
            line_number: self.line,
        }
    }
}

pub fn parse_food_table(csv_text: &str, file_name: &str) -> Result<Vec<FoodRecord>, IngestError> {
    TableReader::new().foods(csv_text, file_name)
}

pub fn parse_flavonoid_table(
    csv_text: &str,
    file_name: &str,
) -> Result<Vec<ContentRecord>, IngestError> {
    TableReader::new().contents(csv_text, file_name)
}

pub fn parse_disease_associations(
    csv_text: &str,
    file_name: &str,
) -> Result<Vec<AssociationRecord>, IngestError> {
    TableReader::new().associations(csv_text, file_name)
}

pub fn parse_drug_table(csv_text: &str, file_name: &str) -> Result<Vec<DrugRecord>, IngestError> {
    TableReader::new().drugs(csv_text, file_name)
}

fn write_csv(headers: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(headers).expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Number formatting for means: shortest representation that round-trips.
fn format_mean(value: f64) -> String {
    let mut s = format!("{value}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

pub fn write_food_table(records: &[FoodRecord]) -> String {
    write_csv(
        &["FoodCode", "Description", "FoodGroup"],
        records
            .iter()
            .map(|r| vec![r.food_code.clone(), r.description.clone(), r.food_group.clone()])
            .collect(),
    )
}

pub fn write_flavonoid_table(records: &[ContentRecord]) -> String {
    write_csv(
        &["FoodCode", "FlavonoidName", "Subclass", "Mean_mg_100g", "Method", "State"],
        records
            .iter()
            .map(|r| {
                vec![
                    r.food_code.clone(),
                    r.flavonoid_name.clone(),
                    r.subclass.clone(),
                    format_mean(r.mean_mg_per_100g),
                    r.method.clone(),
                    r.state.clone(),
                ]
            })
            .collect(),
    )
}

pub fn write_disease_associations(records: &[AssociationRecord]) -> String {
    write_csv(
        &["FlavonoidName", "DiseaseLabel", "DiseaseId", "Effect", "Citation"],
        records
            .iter()
            .map(|r| {
                vec![
                    r.flavonoid_name.clone(),
                    r.disease_label.clone(),
                    r.external_disease_id.clone().unwrap_or_default(),
                    r.effect.clone(),
                    r.citation_key.clone(),
                ]
            })
            .collect(),
    )
}

pub fn write_drug_table(records: &[DrugRecord]) -> String {
    write_csv(
        &["DrugName", "CompositionOfFoodCode", "TrialId", "DiseaseLabel"],
        records
            .iter()
            .map(|r| {
                vec![
                    r.drug_name.clone(),
                    r.food_code.clone(),
                    r.trial_id.clone().unwrap_or_default(),
                    r.disease_label.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    )
}

//! Patient records, response encoding, CSV ingestion and contingency summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of clinical and environmental covariates per patient.
pub const NUM_COVARIATES: usize = 15;

/// The fifteen covariates, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Temperature,
    SickDays,
    Age,
    Rainfall,
    Sex,
    Headache,
    EyePain,
    MusclePain,
    JointPain,
    Cough,
    NauseaVomiting,
    Chills,
    Diarrhea,
    NasalCongestion,
    Jaundice,
}

impl Covariate {
    pub const ALL: [Covariate; NUM_COVARIATES] = [
        Covariate::Temperature,
        Covariate::SickDays,
        Covariate::Age,
        Covariate::Rainfall,
        Covariate::Sex,
        Covariate::Headache,
        Covariate::EyePain,
        Covariate::MusclePain,
        Covariate::JointPain,
        Covariate::Cough,
        Covariate::NauseaVomiting,
        Covariate::Chills,
        Covariate::Diarrhea,
        Covariate::NasalCongestion,
        Covariate::Jaundice,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Temperature => "temperature",
            Covariate::SickDays => "sick_days",
            Covariate::Age => "age",
            Covariate::Rainfall => "rainfall",
            Covariate::Sex => "sex",
            Covariate::Headache => "headache",
            Covariate::EyePain => "eye_pain",
            Covariate::MusclePain => "muscle_pain",
            Covariate::JointPain => "joint_pain",
            Covariate::Cough => "cough",
            Covariate::NauseaVomiting => "nausea_vomiting",
            Covariate::Chills => "chills",
            Covariate::Diarrhea => "diarrhea",
            Covariate::NasalCongestion => "nasal_congestion",
            Covariate::Jaundice => "jaundice",
        }
    }

    /// Sex and the ten symptom indicators are 0/1 valued.
    pub fn is_binary(self) -> bool {
        !matches!(
            self,
            Covariate::Temperature | Covariate::SickDays | Covariate::Age | Covariate::Rainfall
        )
    }

    pub fn from_name(name: &str) -> Option<Covariate> {
        Covariate::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Parses a comma-separated covariate list; `all` (or an empty string)
    /// selects every covariate.
    pub fn parse_list(list: &str) -> Result<Vec<Covariate>> {
        let list = list.trim();
        if list.is_empty() || list == "all" {
            return Ok(Covariate::ALL.to_vec());
        }
        let mut out = Vec::new();
        for name in list.split(',').map(str::trim) {
            let c = Covariate::from_name(name)
                .ok_or_else(|| Error::Input(format!("unknown covariate `{name}`")))?;
            if out.contains(&c) {
                return Err(Error::Input(format!("covariate `{name}` listed twice")));
            }
            out.push(c);
        }
        Ok(out)
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::from_name(s).ok_or_else(|| Error::Input(format!("unknown covariate `{s}`")))
    }
}

/// Covariate values of one patient, indexed by [`Covariate`].
///
/// The leading constant of the design vector is not stored; it is added when
/// a design matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector {
    values: [f64; NUM_COVARIATES],
}

impl CovariateVector {
    /// Validates the inclusion criteria (temperature ≥ 38, age ≥ 1),
    /// non-negativity of sick days and rainfall, and 0/1 binaries.
    pub fn new(values: [f64; NUM_COVARIATES]) -> Result<Self> {
        for c in Covariate::ALL {
            let v = values[c.index()];
            if !v.is_finite() {
                return Err(Error::Input(format!("{c} is not finite")));
            }
            if c.is_binary() && v != 0.0 && v != 1.0 {
                return Err(Error::Input(format!("{c} must be 0 or 1, got {v}")));
            }
        }
        let get = |c: Covariate| values[c.index()];
        if get(Covariate::Temperature) < 38.0 {
            return Err(Error::Input(format!(
                "temperature {} below the 38 °C inclusion threshold",
                get(Covariate::Temperature)
            )));
        }
        if get(Covariate::Age) < 1.0 {
            return Err(Error::Input(format!("age {} below 1 year", get(Covariate::Age))));
        }
        if get(Covariate::SickDays) < 0.0 || get(Covariate::Rainfall) < 0.0 {
            return Err(Error::Input("sick_days and rainfall must be non-negative".into()));
        }
        Ok(CovariateVector { values })
    }

    pub fn get(&self, c: Covariate) -> f64 {
        self.values[c.index()]
    }

    pub fn values(&self) -> &[f64; NUM_COVARIATES] {
        &self.values
    }

    pub fn age(&self) -> f64 {
        self.get(Covariate::Age)
    }

    pub fn sick_days(&self) -> f64 {
        self.get(Covariate::SickDays)
    }
}

/// Raw laboratory results of one patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionStatus {
    pub malaria: bool,
    pub igm: bool,
    pub igg: Option<bool>,
}

/// Case definition for an arboviral infection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseDefinition {
    /// Arboviral case iff IgM positive.
    #[serde(rename = "igm")]
    IgM,
    /// Arboviral case iff IgM or IgG positive; IgG must be observed.
    #[serde(rename = "igm_igg")]
    IgMIgG,
}

impl FromStr for CaseDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "igm" => Ok(CaseDefinition::IgM),
            "igm-igg" | "igm_igg" | "igmigg" | "igm/igg" => Ok(CaseDefinition::IgMIgG),
            other => Err(Error::Input(format!("unknown case definition `{other}`"))),
        }
    }
}

/// The four-level response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ResponseClass {
    /// Negative for malaria and for the tested arboviruses.
    Other = 0,
    ArboviralMono = 1,
    MalariaMono = 2,
    Coinfection = 3,
}

impl ResponseClass {
    pub const ALL: [ResponseClass; 4] = [
        ResponseClass::Other,
        ResponseClass::ArboviralMono,
        ResponseClass::MalariaMono,
        ResponseClass::Coinfection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(y: usize) -> Option<ResponseClass> {
        ResponseClass::ALL.get(y).copied()
    }

    pub fn from_flags(malaria: bool, arbo: bool) -> ResponseClass {
        match (malaria, arbo) {
            (false, false) => ResponseClass::Other,
            (false, true) => ResponseClass::ArboviralMono,
            (true, false) => ResponseClass::MalariaMono,
            (true, true) => ResponseClass::Coinfection,
        }
    }

    pub fn is_malaria(self) -> bool {
        matches!(self, ResponseClass::MalariaMono | ResponseClass::Coinfection)
    }

    pub fn is_arboviral(self) -> bool {
        matches!(self, ResponseClass::ArboviralMono | ResponseClass::Coinfection)
    }
}

/// Maps laboratory results to the response class under a case definition.
pub fn encode_response(status: &InfectionStatus, mode: CaseDefinition) -> Result<ResponseClass> {
    let arbo = match mode {
        CaseDefinition::IgM => status.igm,
        CaseDefinition::IgMIgG => match status.igg {
            Some(igg) => status.igm || igg,
            None => {
                return Err(Error::RejectedRecord(
                    "IgG status is required under the IgM/IgG case definition".into(),
                ))
            }
        },
    };
    Ok(ResponseClass::from_flags(status.malaria, arbo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub covariates: CovariateVector,
    pub status: InfectionStatus,
    pub class: ResponseClass,
}

/// Accounting of rows removed during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub rows_read: usize,
    pub kept: usize,
    pub dropped: usize,
    /// Rows with an unparseable value (non-numeric, binary not in {0,1}).
    pub parse_errors: usize,
    /// Rows violating a range constraint (temperature < 38, age < 1, ...).
    pub out_of_range: usize,
    /// Per-field count of empty values that caused a row to be dropped.
    pub missing: BTreeMap<String, usize>,
}

impl DropReport {
    pub fn missing(&self, field: &str) -> usize {
        self.missing.get(field).copied().unwrap_or(0)
    }
}

/// Immutable collection of encoded patient records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    mode: CaseDefinition,
    drop_report: DropReport,
}

impl Dataset {
    /// Builds a dataset, checking each record's class against its status.
    pub fn new(records: Vec<Record>, mode: CaseDefinition) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let expected = encode_response(&r.status, mode)
                .map_err(|e| Error::Input(format!("record {i}: {e}")))?;
            if expected != r.class {
                return Err(Error::Input(format!(
                    "record {i}: class {:?} inconsistent with status (expected {expected:?})",
                    r.class
                )));
            }
        }
        let drop_report = DropReport {
            rows_read: records.len(),
            kept: records.len(),
            ..DropReport::default()
        };
        Ok(Dataset {
            records,
            mode,
            drop_report,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mode(&self) -> CaseDefinition {
        self.mode
    }

    pub fn drop_report(&self) -> &DropReport {
        &self.drop_report
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.class as u8).collect()
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for r in &self.records {
            counts[r.class.index()] += 1;
        }
        counts
    }

    /// Records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records: Vec<Record> = indices.iter().map(|&i| self.records[i]).collect();
        Dataset {
            drop_report: DropReport {
                rows_read: records.len(),
                kept: records.len(),
                ..DropReport::default()
            },
            records,
            mode: self.mode,
        }
    }
}

/// Canonical CSV field names: covariates, then the laboratory results.
pub const STATUS_FIELDS: [&str; 3] = ["malaria", "igm", "igg"];

/// Maps canonical field names to the header names used in a CSV file.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    renames: BTreeMap<String, String>,
}

impl ColumnMap {
    /// Identity mapping: headers use the canonical names.
    pub fn canonical() -> Self {
        ColumnMap::default()
    }

    pub fn rename(mut self, field: &str, header: &str) -> Self {
        self.renames.insert(field.to_string(), header.to_string());
        self
    }

    fn header_for<'a>(&'a self, field: &'a str) -> &'a str {
        self.renames.get(field).map(String::as_str).unwrap_or(field)
    }
}

enum Cell<T> {
    Missing,
    Invalid,
    Value(T),
}

fn is_missing(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

fn parse_real(raw: &str) -> Cell<f64> {
    if is_missing(raw) {
        return Cell::Missing;
    }
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        _ => Cell::Invalid,
    }
}

fn parse_binary(raw: &str) -> Cell<bool> {
    if is_missing(raw) {
        return Cell::Missing;
    }
    match raw.trim() {
        "0" => Cell::Value(false),
        "1" => Cell::Value(true),
        _ => Cell::Invalid,
    }
}

/// Reads patient records from CSV, dropping incomplete or invalid rows.
///
/// Rows with a missing covariate, missing malaria or IgM status, or (under
/// [`CaseDefinition::IgMIgG`]) missing IgG are dropped and counted; nothing
/// is imputed. Surviving rows keep their file order.
pub fn ingest_csv<R: Read>(source: R, columns: &ColumnMap, mode: CaseDefinition) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let position = |field: &str| -> Result<usize> {
        let header = columns.header_for(field);
        headers
            .iter()
            .position(|h| h == header)
            .ok_or_else(|| Error::Schema(format!("missing required column `{header}`")))
    };
    let covariate_cols: Vec<usize> = Covariate::ALL
        .iter()
        .map(|c| position(c.name()))
        .collect::<Result<_>>()?;
    let malaria_col = position("malaria")?;
    let igm_col = position("igm")?;
    let igg_col = position("igg")?;

    let mut report = DropReport::default();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        report.rows_read += 1;
        let field = |col: usize| row.get(col).unwrap_or("");

        let mut missing: Vec<&'static str> = Vec::new();
        let mut invalid = false;
        let mut values = [0.0; NUM_COVARIATES];
        for (c, &col) in Covariate::ALL.iter().zip(&covariate_cols) {
            let cell = if c.is_binary() {
                match parse_binary(field(col)) {
                    Cell::Value(b) => Cell::Value(if b { 1.0 } else { 0.0 }),
                    Cell::Missing => Cell::Missing,
                    Cell::Invalid => Cell::Invalid,
                }
            } else {
                parse_real(field(col))
            };
            match cell {
                Cell::Value(v) => values[c.index()] = v,
                Cell::Missing => missing.push(c.name()),
                Cell::Invalid => invalid = true,
            }
        }
        let mut status_flag = |col: usize, name: &'static str, required: bool| match parse_binary(field(col)) {
            Cell::Value(b) => Some(b),
            Cell::Missing => {
                if required {
                    missing.push(name);
                }
                None
            }
            Cell::Invalid => {
                invalid = true;
                None
            }
        };
        let malaria = status_flag(malaria_col, "malaria", true);
        let igm = status_flag(igm_col, "igm", true);
        let igg = status_flag(igg_col, "igg", mode == CaseDefinition::IgMIgG);

        if invalid {
            report.parse_errors += 1;
            report.dropped += 1;
            continue;
        }
        if !missing.is_empty() {
            for name in missing {
                *report.missing.entry(name.to_string()).or_default() += 1;
            }
            report.dropped += 1;
            continue;
        }
        let covariates = match CovariateVector::new(values) {
            Ok(cv) => cv,
            Err(_) => {
                report.out_of_range += 1;
                report.dropped += 1;
                continue;
            }
        };
        let status = InfectionStatus {
            malaria: malaria.expect("checked above"),
            igm: igm.expect("checked above"),
            igg,
        };
        let class = encode_response(&status, mode)?;
        records.push(Record {
            covariates,
            status,
            class,
        });
    }
    report.kept = records.len();
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(Dataset {
        records,
        mode,
        drop_report: report,
    })
}

/// Header row of the canonical CSV layout.
pub fn csv_header() -> Vec<&'static str> {
    Covariate::ALL
        .iter()
        .map(|c| c.name())
        .chain(STATUS_FIELDS)
        .collect()
}

/// Writes records in the canonical layout accepted by [`ingest_csv`].
pub fn write_csv<W: Write>(data: &Dataset, sink: W) -> Result<()> {
    write_records_csv(data.records(), sink)
}

pub fn write_records_csv<W: Write>(records: &[Record], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(csv_header())?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in records {
        let mut row: Vec<String> = Covariate::ALL
            .iter()
            .map(|&c| {
                let v = r.covariates.get(c);
                if c.is_binary() {
                    bit(v == 1.0).to_string()
                } else {
                    v.to_string()
                }
            })
            .collect();
        row.push(bit(r.status.malaria).to_string());
        row.push(bit(r.status.igm).to_string());
        row.push(r.status.igg.map(|b| bit(b).to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Arbovirus × malaria 2×2 table with margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub cells: Cells,
    pub margins: Margins,
    pub total: u64,
    /// Cell shares of the total, in percent.
    pub percentages: CellPercentages,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cells {
    /// Coinfections (y = 3).
    pub arbo_pos_malaria_pos: u64,
    /// Arboviral monoinfections (y = 1).
    pub arbo_pos_malaria_neg: u64,
    /// Malaria monoinfections (y = 2).
    pub arbo_neg_malaria_pos: u64,
    /// Other febrile illnesses (y = 0).
    pub arbo_neg_malaria_neg: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    pub arbo_pos: u64,
    pub arbo_neg: u64,
    pub malaria_pos: u64,
    pub malaria_neg: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPercentages {
    pub arbo_pos_malaria_pos: f64,
    pub arbo_pos_malaria_neg: f64,
    pub arbo_neg_malaria_pos: f64,
    pub arbo_neg_malaria_neg: f64,
}

impl ContingencyTable {
    /// Builds the table from class counts ordered by `y = 0..3`. Margins are
    /// always computed from the cells.
    pub fn from_class_counts(counts: [u64; 4]) -> Self {
        let cells = Cells {
            arbo_pos_malaria_pos: counts[3],
            arbo_pos_malaria_neg: counts[1],
            arbo_neg_malaria_pos: counts[2],
            arbo_neg_malaria_neg: counts[0],
        };
        let margins = Margins {
            arbo_pos: counts[1] + counts[3],
            arbo_neg: counts[0] + counts[2],
            malaria_pos: counts[2] + counts[3],
            malaria_neg: counts[0] + counts[1],
        };
        let total: u64 = counts.iter().sum();
        let pct = |c: u64| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
        ContingencyTable {
            percentages: CellPercentages {
                arbo_pos_malaria_pos: pct(cells.arbo_pos_malaria_pos),
                arbo_pos_malaria_neg: pct(cells.arbo_pos_malaria_neg),
                arbo_neg_malaria_pos: pct(cells.arbo_neg_malaria_pos),
                arbo_neg_malaria_neg: pct(cells.arbo_neg_malaria_neg),
            },
            cells,
            margins,
            total,
        }
    }

    /// Lists every margin that disagrees with an externally reported table.
    pub fn reconcile(&self, reported: &Margins) -> Vec<String> {
        let pairs = [
            ("arbo_pos", self.margins.arbo_pos, reported.arbo_pos),
            ("arbo_neg", self.margins.arbo_neg, reported.arbo_neg),
            ("malaria_pos", self.margins.malaria_pos, reported.malaria_pos),
            ("malaria_neg", self.margins.malaria_neg, reported.malaria_neg),
        ];
        pairs
            .iter()
            .filter(|(_, computed, printed)| computed != printed)
            .map(|(name, computed, printed)| {
                format!("margin {name}: reported {printed} but cells sum to {computed}")
            })
            .collect()
    }
}

/// Contingency table of a dataset, with its drop accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: CaseDefinition,
    pub table: ContingencyTable,
    pub class_counts: [u64; 4],
    pub drop_report: DropReport,
    pub warnings: Vec<String>,
}

pub fn summarize(data: &Dataset) -> Result<Summary> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let counts = data.class_counts().map(|c| c as u64);
    Ok(Summary {
        mode: data.mode(),
        table: ContingencyTable::from_class_counts(counts),
        class_counts: counts,
        drop_report: data.drop_report().clone(),
        warnings: Vec::new(),
    })
}

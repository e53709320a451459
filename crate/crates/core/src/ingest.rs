//! Loading arousal/valence/dominance pseudo-labels from CSV or JSONL.
//!
//! Both encodings carry the same six fields:
//! `utt_id,speaker_id,emotion,arousal,valence,dominance`.
//! Records keep their input order. Emotion labels are free strings; only
//! `"neutral"` has a special meaning downstream.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The label whose records define the origin of the emotion space.
pub const NEUTRAL: &str = "neutral";

/// Accepted range for each coordinate in strict mode. The upstream
/// recognizer produces values of roughly 0 to 1; this leaves a margin.
pub const ENVELOPE: (f64, f64) = (-0.25, 1.25);

const CSV_HEADER: [&str; 6] = ["utt_id", "speaker_id", "emotion", "arousal", "valence", "dominance"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("input file not found: {0}")]
    MissingFile(String),
    #[error("could not read input: {0}")]
    Io(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate utt_id {0:?}")]
    DuplicateUttId(String),
    #[error("record {id:?}: {field} = {value} outside [{lo}, {hi}]", lo = ENVELOPE.0, hi = ENVELOPE.1)]
    RangeViolation { id: String, field: AvdField, value: f64 },
    #[error("dataset contains no records")]
    EmptyDataset,
}

impl IngestError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MissingFile(_) => "MissingFile",
            Self::Io(_) => "Io",
            Self::MalformedRow { .. } => "MalformedRow",
            Self::DuplicateUttId(_) => "DuplicateUttId",
            Self::RangeViolation { .. } => "RangeViolation",
            Self::EmptyDataset => "EmptyDataset",
        }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvdField {
    Arousal,
    Valence,
    Dominance,
}

impl fmt::Display for AvdField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Arousal => "arousal",
            Self::Valence => "valence",
            Self::Dominance => "dominance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from the file extension; anything other than `.jsonl`/`.json`
    /// is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("json") => {
                Self::Jsonl
            }
            _ => Self::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Reject any coordinate outside [`ENVELOPE`].
    #[default]
    Strict,
    /// Clamp out-of-envelope coordinates and count them.
    Lenient,
}

/// One utterance's pseudo-label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvdRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub emotion: String,
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

impl AvdRecord {
    /// Coordinates in (arousal, valence, dominance) order.
    pub fn avd(&self) -> [f64; 3] {
        [self.arousal, self.valence, self.dominance]
    }

    pub fn is_neutral(&self) -> bool {
        self.emotion == NEUTRAL
    }

    fn fields_mut(&mut self) -> [(AvdField, &mut f64); 3] {
        [
            (AvdField::Arousal, &mut self.arousal),
            (AvdField::Valence, &mut self.valence),
            (AvdField::Dominance, &mut self.dominance),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<AvdRecord>,
    pub emotions_present: BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset, checking utt_id uniqueness and finiteness.
    pub fn new(records: Vec<AvdRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if !seen.insert(rec.utt_id.as_str()) {
                return Err(IngestError::DuplicateUttId(rec.utt_id.clone()));
            }
        }
        let emotions_present = records.iter().map(|r| r.emotion.clone()).collect();
        Ok(Self { records, emotions_present })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn neutral_records(&self) -> impl Iterator<Item = &AvdRecord> {
        self.records.iter().filter(|r| r.is_neutral())
    }
}

/// What lenient mode changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    pub clamped_values: usize,
    pub clamped_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub report: IngestReport,
}

pub fn parse_records(path: &Path, format: Format, mode: Mode) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::MissingFile(path.display().to_string()),
        _ => IngestError::Io(format!("{}: {e}", path.display())),
    })?;
    parse_reader(file, format, mode)
}

pub fn parse_reader<R: Read>(reader: R, format: Format, mode: Mode) -> Result<Ingested> {
    let raw = match format {
        Format::Csv => read_csv(reader)?,
        Format::Jsonl => read_jsonl(reader)?,
    };
    finish(raw, mode)
}

pub fn parse_str(text: &str, format: Format, mode: Mode) -> Result<Ingested> {
    parse_reader(text.as_bytes(), format, mode)
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow { line, reason: reason.into() }
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<(u64, AvdRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        None => return Err(IngestError::EmptyDataset),
        Some(Err(e)) => return Err(csv_error(e)),
        Some(Ok(h)) => h,
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(malformed(1, format!("expected header {:?}", CSV_HEADER.join(","))));
    }

    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 6 {
            return Err(malformed(line, format!("expected 6 fields, found {}", row.len())));
        }
        let num = |idx: usize| -> Result<f64> {
            row[idx]
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("{}: not a number: {:?}", CSV_HEADER[idx], &row[idx])))
        };
        let rec = AvdRecord {
            utt_id: row[0].to_string(),
            speaker_id: row[1].to_string(),
            emotion: row[2].to_string(),
            arousal: num(3)?,
            valence: num(4)?,
            dominance: num(5)?,
        };
        out.push((line, rec));
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io.to_string()),
        _ => malformed(line, e.to_string()),
    }
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<(u64, AvdRecord)>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => malformed(lineno, "invalid UTF-8"),
            _ => IngestError::Io(e.to_string()),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AvdRecord =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        out.push((lineno, rec));
    }
    Ok(out)
}

fn finish(raw: Vec<(u64, AvdRecord)>, mode: Mode) -> Result<Ingested> {
    if raw.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let (lo, hi) = ENVELOPE;
    let mut report = IngestReport::default();
    let mut records = Vec::with_capacity(raw.len());
    for (line, mut rec) in raw {
        if rec.utt_id.is_empty() {
            return Err(malformed(line, "empty utt_id"));
        }
        let id = rec.utt_id.clone();
        let mut clamped_here = false;
        for (field, value) in rec.fields_mut() {
            if !value.is_finite() {
                return Err(malformed(line, format!("{field} is not finite")));
            }
            if *value < lo || *value > hi {
                match mode {
                    Mode::Strict => {
                        return Err(IngestError::RangeViolation { id, field, value: *value });
                    }
                    Mode::Lenient => {
                        *value = value.clamp(lo, hi);
                        report.clamped_values += 1;
                        clamped_here = true;
                    }
                }
            }
        }
        if clamped_here {
            report.clamped_records += 1;
        }
        records.push(rec);
    }
    Ok(Ingested { dataset: Dataset::new(records)?, report })
}

/// Writes a dataset in either encoding. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_records<W: Write>(dataset: &Dataset, format: Format, out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in &dataset.records {
                w.write_record([
                    r.utt_id.as_str(),
                    r.speaker_id.as_str(),
                    r.emotion.as_str(),
                    &r.arousal.to_string(),
                    &r.valence.to_string(),
                    &r.dominance.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for r in &dataset.records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    const HEADER: &str = "utt_id,speaker_id,emotion,arousal,valence,dominance\n";

    fn csv(body: &str) -> String {
        format!("{HEADER}{body}")
    }

    #[test]
    fn maps_csv_fields_directly() {
        let got = parse_str(&csv("u1,spk1,neutral,0.5,0.5,0.5\n"), Format::Csv, Mode::Strict).unwrap();
        assert_eq!(
            got.dataset.records,
            vec![AvdRecord {
                utt_id: "u1".into(),
                speaker_id: "spk1".into(),
                emotion: "neutral".into(),
                arousal: 0.5,
                valence: 0.5,
                dominance: 0.5,
            }]
        );
        assert!(got.dataset.emotions_present.contains("neutral"));
    }

    #[test]
    fn strict_mode_rejects_out_of_envelope() {
        let err = parse_str(&csv("u,s,angry,2.0,0.5,0.5\n"), Format::Csv, Mode::Strict).unwrap_err();
        assert_eq!(
            err,
            IngestError::RangeViolation { id: "u".into(), field: AvdField::Arousal, value: 2.0 }
        );
        // envelope edges are inclusive
        parse_str(&csv("u,s,angry,-0.25,1.25,0\n"), Format::Csv, Mode::Strict).unwrap();
    }

    #[test]
    fn lenient_mode_clamps_and_counts() {
        let got =
            parse_str(&csv("a,s,x,2.0,-1.0,0.5\nb,s,x,0.1,0.2,0.3\n"), Format::Csv, Mode::Lenient).unwrap();
        let r = &got.dataset.records[0];
        assert_eq!((r.arousal, r.valence, r.dominance), (1.25, -0.25, 0.5));
        assert_eq!(got.report, IngestReport { clamped_values: 2, clamped_records: 1 });
    }

    #[test]
    fn duplicate_id_in_generated_jsonl() {
        let mut rng = SplitMix64::new(3);
        let dup = rng.next_below(99) as usize + 1;
        let mut text = String::new();
        for i in 0..100 {
            let id = if i == dup { format!("utt{}", dup - 1) } else { format!("utt{i}") };
            let (a, v, d) = (rng.next_f64(), rng.next_f64(), rng.next_f64());
            text.push_str(&format!(
                r#"{{"utt_id":"{id}","speaker_id":"s","emotion":"happy","arousal":{a},"valence":{v},"dominance":{d}}}"#
            ));
            text.push('\n');
        }
        let err = parse_str(&text, Format::Jsonl, Mode::Strict).unwrap_err();
        assert_eq!(err, IngestError::DuplicateUttId(format!("utt{}", dup - 1)));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = parse_str(&csv("a,s,x,0.1,0.2,0.3\nb,s,x,0.1,zz,0.3\n"), Format::Csv, Mode::Strict)
            .unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 3, .. }), "{err:?}");

        let err = parse_str(&csv("a,s,x,0.1,0.2\n"), Format::Csv, Mode::Strict).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 2, .. }), "{err:?}");

        let err = parse_str("{\"utt_id\":1}\n", Format::Jsonl, Mode::Strict).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 1, .. }), "{err:?}");

        let err = parse_str("a,b\n", Format::Csv, Mode::Strict).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn non_finite_and_empty_inputs() {
        let err = parse_str(&csv("a,s,x,NaN,0.2,0.3\n"), Format::Csv, Mode::Lenient).unwrap_err();
        assert_eq!(err.name(), "MalformedRow");
        assert_eq!(parse_str(HEADER, Format::Csv, Mode::Strict).unwrap_err(), IngestError::EmptyDataset);
        assert_eq!(parse_str("", Format::Csv, Mode::Strict).unwrap_err(), IngestError::EmptyDataset);
        assert_eq!(parse_str("\n\n", Format::Jsonl, Mode::Strict).unwrap_err(), IngestError::EmptyDataset);
        let err = parse_str(&csv(",s,x,0.1,0.2,0.3\n"), Format::Csv, Mode::Strict).unwrap_err();
        assert_eq!(err.name(), "MalformedRow");
    }

    #[test]
    fn missing_file() {
        let err = parse_records(Path::new("/nonexistent/avd.csv"), Format::Csv, Mode::Strict).unwrap_err();
        assert_eq!(err.name(), "MissingFile");
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("x.jsonl")), Format::Jsonl);
        assert_eq!(Format::from_path(Path::new("x.csv")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("x")), Format::Csv);
    }
}

//! Readers and writers for the supported input formats.
//!
//! * `sentiment140`: six CSV columns `polarity,id,date,query,user,text`,
//!   polarity 0 (negative), 4 (positive) or 2 (unlabelled).
//! * `yelp`: two CSV columns `label,text`, label 1 (negative) or 2
//!   (positive).
//! * `plain`: one text per line, unlabelled.
//!
//! CSV follows RFC 4180 quoting and has no header row.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::types::Polarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Sentiment140,
    Yelp,
    Plain,
}

impl FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentiment140" => Ok(Format::Sentiment140),
            "yelp" => Ok(Format::Yelp),
            "plain" => Ok(Format::Plain),
            other => Err(ConfigError::Invalid(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Sentiment140 => "sentiment140",
            Format::Yelp => "yelp",
            Format::Plain => "plain",
        })
    }
}

/// One input row. `fields` keeps the original columns so a row can be
/// written back unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub label: Option<Polarity>,
    pub text: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: u64,
    pub reason: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

fn parse_fields(format: Format, fields: Vec<String>, row: u64) -> Result<Record, RowError> {
    let err = |reason: String| RowError { row, reason };
    let (label, text) = match format {
        Format::Sentiment140 => {
            if fields.len() != 6 {
                return Err(err(format!("expected 6 columns, found {}", fields.len())));
            }
            let label = match fields[0].trim() {
                "0" => Some(Polarity::Negative),
                "4" => Some(Polarity::Positive),
                "2" => None,
                other => return Err(err(format!("bad polarity {other:?}"))),
            };
            (label, fields[5].clone())
        }
        Format::Yelp => {
            if fields.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", fields.len())));
            }
            let label = match fields[0].trim() {
                "1" => Polarity::Negative,
                "2" => Polarity::Positive,
                other => return Err(err(format!("bad label {other:?}"))),
            };
            (Some(label), fields[1].clone())
        }
        Format::Plain => (None, fields.first().cloned().unwrap_or_default()),
    };
    if text.trim().is_empty() {
        return Err(err("empty text".into()));
    }
    let fields = match format {
        Format::Plain => vec![text.clone()],
        _ => fields,
    };
    Ok(Record { label, text, fields })
}

/// Streaming reader over any of the formats.
pub enum RecordReader<R: Read> {
    Csv {
        format: Format,
        inner: csv::Reader<R>,
        row: u64,
    },
    Lines {
        inner: io::Lines<BufReader<R>>,
        row: u64,
    },
}

impl<R: Read> RecordReader<R> {
    pub fn new(input: R, format: Format) -> Self {
        match format {
            Format::Plain => RecordReader::Lines {
                inner: BufReader::new(input).lines(),
                row: 0,
            },
            _ => RecordReader::Csv {
                format,
                inner: csv::ReaderBuilder::new()
                    .has_headers(false)
                    .flexible(true)
                    .from_reader(input),
                row: 0,
            },
        }
    }
}

impl RecordReader<File> {
    pub fn open(path: &Path, format: Format) -> io::Result<Self> {
        Ok(Self::new(File::open(path)?, format))
    }
}

/// Outer error is fatal I/O; inner error is a malformed row to skip.
pub type ReadItem = io::Result<Result<Record, RowError>>;

impl<R: Read> Iterator for RecordReader<R> {
    type Item = ReadItem;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            RecordReader::Lines { inner, row } => loop {
                let line = match inner.next()? {
                    Ok(l) => l,
                    Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                        *row += 1;
                        return Some(Ok(Err(RowError {
                            row: *row,
                            reason: "invalid UTF-8".into(),
                        })));
                    }
                    Err(e) => return Some(Err(e)),
                };
                *row += 1;
                if line.trim().is_empty() {
                    continue;
                }
                return Some(Ok(parse_fields(Format::Plain, vec![line], *row)));
            },
            RecordReader::Csv { format, inner, row } => {
                let mut rec = csv::StringRecord::new();
                *row += 1;
                match inner.read_record(&mut rec) {
                    Ok(false) => None,
                    Ok(true) => {
                        let fields = rec.iter().map(str::to_string).collect();
                        Some(Ok(parse_fields(*format, fields, *row)))
                    }
                    Err(e) => match e.into_kind() {
                        csv::ErrorKind::Io(io) => Some(Err(io)),
                        other => Some(Ok(Err(RowError {
                            row: *row,
                            reason: format!("{other:?}"),
                        }))),
                    },
                }
            }
        }
    }
}

/// Reads a whole file, dropping malformed rows. Returns the records and the
/// number of rows dropped.
pub fn read_all(path: &Path, format: Format) -> io::Result<(Vec<Record>, u64)> {
    let mut records = Vec::new();
    let mut malformed = 0;
    for item in RecordReader::open(path, format)? {
        match item? {
            Ok(r) => records.push(r),
            Err(_) => malformed += 1,
        }
    }
    Ok((records, malformed))
}

/// Writes records back in `format`, quoting every CSV field.
pub fn write_records<W: Write>(out: W, format: Format, records: &[Record]) -> io::Result<()> {
    match format {
        Format::Plain => {
            let mut out = io::BufWriter::new(out);
            for r in records {
                writeln!(out, "{}", r.text.replace(['\n', '\r'], " "))?;
            }
            out.flush()
        }
        _ => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .quote_style(csv::QuoteStyle::Always)
                .from_writer(out);
            for r in records {
                let fields = if r.fields.is_empty() {
                    synth_fields(format, r)
                } else {
                    r.fields.clone()
                };
                w.write_record(&fields).map_err(io::Error::other)?;
            }
            w.flush()
        }
    }
}

fn synth_fields(format: Format, r: &Record) -> Vec<String> {
    match format {
        Format::Sentiment140 => {
            let label = match r.label {
                Some(Polarity::Positive) => "4",
                Some(Polarity::Negative) => "0",
                None => "2",
            };
            vec![label.into(), String::new(), String::new(), "NO_QUERY".into(), String::new(), r.text.clone()]
        }
        Format::Yelp => {
            let label = match r.label {
                Some(Polarity::Negative) => "1",
                _ => "2",
            };
            vec![label.into(), r.text.clone()]
        }
        Format::Plain => vec![r.text.clone()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, format: Format) -> Vec<Result<Record, RowError>> {
        RecordReader::new(text.as_bytes(), format).map(|r| r.unwrap()).collect()
    }

    #[test]
    fn sentiment140_rows() {
        let rows = read(
            "\"0\",\"1467810369\",\"Mon Apr 06 22:19:45 PDT 2009\",\"NO_QUERY\",\"_TheSpecialOne_\",\"@switchfoot awww, that's a bummer\"\n\
             \"4\",\"2\",\"d\",\"NO_QUERY\",\"u\",\"love it, \"\"really\"\"\"\n\
             \"2\",\"3\",\"d\",\"q\",\"u\",\"meh\"\n\
             \"9\",\"3\",\"d\",\"q\",\"u\",\"bad label\"\n\
             \"0\",\"short\"\n",
            Format::Sentiment140,
        );
        assert_eq!(rows.len(), 5);
        let r0 = rows[0].as_ref().unwrap();
        assert_eq!(r0.label, Some(Polarity::Negative));
        assert_eq!(r0.text, "@switchfoot awww, that's a bummer");
        assert_eq!(rows[1].as_ref().unwrap().text, "love it, \"really\"");
        assert_eq!(rows[2].as_ref().unwrap().label, None);
        assert!(rows[3].is_err());
        assert!(rows[4].is_err());
    }

    #[test]
    fn yelp_rows() {
        let rows = read("\"1\",\"Awful service.\\nNever again\"\n\"2\",\"Great\"\n\"2\",\"\"\n", Format::Yelp);
        assert_eq!(rows[0].as_ref().unwrap().label, Some(Polarity::Negative));
        assert_eq!(rows[1].as_ref().unwrap().label, Some(Polarity::Positive));
        assert_eq!(rows[2].as_ref().unwrap_err().reason, "empty text");
    }

    #[test]
    fn plain_lines_skip_blanks() {
        let rows = read("first text\n\n  \nsecond\n", Format::Plain);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].as_ref().unwrap().text, "second");
    }

    #[test]
    fn write_then_read_preserves_rows() {
        let rows: Vec<Record> = read("\"2\",\"a, \"\"quoted\"\" text\"\n\"1\",\"b\"\n", Format::Yelp)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let mut buf = Vec::new();
        write_records(&mut buf, Format::Yelp, &rows).unwrap();
        let back: Vec<Record> = read(std::str::from_utf8(&buf).unwrap(), Format::Yelp)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(rows, back);
    }
}

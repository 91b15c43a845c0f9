//! CSV ingestion and export.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::{Dataset, IncompleteRecord};

/// Where the class label lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelColumn {
    #[default]
    Last,
    Named(String),
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub missing_markers: Vec<String>,
    pub label_column: LabelColumn,
    /// Columns dropped before parsing (e.g. record ids).
    pub ignore_columns: Vec<String>,
    /// Fixed `[negative, positive]` class names; otherwise the two most
    /// numerous classes are picked.
    pub classes: Option<[String; 2]>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            missing_markers: vec![String::new(), "NA".into(), "?".into()],
            label_column: LabelColumn::Last,
            ignore_columns: Vec::new(),
            classes: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// `[negative, positive]` class names, when labeled.
    pub classes: Option<[String; 2]>,
    /// Rows whose class was not one of the two kept.
    pub dropped_rows: usize,
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<LoadedData> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

/// Parses a headed CSV. The most numerous class maps to `-1`, the second to
/// `+1`; count ties break by first appearance. Rows of any other class are
/// dropped and counted.
pub fn read_csv(reader: impl Read, options: &CsvOptions) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(0, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(parse_error(0, 0, "missing header row".into()));
    }

    let label_idx = match &options.label_column {
        LabelColumn::Last => Some(headers.len() - 1),
        LabelColumn::Named(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_error(0, 0, format!("label column `{name}` not found")))?,
        ),
        LabelColumn::Unlabeled => None,
    };
    for name in &options.ignore_columns {
        if !headers.contains(name) {
            return Err(parse_error(0, 0, format!("ignored column `{name}` not found")));
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != label_idx && !options.ignore_columns.contains(&headers[c]))
        .collect();

    let mut rows: Vec<(Vec<Option<f64>>, Option<String>)> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| parse_error(row, 0, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(parse_error(
                row,
                rec.len(),
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &rec[c];
            if options.missing_markers.iter().any(|m| m == cell) {
                values.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row,
                    column: c,
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumericCell {
                        row,
                        column: c,
                        value: cell.to_string(),
                    });
                }
                values.push(Some(v));
            }
        }
        rows.push((values, label_idx.map(|c| rec[c].to_string())));
    }
    if rows.is_empty() {
        return Err(parse_error(0, 0, "no data rows".into()));
    }

    let classes = match label_idx {
        None => None,
        Some(_) => Some(match &options.classes {
            Some(c) => c.clone(),
            None => two_most_numerous(rows.iter().filter_map(|r| r.1.as_deref()))?,
        }),
    };

    let mut records = Vec::with_capacity(rows.len());
    let mut dropped_rows = 0;
    for (values, label) in rows {
        let label = match (&classes, label) {
            (Some([neg, pos]), Some(l)) => {
                if &l == neg {
                    Some(-1)
                } else if &l == pos {
                    Some(1)
                } else {
                    dropped_rows += 1;
                    continue;
                }
            }
            _ => None,
        };
        records.push(IncompleteRecord::from_options(&values, label));
    }
    if dropped_rows > 0 {
        log::info!("dropped {dropped_rows} rows outside the two kept classes");
    }
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let dataset = Dataset::new(records, feature_cols.len())?.with_feature_names(names);
    Ok(LoadedData {
        dataset,
        classes,
        dropped_rows,
    })
}

fn parse_error(row: usize, column: usize, message: String) -> Error {
    Error::Parse { row, column, message }
}

fn two_most_numerous<'a>(labels: impl Iterator<Item = &'a str>) -> Result<[String; 2]> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, l) in labels.enumerate() {
        let e = counts.entry(l).or_insert((0, pos));
        e.0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(l, (c, p))| (l, c, p)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    match ranked.as_slice() {
        [first, second, ..] => Ok([first.0.to_string(), second.0.to_string()]),
        _ => Err(Error::SingleClass),
    }
}

/// Writes a headed CSV with `NA` for missing cells and the class name (or
/// `±1`) as the last column.
pub fn write_csv(writer: impl Write, dataset: &Dataset, classes: Option<&[String; 2]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = dataset.dimension();
    let mut header: Vec<String> = match &dataset.feature_names {
        Some(names) => names.clone(),
        None => (0..n).map(|i| format!("x{}", i + 1)).collect(),
    };
    let labeled = dataset.records().iter().any(|r| r.label.is_some());
    if labeled {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut row: Vec<String> = (0..n)
            .map(|i| r.value(i).map_or_else(|| "NA".to_string(), |v| v.to_string()))
            .collect();
        if labeled {
            row.push(match (r.label, classes) {
                (Some(-1), Some(c)) => c[0].clone(),
                (Some(1), Some(c)) => c[1].clone(),
                (Some(l), _) => l.to_string(),
                (None, _) => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<LoadedData> {
        read_csv(s.as_bytes(), &CsvOptions::default())
    }

    #[test]
    fn parses_missing_markers() {
        let d = read("a,b,y\n1,NA,0\n2,3,1\n").unwrap();
        assert_eq!(d.dataset.len(), 2);
        assert_eq!(d.dataset.dimension(), 2);
        let r0 = &d.dataset.records()[0];
        assert_eq!(r0.value(0), Some(1.0));
        assert_eq!(r0.value(1), None);
        assert!(d.dataset.records()[1].is_complete());
        assert_eq!(d.dataset.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
    }

    #[test]
    fn keeps_two_most_numerous_classes() {
        let mut s = String::from("x,cls\n");
        for (c, n) in [("A", 10), ("B", 8), ("C", 1)] {
            for i in 0..n {
                s.push_str(&format!("{i},{c}\n"));
            }
        }
        let d = read(&s).unwrap();
        assert_eq!(d.dataset.len(), 18);
        assert_eq!(d.dropped_rows, 1);
        assert_eq!(d.classes, Some(["A".to_string(), "B".to_string()]));
        let labels = d.dataset.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == -1).count(), 10);
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(read(""), Err(Error::Parse { .. })));
        assert!(matches!(read("a,b\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn reports_non_numeric_cell() {
        match read("a,b,y\n1,2,0\n3,oops,1\n") {
            Err(Error::NonNumericCell { row, column, value }) => {
                assert_eq!((row, column, value.as_str()), (2, 1, "oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_parse_error() {
        let opts = CsvOptions::default();
        let err = read_csv("a,b,y\n1,2\n".as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err:?}");
    }

    #[test]
    fn named_label_and_ignored_columns() {
        let opts = CsvOptions {
            label_column: LabelColumn::Named("class".into()),
            ignore_columns: vec!["id".into()],
            ..CsvOptions::default()
        };
        let d = read_csv("id,class,f\n7,2,?\n8,4,1.5\n9,2,0.5\n".as_bytes(), &opts).unwrap();
        assert_eq!(d.dataset.dimension(), 1);
        assert_eq!(d.dataset.labels().unwrap(), vec![-1, 1, -1]);
        assert_eq!(d.dataset.records()[0].value(0), None);
    }

    #[test]
    fn write_then_read_preserves_mask() {
        let d = read("a,b,y\n1,NA,no\n2,3,yes\n4,5,no\n").unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &d.dataset, d.classes.as_ref()).unwrap();
        let opts = CsvOptions {
            classes: d.classes.clone(),
            ..CsvOptions::default()
        };
        let back = read_csv(buf.as_slice(), &opts).unwrap();
        assert_eq!(back.dataset.records(), d.dataset.records());
    }
}

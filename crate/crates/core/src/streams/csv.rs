//! Streams rows of a delimited text file as instances.

use std::fs::File;
use std::path::Path;

use super::{Instance, StreamError};

/// Row iterator over a CSV file.
///
/// Row numbers in [`StreamError::MalformedRow`] are 1-based data rows, so
/// the header is row 0 and data row `k` sits on line `k + 1`.
pub struct CsvStream {
    records: ::csv::StringRecordsIntoIter<File>,
    pending: Option<Result<::csv::StringRecord, ::csv::Error>>,
    feature_idx: Vec<usize>,
    feature_names: Vec<String>,
    target_idx: usize,
    target_name: String,
    scaler: Option<RunningScaler>,
    pub window_hint: Option<usize>,
    row: usize,
    done: bool,
}

#[derive(Debug, Clone)]
struct RunningScaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl RunningScaler {
    fn apply(&mut self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&mut self.min).zip(&mut self.max) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
            let span = *hi - *lo;
            *v = if span > 0.0 { (*v - *lo) / span } else { 0.0 };
        }
    }
}

pub fn csv_ingest(
    path: &Path,
    feature_columns: &[String],
    target_column: &str,
    delimiter: char,
    scale: bool,
    window_hint: Option<usize>,
) -> Result<CsvStream, StreamError> {
    let delimiter = u8::try_from(delimiter)
        .map_err(|_| StreamError::InvalidConfig(format!("delimiter `{delimiter}` is not ASCII")))?;
    let file = File::open(path).map_err(|e| StreamError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| StreamError::Io(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(StreamError::EmptyFile);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| StreamError::MissingColumn(name.to_string()))
    };
    let feature_idx = feature_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>, _>>()?;
    let target_idx = find(target_column)?;
    let mut records = reader.into_records();
    let pending = Some(records.next().ok_or(StreamError::EmptyFile)?);
    let scaler = scale.then(|| RunningScaler {
        min: vec![f64::INFINITY; feature_idx.len()],
        max: vec![f64::NEG_INFINITY; feature_idx.len()],
    });
    Ok(CsvStream {
        records,
        pending,
        feature_idx,
        feature_names: feature_columns.to_vec(),
        target_idx,
        target_name: target_column.to_string(),
        scaler,
        window_hint,
        row: 0,
        done: false,
    })
}

impl CsvStream {
    fn parse(&self, record: &::csv::StringRecord, idx: usize, name: &str) -> Result<f64, StreamError> {
        let raw = record.get(idx).unwrap_or("");
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(StreamError::MalformedRow {
                row: self.row,
                column: name.to_string(),
                value: raw.to_string(),
            }),
        }
    }
}

impl Iterator for CsvStream {
    type Item = Result<Instance, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let record = self.pending.take().or_else(|| self.records.next())?;
        self.row += 1;
        let result = record
            .map_err(|e| StreamError::MalformedRow {
                row: self.row,
                column: String::new(),
                value: e.to_string(),
            })
            .and_then(|rec| {
                let mut x = Vec::with_capacity(self.feature_idx.len());
                for (&i, name) in self.feature_idx.iter().zip(&self.feature_names) {
                    x.push(self.parse(&rec, i, name)?);
                }
                let y = self.parse(&rec, self.target_idx, &self.target_name)?;
                if let Some(s) = self.scaler.as_mut() {
                    s.apply(&mut x);
                }
                Ok(Instance::new(x, y, self.row - 1))
            });
        if result.is_err() {
            self.done = true;
        }
        Some(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_rows_in_order() {
        let f = file("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let rows: Vec<Instance> = csv_ingest(f.path(), &cols(&["a", "b"]), "y", ',', false, Some(90))
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].features, vec![7.0, 8.0]);
        assert_eq!(rows[2].target, 9.0);
        assert_eq!(rows[1].index, 1);
    }

    #[test]
    fn missing_target_column() {
        let f = file("a,b\n1,2\n");
        let err = csv_ingest(f.path(), &cols(&["a"]), "y", ',', false, None).err().unwrap();
        assert_eq!(err, StreamError::MissingColumn("y".into()));
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let f = file("a,y\n1,2\n3,oops\n5,6\n");
        let out: Vec<_> = csv_ingest(f.path(), &cols(&["a"]), "y", ',', false, None).unwrap().collect();
        assert!(out[0].is_ok());
        assert!(matches!(&out[1], Err(StreamError::MalformedRow { row: 2, column, .. }) if column == "y"));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_file() {
        let f = file("a,y\n");
        assert_eq!(
            csv_ingest(f.path(), &cols(&["a"]), "y", ',', false, None).err(),
            Some(StreamError::EmptyFile)
        );
        let f = file("");
        assert_eq!(
            csv_ingest(f.path(), &cols(&["a"]), "y", ',', false, None).err(),
            Some(StreamError::EmptyFile)
        );
    }

    #[test]
    fn semicolon_delimiter_and_scaling() {
        let f = file("a;y\n0;1\n10;1\n5;1\n");
        let rows: Vec<Instance> = csv_ingest(f.path(), &cols(&["a"]), "y", ';', true, None)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(rows[0].features, vec![0.0]);
        assert_eq!(rows[1].features, vec![1.0]);
        assert_eq!(rows[2].features, vec![0.5]);
    }
}

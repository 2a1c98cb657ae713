//! CSV ingestion: one header row, one response column, every other column a
//! numeric covariate.

use std::io::Read;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub covariate_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub response_name: String,
    pub response: Vec<f64>,
}

impl RawTable {
    pub fn n(&self) -> usize {
        self.response.len()
    }
}

/// Reads a table, splitting off `response` by header name. Data rows are
/// numbered from 1 in error messages.
pub fn read_csv<R: Read>(reader: R, response: &str) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_string()))?;
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut columns = vec![Vec::new(); covariate_names.len()];
    let mut y = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut cov = columns.iter_mut();
        for (k, field) in record.iter().enumerate() {
            let value: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Csv {
                row,
                message: format!("column {:?} holds non-numeric value {field:?}", headers[k]),
            })?;
            if k == y_col {
                y.push(value);
            } else {
                cov.next().expect("one slot per covariate").push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Csv {
            row: 0,
            message: "no data rows".into(),
        });
    }
    Ok(RawTable {
        covariate_names,
        columns,
        response_name: response.to_string(),
        response: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_response_from_covariates() {
        let text = "a,y,b\n0.1,0.5,-0.2\n0.3, -0.5 ,0.4\n";
        let t = read_csv(text.as_bytes(), "y").unwrap();
        assert_eq!(t.covariate_names, vec!["a", "b"]);
        assert_eq!(t.columns, vec![vec![0.1, 0.3], vec![-0.2, 0.4]]);
        assert_eq!(t.response, vec![0.5, -0.5]);
        assert_eq!(t.n(), 2);
    }

    #[test]
    fn missing_response() {
        let err = read_csv("a,b\n1,2\n".as_bytes(), "y").unwrap_err();
        assert_eq!(err, Error::MissingColumn("y".into()));
    }

    #[test]
    fn non_numeric_cell_names_row() {
        let err = read_csv("a,y\n1,2\n3,x\n".as_bytes(), "y").unwrap_err();
        assert!(matches!(err, Error::Csv { row: 2, .. }), "{err:?}");
        let err = read_csv("a,y\n1,2\nnan,1\n".as_bytes(), "y").unwrap_err();
        assert!(matches!(err, Error::Csv { row: 2, .. }));
    }

    #[test]
    fn ragged_and_empty_input() {
        assert!(matches!(
            read_csv("a,y\n1,2,3\n".as_bytes(), "y"),
            Err(Error::Csv { row: 1, .. })
        ));
        assert!(read_csv("a,y\n".as_bytes(), "y").is_err());
    }
}

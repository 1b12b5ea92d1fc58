//! CSV ingestion. The header names the columns `x1,...,xd,y,z` in that
//! order; `y` may be empty or `NA` only on rows with `z = 0`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

pub fn load_csv(path: &Path) -> Result<Dataset> {
    parse_csv(File::open(path)?)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::Csv {
                line,
                msg: format!("malformed csv: {kind:?}"),
            },
        }
    };

    let header = records
        .next()
        .ok_or(Error::Csv {
            line: 1,
            msg: "empty file".into(),
        })?
        .map_err(csv_err)?;
    let names: Vec<&str> = header.iter().collect();
    let d = names.len().saturating_sub(2);
    let expected: Vec<String> = (1..=d)
        .map(|k| format!("x{k}"))
        .chain(["y".to_string(), "z".to_string()])
        .collect();
    if d == 0 || names != expected {
        return Err(Error::Csv {
            line: 1,
            msg: format!("header must be x1,...,xd,y,z; got `{}`", names.join(",")),
        });
    }

    let mut ds = Dataset::new(d)?;
    let mut x = vec![0.0; d];
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != d + 2 {
            return Err(Error::Csv {
                line,
                msg: format!("expected {} fields, found {}", d + 2, rec.len()),
            });
        }
        for (k, v) in x.iter_mut().enumerate() {
            *v = rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    line,
                    msg: format!("non-numeric covariate x{} `{}`", k + 1, &rec[k]),
                })?;
        }
        let z = match &rec[d + 1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Csv {
                    line,
                    msg: format!("z must be 0 or 1, got `{other}`"),
                })
            }
        };
        let y_field = &rec[d];
        let y = if y_field.is_empty() || y_field == "NA" {
            if z {
                return Err(Error::Csv {
                    line,
                    msg: "observed row lacks response".into(),
                });
            }
            None
        } else {
            let v = y_field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    line,
                    msg: format!("non-numeric response `{y_field}`"),
                })?;
            // a response recorded on an unobserved row is not used
            z.then_some(v)
        };
        ds.push(&x, y)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_csv(s.as_bytes())
    }

    #[test]
    fn observed_and_missing_rows() {
        let ds = parse("x1,y,z\n0.5,2.0,1\n0.5,,0\n-1,NA,0\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.y(0), Some(2.0));
        assert_eq!(ds.y(1), None);
        assert_eq!(ds.x(2), &[-1.0]);
    }

    #[test]
    fn observed_row_without_response() {
        let e = parse("x1,y,z\n0.5,,1\n").unwrap_err();
        assert_eq!(e.to_string(), "observed row lacks response (line 2)");
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse("x1,y,z\n0.5,1,2\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(
            parse("x1,y,z\n1,1,1\nabc,1,1\n"),
            Err(Error::Csv { line: 3, .. })
        ));
        assert!(matches!(parse("x1,y,z\n1,1\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse("x2,y,z\n1,1,1\n"), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(parse(""), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn multivariate_header() {
        let ds = parse("x1,x2,y,z\n1,2,3,1\n").unwrap();
        assert_eq!(ds.dim(), 2);
    }
}

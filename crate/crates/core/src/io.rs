//! Plain-text input files: one row per line, whitespace-separated numbers,
//! `#` starts a comment. The first data row fixes the row length.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fss::{GeneratorVector, MultiIndex};

fn parse_rows<T: FromStr>(text: &str, source: &str) -> Result<Vec<Vec<T>>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let location = format!("{source}:{}", lineno + 1);
        let row = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<T>().map_err(|_| Error::Parse {
                    location: location.clone(),
                    message: format!("cannot parse `{tok}`"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    location,
                    message: format!("expected {} entries, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            location: source.to_string(),
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_generators(text: &str, source: &str) -> Result<Vec<GeneratorVector>> {
    parse_rows::<f64>(text, source)?
        .into_iter()
        .map(GeneratorVector::new)
        .collect()
}

pub fn read_generators(path: &Path) -> Result<Vec<GeneratorVector>> {
    parse_generators(&read_text(path)?, &path.display().to_string())
}

/// Multi-indices; negative entries are rejected.
pub fn parse_multi_indices(text: &str, source: &str) -> Result<Vec<MultiIndex>> {
    let rows = parse_rows::<i64>(text, source)?;
    rows.iter()
        .map(|r| crate::fss::multi_index_from_signed(r))
        .collect()
}

pub fn read_multi_indices(path: &Path) -> Result<Vec<MultiIndex>> {
    parse_multi_indices(&read_text(path)?, &path.display().to_string())
}

/// A square matrix, one row per line.
pub fn parse_square_matrix(text: &str, source: &str) -> Result<DMatrix<f64>> {
    let rows = parse_rows::<f64>(text, source)?;
    let n = rows.len();
    if rows[0].len() != n {
        return Err(Error::Parse {
            location: source.to_string(),
            message: format!("matrix has {n} rows but {} columns", rows[0].len()),
        });
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
}

pub fn read_square_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_square_matrix(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_with_comments() {
        let text = "# header\n1.0 0.5\n\n  0.25 0   # trailing\n";
        let g = parse_generators(text, "t").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].values(), &[0.25, 0.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse_generators("1 2\n1 2 3\n", "t").unwrap_err();
        assert!(err.to_string().contains("t:2"));
        assert!(parse_generators("# nothing\n", "t").is_err());
        assert!(parse_generators("1 x\n", "t").is_err());
    }

    #[test]
    fn multi_indices_must_be_non_negative() {
        assert_eq!(parse_multi_indices("2 0\n1 1\n", "t").unwrap(), vec![vec![2, 0], vec![1, 1]]);
        assert!(parse_multi_indices("2 -1\n", "t").is_err());
    }

    #[test]
    fn square_matrix() {
        let m = parse_square_matrix("1 2\n3 4\n", "t").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert!(parse_square_matrix("1 2\n", "t").is_err());
    }
}

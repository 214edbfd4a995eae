//! Dataset CSV files: a header of `g<j>_<k>` names (group `j`, coordinate
//! `k`, both 0-based), then one comma-separated row per observation.

use std::io::{Read, Write};
use std::path::Path;

use dpdhsic_core::{Block, Dataset};

use crate::error::{AppError, AppResult, ParseError};

fn parse_name(name: &str) -> Option<(usize, usize)> {
    let (j, k) = name.strip_prefix('g')?.split_once('_')?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(j) || !digits(k) {
        return None;
    }
    Some((j.parse().ok()?, k.parse().ok()?))
}

/// Group dimensions declared by a header. Columns must appear grouped and
/// in order: `g0_0, g0_1, g1_0, ...`.
pub fn parse_header<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Vec<usize>, ParseError> {
    let mut dims: Vec<usize> = Vec::new();
    for name in names {
        let name = name.trim();
        let (j, k) = parse_name(name)
            .ok_or_else(|| ParseError::new(1, format!("column `{name}` is not of the form g<j>_<k>")))?;
        let expected = match dims.last() {
            Some(&p) if j + 1 == dims.len() && k == p => Some(()),
            _ if j == dims.len() && k == 0 => None,
            _ => {
                return Err(ParseError::new(
                    1,
                    format!("column `{name}` is out of order; columns must run g0_0, g0_1, ..., g1_0, ..."),
                ))
            }
        };
        match expected {
            Some(()) => *dims.last_mut().expect("nonempty") += 1,
            None => dims.push(1),
        }
    }
    if dims.is_empty() {
        return Err(ParseError::new(1, "empty header"));
    }
    Ok(dims)
}

/// Parses a dataset from CSV text.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, ParseError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| ParseError::new(1, e.to_string()))?.clone();
    let dims = parse_header(header.iter())?;
    let width: usize = dims.iter().sum();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ParseError::new(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(ParseError::new(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .map(|f| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| ParseError::new(line, format!("`{f}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ParseError::new(line, format!("`{f}` is not finite")))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ParseError::new(1, "no observations"));
    }
    let mut groups = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &p in &dims {
        let block: Vec<Vec<f64>> = rows.iter().map(|r| r[offset..offset + p].to_vec()).collect();
        groups.push(Block::from_rows(&block).map_err(|e| ParseError::new(1, e.to_string()))?);
        offset += p;
    }
    Dataset::new(groups).map_err(|e| ParseError::new(1, e.to_string()))
}

pub fn read_dataset_file(path: &Path) -> AppResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file)).map_err(|e| AppError::parse(path, e))
}

/// Writes `dataset` as CSV. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<String> = dataset
        .dims()
        .iter()
        .enumerate()
        .flat_map(|(j, &p)| (0..p).map(move |k| format!("g{j}_{k}")))
        .collect();
    wtr.write_record(&header)?;
    for i in 0..dataset.n() {
        let fields: Vec<String> = dataset
            .groups()
            .iter()
            .flat_map(|b| b.row(i).iter().map(|v| v.to_string()))
            .collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_dataset_file(dataset: &Dataset, path: &Path) -> AppResult<()> {
    let file = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    write_dataset(dataset, std::io::BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        other => AppError::Usage(format!("{other:?}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_dims() {
        assert_eq!(parse_header(["g0_0", "g0_1", "g1_0"]).unwrap(), vec![2, 1]);
        assert!(parse_header(["g0_0", "g1_1"]).is_err());
        assert!(parse_header(["g1_0"]).is_err());
        assert!(parse_header(["x", "g0_0"]).is_err());
        assert!(parse_header(["g0_0", "g1_0", "g0_1"]).is_err());
    }

    #[test]
    fn round_trip() {
        let data = Dataset::new(vec![
            Block::from_rows(&[vec![0.1, -2.0], vec![1e-300, 3.5]]).unwrap(),
            Block::from_column(&[1.0 / 3.0, 7.0]).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("g0_0,g0_1,g1_0\n"));
        assert_eq!(read_dataset(text.as_bytes()).unwrap(), data);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = read_dataset("g0_0,g1_0\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 3);
        let err = read_dataset("g0_0,g1_0\n1,2\n3\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(read_dataset("g0_0,g1_0\n1,inf\n".as_bytes()).is_err());
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::schema::{FieldKind, Schema};
use crate::error::{Error, Result};

/// One parsed log line, before vocabulary encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub label: u8,
    /// One token per categorical field, in schema order. Missing values are `""`.
    pub tokens: Vec<String>,
    /// One value per numeric field, in schema order. Missing, unparsable and
    /// negative values are already zero.
    pub numerics: Vec<f64>,
    pub day: Option<i64>,
}

/// Opens `path`, transparently decompressing gzip input.
pub fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut reader = BufReader::new(file);
    let is_gzip = reader.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    Ok(if is_gzip {
        Box::new(MultiGzDecoder::new(reader))
    } else {
        Box::new(reader)
    })
}

pub fn read_rows(path: &Path, schema: &Schema) -> Result<Vec<RawRow>> {
    parse_rows(open(path)?, schema)
}

fn parse_numeric(raw: &str) -> f64 {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => v,
        _ => 0.0,
    }
}

pub fn parse_rows<R: Read>(input: R, schema: &Schema) -> Result<Vec<RawRow>> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .quoting(false)
        .from_reader(input);
    let need = schema.max_column() + 1;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if record.len() < need {
            return Err(Error::data(format!(
                "row {}: {} columns, schema needs {need}",
                line + 1,
                record.len()
            )));
        }
        let label = match record[schema.label].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::data(format!(
                    "row {}: label `{other}` is not 0 or 1",
                    line + 1
                )))
            }
        };
        let mut tokens = Vec::with_capacity(schema.num_categorical());
        let mut numerics = Vec::with_capacity(schema.num_numeric());
        for f in &schema.fields {
            let raw = &record[f.position];
            match f.kind {
                FieldKind::Categorical => tokens.push(raw.to_string()),
                FieldKind::Numeric => numerics.push(parse_numeric(raw)),
            }
        }
        let day = match schema.day {
            Some(d) => {
                let v: i64 = record[d.position].trim().parse().map_err(|_| {
                    Error::data(format!("row {}: day column is not an integer", line + 1))
                })?;
                Some(v / d.divisor.max(1))
            }
            None => None,
        };
        rows.push(RawRow {
            label,
            tokens,
            numerics,
            day,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_criteo_line_with_missing_values() {
        let mut line = String::from("1");
        for i in 0..13 {
            line.push('\t');
            if i == 2 {
                continue;
            }
            line.push_str(if i == 3 { "-1" } else { "5" });
        }
        for i in 0..26 {
            line.push('\t');
            if i != 7 {
                line.push_str(&format!("{i:08x}"));
            }
        }
        line.push('\n');
        let rows = parse_rows(line.as_bytes(), &Schema::criteo()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.label, 1);
        assert_eq!(r.numerics[2], 0.0);
        assert_eq!(r.numerics[3], 0.0);
        assert_eq!(r.numerics[0], 5.0);
        assert_eq!(r.tokens[7], "");
        assert_eq!(r.tokens[0], "00000000");
    }

    #[test]
    fn rejects_bad_label_and_short_rows() {
        let s = Schema::parse_layout("label:0;cat:1-2", b',').unwrap();
        assert!(parse_rows("2,a,b\n".as_bytes(), &s).is_err());
        assert!(parse_rows("1,a\n".as_bytes(), &s).is_err());
        assert_eq!(parse_rows("1,a,b\n0,,c\n".as_bytes(), &s).unwrap().len(), 2);
    }

    #[test]
    fn gzip_input_is_detected() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"1,a,b\n0,c,d\n").unwrap();
        enc.finish().unwrap();
        let s = Schema::parse_layout("label:0;cat:1-2", b',').unwrap();
        assert_eq!(read_rows(&path, &s).unwrap().len(), 2);
        assert!(matches!(
            read_rows(&dir.path().join("nope"), &s),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn avazu_day_from_hour() {
        let mut line = String::from("1000,0,14102203");
        for i in 0..21 {
            line.push_str(&format!(",v{i}"));
        }
        let rows = parse_rows(line.as_bytes(), &Schema::avazu()).unwrap();
        assert_eq!(rows[0].day, Some(141022));
        assert_eq!(rows[0].tokens[0], "14102203");
    }
}

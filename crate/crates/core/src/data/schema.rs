use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    /// Zero-based column index in the raw file.
    pub position: usize,
}

/// Column that carries a day (or coarser time) index for sequential splits.
/// The parsed integer is divided by `divisor`, so hourly stamps such as
/// `14102100` become days with a divisor of 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayColumn {
    pub position: usize,
    pub divisor: i64,
}

/// Layout of a delimited click log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub label: usize,
    pub fields: Vec<FieldSchema>,
    pub delimiter: u8,
    pub has_header: bool,
    pub day: Option<DayColumn>,
}

impl Schema {
    /// Label in column 0, 13 integer columns, then 26 hashed categorical columns.
    pub fn criteo() -> Self {
        let mut fields = Vec::with_capacity(39);
        for i in 0..13 {
            fields.push(FieldSchema {
                name: format!("I{}", i + 1),
                kind: FieldKind::Numeric,
                position: 1 + i,
            });
        }
        for i in 0..26 {
            fields.push(FieldSchema {
                name: format!("C{}", i + 1),
                kind: FieldKind::Categorical,
                position: 14 + i,
            });
        }
        Schema {
            label: 0,
            fields,
            delimiter: b'\t',
            has_header: false,
            day: None,
        }
    }

    /// `id, click, hour, ...` with 22 categorical feature columns (the hour
    /// included). The hour column doubles as the day source.
    pub fn avazu() -> Self {
        const NAMES: [&str; 22] = [
            "hour",
            "C1",
            "banner_pos",
            "site_id",
            "site_domain",
            "site_category",
            "app_id",
            "app_domain",
            "app_category",
            "device_id",
            "device_ip",
            "device_model",
            "device_type",
            "device_conn_type",
            "C14",
            "C15",
            "C16",
            "C17",
            "C18",
            "C19",
            "C20",
            "C21",
        ];
        let fields = NAMES
            .iter()
            .enumerate()
            .map(|(i, n)| FieldSchema {
                name: (*n).to_string(),
                kind: FieldKind::Categorical,
                position: 2 + i,
            })
            .collect();
        Schema {
            label: 1,
            fields,
            delimiter: b',',
            has_header: false,
            day: Some(DayColumn {
                position: 2,
                divisor: 100,
            }),
        }
    }

    /// Parses `label:<col>;num:<a>-<b>;cat:<a>-<b>` (ranges inclusive, either
    /// kind may repeat). Field names default to `I<n>` / `C<n>`.
    pub fn parse_layout(spec: &str, delimiter: u8) -> Result<Self> {
        let mut label = None;
        let mut fields = Vec::new();
        let (mut n_num, mut n_cat) = (0, 0);
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("schema segment `{part}` lacks `:`")))?;
            let range = |v: &str| -> Result<(usize, usize)> {
                let parse = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid(format!("bad column `{s}`")))
                };
                match v.split_once('-') {
                    Some((a, b)) => Ok((parse(a)?, parse(b)?)),
                    None => {
                        let c = parse(v)?;
                        Ok((c, c))
                    }
                }
            };
            match key.trim() {
                "label" => label = Some(range(val)?.0),
                kind @ ("num" | "cat") => {
                    let (a, b) = range(val)?;
                    if b < a {
                        return Err(Error::invalid(format!("empty column range {a}-{b}")));
                    }
                    for position in a..=b {
                        let (kind, name) = if kind == "num" {
                            n_num += 1;
                            (FieldKind::Numeric, format!("I{n_num}"))
                        } else {
                            n_cat += 1;
                            (FieldKind::Categorical, format!("C{n_cat}"))
                        };
                        fields.push(FieldSchema {
                            name,
                            kind,
                            position,
                        });
                    }
                }
                other => return Err(Error::invalid(format!("unknown schema key `{other}`"))),
            }
        }
        let schema = Schema {
            label: label.ok_or_else(|| Error::invalid("schema has no label column"))?,
            fields,
            delimiter,
            has_header: false,
            day: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::invalid("schema has no feature fields"));
        }
        let mut seen = HashSet::new();
        let mut names = HashSet::new();
        for f in &self.fields {
            if f.position == self.label {
                return Err(Error::invalid(format!(
                    "field `{}` sits on the label column {}",
                    f.name, self.label
                )));
            }
            if !seen.insert(f.position) {
                return Err(Error::invalid(format!("duplicate column {}", f.position)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::invalid(format!("duplicate field name `{}`", f.name)));
            }
        }
        let min = *seen.iter().min().expect("non-empty");
        let max = *seen.iter().max().expect("non-empty");
        if max - min + 1 != seen.len() {
            return Err(Error::invalid("feature columns are not contiguous"));
        }
        Ok(())
    }

    pub fn categorical(&self) -> impl Iterator<Item = &FieldSchema> {
        self.fields
            .iter()
            .filter(|f| f.kind == FieldKind::Categorical)
    }

    pub fn numeric(&self) -> impl Iterator<Item = &FieldSchema> {
        self.fields.iter().filter(|f| f.kind == FieldKind::Numeric)
    }

    pub fn num_categorical(&self) -> usize {
        self.categorical().count()
    }

    pub fn num_numeric(&self) -> usize {
        self.numeric().count()
    }

    /// Highest column index the schema reads.
    pub fn max_column(&self) -> usize {
        self.fields
            .iter()
            .map(|f| f.position)
            .chain(std::iter::once(self.label))
            .chain(self.day.map(|d| d.position))
            .max()
            .unwrap_or(0)
    }
}

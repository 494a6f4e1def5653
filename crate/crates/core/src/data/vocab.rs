use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::reader::RawRow;
use super::schema::Schema;
use crate::error::{Error, Result};

/// Index reserved in every field for rare and unseen tokens.
pub const UNK: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldVocabulary {
    pub name: String,
    index: HashMap<String, u32>,
    /// `tokens[i - 1]` is the token for index `i`.
    tokens: Vec<String>,
}

impl FieldVocabulary {
    /// Number of indices including UNK.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn encode(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// `None` for UNK and out-of-range indices.
    pub fn decode(&self, index: u32) -> Option<&str> {
        if index == UNK {
            return None;
        }
        self.tokens.get(index as usize - 1).map(String::as_str)
    }
}

/// Per-field counts of what was folded into UNK during a build.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollapseStats {
    /// Distinct training tokens below the threshold.
    pub rare_tokens: usize,
    /// Training occurrences of those tokens.
    pub rare_occurrences: usize,
}

/// Frozen token-to-index mapping for every categorical field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVocabulary {
    pub min_count: usize,
    fields: Vec<FieldVocabulary>,
}

impl FeatureVocabulary {
    /// Counts tokens over `rows` (training partition only) and keeps those
    /// seen at least `min_count` times. Kept tokens take indices `1..` in
    /// byte-wise sorted order.
    pub fn build(
        rows: &[RawRow],
        schema: &Schema,
        min_count: usize,
    ) -> Result<(Self, Vec<CollapseStats>)> {
        if rows.is_empty() {
            return Err(Error::data("cannot build a vocabulary from zero rows"));
        }
        let names: Vec<String> = schema.categorical().map(|f| f.name.clone()).collect();
        let mut counts: Vec<HashMap<&str, usize>> = vec![HashMap::new(); names.len()];
        for (r, row) in rows.iter().enumerate() {
            if row.tokens.len() != names.len() {
                return Err(Error::data(format!(
                    "row {r} has {} categorical values, schema has {}",
                    row.tokens.len(),
                    names.len()
                )));
            }
            for (c, tok) in counts.iter_mut().zip(&row.tokens) {
                *c.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut fields = Vec::with_capacity(names.len());
        let mut stats = Vec::with_capacity(names.len());
        for (name, count) in names.into_iter().zip(counts) {
            let mut kept: Vec<&str> = Vec::new();
            let mut st = CollapseStats::default();
            for (tok, n) in count {
                if n >= min_count {
                    kept.push(tok);
                } else {
                    st.rare_tokens += 1;
                    st.rare_occurrences += n;
                }
            }
            kept.sort_unstable();
            fields.push(FieldVocabulary::from_tokens(
                name,
                kept.into_iter().map(str::to_string).collect(),
            ));
            stats.push(st);
        }
        Ok((FeatureVocabulary { min_count, fields }, stats))
    }

    pub fn fields(&self) -> &[FieldVocabulary] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &FieldVocabulary {
        &self.fields[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.fields.iter().map(FieldVocabulary::size).collect()
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Result<Vec<u32>> {
        if tokens.len() != self.fields.len() {
            return Err(Error::data(format!(
                "{} tokens for {} fields",
                tokens.len(),
                self.fields.len()
            )));
        }
        Ok(self
            .fields
            .iter()
            .zip(tokens)
            .map(|(f, t)| f.encode(t))
            .collect())
    }

    /// Canonical text: header lines, then `field<TAB>token<TAB>index` rows
    /// sorted by field order and index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# ctrkd-vocab 1\n");
        let _ = writeln!(out, "# min_count\t{}", self.min_count);
        for f in &self.fields {
            let _ = writeln!(out, "# field\t{}", escape(&f.name));
        }
        for f in &self.fields {
            let name = escape(&f.name);
            for (i, tok) in f.tokens.iter().enumerate() {
                let _ = writeln!(out, "{name}\t{}\t{}", escape(tok), i + 1);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |n: usize, what: &str| Error::data(format!("vocabulary line {}: {what}", n + 1));
        match lines.next() {
            Some((_, "# ctrkd-vocab 1")) => {}
            _ => return Err(bad(0, "missing version header")),
        }
        let mut min_count = None;
        let mut names: Vec<String> = Vec::new();
        let mut tokens: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (n, line) in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                match rest.split_once('\t') {
                    Some(("min_count", v)) => {
                        min_count = Some(v.parse().map_err(|_| bad(n, "bad min_count"))?)
                    }
                    Some(("field", v)) => names.push(unescape(v)),
                    _ => return Err(bad(n, "unknown header")),
                }
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(field), Some(tok), Some(idx), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(n, "expected three tab-separated columns"));
            };
            let field = unescape(field);
            let fi = names
                .iter()
                .position(|f| *f == field)
                .ok_or_else(|| bad(n, "unknown field"))?;
            let idx: usize = idx.parse().map_err(|_| bad(n, "bad index"))?;
            let list = tokens.entry(fi).or_default();
            if idx != list.len() + 1 {
                return Err(bad(n, "indices are not dense and sorted"));
            }
            list.push(unescape(tok));
        }
        let fields = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                FieldVocabulary::from_tokens(name, tokens.remove(&i).unwrap_or_default())
            })
            .collect();
        Ok(FeatureVocabulary {
            min_count: min_count.ok_or_else(|| Error::data("vocabulary lacks min_count"))?,
            fields,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }

    /// First eight bytes (little-endian) of the SHA-256 of [`Self::to_text`].
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl FieldVocabulary {
    fn from_tokens(name: String, tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        FieldVocabulary {
            name,
            index,
            tokens,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

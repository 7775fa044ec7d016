use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user_raw: String,
    pub item_raw: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    Comma,
}

impl Delimiter {
    pub fn as_char(self) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
        }
    }
}

/// Zero-based column positions of a delimiter-separated interaction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub delimiter: Delimiter,
    pub user: usize,
    pub item: usize,
    pub rating: Option<usize>,
    pub timestamp: Option<usize>,
    pub skip_header: bool,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Tab,
            user: 0,
            item: 1,
            rating: Some(2),
            timestamp: None,
            skip_header: false,
        }
    }
}

/// Parses one record per non-empty line, preserving order. Line numbers in
/// errors are 1-based and count the header line.
pub fn parse_records(text: &str, spec: &ColumnSpec) -> Result<Vec<RatingRecord>> {
    let delim = spec.delimiter.as_char();
    let mut out = Vec::new();
    let mut header_pending = spec.skip_header;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = line.split(delim).collect();
        let field = |col: usize, name: &str| -> Result<&str> {
            fields.get(col).map(|f| f.trim()).ok_or_else(|| Error::Parse {
                line: line_no,
                reason: format!("missing {name} column {col} ({} fields)", fields.len()),
            })
        };
        let user_raw = field(spec.user, "user")?;
        let item_raw = field(spec.item, "item")?;
        if user_raw.is_empty() || item_raw.is_empty() {
            return Err(Error::Parse { line: line_no, reason: "empty user or item id".to_string() });
        }
        let rating = match spec.rating {
            Some(col) => {
                let s = field(col, "rating")?;
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("rating `{s}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: format!("rating `{s}` is not finite"),
                    });
                }
                Some(v)
            }
            None => None,
        };
        let timestamp = match spec.timestamp {
            Some(col) => {
                let s = field(col, "timestamp")?;
                Some(s.parse::<i64>().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("timestamp `{s}` is not an integer"),
                })?)
            }
            None => None,
        };
        out.push(RatingRecord {
            user_raw: user_raw.to_string(),
            item_raw: item_raw.to_string(),
            rating,
            timestamp,
        });
    }
    if out.is_empty() {
        return Err(Error::Empty);
    }
    Ok(out)
}

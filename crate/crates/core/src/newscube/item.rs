use std::io::{BufRead, Read};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CubeError;

/// A record as read from disk, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub media_code: String,
    pub published_at: DateTime<Utc>,
    pub countries: Vec<String>,
}

/// One dated story from one outlet with its deduplicated, non-empty set of
/// mentioned countries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NewsItem {
    media_code: String,
    published_at: DateTime<Utc>,
    countries: Vec<String>,
}

impl NewsItem {
    /// Country codes are upper-cased, sorted and deduplicated.
    pub fn new(
        media_code: impl Into<String>,
        published_at: DateTime<Utc>,
        countries: impl IntoIterator<Item = impl AsRef<str>>,
    ) -> Result<Self, CubeError> {
        let mut countries: Vec<String> = countries
            .into_iter()
            .map(|c| c.as_ref().trim().to_ascii_uppercase())
            .filter(|c| !c.is_empty())
            .collect();
        countries.sort();
        countries.dedup();
        if countries.is_empty() {
            return Err(CubeError::EmptyCountrySet);
        }
        Ok(Self {
            media_code: media_code.into(),
            published_at,
            countries,
        })
    }

    pub fn media_code(&self) -> &str {
        &self.media_code
    }

    pub fn published_at(&self) -> &DateTime<Utc> {
        &self.published_at
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }
}

impl TryFrom<RawItem> for NewsItem {
    type Error = CubeError;

    fn try_from(raw: RawItem) -> Result<Self, Self::Error> {
        NewsItem::new(raw.media_code, raw.published_at, raw.countries)
    }
}

/// Splits one story equally between the countries it mentions.
pub fn allocate_item(item: &NewsItem) -> Vec<(String, f64)> {
    let share = 1.0 / item.countries.len() as f64;
    item.countries.iter().map(|c| (c.clone(), share)).collect()
}

/// Parses ISO-8601 timestamps. Values without an offset are taken as UTC and
/// a bare date is midnight UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
}

#[derive(Deserialize)]
struct JsonRecord {
    media_code: String,
    published_at: String,
    #[serde(default)]
    countries: Vec<String>,
}

/// Reads newline-delimited JSON records. Blank lines are skipped.
pub fn read_items_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawItem>, CubeError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| CubeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let published_at = parse_timestamp(&rec.published_at).ok_or_else(|| CubeError::Parse {
            line: i + 1,
            message: format!("bad timestamp `{}`", rec.published_at),
        })?;
        items.push(RawItem {
            media_code: rec.media_code,
            published_at,
            countries: rec.countries,
        });
    }
    Ok(items)
}

/// Reads CSV records with a `media_code,published_at,countries` header where
/// countries are separated by semicolons.
pub fn read_items_csv<R: Read>(reader: R) -> Result<Vec<RawItem>, CubeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CubeError::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (media_col, date_col, country_col) = (col("media_code")?, col("published_at")?, col("countries")?);
    let mut items = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let published_at = parse_timestamp(field(date_col)).ok_or_else(|| CubeError::Parse {
            line,
            message: format!("bad timestamp `{}`", field(date_col)),
        })?;
        let countries = field(country_col)
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        items.push(RawItem {
            media_code: field(media_col).to_string(),
            published_at,
            countries,
        });
    }
    Ok(items)
}

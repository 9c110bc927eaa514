//! Rating import: the `category,sector,gender,style,module` CSV and the JSON
//! shape accepted over HTTP.

use pmchat_core::evaluation::{Category, RatingRecord};
use pmchat_core::prompt::PromptStyle;
use pmchat_core::Module;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};

pub const CSV_COLUMNS: [&str; 5] = ["category", "sector", "gender", "style", "module"];

/// One rating as supplied by a client, before validation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingInput {
    pub category: String,
    pub sector: String,
    #[serde(default)]
    pub gender: Option<String>,
    pub style: String,
    pub module: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub expert_experience_years: Option<f64>,
}

impl RatingInput {
    pub fn into_record(self) -> std::result::Result<RatingRecord, String> {
        let category: Category = self.category.parse().map_err(|e: pmchat_core::evaluation::InvalidCategory| e.to_string())?;
        let prompt_style: PromptStyle = self.style.parse()?;
        let module: Module = self.module.parse().map_err(|e: pmchat_core::kpi::UnknownModule| e.to_string())?;
        let sector = self.sector.trim().to_string();
        if sector.is_empty() {
            return Err("sector is empty".into());
        }
        if self.expert_experience_years.is_some_and(|y| !(y >= 0.0 && y.is_finite())) {
            return Err("expert_experience_years must be a non-negative number".into());
        }
        Ok(RatingRecord {
            rating_id: String::new(),
            subject: self.subject.filter(|s| !s.trim().is_empty()).unwrap_or_else(|| "import".into()),
            module,
            prompt_style,
            category,
            sector,
            expert_gender: self.gender.map(|g| g.trim().to_string()).filter(|g| !g.is_empty()),
            expert_experience_years: self.expert_experience_years,
        })
    }
}

/// Parses a ratings CSV. Returns every valid record and every rejected row;
/// callers decide whether a partial file is acceptable.
pub fn parse_ratings_csv(raw: &[u8]) -> Result<(Vec<RatingRecord>, Vec<RowError>)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(raw);
    let headers = reader.headers().map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?.clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("ratings CSV needs the columns {}; {name:?} is missing", CSV_COLUMNS.join(","))))?;
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("malformed CSV: {e}")))?;
        let line = row.position().map_or(n as u64 + 2, |p| p.line());
        let cell = |i: usize| row.get(index[i]).unwrap_or("").trim().to_string();
        let input = RatingInput {
            category: cell(0),
            sector: cell(1),
            gender: Some(cell(2)),
            style: cell(3),
            module: cell(4),
            ..Default::default()
        };
        match input.into_record() {
            Ok(r) => records.push(r),
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    Ok((records, errors))
}

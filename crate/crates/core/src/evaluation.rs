//! Expert rating bookkeeping: category distributions per group and the
//! zero-shot versus optimized comparison.
//!
//! Percentages are `round_half_up(100 * count / total)` in exact integer
//! arithmetic; raw counts are always reported next to them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kpi::Module;
use crate::prompt::PromptStyle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Good,
    Mediocre,
    Bad,
    #[serde(rename = "NA")]
    NotAvailable,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Good, Category::Mediocre, Category::Bad, Category::NotAvailable];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Good => "Good",
            Category::Mediocre => "Mediocre",
            Category::Bad => "Bad",
            Category::NotAvailable => "NA",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidCategory(pub String);

impl fmt::Display for InvalidCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid category {:?} (expected Good, Mediocre, Bad or NA)", self.0)
    }
}

impl core::error::Error for InvalidCategory {}

impl FromStr for Category {
    type Err = InvalidCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Ok(Category::Good),
            "mediocre" => Ok(Category::Mediocre),
            "bad" => Ok(Category::Bad),
            "na" | "n.a." | "n/a" => Ok(Category::NotAvailable),
            _ => Err(InvalidCategory(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rating_id: String,
    /// Session id, or a fixture tag for imported ratings.
    pub subject: String,
    pub module: Module,
    pub prompt_style: PromptStyle,
    pub category: Category,
    pub sector: String,
    pub expert_gender: Option<String>,
    pub expert_experience_years: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Overall,
    Sector,
    Gender,
    Style,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "overall" => Ok(GroupBy::Overall),
            "sector" => Ok(GroupBy::Sector),
            "gender" => Ok(GroupBy::Gender),
            "style" => Ok(GroupBy::Style),
            other => Err(format!("unknown grouping {other:?} (expected overall, sector, gender or style)")),
        }
    }
}

pub const UNSPECIFIED_GENDER: &str = "unspecified";

impl GroupBy {
    fn label(self, record: &RatingRecord) -> String {
        match self {
            GroupBy::Overall => "overall".into(),
            GroupBy::Sector => record.sector.clone(),
            GroupBy::Gender => record.expert_gender.clone().unwrap_or_else(|| UNSPECIFIED_GENDER.into()),
            GroupBy::Style => record.prompt_style.as_str().into(),
        }
    }
}

/// Equality predicates; `None` matches everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingFilter {
    pub sector: Option<String>,
    pub gender: Option<String>,
    pub style: Option<PromptStyle>,
    pub module: Option<Module>,
}

impl RatingFilter {
    pub fn matches(&self, r: &RatingRecord) -> bool {
        self.sector.as_ref().is_none_or(|s| *s == r.sector)
            && self.gender.as_ref().is_none_or(|g| r.expert_gender.as_ref() == Some(g))
            && self.style.is_none_or(|s| s == r.prompt_style)
            && self.module.is_none_or(|m| m == r.module)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub good: u64,
    pub mediocre: u64,
    pub bad: u64,
    pub na: u64,
}

impl CategoryCounts {
    pub fn add(&mut self, category: Category) {
        *self.slot(category) += 1;
    }

    fn slot(&mut self, category: Category) -> &mut u64 {
        match category {
            Category::Good => &mut self.good,
            Category::Mediocre => &mut self.mediocre,
            Category::Bad => &mut self.bad,
            Category::NotAvailable => &mut self.na,
        }
    }

    pub fn total(&self) -> u64 {
        self.good + self.mediocre + self.bad + self.na
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPercentages {
    pub good: u32,
    pub mediocre: u32,
    pub bad: u32,
    pub na: u32,
}

/// `floor(100 * count / total + 1/2)` without floating point.
pub fn round_half_up_percent(count: u64, total: u64) -> u32 {
    assert!(total > 0, "percentage of an empty group");
    ((200 * count as u128 + total as u128) / (2 * total as u128)) as u32
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub label: String,
    pub total: u64,
    pub counts: CategoryCounts,
    pub percentages: CategoryPercentages,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub group_by: GroupBy,
    /// Sorted by label.
    pub groups: Vec<GroupDistribution>,
}

impl DistributionReport {
    pub fn group(&self, label: &str) -> Option<&GroupDistribution> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Aligned-column text table.
    pub fn to_text(&self) -> String {
        let width = self.groups.iter().map(|g| g.label.chars().count()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$}  {:>6}  {:>10}  {:>10}  {:>10}  {:>10}\n",
            "group", "total", "Good", "Mediocre", "Bad", "NA"
        );
        for g in &self.groups {
            let cell = |n: u64, p: u32| format!("{p}% ({n})");
            out.push_str(&format!(
                "{:<width$}  {:>6}  {:>10}  {:>10}  {:>10}  {:>10}\n",
                g.label,
                g.total,
                cell(g.counts.good, g.percentages.good),
                cell(g.counts.mediocre, g.percentages.mediocre),
                cell(g.counts.bad, g.percentages.bad),
                cell(g.counts.na, g.percentages.na),
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoMatchingRatings;

impl fmt::Display for NoMatchingRatings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no ratings match the filter")
    }
}

impl core::error::Error for NoMatchingRatings {}

pub fn distribution<'a>(
    records: impl IntoIterator<Item = &'a RatingRecord>,
    filter: &RatingFilter,
    group_by: GroupBy,
) -> Result<DistributionReport, NoMatchingRatings> {
    let mut groups: BTreeMap<String, CategoryCounts> = BTreeMap::new();
    for record in records.into_iter().filter(|r| filter.matches(r)) {
        groups.entry(group_by.label(record)).or_default().add(record.category);
    }
    if groups.is_empty() {
        return Err(NoMatchingRatings);
    }
    let groups = groups
        .into_iter()
        .map(|(label, counts)| {
            let total = counts.total();
            let pct = |n| round_half_up_percent(n, total);
            GroupDistribution {
                label,
                total,
                counts,
                percentages: CategoryPercentages {
                    good: pct(counts.good),
                    mediocre: pct(counts.mediocre),
                    bad: pct(counts.bad),
                    na: pct(counts.na),
                },
            }
        })
        .collect();
    Ok(DistributionReport { group_by, groups })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleComparison {
    pub zero_shot: Option<DistributionReport>,
    pub optimized: Option<DistributionReport>,
    /// Optimized Good% minus zero-shot Good%, in points; absent if a side is empty.
    pub good_delta: Option<i64>,
}

pub fn compare_styles<'a>(records: impl IntoIterator<Item = &'a RatingRecord> + Clone) -> StyleComparison {
    let side = |style| {
        distribution(
            records.clone(),
            &RatingFilter { style: Some(style), ..Default::default() },
            GroupBy::Overall,
        )
        .ok()
    };
    let zero_shot = side(PromptStyle::ZeroShot);
    let optimized = side(PromptStyle::Optimized);
    let good = |r: &DistributionReport| r.groups[0].percentages.good as i64;
    let good_delta = match (&zero_shot, &optimized) {
        (Some(z), Some(o)) => Some(good(o) - good(z)),
        _ => None,
    };
    StyleComparison { zero_shot, optimized, good_delta }
}

//! Reported evaluation results of 15 + 15 trained controllers, embedded as CSV.
//!
//! These anchor the statistics module without any training run. Files live in
//! `crates/core/fixtures/` and carry their own provenance comments.

use crate::agents::Architecture;
use crate::error::{Error, Result};

pub const SEED_MEANS_CSV: &str = include_str!("../fixtures/seed_means.csv");
pub const TOP_TEN_CSV: &str = include_str!("../fixtures/top_ten.csv");
pub const GENERALIZATION_CSV: &str = include_str!("../fixtures/generalization.csv");
pub const REPORTED_STATISTICS_CSV: &str = include_str!("../fixtures/reported_statistics.csv");

/// Provenance string attached to statistics computed from these fixtures.
pub const PROVENANCE: &str = "fixtures/seed_means.csv v1: reported per-controller means, 100 evaluation episodes each, flat terrain";

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub architecture: Architecture,
    pub seed: u32,
    pub mean: f64,
    pub sd: f64,
    pub overall_rank: usize,
}

impl SeedResult {
    pub fn label(&self) -> String {
        format!("{} seed {}", self.architecture.display_name(), self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopEntry {
    pub rank: usize,
    pub architecture: Architecture,
    pub seed: u32,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizationCell {
    /// `None` for flat terrain, otherwise the height-map maximum in metres.
    pub eval_max_height: Option<f64>,
    pub architecture: Architecture,
    pub trained_on_uneven: bool,
    pub mean: f64,
    pub sd: f64,
}

fn rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::trim).collect())
}

fn num<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::domain(format!("fixture field {what}: cannot parse {field:?}")))
}

fn arch(field: &str) -> Result<Architecture> {
    field.parse()
}

pub fn seed_results() -> Result<Vec<SeedResult>> {
    rows(SEED_MEANS_CSV)
        .map(|r| {
            Ok(SeedResult {
                architecture: arch(r[0])?,
                seed: num(r[1], "seed")?,
                mean: num(r[2], "mean")?,
                sd: num(r[3], "sd")?,
                overall_rank: num(r[4], "overall_rank")?,
            })
        })
        .collect()
}

/// Seed means of one architecture, in seed order.
pub fn seed_means(architecture: Architecture) -> Result<Vec<f64>> {
    let mut rows: Vec<SeedResult> = seed_results()?.into_iter().filter(|r| r.architecture == architecture).collect();
    rows.sort_by_key(|r| r.seed);
    Ok(rows.into_iter().map(|r| r.mean).collect())
}

pub fn top_ten() -> Result<Vec<TopEntry>> {
    rows(TOP_TEN_CSV)
        .map(|r| {
            Ok(TopEntry {
                rank: num(r[0], "rank")?,
                architecture: arch(r[1])?,
                seed: num(r[2], "seed")?,
                mean: num(r[3], "mean")?,
                sd: num(r[4], "sd")?,
            })
        })
        .collect()
}

pub fn generalization() -> Result<Vec<GeneralizationCell>> {
    rows(GENERALIZATION_CSV)
        .map(|r| {
            Ok(GeneralizationCell {
                eval_max_height: if r[0] == "flat" { None } else { Some(num(r[0], "eval_terrain")?) },
                architecture: arch(r[1])?,
                trained_on_uneven: match r[2] {
                    "flat" => false,
                    "uneven" => true,
                    other => return Err(Error::domain(format!("fixture field trained_on: {other:?}"))),
                },
                mean: num(r[3], "mean")?,
                sd: num(r[4], "sd")?,
            })
        })
        .collect()
}

/// A reported aggregate by key, e.g. `welch_p`.
pub fn reported(key: &str) -> Result<f64> {
    rows(REPORTED_STATISTICS_CSV)
        .find(|r| r[0] == key)
        .ok_or_else(|| Error::domain(format!("no reported statistic {key:?}")))
        .and_then(|r| num(r[1], key))
}

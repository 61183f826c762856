//! Spectrum-based fault localization (Ochiai, Tarantula).

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FlStrategy, Granularity, ProgramElement, RepairConfig, SpectrumCounts};
use crate::profiler::{build_spectrum, coarsen_coverage, Profile};

pub const RANKING_FILE: &str = "ranking.csv";

/// `e_f / sqrt(F * (e_f + e_p))`, 0 when undefined.
pub fn ochiai(c: &SpectrumCounts) -> f64 {
    let denom = f64::from(c.total_failing) * f64::from(c.e_f + c.e_p);
    if c.e_f == 0 || denom == 0.0 {
        return 0.0;
    }
    f64::from(c.e_f) / denom.sqrt()
}

/// `(e_f/F) / (e_f/F + e_p/P)`, with empty ratios taken as 0.
pub fn tarantula(c: &SpectrumCounts) -> f64 {
    let ratio = |n: u32, d: u32| if d == 0 { 0.0 } else { f64::from(n) / f64::from(d) };
    let fr = ratio(c.e_f, c.total_failing);
    let pr = ratio(c.e_p, c.total_passing);
    if fr + pr == 0.0 {
        0.0
    } else {
        fr / (fr + pr)
    }
}

pub fn score(strategy: FlStrategy, c: &SpectrumCounts) -> f64 {
    match strategy {
        FlStrategy::Ochiai => ochiai(c),
        FlStrategy::Tarantula => tarantula(c),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedElement {
    pub element: ProgramElement,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuspiciousnessRanking {
    pub entries: Vec<RankedElement>,
    pub granularity: Granularity,
    pub strategy: FlStrategy,
}

impl SuspiciousnessRanking {
    /// CSV with header `element,score`, scores to six decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["element", "score"]).expect("in-memory csv");
        for e in &self.entries {
            w.write_record([e.element.canonical(), format!("{:.6}", e.score)])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Scores every covered element and ranks by descending score, ties broken
/// by canonical element string.
pub fn localize(profile: &Profile, config: &RepairConfig) -> Result<SuspiciousnessRanking> {
    if config.fl_option == Granularity::Off {
        return Err(Error::Localization("fault localization is disabled (flOptions=OFF)".into()));
    }
    let coverage = profile
        .coverage
        .as_ref()
        .ok_or_else(|| Error::Localization("profile carries no coverage".into()))?;
    if profile.failing.is_empty() {
        return Err(Error::Localization("no failing tests; nothing to localize".into()));
    }
    let coarse = coarsen_coverage(coverage, config.fl_option)?;
    let spectrum = build_spectrum(&coarse, &profile.failing, &profile.test_ids());
    let mut entries: Vec<RankedElement> = spectrum
        .iter()
        .map(|(element, counts)| RankedElement {
            element: element.clone(),
            score: score(config.fl_strategy, counts),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.element.canonical().cmp(&b.element.canonical()))
    });
    Ok(SuspiciousnessRanking { entries, granularity: config.fl_option, strategy: config.fl_strategy })
}

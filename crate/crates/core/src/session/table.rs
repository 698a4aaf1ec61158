use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::layout::LodLevel;
use crate::error::{Error, Result};
use crate::space::SolutionSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiderAxis {
    pub channel: String,
    /// Population-normalized value in [0, 1].
    pub normalized: f64,
    pub raw: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGraph {
    pub channel: String,
    /// Percentile within the current survivors, in [0, 100].
    pub percentile: f64,
}

/// Payload for one visualization table: spider diagram on the top, radial
/// graphs around the perimeter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationTableModel {
    pub id: String,
    pub spider: Vec<SpiderAxis>,
    pub radial: Vec<RadialGraph>,
    pub tier: LodLevel,
}

/// `rank / (n − 1) · 100` where ties share the midpoint rank; a single
/// value sits at 50.
pub fn percentile(value: f64, population: &[f64]) -> f64 {
    let n = population.len();
    if n <= 1 {
        return 50.0;
    }
    let less = population.iter().filter(|&&v| v < value).count() as f64;
    let equal = population.iter().filter(|&&v| v == value).count() as f64;
    let rank = less + (equal - 1.0).max(0.0) / 2.0;
    rank / (n - 1) as f64 * 100.0
}

/// Builds the table payload for `solution` against the `survivors`
/// population (sorted ascending).
pub fn table_model(space: &SolutionSpace, survivors: &[usize], solution: usize, tier: LodLevel) -> Result<VisualizationTableModel> {
    if survivors.binary_search(&solution).is_err() {
        return Err(Error::NotFound(format!(
            "solution {} is not among the survivors",
            space.solutions().get(solution).map_or("?", |s| s.id.as_str())
        )));
    }
    let s = space.solution(solution);
    let f = space.feature(solution);
    let mut spider = Vec::new();
    let mut radial = Vec::new();
    for (j, ch) in space.layout().metric_channels.iter().enumerate() {
        let raw = s.properties.get(*ch);
        spider.push(SpiderAxis {
            channel: ch.name().into(),
            normalized: f.metric[j],
            raw,
            unit: ch.unit().into(),
        });
        let population: Vec<f64> = survivors
            .iter()
            .map(|&i| space.solution(i).properties.get(*ch))
            .collect();
        radial.push(RadialGraph {
            channel: ch.name().into(),
            percentile: percentile(raw, &population),
        });
    }
    Ok(VisualizationTableModel {
        id: s.id.clone(),
        spider,
        radial,
        tier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_and_ties() {
        let pop = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(percentile(5.0, &pop), 100.0);
        assert_eq!(percentile(1.0, &pop), 0.0);
        assert_eq!(percentile(2.0, &pop), 1.5 / 3.0 * 100.0);
    }

    #[test]
    fn singleton_population_is_median() {
        assert_eq!(percentile(7.0, &[7.0]), 50.0);
    }
}

//! Seed-driven weighting, relevance scoring and elimination: one
//! search/select/re-cluster cycle.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cluster::{build_tree, choose_k, ClusterTree};
use crate::error::{contract, Error, Result};
use crate::reduce::{embed_3d, Embedding, EmbeddingMethod, Phase, Progress, TsneConfig};
use crate::space::{distance_unchecked, uniform_block, FeatureWeights, SolutionSpace};

/// Regularizer in the inverse-variance channel weights.
pub const VARIANCE_EPSILON: f64 = 1e-6;
pub const DEFAULT_TSNE_MAX_POINTS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub id: String,
    /// Cycle during which the seed was selected.
    pub cycle: u32,
}

/// Ordered, duplicate-free set of seed solution ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeedSet {
    seeds: Vec<Seed>,
}

impl SeedSet {
    pub fn new() -> Self {
        SeedSet::default()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.seeds.iter().any(|s| s.id == id)
    }

    /// Returns false if the id was already present.
    pub fn insert(&mut self, id: &str, cycle: u32) -> bool {
        if self.contains(id) {
            return false;
        }
        self.seeds.push(Seed {
            id: id.into(),
            cycle,
        });
        true
    }

    /// Returns false if the id was absent.
    pub fn remove(&mut self, id: &str) -> bool {
        let before = self.seeds.len();
        self.seeds.retain(|s| s.id != id);
        before != self.seeds.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Seed> {
        self.seeds.iter()
    }

    /// Space indices of the seeds, sorted ascending.
    pub fn indices(&self, space: &SolutionSpace) -> Result<Vec<usize>> {
        let mut idx = self
            .seeds
            .iter()
            .map(|s| space.require_index(&s.id))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        Ok(idx)
    }
}

fn inverse_variance_block(columns: usize, value: impl Fn(usize, usize) -> f64, seeds: usize) -> Vec<f64> {
    if columns == 0 {
        return Vec::new();
    }
    if seeds < 2 {
        return uniform_block(columns);
    }
    let raw: Vec<f64> = (0..columns)
        .map(|j| {
            let mean = (0..seeds).map(|s| value(s, j)).sum::<f64>() / seeds as f64;
            let var = (0..seeds)
                .map(|s| {
                    let d = value(s, j) - mean;
                    d * d
                })
                .sum::<f64>()
                / seeds as f64;
            1.0 / (var + VARIANCE_EPSILON)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Channel weights proportional to `1 / (Var_seeds + ε)`, normalized per
/// block. A single seed yields uniform weights.
pub fn seed_weights(seeds: &[usize], space: &SolutionSpace, balance: f64) -> Result<FeatureWeights> {
    if seeds.is_empty() {
        return Err(contract("seed weights need at least one seed"));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= space.len()) {
        return Err(Error::NotFound(format!("solution index {bad}")));
    }
    let (m, s) = space.layout().dims();
    let f = |k: usize| space.feature(seeds[k]);
    let w = FeatureWeights {
        metric: inverse_variance_block(m, |k, j| f(k).metric[j], seeds.len()),
        shape: inverse_variance_block(s, |k, j| f(k).shape[j], seeds.len()),
        balance,
    };
    w.validate()?;
    Ok(w)
}

/// Relevance of every survivor: minus its distance to the nearest seed.
/// Aligned with `survivors`.
pub fn score_survivors(
    space: &SolutionSpace,
    survivors: &[usize],
    seeds: &[usize],
    weights: &FeatureWeights,
) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(contract("scoring needs at least one seed"));
    }
    for s in seeds {
        if survivors.binary_search(s).is_err() {
            return Err(contract(format!("seed {s} is not a survivor")));
        }
    }
    let (m, s) = space.layout().dims();
    if weights.metric.len() != m || weights.shape.len() != s {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: m + s,
            found: weights.metric.len() + weights.shape.len(),
        });
    }
    Ok(survivors
        .iter()
        .map(|&i| {
            let fi = space.feature(i);
            let nearest = seeds
                .iter()
                .map(|&j| distance_unchecked(fi, space.feature(j), weights))
                .fold(f64::INFINITY, f64::min);
            -nearest
        })
        .collect())
}

/// `max(1, ceil((1 − ρ)·n))`, robust to representation error in `ρ`.
pub fn kept_count(n: usize, rho: f64) -> usize {
    let x = (1.0 - rho) * n as f64;
    let c = libm::ceil(x - 1e-9 * x.max(1.0)) as usize;
    c.clamp(1, n.max(1))
}

/// Keeps the best-scoring `kept_count` survivors. Seeds always stay,
/// displacing the worst kept non-seeds; ties go to the smaller index.
/// Returns indices sorted ascending.
pub fn eliminate(survivors: &[usize], scores: &[f64], rho: f64, seeds: &[usize]) -> Result<Vec<usize>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(contract(format!("elimination fraction {rho} outside (0, 1)")));
    }
    if scores.len() != survivors.len() {
        return Err(Error::DimensionMismatch {
            what: "scores",
            expected: survivors.len(),
            found: scores.len(),
        });
    }
    if survivors.is_empty() {
        return Ok(Vec::new());
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let keep = kept_count(survivors.len(), rho).max(seeds.len());
    let mut kept: Vec<usize> = seeds.clone();
    let mut order: Vec<usize> = (0..survivors.len())
        .filter(|&k| seeds.binary_search(&survivors[k]).is_err())
        .collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(survivors[a].cmp(&survivors[b]))
    });
    kept.extend(order.into_iter().take(keep - seeds.len()).map(|k| survivors[k]));
    kept.sort_unstable();
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleParams {
    pub rho: f64,
    /// Cluster count; `None` uses [`choose_k`] on the survivors.
    pub k: Option<usize>,
    pub seed: u64,
    pub balance: f64,
    pub embedding: EmbeddingMethod,
    pub tsne: TsneConfig,
    /// Largest population embedded with exact t-SNE.
    pub tsne_max_points: usize,
}

impl Default for CycleParams {
    fn default() -> Self {
        CycleParams {
            rho: 0.5,
            k: None,
            seed: 0,
            balance: 0.5,
            embedding: EmbeddingMethod::Tsne,
            tsne: TsneConfig::default(),
            tsne_max_points: DEFAULT_TSNE_MAX_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub weights: FeatureWeights,
    /// Sorted ascending.
    pub survivors: Vec<usize>,
    pub tree: ClusterTree,
    /// Rows aligned with `survivors`.
    pub embedding: Embedding,
    pub eliminated: usize,
    pub cycle: u32,
    pub note: Option<String>,
}

/// Clusters and embeds `members` in the space weighted by `weights`.
/// Populations above `params.tsne_max_points` are embedded with PCA instead
/// of t-SNE; the returned note says so.
pub fn organize(
    space: &SolutionSpace,
    members: &[usize],
    weights: &FeatureWeights,
    params: &CycleParams,
    progress: &mut dyn FnMut(Progress),
) -> Result<(ClusterTree, Embedding, Option<String>)> {
    let points = space.weighted_points(members, weights);
    progress(Progress::Phase {
        phase: Phase::Embed,
        percent: 10.0,
    });
    let mut note = None;
    let mut method = params.embedding;
    if method == EmbeddingMethod::Tsne && members.len() > params.tsne_max_points {
        note = Some(format!(
            "{} points exceed the exact t-SNE limit of {}; embedded with PCA",
            members.len(),
            params.tsne_max_points
        ));
        method = EmbeddingMethod::Pca;
    }
    let mut cfg = params.tsne.clone();
    cfg.seed = params.seed;
    let embedding = embed_3d(&points, method, &cfg, progress)?;
    progress(Progress::Phase {
        phase: Phase::Cluster,
        percent: 80.0,
    });
    let k = params
        .k
        .unwrap_or_else(|| choose_k(members.len()))
        .clamp(1, members.len());
    let tree = build_tree(&points, members, k, params.seed, Some(weights.clone()))?;
    Ok((tree, embedding, note))
}

/// Weights from the current seeds, elimination of the least relevant
/// survivors, then re-clustering and re-embedding of the rest.
pub fn run_cycle(
    space: &SolutionSpace,
    survivors: &[usize],
    seeds: &[usize],
    params: &CycleParams,
    cycle: u32,
    progress: &mut dyn FnMut(Progress),
) -> Result<CycleResult> {
    if seeds.is_empty() {
        return Err(Error::Validation("at least one seed required".into()));
    }
    progress(Progress::Phase {
        phase: Phase::Score,
        percent: 0.0,
    });
    let weights = seed_weights(seeds, space, params.balance)?;
    let scores = score_survivors(space, survivors, seeds, &weights)?;
    let kept = eliminate(survivors, &scores, params.rho, seeds)?;
    let (tree, embedding, note) = organize(space, &kept, &weights, params, progress)?;
    Ok(CycleResult {
        eliminated: survivors.len() - kept.len(),
        weights,
        survivors: kept,
        tree,
        embedding,
        cycle,
        note,
    })
}

/// First-round suggestions: representatives of the `ceil(k/3)` most
/// populated root clusters, largest first.
pub fn initial_suggestions(tree: &ClusterTree) -> Vec<usize> {
    let mut roots: Vec<_> = tree.roots.iter().collect();
    roots.sort_by(|a, b| b.members.len().cmp(&a.members.len()));
    let take = tree.roots.len().div_ceil(3);
    roots.into_iter().take(take).map(|c| c.representative).collect()
}

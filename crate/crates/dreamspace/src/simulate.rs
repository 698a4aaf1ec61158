//! Navigation-strategy simulation with an oracle user who knows the target.
//!
//! Inspections count distinct solutions shown to the user at full detail
//! (cluster medoids or representatives). A cycle is one re-clustering: a
//! recommender elimination round or a stochastic cluster expansion.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use dreamspace_core::cluster::{build_tree, choose_k, expand_cluster, Cluster, ClusterTree};
use dreamspace_core::recommend::{run_cycle, CycleParams};
use dreamspace_core::reduce::EmbeddingMethod;
use dreamspace_core::rng::seeded;
use dreamspace_core::space::weighted_distance;
use dreamspace_core::{FeatureWeights, Matrix, SolutionSpace};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SWITCH_CYCLE: u32 = 2;
/// Neighbor count of the stochastic walk's cluster graph.
pub const MAX_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    Stochastic,
    Recommender,
    Hybrid { switch_cycle: u32 },
}

impl Policy {
    pub fn all() -> [Policy; 3] {
        [
            Policy::Stochastic,
            Policy::Recommender,
            Policy::Hybrid {
                switch_cycle: DEFAULT_SWITCH_CYCLE,
            },
        ]
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Stochastic => f.write_str("stochastic"),
            Policy::Recommender => f.write_str("recommender"),
            Policy::Hybrid { switch_cycle } => write!(f, "hybrid:{switch_cycle}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(Policy::Stochastic),
            "recommender" => Ok(Policy::Recommender),
            "hybrid" => Ok(Policy::Hybrid {
                switch_cycle: DEFAULT_SWITCH_CYCLE,
            }),
            _ => s
                .strip_prefix("hybrid:")
                .and_then(|n| n.parse().ok())
                .map(|switch_cycle| Policy::Hybrid { switch_cycle })
                .ok_or_else(|| Error::Invalid(format!("unknown policy {s:?}"))),
        }
    }
}

/// How the recommender's simulated user chooses its seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedChoice {
    /// The shown representative nearest the target.
    #[default]
    Nearest,
    /// The target itself, selected from the star map without inspection.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rho: f64,
    /// Cluster count per level; `None` chooses from the population.
    pub k: Option<usize>,
    pub seed: u64,
    pub balance: f64,
    /// Stop after this many cycles even if the target was not found.
    pub max_cycles: u32,
    pub seed_choice: SeedChoice,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rho: 0.5,
            k: None,
            seed: 0,
            balance: 0.5,
            max_cycles: 200,
            seed_choice: SeedChoice::Nearest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u32,
    /// Distinct inspections so far.
    pub inspections: usize,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub policy: Policy,
    pub target: String,
    pub cycles: u32,
    pub inspections: usize,
    pub survivors_final: usize,
    pub located: bool,
    pub per_cycle: Vec<CycleRecord>,
}

struct Run<'a> {
    space: &'a SolutionSpace,
    target: usize,
    uniform: FeatureWeights,
    inspected: BTreeSet<usize>,
    located: bool,
    cycles: u32,
    per_cycle: Vec<CycleRecord>,
}

impl<'a> Run<'a> {
    /// The oracle's notion of closeness to the target.
    fn gap(&self, i: usize) -> f64 {
        weighted_distance(self.space.feature(i), self.space.feature(self.target), &self.uniform)
            .expect("features share one layout")
    }

    fn inspect(&mut self, i: usize) {
        self.inspected.insert(i);
        if i == self.target {
            self.located = true;
        }
    }

    fn record(&mut self, survivors: usize) {
        self.per_cycle.push(CycleRecord {
            cycle: self.cycles,
            inspections: self.inspected.len(),
            survivors,
        });
    }

    fn nearest(&self, candidates: impl IntoIterator<Item = usize>) -> usize {
        candidates
            .into_iter()
            .min_by(|&a, &b| self.gap(a).total_cmp(&self.gap(b)).then(a.cmp(&b)))
            .expect("non-empty candidates")
    }
}

fn level_k(cfg: &SimConfig, n: usize) -> usize {
    cfg.k.unwrap_or_else(|| choose_k(n)).clamp(1, n)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy walk over sibling clusters. Each level is a set of clusters with
/// a nearest-centroid neighbor graph; the user inspects the medoids of the
/// current cluster's neighbors and moves to the one closest to the target.
/// At a local minimum the cluster is expanded one level. Singleton dead
/// ends are exhausted; an exhausted level exhausts its parent.
fn stochastic(run: &mut Run, cfg: &SimConfig, points: &Matrix, tree: ClusterTree, budget: u32, rng: &mut impl Rng) {
    let mut tree = tree;
    let mut levels: Vec<(Option<String>, Vec<String>)> =
        vec![(None, tree.roots.iter().map(|c| c.id.clone()).collect())];
    let mut exhausted: BTreeSet<String> = BTreeSet::new();
    let lookup = |tree: &ClusterTree, id: &str| -> Cluster { tree.find(id).expect("cluster in tree").clone() };
    let start = levels[0].1[rng.random_range(0..levels[0].1.len())].clone();
    let mut current = lookup(&tree, &start);
    run.inspect(current.representative);

    while !run.located && run.cycles < budget {
        let (_, ids) = levels.last().expect("at least the root level").clone();
        let mut others: Vec<Cluster> = ids
            .iter()
            .filter(|id| **id != current.id && !exhausted.contains(*id))
            .map(|id| lookup(&tree, id))
            .collect();
        others.sort_by(|a, b| {
            sq(&a.centroid, &current.centroid)
                .total_cmp(&sq(&b.centroid, &current.centroid))
                .then(a.id.cmp(&b.id))
        });
        let m = MAX_NEIGHBORS.min(ids.len().saturating_sub(1));
        others.truncate(m);
        for c in &others {
            run.inspect(c.representative);
            if run.located {
                return;
            }
        }
        let here = run.gap(current.representative);
        if let Some(best) = others
            .iter()
            .filter(|c| run.gap(c.representative) < here)
            .min_by(|a, b| run.gap(a.representative).total_cmp(&run.gap(b.representative)))
        {
            current = best.clone();
            continue;
        }
        if current.members.len() > 1 {
            let k_child = level_k(cfg, current.members.len()).max(2);
            let seed = cfg.seed.wrapping_add(u64::from(run.cycles) + 1);
            tree = expand_cluster(&tree, &current.id, k_child, seed, points)
                .expect("expanding a multi-member cluster")
                .tree;
            run.cycles += 1;
            run.record(run.space.len());
            let children: Vec<String> = tree
                .find(&current.id)
                .and_then(|c| c.children.as_ref())
                .map(|ch| ch.iter().map(|c| c.id.clone()).collect())
                .unwrap_or_default();
            let holder = children
                .iter()
                .map(|id| lookup(&tree, id))
                .find(|c| c.members.binary_search(&current.representative).is_ok())
                .expect("medoid belongs to one child");
            levels.push((Some(current.id.clone()), children));
            current = holder;
            run.inspect(current.representative);
            continue;
        }
        // Singleton dead end: exhaust it, climbing while levels are spent.
        exhausted.insert(current.id.clone());
        loop {
            let (parent, ids) = levels.last().expect("root level").clone();
            let open: Vec<&String> = ids.iter().filter(|id| !exhausted.contains(*id)).collect();
            if !open.is_empty() {
                let pick = open[rng.random_range(0..open.len())].clone();
                current = lookup(&tree, &pick);
                run.inspect(current.representative);
                break;
            }
            match parent {
                Some(p) => {
                    exhausted.insert(p);
                    levels.pop();
                }
                None => return,
            }
        }
    }
}

/// Each cycle the oracle picks one seed and runs an elimination cycle.
/// With [`SeedChoice::Nearest`] it keeps the shown representative nearest
/// the target; with [`SeedChoice::Target`] it seeds the target itself.
fn recommender(
    run: &mut Run,
    cfg: &SimConfig,
    mut survivors: Vec<usize>,
    mut tree: ClusterTree,
    mut seed: Option<usize>,
) -> Result<usize> {
    loop {
        let shown: Vec<usize> = tree.roots.iter().map(|c| c.representative).collect();
        for &r in &shown {
            run.inspect(r);
        }
        let others: Vec<usize> = survivors.iter().copied().filter(|&s| Some(s) != seed).collect();
        if others == [run.target] || survivors == [run.target] {
            run.inspect(run.target);
        }
        if run.located || others.is_empty() || run.cycles >= cfg.max_cycles {
            return Ok(survivors.len());
        }
        let pick = match cfg.seed_choice {
            SeedChoice::Nearest => run.nearest(shown.iter().copied().chain(seed)),
            SeedChoice::Target => run.target,
        };
        seed = Some(pick);
        let params = CycleParams {
            rho: cfg.rho,
            k: cfg.k,
            seed: cfg.seed.wrapping_add(u64::from(run.cycles) + 1),
            balance: cfg.balance,
            embedding: EmbeddingMethod::Pca,
            ..CycleParams::default()
        };
        let result = run_cycle(run.space, &survivors, &[pick], &params, run.cycles + 1, &mut |_| {})?;
        run.cycles = result.cycle;
        survivors = result.survivors;
        tree = result.tree;
        run.record(survivors.len());
    }
}

/// Simulates one policy searching for `target`.
pub fn simulate(space: &SolutionSpace, policy: Policy, target: &str, cfg: &SimConfig) -> Result<SimTrace> {
    let t = space.require_index(target)?;
    let uniform = FeatureWeights::uniform(space.layout(), cfg.balance);
    let all: Vec<usize> = (0..space.len()).collect();
    let points = space.weighted_points(&all, &uniform);
    let tree = build_tree(&points, &all, level_k(cfg, all.len()), cfg.seed, Some(uniform.clone()))?;
    let mut run = Run {
        space,
        target: t,
        uniform,
        inspected: BTreeSet::new(),
        located: false,
        cycles: 0,
        per_cycle: Vec::new(),
    };
    let mut rng = seeded(cfg.seed ^ 0x5eed_0f_5a11);
    let survivors_final = match policy {
        Policy::Recommender => recommender(&mut run, cfg, all, tree, None)?,
        Policy::Stochastic => {
            stochastic(&mut run, cfg, &points, tree, cfg.max_cycles, &mut rng);
            space.len()
        }
        Policy::Hybrid { switch_cycle } => {
            stochastic(&mut run, cfg, &points, tree.clone(), switch_cycle.min(cfg.max_cycles), &mut rng);
            if run.located {
                space.len()
            } else {
                let best = run.nearest(run.inspected.iter().copied());
                recommender(&mut run, cfg, all, tree, Some(best))?
            }
        }
    };
    Ok(SimTrace {
        policy,
        target: target.to_string(),
        cycles: run.cycles,
        inspections: run.inspected.len(),
        survivors_final,
        located: run.located,
        per_cycle: run.per_cycle,
    })
}

/// Deterministic sample of target ids.
pub fn sample_targets(space: &SolutionSpace, count: usize, seed: u64) -> Vec<String> {
    let mut ids: Vec<&str> = space.solutions().iter().map(|s| s.id.as_str()).collect();
    ids.shuffle(&mut seeded(seed));
    ids.into_iter().take(count).map(String::from).collect()
}

/// Every (policy, target) pair, in input order, computed in parallel.
pub fn simulate_batch(
    space: &SolutionSpace,
    policies: &[Policy],
    targets: &[String],
    cfg: &SimConfig,
) -> Result<Vec<SimTrace>> {
    let jobs: Vec<(Policy, &String)> = policies.iter().flat_map(|p| targets.iter().map(move |t| (*p, t))).collect();
    jobs.par_iter().map(|(p, t)| simulate(space, *p, t, cfg)).collect()
}

pub fn write_csv<W: Write>(traces: &[SimTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(["policy", "target", "cycles", "inspections", "survivors_final", "located"])
        .map_err(err)?;
    for t in traces {
        w.write_record([
            t.policy.to_string(),
            t.target.clone(),
            t.cycles.to_string(),
            t.inspections.to_string(),
            t.survivors_final.to_string(),
            t.located.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub runs: usize,
    pub located: usize,
    pub mean_inspections: f64,
    pub mean_cycles: f64,
    pub max_cycles: u32,
}

pub fn summarize(traces: &[SimTrace]) -> Vec<PolicySummary> {
    let mut policies: Vec<Policy> = Vec::new();
    for t in traces {
        if !policies.contains(&t.policy) {
            policies.push(t.policy);
        }
    }
    policies
        .into_iter()
        .map(|p| {
            let runs: Vec<&SimTrace> = traces.iter().filter(|t| t.policy == p).collect();
            let n = runs.len() as f64;
            PolicySummary {
                policy: p,
                runs: runs.len(),
                located: runs.iter().filter(|t| t.located).count(),
                mean_inspections: runs.iter().map(|t| t.inspections as f64).sum::<f64>() / n,
                mean_cycles: runs.iter().map(|t| f64::from(t.cycles)).sum::<f64>() / n,
                max_cycles: runs.iter().map(|t| t.cycles).max().unwrap_or(0),
            }
        })
        .collect()
}

/// Plain-text comparison table. Values are measured, not asserted.
pub fn report(space_n: usize, cfg: &SimConfig, traces: &[SimTrace]) -> String {
    let mut s = format!(
        "navigation simulation: N = {space_n}, rho = {}, seed = {}, seed choice = {:?}\n\
         inspections = distinct solutions shown at full detail; cycles = re-clusterings\n\n\
         {:<14} {:>5} {:>8} {:>17} {:>12} {:>11}\n",
        cfg.rho, cfg.seed, cfg.seed_choice, "policy", "runs", "located", "mean inspections", "mean cycles", "max cycles"
    );
    for p in summarize(traces) {
        s.push_str(&format!(
            "{:<14} {:>5} {:>8} {:>17.2} {:>12.2} {:>11}\n",
            p.policy.to_string(),
            p.runs,
            p.located,
            p.mean_inspections,
            p.mean_cycles,
            p.max_cycles
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_roundtrip() {
        for p in Policy::all() {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert_eq!("hybrid".parse::<Policy>().unwrap(), Policy::Hybrid { switch_cycle: 2 });
        assert!("greedy".parse::<Policy>().is_err());
    }
}

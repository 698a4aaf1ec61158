//! k-means partitioning, medoid representatives and on-demand expansion.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::space::FeatureWeights;

pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const MAX_K: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Dotted path: `"3"` for a root, `"3.1"` for its second child.
    pub id: String,
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    /// Medoid: the member nearest the centroid.
    pub representative: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<Cluster>>,
}

impl Cluster {
    fn walk<'a>(&'a self, out: &mut Vec<&'a Cluster>) {
        out.push(self);
        if let Some(children) = &self.children {
            for c in children {
                c.walk(out);
            }
        }
    }

    fn find_mut(&mut self, id: &str) -> Option<&mut Cluster> {
        if self.id == id {
            return Some(self);
        }
        self.children
            .as_mut()?
            .iter_mut()
            .find_map(|c| c.find_mut(id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub roots: Vec<Cluster>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<FeatureWeights>,
    pub seed: u64,
}

impl ClusterTree {
    /// Every cluster, depth-first, parents before children.
    pub fn clusters(&self) -> Vec<&Cluster> {
        let mut out = Vec::new();
        for r in &self.roots {
            r.walk(&mut out);
        }
        out
    }

    pub fn find(&self, id: &str) -> Option<&Cluster> {
        self.clusters().into_iter().find(|c| c.id == id)
    }

    /// Clusters without children.
    pub fn leaves(&self) -> Vec<&Cluster> {
        self.clusters()
            .into_iter()
            .filter(|c| c.children.is_none())
            .collect()
    }

    pub fn member_count(&self) -> usize {
        self.roots.iter().map(|c| c.members.len()).sum()
    }

    /// Root cluster index holding `member`.
    pub fn root_of(&self, member: usize) -> Option<usize> {
        self.roots
            .iter()
            .position(|c| c.members.binary_search(&member).is_ok())
    }
}

/// Raw Lloyd output in row-index space.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster SSE after every Lloyd iteration.
    pub sse_trace: Vec<f64>,
}

impl KMeansFit {
    pub fn sse(&self) -> f64 {
        *self.sse_trace.last().expect("at least one iteration")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `clamp(round(sqrt(N/2)), 1, 50)`.
pub fn choose_k(n: usize) -> usize {
    let k = libm::round(libm::sqrt(n as f64 / 2.0)) as usize;
    k.clamp(1, MAX_K)
}

fn plus_plus_init(points: &Matrix, k: usize, seed: u64) -> Vec<usize> {
    let n = points.rows();
    let mut rng = rng::seeded(seed);
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !centers.contains(i)).expect("k <= n")
        };
        centers.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    centers
}

/// Lloyd's algorithm from a seeded k-means++ start. Stops when assignments
/// repeat or after 100 iterations. An empty cluster is reseeded with the
/// point farthest from its own centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansFit> {
    let (n, d) = (points.rows(), points.cols());
    if k == 0 || k > n {
        return Err(contract(format!("k = {k} must be in 1..={n}")));
    }
    points.check_finite()?;
    let init = plus_plus_init(points, k, seed);
    let mut centroids = points.select_rows(&init);
    let mut assign = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next = assign.clone();
        for i in 0..n {
            let p = points.row(i);
            let mut best = if next[i] == usize::MAX { 0 } else { next[i] };
            let mut best_d = sq_dist(p, centroids.row(best));
            for c in 0..k {
                let dc = sq_dist(p, centroids.row(c));
                if dc < best_d || (dc == best_d && next[i] == usize::MAX && c < best) {
                    best = c;
                    best_d = dc;
                }
            }
            next[i] = best;
        }
        let mut counts = vec![0usize; k];
        for &a in &next {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[next[i]] <= 1 {
                    continue;
                }
                let di = sq_dist(points.row(i), centroids.row(next[i]));
                if di > far_d {
                    far_d = di;
                    far = Some(i);
                }
            }
            let i = far.expect("k <= n leaves a donor cluster");
            counts[next[i]] -= 1;
            next[i] = c;
            counts[c] = 1;
        }
        let mut sums = Matrix::zeros(k, d);
        for i in 0..n {
            let row = sums.row_mut(next[i]);
            for (s, v) in row.iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for v in sums.row_mut(c) {
                *v *= inv;
            }
        }
        centroids = sums;
        let sse: f64 = (0..n)
            .map(|i| sq_dist(points.row(i), centroids.row(next[i])))
            .sum();
        sse_trace.push(sse);
        let stable = next == assign;
        assign = next;
        if stable {
            break;
        }
    }
    Ok(KMeansFit {
        assignments: assign,
        centroids,
        sse_trace,
    })
}

/// Best of `restarts` seeded runs by final SSE (first wins ties).
pub fn kmeans_restarts(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) as u64 {
        let fit = kmeans(points, k, seed.wrapping_add(r))?;
        if best.as_ref().is_none_or(|b| fit.sse() < b.sse()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Member nearest `centroid`; ties go to the smallest index. `members` must
/// be sorted ascending and index rows of `points`.
pub fn medoid(members: &[usize], points: &Matrix, centroid: &[f64]) -> usize {
    let mut best = members[0];
    let mut best_d = f64::INFINITY;
    for &m in members {
        let d = sq_dist(points.row(m), centroid);
        if d < best_d {
            best = m;
            best_d = d;
        }
    }
    best
}

/// Turns a fit over `local` rows into clusters of global member ids.
/// `global[r]` is the member id of row `r`; it must be ascending.
fn clusters_from_fit(fit: &KMeansFit, local: &Matrix, global: &[usize], prefix: Option<&str>) -> Vec<Cluster> {
    let k = fit.centroids.rows();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, &a) in fit.assignments.iter().enumerate() {
        rows[a].push(r);
    }
    let mut groups: Vec<(Vec<usize>, usize)> = rows.into_iter().enumerate().map(|(c, r)| (r, c)).collect();
    groups.sort_by_key(|(r, _)| r[0]);
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (r, c))| {
            let centroid = fit.centroids.row(c).to_vec();
            let rep = medoid(&r, local, &centroid);
            Cluster {
                id: match prefix {
                    Some(p) => format!("{p}.{i}"),
                    None => i.to_string(),
                },
                members: r.iter().map(|&x| global[x]).collect(),
                centroid,
                representative: global[rep],
                children: None,
            }
        })
        .collect()
}

/// Single-level tree over `points`, whose row `r` is member `members[r]`.
pub fn build_tree(
    points: &Matrix,
    members: &[usize],
    k: usize,
    seed: u64,
    weights: Option<FeatureWeights>,
) -> Result<ClusterTree> {
    if members.len() != points.rows() {
        return Err(Error::DimensionMismatch {
            what: "cluster members",
            expected: points.rows(),
            found: members.len(),
        });
    }
    if members.windows(2).any(|w| w[0] >= w[1]) {
        return Err(contract("cluster members must be strictly ascending"));
    }
    let fit = kmeans(points, k, seed)?;
    Ok(ClusterTree {
        roots: clusters_from_fit(&fit, points, members, None),
        k,
        weights,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub tree: ClusterTree,
    /// Set when the request was a no-op.
    pub diagnostic: Option<String>,
}

/// Splits one cluster into `k_child` children (clamped to its size).
/// `points` is indexed by member id. Expanding again with the same arguments
/// reproduces the same children.
pub fn expand_cluster(
    tree: &ClusterTree,
    cluster_id: &str,
    k_child: usize,
    seed: u64,
    points: &Matrix,
) -> Result<Expansion> {
    let mut out = tree.clone();
    let target = out
        .roots
        .iter_mut()
        .find_map(|c| c.find_mut(cluster_id))
        .ok_or_else(|| Error::NotFound(format!("cluster {cluster_id}")))?;
    if target.members.len() < 2 {
        return Ok(Expansion {
            tree: out,
            diagnostic: Some(format!("cluster {cluster_id} has a single member; nothing to expand")),
        });
    }
    if k_child == 0 {
        return Err(contract("k_child must be at least 1"));
    }
    if let Some(&max) = target.members.last() {
        if max >= points.rows() {
            return Err(Error::DimensionMismatch {
                what: "expansion points",
                expected: max + 1,
                found: points.rows(),
            });
        }
    }
    let local = points.select_rows(&target.members);
    let kc = k_child.min(target.members.len());
    let fit = kmeans(&local, kc, seed)?;
    target.children = Some(clusters_from_fit(&fit, &local, &target.members, Some(cluster_id)));
    Ok(Expansion {
        tree: out,
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap()
    }

    #[test]
    fn two_separated_pairs() {
        let t = build_tree(&grid(), &[0, 1, 2, 3], 2, 1, None).unwrap();
        assert_eq!(t.roots[0].members, vec![0, 1]);
        assert_eq!(t.roots[1].members, vec![2, 3]);
        let fit = kmeans(&grid(), 2, 1).unwrap();
        assert!((fit.sse() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_is_zero_sse() {
        let fit = kmeans(&grid(), 4, 3).unwrap();
        assert_eq!(fit.sse(), 0.0);
        let mut a = fit.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn k_above_n_rejected() {
        assert!(matches!(kmeans(&grid(), 5, 0), Err(Error::Contract(_))));
        assert!(matches!(kmeans(&grid(), 0, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn duplicate_points_with_k_equal_n() {
        let x = Matrix::from_rows(&[[1.0, 1.0]; 5]).unwrap();
        let fit = kmeans(&x, 5, 2).unwrap();
        assert_eq!(fit.sse(), 0.0);
        let mut counts = [0; 5];
        for a in fit.assignments {
            counts[a] += 1;
        }
        assert_eq!(counts, [1; 5]);
    }

    #[test]
    fn choose_k_formula() {
        assert_eq!(choose_k(1), 1);
        assert_eq!(choose_k(50), 5);
        assert_eq!(choose_k(16_800), 50);
        assert_eq!(choose_k(2), 1);
    }

    #[test]
    fn medoid_cases() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]]).unwrap();
        assert_eq!(medoid(&[0, 1, 2], &x, &[2.0, 0.0]), 1);
        assert_eq!(medoid(&[2], &x, &[2.0, 0.0]), 2);
        // tie between rows 0 and 2 goes to the smaller index
        assert_eq!(medoid(&[0, 2], &x, &[2.0, 0.0]), 0);
    }

    #[test]
    fn expand_pair_into_singletons() {
        let t = build_tree(&grid(), &[0, 1, 2, 3], 2, 1, None).unwrap();
        let e = expand_cluster(&t, "0", 2, 9, &grid()).unwrap();
        assert!(e.diagnostic.is_none());
        let children = e.tree.roots[0].children.as_ref().unwrap();
        assert_eq!(children.len(), 2);
        assert_eq!(children[0].members.len(), 1);
        assert_eq!(children[0].id, "0.0");
        assert_eq!(e.tree.roots[0].representative, t.roots[0].representative);
        let again = expand_cluster(&e.tree, "0", 2, 9, &grid()).unwrap();
        assert_eq!(again.tree, e.tree);
    }

    #[test]
    fn singleton_expansion_is_noop() {
        let t = build_tree(&grid(), &[0, 1, 2, 3], 4, 1, None).unwrap();
        let e = expand_cluster(&t, "2", 3, 0, &grid()).unwrap();
        assert!(e.diagnostic.is_some());
        assert_eq!(e.tree, t);
    }

    #[test]
    fn unknown_cluster_is_not_found() {
        let t = build_tree(&grid(), &[0, 1, 2, 3], 2, 1, None).unwrap();
        assert!(matches!(expand_cluster(&t, "7", 2, 0, &grid()), Err(Error::NotFound(_))));
    }
}

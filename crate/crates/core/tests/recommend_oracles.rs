//! Elimination against a sort oracle and the shrinkage bound of the cycle.

mod common;

use common::random_space;
use dreamspace_core::recommend::{
    eliminate, initial_suggestions, kept_count, run_cycle, score_survivors, seed_weights, CycleParams,
};
use dreamspace_core::reduce::EmbeddingMethod;
use dreamspace_core::rng::seeded;
use dreamspace_core::space::weighted_distance;
use rand::seq::SliceRandom;
use rand::Rng;

/// Sorts every survivor by (seed first, score descending, index ascending)
/// and keeps the prefix.
fn sort_oracle(survivors: &[usize], scores: &[f64], rho: f64, seeds: &[usize]) -> Vec<usize> {
    let n = survivors.len();
    let floor = ((1.0 - rho) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    let keep = floor.max(seeds.len());
    let mut rows: Vec<(bool, f64, usize)> = survivors
        .iter()
        .zip(scores)
        .map(|(&s, &sc)| (seeds.contains(&s), sc, s))
        .collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut kept: Vec<usize> = rows.into_iter().take(keep).map(|r| r.2).collect();
    kept.sort_unstable();
    kept
}

#[test]
fn eliminate_agrees_with_sort_oracle() {
    let mut rng = seeded(123);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let mut pool: Vec<usize> = (0..200).collect();
        pool.shuffle(&mut rng);
        let mut survivors: Vec<usize> = pool[..n].to_vec();
        survivors.sort_unstable();
        let ties = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if ties { rng.random_range(0..4) as f64 } else { -rng.random::<f64>() })
            .collect();
        let n_seeds = rng.random_range(0..=n.min(4));
        let mut shuffled = survivors.clone();
        shuffled.shuffle(&mut rng);
        let seeds: Vec<usize> = shuffled[..n_seeds].to_vec();
        let rho = [0.1, 0.25, 0.5, 0.7, 0.9][rng.random_range(0..5)];
        let got = eliminate(&survivors, &scores, rho, &seeds).unwrap();
        assert_eq!(got, sort_oracle(&survivors, &scores, rho, &seeds));
        assert!(seeds.iter().all(|s| got.binary_search(s).is_ok()));
        assert!(got.len() <= n);
    }
}

#[test]
fn scores_are_negative_nearest_seed_distance() {
    let space = random_space(60, 16, 3, 4);
    let survivors: Vec<usize> = (0..60).collect();
    let seeds = [3, 17, 40];
    let w = seed_weights(&seeds, &space, 0.5).unwrap();
    let scores = score_survivors(&space, &survivors, &seeds, &w).unwrap();
    for (i, s) in scores.iter().enumerate() {
        let d = seeds
            .iter()
            .map(|&j| weighted_distance(space.feature(i), space.feature(j), &w).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((s + d).abs() <= 1e-12);
    }
    for s in seeds {
        assert_eq!(scores[s], 0.0);
    }
}

#[test]
fn cycles_shrink_to_one_candidate_within_log_bound() {
    let n = 2000;
    let space = random_space(n, 16, 6, 8);
    let seed = 777;
    let params = CycleParams {
        embedding: EmbeddingMethod::Pca,
        k: Some(8),
        ..CycleParams::default()
    };
    let mut survivors: Vec<usize> = (0..n).collect();
    let mut cycles = 0;
    while survivors.len() > 2 {
        let r = run_cycle(&space, &survivors, &[seed], &params, cycles + 1, &mut |_| {}).unwrap();
        assert!(r.survivors.len() < survivors.len());
        assert!(r.survivors.len() == kept_count(survivors.len(), 0.5));
        assert!(r.survivors.binary_search(&seed).is_ok());
        assert!(r.survivors.iter().all(|s| survivors.binary_search(s).is_ok()));
        survivors = r.survivors;
        cycles += 1;
    }
    let bound = (n as f64).log2().ceil() as u32;
    assert!(cycles <= bound, "{cycles} cycles > {bound}");
}

#[test]
fn run_cycle_requires_a_seed() {
    let space = random_space(10, 4, 1, 1);
    let survivors: Vec<usize> = (0..10).collect();
    let err = run_cycle(&space, &survivors, &[], &CycleParams::default(), 1, &mut |_| {}).unwrap_err();
    assert!(err.to_string().contains("at least one seed required"));
}

#[test]
fn initial_suggestions_are_largest_clusters() {
    let space = random_space(300, 8, 5, 12);
    let all: Vec<usize> = (0..300).collect();
    let w = dreamspace_core::space::FeatureWeights::uniform(space.layout(), 0.5);
    let points = space.weighted_points(&all, &w);
    let tree = dreamspace_core::cluster::build_tree(&points, &all, 7, 0, None).unwrap();
    let picks = initial_suggestions(&tree);
    assert_eq!(picks.len(), 3);
    let mut sizes: Vec<usize> = tree.roots.iter().map(|c| c.members.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    for (p, size) in picks.iter().zip(&sizes) {
        let owner = &tree.roots[tree.root_of(*p).unwrap()];
        assert_eq!(owner.representative, *p);
        assert_eq!(owner.members.len(), *size);
    }
}

mod common;

use common::{fast_ingest, grid16, synth_into};
use dreamspace::dataset::load_dataset;
use dreamspace::simulate::{
    report, sample_targets, simulate, simulate_batch, summarize, write_csv, Policy, SeedChoice, SimConfig,
};
use dreamspace_core::cluster::build_tree;
use dreamspace_core::{FeatureWeights, SolutionSpace};

fn space16() -> SolutionSpace {
    let dir = tempfile::tempdir().unwrap();
    let root = synth_into(dir.path(), grid16(), 9);
    load_dataset(&root, &fast_ingest(3000)).unwrap().space
}

#[test]
fn runs_are_deterministic() {
    let space = space16();
    let cfg = SimConfig::default();
    for p in Policy::all() {
        for t in sample_targets(&space, 4, 1) {
            assert_eq!(simulate(&space, p, &t, &cfg).unwrap(), simulate(&space, p, &t, &cfg).unwrap());
        }
    }
    assert_eq!(sample_targets(&space, 5, 3), sample_targets(&space, 5, 3));
}

fn oracle() -> SimConfig {
    SimConfig {
        seed_choice: SeedChoice::Target,
        ..SimConfig::default()
    }
}

#[test]
fn recommender_halves_survivors_within_the_log_bound() {
    let space = space16();
    for cfg in [SimConfig::default(), oracle()] {
        for s in space.solutions() {
            let t = simulate(&space, Policy::Recommender, &s.id, &cfg).unwrap();
            assert!(t.cycles <= 4, "{}: {} cycles", s.id, t.cycles);
            let mut n = 16;
            for c in &t.per_cycle {
                assert_eq!(c.survivors, n / 2);
                n /= 2;
            }
        }
    }
}

#[test]
fn oracle_seeds_isolate_every_target() {
    let space = space16();
    for s in space.solutions() {
        let t = simulate(&space, Policy::Recommender, &s.id, &oracle()).unwrap();
        assert!(t.located, "{}", s.id);
        assert!(t.survivors_final >= 1 && t.cycles <= 4);
    }
}

#[test]
fn stochastic_walk_always_finds_the_target() {
    let space = space16();
    let targets: Vec<String> = space.solutions().iter().map(|s| s.id.clone()).collect();
    let policies = [Policy::Stochastic, Policy::Hybrid { switch_cycle: 200 }];
    let traces = simulate_batch(&space, &policies, &targets, &SimConfig::default()).unwrap();
    assert_eq!(traces.len(), 32);
    for t in &traces {
        assert!(t.located, "{t:?}");
        assert!(t.inspections >= 1 && t.inspections <= 16);
        assert_eq!(t.survivors_final, 16);
    }
    let hybrid = simulate_batch(&space, &[Policy::Hybrid { switch_cycle: 2 }], &targets, &oracle()).unwrap();
    assert!(hybrid.iter().all(|t| t.located));
}

#[test]
fn root_medoid_is_found_before_any_cycle() {
    let space = space16();
    let cfg = SimConfig {
        k: Some(4),
        ..SimConfig::default()
    };
    let all: Vec<usize> = (0..space.len()).collect();
    let w = FeatureWeights::uniform(space.layout(), cfg.balance);
    let tree = build_tree(&space.weighted_points(&all, &w), &all, 4, cfg.seed, None).unwrap();
    for c in &tree.roots {
        let id = &space.solution(c.representative).id;
        for p in [Policy::Stochastic, Policy::Recommender] {
            let t = simulate(&space, p, id, &cfg).unwrap();
            assert!(t.located && t.cycles == 0, "{p} on medoid {id}: {t:?}");
        }
    }
}

#[test]
fn outputs_and_errors() {
    let space = space16();
    let cfg = SimConfig::default();
    assert!(simulate(&space, Policy::Recommender, "nope", &cfg).is_err());

    let targets = sample_targets(&space, 3, 0);
    let traces = simulate_batch(&space, &Policy::all(), &targets, &cfg).unwrap();
    let mut csv = Vec::new();
    write_csv(&traces, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("policy,target,cycles,inspections,survivors_final,located"));
    assert_eq!(lines.count(), 9);

    let summary = summarize(&traces);
    assert_eq!(summary.len(), 3);
    assert!(summary.iter().all(|s| s.runs == 3));
    let r = report(space.len(), &cfg, &traces);
    for name in ["stochastic", "recommender", "hybrid:2", "mean inspections"] {
        assert!(r.contains(name), "{r}");
    }
}

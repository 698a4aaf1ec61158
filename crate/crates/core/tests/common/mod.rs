#![allow(dead_code)]

use dreamspace_core::matrix::Matrix;
use dreamspace_core::rng::{gaussian, seeded};
use dreamspace_core::space::{Channel, DesignSolution, ParamSet, PropertySet, SolutionSpace};
use rand::Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| gaussian(&mut rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn properties_from(v: &[f64]) -> PropertySet {
    PropertySet {
        center_of_mass: [v[0], v[1], v[2]],
        weight: v[3].abs() + 1.0,
        overhang_percentage: v[4].abs().min(100.0),
        surface_area: v[5].abs() + 1.0,
        area_volume_ratio: v[6],
        max_displacement: v[7],
        max_strain: v[8],
        total_strain: v[9],
        max_vonmises: v[10],
        objective_value: v[11],
    }
}

pub fn solution(id: String, props: PropertySet) -> DesignSolution {
    DesignSolution {
        mesh_ref: format!("meshes/{id}.obj"),
        id,
        params: ParamSet {
            middle_load: 100.0,
            outer_load: 100.0,
            voxel_size: 1.0,
            volume_minimization: 0,
        },
        properties: props,
    }
}

/// Random population: metric values from per-cluster centers plus noise,
/// shape histograms from a softmax of random logits.
pub fn random_space(n: usize, bins: usize, centers: usize, seed: u64) -> SolutionSpace {
    let mut rng = seeded(seed);
    let c: Vec<Vec<f64>> = (0..centers.max(1))
        .map(|_| (0..12).map(|_| 10.0 * gaussian(&mut rng)).collect())
        .collect();
    let mut solutions = Vec::with_capacity(n);
    let mut shapes = Vec::with_capacity(n);
    for i in 0..n {
        let center = &c[rng.random_range(0..c.len())];
        let v: Vec<f64> = center.iter().map(|x| x + gaussian(&mut rng)).collect();
        solutions.push(solution(format!("s{i:05}"), properties_from(&v)));
        let logits: Vec<f64> = (0..bins).map(|_| gaussian(&mut rng)).collect();
        let e: Vec<f64> = logits.iter().map(|x| x.exp()).collect();
        let total: f64 = e.iter().sum();
        shapes.push(e.into_iter().map(|x| x / total).collect());
    }
    SolutionSpace::build(solutions, shapes, &Channel::ALL).unwrap()
}

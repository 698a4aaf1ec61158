//! Exact (O(N²)) t-SNE into three dimensions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, Embedding, EmbeddingMethod, Progress};
use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Accepted absolute error on the achieved perplexity.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
/// Duplicate rows are treated as this fraction of the smallest positive distance apart.
const DUPLICATE_DISTANCE_FACTOR: f64 = 1e-3;
const OUTPUT_DIMS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(contract(format!("t-SNE needs at least 4 points, got {n}")));
        }
        let max = (n - 1) as f64 / 3.0;
        if !(self.perplexity > 1.0 && self.perplexity <= max) {
            return Err(contract(format!(
                "perplexity {} outside (1, {max}] for {n} points",
                self.perplexity
            )));
        }
        if self.iterations < 250 {
            return Err(contract("t-SNE needs at least 250 iterations"));
        }
        Ok(())
    }
}

/// Outcome of the per-point bandwidth search.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Precision `1 / (2σ²)`; zero means a uniform distribution.
    pub beta: f64,
    pub sigma: f64,
    pub perplexity: f64,
    /// Target after clamping into the attainable range.
    pub target: f64,
    pub clamped: bool,
    pub converged: bool,
    /// Conditional neighbor probabilities, aligned with the input distances.
    pub probabilities: Vec<f64>,
}

fn conditional(shifted_sq: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = shifted_sq.iter().map(|s| libm::exp(-beta * s)).collect();
    let sum: f64 = p.iter().sum();
    let mut h = 0.0;
    for v in &mut p {
        *v /= sum;
        if *v > 0.0 {
            h -= *v * libm::log2(*v);
        }
    }
    (p, libm::exp2(h))
}

/// Finds the Gaussian bandwidth for one point so that the conditional
/// neighbor distribution has the requested perplexity (`2^H`).
///
/// Bisection runs on `ln β` after a geometric bracket search, at most 50
/// steps in total. Targets outside the attainable range (between the number
/// of nearest ties and the number of neighbors) are clamped.
pub fn calibrate_sigma(distances: &[f64], perplexity: f64) -> Result<Calibration> {
    if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(contract("distances must be finite and non-negative"));
    }
    if !distances.iter().any(|&d| d > 0.0) {
        return Err(contract("calibration needs at least one positive distance"));
    }
    let sq: Vec<f64> = distances.iter().map(|d| d * d).collect();
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq.iter().map(|s| s - min).collect();
    let n = distances.len() as f64;
    let ties = shifted.iter().filter(|&&s| s == 0.0).count() as f64;

    let finish = |beta: f64, target: f64, clamped: bool, converged: bool| {
        let (p, perp) = if beta.is_infinite() {
            let p: Vec<f64> = shifted
                .iter()
                .map(|&s| if s == 0.0 { 1.0 / ties } else { 0.0 })
                .collect();
            (p, ties)
        } else {
            conditional(&shifted, beta)
        };
        Calibration {
            beta,
            sigma: if beta == 0.0 {
                f64::INFINITY
            } else {
                libm::sqrt(1.0 / (2.0 * beta))
            },
            perplexity: perp,
            target,
            clamped,
            converged,
            probabilities: p,
        }
    };

    if perplexity >= n - PERPLEXITY_TOLERANCE || ties == n {
        return Ok(finish(0.0, n, perplexity > n + PERPLEXITY_TOLERANCE, true));
    }
    if perplexity <= ties + PERPLEXITY_TOLERANCE {
        return Ok(finish(
            f64::INFINITY,
            ties,
            perplexity < ties - PERPLEXITY_TOLERANCE,
            true,
        ));
    }

    let positive: Vec<f64> = shifted.iter().copied().filter(|&s| s > 0.0).collect();
    let scale = positive.iter().sum::<f64>() / positive.len() as f64;
    let mut ln_beta = -libm::log(scale);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best = (f64::INFINITY, ln_beta);
    for _ in 0..MAX_BISECTION_STEPS {
        let (_, perp) = conditional(&shifted, libm::exp(ln_beta));
        let err = (perp - perplexity).abs();
        if err < best.0 {
            best = (err, ln_beta);
        }
        if err <= PERPLEXITY_TOLERANCE {
            break;
        }
        if perp > perplexity {
            lo = ln_beta;
            ln_beta = if hi.is_finite() { 0.5 * (lo + hi) } else { ln_beta + 2.0 };
        } else {
            hi = ln_beta;
            ln_beta = if lo.is_finite() { 0.5 * (lo + hi) } else { ln_beta - 2.0 };
        }
    }
    Ok(finish(
        libm::exp(best.1),
        perplexity,
        false,
        best.0 <= PERPLEXITY_TOLERANCE,
    ))
}

/// Pairwise Euclidean distances with duplicates moved to a small positive
/// separation.
fn input_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    let mut min_pos = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = libm::sqrt(s);
            d.set(i, j, v);
            d.set(j, i, v);
            if v > 0.0 {
                min_pos = min_pos.min(v);
            }
        }
    }
    let fill = if min_pos.is_finite() {
        min_pos * DUPLICATE_DISTANCE_FACTOR
    } else {
        1.0
    };
    for i in 0..n {
        for j in 0..n {
            if i != j && d.get(i, j) == 0.0 {
                d.set(i, j, fill);
            }
        }
    }
    d
}

/// Symmetric joint probabilities `(P_j|i + P_i|j) / 2N` and the per-point
/// calibrations.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<(Matrix, Vec<Calibration>)> {
    x.check_finite()?;
    let n = x.rows();
    if n < 2 {
        return Err(contract("joint probabilities need at least two points"));
    }
    let d = input_distances(x);
    let mut cond = Matrix::zeros(n, n);
    let mut cals = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| d.get(i, j)));
        let cal = calibrate_sigma(&row, perplexity)?;
        for (k, j) in (0..n).filter(|&j| j != i).enumerate() {
            cond.set(i, j, cal.probabilities[k]);
        }
        cals.push(cal);
    }
    let mut p = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p.set(i, j, (cond.get(i, j) + cond.get(j, i)) / denom);
            }
        }
    }
    Ok((p, cals))
}

fn student_kernel(y: &Matrix) -> (Matrix, f64) {
    let n = y.rows();
    let mut num = Matrix::zeros(n, n);
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = 1.0 / (1.0 + s);
            num.set(i, j, v);
            num.set(j, i, v);
            z += 2.0 * v;
        }
    }
    (num, z)
}

/// `KL(P || Q)` for the Student-t similarities of `y`.
pub fn tsne_kl(p: &Matrix, y: &Matrix) -> f64 {
    let (num, z) = student_kernel(y);
    let n = y.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                let q = (num.get(i, j) / z).max(f64::MIN_POSITIVE);
                kl += pij * libm::log(pij / q);
            }
        }
    }
    kl
}

/// Analytic gradient `4 Σ_j (p_ij − q_ij)(1 + |y_i − y_j|²)⁻¹ (y_i − y_j)`.
pub fn tsne_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    let (num, z) = student_kernel(y);
    gradient_with(p, y, &num, z, 1.0)
}

fn gradient_with(p: &Matrix, y: &Matrix, num: &Matrix, z: f64, exaggeration: f64) -> Matrix {
    let (n, dims) = (y.rows(), y.cols());
    let mut g = Matrix::zeros(n, dims);
    for i in 0..n {
        for j in i + 1..n {
            let nij = num.get(i, j);
            let f = 4.0 * (exaggeration * p.get(i, j) - nij / z) * nij;
            for k in 0..dims {
                let diff = y.get(i, k) - y.get(j, k);
                g.set(i, k, g.get(i, k) + f * diff);
                g.set(j, k, g.get(j, k) - f * diff);
            }
        }
    }
    g
}

/// Exact t-SNE: early exaggeration, momentum switch and per-coordinate gains.
/// The KL trace holds the divergence of the initial layout followed by the
/// divergence after every update (`iterations + 1` entries).
pub fn tsne(x: &Matrix, cfg: &TsneConfig, progress: &mut dyn FnMut(Progress)) -> Result<Embedding> {
    let n = x.rows();
    cfg.validate(n)?;
    let (p, _) = joint_probabilities(x, cfg.perplexity)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut y = Matrix::zeros(n, OUTPUT_DIMS);
    for i in 0..n {
        for k in 0..OUTPUT_DIMS {
            y.set(i, k, cfg.init_std * rng::gaussian(&mut rng));
        }
    }
    let mut update = Matrix::zeros(n, OUTPUT_DIMS);
    let mut gains = vec![1.0_f64; n * OUTPUT_DIMS];
    let mut kl_trace = Vec::with_capacity(cfg.iterations + 1);
    let (mut num, mut z) = student_kernel(&y);
    kl_trace.push(kl_from(&p, &num, z));
    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iterations {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        let g = gradient_with(&p, &y, &num, z, exaggeration);
        for i in 0..n {
            for k in 0..OUTPUT_DIMS {
                let idx = i * OUTPUT_DIMS + k;
                let gi = g.get(i, k);
                let ui = update.get(i, k);
                gains[idx] = if (gi > 0.0) != (ui > 0.0) {
                    gains[idx] + 0.2
                } else {
                    gains[idx] * 0.8
                };
                gains[idx] = gains[idx].max(0.01);
                let u = momentum * ui - cfg.learning_rate * gains[idx] * gi;
                update.set(i, k, u);
                y.set(i, k, y.get(i, k) + u);
            }
        }
        let mut mean = [0.0; OUTPUT_DIMS];
        for i in 0..n {
            for k in 0..OUTPUT_DIMS {
                mean[k] += y.get(i, k) / n as f64;
            }
        }
        for i in 0..n {
            for k in 0..OUTPUT_DIMS {
                y.set(i, k, y.get(i, k) - mean[k]);
            }
        }
        if let Err(Error::NonFinite { .. }) = y.check_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        (num, z) = student_kernel(&y);
        let kl = kl_from(&p, &num, z);
        if !kl.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        kl_trace.push(kl);
        if (it + 1) % 10 == 0 || it + 1 == cfg.iterations {
            progress(Progress::Tsne {
                iteration: it + 1,
                kl,
            });
        }
    }
    Ok(Embedding {
        coords: y,
        method: EmbeddingMethod::Tsne,
        diagnostics: Diagnostics::Tsne {
            kl_trace,
            perplexity: cfg.perplexity,
        },
    })
}

fn kl_from(p: &Matrix, num: &Matrix, z: f64) -> f64 {
    let n = p.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                let q = (num.get(i, j) / z).max(f64::MIN_POSITIVE);
                kl += pij * libm::log(pij / q);
            }
        }
    }
    kl
}

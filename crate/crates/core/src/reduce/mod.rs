//! Dimensionality reduction to the 3D presentation space.

mod pca;
mod tsne;

pub use pca::{pca, PcaModel};
pub use tsne::{
    calibrate_sigma, joint_probabilities, tsne, tsne_gradient, tsne_kl, Calibration, TsneConfig,
    PERPLEXITY_TOLERANCE,
};

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    Pca,
    #[default]
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Diagnostics {
    Pca {
        /// Variance captured by each kept component.
        explained_variance: Vec<f64>,
    },
    Tsne {
        /// KL divergence after every iteration.
        kl_trace: Vec<f64>,
        /// Perplexity actually used, after clamping to the population.
        perplexity: f64,
    },
    /// Populations too small for the requested method.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// N rows, one per input row.
    pub coords: Matrix,
    pub method: EmbeddingMethod,
    pub diagnostics: Diagnostics,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }
}

/// Progress notifications from long-running computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Progress {
    Phase { phase: Phase, percent: f64 },
    Tsne { iteration: usize, kl: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Score,
    Embed,
    Cluster,
    Layout,
}

/// Embeds rows into 3D with the requested method, degrading gracefully for
/// populations the method cannot handle: t-SNE needs at least five rows (so
/// that a perplexity above 1 fits under `(N-1)/3`) and falls back to PCA;
/// PCA needs two rows and three columns, otherwise coordinates are zero
/// padded.
pub fn embed_3d(
    x: &Matrix,
    method: EmbeddingMethod,
    cfg: &TsneConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<Embedding> {
    x.check_finite()?;
    let n = x.rows();
    if method == EmbeddingMethod::Tsne && n >= 5 {
        let mut cfg = cfg.clone();
        cfg.perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0);
        return tsne(x, &cfg, progress);
    }
    if n >= 2 && x.cols() >= 3 {
        let mut e = pca(x, 3)?.embedding;
        e.method = method;
        if method == EmbeddingMethod::Tsne {
            e.diagnostics = Diagnostics::Trivial;
        }
        return Ok(e);
    }
    let mut coords = Matrix::zeros(n, 3);
    if n >= 2 {
        let p = pca(x, x.cols())?;
        for i in 0..n {
            for j in 0..x.cols() {
                coords.set(i, j, p.embedding.coords.get(i, j));
            }
        }
    }
    Ok(Embedding {
        coords,
        method,
        diagnostics: Diagnostics::Trivial,
    })
}

use serde::{Deserialize, Serialize};

/// Per-feature z-score map. Zero-variance features get unit scale so they
/// normalise to 0 instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub const STD_FLOOR: f64 = 1e-9;

    /// Fit from rows of width `dim` stored contiguously.
    pub fn fit<'a>(dim: usize, chunks: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        let chunks: Vec<&[f64]> = chunks.into_iter().collect();
        for c in &chunks {
            for row in c.chunks_exact(dim) {
                for (s, x) in sum.iter_mut().zip(row) {
                    *s += x;
                }
                n += 1;
            }
        }
        let n_f = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n_f).collect();
        for c in &chunks {
            for row in c.chunks_exact(dim) {
                for ((q, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *q += (x - m) * (x - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|q| {
                let s = (q / n_f).sqrt();
                if s > Self::STD_FLOOR {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_into(&self, row: &[f64], out: &mut [f64]) {
        for i in 0..row.len() {
            out[i] = (row[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.normalize_into(row, &mut out);
        out
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        self.mean.len() == self.std.len()
            && self.std.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.mean.iter().all(|m| m.is_finite())
    }
}

use serde::{Deserialize, Serialize};

/// Running mean/variance normalizer (parallel-merge update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub clip: f64,
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 1e-4, mean: vec![0.0; dim], var: vec![1.0; dim], clip: 10.0, frozen: false }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if self.frozen || batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.dim();
        for d in 0..dim {
            let bm = batch.iter().map(|x| x[d]).sum::<f64>() / n;
            let bv = batch.iter().map(|x| (x[d] - bm).powi(2)).sum::<f64>() / n;
            let delta = bm - self.mean[d];
            let total = self.count + n;
            let m2 = self.var[d] * self.count + bv * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = m2 / total;
        }
        self.count += n;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s2))| ((v - m) / (s2 + 1e-8).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}

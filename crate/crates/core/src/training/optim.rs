use crate::encoder::{EncoderGradients, EncoderParams};

/// Linear warmup from 0 over `warmup` steps, then cosine decay reaching 0 at
/// step `total - 1`.
pub fn learning_rate_at(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    let last = total.saturating_sub(1);
    if step >= last {
        return 0.0;
    }
    let progress = (step - warmup) as f64 / (last - warmup) as f64;
    0.5 * peak * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Updates applied so far.
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &EncoderParams, beta1: f64, beta2: f64, epsilon: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderGradients, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let tensors = params.tensors_mut();
        for (k, (p, g)) in tensors.into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                if lr != 0.0 {
                    let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
                    p[i] -= lr * (update + self.weight_decay * p[i]);
                }
            }
        }
    }
}

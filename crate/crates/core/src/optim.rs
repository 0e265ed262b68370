//! Adam over a flat parameter vector.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update `p -= lr · m̂ / (√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter length changed");
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (eps * c2.sqrt()) as f32;
        let (b1, b2) = (beta1 as f32, beta2 as f32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook Adam in f64, written out per step.
    fn reference(p0: f64, grads: &[f64], lr: f64, cfg: AdamConfig) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = t as i32 + 1;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            p -= lr * mh / (vh.sqrt() + cfg.eps);
        }
        p
    }

    #[test]
    fn matches_textbook_update() {
        let cfg = AdamConfig::default();
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7];
        let mut opt = Adam::new(1, cfg);
        let mut p = [0.25f32];
        for &g in &grads {
            opt.step(&mut p, &[g as f32], 5e-4);
        }
        let want = reference(0.25, &grads, 5e-4, cfg);
        assert!((p[0] as f64 - want).abs() < 1e-6, "{} vs {want}", p[0]);
        assert_eq!(opt.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::new(2, AdamConfig::default());
        let mut p = [0.0f32, 0.0];
        opt.step(&mut p, &[4.0, -0.01], 0.1);
        assert!((p[0] + 0.1).abs() < 1e-5);
        assert!((p[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut opt = Adam::new(1, AdamConfig::default());
        let mut p = [3.0f32];
        for _ in 0..2000 {
            let g = 2.0 * p[0];
            opt.step(&mut p, &[g], 0.01);
        }
        assert!(p[0].abs() < 0.05);
    }
}

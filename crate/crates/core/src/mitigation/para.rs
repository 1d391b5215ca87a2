use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probabilistic adjacent-row refresh: each activation refreshes its neighbors with probability `p`.
#[derive(Debug, Clone)]
pub struct Para {
    p: f64,
    rng: ChaCha8Rng,
    pub triggers: u64,
    pub activations: u64,
}

/// `min(1, c / nrh)`.
pub fn para_probability(c: f64, nrh: u32) -> f64 {
    (c / f64::from(nrh.max(1))).min(1.0)
}

impl Para {
    pub fn new(p: f64, seed: u64) -> Self {
        assert!(p > 0.0 && p <= 1.0, "PARA probability must be in (0, 1]");
        Self { p, rng: ChaCha8Rng::seed_from_u64(seed), triggers: 0, activations: 0 }
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn on_activate(&mut self) -> bool {
        self.activations += 1;
        let hit = self.p >= 1.0 || self.rng.gen::<f64>() < self.p;
        self.triggers += u64::from(hit);
        hit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_trigger() {
        let mut p = Para::new(1.0, 0);
        assert!((0..100).all(|_| p.on_activate()));
    }

    #[test]
    fn trigger_rate_is_binomial() {
        let mut p = Para::new(0.05, 42);
        for _ in 0..1_000_000 {
            p.on_activate();
        }
        let rate = p.triggers as f64 / 1e6;
        assert!((rate / 0.05 - 1.0).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn seeded_replay() {
        let run = |seed| {
            let mut p = Para::new(0.1, seed);
            (0..1000).map(|_| p.on_activate()).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn default_probability() {
        assert!((para_probability(11.0, 128) - 11.0 / 128.0).abs() < 1e-15);
        assert_eq!(para_probability(11.0, 4), 1.0);
    }
}

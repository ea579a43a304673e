//! Differential evolution (rand/1/bin) with batch evaluation.
//!
//! Each generation draws from its own ChaCha8 stream, and all trial
//! vectors are generated before any is evaluated, so a parallel
//! [`Executor`] yields exactly the sequential result.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Evaluates a batch of candidate vectors.
pub trait Executor {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), candidates: &[Vec<f64>]) -> Vec<f64>;
}

/// In-order evaluation on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), candidates: &[Vec<f64>]) -> Vec<f64> {
        candidates.iter().map(|c| f(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeConfig {
    pub population: usize,
    pub max_iter: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: 20,
            max_iter: 50,
            f: 0.8,
            cr: 0.9,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_size(mut self, population: usize, max_iter: usize) -> Self {
        self.population = population;
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeError {
    #[error("population must be at least 4, got {0}")]
    Population(usize),
    #[error("bound {index} is invalid: [{lo}, {hi}]")]
    Bounds { index: usize, lo: f64, hi: f64 },
    #[error("F must lie in (0, 2] and CR in [0, 1]")]
    Coefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best objective after initialisation and after each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn rng_for(seed: u64, generation: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation);
    rng
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Minimises `f` over the box `bounds`.
pub fn minimize<E: Executor + ?Sized>(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    bounds: &[(f64, f64)],
    cfg: &DeConfig,
    exec: &E,
) -> Result<DeResult, DeError> {
    if cfg.population < 4 {
        return Err(DeError::Population(cfg.population));
    }
    if !(cfg.f > 0.0 && cfg.f <= 2.0) || !(0.0..=1.0).contains(&cfg.cr) {
        return Err(DeError::Coefficients);
    }
    for (index, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DeError::Bounds { index, lo, hi });
        }
    }
    let dim = bounds.len();
    let np = cfg.population;

    let mut rng = rng_for(cfg.seed, 0);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| sample(&mut rng, lo, hi)).collect())
        .collect();
    let mut fit = exec.evaluate(f, &pop);
    let mut evaluations = np;
    let best_of = |fit: &[f64]| -> usize {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] < fit[b] || (fit[b].is_nan() && !fit[i].is_nan()) {
                b = i;
            }
        }
        b
    };
    let mut history = Vec::with_capacity(cfg.max_iter + 1);
    history.push(fit[best_of(&fit)]);

    for generation in 1..=cfg.max_iter {
        let mut rng = rng_for(cfg.seed, generation as u64);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = |exclude: &[usize]| loop {
                    let r = rng.random_range(0..np);
                    if !exclude.contains(&r) {
                        break r;
                    }
                };
                let r1 = pick(&[i]);
                let r2 = pick(&[i, r1]);
                let r3 = pick(&[i, r1, r2]);
                let jrand = if dim > 0 { rng.random_range(0..dim) } else { 0 };
                (0..dim)
                    .map(|j| {
                        let (lo, hi) = bounds[j];
                        let cross: f64 = rng.random();
                        if j == jrand || cross < cfg.cr {
                            (pop[r1][j] + cfg.f * (pop[r2][j] - pop[r3][j])).clamp(lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit = exec.evaluate(f, &trials);
        evaluations += np;
        for (i, (trial, tf)) in trials.into_iter().zip(trial_fit).enumerate() {
            if tf <= fit[i] || fit[i].is_nan() {
                pop[i] = trial;
                fit[i] = tf;
            }
        }
        history.push(fit[best_of(&fit)]);
    }
    let b = best_of(&fit);
    Ok(DeResult {
        best: pop[b].clone(),
        best_value: fit[b],
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_converges() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>();
        let r = minimize(&f, &[(-2.0, 2.0); 3], &DeConfig::default().with_size(20, 200), &Sequential).unwrap();
        assert!(r.best_value < 1e-10, "{}", r.best_value);
        assert_eq!(r.history.len(), 201);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn degenerate_box_returns_point() {
        let f = |x: &[f64]| x[0] + 2.0 * x[1];
        let r = minimize(&f, &[(0.5, 0.5), (0.25, 0.25)], &DeConfig::default(), &Sequential).unwrap();
        assert_eq!(r.best, [0.5, 0.25]);
        assert_eq!(r.best_value, 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        let f = |_: &[f64]| 0.0;
        assert!(minimize(&f, &[(0.0, 1.0)], &DeConfig::default().with_size(3, 1), &Sequential).is_err());
        assert!(minimize(&f, &[(1.0, 0.0)], &DeConfig::default(), &Sequential).is_err());
    }
}

//! Parallel batch evaluation for the optimizers.

use platoon_core::de::Executor;
use rayon::prelude::*;

/// Evaluates a batch on the rayon pool; results keep the input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), candidates: &[Vec<f64>]) -> Vec<f64> {
        candidates.par_iter().map(|c| f(c)).collect()
    }
}

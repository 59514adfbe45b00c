//! Per-pair calibration of the FVDM with a real-coded genetic algorithm.
//!
//! The objective is the mixed headway error between the measured follower and
//! a follower simulated behind the measured leader. Genes are
//! `[α, β, b_c, b_f, V0, m, τ]`; τ lives on a 0.1 s lattice.

mod ga;
mod objective;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carfollowing::FvdmParams;

pub use ga::{calibrate_ga, calibrate_ga_with_initial};
pub use objective::{error_abs, error_mixed, error_rel, evaluate_fitness, COLLISION_PENALTY};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("simulated and measured headways differ in length ({sim} vs {data})")]
    LengthMismatch { sim: usize, data: usize },
    #[error("measured headway at sample {0} is not positive")]
    NonpositiveHeadway(usize),
    #[error("pair window has {0} samples, need at least 2")]
    PairTooShort(usize),
    #[error("invalid bound for {0}")]
    InvalidBounds(&'static str),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub stagnation_limit: usize,
    pub mutation_probability: f64,
    /// Mutation standard deviation as a fraction of each gene's range.
    pub mutation_scale: f64,
    pub crossover_probability: f64,
    pub elitism_count: usize,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 50,
            max_generations: 1000,
            stagnation_limit: 100,
            mutation_probability: 0.1,
            mutation_scale: 0.1,
            crossover_probability: 0.9,
            elitism_count: 2,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let fail = |m: &str| Err(CalibrationError::InvalidConfig(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.max_generations == 0 || self.stagnation_limit == 0 {
            return fail("max_generations and stagnation_limit must be positive");
        }
        if !(self.mutation_probability > 0.0 && self.mutation_probability <= 1.0) {
            return fail("mutation_probability must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return fail("crossover_probability must lie in [0, 1]");
        }
        if !(self.mutation_scale > 0.0 && self.mutation_scale.is_finite()) {
            return fail("mutation_scale must be positive");
        }
        if self.elitism_count == 0 || self.elitism_count >= self.population_size {
            return fail("elitism_count must lie in [1, population_size)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergedBy {
    MaxGenerations,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta: FvdmParams,
    pub mixed_error: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub generations_run: usize,
    pub converged_by: ConvergedBy,
    /// Best fitness of each generation.
    pub fitness_history: Vec<f64>,
}

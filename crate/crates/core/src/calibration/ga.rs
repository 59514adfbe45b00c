use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use super::objective::Objective;
use super::{CalibrationError, CalibrationResult, ConvergedBy, GaConfig};
use crate::carfollowing::{FvdmParams, ParamBounds};
use crate::trajectory_io::VehiclePair;

type Genes = [f64; FvdmParams::GENES];

const TAU_GENE: usize = 6;
const TAU_STEP: f64 = 0.1;
/// Keeps selection weights `1/(f + ε)` finite at a perfect fit.
const SELECTION_EPS: f64 = 1e-12;

fn snap(mut g: Genes, bounds: &[[f64; 2]; FvdmParams::GENES]) -> Genes {
    let [lo, hi] = bounds[TAU_GENE];
    let t = (g[TAU_GENE] / TAU_STEP).round() * TAU_STEP;
    g[TAU_GENE] = (t * 1e9).round() / 1e9;
    g[TAU_GENE] = g[TAU_GENE].clamp(lo, hi);
    g
}

/// Gaussian step conditioned on landing inside `[lo, hi]`, by rejection.
/// Falls back to clamping after a bounded number of draws.
fn truncated_step(rng: &mut ChaCha8Rng, x: f64, n: &Normal<f64>, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    for _ in 0..64 {
        let y = x + n.sample(rng);
        if (lo..=hi).contains(&y) {
            return y;
        }
    }
    (x + n.sample(rng)).clamp(lo, hi)
}

/// Generation `g` draws from stream `g`; stream 0 builds the initial
/// population. Draws never depend on evaluation order.
fn stream(seed: u64, generation: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation);
    rng
}

fn breed(
    rng: &mut ChaCha8Rng,
    pop: &[Genes],
    fitness: &[f64],
    bounds: &[[f64; 2]; FvdmParams::GENES],
    cfg: &GaConfig,
) -> Vec<Genes> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut next: Vec<Genes> = order[..cfg.elitism_count].iter().map(|&i| pop[i]).collect();

    let weights = fitness.iter().map(|f| 1.0 / (f + SELECTION_EPS));
    let pick = WeightedIndex::new(weights).expect("fitness values are finite and non-negative");
    let sigma: Vec<Normal<f64>> = bounds
        .iter()
        .map(|[lo, hi]| Normal::new(0.0, cfg.mutation_scale * (hi - lo)).expect("finite scale"))
        .collect();

    while next.len() < cfg.population_size {
        let mut a = pop[pick.sample(rng)];
        let mut b = pop[pick.sample(rng)];
        if rng.random::<f64>() < cfg.crossover_probability {
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                if rng.random::<bool>() {
                    std::mem::swap(x, y);
                }
            }
        }
        for child in [a, b] {
            let mut child = child;
            for (c, (&[lo, hi], n)) in child.iter_mut().zip(bounds.iter().zip(&sigma)) {
                if rng.random::<f64>() < cfg.mutation_probability {
                    *c = truncated_step(rng, *c, n, lo, hi);
                }
            }
            next.push(snap(child, bounds));
        }
    }
    next.truncate(cfg.population_size);
    next
}

/// Fit one pair. Deterministic in `cfg.rng_seed`.
pub fn calibrate_ga(
    pair: &VehiclePair,
    bounds: &ParamBounds,
    cfg: &GaConfig,
) -> Result<CalibrationResult, CalibrationError> {
    calibrate_ga_with_initial(pair, bounds, cfg, &[])
}

/// [`calibrate_ga`] with some initial individuals supplied; the rest of the
/// first generation is drawn uniformly from the box.
pub fn calibrate_ga_with_initial(
    pair: &VehiclePair,
    bounds: &ParamBounds,
    cfg: &GaConfig,
    seeds: &[FvdmParams],
) -> Result<CalibrationResult, CalibrationError> {
    cfg.validate()?;
    if let Some(name) = bounds.invalid_parameter() {
        return Err(CalibrationError::InvalidBounds(name));
    }
    if seeds.len() > cfg.population_size || seeds.iter().any(|s| !bounds.contains(s)) {
        return Err(CalibrationError::InvalidConfig(
            "initial individuals must fit the population and the bounds".into(),
        ));
    }
    let objective = Objective::new(pair)?;
    let box_ = bounds.as_array();

    let mut rng = stream(cfg.rng_seed, 0);
    let mut pop: Vec<Genes> = seeds.iter().map(|s| s.to_genes()).collect();
    while pop.len() < cfg.population_size {
        let mut g = [0.0; FvdmParams::GENES];
        for (x, [lo, hi]) in g.iter_mut().zip(&box_) {
            *x = if hi > lo { rng.random_range(*lo..=*hi) } else { *lo };
        }
        pop.push(snap(g, &box_));
    }

    let mut history = Vec::new();
    let mut best: Option<(f64, Genes)> = None;
    let mut stagnant = 0;
    let converged_by = loop {
        let fitness: Vec<f64> = pop
            .par_iter()
            .map(|g| objective.fitness(&FvdmParams::from_genes(g)))
            .collect();
        let (i, &f) = fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("population is non-empty");
        match history.last() {
            Some(&prev) if f == prev => stagnant += 1,
            _ => stagnant = 0,
        }
        history.push(f);
        if best.is_none_or(|(b, _)| f < b) {
            best = Some((f, pop[i]));
        }
        if stagnant >= cfg.stagnation_limit {
            break ConvergedBy::Stagnation;
        }
        if history.len() == cfg.max_generations {
            break ConvergedBy::MaxGenerations;
        }
        let mut rng = stream(cfg.rng_seed, history.len() as u64);
        pop = breed(&mut rng, &pop, &fitness, &box_, cfg);
    };

    let (_, genes) = best.expect("at least one generation ran");
    let theta = FvdmParams::from_genes(&genes);
    let (mixed_error, abs_error, rel_error) = objective.all_errors(&theta);
    Ok(CalibrationResult {
        theta,
        mixed_error,
        abs_error,
        rel_error,
        generations_run: history.len(),
        converged_by,
        fitness_history: history,
    })
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::manifest::StageRecorder;
use super::synthetic::{ngsim_csv, Scenario};
use super::{
    parse_flag_json, prepare_out, read, read_text, write_file, write_json, CalibrateArgs, CliError, GaFlags,
    IngestArgs, OmegaFlags, OptimizeArgs, PairArgs, PipelineArgs, SimulateArgs, SmoothArgs, SmoothingFlags,
    StabilityArgs,
};
use crate::calibration::{calibrate_ga, ConvergedBy, GaConfig};
use crate::carfollowing::{
    simulate_platoon_run, Collision, FvdmParams, LeaderProfile, ParamBounds, PlatoonSpec, PlatoonVehicle,
};
use crate::smoothing::{differentiate, exceedance_fraction, smooth_trajectory, SmoothingConfig};
use crate::stability::{
    critical_frequency, linearize_hdv, numeric_critical_frequency, optimize_gains, platoon_critical_frequency_on,
    vehicle_critical_frequency, EquilibriumSpec, GainGridSpec, GainSearchConfig, GainSearchResult, GridSpec,
    HeadwayBounds, LinearizedHdv,
};
use crate::trajectory_io::{
    build_trajectories, pair_index, pair_leader_follower, parse_canonical_csv, parse_ngsim_csv, resolve_pairs,
    write_trajectories_csv, PairDiagnostic, PairIndexEntry, Trajectory, Units,
};
use crate::DT;

const TRAJECTORIES: &str = "trajectories.csv";
const PAIRS: &str = "pairs.json";
const INVENTORY: &str = "inventory.json";
const STABILITY: &str = "stability.json";
const GAIN_SEARCH: &str = "gain_search.json";
const ACCEL_LIMIT: f64 = 3.0;

fn load_trajectories(text: &str) -> Result<BTreeMap<u64, Trajectory>, CliError> {
    Ok(build_trajectories(&parse_canonical_csv(text)?)?.trajectories)
}

#[derive(Debug, Serialize)]
struct IngestReport {
    rows: usize,
    vehicles: usize,
    fragments_discarded: usize,
    units: Units,
}

pub(crate) fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let mut rec = StageRecorder::new("ingest", a, None)?;
    let bytes = read(&a.input)?;
    rec.input(&bytes);
    let text = String::from_utf8_lossy(&bytes);
    let records = parse_ngsim_csv(&text, a.units)?;
    let built = build_trajectories(&records)?;

    prepare_out(&a.out)?;
    write_file(
        &a.out.join(TRAJECTORIES),
        &write_trajectories_csv(built.trajectories.values(), DT),
    )?;
    write_json(
        &a.out.join("ingest_report.json"),
        &IngestReport {
            rows: records.len(),
            vehicles: built.trajectories.len(),
            fragments_discarded: built.fragments_discarded,
            units: a.units,
        },
    )?;
    rec.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SmoothingReport {
    /// From the acceleration column as delivered.
    raw_exceedance_3ms2: f64,
    /// From second differences of the raw positions.
    raw_recomputed_exceedance_3ms2: f64,
    smoothed_exceedance_3ms2: f64,
    n_vehicles: usize,
    /// Vehicles with fewer than two samples, which cannot be differentiated.
    vehicles_dropped: usize,
}

pub(crate) fn smooth(a: &SmoothArgs) -> Result<(), CliError> {
    let mut rec = StageRecorder::new("smooth", a, None)?;
    let text = read_text(&a.input)?;
    rec.input(text.as_bytes());
    let trajs = load_trajectories(&text)?;
    let SmoothingFlags { tx, tv, ta } = a.smoothing;
    let cfg = SmoothingConfig {
        t_x: tx,
        t_v: tv,
        t_a: ta,
        dt: DT,
    };

    let usable: Vec<&Trajectory> = trajs.values().filter(|t| t.len() >= 2).collect();
    let mut recomputed = Vec::new();
    let mut smoothed = Vec::with_capacity(usable.len());
    for t in &usable {
        recomputed.extend(differentiate(&differentiate(&t.positions, DT)?, DT)?);
        smoothed.push(smooth_trajectory(t, &cfg)?);
    }
    let report = SmoothingReport {
        raw_exceedance_3ms2: exceedance_fraction(usable.iter().flat_map(|t| &t.accelerations), ACCEL_LIMIT),
        raw_recomputed_exceedance_3ms2: exceedance_fraction(&recomputed, ACCEL_LIMIT),
        smoothed_exceedance_3ms2: exceedance_fraction(smoothed.iter().flat_map(|t| &t.accelerations), ACCEL_LIMIT),
        n_vehicles: smoothed.len(),
        vehicles_dropped: trajs.len() - usable.len(),
    };

    prepare_out(&a.out)?;
    write_file(&a.out.join(TRAJECTORIES), &write_trajectories_csv(&smoothed, DT))?;
    write_json(&a.out.join("smoothing_report.json"), &report)?;
    rec.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PairingSummary<'a> {
    accepted: usize,
    calibration_ready: usize,
    rejected: &'a [PairDiagnostic],
}

pub(crate) fn pair(a: &PairArgs) -> Result<(), CliError> {
    let mut rec = StageRecorder::new("pair", a, None)?;
    let text = read_text(&a.input)?;
    rec.input(text.as_bytes());
    let trajs = load_trajectories(&text)?;
    let report = pair_leader_follower(&trajs, a.lane);
    let index = pair_index(&report.pairs);

    prepare_out(&a.out)?;
    write_json(&a.out.join(PAIRS), &index)?;
    write_json(
        &a.out.join("pairing_report.json"),
        &PairingSummary {
            accepted: index.len(),
            calibration_ready: index.iter().filter(|e| e.calibration_ready).count(),
            rejected: &report.rejected,
        },
    )?;
    rec.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mixed: f64,
    pub abs: f64,
    pub rel: f64,
}

/// One entry of the model inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub leader_id: u64,
    pub follower_id: u64,
    pub theta: FvdmParams,
    pub errors: ErrorSummary,
    pub generations_run: usize,
    pub converged_by: ConvergedBy,
}

fn ga_setup(seed: u64, flags: &GaFlags) -> Result<(ParamBounds, GaConfig), CliError> {
    let mut bounds: ParamBounds = match &flags.bounds {
        Some(text) => parse_flag_json("bounds", text)?,
        None => ParamBounds::default(),
    };
    if flags.pin_tau {
        bounds = bounds.with_tau_pinned();
    }
    if let Some(name) = bounds.invalid_parameter() {
        return Err(CliError::Usage(format!("--bounds: invalid range for {name}")));
    }
    let defaults = GaConfig::default();
    let cfg = GaConfig {
        population_size: flags.population.unwrap_or(defaults.population_size),
        max_generations: flags.max_generations.unwrap_or(defaults.max_generations),
        rng_seed: seed,
        ..defaults
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((bounds, cfg))
}

pub(crate) fn calibrate(a: &CalibrateArgs) -> Result<Vec<CalibratedModel>, CliError> {
    let (bounds, cfg) = ga_setup(a.seed, &a.ga)?;
    let mut rec = StageRecorder::new("calibrate", a, Some(a.seed))?;
    let text = read_text(&a.input)?;
    let index_bytes = read(&a.pairs)?;
    rec.input(text.as_bytes());
    rec.input(&index_bytes);
    let trajs = load_trajectories(&text)?;
    let index: Vec<PairIndexEntry> = serde_json::from_slice(&index_bytes)?;
    let ready: Vec<PairIndexEntry> = index.into_iter().filter(|e| e.calibration_ready).collect();
    if ready.is_empty() {
        return Err(CliError::Data("no calibration-ready pairs in the index".into()));
    }
    let pairs = resolve_pairs(&ready, &trajs)?;

    let mut models = Vec::with_capacity(pairs.len());
    let mut traces = String::from("leader_id,follower_id,generation,best_fitness\n");
    for p in &pairs {
        let r = calibrate_ga(p, &bounds, &cfg)?;
        let (leader_id, follower_id) = (p.leader.vehicle_id, p.follower.vehicle_id);
        for (g, f) in r.fitness_history.iter().enumerate() {
            traces.push_str(&format!("{leader_id},{follower_id},{g},{f}\n"));
        }
        models.push(CalibratedModel {
            leader_id,
            follower_id,
            theta: r.theta,
            errors: ErrorSummary {
                mixed: r.mixed_error,
                abs: r.abs_error,
                rel: r.rel_error,
            },
            generations_run: r.generations_run,
            converged_by: r.converged_by,
        });
    }

    prepare_out(&a.out)?;
    write_json(&a.out.join(INVENTORY), &models)?;
    write_file(&a.out.join("ga_traces.csv"), &traces)?;
    rec.finish(&a.out)?;
    Ok(models)
}

/// Operating point as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumFlag {
    pub v_star: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default)]
    pub lambda3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStability {
    pub leader_id: u64,
    pub follower_id: u64,
    pub theta: FvdmParams,
    pub equilibrium: EquilibriumSpec,
    #[serde(flatten)]
    pub linearized: LinearizedHdv,
    pub string_stable: bool,
    /// Closed form where it applies, numeric crossover otherwise.
    pub omega0: f64,
    pub omega0_numeric: f64,
    /// Only for `τ = 0`, `λ2 = 0`.
    pub omega0_closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub equilibrium: EquilibriumFlag,
    /// Operating point of the CAV; without an explicit `lambda3` its offset is
    /// the mean of the drivers' offsets.
    pub cav_equilibrium: EquilibriumSpec,
    pub grid: GridSpec,
    pub omega0_h: f64,
    pub models: Vec<ModelStability>,
}

fn omega_grid(f: &OmegaFlags) -> Result<GridSpec, CliError> {
    let grid = GridSpec {
        omega_min: f.omega_min,
        omega_max: f.omega_max,
        points: f.omega_points,
    };
    grid.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(grid)
}

pub(crate) fn stability(a: &StabilityArgs) -> Result<StabilityReport, CliError> {
    let eq: EquilibriumFlag = parse_flag_json("equilibrium", &a.equilibrium)?;
    let grid = omega_grid(&a.omega)?;
    let mut rec = StageRecorder::new("stability", a, None)?;
    let bytes = read(&a.input)?;
    rec.input(&bytes);
    let inventory: Vec<CalibratedModel> = serde_json::from_slice(&bytes)?;
    if inventory.is_empty() {
        return Err(CliError::Data("model inventory is empty".into()));
    }

    let mut models = Vec::with_capacity(inventory.len());
    for m in &inventory {
        let spec = match eq.lambda3 {
            Some(lambda3) => EquilibriumSpec {
                v_star: eq.v_star,
                lambda2: eq.lambda2,
                lambda3,
            },
            None => EquilibriumSpec::consistent_with(&m.theta, eq.v_star, eq.lambda2)?,
        };
        let lin = linearize_hdv(&m.theta, &spec)?;
        let omega0 = vehicle_critical_frequency(&lin, &grid);
        models.push(ModelStability {
            leader_id: m.leader_id,
            follower_id: m.follower_id,
            theta: m.theta,
            equilibrium: spec,
            linearized: lin,
            string_stable: omega0 == 0.0,
            omega0,
            omega0_numeric: numeric_critical_frequency(&lin, &grid),
            omega0_closed_form: (lin.tau == 0.0 && lin.lambda2 == 0.0).then(|| critical_frequency(&lin)),
        });
    }
    let lins: Vec<LinearizedHdv> = models.iter().map(|m| m.linearized).collect();
    let lambda3 = eq
        .lambda3
        .unwrap_or_else(|| models.iter().map(|m| m.equilibrium.lambda3).sum::<f64>() / models.len() as f64);
    let report = StabilityReport {
        equilibrium: eq,
        cav_equilibrium: EquilibriumSpec {
            v_star: eq.v_star,
            lambda2: eq.lambda2,
            lambda3,
        },
        grid,
        omega0_h: platoon_critical_frequency_on(&lins, &grid)?,
        models,
    };

    prepare_out(&a.out)?;
    write_json(&a.out.join(STABILITY), &report)?;
    rec.finish(&a.out)?;
    Ok(report)
}

pub(crate) fn optimize(a: &OptimizeArgs) -> Result<GainSearchResult, CliError> {
    let gains: GainGridSpec = match &a.gains.gain_grid {
        Some(text) => parse_flag_json("gain-grid", text)?,
        None => GainGridSpec::default(),
    };
    let cfg = GainSearchConfig {
        gains,
        omega: omega_grid(&a.omega)?,
        delta_override: a.gains.delta,
    };
    let mut rec = StageRecorder::new("optimize-gains", a, None)?;
    let bytes = read(&a.input)?;
    rec.input(&bytes);
    let report: StabilityReport = serde_json::from_slice(&bytes)?;
    let lins: Vec<LinearizedHdv> = report.models.iter().map(|m| m.linearized).collect();
    let bounds = HeadwayBounds {
        min: a.gains.headway_min,
        max: a.gains.headway_max,
    };
    let result = optimize_gains(&lins, &report.cav_equilibrium, bounds, a.gains.beta, &cfg)?;

    prepare_out(&a.out)?;
    write_json(&a.out.join(GAIN_SEARCH), &result)?;
    for (i, k1) in result.k1_values.iter().enumerate() {
        write_file(&a.out.join(format!("heatmap_k1={k1}.csv")), &result.heatmap_csv(i))?;
    }
    rec.finish(&a.out)?;
    Ok(result)
}

/// Input of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRequest {
    pub platoon: PlatoonSpec,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub frames: usize,
    pub collision: Option<Collision>,
    /// Per follower, largest deviation of its headway from the initial one, m.
    pub max_abs_headway_deviation: Vec<f64>,
}

pub(crate) fn simulate(a: &SimulateArgs) -> Result<SimulationSummary, CliError> {
    let mut rec = StageRecorder::new("simulate", a, None)?;
    let bytes = read(&a.input)?;
    rec.input(&bytes);
    let req: SimulationRequest = serde_json::from_slice(&bytes)?;
    let run = simulate_platoon_run(&req.platoon, req.duration, req.dt)?;

    let deviation = run
        .trajectories
        .windows(2)
        .map(|w| {
            let h0 = w[0].positions[0] - w[1].positions[0];
            w[0].positions
                .iter()
                .zip(&w[1].positions)
                .map(|(l, f)| (l - f - h0).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let summary = SimulationSummary {
        frames: run.trajectories[0].len(),
        collision: run.collision,
        max_abs_headway_deviation: deviation,
    };

    prepare_out(&a.out)?;
    for (i, t) in run.trajectories.iter().enumerate() {
        write_file(
            &a.out.join(format!("vehicle_{i}.csv")),
            &write_trajectories_csv([t], req.dt),
        )?;
    }
    write_json(&a.out.join("summary.json"), &summary)?;
    rec.finish(&a.out)?;
    match run.collision {
        Some(c) => Err(CliError::Numeric(format!(
            "vehicle {} reached its leader at frame {}",
            c.vehicle, c.frame
        ))),
        None => Ok(summary),
    }
}

/// Lead-vehicle excitation of the validation run.
const VALIDATION_AMPLITUDE: f64 = 0.5;
const VALIDATION_OMEGA: f64 = 0.3;
const VALIDATION_DURATION: f64 = 100.0;

pub(crate) fn pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    let out = &a.out;
    prepare_out(out)?;
    let mut rec = StageRecorder::new("pipeline", a, Some(a.seed))?;
    let dir = |name: &str| out.join(name);

    let (source, units, default_eq) = if a.input == "synthetic" {
        let sc = Scenario::default();
        let d = dir("00_source");
        prepare_out(&d)?;
        let mut src = StageRecorder::new("synthetic", &sc, Some(a.seed))?;
        let csv = ngsim_csv(&sc, a.seed)?;
        src.input(csv.as_bytes());
        write_file(&d.join("source.csv"), &csv)?;
        write_json(&d.join("scenario.json"), &sc)?;
        src.finish(&d)?;
        let eq = EquilibriumFlag {
            v_star: sc.v_star,
            lambda2: 0.0,
            lambda3: None,
        };
        (d.join("source.csv"), Units::Feet, Some(eq))
    } else {
        (a.input.clone().into(), a.units.unwrap_or_default(), None)
    };
    rec.input(&read(&source)?);

    ingest(&IngestArgs {
        input: source,
        out: dir("01_ingest"),
        units,
    })?;
    smooth(&SmoothArgs {
        input: dir("01_ingest").join(TRAJECTORIES),
        out: dir("02_smooth"),
        smoothing: a.smoothing.clone(),
    })?;
    pair(&PairArgs {
        input: dir("02_smooth").join(TRAJECTORIES),
        out: dir("03_pair"),
        lane: a.lane,
    })?;
    let models = calibrate(&CalibrateArgs {
        input: dir("02_smooth").join(TRAJECTORIES),
        pairs: dir("03_pair").join(PAIRS),
        out: dir("04_calibrate"),
        seed: a.seed,
        ga: a.ga.clone(),
    })?;

    let equilibrium = match (&a.equilibrium, default_eq) {
        (Some(text), _) => text.clone(),
        (None, Some(eq)) => serde_json::to_string(&eq)?,
        (None, None) => return Err(CliError::Usage("--equilibrium is required for recorded data".into())),
    };
    let report = stability(&StabilityArgs {
        input: dir("04_calibrate").join(INVENTORY),
        out: dir("05_stability"),
        equilibrium,
        omega: a.omega.clone(),
    })?;

    let desired = report.cav_equilibrium.desired_headway();
    let search = optimize(&OptimizeArgs {
        input: dir("05_stability").join(STABILITY),
        out: dir("06_optimize"),
        gains: super::GainFlags {
            headway_min: a.headway_min.unwrap_or(0.5 * desired),
            headway_max: a.headway_max.unwrap_or(1.5 * desired),
            beta: a.beta.unwrap_or(1.0),
            gain_grid: a.gain_grid.clone(),
            delta: a.delta,
        },
        omega: a.omega.clone(),
    })?;

    let cav = PlatoonVehicle::Cav {
        gains: search.best_gains,
        lambda3: report.cav_equilibrium.lambda3,
    };
    let request = SimulationRequest {
        platoon: PlatoonSpec {
            lead_profile: LeaderProfile::Sinusoidal {
                mean_speed: report.equilibrium.v_star,
                amplitude: VALIDATION_AMPLITUDE,
                omega: VALIDATION_OMEGA,
            },
            vehicles: std::iter::once(cav)
                .chain(models.iter().map(|m| PlatoonVehicle::Hdv { params: m.theta }))
                .collect(),
            initial_speed: report.equilibrium.v_star,
        },
        duration: VALIDATION_DURATION,
        dt: DT,
    };
    let request_dir = dir("07_validate");
    prepare_out(&request_dir)?;
    let request_path = request_dir.join("request.json");
    write_json(&request_path, &request)?;
    let validation = simulate(&SimulateArgs {
        input: request_path,
        out: request_dir,
    });
    rec.finish(out)?;
    validation.map(drop)
}

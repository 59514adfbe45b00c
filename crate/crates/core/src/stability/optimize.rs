use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::{PlatoonScan, StabCount};
use super::transfer::cav_string_stable;
use super::{ControllerGains, EquilibriumSpec, GridSpec, LinearizedHdv, StabilityError};

/// One gain axis: an explicit list, or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl AxisSpec {
    /// Sorted, deduplicated values, rounded to 1e-12 so that `0.1 + 2·0.05`
    /// style accumulation does not leak into output labels.
    pub fn values(&self) -> Result<Vec<f64>, StabilityError> {
        let bad = || StabilityError::InvalidSetting(format!("bad gain axis {self:?}"));
        let mut v = match *self {
            AxisSpec::List(ref xs) => xs.clone(),
            AxisSpec::Range { start, stop, step } => {
                if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
                    return Err(bad());
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| start + i as f64 * step).collect()
            }
        };
        for x in v.iter_mut() {
            *x = (*x * 1e12).round() / 1e12;
        }
        if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(bad());
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainGridSpec {
    pub k1: AxisSpec,
    pub k2: AxisSpec,
    pub k3: AxisSpec,
}

impl Default for GainGridSpec {
    fn default() -> Self {
        GainGridSpec {
            k1: AxisSpec::Range {
                start: 0.0,
                stop: 1.0,
                step: 0.05,
            },
            k2: AxisSpec::Range {
                start: 0.02,
                stop: 2.0,
                step: 0.02,
            },
            k3: AxisSpec::Range {
                start: 0.02,
                stop: 2.0,
                step: 0.02,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GainSearchConfig {
    pub gains: GainGridSpec,
    pub omega: GridSpec,
    /// Replaces the headway margin `Δ` in `η = Δ/β`.
    pub delta_override: Option<f64>,
}

/// Full grid of counts indexed `[k1][k2][k3]`; `None` marks gains that are not
/// string stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSearchResult {
    pub k1_values: Vec<f64>,
    pub k2_values: Vec<f64>,
    pub k3_values: Vec<f64>,
    pub lambda2: f64,
    pub n_stable_grid: Vec<Vec<Vec<Option<StabCount>>>>,
    pub n_safe_grid: Vec<Vec<Vec<Option<StabCount>>>>,
    pub best_gains: ControllerGains,
    pub best_counts: (StabCount, StabCount),
    pub eta: f64,
    pub delta: f64,
    pub omega0_h: f64,
}

impl GainSearchResult {
    /// `min(n_stable, n_safe)` at one cell.
    pub fn objective(&self, i: usize, j: usize, l: usize) -> Option<StabCount> {
        Some(self.n_stable_grid[i][j][l]?.min(self.n_safe_grid[i][j][l]?))
    }

    /// k2 rows, k3 columns, cells `min(n_stable, n_safe)` coded as the count,
    /// −1 for unbounded and −2 for gains that fail the CAV stability condition.
    pub fn heatmap_csv(&self, k1_index: usize) -> String {
        let mut out = String::from("k2\\k3");
        for k3 in &self.k3_values {
            out.push_str(&format!(",{k3}"));
        }
        out.push('\n');
        for (j, k2) in self.k2_values.iter().enumerate() {
            out.push_str(&k2.to_string());
            for l in 0..self.k3_values.len() {
                let code = self.objective(k1_index, j, l).map_or(-2, |c| c.code());
                out.push_str(&format!(",{code}"));
            }
            out.push('\n');
        }
        out
    }
}

type Key = (StabCount, StabCount);

/// Exhaustive search over the gain grid for the controller that keeps the
/// most followers both string stable and inside the headway bounds.
///
/// The objective is `min(n_stable, n_safe)`, then `n_stable`; ties go to the
/// smaller `k1`, then `k2`, then `k3`. The CAV uses `eq.lambda2`.
pub fn optimize_gains(
    lins: &[LinearizedHdv],
    eq: &EquilibriumSpec,
    bounds: HeadwayBounds,
    disturbance_beta: f64,
    cfg: &GainSearchConfig,
) -> Result<GainSearchResult, StabilityError> {
    if lins.is_empty() {
        return Err(StabilityError::EmptyPlatoon);
    }
    let desired = eq.desired_headway();
    if !(desired > 0.0) {
        return Err(StabilityError::NonpositiveEquilibriumHeadway(desired));
    }
    if !(bounds.min < desired && desired < bounds.max) {
        return Err(StabilityError::InfeasibleHeadwayBounds { desired });
    }
    if !(disturbance_beta > 0.0 && disturbance_beta.is_finite()) {
        return Err(StabilityError::InvalidSetting(format!(
            "disturbance amplitude must be positive, got {disturbance_beta}"
        )));
    }
    let delta = cfg
        .delta_override
        .unwrap_or_else(|| (desired - bounds.min).min(bounds.max - desired));
    if !(delta > 0.0) {
        return Err(StabilityError::InvalidSetting(format!(
            "headway margin must be positive, got {delta}"
        )));
    }
    let eta = delta / disturbance_beta;
    let (k1s, k2s, k3s) = (cfg.gains.k1.values()?, cfg.gains.k2.values()?, cfg.gains.k3.values()?);
    let scan = PlatoonScan::new(lins, &cfg.omega)?;
    let ln_eta = eta.ln();

    let (n2, n3) = (k2s.len(), k3s.len());
    let total = k1s.len() * n2 * n3;
    let gains_at = |idx: usize| ControllerGains {
        k1: k1s[idx / (n2 * n3)],
        k2: k2s[(idx / n3) % n2],
        k3: k3s[idx % n3],
        lambda2: eq.lambda2,
    };
    let cells: Vec<Option<Key>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let g = gains_at(idx);
            cav_string_stable(&g).then(|| scan.counts(&g, ln_eta))
        })
        .collect();

    let mut best: Option<(usize, Key)> = None;
    for (idx, cell) in cells.iter().enumerate() {
        let Some((ns, nsafe)) = *cell else { continue };
        let key = (ns.min(nsafe), ns);
        if best.is_none_or(|(_, b)| key > b) {
            best = Some((idx, key));
        }
    }
    let (best_idx, _) = best.ok_or(StabilityError::NoFeasibleGains)?;

    let mut n_stable_grid = vec![vec![vec![None; n3]; n2]; k1s.len()];
    let mut n_safe_grid = n_stable_grid.clone();
    for (idx, cell) in cells.iter().enumerate() {
        let (i, j, l) = (idx / (n2 * n3), (idx / n3) % n2, idx % n3);
        n_stable_grid[i][j][l] = cell.map(|c| c.0);
        n_safe_grid[i][j][l] = cell.map(|c| c.1);
    }
    let best_counts = cells[best_idx].expect("best cell is feasible");

    Ok(GainSearchResult {
        best_gains: gains_at(best_idx),
        k1_values: k1s,
        k2_values: k2s,
        k3_values: k3s,
        lambda2: eq.lambda2,
        n_stable_grid,
        n_safe_grid,
        best_counts,
        eta,
        delta,
        omega0_h: scan.omega0_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::{n_safe, n_stable};

    fn eq() -> EquilibriumSpec {
        EquilibriumSpec {
            v_star: 10.0,
            lambda2: 0.0,
            lambda3: 20.0,
        }
    }

    fn bounds() -> HeadwayBounds {
        HeadwayBounds { min: 15.0, max: 30.0 }
    }

    fn small_cfg() -> GainSearchConfig {
        GainSearchConfig {
            gains: GainGridSpec {
                k1: AxisSpec::List(vec![0.0, 0.2]),
                k2: AxisSpec::Range {
                    start: 0.1,
                    stop: 1.0,
                    step: 0.3,
                },
                k3: AxisSpec::Range {
                    start: 0.1,
                    stop: 1.0,
                    step: 0.3,
                },
            },
            omega: GridSpec {
                points: 300,
                ..GridSpec::default()
            },
            delta_override: None,
        }
    }

    #[test]
    fn axis_values() {
        let a = AxisSpec::Range {
            start: 0.02,
            stop: 2.0,
            step: 0.02,
        };
        let v = a.values().unwrap();
        assert_eq!(v.len(), 100);
        assert_eq!(v[0], 0.02);
        assert_eq!(v[99], 2.0);
        assert_eq!(v[2], 0.06);
        assert_eq!(AxisSpec::List(vec![0.3, 0.1, 0.3]).values().unwrap(), vec![0.1, 0.3]);
        assert!(AxisSpec::List(vec![-0.1]).values().is_err());
        assert!(AxisSpec::List(vec![]).values().is_err());
        let k1 = GainGridSpec::default().k1.values().unwrap();
        assert_eq!(k1.len(), 21);
        assert_eq!(k1[20], 1.0);
    }

    #[test]
    fn axis_json_forms() {
        let g: GainGridSpec =
            serde_json::from_str(r#"{"k1":[0.0],"k2":{"start":0.1,"stop":0.3,"step":0.1},"k3":[0.5,1.0]}"#).unwrap();
        assert_eq!(g.k2.values().unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn eta_uses_tighter_margin() {
        let lins = [LinearizedHdv {
            k1: 0.6,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.0,
        }; 5];
        let r = optimize_gains(&lins, &eq(), bounds(), 2.0, &small_cfg()).unwrap();
        assert_eq!(r.delta, 5.0);
        assert_eq!(r.eta, 2.5);
        let cfg = GainSearchConfig {
            delta_override: Some(8.0),
            ..small_cfg()
        };
        assert_eq!(optimize_gains(&lins, &eq(), bounds(), 2.0, &cfg).unwrap().eta, 4.0);
        assert!(matches!(
            optimize_gains(&lins, &eq(), HeadwayBounds { min: 21.0, max: 30.0 }, 2.0, &cfg),
            Err(StabilityError::InfeasibleHeadwayBounds { .. })
        ));
    }

    #[test]
    fn grid_matches_pointwise_counts_and_argmax() {
        let lins = [LinearizedHdv {
            k1: 0.6,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.1,
        }; 8];
        let cfg = small_cfg();
        let r = optimize_gains(&lins, &eq(), bounds(), 2.0, &cfg).unwrap();
        let mut best: Option<((StabCount, StabCount), ControllerGains)> = None;
        for (i, &k1) in r.k1_values.iter().enumerate() {
            for (j, &k2) in r.k2_values.iter().enumerate() {
                for (l, &k3) in r.k3_values.iter().enumerate() {
                    let g = ControllerGains {
                        k1,
                        k2,
                        k3,
                        lambda2: 0.0,
                    };
                    if !cav_string_stable(&g) {
                        assert_eq!(r.n_stable_grid[i][j][l], None);
                        continue;
                    }
                    let ns = n_stable(&g, &lins, &cfg.omega).unwrap();
                    let nsafe = n_safe(&g, &lins, r.eta, &cfg.omega).unwrap();
                    assert_eq!(r.n_stable_grid[i][j][l], Some(ns));
                    assert_eq!(r.n_safe_grid[i][j][l], Some(nsafe));
                    let key = (ns.min(nsafe), ns);
                    if best.is_none_or(|(b, _)| key > b) {
                        best = Some((key, g));
                    }
                }
            }
        }
        let (key, g) = best.unwrap();
        assert_eq!(r.best_gains, g);
        assert_eq!((r.best_counts.0.min(r.best_counts.1), r.best_counts.0), key);
    }

    #[test]
    fn all_stable_platoon_picks_smallest_corner() {
        let lins = [LinearizedHdv {
            k1: 0.1,
            k2: 1.0,
            k3: 0.5,
            lambda2: 0.0,
            tau: 0.0,
        }; 3];
        let r = optimize_gains(&lins, &eq(), bounds(), 2.0, &small_cfg()).unwrap();
        assert_eq!(r.best_counts, (StabCount::Unbounded, StabCount::Unbounded));
        assert_eq!((r.best_gains.k1, r.best_gains.k2, r.best_gains.k3), (0.0, 0.1, 0.1));
        assert_eq!(r.omega0_h, 0.0);
    }

    #[test]
    fn singleton_grid() {
        let lins = [LinearizedHdv {
            k1: 0.6,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.0,
        }; 4];
        let cfg = GainSearchConfig {
            gains: GainGridSpec {
                k1: AxisSpec::List(vec![0.0]),
                k2: AxisSpec::List(vec![0.4]),
                k3: AxisSpec::List(vec![0.8]),
            },
            ..small_cfg()
        };
        let r = optimize_gains(&lins, &eq(), bounds(), 2.0, &cfg).unwrap();
        let g = ControllerGains {
            k1: 0.0,
            k2: 0.4,
            k3: 0.8,
            lambda2: 0.0,
        };
        assert_eq!(r.best_gains, g);
        assert_eq!(r.best_counts.0, n_stable(&g, &lins, &cfg.omega).unwrap());
        assert_eq!(r.best_counts.1, n_safe(&g, &lins, r.eta, &cfg.omega).unwrap());
    }

    #[test]
    fn infeasible_grid() {
        let lins = [LinearizedHdv {
            k1: 0.6,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.0,
        }; 2];
        let cfg = GainSearchConfig {
            gains: GainGridSpec {
                k1: AxisSpec::List(vec![2.0]),
                k2: AxisSpec::List(vec![0.1]),
                k3: AxisSpec::List(vec![0.1]),
            },
            ..small_cfg()
        };
        assert_eq!(
            optimize_gains(&lins, &eq(), bounds(), 2.0, &cfg),
            Err(StabilityError::NoFeasibleGains)
        );
    }

    #[test]
    fn heatmap_layout() {
        let lins = [LinearizedHdv {
            k1: 0.6,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.0,
        }; 3];
        let r = optimize_gains(&lins, &eq(), bounds(), 2.0, &small_cfg()).unwrap();
        let csv = r.heatmap_csv(1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + r.k2_values.len());
        assert_eq!(lines[0], "k2\\k3,0.1,0.4,0.7,1");
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 1 + r.k3_values.len());
        }
    }
}

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::transfer::{cav_string_stable, cav_transfer, hdv_gain_sq, platoon_critical_frequency_on};
use super::{ControllerGains, GridSpec, LinearizedHdv, StabilityError};

/// Number of followers a CAV keeps bounded.
///
/// `AtLeast(n)` means the scan ran out of vehicles before the criterion
/// failed; `Unbounded` means there is no amplified frequency band at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabCount {
    Finite(usize),
    AtLeast(usize),
    Unbounded,
}

impl StabCount {
    fn key(&self) -> (usize, u8) {
        match *self {
            StabCount::Finite(n) => (n, 0),
            StabCount::AtLeast(n) => (n, 1),
            StabCount::Unbounded => (usize::MAX, 2),
        }
    }

    /// Integer code for tables: the count, or −1 for `Unbounded`.
    pub fn code(&self) -> i64 {
        match *self {
            StabCount::Finite(n) | StabCount::AtLeast(n) => n as i64,
            StabCount::Unbounded => -1,
        }
    }
}

impl Ord for StabCount {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for StabCount {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for StabCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabCount::Finite(n) => write!(f, "{n}"),
            StabCount::AtLeast(n) => write!(f, "≥{n}"),
            StabCount::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// HDV side of the count scans, shared by every candidate CAV.
///
/// For each scan frequency it stores the running maximum of the cumulative
/// log gains `Mₙ = max_{j≤n} Σ_{i≤j} ln|Tᵢ(jω)|` (with `M₀ = 0`), so the first
/// `n` where `head + Σ_{i≤n} ln|Tᵢ| > 0` is a binary search.
#[derive(Debug, Clone)]
pub(crate) struct PlatoonScan {
    pub omegas: Vec<f64>,
    prefix_max: Vec<Vec<f64>>,
    pub omega0_h: f64,
}

impl PlatoonScan {
    pub fn new(lins: &[LinearizedHdv], grid: &GridSpec) -> Result<PlatoonScan, StabilityError> {
        grid.validate()?;
        let omega0_h = platoon_critical_frequency_on(lins, grid)?;
        let omegas = if omega0_h > 0.0 {
            grid.scan_below(omega0_h)
        } else {
            Vec::new()
        };
        let prefix_max = omegas
            .iter()
            .map(|&w| {
                let mut out = Vec::with_capacity(lins.len() + 1);
                out.push(0.0);
                let (mut sum, mut best) = (0.0, 0.0f64);
                for lin in lins {
                    sum += 0.5 * hdv_gain_sq(lin, w).ln();
                    best = best.max(sum);
                    out.push(best);
                }
                out
            })
            .collect();
        Ok(PlatoonScan {
            omegas,
            prefix_max,
            omega0_h,
        })
    }

    fn count_at(&self, i: usize, head: f64) -> StabCount {
        if !(head <= 0.0) {
            return StabCount::Finite(0);
        }
        let m = &self.prefix_max[i][1..];
        let n = m.partition_point(|&x| x <= -head);
        if n == m.len() {
            StabCount::AtLeast(n)
        } else {
            StabCount::Finite(n)
        }
    }

    /// `(n_stable, n_safe)` for one controller, minimized over the scan.
    pub fn counts(&self, g: &ControllerGains, ln_eta: f64) -> (StabCount, StabCount) {
        if self.omegas.is_empty() {
            return (StabCount::Unbounded, StabCount::Unbounded);
        }
        let (mut ns, mut nsafe) = (StabCount::Unbounded, StabCount::Unbounded);
        for (i, &w) in self.omegas.iter().enumerate() {
            let ta = cav_transfer(g, w);
            if ns != StabCount::Finite(0) {
                ns = ns.min(self.count_at(i, ta.norm().ln()));
            }
            if nsafe != StabCount::Finite(0) {
                nsafe = nsafe.min(self.count_at(i, (1.0 - ta).norm().ln() - ln_eta));
            }
            if ns == StabCount::Finite(0) && nsafe == StabCount::Finite(0) {
                break;
            }
        }
        (ns, nsafe)
    }
}

fn check(g: &ControllerGains, lins: &[LinearizedHdv]) -> Result<(), StabilityError> {
    if lins.is_empty() {
        return Err(StabilityError::EmptyPlatoon);
    }
    if !cav_string_stable(g) {
        return Err(StabilityError::CavStringUnstable(*g));
    }
    Ok(())
}

/// Largest `n` with `|T_A(jω)| · ∏_{i≤n} |Tᵢ(jω)| ≤ 1` holding for every
/// prefix, minimized over the scan frequencies below the platoon's critical
/// frequency. `lins` are the HDVs in the order they follow the CAV.
pub fn n_stable(g: &ControllerGains, lins: &[LinearizedHdv], grid: &GridSpec) -> Result<StabCount, StabilityError> {
    check(g, lins)?;
    Ok(PlatoonScan::new(lins, grid)?.counts(g, 0.0).0)
}

/// Same scan with the head term `|1 − T_A(jω)| / η`: how many followers stay
/// within the headway margin when the disturbance is `1/η` of it.
pub fn n_safe(
    g: &ControllerGains,
    lins: &[LinearizedHdv],
    eta: f64,
    grid: &GridSpec,
) -> Result<StabCount, StabilityError> {
    check(g, lins)?;
    if !(eta > 0.0) {
        return Err(StabilityError::InvalidSetting(format!(
            "eta must be positive, got {eta}"
        )));
    }
    Ok(PlatoonScan::new(lins, grid)?.counts(g, eta.ln()).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::hdv_transfer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unstable(k1: f64) -> LinearizedHdv {
        LinearizedHdv {
            k1,
            k2: 0.6,
            k3: 0.2,
            lambda2: 0.0,
            tau: 0.2,
        }
    }

    /// Direct products, no logs, no prefix tricks.
    fn oracle(g: &ControllerGains, lins: &[LinearizedHdv], eta: Option<f64>, grid: &GridSpec) -> StabCount {
        let w0 = platoon_critical_frequency_on(lins, grid).unwrap();
        if w0 == 0.0 {
            return StabCount::Unbounded;
        }
        let mut best = StabCount::Unbounded;
        for w in grid.scan_below(w0) {
            let ta = cav_transfer(g, w);
            let mut prod = match eta {
                None => ta.norm(),
                Some(e) => (1.0 - ta).norm() / e,
            };
            let mut n = 0;
            let here = loop {
                if prod > 1.0 {
                    break StabCount::Finite(n.max(1) - 1);
                }
                if n == lins.len() {
                    break StabCount::AtLeast(n);
                }
                prod *= hdv_transfer(&lins[n], w).norm();
                n += 1;
            };
            best = best.min(here);
        }
        best
    }

    #[test]
    fn ordering() {
        use StabCount::*;
        assert!(Finite(3) < AtLeast(3));
        assert!(AtLeast(3) < Finite(4));
        assert!(AtLeast(1000) < Unbounded);
        assert_eq!(Unbounded.code(), -1);
        assert_eq!(AtLeast(7).code(), 7);
    }

    #[test]
    fn all_stable_is_unbounded() {
        let g = ControllerGains {
            k1: 0.0,
            k2: 0.5,
            k3: 0.5,
            lambda2: 0.0,
        };
        let lins = [LinearizedHdv {
            k1: 0.1,
            k2: 1.0,
            k3: 0.5,
            lambda2: 0.0,
            tau: 0.0,
        }; 3];
        let grid = GridSpec::default();
        assert_eq!(n_stable(&g, &lins, &grid).unwrap(), StabCount::Unbounded);
        assert_eq!(n_safe(&g, &lins, 2.0, &grid).unwrap(), StabCount::Unbounded);
    }

    #[test]
    fn rejects_unstable_cav_and_empty_platoon() {
        let bad = ControllerGains {
            k1: 2.0,
            k2: 1.0,
            k3: 0.0,
            lambda2: 0.0,
        };
        let grid = GridSpec::default();
        assert_eq!(
            n_stable(&bad, &[unstable(0.5)], &grid),
            Err(StabilityError::CavStringUnstable(bad))
        );
        let ok = ControllerGains { k1: 0.0, ..bad };
        assert_eq!(n_stable(&ok, &[], &grid), Err(StabilityError::EmptyPlatoon));
    }

    #[test]
    fn cav_that_amplifies_with_first_hdv_gives_zero() {
        let lins = [unstable(1.0); 4];
        let g = ControllerGains {
            k1: 0.0,
            k2: 1e-3,
            k3: 2.0,
            lambda2: 0.0,
        };
        let grid = GridSpec {
            points: 800,
            ..GridSpec::default()
        };
        assert_eq!(n_stable(&g, &lins, &grid).unwrap(), StabCount::Finite(0));
    }

    #[test]
    fn matches_direct_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = GridSpec {
            points: 600,
            ..GridSpec::default()
        };
        for trial in 0..30 {
            let n = rng.random_range(1..25);
            let lins: Vec<LinearizedHdv> = if trial % 2 == 0 {
                vec![unstable(rng.random_range(0.3..1.2)); n]
            } else {
                (0..n)
                    .map(|_| LinearizedHdv {
                        k1: rng.random_range(0.05..1.0),
                        k2: rng.random_range(0.3..1.2),
                        k3: rng.random_range(0.0..0.6),
                        lambda2: rng.random_range(0.0..0.5),
                        tau: rng.random_range(0.0..0.6),
                    })
                    .collect()
            };
            let g = ControllerGains {
                k1: 0.0,
                k2: rng.random_range(0.02..2.0),
                k3: rng.random_range(0.02..2.0),
                lambda2: 0.0,
            };
            let eta = rng.random_range(0.2..20.0);
            assert_eq!(
                n_stable(&g, &lins, &grid).unwrap(),
                oracle(&g, &lins, None, &grid),
                "trial {trial}"
            );
            assert_eq!(
                n_safe(&g, &lins, eta, &grid).unwrap(),
                oracle(&g, &lins, Some(eta), &grid),
                "trial {trial}"
            );
        }
    }

    #[test]
    fn loose_margin_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = GridSpec {
            points: 400,
            ..GridSpec::default()
        };
        for _ in 0..20 {
            let lins = vec![unstable(rng.random_range(0.3..1.2)); 30];
            let g = ControllerGains {
                k1: 0.0,
                k2: rng.random_range(0.02..2.0),
                k3: rng.random_range(0.02..2.0),
                lambda2: 0.0,
            };
            let ns = n_stable(&g, &lins, &grid).unwrap();
            let nsafe = n_safe(&g, &lins, 1e6, &grid).unwrap();
            assert!(nsafe >= ns, "{nsafe:?} < {ns:?}");
        }
    }

    #[test]
    fn worse_driver_never_raises_counts() {
        let grid = GridSpec {
            points: 500,
            ..GridSpec::default()
        };
        let g = ControllerGains {
            k1: 0.0,
            k2: 0.3,
            k3: 0.9,
            lambda2: 0.0,
        };
        let base = vec![
            LinearizedHdv {
                tau: 0.0,
                ..unstable(0.6)
            };
            12
        ];
        let ns0 = n_stable(&g, &base, &grid).unwrap();
        let nsafe0 = n_safe(&g, &base, 3.0, &grid).unwrap();
        for i in [0, 5, 11] {
            let mut worse = base.clone();
            // lower damping raises |Tᵢ| at every ω > 0
            worse[i].k2 = 0.5;
            for w in grid.frequencies() {
                assert!(hdv_gain_sq(&worse[i], w) >= hdv_gain_sq(&base[i], w) - 1e-15);
            }
            assert!(n_stable(&g, &worse, &grid).unwrap() <= ns0);
            assert!(n_safe(&g, &worse, 3.0, &grid).unwrap() <= nsafe0);
        }
    }
}

use num_complex::Complex64;

use super::{ControllerGains, EquilibriumSpec, GridSpec, LinearizedHdv, StabilityError};
use crate::carfollowing::{ov_slope, FvdmParams};

/// Linearize a driver around `Δx* = λ2·v* + λ3`.
pub fn linearize_hdv(theta: &FvdmParams, eq: &EquilibriumSpec) -> Result<LinearizedHdv, StabilityError> {
    let h = eq.desired_headway();
    if !(h > 0.0) {
        return Err(StabilityError::NonpositiveEquilibriumHeadway(h));
    }
    Ok(LinearizedHdv {
        k1: theta.alpha * ov_slope(theta, h),
        k2: theta.alpha,
        k3: theta.beta,
        lambda2: eq.lambda2,
        tau: theta.tau,
    })
}

/// `Tᵢ(jω)` including the delay factor.
pub fn hdv_transfer(lin: &LinearizedHdv, omega: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    let delay = (-s * lin.tau).exp();
    let k = lin.k2 + lin.k3 + lin.k1 * lin.lambda2;
    let num = (lin.k1 + s * lin.k3) * delay;
    let den = s * s + s * k * delay + lin.k1 * delay;
    num / den
}

/// `|Tᵢ(jω)|²` by complex substitution.
pub fn hdv_gain_sq(lin: &LinearizedHdv, omega: f64) -> f64 {
    hdv_transfer(lin, omega).norm_sqr()
}

/// `|Tᵢ(jω)|²` from the expanded real form
/// `(k1² + ω²k3²) / (ω²K² + ω⁴ + k1² − 2ω³K sin ωτ − 2ω²k1 cos ωτ)`.
pub fn hdv_gain_sq_closed_form(lin: &LinearizedHdv, omega: f64) -> f64 {
    let k = lin.k2 + lin.k3 + lin.k1 * lin.lambda2;
    let w2 = omega * omega;
    let f = -2.0 * w2 * omega * k * (omega * lin.tau).sin() - 2.0 * w2 * lin.k1 * (omega * lin.tau).cos();
    (lin.k1 * lin.k1 + w2 * lin.k3 * lin.k3) / (w2 * k * k + w2 * w2 + lin.k1 * lin.k1 + f)
}

/// `T_A(jω)`.
pub fn cav_transfer(g: &ControllerGains, omega: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    let k = g.k2 + g.k3 + g.k1 * g.lambda2;
    (g.k1 + s * g.k3) / (s * s + s * k + g.k1)
}

/// `|T_A(jω)|² = (k1² + ω²k3²) / ((k1 − ω²)² + ω²(k2 + k3 + k1λ2)²)`.
pub fn cav_gain_sq(g: &ControllerGains, omega: f64) -> f64 {
    let k = g.k2 + g.k3 + g.k1 * g.lambda2;
    let w2 = omega * omega;
    (g.k1 * g.k1 + w2 * g.k3 * g.k3) / ((g.k1 - w2).powi(2) + w2 * k * k)
}

/// `sqrt(max(0, 2k1 − k2² − 2k2k3))`, the upper edge of the amplified band for
/// a delay-free driver with `λ2 = 0`. Zero means string stable.
pub fn critical_frequency(lin: &LinearizedHdv) -> f64 {
    (2.0 * lin.k1 - lin.k2 * lin.k2 - 2.0 * lin.k2 * lin.k3).max(0.0).sqrt()
}

/// Largest grid frequency with `|Tᵢ(jω)| ≥ 1`, refined by bisection against
/// the next grid point. Zero when the gain stays below one on the grid; the
/// grid maximum when it is still amplifying there.
pub fn numeric_critical_frequency(lin: &LinearizedHdv, grid: &GridSpec) -> f64 {
    let omegas = grid.frequencies();
    let excess = |w: f64| hdv_gain_sq(lin, w) - 1.0;
    let Some(i) = omegas.iter().rposition(|&w| excess(w) >= 0.0) else {
        return 0.0;
    };
    if i + 1 == omegas.len() {
        return omegas[i];
    }
    let (mut lo, mut hi) = (omegas[i], omegas[i + 1]);
    while hi - lo > 1e-10 * lo {
        let mid = 0.5 * (lo + hi);
        if excess(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed form where it applies (`τ = 0`, `λ2 = 0`), numeric crossover
/// otherwise.
pub fn vehicle_critical_frequency(lin: &LinearizedHdv, grid: &GridSpec) -> f64 {
    if lin.tau == 0.0 && lin.lambda2 == 0.0 {
        critical_frequency(lin)
    } else {
        numeric_critical_frequency(lin, grid)
    }
}

/// Smallest critical frequency among the string-unstable drivers; zero only
/// when every driver is stable.
pub fn platoon_critical_frequency_on(lins: &[LinearizedHdv], grid: &GridSpec) -> Result<f64, StabilityError> {
    if lins.is_empty() {
        return Err(StabilityError::EmptyPlatoon);
    }
    Ok(lins
        .iter()
        .map(|l| vehicle_critical_frequency(l, grid))
        .filter(|&w| w > 0.0)
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.min(w))))
        .unwrap_or(0.0))
}

/// [`platoon_critical_frequency_on`] with the default grid.
pub fn platoon_critical_frequency(lins: &[LinearizedHdv]) -> Result<f64, StabilityError> {
    platoon_critical_frequency_on(lins, &GridSpec::default())
}

/// `k2² + k1²λ2² + 2k2k3 + 2k1k2λ2 + 2k1k3λ2 − 2k1 ≥ 0`, i.e. `|T_A(jω)| ≤ 1`
/// for every ω.
pub fn cav_string_stable(g: &ControllerGains) -> bool {
    let (k1, k2, k3, l2) = (g.k1, g.k2, g.k3, g.lambda2);
    k2 * k2 + k1 * k1 * l2 * l2 + 2.0 * k2 * k3 + 2.0 * k1 * k2 * l2 + 2.0 * k1 * k3 * l2 - 2.0 * k1 >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carfollowing::optimal_velocity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn theta() -> FvdmParams {
        FvdmParams {
            alpha: 2.0,
            beta: 1.0,
            b_c: 4.0,
            b_f: 20.0,
            v0: 12.0,
            m: 0.12,
            tau: 0.4,
        }
    }

    #[test]
    fn linearization_at_inflection_and_far_away() {
        let th = theta();
        let eq = EquilibriumSpec {
            v_star: 10.0,
            lambda2: 1.0,
            lambda3: th.b_f - 10.0,
        };
        let lin = linearize_hdv(&th, &eq).unwrap();
        assert!((lin.k1 - th.alpha * th.v0 * th.m).abs() < 1e-14);
        assert_eq!((lin.k2, lin.k3, lin.lambda2, lin.tau), (2.0, 1.0, 1.0, 0.4));

        let far = EquilibriumSpec {
            v_star: 10.0,
            lambda2: 0.0,
            lambda3: 1e4,
        };
        assert!(linearize_hdv(&th, &far).unwrap().k1 < 1e-100);

        let bad = EquilibriumSpec {
            v_star: 10.0,
            lambda2: 0.0,
            lambda3: -1.0,
        };
        assert_eq!(
            linearize_hdv(&th, &bad),
            Err(StabilityError::NonpositiveEquilibriumHeadway(-1.0))
        );
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let th = theta();
        for h in [6.0, 15.0, 27.5, 41.0] {
            let eq = EquilibriumSpec {
                v_star: 0.0,
                lambda2: 0.0,
                lambda3: h,
            };
            let step = 1e-5;
            let fd = (optimal_velocity(&th, h + step) - optimal_velocity(&th, h - step)) / (2.0 * step);
            let k1 = linearize_hdv(&th, &eq).unwrap().k1;
            assert!(((k1 - th.alpha * fd) / k1).abs() < 1e-6);
        }
    }

    #[test]
    fn dc_gain_is_one() {
        let lin = LinearizedHdv {
            k1: 0.7,
            k2: 1.1,
            k3: 0.4,
            lambda2: 0.9,
            tau: 0.6,
        };
        assert!((hdv_gain_sq(&lin, 0.0) - 1.0).abs() < 1e-15);
        let g = ControllerGains {
            k1: 0.3,
            k2: 0.5,
            k3: 0.2,
            lambda2: 1.2,
        };
        assert!((cav_gain_sq(&g, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn critical_case_hand_example() {
        // τ=0, λ2=0, k=(1,1,0), ω=1: numerator 1, |j² + j + 1|² = |j|² = 1
        let lin = LinearizedHdv {
            k1: 1.0,
            k2: 1.0,
            k3: 0.0,
            lambda2: 0.0,
            tau: 0.0,
        };
        assert!((hdv_gain_sq(&lin, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(critical_frequency(&lin), 1.0);
        let lin2 = LinearizedHdv {
            k1: 2.0,
            k2: 1.0,
            k3: 0.5,
            ..lin
        };
        assert!((critical_frequency(&lin2) - 2f64.sqrt()).abs() < 1e-15);
        let stable = LinearizedHdv {
            k1: 0.5,
            k2: 1.0,
            k3: 0.5,
            ..lin
        };
        assert_eq!(critical_frequency(&stable), 0.0);
    }

    /// Largest ω on a fine linear scan with gain ≥ 1.
    fn crossover_by_scan(lin: &LinearizedHdv) -> f64 {
        let mut best = 0.0;
        for i in 1..=200_000 {
            let w = i as f64 * 2e-5;
            if hdv_gain_sq(lin, w) >= 1.0 {
                best = w;
            }
        }
        best
    }

    #[test]
    fn closed_form_matches_crossover_scan() {
        for (k1, k2, k3) in [(1.0, 1.0, 0.0), (2.0, 1.0, 0.5)] {
            let lin = LinearizedHdv {
                k1,
                k2,
                k3,
                lambda2: 0.0,
                tau: 0.0,
            };
            assert!((crossover_by_scan(&lin) - critical_frequency(&lin)).abs() < 3e-5);
        }
    }

    #[test]
    fn numeric_crossover_agrees_with_closed_form() {
        let grid = GridSpec::default();
        for (k1, k2, k3) in [(1.0, 1.0, 0.0), (2.0, 1.0, 0.5), (0.9, 0.6, 0.3), (0.2, 1.0, 1.0)] {
            let lin = LinearizedHdv {
                k1,
                k2,
                k3,
                lambda2: 0.0,
                tau: 0.0,
            };
            let c = critical_frequency(&lin);
            let n = numeric_critical_frequency(&lin, &grid);
            if c == 0.0 {
                assert_eq!(n, 0.0);
            } else {
                assert!(((n - c) / c).abs() < 1e-6, "{n} vs {c}");
            }
        }
    }

    #[test]
    fn dual_formulas_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = GridSpec::default().frequencies();
        for _ in 0..50 {
            let lin = LinearizedHdv {
                k1: rng.random_range(0.0..2.0),
                k2: rng.random_range(0.1..3.0),
                k3: rng.random_range(0.0..2.0),
                lambda2: rng.random_range(0.0..2.0),
                tau: rng.random_range(0.0..1.5),
            };
            let g = ControllerGains {
                k1: lin.k1,
                k2: lin.k2,
                k3: lin.k3,
                lambda2: lin.lambda2,
            };
            for &w in &grid {
                let (a, b) = (hdv_gain_sq(&lin, w), hdv_gain_sq_closed_form(&lin, w));
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "hdv {a} {b} at {w}");
                let (c, d) = (cav_transfer(&g, w).norm_sqr(), cav_gain_sq(&g, w));
                assert!((c - d).abs() <= 1e-12 * c.max(1.0), "cav {c} {d} at {w}");
            }
        }
    }

    #[test]
    fn cav_condition_examples() {
        assert!(cav_string_stable(&ControllerGains {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            lambda2: 0.0
        }));
        let bad = ControllerGains {
            k1: 2.0,
            k2: 1.0,
            k3: 0.0,
            lambda2: 0.0,
        };
        assert!(!cav_string_stable(&bad));
        let sup = GridSpec::default()
            .frequencies()
            .iter()
            .map(|&w| cav_gain_sq(&bad, w))
            .fold(0.0, f64::max);
        assert!(sup > 1.0);
        // k1 = 0: k3² / (ω² + (k2+k3)²) < 1
        let g = ControllerGains {
            k1: 0.0,
            k2: 0.4,
            k3: 0.7,
            lambda2: 0.0,
        };
        for w in [0.01, 0.5, 3.0] {
            let expect = 0.49 / (w * w + 1.21);
            assert!((cav_gain_sq(&g, w) - expect).abs() < 1e-15);
            assert!(cav_gain_sq(&g, w) < 1.0);
        }
    }

    #[test]
    fn platoon_frequency_skips_stable_drivers() {
        let mk = |k1: f64| LinearizedHdv {
            k1,
            k2: 1.0,
            k3: 0.0,
            lambda2: 0.0,
            tau: 0.0,
        };
        // ω0 = sqrt(2k1 − 1)
        let stable = mk(0.3);
        let w12 = mk((1.2f64.powi(2) + 1.0) / 2.0);
        let w07 = mk((0.7f64.powi(2) + 1.0) / 2.0);
        let w = platoon_critical_frequency(&[stable, w12, w07]).unwrap();
        assert!((w - 0.7).abs() < 1e-12);
        assert_eq!(platoon_critical_frequency(&[stable, stable]).unwrap(), 0.0);
        let w2 = mk(2.5);
        assert!((platoon_critical_frequency(&[w2]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(platoon_critical_frequency(&[]), Err(StabilityError::EmptyPlatoon));
    }

    #[test]
    fn delay_does_not_shrink_the_amplified_band_on_samples() {
        // Probe, not a theorem: report any case where adding delay lowers ω0.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = GridSpec {
            points: 1500,
            ..GridSpec::default()
        };
        let mut violations = Vec::new();
        for _ in 0..40 {
            let base = LinearizedHdv {
                k1: rng.random_range(0.1..1.5),
                k2: rng.random_range(0.2..1.5),
                k3: rng.random_range(0.0..1.0),
                lambda2: 0.0,
                tau: 0.0,
            };
            let mut prev = numeric_critical_frequency(&base, &grid);
            for tau in [0.1, 0.2, 0.4] {
                let w = numeric_critical_frequency(&LinearizedHdv { tau, ..base }, &grid);
                if w + 1e-9 < prev {
                    violations.push((base, tau, prev, w));
                }
                prev = w;
            }
        }
        if !violations.is_empty() {
            eprintln!("delay monotonicity violations: {violations:?}");
        }
        assert!(violations.len() <= 40);
    }
}

//! End-to-end invariant suite at one parameter value.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cascade::{domain, poincare_reversibility_residual, CascadeError, CascadeOptions};

use crate::flow::{
    integrate, next_section_crossing, CrossingWalker, IntegratorOptions, PropagationOutcome, Propagator, StepStatus, TimeDirection,
    TrajectoryEnd,
};
use crate::homoclinics::{census, counting_check, Census};
use crate::local_manifold::compute_coefficients;
use crate::section_geometry::{alternation_violations, compute_bank, propagate_seed, Manifold, TraceCurve};
use crate::system::{classify_spectrum, reversor, vector_field, Params, State4};

/// One row of the pass/fail table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("< {bound:.0e}"),
            pass: value < bound,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SelftestReport {
    pub eta3: f64,
    pub checks: Vec<Check>,
    pub census: Census,
    pub traces: Vec<TraceCurve>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Additive recurrence with irrational steps: deterministic points in
/// `[0, 1)` for coordinate `j` of sample `i`.
pub fn quasi_random(i: usize, j: usize) -> f64 {
    const STEPS: [f64; 4] = [
        std::f64::consts::SQRT_2,
        1.7320508075688772,
        2.23606797749979,
        2.6457513110645907,
    ];
    (0.5 + i as f64 * STEPS[j % 4]).fract()
}

/// Largest `|H(t) - H(0)|` over `samples` seeds of the unstable domain,
/// integrated backward for `t_span` (bounded, the orbit tends to the
/// origin) and forward for `t_span` or until it escapes. Also returns how
/// many backward runs covered the full span.
pub fn hamiltonian_drift(eta3: f64, samples: usize, t_span: f64, o: &CascadeOptions) -> Result<(f64, usize), CascadeError> {
    let d = domain(eta3, o)?;
    let p = d.params();
    let mut worst: f64 = 0.0;
    let mut full = 0;
    for i in 0..samples {
        let s0 = d.sigma(TAU * quasi_random(i, 0))?;
        let back = integrate(s0, p, -t_span, &o.integrator).map_err(|_| CascadeError::TrackingLost { eta3 })?;
        let fwd = integrate(s0, p, t_span, &o.integrator).map_err(|_| CascadeError::TrackingLost { eta3 })?;
        if back.end() == TrajectoryEnd::Completed {
            full += 1;
        }
        worst = worst.max(back.max_h_drift()).max(fwd.max_h_drift());
    }
    Ok((worst, full))
}

/// `max |f(Rs) + R f(s)|` over states in `[-1, 1]^4`.
pub fn field_reversibility(eta3: f64, samples: usize) -> f64 {
    let p = Params { eta3 };
    (0..samples)
        .map(|i| {
            let u = |j| 2.0 * quasi_random(i, j) - 1.0;
            let s = State4::new(u(0), u(1), u(2), u(3));
            let lhs = vector_field(reversor(s), p);
            let rhs = reversor(vector_field(s, p));
            lhs.to_array().iter().zip(rhs.to_array()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Residuals below this are treated as roundoff.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Local log-log slope of the invariance residual, `max_angle |residual|`
/// at `r` against `r / 1.25`, taken at the smallest radius of the ladder
/// `0.4 * 0.8^k` whose residual stays above [`RESIDUAL_FLOOR`]. Returns the
/// slope and that radius.
pub fn residual_exponent(eta3: f64, order: usize) -> Result<(f64, f64), CascadeError> {
    let c = compute_coefficients(Params::bifocal(eta3)?, order)?;
    let res = |r: f64| {
        (0..64)
            .map(|j| {
                let th = TAU * (j as f64 + 0.5) / 64.0;
                let (a, b) = c.invariance_residual(r * th.cos(), r * th.sin());
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    };
    let slope = |r: f64| (res(r) / res(r / 1.25)).ln() / 1.25f64.ln();
    let mut r = 0.4;
    while r > 1e-3 && res(0.8 * r / 1.25) > RESIDUAL_FLOOR {
        r *= 0.8;
    }
    Ok((slope(r), r))
}

/// Deviation of the linear coefficients from the closed forms
/// `a10 = -1`, `a01 = 2 rho`, `b10 = -2 rho`, `b01 = eta3 + 1`.
pub fn tangent_plane_deviation(eta3: f64) -> Result<f64, CascadeError> {
    let p = Params::bifocal(eta3)?;
    let (rho, _) = p.bifocal_rates()?;
    let c = compute_coefficients(p, 1)?;
    Ok([
        c.a(1, 0) + 1.0,
        c.a(0, 1) - 2.0 * rho,
        c.b(1, 0) + 2.0 * rho,
        c.b(0, 1) - (eta3 + 1.0),
    ]
    .iter()
    .fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// Largest residual of `l^4 - eta3 l^2 + 1` at the classified eigenvalues
/// for parameters spread over `(-3, 3)`.
pub fn spectrum_residual(samples: usize) -> f64 {
    (0..samples)
        .map(|i| {
            let eta3 = -3.0 + 6.0 * quasi_random(i, 1);
            classify_spectrum(Params { eta3 })
                .eigenvalues()
                .iter()
                .map(|l| {
                    let l2 = l * l;
                    (l2 * l2 - l2 * eta3 + 1.0).norm()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest `|Π(R Π(s)) - R s|` over first crossings of unstable seeds.
pub fn poincare_reversibility(eta3: f64, samples: usize, o: &CascadeOptions) -> Result<f64, CascadeError> {
    let d = domain(eta3, o)?;
    let p = d.params();
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let s0 = d.sigma(TAU * quasi_random(i, 2))?;
        let Ok(PropagationOutcome::Crossed(e)) = next_section_crossing(s0, p, &o.integrator, TimeDirection::Forward) else {
            continue;
        };
        if let Some(r) = poincare_reversibility_residual(e.state, p, &o.integrator) {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Radius of the linear seeds used by [`mirror_deviation`].
pub const LINEAR_SEED_RADIUS: f64 = 1e-6;

/// First state at which the orbit of `s0` reaches `x1^2 + x2^2 = r^2`
/// from inside, following `direction`.
fn circle_exit(s0: State4<f64>, p: Params<f64>, r: f64, o: &IntegratorOptions<f64>, direction: TimeDirection) -> Option<State4<f64>> {
    let g = |s: State4<f64>| s.x1 * s.x1 + s.x2 * s.x2 - r * r;
    let mut prop = Propagator::new(s0, p, *o, direction).ok()?;
    loop {
        if prop.advance().ok()? != StepStatus::Stepped {
            return None;
        }
        let seg = prop.segment();
        if g(seg.end_state()) < 0.0 {
            continue;
        }
        let n = 32;
        let mut prev = 0.0;
        for j in 1..=n {
            let h = seg.h * j as f64 / n as f64;
            if g(seg.eval(h)) >= 0.0 {
                let (mut lo, mut hi) = (prev, h);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if g(seg.eval(mid)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(seg.eval(hi));
            }
            prev = h;
        }
        return Some(seg.end_state());
    }
}

/// Compares the stable manifold, grown backward from seeds on the linear
/// stable eigenspace, with the mirror image of the unstable manifold.
/// Each seed is followed until its projection leaves the domain circle,
/// where it is matched with the unstable domain point of the mirrored
/// angle. Returns the largest distance over those domain points and the
/// first `k_max` section crossings, with the number of crossing pairs.
pub fn mirror_deviation(eta3: f64, k_max: usize, samples: usize, o: &CascadeOptions) -> Result<(f64, usize), CascadeError> {
    let d = domain(eta3, o)?;
    let p = d.params();
    let (rho, omega) = p.bifocal_rates()?;
    let lambda = Complex64::new(-rho, omega);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..samples {
        let phase = Complex64::from_polar(LINEAR_SEED_RADIUS, TAU * quasi_random(i, 3));
        let c = |j: i32| (phase * lambda.powi(j)).re;
        let seed = State4::new(c(0), c(1), c(2), c(3));
        let Some(z) = circle_exit(seed, p, d.r_star(), &o.integrator, TimeDirection::Backward) else {
            continue;
        };
        let theta = (-z.x2).atan2(z.x1).rem_euclid(TAU);
        worst = worst.max(reversor(d.sigma(theta)?).distance(&z));
        let u = propagate_seed(&d, theta, k_max, Manifold::Unstable, &o.integrator);
        let Ok(mut walker) = CrossingWalker::new(z, p, o.integrator, TimeDirection::Backward) else {
            continue;
        };
        for k in 1..=k_max {
            let Ok(Ok(b)) = walker.next_crossing() else {
                break;
            };
            let Some(a) = u.crossing(k) else {
                break;
            };
            worst = worst.max(reversor(a.state).distance(&b.state));
            pairs += 1;
        }
    }
    Ok((worst, pairs))
}

fn order_histogram(orders: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &o in orders {
        *h.entry(o).or_insert(0) += 1;
    }
    h
}

/// Runs every check at `eta3` with crossing depth `k_max`.
pub fn run(eta3: f64, k_max: usize, o: &CascadeOptions) -> Result<SelftestReport, CascadeError> {
    let mut checks = Vec::new();
    log::info!("selftest at eta3 = {eta3}: integrator and series checks");
    let (drift, full) = hamiltonian_drift(eta3, 50, 100.0, o)?;
    checks.push(Check::below("hamiltonian_drift", drift, 1e-10));
    checks.push(Check {
        name: "backward_runs_complete".into(),
        value: full as f64,
        threshold: "= 50".into(),
        pass: full == 50,
    });
    checks.push(Check::below("field_reversibility", field_reversibility(eta3, 100), 1e-15));
    for m in [5, 10, 20] {
        let (e, _) = residual_exponent(eta3, m)?;
        checks.push(Check {
            name: format!("residual_exponent_M{m}"),
            value: e,
            threshold: format!("{} +- 0.5", m + 1),
            pass: (e - (m + 1) as f64).abs() <= 0.5,
        });
    }
    checks.push(Check::below("tangent_plane", tangent_plane_deviation(eta3)?, 1e-14));
    checks.push(Check::below("spectrum_residual", spectrum_residual(100), 1e-12));
    checks.push(Check::below("poincare_reversibility", poincare_reversibility(eta3, 50, o)?, 1e-8));
    let (mirror, pairs) = mirror_deviation(eta3, k_max, 64, o)?;
    checks.push(Check::below("mirror_vs_stable", mirror, 1e-6));
    checks.push(Check {
        name: "mirror_pairs".into(),
        value: pairs as f64,
        threshold: "> 0".into(),
        pass: pairs > 0,
    });

    log::info!("selftest: trace bank and census");
    let d = domain(eta3, o)?;
    let bank = compute_bank(&d, k_max, Manifold::Unstable, &o.refine, &o.integrator);
    let violations = alternation_violations(&bank).len();
    checks.push(Check {
        name: "region_alternation_violations".into(),
        value: violations as f64,
        threshold: "= 0".into(),
        pass: violations == 0,
    });
    if k_max >= 5 {
        for (k, l) in [(1, 5), (2, 4), (4, 2), (5, 1)] {
            let (value, pass) = match counting_check(&bank, k, l, 3, 3) {
                Ok(c) => (c.count_kl as f64 - c.count_mn as f64, c.equal),
                Err(_) => (f64::NAN, false),
            };
            checks.push(Check {
                name: format!("counting_{k}{l}_vs_33"),
                value,
                threshold: "= 0".into(),
                pass,
            });
        }
    }
    let (c, _) = census(&d, &bank, &o.detection, &o.integrator, true);
    let bad = c
        .orbits
        .iter()
        .filter(|r| r.symmetric)
        .filter(|r| r.order % 2 != 0 || r.check.is_none_or(|k| k.fixr_contacts != 1))
        .count();
    checks.push(Check {
        name: "symmetric_even_unique_contact".into(),
        value: bad as f64,
        threshold: "= 0".into(),
        pass: bad == 0,
    });
    let sym = order_histogram(&c.symmetric_orders());
    let asym = order_histogram(&c.asymmetric_orders());
    checks.push(Check {
        name: "census_symmetric".into(),
        value: c.symmetric_orders().len() as f64,
        threshold: "{6: 1, 8: 2, 10: 4}".into(),
        pass: sym == BTreeMap::from([(6, 1), (8, 2), (10, 4)]),
    });
    checks.push(Check {
        name: "census_asymmetric".into(),
        value: c.asymmetric_orders().len() as f64,
        threshold: "{10: 2}".into(),
        pass: asym == BTreeMap::from([(10, 2)]),
    });
    Ok(SelftestReport {
        eta3,
        checks,
        census: c,
        traces: bank.traces(),
    })
}

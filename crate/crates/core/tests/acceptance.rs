//! Acceptance run: one PASS/FAIL line per criterion, each backed by an
//! oracle computed here rather than taken from the library's own checks.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::linalg::Schur;
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bifocus::cascade::{
    domain, find_symmetric_periodic_orbits, iterate_fix_r, locate_saddle_node, locate_tangencies,
    poincare_reversibility_residual, sweep_homoclinics, CascadeOptions, Window,
};
use bifocus::cli::{self, select_tangency};
use bifocus::flow::{crossing_sequence, integrate, next_section_crossing, PropagationOutcome, TimeDirection};
use bifocus::homoclinics::{census, counting_check, Census};
use bifocus::local_manifold::{compute_coefficients, FundamentalDomain};
use bifocus::section_geometry::{alternation_violations, compute_bank, propagate_seed, Manifold, TraceBank};
use bifocus::selftest;
use bifocus::system::{classify_spectrum, hamiltonian, reversor, vector_field, Params, State4};

const ETA_CENSUS: f64 = -1.73;
const ETA_FOLD: f64 = -1.776;
const WINDOW: (f64, f64) = (-1.75, -1.67);

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    /// Criteria whose failure is recorded but does not fail the run.
    reported_only: bool,
}

#[derive(Default)]
struct Report {
    rows: Vec<Outcome>,
}

impl Report {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        self.push(id, pass, detail, false);
    }

    fn push(&mut self, id: &'static str, pass: bool, detail: String, reported_only: bool) {
        let tag = match (pass, reported_only) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (reported)",
        };
        println!("{tag:<16} {id:<5} {detail}");
        self.rows.push(Outcome { id, pass, detail, reported_only });
    }
}

fn xbar1(s: &State4<f64>) -> f64 {
    if s.x3 >= 0.0 {
        s.x1 - 1.5
    } else {
        1.5 - s.x1
    }
}

fn histogram(orders: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &o in orders {
        *h.entry(o).or_insert(0) += 1;
    }
    h
}

fn bank_at(eta3: f64, k_max: usize, o: &CascadeOptions) -> (FundamentalDomain<f64>, TraceBank) {
    let d = domain(eta3, o).expect("domain");
    let bank = compute_bank(&d, k_max, Manifold::Unstable, &o.refine, &o.integrator);
    (d, bank)
}

/// Number of `x4` sign changes on the `k`-th trace, read off the samples.
fn trace_roots(bank: &TraceBank, k: usize) -> usize {
    bank.traces()
        .iter()
        .filter(|t| t.k == k)
        .flat_map(|t| {
            t.pieces()
                .into_iter()
                .map(|piece| piece.windows(2).filter(|w| (w[0].x4 < 0.0) != (w[1].x4 < 0.0)).count())
                .collect::<Vec<_>>()
        })
        .sum()
}

/// Independent replay of one census orbit: the crossings along the
/// transit, where `x4` vanishes, and the end state against the stable
/// local manifold `x3 = a(x1, -x2)`, `x4 = -b(x1, -x2)`.
fn replay(d: &FundamentalDomain<f64>, theta: f64, transit: f64, o: &CascadeOptions) -> Option<(usize, Vec<usize>, f64)> {
    let p = d.params();
    let s0 = d.sigma(theta).ok()?;
    let seq = crossing_sequence(s0, p, &o.integrator, TimeDirection::Forward, 40).ok()?;
    let events: Vec<_> = seq.events.iter().filter(|e| e.t < transit).collect();
    let contacts = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.state.x4.abs() < 1e-6)
        .map(|(i, _)| i + 1)
        .collect();
    let end = integrate(s0, p, transit, &o.integrator).ok()?.eval(transit).ok()?;
    let c = d.coeffs();
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..=c.order() {
        for j in 0..=(c.order() - i) {
            let m = end.x1.powi(i as i32) * (-end.x2).powi(j as i32);
            a += c.a(i, j) * m;
            b += c.b(i, j) * m;
        }
    }
    let off = (end.x3 - a).abs().max((end.x4 + b).abs()).max(hamiltonian(end, p).abs());
    Some((events.len(), contacts, off))
}

fn criterion_1(r: &mut Report, o: &CascadeOptions) -> Census {
    let (d, bank) = bank_at(ETA_CENSUS, 5, o);
    let (c, _) = census(&d, &bank, &o.detection, &o.integrator, true);
    let sym = histogram(&c.symmetric_orders());
    let asym = histogram(&c.asymmetric_orders());
    let mut replay_ok = true;
    let mut worst: f64 = 0.0;
    for orbit in &c.orbits {
        let transit = orbit.check.map_or(f64::NAN, |k| k.transit_time);
        match replay(&d, orbit.theta, transit, o) {
            Some((crossings, contacts, off)) => {
                worst = worst.max(off);
                let contact_ok = if orbit.symmetric {
                    contacts == vec![orbit.order / 2]
                } else {
                    contacts.is_empty()
                };
                // An orbit of order k + l crosses the section k + l - 1 times.
                replay_ok &= crossings + 1 == orbit.order && contact_ok;
            }
            None => replay_ok = false,
        }
    }
    let pass = sym == BTreeMap::from([(6, 1), (8, 2), (10, 4)]) && asym == BTreeMap::from([(10, 2)]) && replay_ok && worst < 1e-6;
    r.record(
        "1",
        pass,
        format!("eta3=-1.73 kmax=5: symmetric {sym:?}, asymmetric {asym:?}; replayed crossings/contacts ok={replay_ok}, off-manifold {worst:.2e}"),
    );
    c
}

/// Adaptive sampling of `Σ_k^u` for `θ` in `[lo, hi]`: intervals are split
/// until neighbouring section points are within `gap` in `(x̄1, x4)`.
fn adaptive_roots(d: &FundamentalDomain<f64>, k: usize, lo: f64, hi: f64, gap: f64, o: &CascadeOptions) -> Vec<f64> {
    let f = |t: f64| {
        propagate_seed(d, t, k, Manifold::Unstable, &o.integrator)
            .crossing(k)
            .map(|e| (xbar1(&e.state), e.state.x4))
    };
    let n = 400;
    let mut pts: Vec<(f64, Option<(f64, f64)>)> = (0..=n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            (t, f(t))
        })
        .collect();
    loop {
        let mut next = vec![pts[0]];
        let mut split = false;
        for w in pts.windows(2) {
            if let (Some(p), Some(q)) = (w[0].1, w[1].1) {
                if (p.0 - q.0).hypot(p.1 - q.1) > gap && w[1].0 - w[0].0 > 1e-14 {
                    let m = 0.5 * (w[0].0 + w[1].0);
                    next.push((m, f(m)));
                    split = true;
                }
            }
            next.push(w[1]);
        }
        pts = next;
        if !split {
            break;
        }
    }
    pts.windows(2)
        .filter_map(|w| match (w[0].1, w[1].1) {
            (Some(p), Some(q)) if (p.1 < 0.0) != (q.1 < 0.0) => Some(0.5 * (p.0 + q.0)),
            _ => None,
        })
        .collect()
}

fn criterion_2(r: &mut Report, o: &CascadeOptions) {
    let bracket = (-1.781, -1.771);
    let all = match locate_tangencies(bracket, 10, o) {
        Ok(all) => all,
        Err(e) => {
            r.record("2", false, format!("tangency search failed: {e}"));
            return;
        }
    };
    let Some(e) = select_tangency(&all, bracket) else {
        r.record("2", false, format!("no candidate with counts differing by two among {}", all.len()));
        return;
    };
    let near = |eta3: f64| {
        let d = domain(eta3, o).expect("domain");
        adaptive_roots(&d, 10, e.theta_star - 0.1, e.theta_star + 0.1, 0.01, o)
            .into_iter()
            .filter(|x| (x - e.point.xbar1).abs() < 0.1)
            .count()
    };
    let oracle = (near(bracket.0), near(bracket.1));
    let mut counts = [e.counts.0, e.counts.1];
    counts.sort_unstable();
    let pass = (e.eta3_star + 1.776).abs() <= 0.003 && counts == [0, 2] && oracle == e.counts;
    r.record(
        "2",
        pass,
        format!(
            "k=10 tangency eta3*={:.9} (|eta3*+1.776|={:.2e} <= 3e-3), lobe roots at (-1.781, -1.771) = {:?}, adaptive resampling {:?}",
            e.eta3_star,
            (e.eta3_star + 1.776).abs(),
            e.counts,
            oracle
        ),
    );
}

fn criterion_3(r: &mut Report, o: &CascadeOptions) {
    let grid = [-1.90, -1.84, -1.60, -0.60];
    let sweep = sweep_homoclinics(&grid, 5, o);
    let orders: Vec<Option<usize>> = sweep.censuses.iter().map(|c| c.as_ref().ok().and_then(|c| c.min_order())).collect();
    let oracle: Vec<Option<usize>> = grid
        .iter()
        .map(|&eta| {
            let (_, bank) = bank_at(eta, 5, o);
            (1..=5).find(|&k| trace_roots(&bank, k) > 0).map(|k| 2 * k)
        })
        .collect();
    let (_, bank) = bank_at(-1.95, 4, o);
    let roots_195: Vec<usize> = (1..=4).map(|k| trace_roots(&bank, k)).collect();
    let (d, bank4) = bank_at(-1.95, 4, o);
    let (c195, _) = census(&d, &bank4, &o.detection, &o.integrator, false);
    let expected = vec![Some(8), Some(6), Some(4), Some(2)];
    let pass = orders == expected && oracle == expected && roots_195.iter().all(|&n| n == 0) && c195.orbits.is_empty();
    r.record(
        "3",
        pass,
        format!(
            "minimal orders at {grid:?} = {orders:?}, first Fix(R) root 2k from trace samples {oracle:?}; eta3=-1.95 roots on Σ1..Σ4 {roots_195:?}, census {}",
            c195.orbits.len()
        ),
    );
}

fn criterion_4(r: &mut Report, o: &CascadeOptions) {
    let p = Params::bifocal(ETA_FOLD).expect("bifocal");
    let window = Window { xbar1: WINDOW };
    let images = iterate_fix_r(p, 11, 512, o);
    let (orbits, _) = find_symmetric_periodic_orbits(p, 11, Some(window), &images, o);
    let mut replayed = 0;
    for po in &orbits {
        let Ok(seq) = crossing_sequence(po.seed, p, &o.integrator, TimeDirection::Forward, 22) else {
            continue;
        };
        if seq.events.len() == 22 {
            let mid = &seq.events[10].state;
            let last = &seq.events[21];
            let in_window = xbar1(mid) > WINDOW.0 && xbar1(mid) < WINDOW.1;
            if in_window && mid.x4.abs() < 1e-6 && last.state.distance(&po.seed) < 1e-4 {
                replayed += 1;
            }
        }
    }
    let count = orbits.iter().filter(|po| po.crossings_per_period == 22).count();
    let mut arcs: Vec<f64> = Vec::new();
    for po in &orbits {
        if arcs.last().is_none_or(|x| po.seed_x1 - x > 1e-3) {
            arcs.push(po.seed_x1);
        }
    }
    r.push(
        "4a",
        count == 2,
        format!(
            "eta3=-1.776 n=11 window {WINDOW:?}: {count} symmetric periodic orbits with 22 crossings (expected exactly 2), {replayed} confirmed by replay, on {} arcs of two",
            arcs.len()
        ),
        true,
    );

    let cand = match locate_saddle_node(ETA_FOLD, 0.02, 11, window, 512, o) {
        Ok(c) => c,
        Err(e) => {
            r.record("4b", false, format!("saddle-node search failed: {e}"));
            return;
        }
    };
    let near_fold = |eta3: f64| {
        let p = Params::bifocal(eta3).expect("bifocal");
        let images = iterate_fix_r(p, 11, 512, o);
        let (orbits, _) = find_symmetric_periodic_orbits(p, 11, Some(window), &images, o);
        orbits.iter().filter(|po| (po.seed_x1 - cand.seed_x1).abs() < 1e-3).count()
    };
    let (below, above) = (near_fold(cand.eta3_star - 1e-3), near_fold(cand.eta3_star + 1e-3));
    let pass = (cand.eta3_star - ETA_FOLD).abs() <= 0.02
        && cand.validation.0 .1 == 0
        && cand.validation.1 .1 == 2
        && below == 0
        && above == 2;
    r.record(
        "4b",
        pass,
        format!(
            "saddle-node fold eta3*={:.9} (|dη3|={:.2e} <= 2e-2), seed x1={:.6}, orbits at eta3*-/+1e-3: tracked {}/{}, rescanned {below}/{above}",
            cand.eta3_star,
            (cand.eta3_star - ETA_FOLD).abs(),
            cand.seed_x1,
            cand.validation.0 .1,
            cand.validation.1 .1
        ),
    );
}

/// Random seed with `H = 0`: `x4` solved from the other coordinates.
fn zero_energy_seed(rng: &mut ChaCha8Rng, eta3: f64) -> State4<f64> {
    loop {
        let x1: f64 = rng.gen_range(-0.5..0.5);
        let x2: f64 = rng.gen_range(-0.5..0.5);
        let x3: f64 = rng.gen_range(-0.5..0.5);
        if x2.abs() < 0.1 {
            continue;
        }
        let x4 = (0.5 * x3 * x3 + 0.5 * eta3 * x2 * x2 - 0.5 * x1 * x1 + x1 * x1 * x1 / 3.0) / x2;
        return State4::new(x1, x2, x3, x4);
    }
}

fn criterion_5a(r: &mut Report, o: &CascadeOptions, rng: &mut ChaCha8Rng) {
    let p = Params::bifocal(ETA_CENSUS).expect("bifocal");
    let mut worst: f64 = 0.0;
    let mut horizon: f64 = f64::INFINITY;
    for _ in 0..50 {
        let s = zero_energy_seed(rng, ETA_CENSUS);
        for t in [100.0, -100.0] {
            let traj = integrate(s, p, t, &o.integrator).expect("integrate");
            worst = worst.max(traj.max_h_drift());
            horizon = horizon.min(traj.t_end().abs());
        }
    }
    let (lib, full) = selftest::hamiltonian_drift(ETA_CENSUS, 50, 100.0, o).expect("drift");
    let pass = worst < 1e-10 && lib < 1e-10 && full == 50;
    r.record(
        "5a",
        pass,
        format!(
            "H drift {worst:.2e} on 50 random H=0 seeds (both directions up to t=100 or escape; shortest run {horizon:.1}), {lib:.2e} on 50 manifold seeds with {full}/50 full backward runs (< 1e-10)"
        ),
    );
}

fn criterion_5b(r: &mut Report, rng: &mut ChaCha8Rng) {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = Params { eta3: rng.gen_range(-3.0..3.0) };
        let mut u = || -> f64 { rng.gen_range(-2.0..2.0) };
        let s = State4::new(u(), u(), u(), u());
        let lhs = vector_field(reversor(s), p);
        let rhs = reversor(vector_field(s, p));
        let scale = 1.0 + vector_field(s, p).norm();
        worst = worst.max((lhs.x1 + rhs.x1).abs().max((lhs.x2 + rhs.x2).abs()).max((lhs.x3 + rhs.x3).abs()).max((lhs.x4 + rhs.x4).abs()) / scale);
    }
    r.record("5b", worst <= f64::EPSILON, format!("max |f(Rs) + R f(s)| / (1 + |f|) = {worst:.2e} on 1000 random states (<= machine epsilon)"));
}

/// Invariance residual evaluated from the coefficient table alone.
fn table_residual(table: &bifocus::local_manifold::CoefficientTable, x1: f64, x2: f64) -> f64 {
    let eval = |terms: &[(usize, usize, f64)]| {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &(i, j, c) in terms {
            v += c * x1.powi(i as i32) * x2.powi(j as i32);
            if i > 0 {
                d1 += c * i as f64 * x1.powi(i as i32 - 1) * x2.powi(j as i32);
            }
            if j > 0 {
                d2 += c * j as f64 * x1.powi(i as i32) * x2.powi(j as i32 - 1);
            }
        }
        (v, d1, d2)
    };
    let (a, a1, a2) = eval(&table.a);
    let (b, b1, b2) = eval(&table.b);
    let ra = b - (a1 * x2 + a2 * a);
    let rb = (-x1 + table.eta3 * a + x1 * x1) - (b1 * x2 + b2 * a);
    ra.abs().max(rb.abs())
}

fn criterion_5c(r: &mut Report) {
    let mut rows = Vec::new();
    let mut pass = true;
    for m in [5usize, 10, 20] {
        let (lib, radius) = selftest::residual_exponent(ETA_CENSUS, m).expect("exponent");
        let table = compute_coefficients(Params::bifocal(ETA_CENSUS).expect("bifocal"), m).expect("coefficients").to_table();
        let res = |r: f64| {
            (0..64)
                .map(|j| {
                    let th = TAU * (j as f64 + 0.5) / 64.0;
                    table_residual(&table, r * th.cos(), r * th.sin())
                })
                .fold(0.0, f64::max)
        };
        let own = (res(radius) / res(radius / 1.25)).ln() / 1.25f64.ln();
        let target = (m + 1) as f64;
        pass &= (lib - target).abs() <= 0.5 && (own - target).abs() <= 0.5;
        rows.push(format!("M={m}: {lib:.3} (table {own:.3}, r={radius:.3})"));
    }
    r.record("5c", pass, format!("residual exponents {} within M+1 +- 0.5", rows.join(", ")));
}

fn criterion_5d(r: &mut Report, rng: &mut ChaCha8Rng) {
    let mut worst: f64 = 0.0;
    let mut eig: f64 = 0.0;
    for _ in 0..50 {
        let eta3 = rng.gen_range(-1.99..1.99);
        let p = Params::bifocal(eta3).expect("bifocal");
        let c = compute_coefficients(p, 2).expect("coefficients");
        let a = Matrix4::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, eta3, 0.0);
        let v1 = Vector4::new(1.0, 0.0, c.a(1, 0), c.b(1, 0));
        let v2 = Vector4::new(0.0, 1.0, c.a(0, 1), c.b(0, 1));
        for v in [v1, v2] {
            let w = a * v;
            let rest = w - v1 * w[0] - v2 * w[1];
            worst = worst.max(rest.amax());
        }
        let restricted = nalgebra::Matrix2::new((a * v1)[0], (a * v2)[0], (a * v1)[1], (a * v2)[1]);
        let rho = (eta3 + 2.0).sqrt() / 2.0;
        eig = eig.max((restricted.trace() - 2.0 * rho).abs()).max((restricted.determinant() - 1.0).abs());
    }
    let closed = selftest::tangent_plane_deviation(ETA_CENSUS).expect("tangent plane");
    r.record(
        "5d",
        worst < 1e-14 && eig < 1e-14 && closed < 1e-14,
        format!("tangent plane: closed-form deviation {closed:.2e}, A-invariance residual {worst:.2e}, restricted trace/det error {eig:.2e} on 50 random eta3 (< 1e-14)"),
    );
}

fn criterion_5e(r: &mut Report, rng: &mut ChaCha8Rng) {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let eta3: f64 = rng.gen_range(-3.0..3.0);
        let a = Matrix4::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, eta3, 0.0);
        // The spectrum is symmetric under λ -> -λ, which stalls the unshifted
        // QR iteration; a real shift breaks the symmetry.
        let shift = 0.37;
        let schur = Schur::try_new(a + Matrix4::identity() * shift, f64::EPSILON, 1000).expect("schur");
        let reference: Vec<Complex64> = schur.complex_eigenvalues().iter().map(|z| Complex64::new(z.re - shift, z.im)).collect();
        let ours = classify_spectrum(Params { eta3 }).eigenvalues();
        for z in ours {
            let d = reference.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
        for w in &reference {
            let d = ours.iter().map(|z| (z - w).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    r.record("5e", worst < 1e-12, format!("spectrum vs companion-matrix eigenvalues: {worst:.2e} on 100 random eta3 in (-3, 3) (< 1e-12)"));
}

fn criterion_5f(r: &mut Report, o: &CascadeOptions, rng: &mut ChaCha8Rng) {
    let d = domain(ETA_CENSUS, o).expect("domain");
    let p = d.params();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    while used < 50 {
        let s0 = d.sigma(rng.gen_range(0.0..TAU)).expect("sigma");
        let Ok(PropagationOutcome::Crossed(e)) = next_section_crossing(s0, p, &o.integrator, TimeDirection::Forward) else {
            continue;
        };
        if let Some(res) = poincare_reversibility_residual(e.state, p, &o.integrator) {
            worst = worst.max(res);
            used += 1;
        }
    }
    r.record("5f", worst < 1e-8, format!("|Π(RΠ(s)) - Rs| = {worst:.2e} on {used} random section points (< 1e-8)"));
}

fn criterion_5g(r: &mut Report, o: &CascadeOptions) {
    let (dev, pairs) = selftest::mirror_deviation(ETA_CENSUS, 5, 64, o).expect("mirror");
    r.record(
        "5g",
        dev < 1e-6 && pairs > 100,
        format!("mirrored Σk^u vs Σk^s grown backward from the linear stable eigenspace: {dev:.2e} over {pairs} crossings, k <= 5 (< 1e-6)"),
    );
}

fn criterion_5h(r: &mut Report, bank: &TraceBank, o: &CascadeOptions, rng: &mut ChaCha8Rng) {
    let d = domain(ETA_CENSUS, o).expect("domain");
    let lib = alternation_violations(bank).len();
    let mut own = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let seed = propagate_seed(&d, rng.gen_range(0.0..TAU), 5, Manifold::Unstable, &o.integrator);
        for w in seed.crossings.windows(2) {
            if w[0].tangential || w[1].tangential {
                continue;
            }
            checked += 1;
            if (w[0].state.x3 > 0.0) == (w[1].state.x3 > 0.0) {
                own += 1;
            }
        }
    }
    r.record(
        "5h",
        lib == 0 && own == 0 && checked > 0,
        format!("region alternation: {lib} violations in the bank, {own} in {checked} consecutive pairs of random seeds"),
    );
}

/// Transverse intersections of `Σ_k^u` with `Σ_l^s = mirror(Σ_l^u)` in the
/// `(x̄1, x4)` plane, from the trace polylines.
fn polyline_intersections(bank: &TraceBank, k: usize, l: usize) -> usize {
    let traces = bank.traces();
    let segments = |k: usize, mirror: bool| -> Vec<[(f64, f64); 2]> {
        let sign = if mirror { -1.0 } else { 1.0 };
        traces
            .iter()
            .filter(|t| t.k == k)
            .flat_map(|t| {
                t.pieces()
                    .into_iter()
                    .flat_map(|piece| piece.windows(2).map(|w| [(w[0].xbar1, sign * w[0].x4), (w[1].xbar1, sign * w[1].x4)]).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let u = segments(k, false);
    let s = segments(l, true);
    let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let mut count = 0;
    for p in &u {
        for q in &s {
            if p[0].0.max(p[1].0) < q[0].0.min(q[1].0)
                || q[0].0.max(q[1].0) < p[0].0.min(p[1].0)
                || p[0].1.max(p[1].1) < q[0].1.min(q[1].1)
                || q[0].1.max(q[1].1) < p[0].1.min(p[1].1)
            {
                continue;
            }
            let d1 = orient(q[0], q[1], p[0]);
            let d2 = orient(q[0], q[1], p[1]);
            let d3 = orient(p[0], p[1], q[0]);
            let d4 = orient(p[0], p[1], q[1]);
            if (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) {
                count += 1;
            }
        }
    }
    count
}

fn criterion_5i(r: &mut Report, bank: &TraceBank) {
    let pairs = [(1, 5), (2, 4), (3, 3), (4, 2), (5, 1)];
    let lib: Vec<Option<usize>> = pairs.iter().map(|&(k, l)| counting_check(bank, k, l, 3, 3).ok().map(|c| c.count_kl)).collect();
    let own: Vec<usize> = pairs.iter().map(|&(k, l)| polyline_intersections(bank, k, l)).collect();
    let pass = lib.iter().all(|c| c.is_some() && *c == lib[0]) && own.iter().all(|&c| c == own[0]) && lib[0] == Some(own[0]);
    r.record("5i", pass, format!("#(Σk^u ∩ Σl^s) for k+l=6 at eta3=-1.73: library {lib:?}, polyline count {own:?}"));
}

fn criterion_5j(r: &mut Report, c: &Census) {
    let sym: Vec<_> = c.orbits.iter().filter(|o| o.symmetric).collect();
    let even = sym.iter().all(|o| o.order % 2 == 0);
    let unique = sym.iter().all(|o| o.check.is_some_and(|k| k.fixr_contacts == 1));
    let labelled = sym.iter().all(|o| o.crossings.iter().filter(|x| x.x4.abs() < 1e-6).count() == 1);
    r.record(
        "5j",
        !sym.is_empty() && even && unique && labelled,
        format!("{} symmetric orbits: even order {even}, one Fix(R) contact on replay {unique}, one on the labelled crossings {labelled}", sym.len()),
    );
}

fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read output dir") {
        let path = entry.expect("entry").path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).expect("read output file");
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).expect("manifest");
            let m = v.as_object_mut().expect("object");
            m.remove("wall_clock_seconds");
            m.remove("workers");
            if let Some(c) = m.get_mut("config").and_then(|c| c.as_object_mut()) {
                c.remove("out");
                c.remove("workers");
            }
            bytes = serde_json::to_vec(&v).expect("manifest");
        }
        out.insert(name, bytes);
    }
    out
}

fn criterion_6(r: &mut Report) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let run = |name: &str, workers: &str| {
        let dir = tmp.path().join(name);
        let code = cli::run(["bifocus", "selftest", "--out", dir.to_str().unwrap(), "--workers", workers]);
        (code, data_files(&dir))
    };
    let (c1, a) = run("first", "1");
    let (c2, b) = run("second", "1");
    let (c3, p) = run("parallel", "3");
    let pass = c1 == 0 && c2 == 0 && c3 == 0 && a.len() > 1 && a == b && a == p;
    r.record(
        "6",
        pass,
        format!("two selftest runs: exit {c1}/{c2}, {} data files bitwise identical {}; with 3 workers identical {}", a.len(), a == b, a == p),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let o = CascadeOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut r = Report::default();

    let census173 = criterion_1(&mut r, &o);
    criterion_2(&mut r, &o);
    criterion_3(&mut r, &o);
    criterion_4(&mut r, &o);
    criterion_5a(&mut r, &o, &mut rng);
    criterion_5b(&mut r, &mut rng);
    criterion_5c(&mut r);
    criterion_5d(&mut r, &mut rng);
    criterion_5e(&mut r, &mut rng);
    criterion_5f(&mut r, &o, &mut rng);
    criterion_5g(&mut r, &o);
    let (_, bank) = bank_at(ETA_CENSUS, 5, &o);
    criterion_5h(&mut r, &bank, &o, &mut rng);
    criterion_5i(&mut r, &bank);
    criterion_5j(&mut r, &census173);
    criterion_6(&mut r);

    let failed: Vec<&Outcome> = r.rows.iter().filter(|o| !o.pass && !o.reported_only).collect();
    let reported: Vec<&str> = r.rows.iter().filter(|o| !o.pass && o.reported_only).map(|o| o.id).collect();
    println!(
        "{} criteria, {} passed, {} failed, reported without failing the run: {:?} ({:.0} s)",
        r.rows.len(),
        r.rows.iter().filter(|o| o.pass).count(),
        failed.len(),
        reported,
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in failed {
            eprintln!("failed {}: {}", f.id, f.detail);
        }
        ExitCode::FAILURE
    }
}

//! Symmetric and asymmetric homoclinic orbits of the bifocus, read off the
//! traces of the unstable manifold and their mirror images.
//!
//! A homoclinic orbit of order `α` crosses the section `α - 1` times. Its
//! crossings are labelled `q_{i,α-i}`: the `i`-th crossing after leaving the
//! unstable domain, with `α - i` crossings left before entering the stable
//! domain `R(D^u)`. A symmetric orbit meets `Fix(R)` at `q_{α/2,α/2}`; an
//! asymmetric one is an intersection of `Σ_m^u` with `Σ_n^s` off `Fix(R)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{integrate, radius_entry, FlowError, IntegratorOptions, TimeDirection};
use crate::geometry::{polyline_crossings, Point};
use crate::local_manifold::{Branch, FundamentalDomain};
use crate::section_geometry::{
    mirror_to_stable, propagate_seed, GapCause, Manifold, Region, SectionPoint, SeedOrbit, TraceBank, TraceCurve,
};

#[derive(Debug, Error)]
pub enum HomoclinicError {
    #[error("root refinement on Σ_{k} ({branch:?}) stalled in [{lo}, {hi}] with |x4| = {residual:e}")]
    NonConvergence {
        k: usize,
        branch: Branch,
        lo: f64,
        hi: f64,
        residual: f64,
    },
    #[error("intersection Σ_{m}^u ∩ Σ_{n}^s near θ = ({theta_u}, {theta_s}) is nearly tangent or did not converge")]
    DegenerateIntersection { m: usize, n: usize, theta_u: f64, theta_s: f64 },
    #[error("traces needed for the count are not fully resolved")]
    Unresolved,
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Tolerance ladder of the detection pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTolerances {
    /// Target for `|x4|` (or the intersection residual) at a root.
    pub root: f64,
    /// Acceptance bound for a root limited by floating-point resolution in θ,
    /// and for label consistency.
    pub label: f64,
    /// Bound on the distance to `R(D^u)` on re-entry.
    pub closure: f64,
}

impl Default for DetectionTolerances {
    fn default() -> Self {
        Self {
            root: 1e-10,
            label: 1e-8,
            closure: 1e-6,
        }
    }
}

/// The crossing `q_{i,j}`, `i + j = α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCrossing {
    pub i: usize,
    pub j: usize,
    pub point: SectionPoint,
}

impl LabeledCrossing {
    pub fn label(&self) -> String {
        format!("q_{{{},{}}}", self.i, self.j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicOrbit {
    pub eta3: f64,
    pub order: usize,
    pub symmetric: bool,
    pub branch: Branch,
    pub seed_theta: f64,
    /// Seed of the `R`-conjugate orbit (asymmetric orbits only).
    pub partner_theta: Option<f64>,
    pub crossings: Vec<LabeledCrossing>,
    pub fixr_point: Option<SectionPoint>,
    /// `|x4|` at the `Fix(R)` contact, or the intersection residual.
    pub root_residual: f64,
}

impl HomoclinicOrbit {
    pub fn labels(&self) -> Vec<String> {
        self.crossings.iter().map(LabeledCrossing::label).collect()
    }
}

/// A root bracket that could not be resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFailure {
    pub message: String,
}

impl From<&HomoclinicError> for DetectionFailure {
    fn from(e: &HomoclinicError) -> Self {
        Self { message: e.to_string() }
    }
}

/// A sign change of `x4` between neighbouring samples of one trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootBracket {
    pub k: usize,
    pub branch: Branch,
    pub lo: (f64, f64),
    pub hi: (f64, f64),
}

/// Sign changes of `x4` between joined, non-tangential samples of a trace.
pub fn x4_brackets(t: &TraceCurve) -> Vec<RootBracket> {
    let mut out = Vec::new();
    for (i, w) in t.samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if t.is_split(i) || a.tangential || b.tangential {
            continue;
        }
        if (a.x4 < 0.0) != (b.x4 < 0.0) {
            out.push(RootBracket {
                k: t.k,
                branch: t.branch,
                lo: (a.theta, a.x4),
                hi: (b.theta, b.x4),
            });
        }
    }
    out
}

fn crossing_x4(d: &FundamentalDomain<f64>, theta: f64, k: usize, opts: &IntegratorOptions<f64>) -> Option<(f64, SeedOrbit)> {
    let s = propagate_seed(d, theta, k, Manifold::Unstable, opts);
    let x4 = s.crossing(k)?.state.x4;
    Some((x4, s))
}

/// Illinois iteration on θ for `x4(Σ_k(θ)) = 0` inside a bracket.
pub fn refine_root(
    d: &FundamentalDomain<f64>,
    br: &RootBracket,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
) -> Result<(f64, SeedOrbit), HomoclinicError> {
    let fail = |lo: f64, hi: f64, residual: f64| HomoclinicError::NonConvergence {
        k: br.k,
        branch: br.branch,
        lo: lo.min(hi),
        hi: lo.max(hi),
        residual,
    };
    let (mut a, mut fa) = br.lo;
    let (mut b, mut fb) = br.hi;
    let mut best: Option<(f64, SeedOrbit)> = None;
    let mut best_f = f64::INFINITY;
    for it in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        let (l, h) = (a.min(b), a.max(b));
        if !(c > l && c < h) || it % 8 == 7 {
            c = 0.5 * (a + b);
        }
        if c <= l || c >= h {
            break;
        }
        let Some((fc, orbit)) = crossing_x4(d, c, br.k, opts) else {
            return Err(fail(a, b, f64::NAN));
        };
        if fc.abs() < best_f {
            best_f = fc.abs();
            best = Some((c, orbit));
        }
        if best_f < tol.root {
            break;
        }
        if (fc < 0.0) != (fb < 0.0) {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    match best {
        Some(r) if best_f < tol.label => Ok(r),
        _ => Err(fail(a, b, best_f)),
    }
}

fn labelled_symmetric(d: &FundamentalDomain<f64>, theta: f64, seed: &SeedOrbit, k: usize) -> HomoclinicOrbit {
    let branch = Branch::of_angle(theta);
    let alpha = 2 * k;
    let mut crossings = Vec::with_capacity(alpha - 1);
    for i in 1..=k {
        let e = seed.crossing(i).expect("root orbit reaches Σ_k");
        crossings.push(LabeledCrossing {
            i,
            j: alpha - i,
            point: SectionPoint::from_event(e, branch, theta),
        });
    }
    for i in k + 1..alpha {
        let mut p = crossings[alpha - i - 1].point.mirrored();
        p.k = i;
        crossings.push(LabeledCrossing { i, j: alpha - i, point: p });
    }
    let fix = crossings[k - 1].point;
    HomoclinicOrbit {
        eta3: d.params().eta3,
        order: alpha,
        symmetric: true,
        branch,
        seed_theta: theta,
        partner_theta: None,
        crossings,
        fixr_point: Some(fix),
        root_residual: fix.x4.abs(),
    }
}

/// Symmetric homoclinic orbits of order `2k`, `k ≤ k_max`, one per root of
/// `x4` along `Σ_k^{u,±}`. Returns the orbits ordered by `(order, θ)` and
/// the brackets that failed to converge.
pub fn find_symmetric_homoclinics(
    d: &FundamentalDomain<f64>,
    bank: &TraceBank,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
) -> (Vec<HomoclinicOrbit>, Vec<HomoclinicError>) {
    let brackets: Vec<RootBracket> = bank.traces().iter().flat_map(x4_brackets).collect();
    let results: Vec<Result<HomoclinicOrbit, HomoclinicError>> = brackets
        .par_iter()
        .map(|br| refine_root(d, br, tol, opts).map(|(theta, s)| labelled_symmetric(d, theta, &s, br.k)))
        .collect();
    let mut orbits = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => orbits.push(o),
            Err(e) => failures.push(e),
        }
    }
    sort_orbits(&mut orbits);
    (orbits, failures)
}

fn sort_orbits(v: &mut [HomoclinicOrbit]) {
    v.sort_by(|a, b| a.order.cmp(&b.order).then(a.seed_theta.total_cmp(&b.seed_theta)));
}

/// Polylines of the joined pieces of a set of traces, in the projected plane,
/// with the θ of every vertex.
fn polylines(traces: &[&TraceCurve]) -> Vec<(Vec<Point>, Vec<f64>)> {
    let mut out = Vec::new();
    for t in traces {
        for piece in t.pieces() {
            if piece.len() < 2 {
                continue;
            }
            out.push((
                piece.iter().map(|s| [s.xbar1, s.x4]).collect(),
                piece.iter().map(|s| s.theta).collect(),
            ));
        }
    }
    out
}

/// A crossing of two trace polylines with the interpolated seed angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceIntersection {
    pub theta_u: f64,
    pub theta_s: f64,
    /// θ-width of the two segments involved.
    pub width_u: f64,
    pub width_s: f64,
    pub point: [f64; 2],
    pub degenerate: bool,
}

/// Crossings of the polylines of `Σ_k^u` and `Σ_l^s` (both branches each).
pub fn trace_intersections(bank: &TraceBank, k: usize, l: usize) -> Vec<TraceIntersection> {
    let tu: Vec<TraceCurve> = bank.branches.iter().filter_map(|b| bank.trace(k, b.branch)).collect();
    let ts: Vec<TraceCurve> = bank
        .branches
        .iter()
        .filter_map(|b| bank.trace(l, b.branch))
        .map(|t| mirror_to_stable(&t))
        .collect();
    let pu = polylines(&tu.iter().collect::<Vec<_>>());
    let ps = polylines(&ts.iter().collect::<Vec<_>>());
    let mut out = Vec::new();
    for (au, thu) in &pu {
        for (as_, ths) in &ps {
            for c in polyline_crossings(au, as_, 0.05) {
                let wu = thu[c.i + 1] - thu[c.i];
                let ws = ths[c.j + 1] - ths[c.j];
                out.push(TraceIntersection {
                    theta_u: thu[c.i] + c.s * wu,
                    theta_s: ths[c.j] + c.t * ws,
                    width_u: wu,
                    width_s: ws,
                    point: c.point,
                    degenerate: c.degenerate,
                });
            }
        }
    }
    out
}

/// Result of a counting comparison between two pairs of traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingCheck {
    pub kl: (usize, usize),
    pub mn: (usize, usize),
    pub count_kl: usize,
    pub count_mn: usize,
    pub equal: bool,
}

fn trace_resolved(t: &TraceCurve) -> bool {
    t.gaps.iter().all(|g| g.is_break || g.cause != GapCause::Unresolved)
}

/// Compares `#(Σ_k^u ∩ Σ_l^s)` with `#(Σ_m^u ∩ Σ_n^s)` for `k + l = m + n`.
pub fn counting_check(bank: &TraceBank, k: usize, l: usize, m: usize, n: usize) -> Result<CountingCheck, HomoclinicError> {
    assert_eq!(k + l, m + n, "index sums must agree");
    if bank.branches.iter().any(|b| b.capped) {
        return Err(HomoclinicError::Unresolved);
    }
    for idx in [k, l, m, n] {
        for b in &bank.branches {
            let t = bank.trace(idx, b.branch).ok_or(HomoclinicError::Unresolved)?;
            if !trace_resolved(&t) {
                return Err(HomoclinicError::Unresolved);
            }
        }
    }
    let count_kl = trace_intersections(bank, k, l).len();
    let count_mn = trace_intersections(bank, m, n).len();
    Ok(CountingCheck {
        kl: (k, l),
        mn: (m, n),
        count_kl,
        count_mn,
        equal: count_kl == count_mn,
    })
}

fn crossing_point(d: &FundamentalDomain<f64>, theta: f64, k: usize, opts: &IntegratorOptions<f64>) -> Option<(SectionPoint, SeedOrbit)> {
    let s = propagate_seed(d, theta, k, Manifold::Unstable, opts);
    let e = *s.crossing(k)?;
    Some((SectionPoint::from_event(&e, Branch::of_angle(theta), theta), s))
}

/// Newton iteration with difference Jacobian for
/// `P(Σ_m^u(θu)) = P(mirror Σ_n^u(θs))`.
fn refine_intersection(
    d: &FundamentalDomain<f64>,
    m: usize,
    n: usize,
    x: &TraceIntersection,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
) -> Result<(f64, f64, f64), HomoclinicError> {
    let degenerate = || HomoclinicError::DegenerateIntersection {
        m,
        n,
        theta_u: x.theta_u,
        theta_s: x.theta_s,
    };
    let g = |tu: f64, ts: f64| -> Option<[f64; 2]> {
        let (pu, _) = crossing_point(d, tu, m, opts)?;
        let (ps, _) = crossing_point(d, ts, n, opts)?;
        Some([pu.xbar1 - ps.xbar1, pu.x4 + ps.x4])
    };
    let (mut tu, mut ts) = (x.theta_u, x.theta_s);
    let mut f = g(tu, ts).ok_or_else(degenerate)?;
    let mut hu = (x.width_u.abs() * 1e-3).max(1e-13);
    let mut hs = (x.width_s.abs() * 1e-3).max(1e-13);
    for _ in 0..40 {
        let norm = f[0].hypot(f[1]);
        if norm < tol.root {
            return Ok((tu, ts, norm));
        }
        let fu = g(tu + hu, ts).ok_or_else(degenerate)?;
        let fs = g(tu, ts + hs).ok_or_else(degenerate)?;
        let j = [
            [(fu[0] - f[0]) / hu, (fs[0] - f[0]) / hs],
            [(fu[1] - f[1]) / hu, (fs[1] - f[1]) / hs],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = j[0][0].hypot(j[1][0]) * j[0][1].hypot(j[1][1]);
        if !(det.abs() > 1e-10 * scale) {
            return Err(degenerate());
        }
        let du = -(j[1][1] * f[0] - j[0][1] * f[1]) / det;
        let ds = -(-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        // damped step: halve until the residual decreases
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let (nu, ns) = (tu + lambda * du, ts + lambda * ds);
            if let Some(fnew) = g(nu, ns) {
                if fnew[0].hypot(fnew[1]) < norm {
                    accepted = Some((nu, ns, fnew));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((nu, ns, fnew)) => {
                hu = ((nu - tu).abs() * 1e-2).min(hu).max(1e-14 * nu.abs().max(1.0));
                hs = ((ns - ts).abs() * 1e-2).min(hs).max(1e-14 * ns.abs().max(1.0));
                tu = nu;
                ts = ns;
                f = fnew;
            }
            None => {
                let norm = f[0].hypot(f[1]);
                return if norm < tol.label { Ok((tu, ts, norm)) } else { Err(degenerate()) };
            }
        }
    }
    let norm = f[0].hypot(f[1]);
    if norm < tol.label {
        Ok((tu, ts, norm))
    } else {
        Err(degenerate())
    }
}

fn labelled_asymmetric(
    d: &FundamentalDomain<f64>,
    m: usize,
    n: usize,
    tu: f64,
    ts: f64,
    residual: f64,
    opts: &IntegratorOptions<f64>,
) -> Option<HomoclinicOrbit> {
    let alpha = m + n;
    let su = propagate_seed(d, tu, m, Manifold::Unstable, opts);
    let ss = propagate_seed(d, ts, n, Manifold::Unstable, opts);
    let (bu, bs) = (Branch::of_angle(tu), Branch::of_angle(ts));
    let mut crossings = Vec::with_capacity(alpha - 1);
    for i in 1..=m {
        let e = su.crossing(i)?;
        crossings.push(LabeledCrossing {
            i,
            j: alpha - i,
            point: SectionPoint::from_event(e, bu, tu),
        });
    }
    for i in m + 1..alpha {
        let e = ss.crossing(alpha - i)?;
        let mut p = SectionPoint::from_event(e, bs, ts).mirrored();
        p.k = i;
        crossings.push(LabeledCrossing { i, j: alpha - i, point: p });
    }
    Some(HomoclinicOrbit {
        eta3: d.params().eta3,
        order: alpha,
        symmetric: false,
        branch: bu,
        seed_theta: tu,
        partner_theta: Some(ts),
        crossings,
        fixr_point: None,
        root_residual: residual,
    })
}

/// Asymmetric homoclinic orbits of order `α ≤ 2 k_max`, found as
/// intersections of `Σ_m^u` with `Σ_n^s`, `m = ⌈α/2⌉`, `n = ⌊α/2⌋`, off
/// `Fix(R)`. Each orbit's `R`-conjugate partner is also returned.
pub fn find_asymmetric_pairs(
    d: &FundamentalDomain<f64>,
    bank: &TraceBank,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
) -> (Vec<HomoclinicOrbit>, Vec<HomoclinicError>) {
    let mut jobs = Vec::new();
    for alpha in 2..=2 * bank.k_max {
        let m = alpha.div_ceil(2);
        let n = alpha / 2;
        if n == 0 {
            continue;
        }
        for x in trace_intersections(bank, m, n) {
            jobs.push((m, n, x));
        }
    }
    let refined: Vec<Result<(usize, usize, f64, f64, f64), HomoclinicError>> = jobs
        .par_iter()
        .map(|(m, n, x)| refine_intersection(d, *m, *n, x, tol, opts).map(|(tu, ts, r)| (*m, *n, tu, ts, r)))
        .collect();
    let mut orbits: Vec<HomoclinicOrbit> = Vec::new();
    let mut failures = Vec::new();
    for r in refined {
        let (m, n, tu, ts, res) = match r {
            Ok(v) => v,
            Err(e) => {
                failures.push(e);
                continue;
            }
        };
        let Some(o) = labelled_asymmetric(d, m, n, tu, ts, res, opts) else {
            failures.push(HomoclinicError::DegenerateIntersection {
                m,
                n,
                theta_u: tu,
                theta_s: ts,
            });
            continue;
        };
        // points on Fix(R) are the symmetric orbits already found
        if m == n && o.crossings[m - 1].point.x4.abs() < tol.label {
            continue;
        }
        let dup = orbits
            .iter()
            .any(|p| p.order == o.order && (p.seed_theta - tu).abs() < 1e-9 && p.partner_theta.is_some_and(|q| (q - ts).abs() < 1e-9));
        if !dup {
            orbits.push(o);
        }
    }
    sort_orbits(&mut orbits);
    (orbits, failures)
}

/// Independent checks of one orbit obtained by re-propagating its seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitCheck {
    /// Distance of the re-entry point at radius `r*` from `R(D^u)`.
    pub closure_residual: f64,
    /// Crossings with `|x4|` below the closure tolerance.
    pub fixr_contacts: usize,
    /// Largest deviation between the re-propagated crossings and the labels.
    pub label_residual: f64,
    /// Time from the unstable to the stable domain.
    pub transit_time: f64,
    /// Maxima of `x1` above `1/2` along the orbit.
    pub x1_large_maxima: usize,
    /// Sign changes of `x1` along the orbit.
    pub x1_zero_crossings: usize,
}

/// Re-propagates an orbit from its seed through all `α - 1` crossings into
/// the stable domain and measures closure, `Fix(R)` contacts and the
/// supplementary `x1` statistics.
pub fn verify_orbit(
    d: &FundamentalDomain<f64>,
    o: &HomoclinicOrbit,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
) -> Result<OrbitCheck, HomoclinicError> {
    let p = d.params();
    let alpha = o.order;
    let seq = propagate_seed(d, o.seed_theta, alpha - 1, Manifold::Unstable, opts);
    let mut fixr_contacts = 0;
    let mut label_residual: f64 = 0.0;
    for lc in &o.crossings {
        match seq.crossing(lc.i) {
            Some(e) => {
                if e.state.x4.abs() < tol.closure {
                    fixr_contacts += 1;
                }
                let q = SectionPoint::from_event(e, o.branch, o.seed_theta);
                label_residual = label_residual.max(q.distance(&lc.point));
            }
            None => label_residual = f64::INFINITY,
        }
    }
    let s0 = d.sigma(o.seed_theta).map_err(|_| HomoclinicError::Unresolved)?;
    let entry = radius_entry(s0, p, opts, TimeDirection::Forward, alpha - 1, d.r_star())?;
    let (closure_residual, transit_time) = match entry {
        Some((t, s)) => {
            let w = d.coeffs().evaluate(s.x1, -s.x2);
            ((s.x3 - w.x3).abs().max((s.x4 + w.x4).abs()), t)
        }
        None => (f64::INFINITY, f64::NAN),
    };
    let (mut maxima, mut zeros) = (0, 0);
    if transit_time.is_finite() {
        let traj = integrate(s0, p, transit_time, opts)?;
        let samples = ((transit_time / 0.01).ceil() as usize).max(16);
        let xs: Vec<f64> = (0..=samples)
            .map(|i| traj.eval(transit_time * i as f64 / samples as f64).map(|s| s.x1))
            .collect::<Result<_, _>>()?;
        for w in xs.windows(3) {
            if w[1] > w[0] && w[1] >= w[2] && w[1] > 0.5 {
                maxima += 1;
            }
        }
        zeros = xs.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
    }
    Ok(OrbitCheck {
        closure_residual,
        fixr_contacts,
        label_residual,
        transit_time,
        x1_large_maxima: maxima,
        x1_zero_crossings: zeros,
    })
}

/// Serialized form of one labelled crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub label: String,
    pub i: usize,
    pub j: usize,
    pub x1: f64,
    pub x3: f64,
    pub x4: f64,
    pub xbar1: f64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub order: usize,
    pub symmetric: bool,
    pub branch: String,
    pub theta: f64,
    pub partner_theta: Option<f64>,
    pub fixr_x1: Option<f64>,
    pub fixr_x3: Option<f64>,
    pub labels: Vec<String>,
    pub crossings: Vec<CrossingRecord>,
    pub root_residual: f64,
    pub check: Option<OrbitCheck>,
}

/// Structured record of one orbit for the census file.
pub fn orbit_report(o: &HomoclinicOrbit, check: Option<OrbitCheck>) -> OrbitRecord {
    OrbitRecord {
        order: o.order,
        symmetric: o.symmetric,
        branch: o.branch.sign_char().to_string(),
        theta: o.seed_theta,
        partner_theta: o.partner_theta,
        fixr_x1: o.fixr_point.map(|p| p.x1),
        fixr_x3: o.fixr_point.map(|p| p.x3),
        labels: o.labels(),
        crossings: o
            .crossings
            .iter()
            .map(|c| CrossingRecord {
                label: c.label(),
                i: c.i,
                j: c.j,
                x1: c.point.x1,
                x3: c.point.x3,
                x4: c.point.x4,
                xbar1: c.point.xbar1,
                region: c.point.region,
            })
            .collect(),
        root_residual: o.root_residual,
        check,
    }
}

/// Homoclinic census at one parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub eta3: f64,
    pub k_max: usize,
    pub r_star: f64,
    /// True when no trace was cut short by the seed cap and every root
    /// bracket converged; orders up to `2 k_max` are then all reported.
    pub complete: bool,
    pub orbits: Vec<OrbitRecord>,
    pub failures: Vec<DetectionFailure>,
}

impl Census {
    pub fn symmetric_orders(&self) -> Vec<usize> {
        self.orbits.iter().filter(|o| o.symmetric).map(|o| o.order).collect()
    }

    pub fn asymmetric_orders(&self) -> Vec<usize> {
        self.orbits.iter().filter(|o| !o.symmetric).map(|o| o.order).collect()
    }

    pub fn min_order(&self) -> Option<usize> {
        self.orbits.iter().map(|o| o.order).min()
    }
}

/// Full census: symmetric and asymmetric orbits, each verified.
pub fn census(
    d: &FundamentalDomain<f64>,
    bank: &TraceBank,
    tol: &DetectionTolerances,
    opts: &IntegratorOptions<f64>,
    asymmetric: bool,
) -> (Census, Vec<HomoclinicOrbit>) {
    let (mut orbits, mut failures) = find_symmetric_homoclinics(d, bank, tol, opts);
    if asymmetric {
        let (a, f) = find_asymmetric_pairs(d, bank, tol, opts);
        orbits.extend(a);
        failures.extend(f);
    }
    sort_orbits(&mut orbits);
    let records: Vec<OrbitRecord> = orbits
        .par_iter()
        .map(|o| orbit_report(o, verify_orbit(d, o, tol, opts).ok()))
        .collect();
    let capped = bank.branches.iter().any(|b| b.capped);
    (
        Census {
            eta3: d.params().eta3,
            k_max: bank.k_max,
            r_star: d.r_star(),
            complete: !capped && failures.is_empty(),
            orbits: records,
            failures: failures.iter().map(DetectionFailure::from).collect(),
        },
        orbits,
    )
}

//! Parameter sweeps, homoclinic tangencies, iterates of `Fix(R) ∩ C3` under
//! the Poincaré map and symmetric saddle-node periodic orbits.

use std::sync::{Arc as Shared, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{next_section_crossing, IntegratorOptions, PropagationOutcome, TimeDirection};
use crate::homoclinics::{census, Census, DetectionTolerances};
use crate::local_manifold::{compute_coefficients, Branch, FundamentalDomain, ManifoldError, DEFAULT_SERIES_TOL, RADIUS_GRID_START};
use crate::section_geometry::{
    compute_bank, fix_r_seed, propagate_orbit, propagate_seed, refine_family, trace_from_bank, BranchBank, Manifold,
    RefineOptions, SectionPoint, SeedOrbit, TraceCurve,
};
use crate::system::{reversor, Params, State4, SystemError};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("root counts do not differ by two across [{lo}, {hi}] (found {count_lo} and {count_hi})")]
    CountMismatch {
        lo: f64,
        hi: f64,
        count_lo: usize,
        count_hi: usize,
    },
    #[error("arc tracking lost the extremum at eta3 = {eta3}")]
    TrackingLost { eta3: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// Numerical settings shared by the cascade operations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeOptions {
    pub order: usize,
    pub series_tol: f64,
    /// First radius of the halving grid searched for `r*`.
    pub radius_grid_start: f64,
    pub refine: RefineOptions,
    pub integrator: IntegratorOptions<f64>,
    pub detection: DetectionTolerances,
    /// Width below which an η3 bracket is accepted.
    pub param_tol: f64,
    /// η3 steps used to carry an arc across a bracket.
    pub track_steps: usize,
    /// Samples of an arc per extremum search.
    pub arc_samples: usize,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        Self {
            order: 30,
            series_tol: DEFAULT_SERIES_TOL,
            radius_grid_start: RADIUS_GRID_START,
            refine: RefineOptions::default(),
            integrator: IntegratorOptions::default(),
            detection: DetectionTolerances::default(),
            param_tol: 1e-4,
            track_steps: 20,
            arc_samples: 33,
        }
    }
}

/// Fundamental domain at one parameter value.
pub fn domain(eta3: f64, o: &CascadeOptions) -> Result<FundamentalDomain<f64>, CascadeError> {
    let p = Params::bifocal(eta3)?;
    let c = compute_coefficients(p, o.order)?;
    Ok(FundamentalDomain::with_grid(c, o.series_tol, o.radius_grid_start)?)
}

/// Census at one parameter value.
pub fn census_at(eta3: f64, k_max: usize, o: &CascadeOptions) -> Result<Census, CascadeError> {
    let d = domain(eta3, o)?;
    let bank = compute_bank(&d, k_max, Manifold::Unstable, &o.refine, &o.integrator);
    Ok(census(&d, &bank, &o.detection, &o.integrator, true).0)
}

// ---------------------------------------------------------------------------
// Sweeps

/// One orbit of a census as seen by the continuation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub index: usize,
    pub eta3: f64,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakKind {
    /// Two chains of equal order start or end together at neighbouring θ.
    TangencyCandidate,
    /// A chain of another order (or none within the detected range) takes over.
    OrderChange,
    /// One of the censuses involved is incomplete.
    ResolutionLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainBreak {
    pub kind: BreakKind,
    /// Grid interval `[eta_lo, eta_hi]` of the break.
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub theta: f64,
    pub order: usize,
    pub partner_order: Option<usize>,
    /// True for a chain ending, false for a chain starting.
    pub ending: bool,
}

/// An orbit followed across adjacent grid values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub order: usize,
    pub symmetric: bool,
    pub branch: String,
    pub links: Vec<ChainLink>,
    pub start: Option<ChainBreak>,
    pub end: Option<ChainBreak>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub k_max: usize,
    pub censuses: Vec<Result<Census, String>>,
    pub chains: Vec<Chain>,
    pub events: Vec<ChainBreak>,
    /// Minimal detected order per grid value.
    pub min_orders: Vec<Option<usize>>,
    /// Whether the minimal order is non-increasing along the grid.
    pub min_order_monotone: bool,
}

/// Largest θ-distance between a prediction and a matched orbit.
pub const CHAIN_MATCH_TOL: f64 = 0.05;

/// Homoclinic census at every grid value, with continuation chains.
pub fn sweep_homoclinics(grid: &[f64], k_max: usize, o: &CascadeOptions) -> SweepResult {
    let censuses: Vec<Result<Census, String>> = grid
        .par_iter()
        .map(|&eta| {
            log::info!("sweep: eta3 = {eta}");
            census_at(eta, k_max, o).map_err(|e| e.to_string())
        })
        .collect();
    let (chains, events) = build_chains(grid, &censuses);
    let min_orders: Vec<Option<usize>> = censuses
        .iter()
        .map(|c| c.as_ref().ok().and_then(Census::min_order))
        .collect();
    let increasing = grid.windows(2).all(|w| w[1] > w[0]);
    let seq: Vec<usize> = min_orders.iter().flatten().copied().collect();
    let min_order_monotone = if increasing {
        seq.windows(2).all(|w| w[1] <= w[0])
    } else {
        seq.windows(2).all(|w| w[1] >= w[0])
    };
    SweepResult {
        grid: grid.to_vec(),
        k_max,
        censuses,
        chains,
        events,
        min_orders,
        min_order_monotone,
    }
}

fn build_chains(grid: &[f64], censuses: &[Result<Census, String>]) -> (Vec<Chain>, Vec<ChainBreak>) {
    let mut chains: Vec<Chain> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for (gi, c) in censuses.iter().enumerate() {
        let orbits = match c {
            Ok(c) => &c.orbits[..],
            Err(_) => &[],
        };
        let mut taken = vec![false; orbits.len()];
        let mut still_open = Vec::new();
        for &ci in &open {
            let ch = &chains[ci];
            let last = ch.links[ch.links.len() - 1];
            let pred = if ch.links.len() >= 2 {
                let prev = ch.links[ch.links.len() - 2];
                last.theta + (last.theta - prev.theta) * (grid[gi] - last.eta3) / (last.eta3 - prev.eta3)
            } else {
                last.theta
            };
            let best = orbits
                .iter()
                .enumerate()
                .filter(|(j, r)| !taken[*j] && r.order == ch.order && r.symmetric == ch.symmetric && r.branch == ch.branch)
                .map(|(j, r)| (j, (r.theta - pred).abs()))
                .filter(|(_, dist)| *dist < CHAIN_MATCH_TOL)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, _)) = best {
                taken[j] = true;
                chains[ci].links.push(ChainLink {
                    index: gi,
                    eta3: grid[gi],
                    theta: orbits[j].theta,
                });
                still_open.push(ci);
            }
        }
        for (j, r) in orbits.iter().enumerate() {
            if taken[j] {
                continue;
            }
            chains.push(Chain {
                order: r.order,
                symmetric: r.symmetric,
                branch: r.branch.clone(),
                links: vec![ChainLink {
                    index: gi,
                    eta3: grid[gi],
                    theta: r.theta,
                }],
                start: None,
                end: None,
            });
            still_open.push(chains.len() - 1);
        }
        open = still_open;
    }
    annotate_breaks(grid, censuses, &mut chains)
}

fn annotate_breaks(grid: &[f64], censuses: &[Result<Census, String>], chains: &mut [Chain]) -> (Vec<Chain>, Vec<ChainBreak>) {
    let n = grid.len();
    let complete = |i: usize| censuses[i].as_ref().is_ok_and(|c| c.complete);
    // (chain, grid interval, ending)
    let mut ends: Vec<(usize, usize, bool)> = Vec::new();
    for (ci, ch) in chains.iter().enumerate() {
        let first = ch.links[0].index;
        let last = ch.links[ch.links.len() - 1].index;
        if first > 0 {
            ends.push((ci, first - 1, false));
        }
        if last + 1 < n {
            ends.push((ci, last, true));
        }
    }
    let theta_at = |ch: &Chain, ending: bool| {
        if ending {
            ch.links[ch.links.len() - 1].theta
        } else {
            ch.links[0].theta
        }
    };
    let mut events = Vec::new();
    for &(ci, gi, ending) in &ends {
        let ch = &chains[ci];
        let th = theta_at(ch, ending);
        let near = |&&(cj, gj, e2): &&(usize, usize, bool)| {
            cj != ci && gj == gi && (theta_at(&chains[cj], e2) - th).abs() < 4.0 * CHAIN_MATCH_TOL
        };
        let same_order_pair = ends
            .iter()
            .filter(near)
            .any(|&(cj, _, e2)| e2 == ending && chains[cj].order == ch.order && chains[cj].symmetric == ch.symmetric);
        let other = ends
            .iter()
            .filter(near)
            .filter(|&&(cj, _, e2)| e2 != ending && chains[cj].order != ch.order)
            .map(|&(cj, _, _)| chains[cj].order)
            .next();
        let kind = if same_order_pair {
            BreakKind::TangencyCandidate
        } else if !complete(gi) || !complete(gi + 1) {
            BreakKind::ResolutionLoss
        } else {
            BreakKind::OrderChange
        };
        events.push((
            ci,
            ChainBreak {
                kind,
                eta_lo: grid[gi],
                eta_hi: grid[gi + 1],
                theta: th,
                order: ch.order,
                partner_order: if kind == BreakKind::OrderChange { other } else { None },
                ending,
            },
        ));
    }
    let mut out_chains = chains.to_vec();
    for (ci, ev) in &events {
        if ev.ending {
            out_chains[*ci].end = Some(*ev);
        } else {
            out_chains[*ci].start = Some(*ev);
        }
    }
    let mut evs: Vec<ChainBreak> = events.into_iter().map(|(_, e)| e).collect();
    evs.sort_by(|a, b| a.eta_lo.total_cmp(&b.eta_lo).then(a.theta.total_cmp(&b.theta)));
    (out_chains, evs)
}

/// Parses `lo:hi:step` into an inclusive, strictly monotone grid.
pub fn parse_grid(spec: &str) -> Option<Vec<f64>> {
    let parts: Vec<f64> = spec.split(':').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
    let [lo, hi, step] = parts[..] else { return None };
    if !(step != 0.0 && step.is_finite() && lo.is_finite() && hi.is_finite()) || (hi - lo) * step < 0.0 {
        return None;
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // round to the step's decimal resolution to keep grid values clean
    let digits = (-step.abs().log10()).ceil().max(0.0) as i32 + 2;
    let scale = 10f64.powi(digits);
    Some((0..=n).map(|i| ((lo + step * i as f64) * scale).round() / scale).collect())
}

// ---------------------------------------------------------------------------
// Arc tracking

/// A one-parameter family of section points depending on η3.
pub trait ArcFamily: Sync {
    /// Tracked section point for family parameter `s` at `eta3`.
    fn point(&self, eta3: f64, s: f64) -> Option<SectionPoint>;
    /// Admissible range of `s`.
    fn bounds(&self) -> (f64, f64);
}

/// The `k`-th crossing of the unstable manifold, parametrized by θ.
pub struct TraceArc {
    pub k: usize,
    pub opts: CascadeOptions,
    cache: Mutex<Vec<(u64, Shared<FundamentalDomain<f64>>)>>,
}

impl TraceArc {
    pub fn new(k: usize, opts: CascadeOptions) -> Self {
        Self {
            k,
            opts,
            cache: Mutex::new(Vec::new()),
        }
    }

    fn domain(&self, eta3: f64) -> Option<Shared<FundamentalDomain<f64>>> {
        let key = eta3.to_bits();
        if let Some((_, d)) = self.cache.lock().ok()?.iter().find(|(k, _)| *k == key) {
            return Some(d.clone());
        }
        let d = Shared::new(domain(eta3, &self.opts).ok()?);
        let mut c = self.cache.lock().ok()?;
        if c.len() >= 16 {
            c.remove(0);
        }
        c.push((key, d.clone()));
        Some(d)
    }
}

impl ArcFamily for TraceArc {
    fn point(&self, eta3: f64, s: f64) -> Option<SectionPoint> {
        let d = self.domain(eta3)?;
        let o = propagate_seed(&d, s, self.k, Manifold::Unstable, &self.opts.integrator);
        o.crossing(self.k).map(|e| SectionPoint::from_event(e, Branch::of_angle(s), s))
    }

    fn bounds(&self) -> (f64, f64) {
        (0.0, 2.0 * std::f64::consts::PI)
    }
}

/// `Π^n` of `Fix(R) ∩ C3`, parametrized by the seed abscissa.
pub struct FixRArc {
    pub n: usize,
    pub opts: CascadeOptions,
}

impl ArcFamily for FixRArc {
    fn point(&self, eta3: f64, s: f64) -> Option<SectionPoint> {
        let p = Params::new(eta3).ok()?;
        let o = fix_r_orbit(p, s, self.n, &self.opts.integrator);
        o.crossing(self.n).map(|e| SectionPoint::from_event(e, Branch::Plus, s))
    }

    fn bounds(&self) -> (f64, f64) {
        (FIXR_MARGIN, 1.5 - FIXR_MARGIN)
    }
}

/// Interval of the family parameter between two consecutive roots of `x4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub lo: f64,
    pub hi: f64,
    /// `+1` when the arc bulges towards `x4 > 0`.
    pub sign: f64,
}

/// Tip of a tentacle: a local maximum of `sign * x4` along the family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tip {
    pub eta3: f64,
    pub s: f64,
    pub sign: f64,
    /// Positive when the lobe around the tip crosses `Fix(R)`.
    pub value: f64,
    pub point: SectionPoint,
    /// Sign changes of `x4` on the lobe around the tip.
    pub roots: usize,
}

impl Tip {
    fn plane(&self) -> [f64; 2] {
        [self.point.xbar1, self.point.x4]
    }
}

fn plane_gap(a: &SectionPoint, b: &SectionPoint) -> f64 {
    (a.xbar1 - b.xbar1).hypot(a.x4 - b.x4)
}

/// Samples of the family on `[lo, hi]`, bisected until neighbours are
/// closer than `delta` in the projected plane, cut into continuous pieces.
pub fn local_curve(f: &dyn ArcFamily, eta3: f64, lo: f64, hi: f64, delta: f64, max_points: usize) -> Vec<Vec<SectionPoint>> {
    let n0 = 65;
    let ss: Vec<f64> = (0..n0).map(|i| lo + (hi - lo) * i as f64 / (n0 - 1) as f64).collect();
    let mut pts: Vec<(f64, Option<SectionPoint>)> = ss.par_iter().map(|&s| (s, f.point(eta3, s))).collect();
    let min_ds = 1e-13 * lo.abs().max(hi.abs()).max(1.0);
    let far = |a: &(f64, Option<SectionPoint>), b: &(f64, Option<SectionPoint>)| match (&a.1, &b.1) {
        (Some(p), Some(q)) => plane_gap(p, q) > delta,
        (None, None) => false,
        _ => true,
    };
    loop {
        let mids: Vec<f64> = pts
            .windows(2)
            .filter(|w| far(&w[0], &w[1]) && w[1].0 - w[0].0 > min_ds)
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .collect();
        if mids.is_empty() || pts.len() + mids.len() > max_points {
            break;
        }
        let new: Vec<(f64, Option<SectionPoint>)> = mids.par_iter().map(|&s| (s, f.point(eta3, s))).collect();
        let mut merged = Vec::with_capacity(pts.len() + new.len());
        let mut it = new.into_iter().peekable();
        for p in pts {
            while it.peek().is_some_and(|q| q.0 < p.0) {
                merged.extend(it.next());
            }
            merged.push(p);
        }
        merged.extend(it);
        pts = merged;
    }
    let mut pieces: Vec<Vec<SectionPoint>> = Vec::new();
    let mut cur: Vec<SectionPoint> = Vec::new();
    for (i, (_, p)) in pts.iter().enumerate() {
        let joined = i > 0 && !far(&pts[i - 1], &pts[i]);
        if !joined && !cur.is_empty() {
            pieces.push(std::mem::take(&mut cur));
        }
        if let Some(p) = p {
            cur.push(*p);
        }
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    pieces
}

/// Interior local maxima of `sign * x4` on a piece.
fn tip_indices(piece: &[SectionPoint], sign: f64) -> Vec<usize> {
    (1..piece.len().saturating_sub(1))
        .filter(|&i| {
            let (a, b, c) = (sign * piece[i - 1].x4, sign * piece[i].x4, sign * piece[i + 1].x4);
            b >= a && b >= c && (b > a || b > c)
        })
        .collect()
}

/// Sign changes of `x4` between the local minima of `sign * x4` that
/// enclose sample `i`.
fn lobe_roots(piece: &[SectionPoint], i: usize, sign: f64) -> usize {
    let v = |j: usize| sign * piece[j].x4;
    let mut l = i;
    while l > 0 && v(l - 1) <= v(l) {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < piece.len() && v(r + 1) <= v(r) {
        r += 1;
    }
    piece[l..=r].windows(2).filter(|w| (w[0].x4 < 0.0) != (w[1].x4 < 0.0)).count()
}

/// Golden-section maximum of `sign * x4` on `[a, b]`, never below `floor`.
fn golden_tip(f: &dyn ArcFamily, eta3: f64, mut a: f64, mut b: f64, sign: f64, floor: SectionPoint) -> SectionPoint {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |s: f64| f.point(eta3, s);
    let val = |p: &Option<SectionPoint>| p.as_ref().map_or(f64::NEG_INFINITY, |p| sign * p.x4);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut pc, mut pd) = (eval(c), eval(d));
    for _ in 0..80 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        if val(&pc) > val(&pd) {
            b = d;
            d = c;
            pd = pc;
            c = b - g * (b - a);
            pc = eval(c);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + g * (b - a);
            pd = eval(d);
        }
    }
    [pc, pd].into_iter().flatten().chain([floor]).max_by(|p, q| (sign * p.x4).total_cmp(&(sign * q.x4))).unwrap_or(floor)
}

fn refine_tip(f: &dyn ArcFamily, eta3: f64, piece: &[SectionPoint], i: usize, sign: f64) -> Tip {
    let p = golden_tip(f, eta3, piece[i - 1].theta, piece[i + 1].theta, sign, piece[i]);
    Tip {
        eta3,
        s: p.theta,
        sign,
        value: sign * p.x4,
        point: p,
        roots: lobe_roots(piece, i, sign),
    }
}

/// Tips of both signs on a family window.
pub fn tips_on(f: &dyn ArcFamily, eta3: f64, lo: f64, hi: f64, o: &CascadeOptions) -> Vec<Tip> {
    let mut out = Vec::new();
    for piece in local_curve(f, eta3, lo, hi, o.refine.delta, o.refine.max_seeds) {
        for sign in [1.0, -1.0] {
            for i in tip_indices(&piece, sign) {
                out.push(refine_tip(f, eta3, &piece, i, sign));
            }
        }
    }
    out
}

/// Prediction of a tip at a nearby parameter value.
#[derive(Clone, Copy, Debug)]
struct Prediction {
    s: f64,
    plane: [f64; 2],
    /// Half-width of the family window searched first.
    half: f64,
    /// Largest plane distance accepted for identification.
    reach: f64,
}

/// Smallest plane distance accepted when identifying a tip.
const REACH_FLOOR: f64 = 2e-3;

/// Tip of the given sign nearest the predicted plane location. The family
/// window is inflated 2x (up to six times) while no tip qualifies.
fn find_tip(f: &dyn ArcFamily, eta3: f64, sign: f64, pred: Prediction, o: &CascadeOptions) -> Option<(Tip, f64)> {
    let (blo, bhi) = f.bounds();
    let mut half = pred.half;
    let dist = |p: &SectionPoint| (p.xbar1 - pred.plane[0]).hypot(p.x4 - pred.plane[1]);
    for _ in 0..7 {
        let (lo, hi) = ((pred.s - half).max(blo), (pred.s + half).min(bhi));
        let mut best: Option<(f64, Tip)> = None;
        for piece in local_curve(f, eta3, lo, hi, o.refine.delta, o.refine.max_seeds) {
            for i in tip_indices(&piece, sign) {
                // samples resolve the plane to within `delta`
                if dist(&piece[i]) > pred.reach + o.refine.delta {
                    continue;
                }
                let t = refine_tip(f, eta3, &piece, i, sign);
                let d = dist(&t.point);
                if d <= pred.reach && best.as_ref().is_none_or(|b| d < b.0) {
                    best = Some((d, t));
                }
            }
        }
        if let Some((_, t)) = best {
            return Some((t, half));
        }
        half *= 2.0;
    }
    None
}

fn predict(a: &Tip, b: &Tip, eta3: f64, half: f64) -> Prediction {
    let w = if b.eta3 != a.eta3 { (eta3 - b.eta3) / (b.eta3 - a.eta3) } else { 0.0 };
    let (pa, pb) = (a.plane(), b.plane());
    let plane = [pb[0] + w * (pb[0] - pa[0]), pb[1] + w * (pb[1] - pa[1])];
    let moved = (plane[0] - pb[0]).hypot(plane[1] - pb[1]);
    let ds = w * (b.s - a.s);
    Prediction {
        s: b.s + ds,
        plane,
        half: half.max(2.0 * ds.abs()),
        reach: (0.5 * moved).max(REACH_FLOOR),
    }
}

/// Fold of a tracked tentacle: the parameter where its tip touches `Fix(R)`
/// and the two roots of its lobe merge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub eta3_star: f64,
    pub bracket: (f64, f64),
    pub s_star: f64,
    pub point: SectionPoint,
    pub sign: f64,
    /// Tip where tracking started and at the target parameter.
    pub start: Tip,
    pub end: Tip,
    /// Tips on either side of the final bisection bracket.
    pub near: (Tip, Tip),
    /// Family window half-width in use at the fold.
    pub half_width: f64,
    /// `(eta3, tip value)` visited by the continuation and bisection.
    pub history: Vec<(f64, f64)>,
}

/// Carries a tip from `start.eta3` to `eta_to`, identifying it at each step
/// by its predicted location in the projected plane, and bisects the first
/// sign change of the tip value. Steps start at `1/track_steps` of the
/// range and are halved (down to 1/256 of that) when identification fails.
pub fn track_fold(f: &dyn ArcFamily, start: &Tip, half: f64, eta_to: f64, o: &CascadeOptions) -> Result<Option<Fold>, CascadeError> {
    let d_eta = (eta_to - start.eta3) / o.track_steps.max(1) as f64;
    let dir = d_eta.signum();
    let lost = |eta3| CascadeError::TrackingLost { eta3 };
    // short probe step for the initial velocity
    let probe_eta = start.eta3 + 0.05 * d_eta;
    let still = Prediction {
        s: start.s,
        plane: start.plane(),
        half,
        reach: REACH_FLOOR,
    };
    let (probe, mut h) = find_tip(f, probe_eta, start.sign, still, o).ok_or(lost(probe_eta))?;
    let mut history = vec![(start.eta3, start.value), (probe.eta3, probe.value)];
    let (mut prev, mut cur) = (*start, probe);
    let mut first: Option<(Tip, Tip)> = ((probe.value > 0.0) != (start.value > 0.0)).then_some((*start, probe));
    let mut step = 0.25 * d_eta;
    while (eta_to - cur.eta3) * dir > 0.0 {
        let eta = if (cur.eta3 + step - eta_to) * dir >= 0.0 { eta_to } else { cur.eta3 + step };
        let Some((next, nh)) = find_tip(f, eta, start.sign, predict(&prev, &cur, eta, h), o) else {
            if step.abs() <= d_eta.abs() / 256.0 {
                return Err(lost(eta));
            }
            step *= 0.5;
            continue;
        };
        h = nh.min(half.max(4.0 * (next.s - cur.s).abs()));
        history.push((eta, next.value));
        if first.is_none() && (next.value > 0.0) != (cur.value > 0.0) {
            first = Some((cur, next));
        }
        prev = cur;
        cur = next;
        step = (2.0 * step).abs().min(d_eta.abs()) * dir;
    }
    let end = cur;
    let Some((a, b)) = first else {
        return Ok(None);
    };
    bisect_fold(f, a, b, h, history, *start, end, o).map(Some)
}

#[allow(clippy::too_many_arguments)]
fn bisect_fold(
    f: &dyn ArcFamily,
    mut a: Tip,
    mut b: Tip,
    half: f64,
    mut history: Vec<(f64, f64)>,
    start: Tip,
    end: Tip,
    o: &CascadeOptions,
) -> Result<Fold, CascadeError> {
    while (b.eta3 - a.eta3).abs() > o.param_tol {
        let eta = 0.5 * (a.eta3 + b.eta3);
        let mut pred = predict(&a, &b, eta, half);
        pred.half = half.max(2.0 * (b.s - a.s).abs());
        let (m, _) = find_tip(f, eta, a.sign, pred, o).ok_or(CascadeError::TrackingLost { eta3: eta })?;
        history.push((eta, m.value));
        if (m.value > 0.0) == (a.value > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    // linear interpolation of the tip value inside the final bracket
    let w = a.value / (a.value - b.value);
    let eta3_star = a.eta3 + w * (b.eta3 - a.eta3);
    let pos = if a.value > 0.0 { a } else { b };
    Ok(Fold {
        eta3_star,
        bracket: (a.eta3.min(b.eta3), a.eta3.max(b.eta3)),
        s_star: pos.s,
        point: pos.point,
        sign: a.sign,
        start,
        end,
        near: (a, b),
        half_width: half,
        history,
    })
}

/// Homoclinic tangency found on `Σ_k^u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyEvent {
    pub eta3_star: f64,
    pub k: usize,
    pub bracket: (f64, f64),
    pub theta_star: f64,
    pub kind: String,
    pub point: SectionPoint,
    /// Roots on the tracked lobe at the two ends of the requested bracket,
    /// in the order `(lo, hi)`.
    pub counts: (usize, usize),
    pub history: Vec<(f64, f64)>,
}

/// Candidate arcs at one parameter value: the stretch of a trace between two
/// consecutive roots of `x4` on the same piece.
pub fn root_pair_arcs(t: &TraceCurve) -> Vec<Arc> {
    let mut out = Vec::new();
    let mut prev_root: Option<(usize, f64)> = None;
    for (i, w) in t.samples.windows(2).enumerate() {
        if t.is_split(i) {
            prev_root = None;
            continue;
        }
        let (a, b) = (&w[0], &w[1]);
        if (a.x4 < 0.0) == (b.x4 < 0.0) {
            continue;
        }
        if let Some((j, th)) = prev_root {
            let sign = if t.samples[j + 1].x4 > 0.0 { 1.0 } else { -1.0 };
            out.push(Arc {
                lo: th,
                hi: b.theta,
                sign,
            });
        }
        prev_root = Some((i, a.theta));
    }
    out
}

/// Tip with positive value on a root-pair arc.
fn arc_tip(f: &dyn ArcFamily, eta3: f64, arc: &Arc, o: &CascadeOptions) -> Option<Tip> {
    let pieces = local_curve(f, eta3, arc.lo, arc.hi, o.refine.delta, o.refine.max_seeds);
    pieces
        .iter()
        .flat_map(|p| tip_indices(p, arc.sign).into_iter().map(move |i| refine_tip(f, eta3, p, i, arc.sign)))
        .filter(|t| t.value > 0.0)
        .max_by(|a, b| a.value.total_cmp(&b.value))
}

/// All homoclinic tangencies on `Σ_k^u` between two parameter values: lobes
/// crossing `Fix(R)` at one end, followed until their tip detaches.
pub fn locate_tangencies(bracket: (f64, f64), k: usize, o: &CascadeOptions) -> Result<Vec<TangencyEvent>, CascadeError> {
    let (lo, hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    let fam = TraceArc::new(k, *o);
    let mut events: Vec<TangencyEvent> = Vec::new();
    for (from, to) in [(hi, lo), (lo, hi)] {
        let d = domain(from, o)?;
        let bank = compute_bank(&d, k, Manifold::Unstable, &o.refine, &o.integrator);
        let mut arcs = Vec::new();
        for bb in &bank.branches {
            arcs.extend(root_pair_arcs(&trace_from_bank(bb, k, Manifold::Unstable, o.refine.delta)));
        }
        log::info!("eta3 = {from}: tracking {} lobes of trace {k}", arcs.len());
        for arc in &arcs {
            let Some(start) = arc_tip(&fam, from, arc, o) else { continue };
            let half = (arc.hi - arc.lo).max(1e-9);
            let fold = match track_fold(&fam, &start, half, to, o) {
                Ok(Some(f)) => f,
                Ok(None) => continue,
                Err(e) => {
                    log::debug!("lobe near theta = {}: {e}", start.s);
                    continue;
                }
            };
            let counts = if from == lo { (fold.start.roots, fold.end.roots) } else { (fold.end.roots, fold.start.roots) };
            events.push(TangencyEvent {
                eta3_star: fold.eta3_star,
                k,
                bracket: fold.bracket,
                theta_star: fold.s_star,
                kind: "fix_r_tangency".into(),
                point: fold.point,
                counts,
                history: fold.history,
            });
        }
    }
    events.sort_by(|a, b| a.eta3_star.total_cmp(&b.eta3_star).then(a.theta_star.total_cmp(&b.theta_star)));
    events.dedup_by(|a, b| (a.eta3_star - b.eta3_star).abs() < 2.0 * o.param_tol && (a.theta_star - b.theta_star).abs() < 1e-3);
    Ok(events)
}

/// The tangency of a bracket: among events whose lobe counts differ by two,
/// the one nearest the bracket centre. Returns
/// [`CascadeError::CountMismatch`] when no tracked lobe gains or loses a
/// pair of roots.
pub fn locate_tangency(bracket: (f64, f64), k: usize, o: &CascadeOptions) -> Result<(TangencyEvent, Vec<TangencyEvent>), CascadeError> {
    let all = locate_tangencies(bracket, k, o)?;
    let mid = 0.5 * (bracket.0 + bracket.1);
    let best = all
        .iter()
        .filter(|e| e.counts.0.abs_diff(e.counts.1) == 2)
        .min_by(|a, b| (a.eta3_star - mid).abs().total_cmp(&(b.eta3_star - mid).abs()))
        .cloned();
    match best {
        Some(e) => Ok((e, all)),
        None => Err(CascadeError::CountMismatch {
            lo: bracket.0.min(bracket.1),
            hi: bracket.0.max(bracket.1),
            count_lo: 0,
            count_hi: 0,
        }),
    }
}

// ---------------------------------------------------------------------------
// Poincaré map on Fix(R) ∩ C3

/// Margin that keeps Fix(R) seeds away from the equilibrium and from `v2`.
pub const FIXR_MARGIN: f64 = 1e-4;

/// Crossing sequence of the Fix(R) seed at abscissa `x1`.
pub fn fix_r_orbit(p: Params<f64>, x1: f64, n: usize, opts: &IntegratorOptions<f64>) -> SeedOrbit {
    propagate_orbit(fix_r_seed(x1), p, TimeDirection::Forward, n, x1, opts)
}

/// Images `Π^j(Fix(R) ∩ C3)`, `j = 1..n`, adaptively refined in `x1`.
/// Samples carry the seed abscissa in their `theta` field.
#[derive(Clone, Debug)]
pub struct FixRImages {
    pub eta3: f64,
    pub n: usize,
    pub bank: BranchBank,
    pub curves: Vec<TraceCurve>,
}

pub fn iterate_fix_r(p: Params<f64>, n: usize, seed_grid: usize, o: &CascadeOptions) -> FixRImages {
    let (lo, hi) = (FIXR_MARGIN, 1.5 - FIXR_MARGIN);
    let m = seed_grid.max(2);
    let xs: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let (seeds, capped) = refine_family(xs, |x| fix_r_orbit(p, x, n, &o.integrator), n, &o.refine);
    let bank = BranchBank {
        branch: Branch::Plus,
        interval: (lo, hi),
        seeds,
        capped,
    };
    let curves = (0..=n).map(|j| fix_r_curve(&bank, j, o.refine.delta)).collect();
    FixRImages {
        eta3: p.eta3,
        n,
        bank,
        curves,
    }
}

fn fix_r_curve(bank: &BranchBank, j: usize, delta: f64) -> TraceCurve {
    if j > 0 {
        return trace_from_bank(bank, j, Manifold::Unstable, delta);
    }
    let samples = bank
        .seeds
        .iter()
        .map(|s| {
            let st = fix_r_seed(s.theta);
            let e = crate::flow::CrossingEvent {
                state: st,
                t: 0.0,
                direction: -1,
                tangential: false,
                k: 0,
            };
            SectionPoint::from_event(&e, Branch::Plus, s.theta)
        })
        .collect();
    TraceCurve {
        k: 0,
        branch: Branch::Plus,
        manifold: Manifold::Unstable,
        samples,
        gaps: Vec::new(),
    }
}

/// Residual of `Π(R̂ Π(s)) = R̂ s` for a seed on the section.
pub fn poincare_reversibility_residual(s: State4<f64>, p: Params<f64>, opts: &IntegratorOptions<f64>) -> Option<f64> {
    let PropagationOutcome::Crossed(e) = next_section_crossing(s, p, opts, TimeDirection::Forward).ok()? else {
        return None;
    };
    let back = reversor(e.state);
    let PropagationOutcome::Crossed(e2) = next_section_crossing(back, p, opts, TimeDirection::Forward).ok()? else {
        return None;
    };
    Some(e2.state.distance(&reversor(s)))
}

/// Section window in the projected plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xbar1: (f64, f64),
}

impl Window {
    pub fn contains(&self, p: &SectionPoint) -> bool {
        p.xbar1 > self.xbar1.0 && p.xbar1 < self.xbar1.1
    }
}

/// Symmetric periodic orbit through `Fix(R) ∩ C3` and `Π^n` of that point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub eta3: f64,
    pub n: usize,
    pub seed_x1: f64,
    pub seed: State4<f64>,
    /// `Π^n(seed)`, the second `Fix(R)` point.
    pub image: SectionPoint,
    pub period: f64,
    pub crossings_per_period: usize,
    /// Crossings of one period with `|x4|` below the label tolerance.
    pub fixr_contacts: usize,
    /// Distance to the seed after one period.
    pub closure_residual: f64,
    pub crossings: Vec<State4<f64>>,
}

fn x4_of_fixr(p: Params<f64>, x1: f64, n: usize, opts: &IntegratorOptions<f64>) -> Option<(f64, SeedOrbit)> {
    let o = fix_r_orbit(p, x1, n, opts);
    let x4 = o.crossing(n)?.state.x4;
    Some((x4, o))
}

fn refine_fixr_root(p: Params<f64>, n: usize, mut a: (f64, f64), mut b: (f64, f64), tol: f64, opts: &IntegratorOptions<f64>) -> Option<f64> {
    let mut best = (f64::INFINITY, 0.5 * (a.0 + b.0));
    for it in 0..200 {
        let (l, h) = (a.0.min(b.0), a.0.max(b.0));
        let mut c = (a.0 * b.1 - b.0 * a.1) / (b.1 - a.1);
        if !(c > l && c < h) || it % 8 == 7 {
            c = 0.5 * (a.0 + b.0);
        }
        if c <= l || c >= h {
            break;
        }
        let (fc, _) = x4_of_fixr(p, c, n, opts)?;
        if fc.abs() < best.0 {
            best = (fc.abs(), c);
        }
        if fc.abs() < tol {
            break;
        }
        if (fc < 0.0) != (b.1 < 0.0) {
            a = b;
        } else {
            a.1 *= 0.5;
        }
        b = (c, fc);
    }
    (best.0 < 1e2 * tol).then_some(best.1)
}

/// Periodic orbit data for a converged Fix(R) root.
pub fn periodic_orbit_at(p: Params<f64>, x1: f64, n: usize, o: &CascadeOptions) -> Option<PeriodicOrbit> {
    let seq = fix_r_orbit(p, x1, 2 * n, &o.integrator);
    if seq.crossings.len() < 2 * n {
        return None;
    }
    let image = SectionPoint::from_event(seq.crossing(n)?, Branch::Plus, x1);
    let last = seq.crossing(2 * n)?;
    let seed = fix_r_seed(x1);
    let fixr_contacts = seq.crossings.iter().filter(|e| e.state.x4.abs() < o.detection.closure).count();
    Some(PeriodicOrbit {
        eta3: p.eta3,
        n,
        seed_x1: x1,
        seed,
        image,
        period: last.t,
        crossings_per_period: 2 * n,
        fixr_contacts,
        closure_residual: last.state.distance(&seed),
        crossings: seq.crossings.iter().map(|e| e.state).collect(),
    })
}

/// Symmetric periodic orbits with `2n` crossings whose `n`-th crossing lies
/// in the window: roots in `x1` of `x4(Π^n)` on `Fix(R) ∩ C3`.
pub fn find_symmetric_periodic_orbits(
    p: Params<f64>,
    n: usize,
    window: Option<Window>,
    images: &FixRImages,
    o: &CascadeOptions,
) -> (Vec<PeriodicOrbit>, Vec<f64>) {
    let curve = &images.curves[n];
    let mut brackets = Vec::new();
    for (i, w) in curve.samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if curve.is_split(i) || (a.x4 < 0.0) == (b.x4 < 0.0) {
            continue;
        }
        if let Some(win) = window {
            if !win.contains(a) && !win.contains(b) {
                continue;
            }
        }
        brackets.push(((a.theta, a.x4), (b.theta, b.x4)));
    }
    let roots: Vec<Result<PeriodicOrbit, f64>> = brackets
        .par_iter()
        .map(|&(a, b)| {
            let x = refine_fixr_root(p, n, a, b, o.detection.root, &o.integrator).ok_or(a.0)?;
            periodic_orbit_at(p, x, n, o).ok_or(x)
        })
        .collect();
    let mut orbits = Vec::new();
    let mut failed = Vec::new();
    for r in roots {
        match r {
            Ok(po) if window.is_none_or(|w| w.contains(&po.image)) => orbits.push(po),
            Ok(_) => {}
            Err(x) => failed.push(x),
        }
    }
    orbits.sort_by(|a, b| a.seed_x1.total_cmp(&b.seed_x1));
    (orbits, failed)
}

// ---------------------------------------------------------------------------
// Saddle-node periodic orbits

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleNodeCandidate {
    pub eta3_star: f64,
    pub bracket: (f64, f64),
    pub n: usize,
    /// Fix(R) ∩ C3 seed at the fold.
    pub seed_x1: f64,
    pub point: SectionPoint,
    pub crossings_per_period: usize,
    /// Periodic orbits on the tracked lobe at `eta3_star -/+ offset`.
    pub validation: ((f64, usize), (f64, usize)),
    /// Root separation against distance to the fold, and the fitted exponent.
    pub scaling: Vec<(f64, f64)>,
    pub scaling_exponent: Option<f64>,
    pub history: Vec<(f64, f64)>,
}

/// Tips of `Π^n(Fix(R) ∩ C3)` inside the window, nearest to `Fix(R)` first.
pub fn window_tips(f: &dyn ArcFamily, images: &FixRImages, window: Window) -> Vec<Tip> {
    let curve = &images.curves[images.n];
    let mut out = Vec::new();
    for piece in curve.pieces() {
        for sign in [1.0, -1.0] {
            for i in tip_indices(piece, sign) {
                if window.contains(&piece[i]) {
                    out.push(refine_tip(f, images.eta3, piece, i, sign));
                }
            }
        }
    }
    out.sort_by(|a, b| a.value.abs().total_cmp(&b.value.abs()).then(a.s.total_cmp(&b.s)));
    out
}

/// Tip of the tracked lobe at `eta3`, extrapolated from the fold bracket.
fn tip_near_fold(f: &dyn ArcFamily, fold: &Fold, eta3: f64, o: &CascadeOptions) -> Option<Tip> {
    let (a, b) = fold.near;
    let (a, b) = if (eta3 - a.eta3).abs() < (eta3 - b.eta3).abs() { (b, a) } else { (a, b) };
    find_tip(f, eta3, fold.sign, predict(&a, &b, eta3, fold.half_width), o).map(|t| t.0)
}

/// Scans `eta3` over `[center - span, center + span]` for a fold of a lobe
/// of `Π^n(Fix(R) ∩ C3)` inside the window and bisects it.
pub fn locate_saddle_node(
    center: f64,
    span: f64,
    n: usize,
    window: Window,
    seed_grid: usize,
    o: &CascadeOptions,
) -> Result<SaddleNodeCandidate, CascadeError> {
    let p = Params::bifocal(center)?;
    let fam = FixRArc { n, opts: *o };
    let images = iterate_fix_r(p, n, seed_grid, o);
    let tips = window_tips(&fam, &images, window);
    log::info!("{} lobe tips in the window", tips.len());
    let mut best: Option<Fold> = None;
    for tip in tips.iter().take(8) {
        for to in [center - span, center + span] {
            let half = 1e-3;
            let fold = match track_fold(&fam, tip, half, to, o) {
                Ok(Some(f)) => f,
                Ok(None) => continue,
                Err(e) => {
                    log::debug!("lobe near x1 = {}: {e}", tip.s);
                    continue;
                }
            };
            if best.as_ref().is_none_or(|b| (fold.eta3_star - center).abs() < (b.eta3_star - center).abs()) {
                best = Some(fold);
            }
        }
    }
    let fold = best.ok_or(CascadeError::CountMismatch {
        lo: center - span,
        hi: center + span,
        count_lo: 0,
        count_hi: 0,
    })?;
    let offset = 1e-3;
    let count = |eta: f64| tip_near_fold(&fam, &fold, eta, o).map_or(0, |t| if t.value > 0.0 { t.roots } else { 0 });
    let (lo_eta, hi_eta) = (fold.eta3_star - offset, fold.eta3_star + offset);
    let validation = ((lo_eta, count(lo_eta)), (hi_eta, count(hi_eta)));
    let (scaling, scaling_exponent) = fold_scaling(&fam, &fold, o);
    Ok(SaddleNodeCandidate {
        eta3_star: fold.eta3_star,
        bracket: fold.bracket,
        n,
        seed_x1: fold.s_star,
        point: fold.point,
        crossings_per_period: 2 * n,
        validation,
        scaling,
        scaling_exponent,
        history: fold.history,
    })
}

/// The two roots of `x4` enclosing the tip, bisected in the family
/// parameter.
pub fn lobe_root_pair(f: &dyn ArcFamily, tip: &Tip, half: f64, o: &CascadeOptions) -> Option<(f64, f64)> {
    if tip.value <= 0.0 {
        return None;
    }
    let (blo, bhi) = f.bounds();
    let pieces = local_curve(f, tip.eta3, (tip.s - half).max(blo), (tip.s + half).min(bhi), o.refine.delta, o.refine.max_seeds);
    let piece = pieces
        .iter()
        .filter(|p| p.first().is_some_and(|a| a.theta <= tip.s) && p.last().is_some_and(|b| b.theta >= tip.s))
        .next()?;
    let i = piece.iter().position(|p| p.theta >= tip.s)?;
    let g = |s: f64| f.point(tip.eta3, s).map(|p| tip.sign * p.x4);
    let bisect = |mut inside: f64, mut outside: f64| -> Option<f64> {
        for _ in 0..100 {
            let m = 0.5 * (inside + outside);
            if m == inside || m == outside {
                break;
            }
            if g(m)? > 0.0 {
                inside = m;
            } else {
                outside = m;
            }
        }
        Some(0.5 * (inside + outside))
    };
    let v = |j: usize| tip.sign * piece[j].x4;
    let l = (0..i).rev().find(|&j| v(j) <= 0.0)?;
    let r = (i..piece.len()).find(|&j| v(j) <= 0.0)?;
    Some((bisect(tip.s.min(piece[l + 1].theta), piece[l].theta)?, bisect(tip.s.max(piece[r - 1].theta), piece[r].theta)?))
}

/// Separation of the two lobe roots at distances `δ` from the fold on the
/// side where they exist, with the least-squares slope of
/// `log(separation)` against `log(δ)`.
pub fn fold_scaling(f: &dyn ArcFamily, fold: &Fold, o: &CascadeOptions) -> (Vec<(f64, f64)>, Option<f64>) {
    let side = if fold.end.value > 0.0 {
        (fold.end.eta3 - fold.eta3_star).signum()
    } else {
        (fold.start.eta3 - fold.eta3_star).signum()
    };
    let mut pts = Vec::new();
    for j in 0..6 {
        let delta = 2e-4 * 2f64.powi(j);
        let eta = fold.eta3_star + side * delta;
        let Some(t) = tip_near_fold(f, fold, eta, o) else { continue };
        if let Some((r1, r2)) = lobe_root_pair(f, &t, fold.half_width.max(1e-6), o) {
            pts.push((delta, (r2 - r1).abs()));
        }
    }
    let exp = (pts.len() >= 3).then(|| {
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    });
    (pts, exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("-1.95:-0.60:0.01").unwrap();
        assert_eq!(g.len(), 136);
        assert_eq!(g[0], -1.95);
        assert_eq!(g[135], -0.6);
        assert_eq!(g[5], -1.9);
        assert!(parse_grid("1:0:0.1").is_none());
        assert!(parse_grid("1:2").is_none());
        assert!(parse_grid("0:1:0").is_none());
    }

    /// `x4 = eta3 - (s - c)^2` with the tip drifting along `s` and `xbar1`.
    struct Parabola;

    impl ArcFamily for Parabola {
        fn point(&self, eta3: f64, s: f64) -> Option<SectionPoint> {
            let c = 0.3 + 2.0 * eta3;
            Some(SectionPoint {
                x1: 1.0,
                x3: -(1.0f64 / 3.0).sqrt(),
                x4: eta3 - (s - c).powi(2),
                xbar1: 0.2 + s,
                region: crate::section_geometry::Region::C3,
                k: 1,
                branch: Branch::Plus,
                theta: s,
                tangential: false,
            })
        }

        fn bounds(&self) -> (f64, f64) {
            (-1.0, 1.5)
        }
    }

    fn start_tip(eta3: f64, o: &CascadeOptions) -> Tip {
        let tips = tips_on(&Parabola, eta3, 0.0, 0.7, o);
        assert_eq!(tips.len(), 1);
        tips[0]
    }

    #[test]
    fn fold_of_a_drifting_parabola() {
        let o = CascadeOptions {
            param_tol: 1e-9,
            ..CascadeOptions::default()
        };
        let e = start_tip(0.01, &o);
        assert!((e.s - 0.32).abs() < 1e-7 && (e.value - 0.01).abs() < 1e-12);
        assert_eq!(e.sign, 1.0);
        assert_eq!(e.roots, 2);
        let f = track_fold(&Parabola, &e, 0.1, -0.01, &o).unwrap().unwrap();
        assert!(f.eta3_star.abs() < 1e-9);
        assert_eq!((f.start.roots, f.end.roots), (2, 0));
        let (pts, exp) = fold_scaling(&Parabola, &f, &o);
        assert!(pts.len() >= 3);
        assert!((exp.unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn no_fold_while_the_tip_stays_above() {
        let o = CascadeOptions::default();
        let e = start_tip(0.02, &o);
        assert!(track_fold(&Parabola, &e, 0.1, 0.01, &o).unwrap().is_none());
    }
}

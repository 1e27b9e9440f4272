//! The loop cylinder `C = {x2 = 0} ∩ {H = 0}`, its regions, the shifted
//! projection `P`, and the adaptive construction of the traces of the
//! unstable manifold on `C`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{crossing_sequence, CrossingEvent, IntegratorOptions, Terminal, TimeDirection};
use crate::local_manifold::{Branch, FundamentalDomain};
use crate::system::{reversor, Params, State4};

/// Abscissa of the tip of the loop, root of `x1^2/2 - x1^3/3`.
pub const V2_X1: f64 = 1.5;
/// Tolerance for membership of the distinguished lines `v1`, `v2`.
pub const LINE_TOL: f64 = 1e-8;
/// Tolerance of the cylinder equation `x3^2 = x1^2 - 2/3 x1^3`.
pub const CYLINDER_TOL: f64 = 1e-9;
/// Distance in the projected plane below which a trace endpoint is said to
/// sit at a distinguished line.
pub const V_NEAR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point (x1 = {x1}, x3 = {x3}) is off the loop cylinder (residual {residual:e})")]
    OffCylinder { x1: f64, x3: f64, residual: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    C1,
    C2,
    C3,
    C4,
    V1,
    V2,
}

impl Region {
    /// Regions where `x2` increases through the section.
    pub fn is_upper(self) -> bool {
        matches!(self, Region::C1 | Region::C2)
    }

    pub fn is_lower(self) -> bool {
        matches!(self, Region::C3 | Region::C4)
    }

    pub fn label(self) -> &'static str {
        match self {
            Region::C1 => "C1",
            Region::C2 => "C2",
            Region::C3 => "C3",
            Region::C4 => "C4",
            Region::V1 => "V1",
            Region::V2 => "V2",
        }
    }
}

/// `x3^2 - x1^2 + 2/3 x1^3`, zero exactly on the cylinder.
pub fn cylinder_residual(x1: f64, x3: f64) -> f64 {
    x3 * x3 - x1 * x1 + 2.0 / 3.0 * x1 * x1 * x1
}

fn check_cylinder(x1: f64, x3: f64) -> Result<(), GeometryError> {
    let residual = cylinder_residual(x1, x3);
    let scale = 1.0 + x1.abs().powi(3);
    if residual.abs() < CYLINDER_TOL * scale {
        Ok(())
    } else {
        Err(GeometryError::OffCylinder { x1, x3, residual })
    }
}

/// Region of a point of `C`; `tol` is the distance to `v1`, `v2` below which
/// the point is assigned to the line.
pub fn region_of(x1: f64, x3: f64, tol: f64) -> Result<Region, GeometryError> {
    check_cylinder(x1, x3)?;
    Ok(region_unchecked(x1, x3, tol))
}

fn region_unchecked(x1: f64, x3: f64, tol: f64) -> Region {
    if x1.abs() <= tol && x3.abs() <= tol {
        Region::V1
    } else if (x1 - V2_X1).abs() <= tol && x3.abs() <= tol {
        Region::V2
    } else if x3 >= 0.0 {
        if x1 < 0.0 {
            Region::C1
        } else {
            Region::C2
        }
    } else if x1 > 0.0 {
        Region::C3
    } else {
        Region::C4
    }
}

/// `P(x1, x3, x4) = (xbar1, x4)`. The value `xbar1 = 1.5` is never returned:
/// points of `v1` project to `-1.5`.
pub fn shifted_projection(x1: f64, x3: f64, x4: f64) -> Result<(f64, f64), GeometryError> {
    check_cylinder(x1, x3)?;
    Ok((xbar1_of(x1, x3), x4))
}

fn xbar1_of(x1: f64, x3: f64) -> f64 {
    let xb = if x3 >= 0.0 { x1 - V2_X1 } else { V2_X1 - x1 };
    if xb == V2_X1 {
        -V2_X1
    } else {
        xb
    }
}

/// Inverse of [`shifted_projection`] on the sheet `x3 >= 0` (`upper`) or
/// `x3 < 0`, with `x3` recovered from the cylinder equation.
pub fn unproject(xbar1: f64, x4: f64, upper: bool) -> (f64, f64, f64) {
    let x1 = if upper { xbar1 + V2_X1 } else { V2_X1 - xbar1 };
    let x3 = x1.abs() * (1.0 - 2.0 / 3.0 * x1).max(0.0).sqrt();
    (x1, if upper { x3 } else { -x3 }, x4)
}

/// Which manifold a trace belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    Unstable,
    Stable,
}

/// One crossing of the section seen from the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub x1: f64,
    pub x3: f64,
    pub x4: f64,
    pub xbar1: f64,
    pub region: Region,
    pub k: usize,
    pub branch: Branch,
    pub theta: f64,
    pub tangential: bool,
}

impl SectionPoint {
    pub fn from_event(e: &CrossingEvent<f64>, branch: Branch, theta: f64) -> Self {
        let s = e.state;
        Self {
            x1: s.x1,
            x3: s.x3,
            x4: s.x4,
            xbar1: xbar1_of(s.x1, s.x3),
            region: region_unchecked(s.x1, s.x3, LINE_TOL),
            k: e.k,
            branch,
            theta,
            tangential: e.tangential,
        }
    }

    /// Euclidean distance in the projected plane.
    pub fn distance(&self, other: &SectionPoint) -> f64 {
        (self.xbar1 - other.xbar1).hypot(self.x4 - other.x4)
    }

    /// Image under the reversor restricted to the section: `x4 -> -x4`.
    pub fn mirrored(&self) -> SectionPoint {
        SectionPoint { x4: -self.x4, ..*self }
    }

    pub fn state(&self) -> State4<f64> {
        State4::new(self.x1, 0.0, self.x3, self.x4)
    }

    pub fn near_v1(&self) -> bool {
        self.x1.abs() < V_NEAR && self.x3.abs() < V_NEAR
    }

    pub fn near_v2(&self) -> bool {
        (self.x1 - V2_X1).abs() < V_NEAR && self.x3.abs() < 2.0 * V_NEAR.sqrt()
    }
}

/// Adaptive refinement controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Largest allowed projected distance between neighbouring samples.
    pub delta: f64,
    /// Smallest θ-gap that is still bisected.
    pub theta_min: f64,
    /// Initial equispaced seeds per branch.
    pub n0: usize,
    /// Hard cap on seeds per branch; hitting it leaves unresolved gaps.
    pub max_seeds: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            delta: 0.01,
            theta_min: 1e-10,
            n0: 512,
            max_seeds: 400_000,
        }
    }
}

/// How the orbit of one seed ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedEnd {
    Complete,
    Escaped,
    TimedOut,
    Failed,
}

/// Crossing sequence of the orbit of `σ(θ)` (or of its mirror for the
/// stable manifold).
#[derive(Clone, Debug, PartialEq)]
pub struct SeedOrbit {
    pub theta: f64,
    pub crossings: Vec<CrossingEvent<f64>>,
    pub end: SeedEnd,
}

impl SeedOrbit {
    pub fn crossing(&self, k: usize) -> Option<&CrossingEvent<f64>> {
        if k == 0 {
            None
        } else {
            self.crossings.get(k - 1)
        }
    }
}

/// Seed state on the domain for the given manifold.
pub fn seed_state(d: &FundamentalDomain<f64>, theta: f64, manifold: Manifold) -> Option<State4<f64>> {
    let s = d.sigma(theta).ok()?;
    Some(match manifold {
        Manifold::Unstable => s,
        Manifold::Stable => reversor(s),
    })
}

/// Propagates one seed of the domain through `k_max` crossings.
pub fn propagate_seed(
    d: &FundamentalDomain<f64>,
    theta: f64,
    k_max: usize,
    manifold: Manifold,
    opts: &IntegratorOptions<f64>,
) -> SeedOrbit {
    let dir = match manifold {
        Manifold::Unstable => TimeDirection::Forward,
        Manifold::Stable => TimeDirection::Backward,
    };
    match seed_state(d, theta, manifold) {
        Some(s0) => propagate_orbit(s0, d.params(), dir, k_max, theta, opts),
        None => SeedOrbit {
            theta,
            crossings: Vec::new(),
            end: SeedEnd::Failed,
        },
    }
}

/// θ-ordered seed orbits of one branch.
#[derive(Clone, Debug)]
pub struct BranchBank {
    pub branch: Branch,
    /// Half-open θ-interval `(lo, hi]` covered by the seeds.
    pub interval: (f64, f64),
    pub seeds: Vec<SeedOrbit>,
    /// True when the seed cap stopped the refinement.
    pub capped: bool,
}

/// Shared seed bank from which all traces `Σ_k`, `k ≤ k_max`, are read.
#[derive(Clone, Debug)]
pub struct TraceBank {
    pub eta3: f64,
    pub r_star: f64,
    pub k_max: usize,
    pub manifold: Manifold,
    pub refine: RefineOptions,
    pub branches: Vec<BranchBank>,
}

fn needs_split(a: &SeedOrbit, b: &SeedOrbit, k_max: usize, r: &RefineOptions) -> bool {
    if b.theta - a.theta <= r.theta_min {
        return false;
    }
    for k in 1..=k_max {
        match (a.crossing(k), b.crossing(k)) {
            (Some(ea), Some(eb)) => {
                if projected_distance(&ea.state, &eb.state) > r.delta {
                    return true;
                }
            }
            // neither orbit reaches k, nor any deeper index
            (None, None) => return false,
            _ => return true,
        }
    }
    false
}

/// Adaptively refined bank of seeds over `(lo, hi]` on one branch.
pub fn refine_branch(
    d: &FundamentalDomain<f64>,
    branch: Branch,
    interval: (f64, f64),
    k_max: usize,
    manifold: Manifold,
    r: &RefineOptions,
    opts: &IntegratorOptions<f64>,
) -> BranchBank {
    let (lo, hi) = interval;
    let n0 = r.n0.max(2);
    let thetas: Vec<f64> = (1..=n0)
        .map(|j| if j == n0 { hi } else { lo + (hi - lo) * j as f64 / n0 as f64 })
        .collect();
    let (seeds, capped) = refine_family(thetas, |t| propagate_seed(d, t, k_max, manifold, opts), k_max, r);
    BranchBank {
        branch,
        interval,
        seeds,
        capped,
    }
}

/// Adaptive refinement of a one-parameter family of orbits. Neighbouring
/// parameters are bisected while their `k`-th crossings (any `k ≤ k_max`)
/// are farther than `delta` apart or exist on one side only. Returns the
/// parameter-ordered orbits and whether the seed cap was hit.
pub fn refine_family<F>(initial: Vec<f64>, seed: F, k_max: usize, r: &RefineOptions) -> (Vec<SeedOrbit>, bool)
where
    F: Fn(f64) -> SeedOrbit + Sync,
{
    let mut seeds: Vec<SeedOrbit> = initial.par_iter().map(|&t| seed(t)).collect();
    let mut capped = false;
    loop {
        let mids: Vec<f64> = seeds
            .windows(2)
            .filter(|w| needs_split(&w[0], &w[1], k_max, r))
            .map(|w| 0.5 * (w[0].theta + w[1].theta))
            .collect();
        if mids.is_empty() {
            break;
        }
        if seeds.len() + mids.len() > r.max_seeds {
            capped = true;
            break;
        }
        log::debug!("refining {} intervals ({} seeds)", mids.len(), seeds.len());
        let new: Vec<SeedOrbit> = mids.par_iter().map(|&t| seed(t)).collect();
        seeds = merge_sorted(seeds, new);
    }
    (seeds, capped)
}

fn merge_sorted(a: Vec<SeedOrbit>, b: Vec<SeedOrbit>) -> Vec<SeedOrbit> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter().peekable();
    let mut ib = b.into_iter().peekable();
    loop {
        let take_a = match (ia.peek(), ib.peek()) {
            (Some(x), Some(y)) => x.theta <= y.theta,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let next = if take_a { ia.next() } else { ib.next() };
        out.extend(next);
    }
    out.dedup_by(|x, y| x.theta == y.theta);
    out
}

/// Builds the seed bank on both branches of the whole domain.
pub fn compute_bank(
    d: &FundamentalDomain<f64>,
    k_max: usize,
    manifold: Manifold,
    r: &RefineOptions,
    opts: &IntegratorOptions<f64>,
) -> TraceBank {
    let branches = [Branch::Plus, Branch::Minus]
        .iter()
        .map(|&b| refine_branch(d, b, b.interval(), k_max, manifold, r, opts))
        .collect();
    TraceBank {
        eta3: d.params().eta3,
        r_star: d.r_star(),
        k_max,
        manifold,
        refine: *r,
        branches,
    }
}

/// Distance of two section states in the projected plane.
pub fn projected_distance(a: &State4<f64>, b: &State4<f64>) -> f64 {
    (xbar1_of(a.x1, a.x3) - xbar1_of(b.x1, b.x3)).hypot(a.x4 - b.x4)
}

/// Crossing sequence of an arbitrary seed, tagged with its family parameter.
pub fn propagate_orbit(
    s0: State4<f64>,
    p: Params<f64>,
    dir: TimeDirection,
    k_max: usize,
    param: f64,
    opts: &IntegratorOptions<f64>,
) -> SeedOrbit {
    match crossing_sequence(s0, p, opts, dir, k_max) {
        Ok(seq) => SeedOrbit {
            theta: param,
            crossings: seq.events,
            end: match seq.terminal {
                Terminal::Complete => SeedEnd::Complete,
                Terminal::Escaped { .. } => SeedEnd::Escaped,
                Terminal::TimedOut { .. } => SeedEnd::TimedOut,
            },
        },
        Err(_) => SeedOrbit {
            theta: param,
            crossings: Vec::new(),
            end: SeedEnd::Failed,
        },
    }
}

/// Why a trace has no samples over a θ-interval, or why two neighbouring
/// samples are not joined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapCause {
    Escaped,
    TimedOut,
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointFlag {
    /// Interval end of the branch, no sample there.
    BranchEnd,
    Plain,
    NearV1,
    NearV2,
}

impl EndpointFlag {
    fn of(p: &SectionPoint) -> Self {
        if p.near_v1() {
            EndpointFlag::NearV1
        } else if p.near_v2() {
            EndpointFlag::NearV2
        } else {
            EndpointFlag::Plain
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub cause: GapCause,
    pub lo_flag: EndpointFlag,
    pub hi_flag: EndpointFlag,
    /// True when samples exist on both sides (a jump rather than a hole).
    pub is_break: bool,
}

/// One `Σ_k^{u,±}` (or its stable counterpart) as θ-ordered samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceCurve {
    pub k: usize,
    pub branch: Branch,
    pub manifold: Manifold,
    pub samples: Vec<SectionPoint>,
    pub gaps: Vec<Gap>,
}

impl TraceCurve {
    /// Maximal runs of joined samples.
    pub fn pieces(&self) -> Vec<&[SectionPoint]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.samples.len() {
            let split = i == self.samples.len() || self.is_split(i - 1);
            if split {
                if i > start {
                    out.push(&self.samples[start..i]);
                }
                start = i;
            }
        }
        out
    }

    /// Whether samples `i` and `i + 1` are separated by a gap.
    pub fn is_split(&self, i: usize) -> bool {
        let (a, b) = (self.samples[i].theta, self.samples[i + 1].theta);
        let j = self.gaps.partition_point(|g| g.theta_lo < a);
        self.gaps[j..]
            .iter()
            .take_while(|g| g.theta_lo == a)
            .any(|g| g.theta_hi == b)
    }

    /// Regions visited, in θ order, with consecutive repeats collapsed.
    pub fn region_pieces(&self) -> Vec<Region> {
        let mut out: Vec<Region> = Vec::new();
        for piece in self.pieces() {
            for s in piece {
                if out.last() != Some(&s.region) {
                    out.push(s.region);
                }
            }
        }
        out
    }

    pub fn contains_theta(&self, theta: f64) -> Option<&SectionPoint> {
        self.samples
            .binary_search_by(|s| s.theta.total_cmp(&theta))
            .ok()
            .map(|i| &self.samples[i])
    }
}

/// Extracts `Σ_k` of one branch from the bank.
pub fn trace_from_bank(bank: &BranchBank, k: usize, manifold: Manifold, delta: f64) -> TraceCurve {
    let branch = bank.branch;
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    let mut last: Option<SectionPoint> = None;
    let mut hole_cause: Option<GapCause> = None;
    let cause_of = |e: SeedEnd| match e {
        SeedEnd::Escaped => GapCause::Escaped,
        SeedEnd::TimedOut => GapCause::TimedOut,
        SeedEnd::Complete | SeedEnd::Failed => GapCause::Unresolved,
    };
    let merge = |a: Option<GapCause>, b: GapCause| match (a, b) {
        (None, b) => b,
        (Some(GapCause::Escaped), _) | (_, GapCause::Escaped) => GapCause::Escaped,
        (Some(GapCause::TimedOut), _) | (_, GapCause::TimedOut) => GapCause::TimedOut,
        _ => GapCause::Unresolved,
    };
    for s in &bank.seeds {
        match s.crossing(k) {
            Some(e) => {
                let p = SectionPoint::from_event(e, branch, s.theta);
                if let Some(cause) = hole_cause.take() {
                    gaps.push(Gap {
                        theta_lo: last.map_or(bank.interval.0, |q| q.theta),
                        theta_hi: p.theta,
                        cause,
                        lo_flag: last.as_ref().map_or(EndpointFlag::BranchEnd, EndpointFlag::of),
                        hi_flag: EndpointFlag::of(&p),
                        is_break: false,
                    });
                } else if let Some(q) = last {
                    if q.distance(&p) > delta {
                        gaps.push(Gap {
                            theta_lo: q.theta,
                            theta_hi: p.theta,
                            cause: GapCause::Unresolved,
                            lo_flag: EndpointFlag::of(&q),
                            hi_flag: EndpointFlag::of(&p),
                            is_break: true,
                        });
                    }
                }
                samples.push(p);
                last = Some(p);
            }
            None => hole_cause = Some(merge(hole_cause, cause_of(s.end))),
        }
    }
    if let Some(cause) = hole_cause {
        gaps.push(Gap {
            theta_lo: last.map_or(bank.interval.0, |q| q.theta),
            theta_hi: bank.interval.1,
            cause,
            lo_flag: last.as_ref().map_or(EndpointFlag::BranchEnd, EndpointFlag::of),
            hi_flag: EndpointFlag::BranchEnd,
            is_break: false,
        });
    }
    TraceCurve {
        k,
        branch,
        manifold,
        samples,
        gaps,
    }
}

impl TraceBank {
    pub fn branch(&self, b: Branch) -> Option<&BranchBank> {
        self.branches.iter().find(|x| x.branch == b)
    }

    pub fn trace(&self, k: usize, b: Branch) -> Option<TraceCurve> {
        self.branch(b)
            .map(|bb| trace_from_bank(bb, k, self.manifold, self.refine.delta))
    }

    /// All traces, ordered by branch then k.
    pub fn traces(&self) -> Vec<TraceCurve> {
        let mut out = Vec::new();
        for bb in &self.branches {
            for k in 1..=self.k_max {
                out.push(trace_from_bank(bb, k, self.manifold, self.refine.delta));
            }
        }
        out
    }

    pub fn seed_count(&self) -> usize {
        self.branches.iter().map(|b| b.seeds.len()).sum()
    }

    pub fn seed(&self, b: Branch, theta: f64) -> Option<&SeedOrbit> {
        let bb = self.branch(b)?;
        bb.seeds
            .binary_search_by(|s| s.theta.total_cmp(&theta))
            .ok()
            .map(|i| &bb.seeds[i])
    }
}

/// Convenience wrapper returning the traces `Σ_k^{u,±}`, `k ≤ k_max`.
pub fn compute_traces(
    d: &FundamentalDomain<f64>,
    k_max: usize,
    r: &RefineOptions,
    opts: &IntegratorOptions<f64>,
) -> Vec<TraceCurve> {
    compute_bank(d, k_max, Manifold::Unstable, r, opts).traces()
}

/// Stable counterpart of an unstable trace: `x4 -> -x4` on every sample.
pub fn mirror_to_stable(t: &TraceCurve) -> TraceCurve {
    let flip = |m| match m {
        Manifold::Unstable => Manifold::Stable,
        Manifold::Stable => Manifold::Unstable,
    };
    TraceCurve {
        k: t.k,
        branch: t.branch,
        manifold: flip(t.manifold),
        samples: t.samples.iter().map(SectionPoint::mirrored).collect(),
        gaps: t.gaps.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VLine {
    V1,
    V2,
}

/// A passage of a trace through `v1` or a turning point at `v2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VPassage {
    pub line: VLine,
    pub k: usize,
    pub branch: Branch,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub q4: f64,
    /// Regions of `Σ_k` on both sides (the same region twice at a turning point).
    pub regions: (Region, Region),
    /// Regions of `Σ_{k+1}` at the same seeds, when present.
    pub next_regions: Option<(Region, Region)>,
    /// Whether the local continuation pattern matches the expected one.
    pub consistent: bool,
}

/// Passages of `t = Σ_k` through the distinguished lines, checked against
/// the continuation into `t_next = Σ_{k+1}` of the same branch.
pub fn v_line_crossings(t: &TraceCurve, t_next: &TraceCurve) -> Vec<VPassage> {
    let mut out = Vec::new();
    let tol = 4.0 * V_NEAR;
    for (i, w) in t.samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if t.is_split(i) {
            continue;
        }
        let pair = (a.region, b.region);
        let across_v1 = matches!(
            pair,
            (Region::C3, Region::C4) | (Region::C4, Region::C3) | (Region::C1, Region::C2) | (Region::C2, Region::C1)
        );
        if !across_v1 {
            continue;
        }
        let s = a.x1 / (a.x1 - b.x1);
        let q4 = a.x4 + s * (b.x4 - a.x4);
        let na = t_next.contains_theta(a.theta);
        let nb = t_next.contains_theta(b.theta);
        let next_regions = match (na, nb) {
            (Some(x), Some(y)) => Some((x.region, y.region)),
            _ => None,
        };
        let lower = a.region.is_lower();
        let expected_sign = if lower { 1.0 } else { -1.0 };
        let consistent = q4 * expected_sign > 0.0
            && match (na, nb) {
                (Some(x), Some(y)) => {
                    let side_ok = if lower {
                        x.region.is_upper() && y.region.is_upper()
                    } else {
                        x.region.is_lower() && y.region.is_lower()
                    };
                    side_ok
                        && x.region != y.region
                        && (x.x4 - q4).abs() < (a.x4 - q4).abs() + tol + a.distance(b)
                        && (y.x4 - q4).abs() < (b.x4 - q4).abs() + tol + a.distance(b)
                }
                _ => false,
            };
        out.push(VPassage {
            line: VLine::V1,
            k: t.k,
            branch: t.branch,
            theta_lo: a.theta,
            theta_hi: b.theta,
            q4,
            regions: pair,
            next_regions,
            consistent,
        });
    }
    for g in &t.gaps {
        let ends = [(g.lo_flag, g.theta_lo), (g.hi_flag, g.theta_hi)];
        for (flag, theta) in ends {
            if flag != EndpointFlag::NearV2 {
                continue;
            }
            let Some(p) = t.contains_theta(theta) else { continue };
            let partner = t_next.contains_theta(theta);
            let expect = if p.x4 > 0.0 { (Region::C3, Region::C2) } else { (Region::C2, Region::C3) };
            let consistent = p.region == expect.0
                && partner.is_some_and(|q| q.region == expect.1 && q.distance(p) < tol);
            out.push(VPassage {
                line: VLine::V2,
                k: t.k,
                branch: t.branch,
                theta_lo: g.theta_lo,
                theta_hi: g.theta_hi,
                q4: p.x4,
                regions: (p.region, p.region),
                next_regions: partner.map(|q| (q.region, q.region)),
                consistent,
            });
        }
    }
    out.sort_by(|a, b| a.theta_lo.total_cmp(&b.theta_lo));
    out
}

/// A violation of the side alternation between consecutive crossings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternationViolation {
    pub theta: f64,
    pub k: usize,
}

/// Checks that consecutive crossings of every seed lie on opposite sheets
/// (`x3 > 0` then `x3 < 0` or vice versa); tangential crossings are exempt.
pub fn alternation_violations(bank: &TraceBank) -> Vec<AlternationViolation> {
    let mut out = Vec::new();
    for bb in &bank.branches {
        for s in &bb.seeds {
            for w in s.crossings.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if a.tangential || b.tangential {
                    continue;
                }
                let sa = a.state.x3 > 0.0;
                let sb = b.state.x3 > 0.0;
                if sa == sb {
                    out.push(AlternationViolation { theta: s.theta, k: b.k });
                }
            }
        }
    }
    out
}

/// `Fix(R) ∩ C3` seed at abscissa `x1 in (0, 1.5)`.
pub fn fix_r_seed(x1: f64) -> State4<f64> {
    let x3 = -(x1 * x1 - 2.0 / 3.0 * x1 * x1 * x1).max(0.0).sqrt();
    State4::new(x1, 0.0, x3, 0.0)
}

/// Angle range of a branch, re-exported for callers that only need the
/// numeric interval.
pub fn branch_interval(b: Branch) -> (f64, f64) {
    match b {
        Branch::Plus => (0.0, PI),
        Branch::Minus => (PI, 2.0 * PI),
    }
}

/// Writes trace samples as CSV.
pub fn write_traces_csv<W: std::io::Write>(mut w: W, eta3: f64, traces: &[TraceCurve]) -> std::io::Result<()> {
    use crate::io::fmt17;
    writeln!(w, "eta3,branch,k,theta,x1,x3,x4,xbar1,region,tangential")?;
    for t in traces {
        for s in &t.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt17(eta3),
                t.branch.sign_char(),
                t.k,
                fmt17(s.theta),
                fmt17(s.x1),
                fmt17(s.x3),
                fmt17(s.x4),
                fmt17(s.xbar1),
                s.region.label(),
                u8::from(s.tangential)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_cylinder(x1: f64, upper: bool) -> f64 {
        let x3 = (x1 * x1 - 2.0 / 3.0 * x1.powi(3)).sqrt();
        if upper {
            x3
        } else {
            -x3
        }
    }

    #[test]
    fn regions_follow_sign_table() {
        assert_eq!(region_of(-0.3, on_cylinder(-0.3, true), LINE_TOL).unwrap(), Region::C1);
        assert_eq!(region_of(0.7, on_cylinder(0.7, true), LINE_TOL).unwrap(), Region::C2);
        assert_eq!(region_of(1.2, on_cylinder(1.2, false), LINE_TOL).unwrap(), Region::C3);
        assert_eq!(region_of(-0.2, on_cylinder(-0.2, false), LINE_TOL).unwrap(), Region::C4);
        assert_eq!(region_of(1.5, 0.0, LINE_TOL).unwrap(), Region::V2);
        assert_eq!(region_of(0.0, 0.0, LINE_TOL).unwrap(), Region::V1);
        assert!(matches!(
            region_of(0.5, 0.1, LINE_TOL),
            Err(GeometryError::OffCylinder { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(shifted_projection(0.0, 0.0, 0.3).unwrap(), (-1.5, 0.3));
        assert_eq!(shifted_projection(1.5, 0.0, -0.2).unwrap(), (0.0, -0.2));
        let (xb, x4) = shifted_projection(1.0, on_cylinder(1.0, false), 0.4).unwrap();
        assert!((xb - 0.5).abs() < 1e-15 && x4 == 0.4);
    }

    #[test]
    fn projection_roundtrip() {
        for &x1 in &[-2.0, -0.7, -0.01, 0.2, 0.9, 1.4] {
            for upper in [true, false] {
                let x3 = on_cylinder(x1, upper);
                let (xb, x4) = shifted_projection(x1, x3, 0.1).unwrap();
                let (y1, y3, y4) = unproject(xb, x4, upper);
                assert!((y1 - x1).abs() < 1e-12 && (y3 - x3).abs() < 1e-12 && y4 == x4);
            }
        }
    }

    #[test]
    fn mirror_flips_x4_only() {
        let t = TraceCurve {
            k: 2,
            branch: Branch::Plus,
            manifold: Manifold::Unstable,
            samples: vec![
                SectionPoint {
                    x1: 0.5,
                    x3: on_cylinder(0.5, false),
                    x4: 0.2,
                    xbar1: 1.0,
                    region: Region::C3,
                    k: 2,
                    branch: Branch::Plus,
                    theta: 1.0,
                    tangential: false,
                },
                SectionPoint {
                    x1: 0.6,
                    x3: on_cylinder(0.6, false),
                    x4: 0.0,
                    xbar1: 0.9,
                    region: Region::C3,
                    k: 2,
                    branch: Branch::Plus,
                    theta: 1.1,
                    tangential: false,
                },
            ],
            gaps: vec![],
        };
        let m = mirror_to_stable(&t);
        assert_eq!(m.manifold, Manifold::Stable);
        assert_eq!(m.samples[0].x4, -0.2);
        assert_eq!(m.samples[0].xbar1, 1.0);
        assert_eq!(m.samples[1].x4, 0.0);
        assert!(v_line_crossings(&t, &m).is_empty());
    }

    #[test]
    fn fix_r_seed_is_on_cylinder() {
        for &x1 in &[1e-4, 0.3, 1.0, 1.4999] {
            let s = fix_r_seed(x1);
            assert!(cylinder_residual(s.x1, s.x3).abs() < 1e-15);
            assert!(s.x3 < 0.0);
        }
    }
}

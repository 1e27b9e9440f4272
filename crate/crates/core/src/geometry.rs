//! Planar predicates and polyline intersection in the projected plane.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Point = [f64; 2];

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

/// Sign of the determinant `(b - a) x (c - a)` evaluated exactly.
pub fn orient2d_exact(a: Point, b: Point, c: Point) -> i8 {
    let (ax, ay) = (exact(a[0]), exact(a[1]));
    let det = (exact(b[0]) - &ax) * (exact(c[1]) - &ay) - (exact(b[1]) - &ay) * (exact(c[0]) - &ax);
    if det.is_zero() {
        0
    } else if det.is_positive() {
        1
    } else {
        -1
    }
}

/// Sign of `(b - a) x (c - a)`: a floating-point filter with a forward error
/// bound, falling back to exact rational arithmetic when the filter is
/// inconclusive.
pub fn orient2d(a: Point, b: Point, c: Point) -> i8 {
    let l = (b[0] - a[0]) * (c[1] - a[1]);
    let r = (b[1] - a[1]) * (c[0] - a[0]);
    let det = l - r;
    let bound = (3.0 * f64::EPSILON + 16.0 * f64::EPSILON * f64::EPSILON) * (l.abs() + r.abs());
    if det > bound {
        1
    } else if det < -bound {
        -1
    } else {
        orient2d_exact(a, b, c)
    }
}

/// Intersection of segment `i` of one polyline with segment `j` of another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub i: usize,
    pub j: usize,
    /// Position along segment `i` in `[0, 1]`.
    pub s: f64,
    /// Position along segment `j` in `[0, 1]`.
    pub t: f64,
    pub point: Point,
    /// Some orientation was exactly zero; resolved by symbolic perturbation.
    pub degenerate: bool,
}

/// Whether segments `ab` and `cd` cross. Zero orientations are treated as
/// positive (a consistent symbolic perturbation), so a crossing through a
/// shared vertex is counted exactly once along a polyline.
pub fn segment_crossing(a: Point, b: Point, c: Point, d: Point) -> Option<(f64, f64, bool)> {
    let o = [orient2d(a, b, c), orient2d(a, b, d), orient2d(c, d, a), orient2d(c, d, b)];
    let degenerate = o.contains(&0);
    let sg = |v: i8| if v >= 0 { 1 } else { -1 };
    if sg(o[0]) == sg(o[1]) || sg(o[2]) == sg(o[3]) {
        return None;
    }
    let r = [b[0] - a[0], b[1] - a[1]];
    let q = [d[0] - c[0], d[1] - c[1]];
    let den = r[0] * q[1] - r[1] * q[0];
    let w = [c[0] - a[0], c[1] - a[1]];
    let (s, t) = if den != 0.0 {
        (
            ((w[0] * q[1] - w[1] * q[0]) / den).clamp(0.0, 1.0),
            ((w[0] * r[1] - w[1] * r[0]) / den).clamp(0.0, 1.0),
        )
    } else {
        (0.0, 0.0)
    };
    Some((s, t, degenerate))
}

fn cell_range(lo: f64, hi: f64, h: f64) -> (i64, i64) {
    ((lo / h).floor() as i64, (hi / h).floor() as i64)
}

/// All crossings between the polylines `p` and `q`, sorted by `(i, j)`.
/// Candidate pairs come from a uniform grid with cell size `cell`.
pub fn polyline_crossings(p: &[Point], q: &[Point], cell: f64) -> Vec<Crossing> {
    if p.len() < 2 || q.len() < 2 {
        return Vec::new();
    }
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for j in 0..q.len() - 1 {
        let (c, d) = (q[j], q[j + 1]);
        let (x0, x1) = cell_range(c[0].min(d[0]), c[0].max(d[0]), cell);
        let (y0, y1) = cell_range(c[1].min(d[1]), c[1].max(d[1]), cell);
        if (x1 - x0 + 1) * (y1 - y0 + 1) > 4096 {
            grid.entry((i64::MIN, i64::MIN)).or_default().push(j);
            continue;
        }
        for gx in x0..=x1 {
            for gy in y0..=y1 {
                grid.entry((gx, gy)).or_default().push(j);
            }
        }
    }
    let long: Vec<usize> = grid.get(&(i64::MIN, i64::MIN)).cloned().unwrap_or_default();
    let mut out = Vec::new();
    let mut cand: Vec<usize> = Vec::new();
    for i in 0..p.len() - 1 {
        let (a, b) = (p[i], p[i + 1]);
        cand.clear();
        let (x0, x1) = cell_range(a[0].min(b[0]), a[0].max(b[0]), cell);
        let (y0, y1) = cell_range(a[1].min(b[1]), a[1].max(b[1]), cell);
        if (x1 - x0 + 1) * (y1 - y0 + 1) > 4096 {
            cand.extend(0..q.len() - 1);
        } else {
            for gx in x0..=x1 {
                for gy in y0..=y1 {
                    if let Some(v) = grid.get(&(gx, gy)) {
                        cand.extend_from_slice(v);
                    }
                }
            }
            cand.extend_from_slice(&long);
        }
        cand.sort_unstable();
        cand.dedup();
        for &j in &cand {
            let (c, d) = (q[j], q[j + 1]);
            if a[0].max(b[0]) < c[0].min(d[0])
                || c[0].max(d[0]) < a[0].min(b[0])
                || a[1].max(b[1]) < c[1].min(d[1])
                || c[1].max(d[1]) < a[1].min(b[1])
            {
                continue;
            }
            if let Some((s, t, degenerate)) = segment_crossing(a, b, c, d) {
                let point = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                out.push(Crossing {
                    i,
                    j,
                    s,
                    t,
                    point,
                    degenerate,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_basic() {
        assert_eq!(orient2d([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]), 1);
        assert_eq!(orient2d([0.0, 0.0], [1.0, 0.0], [0.0, -1.0]), -1);
        assert_eq!(orient2d([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]), 0);
    }

    #[test]
    fn filter_defers_to_exact_near_degeneracy() {
        // c is one ulp off the line through a and b
        let a = [0.5, 0.5];
        let b = [12.0, 12.0];
        let c = [24.0, f64::from_bits(24.0f64.to_bits() + 1)];
        assert_eq!(orient2d(a, b, c), orient2d_exact(a, b, c));
        assert_eq!(orient2d(a, b, c), 1);
    }

    #[test]
    fn crossing_of_an_x() {
        let (s, t, deg) = segment_crossing([0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]).unwrap();
        assert!((s - 0.5).abs() < 1e-15 && (t - 0.5).abs() < 1e-15 && !deg);
        assert!(segment_crossing([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]).is_none());
    }

    #[test]
    fn vertex_crossing_counted_once() {
        // polyline through (1, 0) exactly, crossed by a vertical line x = 1
        let p = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let q = [[1.0, -1.0], [1.0, 1.0]];
        assert_eq!(polyline_crossings(&p, &q, 0.5).len(), 1);
        // a polyline touching the line and turning back is not a crossing
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 0.5]];
        let q = [[1.0, -1.0], [1.0, 1.0]];
        assert_eq!(polyline_crossings(&p, &q, 0.5).len(), 0);
    }

    #[test]
    fn grid_matches_brute_force() {
        let p: Vec<Point> = (0..200).map(|i| {
            let x = i as f64 * 0.05;
            [x, (3.0 * x).sin()]
        }).collect();
        let q: Vec<Point> = (0..150).map(|i| {
            let x = i as f64 * 0.067;
            [x, 0.8 * (2.1 * x + 0.3).cos()]
        }).collect();
        let fast = polyline_crossings(&p, &q, 0.1);
        let mut brute = 0;
        for i in 0..p.len() - 1 {
            for j in 0..q.len() - 1 {
                if segment_crossing(p[i], p[i + 1], q[j], q[j + 1]).is_some() {
                    brute += 1;
                }
            }
        }
        assert_eq!(fast.len(), brute);
        assert!(brute > 5);
    }
}

//! Power-series graph `(x3, x4) = (a(x1, x2), b(x1, x2))` of the local unstable
//! manifold of the origin, the evaluation radius and the fundamental domain.
//!
//! Writing the manifold as a graph over the `(x1, x2)` plane and
//! differentiating along the flow gives the invariance equations
//!
//! ```text
//! b                    = a_x1 x2 + a_x2 a
//! -x1 + eta3 a + x1^2  = b_x1 x2 + b_x2 a
//! ```
//!
//! The linear part is fixed by the unstable eigenplane. For every total degree
//! `m >= 2` the homogeneous parts `a_m`, `b_m` enter linearly, so each degree
//! is a `2(m+1) x 2(m+1)` linear system whose right hand side only involves
//! lower degrees.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::system::{hamiltonian, Params, State4, SystemError};

pub const DEFAULT_ORDER: usize = 30;
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const RADIUS_GRID_START: f64 = 0.1;
/// Angles probed on the circle when accepting a radius.
pub const RADIUS_PROBE_ANGLES: usize = 64;
/// Bound on `|H|` for points of the fundamental domain.
pub const DOMAIN_H_BOUND: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("series order must be at least 1")]
    ZeroOrder,
    #[error("singular invariance system at degree {degree} (condition estimate {condition:e})")]
    SingularSystem { degree: usize, condition: f64 },
    #[error("no radius on the grid meets tolerance {tol:e}; raise the series order (M = {order})")]
    NoConvergentRadius { tol: f64, order: usize },
    #[error("|H| = {h:e} at theta = {theta}; the radius is too large")]
    HamiltonianDrift { theta: f64, h: f64 },
    #[error("angle {theta} outside (0, 2pi]")]
    AngleOutOfRange { theta: f64 },
}

/// Homogeneous polynomial of degree `len - 1`; entry `s` multiplies
/// `x1^(d-s) x2^s`.
type Homogeneous<T> = Vec<T>;

fn hmul<T: Real>(p: &[T], q: &[T]) -> Homogeneous<T> {
    let mut r = vec![T::zero(); p.len() + q.len() - 1];
    for (s, &ps) in p.iter().enumerate() {
        if ps == T::zero() {
            continue;
        }
        for (t, &qt) in q.iter().enumerate() {
            r[s + t] += ps * qt;
        }
    }
    r
}

fn d_dx1<T: Real>(p: &[T]) -> Homogeneous<T> {
    let d = p.len() - 1;
    (0..d)
        .map(|s| T::from_usize_lossy(d - s) * p[s])
        .collect()
}

fn d_dx2<T: Real>(p: &[T]) -> Homogeneous<T> {
    (1..p.len()).map(|s| T::from_usize_lossy(s) * p[s]).collect()
}

fn times_x2<T: Real>(p: &[T]) -> Homogeneous<T> {
    let mut r = vec![T::zero(); p.len() + 1];
    r[1..].copy_from_slice(p);
    r
}

fn add_into<T: Real>(acc: &mut [T], p: &[T], scale: T) {
    for (a, v) in acc.iter_mut().zip(p) {
        *a += scale * *v;
    }
}

/// Truncated coefficient tables of the local unstable manifold.
///
/// `a[m][s]` is the coefficient of `x1^(m-s) x2^s` in `x3 = a(x1, x2)`;
/// `a[0]` is the (empty) constant term.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesCoefficients<T> {
    order: usize,
    a: Vec<Homogeneous<T>>,
    b: Vec<Homogeneous<T>>,
    params: Params<T>,
    /// 1-norm condition estimate of each degree's linear system (index = degree).
    conditioning: Vec<T>,
}

impl<T: Real> SeriesCoefficients<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn params(&self) -> Params<T> {
        self.params
    }

    /// Coefficient of `x1^i x2^j` in `a`.
    pub fn a(&self, i: usize, j: usize) -> T {
        self.a.get(i + j).and_then(|h| h.get(j)).copied().unwrap_or(T::zero())
    }

    /// Coefficient of `x1^i x2^j` in `b`.
    pub fn b(&self, i: usize, j: usize) -> T {
        self.b.get(i + j).and_then(|h| h.get(j)).copied().unwrap_or(T::zero())
    }

    pub fn conditioning(&self) -> &[T] {
        &self.conditioning
    }

    /// Copy truncated to a lower total degree.
    pub fn truncated(&self, order: usize) -> Self {
        let order = order.clamp(1, self.order);
        Self {
            order,
            a: self.a[..=order].to_vec(),
            b: self.b[..=order].to_vec(),
            params: self.params,
            conditioning: self.conditioning[..=order].to_vec(),
        }
    }

    /// Homogeneous parts `(a_m(x1,x2), b_m(x1,x2))` for `m = 1..=order`.
    fn degree_terms(&self, x1: T, x2: T) -> impl Iterator<Item = (T, T)> + '_ {
        (1..=self.order).map(move |m| {
            let mut pa = T::zero();
            let mut pb = T::zero();
            // Horner in the ratio is unstable near x1 = 0, so use explicit powers.
            let mut p2 = T::one();
            for s in 0..=m {
                let mono = x1.powi((m - s) as i32) * p2;
                pa += self.a[m][s] * mono;
                pb += self.b[m][s] * mono;
                p2 *= x2;
            }
            (pa, pb)
        })
    }

    /// Partial sums of the series together with the relative size of the
    /// highest degree term, `max(|a_M| / |a|, |b_M| / |b|)`.
    pub fn evaluate(&self, x1: T, x2: T) -> ManifoldPoint<T> {
        let mut sa = T::zero();
        let mut sb = T::zero();
        let mut last = (T::zero(), T::zero());
        for terms in self.degree_terms(x1, x2) {
            sa += terms.0;
            sb += terms.1;
            last = terms;
        }
        let rel = |term: T, sum: T| {
            if term == T::zero() {
                T::zero()
            } else {
                term.abs() / sum.abs()
            }
        };
        ManifoldPoint {
            x3: sa,
            x4: sb,
            err_estimate: rel(last.0, sa).max(rel(last.1, sb)),
        }
    }

    /// Value and first partial derivatives of `a` and `b`.
    fn with_gradient(&self, x1: T, x2: T) -> [T; 6] {
        let mut out = [T::zero(); 6];
        for m in 1..=self.order {
            for s in 0..=m {
                let i = m - s;
                let (ca, cb) = (self.a[m][s], self.b[m][s]);
                let mono = x1.powi(i as i32) * x2.powi(s as i32);
                let d1 = if i > 0 {
                    T::from_usize_lossy(i) * x1.powi(i as i32 - 1) * x2.powi(s as i32)
                } else {
                    T::zero()
                };
                let d2 = if s > 0 {
                    T::from_usize_lossy(s) * x1.powi(i as i32) * x2.powi(s as i32 - 1)
                } else {
                    T::zero()
                };
                out[0] += ca * mono;
                out[1] += ca * d1;
                out[2] += ca * d2;
                out[3] += cb * mono;
                out[4] += cb * d1;
                out[5] += cb * d2;
            }
        }
        out
    }

    /// Residuals of the two invariance equations for the truncated series.
    pub fn invariance_residual(&self, x1: T, x2: T) -> (T, T) {
        let [a, a1, a2, b, b1, b2] = self.with_gradient(x1, x2);
        let eta = self.params.eta3;
        let ra = b - (a1 * x2 + a2 * a);
        let rb = (-x1 + eta * a + x1 * x1) - (b1 * x2 + b2 * a);
        (ra, rb)
    }

    /// Exports `{"M", "eta3", "a": [[i, j, v]...], "b": [...]}`.
    pub fn to_table(&self) -> CoefficientTable {
        let triples = |tab: &Vec<Homogeneous<T>>| {
            let mut v = Vec::new();
            for (m, h) in tab.iter().enumerate().skip(1) {
                for (s, c) in h.iter().enumerate() {
                    v.push((m - s, s, c.to_f64_lossy()));
                }
            }
            v
        };
        CoefficientTable {
            order: self.order,
            eta3: self.params.eta3.to_f64_lossy(),
            a: triples(&self.a),
            b: triples(&self.b),
        }
    }
}

impl SeriesCoefficients<f64> {
    /// Rebuilds coefficients from an exported table.
    pub fn from_table(t: &CoefficientTable) -> Result<Self, ManifoldError> {
        if t.order == 0 {
            return Err(ManifoldError::ZeroOrder);
        }
        let params = Params::new(t.eta3)?;
        let mut a: Vec<Vec<f64>> = (0..=t.order).map(|m| vec![0.0; m + 1]).collect();
        let mut b = a.clone();
        for &(i, j, v) in &t.a {
            if i + j <= t.order {
                a[i + j][j] = v;
            }
        }
        for &(i, j, v) in &t.b {
            if i + j <= t.order {
                b[i + j][j] = v;
            }
        }
        Ok(Self {
            order: t.order,
            a,
            b,
            params,
            conditioning: vec![1.0; t.order + 1],
        })
    }
}

/// JSON form of the coefficient tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    #[serde(rename = "M")]
    pub order: usize,
    pub eta3: f64,
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldPoint<T> {
    pub x3: T,
    pub x4: T,
    pub err_estimate: T,
}

/// Solves the invariance equations degree by degree up to `order`.
pub fn compute_coefficients<T: Real>(
    p: Params<T>,
    order: usize,
) -> Result<SeriesCoefficients<T>, ManifoldError> {
    if order == 0 {
        return Err(ManifoldError::ZeroOrder);
    }
    let (rho, omega) = p.bifocal_rates()?;
    let eta = p.eta3;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let r2w2 = rho * rho + omega * omega;

    let mut a: Vec<Homogeneous<T>> = vec![Vec::new()];
    let mut b: Vec<Homogeneous<T>> = vec![Vec::new()];
    a.push(vec![-r2w2, two * rho]);
    b.push(vec![-two * rho * r2w2, three * rho * rho - omega * omega]);
    let mut conditioning = vec![T::one(), T::one()];

    let a01 = a[1][1];
    let b01 = b[1][1];
    for m in 2..=order {
        let n = m + 1;
        let mut mat = DenseMatrix::zeros(2 * n);
        // Column k < n: unit monomial in a_m; k >= n: in b_m.
        for k in 0..2 * n {
            let mut am = vec![T::zero(); n];
            let mut bm = vec![T::zero(); n];
            if k < n {
                am[k] = T::one();
            } else {
                bm[k - n] = T::one();
            }
            // b_m - x2 d1(a_m) - a01 a_m - a_1 d2(a_m)
            let mut e1 = bm.clone();
            add_into(&mut e1, &times_x2(&d_dx1(&am)), -T::one());
            add_into(&mut e1, &am, -a01);
            add_into(&mut e1, &hmul(&a[1], &d_dx2(&am)), -T::one());
            // eta a_m - b01 a_m - x2 d1(b_m) - a_1 d2(b_m)
            let mut e2: Vec<T> = am.iter().map(|v| (eta - b01) * *v).collect();
            add_into(&mut e2, &times_x2(&d_dx1(&bm)), -T::one());
            add_into(&mut e2, &hmul(&a[1], &d_dx2(&bm)), -T::one());
            for r in 0..n {
                mat.set(r, k, e1[r]);
                mat.set(n + r, k, e2[r]);
            }
        }
        let mut r1 = vec![T::zero(); n];
        let mut r2 = vec![T::zero(); n];
        for j in 2..m {
            add_into(&mut r1, &hmul(&d_dx2(&a[j]), &a[m + 1 - j]), T::one());
            add_into(&mut r2, &hmul(&d_dx2(&b[j]), &a[m + 1 - j]), T::one());
        }
        if m == 2 {
            r2[0] -= T::one();
        }
        let rhs: Vec<T> = r1.into_iter().chain(r2).collect();
        let lu = mat.lu().ok_or(ManifoldError::SingularSystem {
            degree: m,
            condition: f64::INFINITY,
        })?;
        let cond = lu.condition1(&mat);
        if !cond.is_finite() || cond > T::one() / T::epsilon() {
            return Err(ManifoldError::SingularSystem {
                degree: m,
                condition: cond.to_f64_lossy(),
            });
        }
        let sol = lu.solve(&rhs);
        a.push(sol[..n].to_vec());
        b.push(sol[n..].to_vec());
        conditioning.push(cond);
    }
    Ok(SeriesCoefficients {
        order,
        a,
        b,
        params: p,
        conditioning,
    })
}

/// Largest radius `RADIUS_GRID_START * 2^-j` whose error estimate stays
/// below `tol` at [`RADIUS_PROBE_ANGLES`] equispaced angles.
pub fn choose_radius<T: Real>(c: &SeriesCoefficients<T>, tol: T) -> Result<T, ManifoldError> {
    choose_radius_from(c, tol, T::lit(RADIUS_GRID_START))
}

/// Same search as [`choose_radius`] on the grid `start * 2^-j`.
pub fn choose_radius_from<T: Real>(
    c: &SeriesCoefficients<T>,
    tol: T,
    start: T,
) -> Result<T, ManifoldError> {
    let fail = ManifoldError::NoConvergentRadius {
        tol: tol.to_f64_lossy(),
        order: c.order(),
    };
    if !(tol > T::zero()) {
        return Err(fail);
    }
    let mut r = start;
    let n = RADIUS_PROBE_ANGLES;
    for _ in 0..MAX_HALVINGS {
        let ok = (0..n).all(|j| {
            let th = T::TAU() * T::from_usize_lossy(j) / T::from_usize_lossy(n);
            let pt = c.evaluate(r * th.cos(), r * th.sin());
            pt.err_estimate < tol
        });
        if ok {
            return Ok(r);
        }
        r = r * T::lit(0.5);
    }
    Err(fail)
}

/// Which half of the fundamental domain a seed angle belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// `theta in (0, pi]`
    Plus,
    /// `theta in (pi, 2 pi]`
    Minus,
}

impl Branch {
    pub fn of_angle(theta: f64) -> Branch {
        if theta <= std::f64::consts::PI {
            Branch::Plus
        } else {
            Branch::Minus
        }
    }

    /// Half-open angle interval `(lo, hi]`.
    pub fn interval(self) -> (f64, f64) {
        use std::f64::consts::PI;
        match self {
            Branch::Plus => (0.0, PI),
            Branch::Minus => (PI, 2.0 * PI),
        }
    }

    pub fn sign_char(self) -> char {
        match self {
            Branch::Plus => '+',
            Branch::Minus => '-',
        }
    }
}

/// Circle of radius `r*` lifted onto the local unstable manifold.
#[derive(Clone, Debug)]
pub struct FundamentalDomain<T> {
    r_star: T,
    coeffs: SeriesCoefficients<T>,
}

impl<T: Real> FundamentalDomain<T> {
    /// Builds the domain with the radius policy of [`choose_radius`].
    pub fn new(coeffs: SeriesCoefficients<T>, tol: T) -> Result<Self, ManifoldError> {
        let r_star = choose_radius(&coeffs, tol)?;
        Self::with_radius(coeffs, r_star)
    }

    /// Radius search on the grid `start * 2^-j`.
    pub fn with_grid(coeffs: SeriesCoefficients<T>, tol: T, start: T) -> Result<Self, ManifoldError> {
        let r_star = choose_radius_from(&coeffs, tol, start)?;
        Self::with_radius(coeffs, r_star)
    }

    /// Builds the domain at a caller-chosen radius, checking the Hamiltonian
    /// bound on the probe angles.
    pub fn with_radius(coeffs: SeriesCoefficients<T>, r_star: T) -> Result<Self, ManifoldError> {
        let d = Self { r_star, coeffs };
        for j in 1..=RADIUS_PROBE_ANGLES {
            let th = T::TAU() * T::from_usize_lossy(j) / T::from_usize_lossy(RADIUS_PROBE_ANGLES);
            d.sigma(th)?;
        }
        Ok(d)
    }

    pub fn r_star(&self) -> T {
        self.r_star
    }

    pub fn coeffs(&self) -> &SeriesCoefficients<T> {
        &self.coeffs
    }

    pub fn params(&self) -> Params<T> {
        self.coeffs.params()
    }

    /// Point of the domain at angle `theta in (0, 2 pi]`.
    pub fn sigma(&self, theta: T) -> Result<State4<T>, ManifoldError> {
        if !(theta > T::zero() && theta <= T::TAU()) {
            return Err(ManifoldError::AngleOutOfRange {
                theta: theta.to_f64_lossy(),
            });
        }
        let (x1, x2) = self.circle_point(theta);
        let pt = self.coeffs.evaluate(x1, x2);
        let s = State4::new(x1, x2, pt.x3, pt.x4);
        let h = hamiltonian(s, self.coeffs.params());
        if !(h.abs() < T::lit(DOMAIN_H_BOUND)) {
            return Err(ManifoldError::HamiltonianDrift {
                theta: theta.to_f64_lossy(),
                h: h.to_f64_lossy(),
            });
        }
        Ok(s)
    }

    /// `(r* cos theta, r* sin theta)` with the axis angles snapped so that the
    /// branch endpoints lie exactly on `x2 = 0`.
    fn circle_point(&self, theta: T) -> (T, T) {
        let r = self.r_star;
        if theta == T::PI() {
            (-r, T::zero())
        } else if theta == T::TAU() {
            (r, T::zero())
        } else {
            (r * theta.cos(), r * theta.sin())
        }
    }

    pub fn sample(&self, thetas: &[T]) -> Result<Vec<State4<T>>, ManifoldError> {
        thetas.iter().map(|&t| self.sigma(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn coeffs(eta: f64, m: usize) -> SeriesCoefficients<f64> {
        compute_coefficients(Params::bifocal(eta).unwrap(), m).unwrap()
    }

    #[test]
    fn linear_terms_at_zero() {
        let c = coeffs(0.0, 1);
        assert_relative_eq!(c.a(1, 0), -1.0, epsilon = 1e-15);
        assert_relative_eq!(c.a(0, 1), 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(c.b(1, 0), -(2f64.sqrt()), epsilon = 1e-15);
        // 3 rho^2 - omega^2 = eta3 + 1
        assert_relative_eq!(c.b(0, 1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_vanishes_at_origin() {
        let c = coeffs(-1.0, 8);
        assert_eq!(c.invariance_residual(0.0, 0.0), (0.0, 0.0));
        let e = c.evaluate(0.0, 0.0);
        assert_eq!((e.x3, e.x4, e.err_estimate), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_truncation_residual_is_quadratic() {
        // With only the linear terms the second residual misses +x1^2 and the
        // first one is exact; at (0.1, 0) that is 1e-2.
        let c = coeffs(0.0, 1);
        let (ra, rb) = c.invariance_residual(0.1, 0.0);
        assert!(ra.abs() < 1e-15);
        assert_relative_eq!(rb, 0.01, epsilon = 1e-14);
    }

    #[test]
    fn zero_tolerance_has_no_radius() {
        let c = coeffs(-1.73, 10);
        assert!(matches!(
            choose_radius(&c, 0.0),
            Err(ManifoldError::NoConvergentRadius { .. })
        ));
    }

    #[test]
    fn non_bifocal_is_rejected() {
        assert!(compute_coefficients(Params::new(2.5).unwrap(), 5).is_err());
        assert!(matches!(
            compute_coefficients(Params::new(0.0).unwrap(), 0),
            Err(ManifoldError::ZeroOrder)
        ));
    }

    #[test]
    fn domain_endpoints() {
        let c = coeffs(-1.73, DEFAULT_ORDER);
        let d = FundamentalDomain::new(c, DEFAULT_SERIES_TOL).unwrap();
        let r = d.r_star();
        let q_plus = d.sigma(PI).unwrap();
        assert_eq!((q_plus.x1, q_plus.x2), (-r, 0.0));
        assert!(q_plus.x3 > 0.0);
        let q_minus = d.sigma(2.0 * PI).unwrap();
        assert_eq!((q_minus.x1, q_minus.x2), (r, 0.0));
        assert!(q_minus.x3 < 0.0);
        let top = d.sigma(PI / 2.0).unwrap();
        assert!(top.x1.abs() < 1e-15 && (top.x2 - r).abs() < 1e-15);
        assert!(d.sigma(0.0).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let c = coeffs(-0.4, 6);
        let t = c.to_table();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"M\":6"));
        let back: CoefficientTable = serde_json::from_str(&json).unwrap();
        let c2 = SeriesCoefficients::from_table(&back).unwrap();
        for m in 1..=6 {
            for s in 0..=m {
                assert_eq!(c.a(m - s, s), c2.a(m - s, s));
                assert_eq!(c.b(m - s, s), c2.b(m - s, s));
            }
        }
    }
}

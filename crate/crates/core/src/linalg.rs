//! Small dense linear algebra: LU with partial pivoting and a 1-norm
//! condition number. Sizes here never exceed a few hundred unknowns.

use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n + c] = v;
    }

    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|c| (0..self.n).fold(T::zero(), |acc, r| acc + self.get(r, c).abs()))
            .fold(T::zero(), T::max)
    }

    pub fn lu(&self) -> Option<Lu<T>> {
        Lu::factor(self.clone())
    }
}

/// Row-pivoted LU factorisation `P A = L U` stored in place.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    fn factor(mut a: DenseMatrix<T>) -> Option<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, max) = (k..n)
                .map(|r| (r, a.get(r, k).abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if max == T::zero() || !max.is_finite() {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let d = a.get(k, k);
            for r in k + 1..n {
                let f = a.get(r, k) / d;
                a.set(r, k, f);
                if f != T::zero() {
                    for c in k + 1..n {
                        let v = a.get(r, c) - f * a.get(k, c);
                        a.set(r, c, v);
                    }
                }
            }
        }
        Some(Self { lu: a, perm })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.lu.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu.get(r, c) * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu.get(r, c) * x[c];
            }
            x[r] = acc / self.lu.get(r, r);
        }
        x
    }

    /// `||A||_1 ||A^-1||_1`, with the inverse formed column by column.
    pub fn condition1(&self, a: &DenseMatrix<T>) -> T {
        let n = self.lu.n;
        let mut inv_norm = T::zero();
        let mut e = vec![T::zero(); n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[c] = T::one();
            let col = self.solve(&e);
            let s = col.iter().fold(T::zero(), |acc, v| acc + v.abs());
            inv_norm = inv_norm.max(s);
        }
        a.norm1() * inv_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let mut a = DenseMatrix::<f64>::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                a.set(r, c, *v);
            }
        }
        let lu = a.lu().unwrap();
        let x = lu.solve(&[7.0, 3.0, 6.0]);
        for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert!(lu.condition1(&a) >= 1.0);
    }

    #[test]
    fn singular_is_none() {
        let mut a = DenseMatrix::<f64>::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(a.lu().is_none());
    }
}

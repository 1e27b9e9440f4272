//! The vector field, its first integral, the reversor and the linear spectrum
//! at the origin.
//!
//! ```text
//! x1' = x2, x2' = x3, x3' = x4, x4' = -x1 + eta3 x3 + x1^2
//! H = x1^2/2 - x1^3/3 - (eta3/2) x2^2 + x2 x4 - x3^2/2
//! R(x1, x2, x3, x4) = (x1, -x2, x3, -x4)
//! ```

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("eta3 = {eta3} is outside the bifocal range (-2, 2)")]
    NotBifocal { eta3: f64 },
    #[error("eta3 must be finite, got {eta3}")]
    NonFinite { eta3: f64 },
}

/// Parameter of the family. Only `eta3` is free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub eta3: T,
}

impl<T: Real> Params<T> {
    pub fn new(eta3: T) -> Result<Self, SystemError> {
        if !eta3.is_finite() {
            return Err(SystemError::NonFinite {
                eta3: eta3.to_f64_lossy(),
            });
        }
        Ok(Self { eta3 })
    }

    /// Parameter checked to lie in the open bifocal interval.
    pub fn bifocal(eta3: T) -> Result<Self, SystemError> {
        let p = Self::new(eta3)?;
        p.bifocal_rates()?;
        Ok(p)
    }

    pub fn is_bifocal(&self) -> bool {
        let two = T::lit(2.0);
        self.eta3 > -two && self.eta3 < two
    }

    /// `(rho, omega)` of the bifocus, or a typed rejection outside (-2, 2).
    pub fn bifocal_rates(&self) -> Result<(T, T), SystemError> {
        match classify_spectrum(*self) {
            Spectrum::Bifocus { rho, omega } => Ok((rho, omega)),
            _ => Err(SystemError::NotBifocal {
                eta3: self.eta3.to_f64_lossy(),
            }),
        }
    }
}

/// A point of the four dimensional phase space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State4<T> {
    pub x1: T,
    pub x2: T,
    pub x3: T,
    pub x4: T,
}

impl<T: Real> State4<T> {
    pub const fn new(x1: T, x2: T, x3: T, x4: T) -> Self {
        Self { x1, x2, x3, x4 }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn to_array(self) -> [T; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    #[inline]
    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm(&self) -> T {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3 + self.x4 * self.x4).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Self) -> T {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| (*u - *v) * (*u - *v))
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt()
    }
}

/// Right hand side of the family.
#[inline]
pub fn vector_field<T: Real>(s: State4<T>, p: Params<T>) -> State4<T> {
    State4::new(s.x2, s.x3, s.x4, -s.x1 + p.eta3 * s.x3 + s.x1 * s.x1)
}

/// First integral; vanishes on the invariant manifolds of the origin.
#[inline]
pub fn hamiltonian<T: Real>(s: State4<T>, p: Params<T>) -> T {
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    half * s.x1 * s.x1 - third * s.x1 * s.x1 * s.x1 - half * p.eta3 * s.x2 * s.x2 + s.x2 * s.x4
        - half * s.x3 * s.x3
}

/// Analytic gradient of [`hamiltonian`].
pub fn hamiltonian_gradient<T: Real>(s: State4<T>, p: Params<T>) -> State4<T> {
    State4::new(
        s.x1 - s.x1 * s.x1,
        -p.eta3 * s.x2 + s.x4,
        -s.x3,
        s.x2,
    )
}

/// The reversing involution.
#[inline]
pub fn reversor<T: Real>(s: State4<T>) -> State4<T> {
    State4::new(s.x1, -s.x2, s.x3, -s.x4)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumClass {
    TwoImaginaryPairs,
    DoubleImaginary,
    Bifocus,
    DoubleReal,
    TwoRealPairs,
}

/// Eigenvalue structure of the linearisation at the origin, whose
/// characteristic polynomial is `l^4 - eta3 l^2 + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Spectrum<T> {
    /// `eta3 < -2`: eigenvalues `+-i omega1`, `+-i omega2`.
    TwoImaginaryPairs { omega1: T, omega2: T },
    /// `eta3 = -2`: double `+-i`.
    DoubleImaginary,
    /// `-2 < eta3 < 2`: `+-rho +- i omega`.
    Bifocus { rho: T, omega: T },
    /// `eta3 = 2`: double `+-1`.
    DoubleReal,
    /// `eta3 > 2`: `+-lambda1`, `+-lambda2`.
    TwoRealPairs { lambda1: T, lambda2: T },
}

impl<T: Real> Spectrum<T> {
    pub fn class(&self) -> SpectrumClass {
        match self {
            Spectrum::TwoImaginaryPairs { .. } => SpectrumClass::TwoImaginaryPairs,
            Spectrum::DoubleImaginary => SpectrumClass::DoubleImaginary,
            Spectrum::Bifocus { .. } => SpectrumClass::Bifocus,
            Spectrum::DoubleReal => SpectrumClass::DoubleReal,
            Spectrum::TwoRealPairs { .. } => SpectrumClass::TwoRealPairs,
        }
    }

    /// The four eigenvalues with multiplicity.
    pub fn eigenvalues(&self) -> [Complex<T>; 4] {
        let z = T::zero();
        let o = T::one();
        match *self {
            Spectrum::TwoImaginaryPairs { omega1, omega2 } => [
                Complex::new(z, omega1),
                Complex::new(z, -omega1),
                Complex::new(z, omega2),
                Complex::new(z, -omega2),
            ],
            Spectrum::DoubleImaginary => [
                Complex::new(z, o),
                Complex::new(z, -o),
                Complex::new(z, o),
                Complex::new(z, -o),
            ],
            Spectrum::Bifocus { rho, omega } => [
                Complex::new(rho, omega),
                Complex::new(rho, -omega),
                Complex::new(-rho, omega),
                Complex::new(-rho, -omega),
            ],
            Spectrum::DoubleReal => [
                Complex::new(o, z),
                Complex::new(-o, z),
                Complex::new(o, z),
                Complex::new(-o, z),
            ],
            Spectrum::TwoRealPairs { lambda1, lambda2 } => [
                Complex::new(lambda1, z),
                Complex::new(-lambda1, z),
                Complex::new(lambda2, z),
                Complex::new(-lambda2, z),
            ],
        }
    }
}

/// Closed-form classification of the spectrum at the origin.
pub fn classify_spectrum<T: Real>(p: Params<T>) -> Spectrum<T> {
    let eta = p.eta3;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    if eta == -two {
        Spectrum::DoubleImaginary
    } else if eta == two {
        Spectrum::DoubleReal
    } else if eta < -two {
        let disc = (eta * eta - four).sqrt();
        Spectrum::TwoImaginaryPairs {
            omega1: ((-eta + disc) / two).sqrt(),
            omega2: ((-eta - disc) / two).sqrt(),
        }
    } else if eta > two {
        let disc = (eta * eta - four).sqrt();
        Spectrum::TwoRealPairs {
            lambda1: ((eta + disc) / two).sqrt(),
            lambda2: ((eta - disc) / two).sqrt(),
        }
    } else {
        Spectrum::Bifocus {
            rho: (eta + two).sqrt() / two,
            omega: (-eta + two).sqrt() / two,
        }
    }
}

//! One-dimensional Gaussian truncated to an interval, with closed-form
//! moments, interval masses and Gaussian-kernel expectations.

use rand::Rng;

use crate::scalar::{lit, Scalar};

/// Beyond this many standard deviations the truncation correction is below
/// `1e-17` relative and the untruncated formulas are used verbatim.
const NO_TRUNCATION_SIGMAS: f64 = 8.5;

/// Standard normal density.
pub fn pdf<T: Scalar>(z: T) -> T {
    (-(z * z) * lit(0.5)).exp() / (T::TAU()).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
pub fn cdf<T: Scalar>(z: T) -> T {
    lit::<T>(0.5) * (-z / T::SQRT_2()).erfc()
}

/// `Φ(b) − Φ(a)` for `a ≤ b`, evaluated on the side with less cancellation.
pub fn interval_mass<T: Scalar>(a: T, b: T) -> T {
    if a >= b {
        return T::zero();
    }
    if a > T::zero() {
        cdf(-a) - cdf(-b)
    } else {
        cdf(b) - cdf(a)
    }
}

/// `N(mean, sd²)` conditioned on `[lo, hi]`; `sd = 0` is a point mass at the
/// clamped mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal<T> {
    pub mean: T,
    pub sd: T,
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> TruncatedNormal<T> {
    pub fn new(mean: T, sd: T, lo: T, hi: T) -> Self {
        debug_assert!(lo < hi && sd >= T::zero());
        Self { mean, sd, lo, hi }
    }

    fn is_point(&self) -> bool {
        self.sd == T::zero()
    }

    fn standardized(&self) -> (T, T) {
        (
            (self.lo - self.mean) / self.sd,
            (self.hi - self.mean) / self.sd,
        )
    }

    /// Whether the truncation changes any moment at the working precision.
    pub fn is_truncated(&self) -> bool {
        if self.is_point() {
            return false;
        }
        let (a, b) = self.standardized();
        let limit = lit::<T>(NO_TRUNCATION_SIGMAS);
        a > -limit || b < limit
    }

    /// Probability mass of the untruncated Gaussian inside `[lo, hi]`.
    pub fn normalizer(&self) -> T {
        if self.is_point() {
            return T::one();
        }
        let (a, b) = self.standardized();
        interval_mass(a, b)
    }

    /// Returns `(mean, variance)` of the truncated law.
    pub fn mean_var(&self) -> (T, T) {
        if self.is_point() {
            return (self.mean.max(self.lo).min(self.hi), T::zero());
        }
        if !self.is_truncated() {
            return (self.mean, self.sd * self.sd);
        }
        let (a, b) = self.standardized();
        let z = interval_mass(a, b);
        let (pa, pb) = (pdf(a), pdf(b));
        let shift = (pa - pb) / z;
        let mean = self.mean + self.sd * shift;
        let var = self.sd * self.sd * (T::one() + (a * pa - b * pb) / z - shift * shift);
        (mean, var.max(T::zero()))
    }

    /// Probability that a draw falls in `[a, b]`.
    pub fn prob_in(&self, a: T, b: T) -> T {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if self.is_point() {
            let m = self.mean.max(self.lo).min(self.hi);
            return if m >= a && m <= b {
                T::one()
            } else {
                T::zero()
            };
        }
        if a > b {
            return T::zero();
        }
        let za = (a - self.mean) / self.sd;
        let zb = (b - self.mean) / self.sd;
        (interval_mass(za, zb) / self.normalizer()).min(T::one())
    }

    /// `E[exp(−(X − c)² / (2ℓ²))]`.
    pub fn gaussian_expectation(&self, c: T, lengthscale: T) -> T {
        let l2 = lengthscale * lengthscale;
        if self.is_point() {
            let d = self.mean.max(self.lo).min(self.hi) - c;
            return (-(d * d) / (l2 + l2)).exp();
        }
        let s2 = self.sd * self.sd;
        let tot = s2 + l2;
        let d = self.mean - c;
        let base = (l2 / tot).sqrt() * (-(d * d) / (tot + tot)).exp();
        if !self.is_truncated() {
            return base;
        }
        // The product of the two Gaussians is a Gaussian in x with these parameters.
        let m_star = (self.mean * l2 + c * s2) / tot;
        let s_star = (s2 * l2 / tot).sqrt();
        let num = interval_mass((self.lo - m_star) / s_star, (self.hi - m_star) / s_star);
        base * num / self.normalizer()
    }

    /// Rejection sampling; acceptance is at least one half whenever the mean
    /// lies inside the interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if self.is_point() {
            return self.mean.max(self.lo).min(self.hi);
        }
        loop {
            let x = self.mean + self.sd * T::standard_normal(rng);
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
    }
}

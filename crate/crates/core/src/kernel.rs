//! Gaussian kernel, its analytic derivatives, and the regularized Gram system
//! that turns values at supporting states into a value function on the whole
//! plane: `v(s) = k(s, S)ᵀ (λI + K)⁻¹ V`.

use crate::error::{Error, Result};
use crate::geometry::State;
use crate::linalg::{Cholesky, Mat2, Matrix, Vec2};
use crate::scalar::{lit, Scalar};

/// Minimum distance between two supporting states.
pub const MIN_SUPPORT_SEPARATION: f64 = 1e-9;

/// `k(s1, s2) = c · exp(−½ (s1 − s2)ᵀ Σ⁻¹ (s1 − s2))` plus the ridge `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams<T> {
    amplitude: T,
    lengthscale: Mat2<T>,
    precision: Mat2<T>,
    lambda: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(amplitude: T, lengthscale: Mat2<T>, lambda: T) -> Result<Self> {
        if !(amplitude > T::zero()) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        if !lengthscale.is_spd() {
            return Err(Error::InvalidParameter(
                "kernel lengthscale matrix must be symmetric positive definite".into(),
            ));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "regularization must be non-negative, got {lambda}"
            )));
        }
        let mut precision = lengthscale
            .inverse()
            .ok_or_else(|| Error::InvalidParameter("singular lengthscale matrix".into()))?;
        // Keep the precision exactly symmetric.
        precision.c = precision.b;
        Ok(Self {
            amplitude,
            lengthscale,
            precision,
            lambda,
        })
    }

    /// `Σ = ℓ² I`.
    pub fn isotropic(amplitude: T, lengthscale: T, lambda: T) -> Result<Self> {
        if !(lengthscale > T::zero()) || !lengthscale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        let l2 = lengthscale * lengthscale;
        Self::new(amplitude, Mat2::diag(l2, l2), lambda)
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    /// The lengthscale matrix `Σ`.
    pub fn lengthscale(&self) -> Mat2<T> {
        self.lengthscale
    }

    /// `Σ⁻¹`.
    pub fn precision(&self) -> Mat2<T> {
        self.precision
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Per-axis lengthscales when `Σ` is diagonal.
    pub fn axis_lengthscales(&self) -> Option<(T, T)> {
        (self.lengthscale.b == T::zero())
            .then(|| (self.lengthscale.a.sqrt(), self.lengthscale.d.sqrt()))
    }

    pub fn kernel(&self, s1: State<T>, s2: State<T>) -> T {
        self.kernel_at(s1 - s2)
    }

    #[inline]
    fn kernel_at(&self, d: Vec2<T>) -> T {
        self.amplitude * (-lit::<T>(0.5) * self.precision.quad(d)).exp()
    }

    /// `∇_{s1} k(s1, s2) = −Σ⁻¹ (s1 − s2) k(s1, s2)`.
    pub fn kernel_grad(&self, s1: State<T>, s2: State<T>) -> Vec2<T> {
        let d = s1 - s2;
        let k = self.kernel_at(d);
        -self.precision.mul_vec(d).scale(k)
    }

    /// `∇_{s1} · σ ∇_{s1} k(s1, s2) = (−tr(σΣ⁻¹) + dᵀ Σ⁻ᵀ σ Σ⁻¹ d) k`, `d = s1 − s2`.
    pub fn kernel_diffusion(&self, sigma: Mat2<T>, s1: State<T>, s2: State<T>) -> T {
        let d = s1 - s2;
        let k = self.kernel_at(d);
        let pd = self.precision.mul_vec(d);
        (sigma.quad(pd) - (sigma * self.precision).trace()) * k
    }

    /// Hessian of `k` in its first argument: `(Σ⁻¹ d dᵀ Σ⁻¹ − Σ⁻¹) k`.
    pub fn kernel_hessian(&self, s1: State<T>, s2: State<T>) -> Mat2<T> {
        let d = s1 - s2;
        let k = self.kernel_at(d);
        let pd = self.precision.mul_vec(d);
        (pd.outer(pd) - self.precision).scale(k)
    }

    /// Value, gradient and Hessian of `k(·, s2)` at `s1` in one pass.
    #[inline]
    fn jet(&self, s1: State<T>, s2: State<T>) -> (T, Vec2<T>, Mat2<T>) {
        let d = s1 - s2;
        let k = self.kernel_at(d);
        let pd = self.precision.mul_vec(d);
        (k, -pd.scale(k), (pd.outer(pd) - self.precision).scale(k))
    }
}

/// Gram matrix over the supporting states with a reusable factorization of `λI + K`.
#[derive(Debug, Clone)]
pub struct GramSystem<T> {
    params: KernelParams<T>,
    support: Vec<State<T>>,
    gram: Matrix<T>,
    factor: Cholesky<T>,
}

impl<T: Scalar> GramSystem<T> {
    /// Builds `K` and factorizes `λI + K` once.
    ///
    /// Supporting states closer than [`MIN_SUPPORT_SEPARATION`] are rejected
    /// with the offending index pair.
    pub fn build(params: KernelParams<T>, support: &[State<T>]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidParameter("support set is empty".into()));
        }
        if let Some(s) = support.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite supporting state ({}, {})",
                s.x, s.y
            )));
        }
        let min_sep = lit::<T>(MIN_SUPPORT_SEPARATION);
        for i in 0..support.len() {
            for j in 0..i {
                if (support[i] - support[j]).norm() <= min_sep {
                    return Err(Error::NearDuplicateSupport {
                        first: j,
                        second: i,
                    });
                }
            }
        }
        let n = support.len();
        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            gram[(i, i)] = params.amplitude;
            for j in 0..i {
                let k = params.kernel(support[i], support[j]);
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        let mut reg = gram.clone();
        for i in 0..n {
            reg[(i, i)] += params.lambda;
        }
        let factor = Cholesky::factor(&reg)?;
        Ok(Self {
            params,
            support: support.to_vec(),
            gram,
            factor,
        })
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn support(&self) -> &[State<T>] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.gram
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// `λI + K`.
    pub fn regularized(&self) -> Matrix<T> {
        let mut m = self.gram.clone();
        for i in 0..self.len() {
            m[(i, i)] += self.params.lambda;
        }
        m
    }

    /// `α = (λI + K)⁻¹ V`.
    pub fn weights(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} supporting states",
                values.len(),
                self.len()
            )));
        }
        Ok(self.factor.solve(values))
    }

    /// Kernel expansion of the supporting-state values `V`.
    pub fn expansion(&self, values: &[T]) -> Result<KernelExpansion<'_, T>> {
        Ok(KernelExpansion {
            gram: self,
            alpha: self.weights(values)?,
        })
    }

    /// `k(s, S)ᵀ (λI + K)⁻¹ V`.
    pub fn value_at(&self, values: &[T], s: State<T>) -> Result<T> {
        Ok(self.expansion(values)?.value(s))
    }

    pub fn value_grad_at(&self, values: &[T], s: State<T>) -> Result<Vec2<T>> {
        Ok(self.expansion(values)?.grad(s))
    }

    pub fn value_diffusion_at(&self, values: &[T], sigma: Mat2<T>, s: State<T>) -> Result<T> {
        Ok(self.expansion(values)?.diffusion(sigma, s))
    }

    /// Row `k(s, S)`.
    pub fn kernel_row(&self, s: State<T>) -> Vec<T> {
        self.support
            .iter()
            .map(|&sj| self.params.kernel(s, sj))
            .collect()
    }
}

/// `v(s) = Σ_j α_j k(s, s_j)` with `α` precomputed.
#[derive(Debug, Clone)]
pub struct KernelExpansion<'a, T> {
    gram: &'a GramSystem<T>,
    alpha: Vec<T>,
}

impl<'a, T: Scalar> KernelExpansion<'a, T> {
    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn gram(&self) -> &'a GramSystem<T> {
        self.gram
    }

    pub fn value(&self, s: State<T>) -> T {
        let p = &self.gram.params;
        self.gram
            .support
            .iter()
            .zip(&self.alpha)
            .map(|(&sj, &a)| a * p.kernel(s, sj))
            .sum()
    }

    pub fn grad(&self, s: State<T>) -> Vec2<T> {
        let p = &self.gram.params;
        self.gram
            .support
            .iter()
            .zip(&self.alpha)
            .fold(Vec2::zero(), |acc, (&sj, &a)| {
                acc + p.kernel_grad(s, sj).scale(a)
            })
    }

    /// `∇·σ∇ v(s)`, summed termwise over the kernel diffusion operator.
    pub fn diffusion(&self, sigma: Mat2<T>, s: State<T>) -> T {
        let p = &self.gram.params;
        self.gram
            .support
            .iter()
            .zip(&self.alpha)
            .map(|(&sj, &a)| a * p.kernel_diffusion(sigma, s, sj))
            .sum()
    }

    /// Value, gradient and Hessian at `s` in a single pass over the support.
    pub fn jet(&self, s: State<T>) -> (T, Vec2<T>, Mat2<T>) {
        let p = &self.gram.params;
        let mut v = T::zero();
        let mut g = Vec2::zero();
        let mut h = Mat2::zero();
        for (&sj, &a) in self.gram.support.iter().zip(&self.alpha) {
            let (k, kg, kh) = p.jet(s, sj);
            v += a * k;
            g = g + kg.scale(a);
            h = h + kh.scale(a);
        }
        (v, g, h)
    }
}

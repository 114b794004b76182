//! Modal coefficient spaces built on a list of Dirichlet eigenvalues.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Eigenvalues `lambda_j` of the elliptic operator, shared by every modal
/// vector of a model. `||a||_sigma^2 = sum lambda_j^sigma a_j^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    lambdas: Arc<[f64]>,
}

impl Spectrum {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidModel("empty eigenvalue list".into()));
        }
        if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidModel("eigenvalues must be positive and finite".into()));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidModel("eigenvalues must be nondecreasing".into()));
        }
        Ok(Self { lambdas: lambdas.into() })
    }

    /// `lambda_j = j^2`, the Dirichlet Laplacian on `(0, pi)`.
    pub fn interval_pi(modes: usize) -> Result<Self> {
        Self::new((1..=modes).map(|j| (j * j) as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: a.len() });
        }
        Ok(())
    }

    /// `lambda_j^sigma` for every mode.
    pub fn weights(&self, sigma: f64) -> Vec<f64> {
        self.lambdas.iter().map(|l| pow(*l, sigma)).collect()
    }

    pub fn norm_sq(&self, a: &[f64], sigma: f64) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        self.lambdas.iter().zip(a).map(|(l, x)| pow(*l, sigma) * x * x).sum()
    }

    pub fn norm(&self, a: &[f64], sigma: f64) -> f64 {
        self.norm_sq(a, sigma).sqrt()
    }

    pub fn inner(&self, a: &[f64], b: &[f64], sigma: f64) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        self.lambdas.iter().zip(a).zip(b).map(|((l, x), y)| pow(*l, sigma) * x * y).sum()
    }

    /// `A^p a`.
    pub fn apply_power(&self, a: &[f64], p: f64) -> Vec<f64> {
        self.lambdas.iter().zip(a).map(|(l, x)| pow(*l, p) * x).collect()
    }
}

#[inline]
fn pow(l: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else if sigma == 1.0 {
        l
    } else if sigma == -1.0 {
        1.0 / l
    } else if sigma == 2.0 {
        l * l
    } else {
        l.powf(sigma)
    }
}

/// `||(u, v)||_{X^iota}^2 = ||u||_{iota+1}^2 + ||v||_iota^2`.
pub fn phase_norm_sq(spectrum: &Spectrum, u: &[f64], v: &[f64], iota: f64) -> f64 {
    spectrum.norm_sq(u, iota + 1.0) + spectrum.norm_sq(v, iota)
}

/// Pseudospectral transform pair between sine coefficients on `(0, pi)` and
/// values at the interior points `x_m = m pi / M`, `M = 4J`.
///
/// With `M = 4J` the projection of a cubic of a `J`-mode polynomial is exact.
#[derive(Debug, Clone)]
pub struct SineCollocation {
    modes: usize,
    points: usize,
    /// Row-major `points x modes`: `phi_j(x_m) = sqrt(2/pi) sin(j x_m)`.
    basis: Vec<f64>,
    weight: f64,
}

impl SineCollocation {
    pub fn new(modes: usize) -> Self {
        let big_m = 4 * modes.max(1);
        let points = big_m - 1;
        let norm = (2.0 / std::f64::consts::PI).sqrt();
        let mut basis = Vec::with_capacity(points * modes);
        for m in 1..=points {
            let x = m as f64 * std::f64::consts::PI / big_m as f64;
            for j in 1..=modes {
                basis.push(norm * (j as f64 * x).sin());
            }
        }
        Self { modes, points, basis, weight: std::f64::consts::PI / big_m as f64 }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn nodes(&self) -> Vec<f64> {
        let big_m = (self.points + 1) as f64;
        (1..=self.points).map(|m| m as f64 * std::f64::consts::PI / big_m).collect()
    }

    /// Pointwise values of `sum_j a_j phi_j`.
    pub fn to_physical(&self, a: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            let row = &self.basis[m * self.modes..(m + 1) * self.modes];
            *o = row.iter().zip(a).map(|(p, x)| p * x).sum();
        }
    }

    /// Discrete `L^2` projection of pointwise values onto the modes.
    pub fn to_modal(&self, values: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (m, &f) in values.iter().enumerate() {
            let row = &self.basis[m * self.modes..(m + 1) * self.modes];
            for (o, p) in out.iter_mut().zip(row) {
                *o += self.weight * f * p;
            }
        }
    }

    /// Discrete `L^2` inner product of two pointwise functions.
    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![]).is_err());
        assert!(Spectrum::new(vec![1.0, 0.0]).is_err());
        assert!(Spectrum::new(vec![4.0, 1.0]).is_err());
        let s = Spectrum::interval_pi(3).unwrap();
        assert_eq!(s.lambdas(), &[1.0, 4.0, 9.0]);
        assert_eq!(s.lambda1(), 1.0);
    }

    #[test]
    fn sigma_norms() {
        let s = Spectrum::interval_pi(2).unwrap();
        let a = [1.0, 2.0];
        assert_eq!(s.norm_sq(&a, 0.0), 5.0);
        assert_eq!(s.norm_sq(&a, 1.0), 1.0 + 16.0);
        assert_eq!(s.norm_sq(&a, -1.0), 1.0 + 1.0);
        assert!((s.norm_sq(&a, 0.5) - (1.0 + 8.0)).abs() < 1e-14);
    }

    #[test]
    fn collocation_round_trip() {
        let c = SineCollocation::new(5);
        let a = [0.3, -1.0, 0.25, 0.0, 2.0];
        let mut phys = vec![0.0; c.points()];
        c.to_physical(&a, &mut phys);
        let mut back = [0.0; 5];
        c.to_modal(&phys, &mut back);
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}

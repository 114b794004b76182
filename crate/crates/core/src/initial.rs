//! Initial data recipes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::MemoryKernel;
use crate::memory_spaces::{history_len, HistoryField, MemoryMeasure};
use crate::modal::{phase_norm_sq, Spectrum};
use crate::quadrature::QuadratureRule;

/// Phase space in which a random ball is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallSpace {
    H0,
    H1,
}

impl BallSpace {
    pub fn iota(self) -> f64 {
        match self {
            BallSpace::H0 => 0.0,
            BallSpace::H1 => 1.0,
        }
    }
}

/// Random `(u, v)` with coefficients uniform in `[-1, 1]` divided by
/// `lambda_j`, rescaled so that the phase norm equals `radius`.
pub fn random_phase(spectrum: &Spectrum, radius: f64, space: BallSpace, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let draw = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        spectrum.lambdas().iter().map(|l| rng.gen_range(-1.0..=1.0) / l).collect()
    };
    let mut u = draw(rng);
    let mut v = draw(rng);
    let norm = phase_norm_sq(spectrum, &u, &v, space.iota()).sqrt();
    if norm > 0.0 {
        let c = radius / norm;
        u.iter_mut().chain(v.iter_mut()).for_each(|x| *x *= c);
    }
    (u, v)
}

/// `count` independent draws from one seed; member `i` depends only on `(seed, i)`.
pub fn random_ensemble(spectrum: &Spectrum, radius: f64, space: BallSpace, seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            random_phase(spectrum, radius, space, &mut rng)
        })
        .collect()
}

/// Smooth history `eta_0(s) = lambda_j c_j (1 - e^{-s})`, the memory left by a
/// displacement `c` switched on gradually in the past.
pub fn smooth_history(kernel: &MemoryKernel, spectrum: &Spectrum, c: &[f64], spacing: f64) -> HistoryField {
    let m = MemoryMeasure::history(kernel, spacing, history_len(kernel, spacing), QuadratureRule::Trapezoid);
    let lambdas = spectrum.lambdas().to_vec();
    HistoryField::from_fn(m, spectrum.len(), |s, out| {
        let g = 1.0 - (-s).exp();
        for ((o, l), x) in out.iter_mut().zip(&lambdas).zip(c) {
            *o = l * x * g;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_radius_and_determinism() {
        let sp = Spectrum::interval_pi(6).unwrap();
        let a = random_ensemble(&sp, 2.0, BallSpace::H1, 7, 3);
        let b = random_ensemble(&sp, 2.0, BallSpace::H1, 7, 3);
        assert_eq!(a, b);
        for (u, v) in &a {
            assert!((phase_norm_sq(&sp, u, v, 1.0).sqrt() - 2.0).abs() < 1e-12);
        }
        assert_ne!(a[0], a[1]);
    }
}

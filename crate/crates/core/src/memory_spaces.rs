//! Grid realizations of the memory spaces (history variable weighted by `mu`)
//! and state spaces (state variable weighted by `nu = 1/mu`), together with
//! the tail functional, the map from histories to states, and translations.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;
use crate::modal::{phase_norm_sq, Spectrum};
use crate::quadrature::{uniform_weights, QuadratureRule};

/// States are kept only where `mu(tau)` exceeds this fraction of `mu` near zero.
pub const STATE_CUTOFF: f64 = 1e-12;

/// Node weights of a uniform memory grid `0, h, 2h, ...` for a given density.
#[derive(Debug, Clone)]
pub struct MemoryMeasure {
    spacing: f64,
    rule: QuadratureRule,
    kernel_id: Arc<str>,
    rule_weights: Arc<[f64]>,
    /// `mu` or `nu` at the nodes, zero where it is not finite.
    density: Arc<[f64]>,
    /// `rule_weights * density`.
    weights: Arc<[f64]>,
}

impl MemoryMeasure {
    fn build(kernel: &MemoryKernel, spacing: f64, len: usize, rule: QuadratureRule, f: impl Fn(f64) -> f64) -> Self {
        let rule_weights: Arc<[f64]> = uniform_weights(len, spacing, rule).into();
        let density: Arc<[f64]> = (0..len)
            .map(|i| {
                let d = f(i as f64 * spacing);
                if d.is_finite() {
                    d
                } else {
                    0.0
                }
            })
            .collect();
        let weights = rule_weights.iter().zip(density.iter()).map(|(w, d)| w * d).collect();
        Self { spacing, rule, kernel_id: kernel.id().into(), rule_weights, density, weights }
    }

    /// `mu`-weighted measure on `len` nodes.
    pub fn history(kernel: &MemoryKernel, spacing: f64, len: usize, rule: QuadratureRule) -> Self {
        Self::build(kernel, spacing, len, rule, |s| kernel.mu_cut(s))
    }

    /// `nu`-weighted measure on `len` nodes.
    pub fn state(kernel: &MemoryKernel, spacing: f64, len: usize, rule: QuadratureRule) -> Self {
        Self::build(kernel, spacing, len, rule, |t| kernel.nu(t))
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn rule_weights(&self) -> &[f64] {
        &self.rule_weights
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.node(self.len().saturating_sub(1))
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len() && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }
}

/// Number of history nodes `0, h, ..., N h` covering `[0, s_max]`.
pub fn history_len(kernel: &MemoryKernel, spacing: f64) -> usize {
    (kernel.s_max() / spacing + 1e-9).floor() as usize + 1
}

/// Number of state nodes: the grid stops once `mu` has dropped below
/// [`STATE_CUTOFF`] of its value near zero, or at `s_max`.
pub fn state_len(kernel: &MemoryKernel, spacing: f64) -> usize {
    let n_max = history_len(kernel, spacing);
    let reference = {
        let m0 = kernel.mu(0.0);
        if m0.is_finite() {
            m0
        } else {
            kernel.mu(spacing)
        }
    };
    let mut n = 1;
    while n < n_max && kernel.mu_cut(n as f64 * spacing) > STATE_CUTOFF * reference {
        n += 1;
    }
    n.max(2).min(n_max.max(2))
}

macro_rules! field_common {
    ($name:ident) => {
        impl $name {
            pub fn from_values(measure: MemoryMeasure, modes: usize, values: Vec<f64>) -> Result<Self> {
                if values.len() != measure.len() * modes {
                    return Err(Error::DimensionMismatch { expected: measure.len() * modes, found: values.len() });
                }
                Ok(Self { measure, modes, values })
            }

            pub fn zeros(measure: MemoryMeasure, modes: usize) -> Self {
                let values = vec![0.0; measure.len() * modes];
                Self { measure, modes, values }
            }

            /// Sample `f(node, out)` at every node.
            pub fn from_fn(measure: MemoryMeasure, modes: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
                let mut values = vec![0.0; measure.len() * modes];
                for (i, chunk) in values.chunks_mut(modes.max(1)).enumerate().take(measure.len()) {
                    f(measure.node(i), chunk);
                }
                Self { measure, modes, values }
            }

            pub fn measure(&self) -> &MemoryMeasure {
                &self.measure
            }

            pub fn len(&self) -> usize {
                self.measure.len()
            }

            pub fn is_empty(&self) -> bool {
                self.measure.is_empty()
            }

            pub fn modes(&self) -> usize {
                self.modes
            }

            pub fn spacing(&self) -> f64 {
                self.measure.spacing
            }

            pub fn node(&self, i: usize) -> f64 {
                self.measure.node(i)
            }

            pub fn value(&self, i: usize) -> &[f64] {
                &self.values[i * self.modes..(i + 1) * self.modes]
            }

            pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
                &mut self.values[i * self.modes..(i + 1) * self.modes]
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            /// Squared weighted norm with per-node modal norm of order `iota - 1`.
            pub fn norm_sq(&self, spectrum: &Spectrum, iota: f64) -> f64 {
                let lw = spectrum.weights(iota - 1.0);
                self.measure
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(i, w)| w * self.value(i).iter().zip(&lw).map(|(x, l)| l * x * x).sum::<f64>())
                    .sum()
            }

            /// Linear interpolation in the node variable; zero past the last node.
            pub fn interpolate(&self, s: f64, out: &mut [f64]) {
                let h = self.spacing();
                let x = s / h;
                let i = x.floor();
                if s < 0.0 || i as usize >= self.len() {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let i = i as usize;
                let t = x - i as f64;
                if i + 1 >= self.len() || t <= 1e-12 {
                    if i + 1 >= self.len() && t > 1e-12 {
                        out.iter_mut().for_each(|o| *o = 0.0);
                    } else {
                        out.copy_from_slice(self.value(i));
                    }
                    return;
                }
                let (a, b) = (self.value(i), self.value(i + 1));
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = x + t * (y - x);
                }
            }

            /// Linear combination `self + alpha * other` on the same grid.
            pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
                if !self.measure.same_grid(&other.measure) || self.modes != other.modes {
                    return Err(Error::GridMismatch("fields live on different grids".into()));
                }
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += alpha * b;
                }
                Ok(())
            }
        }
    };
}

/// History variable `eta(s)` sampled at `s = i h`, weighted by `mu(s) ds`.
#[derive(Debug, Clone)]
pub struct HistoryField {
    measure: MemoryMeasure,
    modes: usize,
    values: Vec<f64>,
}

/// State variable `xi(tau)` sampled at `tau = i h`, weighted by `nu(tau) dtau`.
#[derive(Debug, Clone)]
pub struct StateField {
    measure: MemoryMeasure,
    modes: usize,
    values: Vec<f64>,
}

field_common!(HistoryField);
field_common!(StateField);

impl HistoryField {
    /// History grid covering `[0, s_max]` with the given spacing.
    pub fn on_kernel(kernel: &MemoryKernel, spacing: f64, modes: usize, rule: QuadratureRule) -> Self {
        let m = MemoryMeasure::history(kernel, spacing, history_len(kernel, spacing), rule);
        Self::zeros(m, modes)
    }

    /// Finite-difference derivative in `s`: centered inside, second-order
    /// one-sided at both ends.
    pub fn derivative(&self) -> HistoryField {
        let (n, j, h) = (self.len(), self.modes, self.spacing());
        let mut out = vec![0.0; n * j];
        if n >= 2 {
            for i in 0..n {
                let d = &mut out[i * j..(i + 1) * j];
                for m in 0..j {
                    let f = |k: usize| self.values[k * j + m];
                    d[m] = if n == 2 {
                        (f(1) - f(0)) / h
                    } else if i == 0 {
                        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
                    } else if i == n - 1 {
                        (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
                    } else {
                        (f(i + 1) - f(i - 1)) / (2.0 * h)
                    };
                }
            }
        }
        HistoryField { measure: self.measure.clone(), modes: j, values: out }
    }

    /// `mu(s) ||eta(s)||_{-1}^2` at every node.
    fn tail_integrand(&self, spectrum: &Spectrum) -> Vec<f64> {
        (0..self.len()).map(|i| self.measure.density[i] * spectrum.norm_sq(self.value(i), -1.0)).collect()
    }
}

impl StateField {
    /// State grid for `kernel`, truncated per [`state_len`].
    pub fn on_kernel(kernel: &MemoryKernel, spacing: f64, modes: usize, rule: QuadratureRule) -> Self {
        let m = MemoryMeasure::state(kernel, spacing, state_len(kernel, spacing), rule);
        Self::zeros(m, modes)
    }
}

/// Memory component of an extended vector.
#[derive(Debug, Clone)]
pub enum Memory {
    History(HistoryField),
    State(StateField),
}

impl Memory {
    pub fn norm_sq(&self, spectrum: &Spectrum, iota: f64) -> f64 {
        match self {
            Memory::History(h) => h.norm_sq(spectrum, iota),
            Memory::State(s) => s.norm_sq(spectrum, iota),
        }
    }

    pub fn modes(&self) -> usize {
        match self {
            Memory::History(h) => h.modes(),
            Memory::State(s) => s.modes(),
        }
    }
}

/// Position, velocity and memory: a point of the extended history or state space.
#[derive(Debug, Clone)]
pub struct ExtendedVector {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub memory: Memory,
}

impl ExtendedVector {
    pub fn history(&self) -> Option<&HistoryField> {
        match &self.memory {
            Memory::History(h) => Some(h),
            Memory::State(_) => None,
        }
    }

    pub fn state(&self) -> Option<&StateField> {
        match &self.memory {
            Memory::State(s) => Some(s),
            Memory::History(_) => None,
        }
    }
}

/// Norm of `z` in the extended space of order `iota`.
pub fn norm_h(z: &ExtendedVector, spectrum: &Spectrum, iota: f64) -> Result<f64> {
    spectrum.check(&z.u)?;
    spectrum.check(&z.v)?;
    if z.memory.modes() != spectrum.len() {
        return Err(Error::DimensionMismatch { expected: spectrum.len(), found: z.memory.modes() });
    }
    Ok((phase_norm_sq(spectrum, &z.u, &z.v, iota) + z.memory.norm_sq(spectrum, iota)).sqrt())
}

/// `int_y^inf mu(s) ||eta(s)||_{-1}^2 ds` by the trapezoidal rule, with the
/// integrand interpolated linearly at `y`.
pub fn tail_function(eta: &HistoryField, spectrum: &Spectrum, y: f64) -> f64 {
    let g = eta.tail_integrand(spectrum);
    tail_of(&g, eta.spacing(), y)
}

fn tail_of(g: &[f64], h: f64, y: f64) -> f64 {
    let n = g.len();
    if n < 2 {
        return 0.0;
    }
    let end = (n - 1) as f64 * h;
    if y >= end {
        return 0.0;
    }
    let y = y.max(0.0);
    let j = ((y / h).floor() as usize).min(n - 2);
    let t = y / h - j as f64;
    let gy = g[j] + t * (g[j + 1] - g[j]);
    let mut total = 0.5 * (gy + g[j + 1]) * ((j + 1) as f64 * h - y);
    for i in j + 1..n - 1 {
        total += 0.5 * (g[i] + g[i + 1]) * h;
    }
    total
}

/// `||eta'||_{M^0}^2 + max_{nodes y >= 1} y T(y; eta)`.
pub fn h_functional(eta: &HistoryField, eta_prime: &HistoryField, spectrum: &Spectrum) -> Result<f64> {
    if !eta.measure.same_grid(&eta_prime.measure) || eta.modes != eta_prime.modes {
        return Err(Error::GridMismatch("derivative lives on a different grid".into()));
    }
    let g = eta.tail_integrand(spectrum);
    let h = eta.spacing();
    let n = g.len();
    // suffix trapezoid sums give T at every node in one pass
    let mut tail = 0.0;
    let mut best: f64 = 0.0;
    for i in (0..n).rev() {
        if i + 1 < n {
            tail += 0.5 * (g[i] + g[i + 1]) * h;
        }
        let y = i as f64 * h;
        if y >= 1.0 - 1e-12 {
            best = best.max(y * tail);
        }
    }
    Ok(eta_prime.norm_sq(spectrum, 0.0) + best)
}

/// `(Lambda eta)(tau)` for one `tau`, written into `out`.
pub fn lambda_at(eta: &HistoryField, kernel: &MemoryKernel, tau: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let w = eta.measure.rule_weights();
    for (i, &wi) in w.iter().enumerate() {
        let dm = kernel.mu_prime_cut(tau + eta.node(i));
        if dm == 0.0 || wi == 0.0 {
            continue;
        }
        let c = -wi * dm;
        for (o, x) in out.iter_mut().zip(eta.value(i)) {
            *o += c * x;
        }
    }
    let mut buf = vec![0.0; out.len()];
    // the support cutoff is a jump of height mu(s_max)
    let cut = kernel.s_max();
    let mu_end = kernel.mu(cut);
    if tau < cut && mu_end > 0.0 && mu_end.is_finite() {
        let s = (cut - tau).min(eta.node(eta.len() - 1));
        eta.interpolate(s, &mut buf);
        for (o, x) in out.iter_mut().zip(&buf) {
            *o += mu_end * x;
        }
    }
    for jump in kernel.jumps() {
        if tau < jump.position {
            eta.interpolate(jump.position - tau, &mut buf);
            for (o, x) in out.iter_mut().zip(&buf) {
                *o += jump.amplitude * x;
            }
        }
    }
}

/// The map from histories to states, on a state grid with the history spacing.
pub fn lambda_map(eta: &HistoryField, kernel: &MemoryKernel) -> StateField {
    let h = eta.spacing();
    let measure = MemoryMeasure::state(kernel, h, state_len(kernel, h), eta.measure.rule());
    let modes = eta.modes();
    let mut values = vec![0.0; measure.len() * modes];
    values.par_chunks_mut(modes.max(1)).enumerate().for_each(|(m, chunk)| {
        lambda_at(eta, kernel, m as f64 * h, chunk);
    });
    StateField { measure, modes, values }
}

/// `| int_0^inf mu(tau+s) eta(s) ds - int_tau^inf (Lambda eta)(y) dy |`,
/// the modal vector difference measured in the Euclidean norm.
pub fn lambda_identity_residual(eta: &HistoryField, kernel: &MemoryKernel, tau: f64) -> Result<f64> {
    let h = eta.spacing();
    let m = (tau / h).round();
    if (tau / h - m).abs() > 1e-9 || tau < 0.0 {
        return Err(Error::OffGrid { t: tau });
    }
    let m = m as usize;
    let modes = eta.modes();
    let n_tau = state_len(kernel, h);
    let mut left = vec![0.0; modes];
    for (i, &wi) in eta.measure.rule_weights().iter().enumerate() {
        let mu = kernel.mu_cut(tau + eta.node(i));
        if !mu.is_finite() {
            continue;
        }
        for (l, x) in left.iter_mut().zip(eta.value(i)) {
            *l += wi * mu * x;
        }
    }
    let mut right = vec![0.0; modes];
    if m + 1 < n_tau {
        let w = uniform_weights(n_tau - m, h, eta.measure.rule());
        let rows: Vec<Vec<f64>> = (m..n_tau)
            .into_par_iter()
            .map(|k| {
                let mut out = vec![0.0; modes];
                lambda_at(eta, kernel, k as f64 * h, &mut out);
                out
            })
            .collect();
        for (wk, row) in w.iter().zip(&rows) {
            for (r, x) in right.iter_mut().zip(row) {
                *r += wk * x;
            }
        }
    }
    Ok(left.iter().zip(&right).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// `(x, eta) -> (x, Lambda eta)`.
pub fn big_l_map(z: &ExtendedVector, kernel: &MemoryKernel) -> Result<ExtendedVector> {
    match &z.memory {
        Memory::History(eta) => {
            Ok(ExtendedVector { u: z.u.clone(), v: z.v.clone(), memory: Memory::State(lambda_map(eta, kernel)) })
        }
        Memory::State(_) => Err(Error::InvalidArgument("expected a history-framework vector".into())),
    }
}

/// Right translation: zero for `s <= t`, `eta(s - t)` beyond. Grid multiples of
/// the spacing shift values exactly; other `t` interpolate linearly.
pub fn right_translate(eta: &HistoryField, t: f64) -> HistoryField {
    let h = eta.spacing();
    let (n, j) = (eta.len(), eta.modes());
    let mut out = HistoryField::zeros(eta.measure.clone(), j);
    if t <= 0.0 {
        out.values.copy_from_slice(&eta.values);
        return out;
    }
    let k = (t / h).round();
    if (t / h - k).abs() <= 1e-9 {
        let k = k as usize;
        if k + 1 < n {
            out.values[(k + 1) * j..].copy_from_slice(&eta.values[j..(n - k) * j]);
        }
        return out;
    }
    let mut buf = vec![0.0; j];
    for i in 0..n {
        let s = eta.node(i);
        if s > t {
            eta.interpolate(s - t, &mut buf);
            out.value_mut(i).copy_from_slice(&buf);
        }
    }
    out
}

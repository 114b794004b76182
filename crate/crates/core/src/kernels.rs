//! Memory kernels: the weight `mu`, its integrated kernel `k`, the inverse
//! weight `nu = 1/mu`, and the admissibility diagnostics built on them.
//!
//! A kernel is a nonincreasing profile plus an optional finite list of
//! downward jumps, rescaled so that its first moment equals one (which is the
//! same as asking the integrated kernel `k` to have unit mass).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by inequality checks on closed-form kernels.
pub const ANALYTIC_TOL: f64 = 1e-9;
/// Relative tolerance used by inequality checks on tabulated kernels.
pub const TABULATED_TOL: f64 = 1e-6;
/// Target for the tail bound `theta * exp(-delta * s_max)`.
pub const SUPPORT_TAIL: f64 = 1e-10;

/// A discontinuity of `mu`: position and amplitude `mu(s-) - mu(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub position: f64,
    pub amplitude: f64,
}

/// Unnormalized shape of a kernel, before jumps and rescaling.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// `rate^2 exp(-rate s)`.
    Exponential { rate: f64 },
    /// `exp(-s)` on `[0,1)`, flat `exp(-1)` on `[1,2)`, `exp(1-s)` afterwards.
    FlatZone,
    /// Piecewise-linear interpolation of `(nodes, values)`; zero past the last node.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

impl KernelProfile {
    fn value(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { rate } => rate * rate * (-rate * s).exp(),
            Self::FlatZone => {
                if s < 1.0 {
                    (-s).exp()
                } else if s < 2.0 {
                    (-1.0f64).exp()
                } else {
                    (1.0 - s).exp()
                }
            }
            Self::Tabulated { nodes, values } => match segment(nodes, s) {
                Segment::Before => values[0],
                Segment::After => 0.0,
                Segment::Inside(i) => {
                    let t = (s - nodes[i]) / (nodes[i + 1] - nodes[i]);
                    values[i] + t * (values[i + 1] - values[i])
                }
            },
        }
    }

    /// Right derivative.
    fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { rate } => -rate * rate * rate * (-rate * s).exp(),
            Self::FlatZone => {
                if s < 1.0 {
                    -(-s).exp()
                } else if s < 2.0 {
                    0.0
                } else {
                    -(1.0 - s).exp()
                }
            }
            Self::Tabulated { nodes, values } => match segment(nodes, s) {
                Segment::Before | Segment::After => 0.0,
                Segment::Inside(i) => (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]),
            },
        }
    }

    /// `int_s^inf profile`.
    fn tail(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { rate } => rate * (-rate * s).exp(),
            Self::FlatZone => {
                let e1 = (-1.0f64).exp();
                if s < 1.0 {
                    (-s).exp() + e1
                } else if s < 2.0 {
                    (3.0 - s) * e1
                } else {
                    (1.0 - s).exp()
                }
            }
            Self::Tabulated { nodes, values } => {
                let mut total = 0.0;
                let start = s.max(0.0);
                if start < nodes[0] {
                    total += values[0] * (nodes[0] - start);
                }
                for i in 0..nodes.len() - 1 {
                    let (a, b) = (nodes[i], nodes[i + 1]);
                    if b <= start {
                        continue;
                    }
                    let lo = a.max(start);
                    let (fa, fb) = (self.value(lo), values[i + 1]);
                    total += 0.5 * (fa + fb) * (b - lo);
                }
                total
            }
        }
    }

    fn first_moment(&self) -> f64 {
        match self {
            Self::Exponential { .. } => 1.0,
            Self::FlatZone => 1.0 + 2.5 * (-1.0f64).exp(),
            Self::Tabulated { nodes, values } => {
                let mut total = 0.5 * values[0] * nodes[0] * nodes[0];
                for i in 0..nodes.len() - 1 {
                    let (a, b) = (nodes[i], nodes[i + 1]);
                    let (fa, fb) = (values[i], values[i + 1]);
                    let slope = (fb - fa) / (b - a);
                    // int_a^b s (fa + slope (s - a)) ds
                    let m1 = 0.5 * (b * b - a * a);
                    let m2 = (b.powi(3) - a.powi(3)) / 3.0;
                    total += (fa - slope * a) * m1 + slope * m2;
                }
                total
            }
        }
    }

    fn support_end(&self) -> f64 {
        match self {
            Self::Tabulated { nodes, .. } => *nodes.last().unwrap(),
            _ => f64::INFINITY,
        }
    }

    fn is_analytic(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::FlatZone => "flatzone",
            Self::Tabulated { .. } => "tabulated",
        }
    }
}

enum Segment {
    Before,
    Inside(usize),
    After,
}

fn segment(nodes: &[f64], s: f64) -> Segment {
    if s < nodes[0] {
        return Segment::Before;
    }
    if s >= *nodes.last().unwrap() {
        return Segment::After;
    }
    // nodes[i] <= s < nodes[i + 1]
    let i = nodes.partition_point(|&x| x <= s) - 1;
    Segment::Inside(i)
}

/// A validated memory kernel with its decay certificate `(theta, delta_decay)`.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    id: String,
    profile: KernelProfile,
    scale: f64,
    jumps: Vec<Jump>,
    theta: f64,
    delta_decay: f64,
    s_max: f64,
}

/// Builder input for [`MemoryKernel::new`].
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub id: String,
    pub profile: KernelProfile,
    /// Raw (pre-normalization) jumps.
    pub jumps: Vec<Jump>,
    pub theta: f64,
    pub delta_decay: f64,
    /// Rescale to unit first moment.
    pub normalize: bool,
}

/// Canonical analytic family `mu(s) = delta^2 exp(-delta s)`.
pub fn make_exponential_kernel(delta: f64) -> Result<MemoryKernel> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidKernel(format!("decay rate must be positive, got {delta}")));
    }
    MemoryKernel::new(KernelSpec {
        id: format!("exponential(delta={delta})"),
        profile: KernelProfile::Exponential { rate: delta },
        jumps: Vec::new(),
        theta: 1.0,
        delta_decay: delta,
        normalize: false,
    })
}

/// Kernel with a flat plateau on `[1,2)`, normalized to unit first moment.
/// Admissible with `(theta, delta) = (e, 1)` but not with `theta = 1`.
pub fn make_flatzone_kernel() -> MemoryKernel {
    MemoryKernel::new(KernelSpec {
        id: "flatzone".into(),
        profile: KernelProfile::FlatZone,
        jumps: Vec::new(),
        theta: std::f64::consts::E,
        delta_decay: 1.0,
        normalize: true,
    })
    .expect("flat-zone kernel is valid")
}

impl MemoryKernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let KernelSpec { id, profile, mut jumps, theta, delta_decay, normalize } = spec;
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(Error::InvalidKernel(format!("theta must be >= 1, got {theta}")));
        }
        if !(delta_decay > 0.0 && delta_decay.is_finite()) {
            return Err(Error::InvalidKernel(format!("delta must be positive, got {delta_decay}")));
        }
        match &profile {
            KernelProfile::Exponential { rate } if !(*rate > 0.0) => {
                return Err(Error::InvalidKernel(format!("decay rate must be positive, got {rate}")));
            }
            KernelProfile::Tabulated { nodes, values } => validate_table(nodes, values)?,
            _ => {}
        }
        for j in &jumps {
            if !(j.position > 0.0 && j.amplitude > 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "jump at {} with amplitude {} must have positive position and amplitude",
                    j.position, j.amplitude
                )));
            }
        }
        if jumps.windows(2).any(|w| w[1].position <= w[0].position) {
            return Err(Error::InvalidKernel("jump positions must be strictly increasing".into()));
        }
        let raw_moment = profile.first_moment()
            + jumps.iter().map(|j| 0.5 * j.amplitude * j.position * j.position).sum::<f64>();
        if !(raw_moment > 0.0 && raw_moment.is_finite()) {
            return Err(Error::InvalidKernel("kernel has no mass".into()));
        }
        let scale = if normalize { 1.0 / raw_moment } else { 1.0 };
        for j in jumps.iter_mut() {
            j.amplitude *= scale;
        }
        let s_max = ((theta / SUPPORT_TAIL).ln() / delta_decay).min(profile.support_end());
        let kernel = Self { id, profile, scale, jumps, theta, delta_decay, s_max };
        if !normalize {
            let m1 = kernel.first_moment();
            let tol = if kernel.is_analytic() { 1e-8 } else { TABULATED_TOL };
            if (m1 - 1.0).abs() > tol {
                log::warn!("kernel {} has first moment {m1}, not 1", kernel.id);
            }
        }
        Ok(kernel)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> &'static str {
        self.profile.name()
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn delta_decay(&self) -> f64 {
        self.delta_decay
    }

    /// Numerical support cutoff; `mu` is treated as zero beyond it.
    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn is_analytic(&self) -> bool {
        self.profile.is_analytic()
    }

    /// Relative tolerance for inequality checks on this kernel.
    pub fn tolerance(&self) -> f64 {
        if self.is_analytic() {
            ANALYTIC_TOL
        } else {
            TABULATED_TOL
        }
    }

    /// `mu(s)` on the full half-line (no support cutoff).
    pub fn mu(&self, s: f64) -> f64 {
        let jumps: f64 = self.jumps.iter().filter(|j| s < j.position).map(|j| j.amplitude).sum();
        self.scale * self.profile.value(s) + jumps
    }

    /// `mu(s)` with the support cutoff applied: zero for `s > s_max`.
    pub fn mu_cut(&self, s: f64) -> f64 {
        if s > self.s_max {
            0.0
        } else {
            self.mu(s)
        }
    }

    /// Right derivative of `mu`, ignoring jumps.
    pub fn mu_prime(&self, s: f64) -> f64 {
        self.scale * self.profile.derivative(s)
    }

    /// `mu'` with the support cutoff applied.
    pub fn mu_prime_cut(&self, s: f64) -> f64 {
        if s > self.s_max {
            0.0
        } else {
            self.mu_prime(s)
        }
    }

    fn k_full(&self, s: f64) -> f64 {
        let jumps: f64 = self.jumps.iter().map(|j| j.amplitude * (j.position - s).max(0.0)).sum();
        self.scale * self.profile.tail(s) + jumps
    }

    /// Integrated kernel `k(s) = int_s^{s_max} mu(y) dy`; zero for `s >= s_max`.
    pub fn k(&self, s: f64) -> f64 {
        if s >= self.s_max {
            return 0.0;
        }
        (self.k_full(s.max(0.0)) - self.k_full(self.s_max)).max(0.0)
    }

    /// `int_a^b mu`, both ends clipped to `[0, s_max]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.k(a) - self.k(b)
    }

    /// Total mass `k(0)`.
    pub fn mass(&self) -> f64 {
        self.k(0.0)
    }

    /// First moment `int s mu(s) ds` = `int k`.
    pub fn first_moment(&self) -> f64 {
        self.scale * self.profile.first_moment()
            + self.jumps.iter().map(|j| 0.5 * j.amplitude * j.position * j.position).sum::<f64>()
    }

    /// `nu(tau) = 1/mu(tau)`, zero where `mu` vanishes.
    pub fn nu(&self, tau: f64) -> f64 {
        let m = self.mu_cut(tau);
        if m > 0.0 && m.is_finite() {
            1.0 / m
        } else {
            0.0
        }
    }

    /// Uniform memory grid `0, h, ..., N h` with `N h <= s_max`.
    pub fn grid(&self, h: f64) -> Vec<f64> {
        let n = (self.s_max / h + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * h).collect()
    }

    /// Evaluate the derived kernels on `grid`.
    pub fn derive(&self, grid: &[f64]) -> DerivedKernels {
        let mut d_const: f64 = 0.0;
        for &s in grid {
            let m = self.mu_cut(s);
            if m > 0.0 && m.is_finite() {
                d_const = d_const.max(self.k(s) / m);
            }
        }
        DerivedKernels { grid: grid.to_vec(), k: grid.iter().map(|&s| self.k(s)).collect(), nu: grid.iter().map(|&s| self.nu(s)).collect(), d_const }
    }

    /// Basic admissibility: monotone, unit first moment, certificate holds.
    pub fn validate(&self, grid: &[f64]) -> AdmissibilityReport {
        let tol = self.tolerance();
        let mut monotone = true;
        for w in grid.windows(2) {
            let (a, b) = (self.mu(w[0]), self.mu(w[1]));
            if a.is_finite() && b > a * (1.0 + tol) + tol {
                monotone = false;
            }
        }
        let m1 = self.first_moment();
        let nec = check_nec(self, self.theta, self.delta_decay, grid);
        AdmissibilityReport {
            monotone,
            first_moment: m1,
            unit_moment: (m1 - 1.0).abs() <= 1e-6,
            nec,
        }
    }
}

fn validate_table(nodes: &[f64], values: &[f64]) -> Result<()> {
    if nodes.len() < 2 || nodes.len() != values.len() {
        return Err(Error::InvalidKernel("table needs at least two (s, mu) rows".into()));
    }
    if nodes[0] < 0.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidKernel("table nodes must be nonnegative and increasing".into()));
    }
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidKernel("table values must be finite and nonnegative".into()));
    }
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidKernel("table values must be nonincreasing".into()));
    }
    Ok(())
}

/// `k`, `nu` and the constant `D` with `k <= D mu`, sampled on a grid.
#[derive(Debug, Clone)]
pub struct DerivedKernels {
    pub grid: Vec<f64>,
    pub k: Vec<f64>,
    pub nu: Vec<f64>,
    pub d_const: f64,
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub monotone: bool,
    pub first_moment: f64,
    pub unit_moment: bool,
    pub nec: NecReport,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.monotone && self.unit_moment && self.nec.holds
    }
}

/// `k(s)` by exact tail integration of the profile.
pub fn k_from_mu(kernel: &MemoryKernel, s: f64) -> f64 {
    kernel.k(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NecReport {
    pub holds: bool,
    /// `max mu(t+s) e^{delta t} / (theta mu(s))` over grid pairs.
    pub worst_ratio: f64,
}

/// Scan `mu(t+s) <= theta e^{-delta t} mu(s)` over all pairs of grid values.
pub fn check_nec(kernel: &MemoryKernel, theta: f64, delta: f64, grid: &[f64]) -> NecReport {
    let tol = kernel.tolerance();
    let mu: Vec<f64> = grid.iter().map(|&s| kernel.mu(s)).collect();
    let mut worst: f64 = 0.0;
    for (&s, &ms) in grid.iter().zip(&mu) {
        if !(ms > 0.0) || !ms.is_finite() {
            continue;
        }
        for &t in grid {
            let ratio = kernel.mu(t + s) * (delta * t).exp() / (theta * ms);
            worst = worst.max(ratio);
        }
    }
    NecReport { holds: worst <= 1.0 + tol, worst_ratio: worst }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DafermosReport {
    pub holds: bool,
    /// Largest `mu' + delta mu` relative to `|mu'| + delta mu`.
    pub worst: f64,
}

/// Check `mu' + delta mu <= 0` pointwise on the grid.
pub fn check_dafermos(kernel: &MemoryKernel, delta: f64, grid: &[f64]) -> DafermosReport {
    let tol = kernel.tolerance();
    let mut worst = f64::NEG_INFINITY;
    for &s in grid {
        let (m, dm) = (kernel.mu(s), kernel.mu_prime(s));
        if !m.is_finite() {
            continue;
        }
        let scale = dm.abs() + delta * m;
        if scale == 0.0 {
            continue;
        }
        worst = worst.max((dm + delta * m) / scale);
    }
    DafermosReport { holds: worst <= tol, worst }
}

/// Flatness rate: mass of `{mu' = 0}` relative to `k(0)`.
pub fn flatness_rate(kernel: &MemoryKernel) -> f64 {
    let mass = kernel.mass();
    if mass <= 0.0 {
        return 0.0;
    }
    let end = kernel.s_max();
    let tol = kernel.tolerance();
    let flat = |s: f64| kernel.mu_prime(s).abs() <= tol * kernel.mu(s).abs();
    let cells = 4096;
    let h = end / cells as f64;
    let mut total = 0.0;
    let mut start: Option<f64> = if flat(0.0) { Some(0.0) } else { None };
    for i in 0..cells {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let mid_flat = flat(0.5 * (a + b));
        let b_flat = flat(b.min(end * (1.0 - 1e-15)));
        let a_flat = start.is_some();
        if a_flat && !(mid_flat && b_flat) {
            let edge = bisect_edge(&flat, a, b, true);
            total += kernel.mass_between(start.take().unwrap(), edge);
        }
        if start.is_none() && b_flat {
            let edge = if mid_flat { bisect_edge(&flat, a, 0.5 * (a + b), false) } else { bisect_edge(&flat, 0.5 * (a + b), b, false) };
            start = Some(edge);
        }
    }
    if let Some(s0) = start {
        total += kernel.mass_between(s0, end);
    }
    (total / mass).clamp(0.0, 1.0)
}

/// Locate the transition of `pred` inside `[a, b]`; `from_true` tells which
/// side holds the predicate.
fn bisect_edge(pred: &impl Fn(f64) -> bool, mut a: f64, mut b: f64, from_true: bool) -> f64 {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if pred(m) == from_true {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Truncated kernel `mu_nu = mu(s_nu)` on `(0, s_nu]`, `mu` afterwards.
#[derive(Debug, Clone)]
pub struct TruncatedKernel<'a> {
    pub s_nu: f64,
    pub mu_at_s_nu: f64,
    kernel: &'a MemoryKernel,
}

impl TruncatedKernel<'_> {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= self.s_nu && self.s_nu > 0.0 {
            self.mu_at_s_nu
        } else {
            self.kernel.mu_cut(s)
        }
    }
}

/// Largest grid value `s_nu` with `int_0^{s_nu} mu <= nu_small / 2`.
pub fn truncated_kernel<'a>(kernel: &'a MemoryKernel, nu_small: f64, grid: &[f64]) -> Result<TruncatedKernel<'a>> {
    let mass = kernel.mass();
    if !(nu_small > 0.0) || nu_small >= 2.0 * mass {
        return Err(Error::TruncationExceedsMass { requested: nu_small, available: 2.0 * mass });
    }
    let mut s_nu: f64 = 0.0;
    for &s in grid {
        if kernel.mass_between(0.0, s) <= 0.5 * nu_small {
            s_nu = s_nu.max(s);
        }
    }
    let mu_at_s_nu = if s_nu > 0.0 { kernel.mu(s_nu) } else { f64::NAN };
    Ok(TruncatedKernel { s_nu, mu_at_s_nu, kernel })
}

/// Masks of `P = {mu' + delta mu > 0}` and its complement on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMasks {
    pub positive: Vec<bool>,
    pub negative: Vec<bool>,
}

pub fn split_sets(kernel: &MemoryKernel, delta_split: f64, grid: &[f64]) -> SplitMasks {
    let tol = kernel.tolerance();
    let positive: Vec<bool> = grid
        .iter()
        .map(|&s| {
            let (m, dm) = (kernel.mu_cut(s), kernel.mu_prime_cut(s));
            let v = dm + delta_split * m;
            v > tol * (dm.abs() + delta_split * m)
        })
        .collect();
    let negative = positive.iter().map(|p| !p).collect();
    SplitMasks { positive, negative }
}

/// `int_s^inf mu chi_P` at every grid node, where `P = {mu' + delta mu > 0}`.
/// Cells with a membership change are split at the bisected transition.
pub fn positive_tail_mass(kernel: &MemoryKernel, delta_split: f64, grid: &[f64]) -> Vec<f64> {
    let tol = kernel.tolerance();
    let inside = |s: f64| {
        let (m, dm) = (kernel.mu_cut(s), kernel.mu_prime_cut(s));
        dm + delta_split * m > tol * (dm.abs() + delta_split * m)
    };
    let mut ends: Vec<f64> = grid.to_vec();
    if grid.last().is_some_and(|&e| e < kernel.s_max()) {
        ends.push(kernel.s_max());
    }
    let mut cell = vec![0.0; ends.len()];
    for i in 0..ends.len().saturating_sub(1) {
        let (a, b) = (ends[i], ends[i + 1]);
        // evaluate just inside the cell so right-continuous kinks resolve correctly
        let eps = 1e-12 * (b - a);
        let (pa, pm, pb) = (inside(a + eps), inside(0.5 * (a + b)), inside(b - eps));
        cell[i] = if pa && pm && pb {
            kernel.mass_between(a, b)
        } else if !pa && !pm && !pb {
            0.0
        } else if pa {
            let e = bisect_edge(&inside, a + eps, b - eps, true);
            kernel.mass_between(a, e)
        } else {
            let e = bisect_edge(&inside, a + eps, b - eps, false);
            kernel.mass_between(e, b)
        };
    }
    let mut out = vec![0.0; grid.len()];
    let mut acc = 0.0;
    for i in (0..ends.len()).rev() {
        acc += cell[i];
        if i < grid.len() {
            out[i] = acc;
        }
    }
    out
}

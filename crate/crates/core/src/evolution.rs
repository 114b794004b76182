//! Time integration of second-order systems with memory in either the
//! history or the state framework.
//!
//! The memory component is never transported on a grid. Both frameworks store
//! the snapshots of `(u, v)` and rebuild the memory force at every RK stage
//! from the explicit representation formulas:
//!
//! * history: `eta^t(s) = W(t) - W(t-s)` for `s <= t` and
//!   `eta_0(s-t) + W(t)` beyond, where `W` is the primitive of the memory source;
//! * state: `xi^t(tau) = xi_0(t+tau) + int_0^t mu(tau+s) a(t-s) ds`.
//!
//! Forces are `int mu eta` and `int xi` respectively, discretized by the
//! trapezoidal rule on the nodes `s = t_stage - t_snapshot`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::kernels::MemoryKernel;
use crate::memory_spaces::{
    history_len, lambda_at, lambda_map, state_len, ExtendedVector, HistoryField, Memory, MemoryMeasure, StateField,
};
use crate::modal::{phase_norm_sq, Spectrum};
use crate::quadrature::QuadratureRule;

/// States whose Euclidean norm exceeds this abort the run.
pub const BLOW_UP_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    History,
    State,
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Framework::History => "history",
            Framework::State => "state",
        })
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "history" => Ok(Framework::History),
            "state" => Ok(Framework::State),
            other => Err(Error::InvalidArgument(format!("unknown framework '{other}'"))),
        }
    }
}

/// Where an RK stage sits: step index, stage index (0..4) and its time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageContext {
    pub step: usize,
    pub stage: usize,
    pub time: f64,
}

/// The operators of `u' = v`, `v' = B(u, v, memory force)` with memory
/// source `A(u, v)`.
pub trait ModelOperators: Sync {
    fn dim(&self) -> usize;

    /// Memory source `A(u, v)`; must be linear in its arguments.
    fn memory_source(&self, u: &[f64], v: &[f64], out: &mut [f64]);

    /// `int_0^t A(u, v)` in closed form from `u(t)` and `u(0)`, if available.
    fn memory_primitive(&self, _u: &[f64], _u0: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Right-hand side of the first-order system.
    fn rhs(&self, u: &[f64], v: &[f64], memory_force: &[f64], ctx: StageContext, du: &mut [f64], dv: &mut [f64]);
}

/// Stored solution: snapshots of `u`, `v`, the memory source and its primitive
/// at `t_n = n dt`, plus the initial memory on a grid of spacing `dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    framework: Framework,
    kernel_id: String,
    dt: f64,
    modes: usize,
    window: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    primitive: Vec<f64>,
    source: Vec<f64>,
    initial: Memory,
    stages: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn framework(&self) -> Framework {
        self.framework
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Memory horizon: past beyond it carries no kernel weight.
    pub fn window(&self) -> f64 {
        self.window
    }

    /// Number of snapshots.
    pub fn len(&self) -> usize {
        self.u.len() / self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    pub fn u(&self, n: usize) -> &[f64] {
        &self.u[n * self.modes..(n + 1) * self.modes]
    }

    pub fn v(&self, n: usize) -> &[f64] {
        &self.v[n * self.modes..(n + 1) * self.modes]
    }

    /// `int_0^{t_n} A(u, v)`.
    pub fn primitive(&self, n: usize) -> &[f64] {
        &self.primitive[n * self.modes..(n + 1) * self.modes]
    }

    /// `A(u, v)` at `t_n`.
    pub fn source(&self, n: usize) -> &[f64] {
        &self.source[n * self.modes..(n + 1) * self.modes]
    }

    pub fn initial_memory(&self) -> &Memory {
        &self.initial
    }

    /// `u` at RK stage `stage` of step `step`, when stages were recorded.
    pub fn stage_u(&self, step: usize, stage: usize) -> Option<&[f64]> {
        let s = self.stages.as_ref()?;
        let off = (step * 4 + stage) * self.modes;
        s.get(off..off + self.modes)
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// Index of `t` on the time grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let n = x.round();
        if (x - n).abs() > 1e-6 || n < 0.0 || n as usize >= self.len() {
            return Err(Error::OffGrid { t });
        }
        Ok(n as usize)
    }
}

/// Resample a history onto the grid of spacing `h` covering `[0, s_max]`.
pub fn resample_history(eta: &HistoryField, kernel: &MemoryKernel, h: f64, rule: QuadratureRule) -> HistoryField {
    let m = MemoryMeasure::history(kernel, h, history_len(kernel, h), rule);
    if same_spacing(eta.spacing(), h) && eta.len() == m.len() {
        return HistoryField::from_values(m, eta.modes(), eta.values().to_vec()).expect("same shape");
    }
    HistoryField::from_fn(m, eta.modes(), |s, out| eta.interpolate(s, out))
}

/// Resample a state onto the grid of spacing `h` covering `[0, s_max]`.
pub fn resample_state(xi: &StateField, kernel: &MemoryKernel, h: f64, rule: QuadratureRule) -> StateField {
    let m = MemoryMeasure::state(kernel, h, history_len(kernel, h), rule);
    if same_spacing(xi.spacing(), h) && xi.len() == m.len() {
        return StateField::from_values(m, xi.modes(), xi.values().to_vec()).expect("same shape");
    }
    StateField::from_fn(m, xi.modes(), |s, out| xi.interpolate(s, out))
}

fn same_spacing(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b
}

/// Kernel samples at `j h` and `(j + 1/2) h`, zero past the support.
struct KernelTables {
    mu_grid: Vec<f64>,
    mu_half: Vec<f64>,
    k_grid: Vec<f64>,
    k_half: Vec<f64>,
}

impl KernelTables {
    fn new(kernel: &MemoryKernel, h: f64, n_window: usize) -> Self {
        let len = n_window + 3;
        let finite = |x: f64| if x.is_finite() { x } else { 0.0 };
        Self {
            mu_grid: (0..len).map(|j| finite(kernel.mu_cut(j as f64 * h))).collect(),
            mu_half: (0..len).map(|j| finite(kernel.mu_cut((j as f64 + 0.5) * h))).collect(),
            k_grid: (0..len).map(|j| kernel.k(j as f64 * h)).collect(),
            k_half: (0..len).map(|j| kernel.k((j as f64 + 0.5) * h)).collect(),
        }
    }

    /// Value at offset `(j + c) h` for `c` in `{0, 1/2, 1}`.
    fn at(grid: &[f64], half: &[f64], j: usize, c: Frac) -> f64 {
        let idx = match c {
            Frac::Zero => j,
            Frac::Half => j,
            Frac::One => j + 1,
        };
        let table = if c == Frac::Half { half } else { grid };
        table.get(idx).copied().unwrap_or(0.0)
    }

    fn mu(&self, j: usize, c: Frac) -> f64 {
        Self::at(&self.mu_grid, &self.mu_half, j, c)
    }

    fn k(&self, j: usize, c: Frac) -> f64 {
        Self::at(&self.k_grid, &self.k_half, j, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frac {
    Zero,
    Half,
    One,
}

impl Frac {
    fn value(self) -> f64 {
        match self {
            Frac::Zero => 0.0,
            Frac::Half => 0.5,
            Frac::One => 1.0,
        }
    }
}

/// Stage-independent part of the memory force at a given stage offset.
#[derive(Debug, Clone)]
struct ForceSums {
    /// History: trapezoid sum of `mu` over the snapshot nodes.
    scalar: f64,
    /// History: `sum w mu W_i`; state: `sum w k a_i`.
    vector: Vec<f64>,
    /// `int mu(tau + r) eta_0(r) dr` or `int_tau^inf xi_0`.
    initial: Vec<f64>,
    /// History: `k(tau)`, the mass past the current time.
    tail_mass: f64,
}

/// RK4 integrator that owns the trajectory it extends.
pub struct Integrator<'a, M: ModelOperators> {
    ops: &'a M,
    kernel: &'a MemoryKernel,
    tables: KernelTables,
    n_window: usize,
    traj: Trajectory,
    exact_primitive: bool,
    eta0_nonzero: bool,
    /// Initial-memory weights (history) or reverse cumulative integrals (state).
    init_weights: Vec<f64>,
    xi_tail_grid: Vec<f64>,
    xi_tail_half: Vec<f64>,
    cache: Option<(usize, ForceSums)>,
}

impl<'a, M: ModelOperators> Integrator<'a, M> {
    /// Start from `z0`; its memory must match `framework` (or be absent via
    /// [`zero_memory`]).
    pub fn new(ops: &'a M, kernel: &'a MemoryKernel, z0: &ExtendedVector, dt: f64, framework: Framework) -> Result<Self> {
        Self::with_options(ops, kernel, z0, dt, framework, false)
    }

    pub fn with_options(
        ops: &'a M,
        kernel: &'a MemoryKernel,
        z0: &ExtendedVector,
        dt: f64,
        framework: Framework,
        record_stages: bool,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let j = ops.dim();
        for (name, x) in [("u", &z0.u), ("v", &z0.v)] {
            if x.len() != j {
                log::debug!("initial {name} has {} modes, model has {j}", x.len());
                return Err(Error::DimensionMismatch { expected: j, found: x.len() });
            }
        }
        if z0.memory.modes() != j {
            return Err(Error::DimensionMismatch { expected: j, found: z0.memory.modes() });
        }
        let initial = match (&z0.memory, framework) {
            (Memory::History(eta), Framework::History) => {
                Memory::History(resample_history(eta, kernel, dt, QuadratureRule::Trapezoid))
            }
            (Memory::State(xi), Framework::State) => Memory::State(resample_state(xi, kernel, dt, QuadratureRule::Trapezoid)),
            _ => {
                return Err(Error::InvalidArgument(format!("initial memory does not match the {framework} framework")));
            }
        };
        let traj = Trajectory {
            framework,
            kernel_id: kernel.id().to_string(),
            dt,
            modes: j,
            window: kernel.s_max(),
            u: Vec::new(),
            v: Vec::new(),
            primitive: Vec::new(),
            source: Vec::new(),
            initial,
            stages: record_stages.then(Vec::new),
        };
        let mut it = Self::resume(ops, kernel, traj)?;
        it.push_snapshot(&z0.u, &z0.v);
        Ok(it)
    }

    /// Continue an existing trajectory.
    pub fn resume(ops: &'a M, kernel: &'a MemoryKernel, traj: Trajectory) -> Result<Self> {
        if traj.modes != ops.dim() {
            return Err(Error::DimensionMismatch { expected: ops.dim(), found: traj.modes });
        }
        let dt = traj.dt;
        let n_window = (kernel.s_max() / dt + 1e-9).floor() as usize;
        let tables = KernelTables::new(kernel, dt, n_window);
        let mut exact_primitive = true;
        {
            let mut probe = vec![0.0; traj.modes];
            let zeros = vec![0.0; traj.modes];
            exact_primitive &= ops.memory_primitive(&zeros, &zeros, &mut probe);
        }
        let (mut init_weights, mut xi_tail_grid, mut xi_tail_half) = (Vec::new(), Vec::new(), Vec::new());
        let mut eta0_nonzero = false;
        match &traj.initial {
            Memory::History(eta) => {
                eta0_nonzero = eta.values().iter().any(|x| *x != 0.0);
                init_weights = eta.measure().rule_weights().to_vec();
            }
            Memory::State(xi) => {
                let (g, hh) = reverse_cumulative(xi);
                xi_tail_grid = g;
                xi_tail_half = hh;
            }
        }
        Ok(Self {
            ops,
            kernel,
            tables,
            n_window,
            traj,
            exact_primitive,
            eta0_nonzero,
            init_weights,
            xi_tail_grid,
            xi_tail_half,
            cache: None,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }

    pub fn time(&self) -> f64 {
        self.traj.time(self.traj.last())
    }

    fn push_snapshot(&mut self, u: &[f64], v: &[f64]) {
        let j = self.traj.modes;
        let mut a = vec![0.0; j];
        self.ops.memory_source(u, v, &mut a);
        let mut w = vec![0.0; j];
        if self.traj.is_empty() {
            // W(0) = 0
        } else if self.exact_primitive {
            let u0 = self.traj.u(0).to_vec();
            self.ops.memory_primitive(u, &u0, &mut w);
        } else {
            let n = self.traj.last();
            let (wn, an) = (self.traj.primitive(n), self.traj.source(n));
            for i in 0..j {
                w[i] = wn[i] + 0.5 * self.traj.dt * (an[i] + a[i]);
            }
        }
        self.traj.u.extend_from_slice(u);
        self.traj.v.extend_from_slice(v);
        self.traj.source.extend_from_slice(&a);
        self.traj.primitive.extend_from_slice(&w);
    }

    /// Sums over stored snapshots for the stage at `t_n + c dt`.
    fn sums(&self, n: usize, c: Frac) -> ForceSums {
        let j = self.traj.modes;
        let h = self.traj.dt;
        let mut scalar = 0.0;
        let mut vector = vec![0.0; j];
        let lo = n.saturating_sub(self.n_window + 1);
        let history = self.traj.framework == Framework::History;
        for i in (lo..=n).rev() {
            let off = n - i;
            let left = if i == n { c.value() * h } else { h };
            let right = if i == 0 { 0.0 } else { h };
            let w = 0.5 * (left + right);
            if w == 0.0 {
                continue;
            }
            if history {
                let m = self.tables.mu(off, c);
                if m == 0.0 {
                    continue;
                }
                scalar += w * m;
                let wm = w * m;
                for (acc, x) in vector.iter_mut().zip(self.traj.primitive(i)) {
                    *acc += wm * x;
                }
            } else {
                let k = self.tables.k(off, c);
                if k == 0.0 {
                    continue;
                }
                let wk = w * k;
                for (acc, x) in vector.iter_mut().zip(self.traj.source(i)) {
                    *acc += wk * x;
                }
            }
        }
        let tau = (n as f64 + c.value()) * h;
        let initial = self.initial_term(n, c);
        ForceSums { scalar, vector, initial, tail_mass: self.kernel.k(tau) }
    }

    fn initial_term(&self, n: usize, c: Frac) -> Vec<f64> {
        let j = self.traj.modes;
        let mut out = vec![0.0; j];
        match &self.traj.initial {
            Memory::History(eta) => {
                if !self.eta0_nonzero || n > self.n_window + 1 {
                    return out;
                }
                for (r, &wr) in self.init_weights.iter().enumerate() {
                    let m = self.tables.mu(n + r, c);
                    if m == 0.0 || wr == 0.0 {
                        continue;
                    }
                    for (o, x) in out.iter_mut().zip(eta.value(r)) {
                        *o += wr * m * x;
                    }
                }
            }
            Memory::State(_) => {
                let (table, idx) = match c {
                    Frac::Zero => (&self.xi_tail_grid, n),
                    Frac::Half => (&self.xi_tail_half, n),
                    Frac::One => (&self.xi_tail_grid, n + 1),
                };
                if let Some(row) = table.get(idx * j..(idx + 1) * j) {
                    out.copy_from_slice(row);
                }
            }
        }
        out
    }

    /// Memory force at a stage with position `u`, source `a` and offset `c`.
    fn force(&self, sums: &ForceSums, n: usize, c: Frac, u: &[f64], a: &[f64], out: &mut [f64]) {
        let h = self.traj.dt;
        match self.traj.framework {
            Framework::History => {
                let mut w = vec![0.0; out.len()];
                if self.exact_primitive {
                    let u0 = self.traj.u(0);
                    self.ops.memory_primitive(u, u0, &mut w);
                } else {
                    let (wn, an) = (self.traj.primitive(n), self.traj.source(n));
                    for i in 0..w.len() {
                        w[i] = wn[i] + 0.5 * c.value() * h * (an[i] + a[i]);
                    }
                }
                let mass = sums.scalar + sums.tail_mass;
                for i in 0..out.len() {
                    out[i] = w[i] * mass - sums.vector[i] + sums.initial[i];
                }
            }
            Framework::State => {
                let w0 = 0.5 * c.value() * h * self.tables.k_grid[0];
                for i in 0..out.len() {
                    out[i] = w0 * a[i] + sums.vector[i] + sums.initial[i];
                }
            }
        }
    }

    fn stage_rhs(&self, sums: &ForceSums, n: usize, c: Frac, stage: usize, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        let j = u.len();
        let mut a = vec![0.0; j];
        self.ops.memory_source(u, v, &mut a);
        let mut m = vec![0.0; j];
        self.force(sums, n, c, u, &a, &mut m);
        let ctx = StageContext { step: n, stage, time: (n as f64 + c.value()) * self.traj.dt };
        self.ops.rhs(u, v, &m, ctx, du, dv);
    }

    /// Advance one step of size `dt`.
    pub fn step(&mut self) -> Result<()> {
        let n = self.traj.last();
        let j = self.traj.modes;
        let h = self.traj.dt;
        let s0 = match self.cache.take() {
            Some((cn, mut sums)) if cn + 1 == n => {
                // the previous end-of-step sums plus the newest snapshot at s = 0
                let half = 0.5 * h;
                match self.traj.framework {
                    Framework::History => {
                        let m0 = self.tables.mu_grid[0];
                        sums.scalar += half * m0;
                        for (acc, x) in sums.vector.iter_mut().zip(self.traj.primitive(n)) {
                            *acc += half * m0 * x;
                        }
                    }
                    Framework::State => {
                        let k0 = self.tables.k_grid[0];
                        for (acc, x) in sums.vector.iter_mut().zip(self.traj.source(n)) {
                            *acc += half * k0 * x;
                        }
                    }
                }
                sums.tail_mass = self.kernel.k(n as f64 * h);
                sums
            }
            _ => self.sums(n, Frac::Zero),
        };
        let s_half = self.sums(n, Frac::Half);
        let s_one = self.sums(n, Frac::One);

        let u0 = self.traj.u(n).to_vec();
        let v0 = self.traj.v(n).to_vec();
        let mut ku = [vec![0.0; j], vec![0.0; j], vec![0.0; j], vec![0.0; j]];
        let mut kv = [vec![0.0; j], vec![0.0; j], vec![0.0; j], vec![0.0; j]];
        let mut us = u0.clone();
        let mut vs = v0.clone();
        let plan = [(Frac::Zero, 0.0), (Frac::Half, 0.5), (Frac::Half, 0.5), (Frac::One, 1.0)];
        for (stage, &(c, frac)) in plan.iter().enumerate() {
            if stage > 0 {
                for i in 0..j {
                    us[i] = u0[i] + frac * h * ku[stage - 1][i];
                    vs[i] = v0[i] + frac * h * kv[stage - 1][i];
                }
            }
            if let Some(rec) = self.traj.stages.as_mut() {
                rec.extend_from_slice(&us);
            }
            let sums = match c {
                Frac::Zero => &s0,
                Frac::Half => &s_half,
                Frac::One => &s_one,
            };
            let (du, dv) = (&mut ku[stage], &mut kv[stage]);
            let mut du_buf = vec![0.0; j];
            let mut dv_buf = vec![0.0; j];
            self.stage_rhs(sums, n, c, stage, &us, &vs, &mut du_buf, &mut dv_buf);
            du.copy_from_slice(&du_buf);
            dv.copy_from_slice(&dv_buf);
        }
        let mut u1 = vec![0.0; j];
        let mut v1 = vec![0.0; j];
        for i in 0..j {
            u1[i] = u0[i] + h / 6.0 * (ku[0][i] + 2.0 * ku[1][i] + 2.0 * ku[2][i] + ku[3][i]);
            v1[i] = v0[i] + h / 6.0 * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
        }
        let norm = u1.iter().chain(&v1).map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > BLOW_UP_NORM {
            return Err(Error::BlowUp { t: (n + 1) as f64 * h });
        }
        self.push_snapshot(&u1, &v1);
        self.cache = Some((n, s_one));
        Ok(())
    }

    /// Step until `t_end` (rounded to the nearest grid time).
    pub fn run_until(&mut self, t_end: f64) -> Result<()> {
        let target = (t_end / self.traj.dt).round() as usize;
        while self.traj.last() < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Reverse cumulative trapezoid integrals `int_{x}^{end} xi` at grid and half-grid points.
fn reverse_cumulative(xi: &StateField) -> (Vec<f64>, Vec<f64>) {
    let (n, j, h) = (xi.len(), xi.modes(), xi.spacing());
    let mut grid = vec![0.0; n * j];
    let mut half = vec![0.0; n * j];
    for i in (0..n.saturating_sub(1)).rev() {
        let (a, b) = (xi.value(i), xi.value(i + 1));
        for m in 0..j {
            let next = grid[(i + 1) * j + m];
            grid[i * j + m] = next + 0.5 * h * (a[m] + b[m]);
            let mid = 0.5 * (a[m] + b[m]);
            half[i * j + m] = next + 0.25 * h * (mid + b[m]);
        }
    }
    (grid, half)
}

/// Zero memory of the right kind on the grid of spacing `h`.
pub fn zero_memory(kernel: &MemoryKernel, h: f64, modes: usize, framework: Framework) -> Memory {
    match framework {
        Framework::History => Memory::History(HistoryField::on_kernel(kernel, h, modes, QuadratureRule::Trapezoid)),
        Framework::State => Memory::State(StateField::zeros(
            MemoryMeasure::state(kernel, h, history_len(kernel, h), QuadratureRule::Trapezoid),
            modes,
        )),
    }
}

/// Integrate from `z0` to `t_end`.
pub fn simulate<M: ModelOperators>(
    ops: &M,
    kernel: &MemoryKernel,
    z0: &ExtendedVector,
    dt: f64,
    t_end: f64,
    framework: Framework,
) -> Result<Trajectory> {
    let mut it = Integrator::new(ops, kernel, z0, dt, framework)?;
    it.run_until(t_end)?;
    Ok(it.into_trajectory())
}

/// Run several initial data in parallel; results keep the input order.
pub fn run_ensemble<M: ModelOperators>(
    ops: &M,
    kernel: &MemoryKernel,
    inits: &[ExtendedVector],
    dt: f64,
    t_end: f64,
    framework: Framework,
) -> Vec<Result<Trajectory>> {
    inits.par_iter().map(|z| simulate(ops, kernel, z, dt, t_end, framework)).collect()
}

/// Append one step to `traj`.
pub fn step<M: ModelOperators>(traj: Trajectory, ops: &M, kernel: &MemoryKernel) -> Result<Trajectory> {
    let mut it = Integrator::resume(ops, kernel, traj)?;
    it.step()?;
    Ok(it.into_trajectory())
}

/// History at snapshot time `t`, on the grid of spacing `dt` covering `[0, s_max]`.
pub fn reconstruct_eta(traj: &Trajectory, t: f64, kernel: &MemoryKernel) -> Result<HistoryField> {
    let n = traj.index_of(t)?;
    let eta0 = match traj.initial_memory() {
        Memory::History(e) => e,
        Memory::State(_) => return Err(Error::InvalidArgument("trajectory was run in the state framework".into())),
    };
    Ok(eta_from_primitive(traj, n, kernel, Some(eta0)))
}

/// `W_n - W_{n-i}` for `s_i <= t_n`, `eta_0(s_i - t_n) + W_n` beyond.
fn eta_from_primitive(traj: &Trajectory, n: usize, kernel: &MemoryKernel, eta0: Option<&HistoryField>) -> HistoryField {
    let h = traj.dt();
    let j = traj.modes();
    let m = MemoryMeasure::history(kernel, h, history_len(kernel, h), QuadratureRule::Trapezoid);
    let wn = traj.primitive(n).to_vec();
    HistoryField::from_fn(m, j, |s, out| {
        let i = (s / h).round() as usize;
        if i <= n {
            for ((o, a), b) in out.iter_mut().zip(&wn).zip(traj.primitive(n - i)) {
                *o = a - b;
            }
        } else {
            let r = i - n;
            match eta0 {
                Some(e) if r < e.len() => {
                    for ((o, a), b) in out.iter_mut().zip(&wn).zip(e.value(r)) {
                        *o = a + b;
                    }
                }
                _ => out.copy_from_slice(&wn),
            }
        }
    })
}

/// The history `psi^t(s) = W(t) - W((t - s)_+)` obtained from any trajectory
/// by ignoring its initial memory.
pub fn summed_past_history(traj: &Trajectory, n: usize, kernel: &MemoryKernel) -> HistoryField {
    eta_from_primitive(traj, n, kernel, None)
}

/// State at snapshot time `t` on a grid of spacing `stride * dt`.
pub fn reconstruct_xi(traj: &Trajectory, t: f64, kernel: &MemoryKernel, stride: usize) -> Result<StateField> {
    let n = traj.index_of(t)?;
    let xi0 = match traj.initial_memory() {
        Memory::State(x) => x,
        Memory::History(_) => return Err(Error::InvalidArgument("trajectory was run in the history framework".into())),
    };
    let stride = stride.max(1);
    let h = traj.dt();
    let j = traj.modes();
    let ht = h * stride as f64;
    let m = MemoryMeasure::state(kernel, ht, state_len(kernel, ht), QuadratureRule::Trapezoid);
    let n_window = (kernel.s_max() / h + 1e-9).floor() as usize;
    let lo = n.saturating_sub(n_window + 1);
    let len = m.len();
    let mut values = vec![0.0; len * j];
    values.par_chunks_mut(j).enumerate().for_each(|(q, out)| {
        let tau = q as f64 * ht;
        let idx = n + q * stride;
        if idx < xi0.len() {
            out.copy_from_slice(xi0.value(idx));
        }
        for i in lo..=n {
            let off = n - i;
            let w = if n == 0 { 0.0 } else if i == 0 || i == n { 0.5 * h } else { h };
            let mu = kernel.mu_cut(tau + off as f64 * h);
            if w == 0.0 || mu == 0.0 || !mu.is_finite() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(traj.source(i)) {
                *o += w * mu * a;
            }
        }
    });
    StateField::from_values(m, j, values)
}

/// Memory-space norm of the stored memory at snapshot `n`.
pub fn memory_norm_sq(traj: &Trajectory, n: usize, kernel: &MemoryKernel, spectrum: &Spectrum, iota: f64, stride: usize) -> Result<f64> {
    let t = traj.time(n);
    Ok(match traj.framework() {
        Framework::History => reconstruct_eta(traj, t, kernel)?.norm_sq(spectrum, iota),
        Framework::State => reconstruct_xi(traj, t, kernel, stride)?.norm_sq(spectrum, iota),
    })
}

/// Full state at snapshot `n` as an extended vector.
pub fn state_at(traj: &Trajectory, n: usize, kernel: &MemoryKernel, stride: usize) -> Result<ExtendedVector> {
    let t = traj.time(n);
    let memory = match traj.framework() {
        Framework::History => Memory::History(reconstruct_eta(traj, t, kernel)?),
        Framework::State => Memory::State(reconstruct_xi(traj, t, kernel, stride)?),
    };
    Ok(ExtendedVector { u: traj.u(n).to_vec(), v: traj.v(n).to_vec(), memory })
}

/// Lambda applied to a history with the state grid coarsened by `stride`.
fn lambda_strided(eta: &HistoryField, kernel: &MemoryKernel, stride: usize) -> StateField {
    let h = eta.spacing() * stride as f64;
    let m = MemoryMeasure::state(kernel, h, state_len(kernel, h), QuadratureRule::Trapezoid);
    let j = eta.modes();
    let mut values = vec![0.0; m.len() * j];
    values.par_chunks_mut(j).enumerate().for_each(|(q, out)| lambda_at(eta, kernel, q as f64 * h, out));
    StateField::from_values(m, j, values).expect("shape")
}

#[derive(Debug, Clone)]
pub struct IntertwineReport {
    pub times: Vec<f64>,
    /// `X^0` distance of `(u, v)` between frameworks.
    pub phase: Vec<f64>,
    /// Total `V^0` distance including the state component.
    pub total: Vec<f64>,
    pub max_residual: f64,
    pub history: Trajectory,
    pub state: Trajectory,
}

/// Run `z0` in the history framework and `(x0, Lambda eta0)` in the state
/// framework, and compare `Lambda` of the reconstructed history with the
/// reconstructed state at `samples` evenly spaced times.
pub fn intertwine_residual<M: ModelOperators>(
    ops: &M,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    z0: &ExtendedVector,
    dt: f64,
    t_end: f64,
    samples: usize,
    tau_stride: usize,
) -> Result<IntertwineReport> {
    let eta0 = z0.history().ok_or_else(|| Error::InvalidArgument("expected a history-framework vector".into()))?;
    let eta0 = resample_history(eta0, kernel, dt, QuadratureRule::Trapezoid);
    let xi0 = lambda_map(&eta0, kernel);
    let zh = ExtendedVector { u: z0.u.clone(), v: z0.v.clone(), memory: Memory::History(eta0) };
    let zs = ExtendedVector { u: z0.u.clone(), v: z0.v.clone(), memory: Memory::State(xi0) };
    let (hist, state) = rayon::join(
        || simulate(ops, kernel, &zh, dt, t_end, Framework::History),
        || simulate(ops, kernel, &zs, dt, t_end, Framework::State),
    );
    let (hist, state) = (hist?, state?);
    let last = hist.last();
    let samples = samples.max(1);
    let idx: Vec<usize> = (1..=samples).map(|k| k * last / samples).collect();
    let mut times = Vec::new();
    let mut phase = Vec::new();
    let mut total = Vec::new();
    for &n in &idx {
        let du: Vec<f64> = hist.u(n).iter().zip(state.u(n)).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = hist.v(n).iter().zip(state.v(n)).map(|(a, b)| a - b).collect();
        let p = phase_norm_sq(spectrum, &du, &dv, 0.0);
        let eta = reconstruct_eta(&hist, hist.time(n), kernel)?;
        let mapped = lambda_strided(&eta, kernel, tau_stride);
        let mut xi = reconstruct_xi(&state, state.time(n), kernel, tau_stride)?;
        xi.axpy(-1.0, &mapped)?;
        let mem = xi.norm_sq(spectrum, 0.0);
        times.push(hist.time(n));
        phase.push(p.sqrt());
        total.push((p + mem).sqrt());
    }
    let max_residual = total.iter().cloned().fold(0.0, f64::max);
    Ok(IntertwineReport { times, phase, total, max_residual, history: hist, state })
}

#[derive(Debug, Clone)]
pub struct GrowthFit {
    pub times: Vec<f64>,
    pub separation: Vec<f64>,
    /// Fit of `ln(d(t)/d(0)) = ln Q + rate t`.
    pub fit: LinearFit,
}

impl GrowthFit {
    pub fn rate(&self) -> f64 {
        self.fit.slope
    }

    pub fn q(&self) -> f64 {
        self.fit.intercept.exp()
    }
}

/// Separation of two solutions in the extended norm of order 0, sampled
/// every `sample_every` steps, with a log-linear growth fit.
#[allow(clippy::too_many_arguments)]
pub fn holder_growth_probe<M: ModelOperators>(
    ops: &M,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    z1: &ExtendedVector,
    z2: &ExtendedVector,
    dt: f64,
    t_end: f64,
    framework: Framework,
    sample_every: usize,
) -> Result<GrowthFit> {
    let (a, b) = rayon::join(
        || simulate(ops, kernel, z1, dt, t_end, framework),
        || simulate(ops, kernel, z2, dt, t_end, framework),
    );
    let (a, b) = (a?, b?);
    let d = separation_series(&a, &b, kernel, spectrum, sample_every.max(1))?;
    let d0 = d.1[0];
    if !(d0 > 0.0) {
        return Err(Error::Degenerate("initial data are indistinguishable".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &x) in d.0.iter().zip(&d.1) {
        if x > 0.0 && x / d0 > 1e-300 {
            xs.push(t);
            ys.push((x / d0).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("separation is indistinguishable from zero".into()));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(GrowthFit { times: d.0, separation: d.1, fit })
}

/// `||S(t) z1 - S(t) z2||` in the order-0 extended norm at sampled snapshots.
pub fn separation_series(
    a: &Trajectory,
    b: &Trajectory,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    sample_every: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() || a.framework() != b.framework() {
        return Err(Error::InvalidArgument("trajectories are not comparable".into()));
    }
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    for n in (0..a.len()).step_by(sample_every) {
        let du: Vec<f64> = a.u(n).iter().zip(b.u(n)).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = a.v(n).iter().zip(b.v(n)).map(|(x, y)| x - y).collect();
        let mem = match a.framework() {
            Framework::History => {
                let mut ea = reconstruct_eta(a, a.time(n), kernel)?;
                ea.axpy(-1.0, &reconstruct_eta(b, b.time(n), kernel)?)?;
                ea.norm_sq(spectrum, 0.0)
            }
            Framework::State => {
                let mut xa = reconstruct_xi(a, a.time(n), kernel, 1)?;
                xa.axpy(-1.0, &reconstruct_xi(b, b.time(n), kernel, 1)?)?;
                xa.norm_sq(spectrum, 0.0)
            }
        };
        ts.push(a.time(n));
        ds.push((phase_norm_sq(spectrum, &du, &dv, 0.0) + mem).sqrt());
    }
    Ok((ts, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_exponential_kernel;

    /// `u'' + lambda u + int mu eta = 0` for one mode.
    struct OneMode {
        lambda: f64,
    }

    impl ModelOperators for OneMode {
        fn dim(&self) -> usize {
            1
        }
        fn memory_source(&self, _u: &[f64], v: &[f64], out: &mut [f64]) {
            out[0] = self.lambda * v[0];
        }
        fn memory_primitive(&self, u: &[f64], u0: &[f64], out: &mut [f64]) -> bool {
            out[0] = self.lambda * (u[0] - u0[0]);
            true
        }
        fn rhs(&self, _u: &[f64], v: &[f64], m: &[f64], _c: StageContext, du: &mut [f64], dv: &mut [f64]) {
            du[0] = v[0];
            dv[0] = -self.lambda * _u[0] - m[0];
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let k = make_exponential_kernel(1.0).unwrap();
        let ops = OneMode { lambda: 1.0 };
        for fw in [Framework::History, Framework::State] {
            let z0 = ExtendedVector { u: vec![0.0], v: vec![0.0], memory: zero_memory(&k, 0.05, 1, fw) };
            let tr = simulate(&ops, &k, &z0, 0.05, 2.0, fw).unwrap();
            assert_eq!(tr.len(), 41);
            assert!(tr.u.iter().chain(&tr.v).all(|x| *x == 0.0));
        }
    }

    #[test]
    fn cached_sums_match_direct() {
        let k = make_exponential_kernel(1.0).unwrap();
        let ops = OneMode { lambda: 1.0 };
        for fw in [Framework::History, Framework::State] {
            let z0 = ExtendedVector { u: vec![1.0], v: vec![0.3], memory: zero_memory(&k, 0.1, 1, fw) };
            let mut it = Integrator::new(&ops, &k, &z0, 0.1, fw).unwrap();
            for _ in 0..300 {
                it.step().unwrap();
                let n = it.traj.last();
                let (cn, cached) = it.cache.clone().unwrap();
                assert_eq!(cn + 1, n);
                let direct = it.sums(cn, Frac::One);
                assert!((cached.vector[0] - direct.vector[0]).abs() < 1e-13);
                let next = it.sums(n, Frac::Zero);
                let mut patched = cached.clone();
                let half = 0.05;
                match fw {
                    Framework::History => {
                        patched.scalar += half * it.tables.mu_grid[0];
                        patched.vector[0] += half * it.tables.mu_grid[0] * it.traj.primitive(n)[0];
                    }
                    Framework::State => patched.vector[0] += half * it.tables.k_grid[0] * it.traj.source(n)[0],
                }
                assert!((patched.vector[0] - next.vector[0]).abs() < 1e-12 * (1.0 + next.vector[0].abs()));
                assert!((patched.scalar - next.scalar).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruct_at_zero_is_initial() {
        let k = make_exponential_kernel(1.0).unwrap();
        let ops = OneMode { lambda: 1.0 };
        let m = MemoryMeasure::history(&k, 0.1, history_len(&k, 0.1), QuadratureRule::Trapezoid);
        let eta0 = HistoryField::from_fn(m, 1, |s, out| out[0] = 1.0 - (-s).exp());
        let z0 = ExtendedVector { u: vec![0.5], v: vec![0.0], memory: Memory::History(eta0.clone()) };
        let tr = simulate(&ops, &k, &z0, 0.1, 1.0, Framework::History).unwrap();
        let e = reconstruct_eta(&tr, 0.0, &k).unwrap();
        assert_eq!(e.values(), eta0.values());
        assert!(reconstruct_eta(&tr, 0.05, &k).is_err());
    }
}

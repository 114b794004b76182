//! Spectral Galerkin discretization of the damped wave equation with memory
//!
//! `u_tt + A u + int mu(s) eta(s) ds + f(u) = g`, `eta_t = -eta_s + A u_t`,
//!
//! with Dirichlet eigenpairs of `A`, plus the energy functionals used to
//! analyse it and the linear/smoothing decomposition of trajectory differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{
    memory_norm_sq, reconstruct_eta, simulate, summed_past_history, Framework, Integrator, ModelOperators,
    StageContext, Trajectory,
};
use crate::fit::{log_linear_fit, LinearFit};
use crate::initial::{random_ensemble, BallSpace};
use crate::kernels::{flatness_rate, positive_tail_mass, truncated_kernel, MemoryKernel};
use crate::memory_spaces::{ExtendedVector, HistoryField, Memory};
use crate::modal::{phase_norm_sq, SineCollocation, Spectrum};

/// Nonlinear term `f` with `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Zero,
    /// `u^3`
    Cubic,
    /// `u^3 - beta u`, `beta < lambda_1`
    CubicMinusLinear { beta: f64 },
}

impl Nonlinearity {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => u * u * u,
            Nonlinearity::CubicMinusLinear { beta } => u * u * u - beta * u,
        }
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            _ => 6.0 * u,
        }
    }

    /// `c` in `|f''(u)| <= c (1 + |u|)`.
    pub fn growth_constant(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            _ => 6.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }
}

/// Modal model: eigenvalues, nonlinearity, and a time-independent force.
#[derive(Debug, Clone)]
pub struct GalerkinModel {
    spectrum: Spectrum,
    collocation: Option<SineCollocation>,
    nonlinearity: Nonlinearity,
    forcing: Vec<f64>,
}

impl GalerkinModel {
    /// General eigenvalue list. A nonzero nonlinearity needs the sine
    /// collocation of the interval, so it is only accepted together with it.
    pub fn new(
        spectrum: Spectrum,
        nonlinearity: Nonlinearity,
        forcing: Vec<f64>,
        collocation: Option<SineCollocation>,
    ) -> Result<Self> {
        spectrum.check(&forcing)?;
        if let Nonlinearity::CubicMinusLinear { beta } = nonlinearity {
            if !(beta < spectrum.lambda1()) {
                return Err(Error::InvalidModel(format!(
                    "beta = {beta} must be below the first eigenvalue {}",
                    spectrum.lambda1()
                )));
            }
        }
        if !nonlinearity.is_zero() && collocation.is_none() {
            return Err(Error::InvalidModel("a nonlinear term needs the interval collocation grid".into()));
        }
        if let Some(c) = &collocation {
            if c.modes() != spectrum.len() {
                return Err(Error::DimensionMismatch { expected: spectrum.len(), found: c.modes() });
            }
        }
        Ok(Self { spectrum, collocation, nonlinearity, forcing })
    }

    /// `lambda_j = j^2` on `(0, pi)`.
    pub fn interval_pi(modes: usize, nonlinearity: Nonlinearity, forcing: Option<Vec<f64>>) -> Result<Self> {
        let spectrum = Spectrum::interval_pi(modes)?;
        let forcing = forcing.unwrap_or_else(|| vec![0.0; modes]);
        Self::new(spectrum, nonlinearity, forcing, Some(SineCollocation::new(modes)))
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn modes(&self) -> usize {
        self.spectrum.len()
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    /// Same eigenpairs with `f = 0` and `g = 0`.
    pub fn linear_part(&self) -> GalerkinModel {
        GalerkinModel {
            spectrum: self.spectrum.clone(),
            collocation: self.collocation.clone(),
            nonlinearity: Nonlinearity::Zero,
            forcing: vec![0.0; self.modes()],
        }
    }

    /// Modal projection of `f(u)`.
    pub fn nonlinear_term(&self, u: &[f64], out: &mut [f64]) {
        match (&self.collocation, self.nonlinearity) {
            (_, Nonlinearity::Zero) | (None, _) => out.iter_mut().for_each(|o| *o = 0.0),
            (Some(c), nl) => {
                let mut phys = vec![0.0; c.points()];
                c.to_physical(u, &mut phys);
                phys.iter_mut().for_each(|x| *x = nl.eval(*x));
                c.to_modal(&phys, out);
            }
        }
    }

    /// `<f(u) - g, A^sigma u>`.
    pub fn pairing(&self, u: &[f64], sigma: f64) -> f64 {
        let mut f = vec![0.0; u.len()];
        self.nonlinear_term(u, &mut f);
        for (x, g) in f.iter_mut().zip(&self.forcing) {
            *x -= g;
        }
        self.spectrum.inner(&f, u, sigma)
    }

    /// Equilibrium `A^{-1} g` of the model without nonlinearity.
    pub fn linear_equilibrium(&self) -> Vec<f64> {
        self.forcing.iter().zip(self.spectrum.lambdas()).map(|(g, l)| g / l).collect()
    }
}

/// Which forcing enters the velocity equation.
#[derive(Debug, Clone, Copy)]
pub enum Forcing<'a> {
    /// `g - f(u)`.
    Model,
    /// None: the linear memory system.
    Linear,
    /// `-(f(u_a) - f(u_b))` at the matching RK stages of two recorded runs.
    Difference { a: &'a Trajectory, b: &'a Trajectory },
}

/// [`ModelOperators`] for the Galerkin model: memory source `A u_t`.
#[derive(Debug, Clone, Copy)]
pub struct ViscoelasticOps<'a> {
    model: &'a GalerkinModel,
    forcing: Forcing<'a>,
}

impl<'a> ViscoelasticOps<'a> {
    pub fn model(&self) -> &GalerkinModel {
        self.model
    }

    pub fn with_forcing(model: &'a GalerkinModel, forcing: Forcing<'a>) -> Self {
        Self { model, forcing }
    }
}

impl ModelOperators for ViscoelasticOps<'_> {
    fn dim(&self) -> usize {
        self.model.modes()
    }

    fn memory_source(&self, _u: &[f64], v: &[f64], out: &mut [f64]) {
        for ((o, l), x) in out.iter_mut().zip(self.model.spectrum.lambdas()).zip(v) {
            *o = l * x;
        }
    }

    fn memory_primitive(&self, u: &[f64], u0: &[f64], out: &mut [f64]) -> bool {
        for (((o, l), x), x0) in out.iter_mut().zip(self.model.spectrum.lambdas()).zip(u).zip(u0) {
            *o = l * (x - x0);
        }
        true
    }

    fn rhs(&self, u: &[f64], v: &[f64], m: &[f64], ctx: StageContext, du: &mut [f64], dv: &mut [f64]) {
        du.copy_from_slice(v);
        let lambdas = self.model.spectrum.lambdas();
        for i in 0..dv.len() {
            dv[i] = -lambdas[i] * u[i] - m[i];
        }
        match self.forcing {
            Forcing::Linear => {}
            Forcing::Model => {
                let mut f = vec![0.0; u.len()];
                self.model.nonlinear_term(u, &mut f);
                for ((d, f), g) in dv.iter_mut().zip(&f).zip(&self.model.forcing) {
                    *d += g - f;
                }
            }
            Forcing::Difference { a, b } => {
                let (ua, ub) = match (a.stage_u(ctx.step, ctx.stage), b.stage_u(ctx.step, ctx.stage)) {
                    (Some(x), Some(y)) => (x, y),
                    _ => panic!("base trajectories must record every RK stage up to step {}", ctx.step),
                };
                let mut fa = vec![0.0; u.len()];
                let mut fb = vec![0.0; u.len()];
                self.model.nonlinear_term(ua, &mut fa);
                self.model.nonlinear_term(ub, &mut fb);
                for ((d, x), y) in dv.iter_mut().zip(&fa).zip(&fb) {
                    *d -= x - y;
                }
            }
        }
    }
}

/// Operators of the model. Kernels with jumps or flat zones are rejected:
/// the model assumes a jump-free kernel with `mu' < 0` almost everywhere.
pub fn assemble<'a>(model: &'a GalerkinModel, kernel: &MemoryKernel) -> Result<ViscoelasticOps<'a>> {
    if !kernel.jumps().is_empty() {
        return Err(Error::InvalidModel(format!(
            "kernel '{}' has jumps; the viscoelastic model requires a jump-free kernel",
            kernel.id()
        )));
    }
    let flat = flatness_rate(kernel);
    if flat > 0.0 {
        return Err(Error::InvalidModel(format!(
            "kernel '{}' has flatness rate {flat:.6}; the viscoelastic model requires mu' < 0 almost everywhere",
            kernel.id()
        )));
    }
    if (kernel.mass() - 1.0).abs() > 1e-6 {
        log::warn!("kernel '{}' has k(0) = {}; energy diagnostics assume k(0) = 1", kernel.id(), kernel.mass());
    }
    Ok(ViscoelasticOps { model, forcing: Forcing::Model })
}

/// History-framework initial datum with zero past.
pub fn at_rest_history(kernel: &MemoryKernel, model: &GalerkinModel, u: Vec<f64>, v: Vec<f64>, dt: f64) -> ExtendedVector {
    ExtendedVector { u, v, memory: crate::evolution::zero_memory(kernel, dt, model.modes(), Framework::History) }
}

/// Parameters of the functionals `Phi` and `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalParams {
    pub sigma: f64,
    pub eps: f64,
    pub nu_small: f64,
    /// Defaults to half the kernel decay rate.
    pub delta_split: Option<f64>,
}

impl Default for FunctionalParams {
    fn default() -> Self {
        Self { sigma: 0.0, eps: 0.05, nu_small: 0.1, delta_split: None }
    }
}

/// The three contributions to `Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhiTerms {
    /// `-int mu_nu <u_t, eta>_{sigma-1}`.
    pub coupling: f64,
    /// `(1 - 2 nu) <u_t, u>_sigma`.
    pub velocity: f64,
    /// `int (int_s^inf mu chi_P) ||eta - A u||_{sigma-1}^2`.
    pub positive_part: f64,
}

impl PhiTerms {
    pub fn total(&self) -> f64 {
        self.coupling + self.velocity + self.positive_part
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub time: f64,
    pub energy: f64,
    pub phi: PhiTerms,
    pub gamma: f64,
    /// `int mu' ||eta||_{sigma-1}^2`.
    pub dissipation: f64,
    /// `||z||_{H^sigma}^2`.
    pub norm_sq: f64,
}

/// Kernel tables for evaluating the functionals on one history grid.
pub struct FunctionalEvaluator<'a> {
    model: &'a GalerkinModel,
    params: FunctionalParams,
    mu_nu: Vec<f64>,
    mu_prime: Vec<f64>,
    p_tail: Vec<f64>,
}

impl<'a> FunctionalEvaluator<'a> {
    /// Tables on the nodes of `grid_like`.
    pub fn new(model: &'a GalerkinModel, kernel: &MemoryKernel, grid_like: &HistoryField, params: FunctionalParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&params.sigma) {
            return Err(Error::InvalidArgument(format!("sigma must lie in [0, 1], got {}", params.sigma)));
        }
        let grid: Vec<f64> = (0..grid_like.len()).map(|i| grid_like.node(i)).collect();
        let trunc = truncated_kernel(kernel, params.nu_small, &grid)?;
        let finite = |x: f64| if x.is_finite() { x } else { 0.0 };
        let mu_nu = grid.iter().map(|&s| finite(trunc.eval(s))).collect();
        let mu_prime = grid.iter().map(|&s| finite(kernel.mu_prime_cut(s))).collect();
        let delta_split = params.delta_split.unwrap_or(0.5 * kernel.delta_decay());
        let p_tail = positive_tail_mass(kernel, delta_split, &grid);
        Ok(Self { model, params, mu_nu, mu_prime, p_tail })
    }

    pub fn energy(&self, u: &[f64], v: &[f64], eta: &HistoryField) -> f64 {
        energy_sigma(self.model, u, v, eta, self.params.sigma)
    }

    pub fn phi(&self, u: &[f64], v: &[f64], eta: &HistoryField) -> PhiTerms {
        let sp = &self.model.spectrum;
        let sigma = self.params.sigma;
        let lw = sp.weights(sigma - 1.0);
        let au: Vec<f64> = sp.apply_power(u, 1.0);
        let w = eta.measure().rule_weights();
        let mut coupling = 0.0;
        let mut positive_part = 0.0;
        for i in 0..eta.len() {
            let e = eta.value(i);
            if self.mu_nu[i] != 0.0 {
                let inner: f64 = lw.iter().zip(v).zip(e).map(|((l, a), b)| l * a * b).sum();
                coupling -= w[i] * self.mu_nu[i] * inner;
            }
            if self.p_tail[i] != 0.0 {
                let d: f64 = lw.iter().zip(e).zip(&au).map(|((l, a), b)| l * (a - b) * (a - b)).sum();
                positive_part += w[i] * self.p_tail[i] * d;
            }
        }
        let velocity = (1.0 - 2.0 * self.params.nu_small) * sp.inner(v, u, sigma);
        PhiTerms { coupling, velocity, positive_part }
    }

    /// `int mu' ||eta||_{sigma-1}^2`.
    pub fn dissipation(&self, eta: &HistoryField) -> f64 {
        let lw = self.model.spectrum.weights(self.params.sigma - 1.0);
        let w = eta.measure().rule_weights();
        (0..eta.len())
            .map(|i| w[i] * self.mu_prime[i] * eta.value(i).iter().zip(&lw).map(|(x, l)| l * x * x).sum::<f64>())
            .sum()
    }

    pub fn sample(&self, time: f64, u: &[f64], v: &[f64], eta: &HistoryField) -> EnergySample {
        let energy = self.energy(u, v, eta);
        let phi = self.phi(u, v, eta);
        let sp = &self.model.spectrum;
        let norm_sq = phase_norm_sq(sp, u, v, self.params.sigma) + eta.norm_sq(sp, self.params.sigma);
        EnergySample {
            time,
            energy,
            phi,
            gamma: gamma_functional(energy, phi.total(), self.params.eps),
            dissipation: self.dissipation(eta),
            norm_sq,
        }
    }
}

/// `||u||_{sigma+1}^2 + ||u_t||_sigma^2 + ||eta||_{M^sigma}^2 + 2 <f(u) - g, A^sigma u>`.
pub fn energy_sigma(model: &GalerkinModel, u: &[f64], v: &[f64], eta: &HistoryField, sigma: f64) -> f64 {
    let sp = &model.spectrum;
    phase_norm_sq(sp, u, v, sigma) + eta.norm_sq(sp, sigma) + 2.0 * model.pairing(u, sigma)
}

/// `Phi` for one state.
pub fn phi_functional(
    model: &GalerkinModel,
    kernel: &MemoryKernel,
    u: &[f64],
    v: &[f64],
    eta: &HistoryField,
    params: FunctionalParams,
) -> Result<PhiTerms> {
    Ok(FunctionalEvaluator::new(model, kernel, eta, params)?.phi(u, v, eta))
}

/// `Gamma = E_sigma + eps Phi`.
pub fn gamma_functional(energy: f64, phi: f64, eps: f64) -> f64 {
    energy + eps * phi
}

/// History at snapshot `n`: reconstructed for history runs, the summed past
/// history for state runs started from a zero state.
fn history_of(traj: &Trajectory, n: usize, kernel: &MemoryKernel) -> Result<HistoryField> {
    match traj.framework() {
        Framework::History => reconstruct_eta(traj, traj.time(n), kernel),
        Framework::State => {
            let zero = match traj.initial_memory() {
                Memory::State(x) => x.values().iter().all(|v| *v == 0.0),
                Memory::History(_) => false,
            };
            if !zero {
                return Err(Error::InvalidArgument("energy of a state run needs a zero initial state".into()));
            }
            Ok(summed_past_history(traj, n, kernel))
        }
    }
}

/// Energy functionals every `stride` snapshots.
pub fn energy_report(
    traj: &Trajectory,
    model: &GalerkinModel,
    kernel: &MemoryKernel,
    params: FunctionalParams,
    stride: usize,
) -> Result<Vec<EnergySample>> {
    let first = history_of(traj, 0, kernel)?;
    let ev = FunctionalEvaluator::new(model, kernel, &first, params)?;
    let idx: Vec<usize> = (0..traj.len()).step_by(stride.max(1)).collect();
    idx.par_iter()
        .map(|&n| {
            let eta = history_of(traj, n, kernel)?;
            Ok(ev.sample(traj.time(n), traj.u(n), traj.v(n), &eta))
        })
        .collect()
}

/// `sup_{tau < t} (int_tau^t ||u_t|| - eps (t - tau))`, computed from the
/// running minimum of `G(t) = int_0^t ||u_t|| - eps t`.
pub fn dissipation_integral_probe(traj: &Trajectory, eps: f64) -> f64 {
    let dt = traj.dt();
    let mut g = 0.0;
    let mut running_min: f64 = 0.0;
    let mut best: f64 = 0.0;
    let speed = |n: usize| traj.v(n).iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut prev = speed(0);
    for n in 1..traj.len() {
        let cur = speed(n);
        g += 0.5 * dt * (prev + cur) - eps * dt;
        prev = cur;
        best = best.max(g - running_min);
        running_min = running_min.min(g);
    }
    best
}

/// Result of splitting the difference of two solutions into a linear part
/// with the difference of the data and a part forced by `f(u_1) - f(u_2)`.
#[derive(Debug, Clone)]
pub struct LkReport {
    pub times: Vec<f64>,
    /// `||L(t)||_{H^0}`.
    pub l_norm: Vec<f64>,
    /// `||K(t)||_{H^1}`.
    pub k_norm_h1: Vec<f64>,
    /// `||(L + K) - (S z_1 - S z_2)||` over `max(||S z_1||, ||S z_2||)`, per step.
    pub residual_rel: Vec<f64>,
    /// Same residual over `||S z_1 - S z_2||`.
    pub residual_rel_difference: Vec<f64>,
    pub data_distance: f64,
    pub l_fit: Option<LinearFit>,
    /// `sup_t ||K(t)||_{H^1} / ||z_1 - z_2||_{H^0}`.
    pub k_ratio_sup: f64,
    pub degenerate: bool,
    pub l: Trajectory,
    pub k: Trajectory,
}

impl LkReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_rel.iter().cloned().fold(0.0, f64::max)
    }
}

/// Settings of [`lk_split`].
#[derive(Debug, Clone, Copy)]
pub struct LkSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Norms are sampled every `stride` steps.
    pub stride: usize,
    pub fit_window: (f64, f64),
}

fn difference_vector(z1: &ExtendedVector, z2: &ExtendedVector) -> Result<ExtendedVector> {
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let memory = match (&z1.memory, &z2.memory) {
        (Memory::History(a), Memory::History(b)) => {
            let mut d = a.clone();
            d.axpy(-1.0, b)?;
            Memory::History(d)
        }
        _ => return Err(Error::InvalidArgument("the split works on history-framework data".into())),
    };
    Ok(ExtendedVector { u: sub(&z1.u, &z2.u), v: sub(&z1.v, &z2.v), memory })
}

/// Run both solutions, then the linear part `L` and the forced part `K`.
pub fn lk_split(
    model: &GalerkinModel,
    kernel: &MemoryKernel,
    z1: &ExtendedVector,
    z2: &ExtendedVector,
    settings: LkSettings,
) -> Result<LkReport> {
    let ops = assemble(model, kernel)?;
    let (dt, t_end) = (settings.dt, settings.t_end);
    let run = |z: &ExtendedVector| -> Result<Trajectory> {
        let mut it = Integrator::with_options(&ops, kernel, z, dt, Framework::History, true)?;
        it.run_until(t_end)?;
        Ok(it.into_trajectory())
    };
    let (b1, b2) = rayon::join(|| run(z1), || run(z2));
    let (b1, b2) = (b1?, b2?);
    let dz = difference_vector(z1, z2)?;
    let sp = model.spectrum();
    let data_distance = crate::memory_spaces::norm_h(&dz, sp, 0.0)?;
    let degenerate = data_distance == 0.0;

    let linear = model.linear_part();
    let l_ops = ViscoelasticOps::with_forcing(&linear, Forcing::Linear);
    let k_ops = ViscoelasticOps::with_forcing(model, Forcing::Difference { a: &b1, b: &b2 });
    let zero = at_rest_history(kernel, model, vec![0.0; model.modes()], vec![0.0; model.modes()], dt);
    let (l, k) = rayon::join(
        || simulate(&l_ops, kernel, &dz, dt, t_end, Framework::History),
        || simulate(&k_ops, kernel, &zero, dt, t_end, Framework::History),
    );
    let (l, k) = (l?, k?);

    let mut residual_rel = Vec::with_capacity(l.len());
    let mut residual_rel_difference = Vec::with_capacity(l.len());
    for n in 0..l.len() {
        let mut res = 0.0;
        let mut scale1 = 0.0;
        let mut scale2 = 0.0;
        let mut diff = 0.0;
        let fields: [(&dyn Fn(&Trajectory, usize) -> &[f64], f64); 3] = [
            (&|t: &Trajectory, n| t.u(n), 1.0),
            (&|t: &Trajectory, n| t.v(n), 0.0),
            (&|t: &Trajectory, n| t.primitive(n), -1.0),
        ];
        for (get, sigma) in fields {
            let (a, b, x, y) = (get(&b1, n), get(&b2, n), get(&l, n), get(&k, n));
            let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
            let r: Vec<f64> = x.iter().zip(y).zip(&d).map(|((p, q), e)| p + q - e).collect();
            res += sp.norm_sq(&r, sigma);
            diff += sp.norm_sq(&d, sigma);
            scale1 += sp.norm_sq(a, sigma);
            scale2 += sp.norm_sq(b, sigma);
        }
        let scale = scale1.max(scale2).sqrt();
        residual_rel.push(if scale > 0.0 { res.sqrt() / scale } else { res.sqrt() });
        residual_rel_difference.push(if diff > 0.0 { (res / diff).sqrt() } else { res.sqrt() });
    }

    let idx: Vec<usize> = (0..l.len()).step_by(settings.stride.max(1)).collect();
    let norms: Vec<(f64, f64)> = idx
        .par_iter()
        .map(|&n| -> Result<(f64, f64)> {
            let ln = phase_norm_sq(sp, l.u(n), l.v(n), 0.0) + memory_norm_sq(&l, n, kernel, sp, 0.0, 1)?;
            let kn = phase_norm_sq(sp, k.u(n), k.v(n), 1.0) + memory_norm_sq(&k, n, kernel, sp, 1.0, 1)?;
            Ok((ln.sqrt(), kn.sqrt()))
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = idx.iter().map(|&n| l.time(n)).collect();
    let l_norm: Vec<f64> = norms.iter().map(|p| p.0).collect();
    let k_norm_h1: Vec<f64> = norms.iter().map(|p| p.1).collect();
    let (lo, hi) = settings.fit_window;
    let l_fit = if degenerate { None } else { log_linear_fit(&times, &l_norm, lo, hi, 1e-300).ok() };
    let k_ratio_sup = if degenerate { 0.0 } else { k_norm_h1.iter().cloned().fold(0.0, f64::max) / data_distance };
    Ok(LkReport {
        times,
        l_norm,
        k_norm_h1,
        residual_rel,
        residual_rel_difference,
        data_distance,
        l_fit,
        k_ratio_sup,
        degenerate,
        l,
        k,
    })
}

#[derive(Debug, Clone)]
pub struct AssoReport {
    pub times: Vec<f64>,
    /// `||(u, u_t, psi^t)||_{H^0}` with `psi^t(s) = A u(t) - A u((t - s)_+)`.
    pub norms: Vec<f64>,
    pub sup: f64,
    pub argmax_time: f64,
}

/// Norm of the summed past history paired with the phase variables, for any
/// trajectory (usually a state-framework run).
pub fn condition_asso_probe(traj: &Trajectory, kernel: &MemoryKernel, spectrum: &Spectrum, stride: usize) -> AssoReport {
    let idx: Vec<usize> = (0..traj.len()).step_by(stride.max(1)).collect();
    let norms: Vec<f64> = idx
        .par_iter()
        .map(|&n| {
            let psi = summed_past_history(traj, n, kernel);
            (phase_norm_sq(spectrum, traj.u(n), traj.v(n), 0.0) + psi.norm_sq(spectrum, 0.0)).sqrt()
        })
        .collect();
    let times: Vec<f64> = idx.iter().map(|&n| traj.time(n)).collect();
    let (mut sup, mut argmax_time) = (0.0, 0.0);
    for (t, x) in times.iter().zip(&norms) {
        if *x > sup {
            sup = *x;
            argmax_time = *t;
        }
    }
    AssoReport { times, norms, sup, argmax_time }
}

/// Per-radius summary of the hypothesis probes.
#[derive(Debug, Clone)]
pub struct RadiusProbe {
    pub radius: f64,
    /// Mean over members of the mean `H^1` norm on the last 20% of samples.
    pub plateau: f64,
    pub sup_h1: f64,
    /// `sup_t ||u_tt||` over members.
    pub sup_acceleration: f64,
    /// `max |(||A v||_{-1} - ||v||_1)|` over samples.
    pub source_identity_error: f64,
    /// `(sigma, sup_t ||z||_{H^sigma})`.
    pub sigma_sups: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub radii: Vec<RadiusProbe>,
    /// `(max - min) / max` of the plateaus over radii.
    pub plateau_spread: f64,
    pub acceleration_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct HypothesisSettings {
    pub radii: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub sigmas: Vec<f64>,
}

/// Ensembles of `H^1` data for each radius: boundedness plateau, the
/// source identity, and the acceleration bound read from the equation.
pub fn hypothesis_probe_suite(model: &GalerkinModel, kernel: &MemoryKernel, settings: &HypothesisSettings) -> Result<HypothesisReport> {
    let ops = assemble(model, kernel)?;
    let sp = model.spectrum();
    let mut radii = Vec::new();
    for &r in &settings.radii {
        let data = random_ensemble(sp, r, BallSpace::H1, settings.seed, settings.ensemble);
        let inits: Vec<ExtendedVector> =
            data.into_iter().map(|(u, v)| at_rest_history(kernel, model, u, v, settings.dt)).collect();
        let trajs: Vec<Trajectory> = inits
            .par_iter()
            .map(|z| simulate(&ops, kernel, z, settings.dt, settings.t_end, Framework::History))
            .collect::<Result<_>>()?;
        let mut plateau = 0.0;
        let mut sup_h1: f64 = 0.0;
        let mut sup_acc: f64 = 0.0;
        let mut id_err: f64 = 0.0;
        let mut sigma_sups: Vec<(f64, f64)> = settings.sigmas.iter().map(|s| (*s, 0.0)).collect();
        for tr in &trajs {
            let idx: Vec<usize> = (0..tr.len()).step_by(settings.stride.max(1)).collect();
            let rows: Vec<(f64, f64, f64, Vec<f64>)> = idx
                .par_iter()
                .map(|&n| -> Result<_> {
                    let eta = reconstruct_eta(tr, tr.time(n), kernel)?;
                    let (u, v) = (tr.u(n), tr.v(n));
                    let h1 = (phase_norm_sq(sp, u, v, 1.0) + eta.norm_sq(sp, 1.0)).sqrt();
                    let av = sp.apply_power(v, 1.0);
                    let id = (sp.norm(&av, -1.0) - sp.norm(v, 1.0)).abs();
                    let acc = acceleration(model, kernel, u, &eta);
                    let sig: Vec<f64> = settings
                        .sigmas
                        .iter()
                        .map(|&s| (phase_norm_sq(sp, u, v, s) + eta.norm_sq(sp, s)).sqrt())
                        .collect();
                    Ok((h1, id, acc, sig))
                })
                .collect::<Result<_>>()?;
            let tail_start = (rows.len() as f64 * 0.8).floor() as usize;
            let tail = &rows[tail_start.min(rows.len() - 1)..];
            plateau += tail.iter().map(|r| r.0).sum::<f64>() / tail.len() as f64;
            for (h1, id, acc, sig) in &rows {
                sup_h1 = sup_h1.max(*h1);
                id_err = id_err.max(*id);
                sup_acc = sup_acc.max(*acc);
                for (slot, x) in sigma_sups.iter_mut().zip(sig) {
                    slot.1 = slot.1.max(*x);
                }
            }
        }
        radii.push(RadiusProbe {
            radius: r,
            plateau: plateau / trajs.len().max(1) as f64,
            sup_h1,
            sup_acceleration: sup_acc,
            source_identity_error: id_err,
            sigma_sups,
        });
    }
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.plateau), hi.max(p.plateau)));
    let plateau_spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let mut sorted: Vec<&RadiusProbe> = radii.iter().collect();
    sorted.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    let acceleration_monotone = sorted.windows(2).all(|w| w[1].sup_acceleration >= w[0].sup_acceleration);
    Ok(HypothesisReport { radii, plateau_spread, acceleration_monotone })
}

/// `||u_tt||` from the equation: `-A u - int mu eta - f(u) + g`.
pub fn acceleration(model: &GalerkinModel, kernel: &MemoryKernel, u: &[f64], eta: &HistoryField) -> f64 {
    let j = u.len();
    let mut m = vec![0.0; j];
    let w = eta.measure().rule_weights();
    for i in 0..eta.len() {
        let mu = kernel.mu_cut(eta.node(i));
        if mu == 0.0 || !mu.is_finite() {
            continue;
        }
        for (acc, x) in m.iter_mut().zip(eta.value(i)) {
            *acc += w[i] * mu * x;
        }
    }
    let mut f = vec![0.0; j];
    model.nonlinear_term(u, &mut f);
    let lambdas = model.spectrum.lambdas();
    (0..j)
        .map(|i| {
            let a = -lambdas[i] * u[i] - m[i] - f[i] + model.forcing[i];
            a * a
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_exponential_kernel, make_flatzone_kernel};

    #[test]
    fn cubic_projection_of_first_mode() {
        let m = GalerkinModel::interval_pi(5, Nonlinearity::Cubic, None).unwrap();
        let mut f = [0.0; 5];
        m.nonlinear_term(&[1.0, 0.0, 0.0, 0.0, 0.0], &mut f);
        assert!(f[1].abs() < 1e-14 && f[3].abs() < 1e-14 && f[4].abs() < 1e-14);
        assert!((f[2] / f[0] + 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_flat_kernels_and_large_beta() {
        let m = GalerkinModel::interval_pi(2, Nonlinearity::Zero, None).unwrap();
        assert!(assemble(&m, &make_flatzone_kernel()).is_err());
        assert!(assemble(&m, &make_exponential_kernel(1.0).unwrap()).is_ok());
        assert!(GalerkinModel::interval_pi(2, Nonlinearity::CubicMinusLinear { beta: 1.0 }, None).is_err());
        assert!(GalerkinModel::interval_pi(2, Nonlinearity::CubicMinusLinear { beta: 0.5 }, None).is_ok());
    }

    #[test]
    fn growth_constants() {
        for nl in [Nonlinearity::Cubic, Nonlinearity::CubicMinusLinear { beta: 0.3 }] {
            assert_eq!(nl.eval(0.0), 0.0);
            for u in [-3.0, -0.5, 0.0, 0.7, 10.0] {
                assert!(nl.second_derivative(u).abs() <= nl.growth_constant() * (1.0 + f64::abs(u)));
            }
        }
    }

    #[test]
    fn dissipation_probe_of_rest_is_zero() {
        let k = make_exponential_kernel(1.0).unwrap();
        let m = GalerkinModel::interval_pi(2, Nonlinearity::Zero, Some(vec![1.0, 0.5])).unwrap();
        let ops = assemble(&m, &k).unwrap();
        let z = at_rest_history(&k, &m, m.linear_equilibrium(), vec![0.0; 2], 0.05);
        let tr = simulate(&ops, &k, &z, 0.05, 5.0, Framework::History).unwrap();
        assert_eq!(dissipation_integral_probe(&tr, 0.1), 0.0);
        assert!(tr.u(tr.last()).iter().zip(&m.linear_equilibrium()).all(|(a, b)| a == b));
    }
}

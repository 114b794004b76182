//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attractor::{attraction_rate, embed, hausdorff_semidist, PointCloud};
use crate::config::{load_experiment, load_kernel, Experiment, InitialRecipe};
use crate::error::{Error, Result};
use crate::evolution::{simulate, state_at, zero_memory, Framework, Trajectory};
use crate::fit::log_linear_fit;
use crate::initial::{random_ensemble, BallSpace};
use crate::io::{self, CsvTable, Summary};
use crate::kernels::{check_dafermos, check_nec, flatness_rate};
use crate::memory_spaces::{lambda_map, ExtendedVector, Memory};
use crate::viscoelastic::{
    assemble, dissipation_integral_probe, energy_report, hypothesis_probe_suite, lk_split, HypothesisSettings, LkSettings,
};

#[derive(Debug, Parser)]
#[command(name = "memoryflow", version, about = "Evolution equations with memory: history and minimal-state simulations")]
pub struct Cli {
    /// Worker threads for ensembles and diagnostics.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Tolerance override for checks that compare against one.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed override for random initial data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel utilities.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Integrate an experiment and write trajectories.
    Simulate(SimulateArgs),
    /// Run both frameworks and report their discrepancy.
    Compare(ConfigArgs),
    /// Energy functionals along the trajectories.
    EnergyReport(ConfigArgs),
    /// Split a difference of solutions into decaying and forced parts.
    LkSplit(ConfigArgs),
    /// Boundedness, source-identity and acceleration probes over radii.
    Hypotheses(ConfigArgs),
    /// Distance of a bundle of clouds to a surrogate attractor.
    Attract(AttractArgs),
}

#[derive(Debug, Subcommand)]
pub enum KernelAction {
    /// Admissibility report; exits nonzero when a check fails.
    Check {
        file: PathBuf,
        #[arg(long, num_args = 2, value_names = ["THETA", "DELTA"])]
        nec: Option<Vec<f64>>,
        #[arg(long, value_name = "DELTA")]
        dafermos: Option<f64>,
        #[arg(long)]
        flatness: bool,
        /// Grid spacing of the scan.
        #[arg(long, default_value_t = 1e-3)]
        spacing: f64,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub framework: Option<Framework>,
    /// Also write embedded states every N steps as point clouds.
    #[arg(long)]
    pub cloud_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttractArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub surrogate: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Surrogate points earlier than this are discarded.
    #[arg(long, default_value_t = 50.0)]
    pub t_burn: f64,
}

/// Parse arguments and run. `Ok(false)` means a check failed.
pub fn run_from<I, T>(args: I) -> Result<bool>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match &cli.command {
        Command::Kernel { action: KernelAction::Check { file, nec, dafermos, flatness, spacing } } => {
            kernel_check(file, nec.as_deref(), *dafermos, *flatness, *spacing)
        }
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
        Command::EnergyReport(a) => cmd_energy(cli, a),
        Command::LkSplit(a) => cmd_lk(cli, a),
        Command::Hypotheses(a) => cmd_hypotheses(cli, a),
        Command::Attract(a) => cmd_attract(a),
    }
}

fn kernel_check(file: &Path, nec: Option<&[f64]>, dafermos: Option<f64>, flatness: bool, spacing: f64) -> Result<bool> {
    let kernel = load_kernel(file)?;
    let grid = kernel.grid(spacing);
    let report = kernel.validate(&grid);
    let mut ok = report.admissible();
    let mut lines = vec![
        format!("{:<40}{}", "kernel", kernel.id()),
        format!("{:<40}{}", "family", kernel.family()),
        format!("{:<40}{}  {}", "first moment", io::fmt(report.first_moment), verdict(report.unit_moment)),
        format!("{:<40}{}", "monotone", verdict(report.monotone)),
        format!(
            "{:<40}{}  {}",
            format!("NEC (theta={}, delta={})", kernel.theta(), kernel.delta_decay()),
            io::fmt(report.nec.worst_ratio),
            verdict(report.nec.holds)
        ),
    ];
    if let Some(&[theta, delta]) = nec {
        let r = check_nec(&kernel, theta, delta, &grid);
        ok &= r.holds;
        lines.push(format!("{:<40}{}  {}", format!("NEC (theta={theta}, delta={delta})"), io::fmt(r.worst_ratio), verdict(r.holds)));
    }
    if let Some(delta) = dafermos {
        let r = check_dafermos(&kernel, delta, &grid);
        ok &= r.holds;
        lines.push(format!("{:<40}{}  {}", format!("Dafermos (delta={delta})"), io::fmt(r.worst), verdict(r.holds)));
    }
    if flatness {
        lines.push(format!("{:<40}{}", "flatness rate", io::fmt(flatness_rate(&kernel))));
    }
    lines.push(format!("{:<40}{}", "all checks", verdict(ok)));
    println!("{}", lines.join("\n"));
    Ok(ok)
}

fn verdict(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn load(cli: &Cli, a: &ConfigArgs) -> Result<(Experiment, u64)> {
    let mut exp = load_experiment(&a.config)?;
    if let Some(out) = &a.out {
        exp.file.output = out.clone();
    }
    let seed = cli.seed.unwrap_or(exp.file.ensemble.seed);
    Ok((exp, seed))
}

/// Initial data of every ensemble member in the requested framework.
pub fn initial_states(exp: &Experiment, framework: Framework, seed: u64) -> Result<Vec<ExtendedVector>> {
    let (kernel, model, dt) = (&exp.kernel, &exp.model, exp.file.dt);
    let j = model.modes();
    let blank = |u: Vec<f64>, v: Vec<f64>| ExtendedVector { u, v, memory: zero_memory(kernel, dt, j, framework) };
    Ok(match &exp.file.initial {
        InitialRecipe::Zero => (0..exp.file.ensemble.size).map(|_| blank(vec![0.0; j], vec![0.0; j])).collect(),
        InitialRecipe::RandomBall { radius, space } => random_ensemble(model.spectrum(), *radius, *space, seed, exp.file.ensemble.size)
            .into_iter()
            .map(|(u, v)| blank(u, v))
            .collect(),
        InitialRecipe::File { phase, history } => {
            let rows = io::read_rows(phase)?;
            if rows.len() != j || rows.iter().any(|r| r.len() < 3) {
                return Err(Error::Config { path: phase.clone(), message: format!("expected {j} rows of (mode, u, v)") });
            }
            let u = rows.iter().map(|r| r[1]).collect();
            let v = rows.iter().map(|r| r[2]).collect();
            let memory = match history {
                None => zero_memory(kernel, dt, j, framework),
                Some(p) => {
                    let eta = io::read_history_field(p, kernel)?;
                    match framework {
                        Framework::History => Memory::History(eta),
                        Framework::State => Memory::State(lambda_map(&eta, kernel)),
                    }
                }
            };
            vec![ExtendedVector { u, v, memory }]
        }
    })
}

fn run_members(exp: &Experiment, framework: Framework, seed: u64) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    let ops = assemble(&exp.model, &exp.kernel)?;
    let inits = initial_states(exp, framework, seed)?;
    inits
        .par_iter()
        .map(|z| simulate(&ops, &exp.kernel, z, exp.file.dt, exp.file.t_end, framework))
        .collect()
}

fn finish(summary: &Summary, dir: &Path) -> Result<()> {
    print!("{}", summary.render());
    summary.write(&dir.join("summary.txt"))
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<bool> {
    let (exp, seed) = load(cli, &a.common)?;
    let framework = a.framework.unwrap_or(exp.file.framework);
    let trajs = run_members(&exp, framework, seed)?;
    let out = exp.output_dir();
    let mut max_norm: f64 = 0.0;
    for (m, tr) in trajs.iter().enumerate() {
        io::write_trajectory(&out.join(format!("trajectory_{m:03}.csv")), tr, seed)?;
        for n in 0..tr.len() {
            let x: f64 = tr.u(n).iter().chain(tr.v(n)).map(|x| x * x).sum();
            max_norm = max_norm.max(x.sqrt());
        }
        if let Some(stride) = a.cloud_stride {
            let rows = (0..tr.len())
                .step_by(stride.max(1))
                .map(|n| Ok((tr.time(n), embed(&state_at(tr, n, &exp.kernel, 1)?, exp.model.spectrum())?)))
                .collect::<Result<Vec<_>>>()?;
            io::write_cloud(&out.join("clouds").join(format!("cloud_{m:03}.csv")), &rows)?;
        }
    }
    let mut s = Summary::new("simulate");
    s.text("kernel", exp.kernel.id())
        .text("framework", &framework.to_string())
        .int("seed", seed)
        .int("members", trajs.len() as u64)
        .int("steps", trajs[0].len() as u64 - 1)
        .num("dt", exp.file.dt)
        .num("t_end", trajs[0].time(trajs[0].last()))
        .num("max_coefficient_norm", max_norm);
    finish(&s, out)?;
    Ok(true)
}

fn cmd_compare(cli: &Cli, a: &ConfigArgs) -> Result<bool> {
    let (exp, seed) = load(cli, a)?;
    let tol = cli.tol.unwrap_or(exp.file.compare.tol);
    let hist = run_members(&exp, Framework::History, seed)?;
    let state = run_members(&exp, Framework::State, seed)?;
    let out = exp.output_dir();
    let mut worst: f64 = 0.0;
    for (m, (h, s)) in hist.iter().zip(&state).enumerate() {
        let mut t = CsvTable::create(&out.join(format!("compare_{m:03}.csv")), &["t".into(), "du_max".into(), "dv_max".into()])?;
        for n in 0..h.len().min(s.len()) {
            let du = h.u(n).iter().zip(s.u(n)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dv = h.v(n).iter().zip(s.v(n)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(du).max(dv);
            t.row(&[h.time(n), du, dv])?;
        }
        t.finish()?;
    }
    let ok = worst <= tol;
    let mut s = Summary::new("compare");
    s.text("kernel", exp.kernel.id()).int("seed", seed).num("max_discrepancy", worst).num("tol", tol).flag("pass", ok);
    finish(&s, out)?;
    Ok(ok)
}

fn cmd_energy(cli: &Cli, a: &ConfigArgs) -> Result<bool> {
    let (exp, seed) = load(cli, a)?;
    let cfg = &exp.file.energy;
    let trajs = run_members(&exp, exp.file.framework, seed)?;
    let out = exp.output_dir();
    let mut s = Summary::new("energy-report");
    s.text("kernel", exp.kernel.id()).int("seed", seed).num("sigma", cfg.sigma).num("eps", cfg.eps);
    let mut worst_increase: f64 = f64::NEG_INFINITY;
    let mut c_eps: f64 = 0.0;
    let mut gamma_rate = f64::INFINITY;
    for (m, tr) in trajs.iter().enumerate() {
        let rep = energy_report(tr, &exp.model, &exp.kernel, cfg.params(), cfg.stride)?;
        let header: Vec<String> =
            ["t", "energy", "phi_coupling", "phi_velocity", "phi_positive", "phi", "gamma", "dissipation", "norm_sq"]
                .iter()
                .map(|x| x.to_string())
                .collect();
        let mut t = CsvTable::create(&out.join(format!("energy_{m:03}.csv")), &header)?;
        for e in &rep {
            t.row(&[e.time, e.energy, e.phi.coupling, e.phi.velocity, e.phi.positive_part, e.phi.total(), e.gamma, e.dissipation, e.norm_sq])?;
        }
        t.finish()?;
        for w in rep.windows(2) {
            worst_increase = worst_increase.max(w[1].energy - w[0].energy);
        }
        c_eps = c_eps.max(dissipation_integral_probe(tr, cfg.dissipation_eps));
        let ts: Vec<f64> = rep.iter().map(|e| e.time).collect();
        let gs: Vec<f64> = rep.iter().map(|e| e.gamma).collect();
        let t_end = exp.file.t_end;
        if let Ok(f) = log_linear_fit(&ts, &gs, 0.2 * t_end, t_end, 1e-300) {
            gamma_rate = gamma_rate.min(-f.slope);
        }
        if m == 0 {
            s.num("energy_initial", rep[0].energy).num("energy_final", rep[rep.len() - 1].energy);
        }
    }
    s.num("max_energy_increase", worst_increase).num("dissipation_constant", c_eps);
    if gamma_rate.is_finite() {
        s.num("gamma_decay_rate", gamma_rate);
    }
    finish(&s, out)?;
    Ok(true)
}

fn cmd_lk(cli: &Cli, a: &ConfigArgs) -> Result<bool> {
    let (exp, seed) = load(cli, a)?;
    let cfg = &exp.file.lk;
    let z1 = initial_states(&exp, Framework::History, seed)?.swap_remove(0);
    let (du, dv) = random_ensemble(exp.model.spectrum(), cfg.separation, BallSpace::H0, seed.wrapping_add(1), 1).swap_remove(0);
    let shift = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, y)| x + y).collect::<Vec<f64>>();
    let z2 = ExtendedVector { u: shift(&z1.u, &du), v: shift(&z1.v, &dv), memory: z1.memory.clone() };
    let t_end = exp.file.t_end;
    let rep = lk_split(
        &exp.model,
        &exp.kernel,
        &z1,
        &z2,
        LkSettings { dt: exp.file.dt, t_end, stride: cfg.stride, fit_window: (cfg.fit_start, cfg.fit_end.unwrap_or(t_end)) },
    )?;
    let out = exp.output_dir();
    let mut t = CsvTable::create(&out.join("lk.csv"), &["t".into(), "l_norm_h0".into(), "k_norm_h1".into()])?;
    for ((time, l), k) in rep.times.iter().zip(&rep.l_norm).zip(&rep.k_norm_h1) {
        t.row(&[*time, *l, *k])?;
    }
    t.finish()?;
    let mut s = Summary::new("lk-split");
    s.text("kernel", exp.kernel.id())
        .int("seed", seed)
        .num("data_distance", rep.data_distance)
        .num("superposition_residual", rep.max_residual())
        .num(
            "superposition_residual_over_difference",
            rep.residual_rel_difference.iter().cloned().fold(0.0, f64::max),
        )
        .num("k_ratio_sup", rep.k_ratio_sup)
        .flag("degenerate", rep.degenerate);
    if let Some(f) = rep.l_fit {
        s.num("l_decay_rate", -f.slope).num("l_fit_r_squared", f.r_squared);
    }
    finish(&s, out)?;
    Ok(true)
}

fn cmd_hypotheses(cli: &Cli, a: &ConfigArgs) -> Result<bool> {
    let (exp, seed) = load(cli, a)?;
    let cfg = &exp.file.hypotheses;
    let settings = HypothesisSettings {
        radii: cfg.radii.clone(),
        ensemble: exp.file.ensemble.size,
        seed,
        dt: exp.file.dt,
        t_end: exp.file.t_end,
        stride: cfg.stride,
        sigmas: cfg.sigmas.clone(),
    };
    let rep = hypothesis_probe_suite(&exp.model, &exp.kernel, &settings)?;
    let out = exp.output_dir();
    let mut header: Vec<String> =
        ["radius", "plateau", "sup_h1", "sup_acceleration", "source_identity_error"].iter().map(|x| x.to_string()).collect();
    header.extend(cfg.sigmas.iter().map(|s| format!("sup_sigma_{s:.4}")));
    let mut t = CsvTable::create(&out.join("hypotheses.csv"), &header)?;
    for p in &rep.radii {
        let mut row = vec![p.radius, p.plateau, p.sup_h1, p.sup_acceleration, p.source_identity_error];
        row.extend(p.sigma_sups.iter().map(|x| x.1));
        t.row(&row)?;
    }
    t.finish()?;
    let mut s = Summary::new("hypotheses");
    s.text("kernel", exp.kernel.id())
        .int("seed", seed)
        .num("plateau_spread", rep.plateau_spread)
        .flag("acceleration_monotone", rep.acceleration_monotone)
        .num(
            "source_identity_error",
            rep.radii.iter().map(|p| p.source_identity_error).fold(0.0, f64::max),
        );
    finish(&s, out)?;
    Ok(true)
}

/// Cloud rows grouped by their time stamp, in time order.
fn group_by_time(rows: Vec<(f64, Vec<f64>)>) -> BTreeMap<u64, (f64, Vec<Vec<f64>>)> {
    let mut groups: BTreeMap<u64, (f64, Vec<Vec<f64>>)> = BTreeMap::new();
    for (t, p) in rows {
        // nonnegative floats order like their bit patterns
        groups.entry(t.max(0.0).to_bits()).or_insert_with(|| (t, Vec::new())).1.push(p);
    }
    groups
}

fn cmd_attract(a: &AttractArgs) -> Result<bool> {
    let bundle = group_by_time(io::read_cloud_dir(&a.bundle)?);
    let surrogate: Vec<Vec<f64>> =
        io::read_cloud_dir(&a.surrogate)?.into_iter().filter(|(t, _)| *t >= a.t_burn).map(|(_, p)| p).collect();
    if surrogate.is_empty() {
        return Err(Error::InvalidArgument(format!("no surrogate point has t >= {}", a.t_burn)));
    }
    let surrogate = PointCloud::new(surrogate, "surrogate", "H0")?;
    let mut series = Vec::with_capacity(bundle.len());
    for (t, points) in bundle.into_values() {
        let cloud = PointCloud::new(points, format!("bundle t={t}"), "H0")?;
        series.push((t, hausdorff_semidist(&cloud, &surrogate)?));
    }
    let mut t = CsvTable::create(&a.out, &["t".into(), "dist".into()])?;
    for (time, d) in &series {
        t.row(&[*time, *d])?;
    }
    t.finish()?;
    let mut s = Summary::new("attract");
    s.int("surrogate_points", surrogate.len() as u64).int("samples", series.len() as u64);
    match attraction_rate(&series) {
        Ok(r) => {
            s.num("omega", r.omega).num("q", r.q).num("r_squared", r.fit.r_squared);
        }
        Err(Error::Degenerate(msg)) => {
            s.text("note", &msg);
        }
        Err(e) => return Err(e),
    }
    let dir = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
    print!("{}", s.render());
    s.write(&dir.join("attract_summary.txt"))?;
    Ok(true)
}

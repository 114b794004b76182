//! TOML files for kernels, models and experiments.
//!
//! Relative paths inside a file are resolved against that file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evolution::Framework;
use crate::initial::BallSpace;
use crate::io;
use crate::kernels::{make_exponential_kernel, make_flatzone_kernel, Jump, KernelProfile, KernelSpec, MemoryKernel};
use crate::modal::{SineCollocation, Spectrum};
use crate::viscoelastic::{FunctionalParams, GalerkinModel, Nonlinearity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Exponential,
    Flatzone,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub family: KernelFamily,
    pub id: Option<String>,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
    /// `(position, amplitude)` before normalization.
    #[serde(default)]
    pub jumps: Vec<(f64, f64)>,
    /// CSV with columns `(s, mu)`.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    Cubic,
    CubicMinusLinear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ForcingSource {
    Inline(Vec<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Number of modes `J`.
    pub modes: usize,
    /// `"interval_pi"` (default) or a path given as `eigenfile`.
    #[serde(default = "default_domain")]
    pub domain: String,
    /// One eigenvalue per line, replaces the interval spectrum.
    pub eigenfile: Option<PathBuf>,
    #[serde(default = "default_f")]
    pub f: NonlinearityKind,
    pub beta: Option<f64>,
    /// Modal coefficients of `g`, inline or a CSV `(mode, value)`.
    pub g: Option<ForcingSource>,
    pub kernel: Option<PathBuf>,
}

fn default_domain() -> String {
    "interval_pi".into()
}

fn default_f() -> NonlinearityKind {
    NonlinearityKind::Zero
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialRecipe {
    Zero,
    RandomBall {
        radius: f64,
        #[serde(default = "default_space")]
        space: BallSpace,
    },
    /// CSV `(mode, u, v)`, optionally with a history snapshot file.
    File { phase: PathBuf, history: Option<PathBuf> },
}

fn default_space() -> BallSpace {
    BallSpace::H1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "one")]
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { size: 1, seed: 0 }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub sigma: f64,
    pub eps: f64,
    pub nu_small: f64,
    pub delta_split: Option<f64>,
    pub stride: usize,
    /// Level `eps` of the dissipation-integral probe.
    pub dissipation_eps: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        let p = FunctionalParams::default();
        Self { sigma: p.sigma, eps: p.eps, nu_small: p.nu_small, delta_split: p.delta_split, stride: 10, dissipation_eps: 0.1 }
    }
}

impl EnergySection {
    pub fn params(&self) -> FunctionalParams {
        FunctionalParams { sigma: self.sigma, eps: self.eps, nu_small: self.nu_small, delta_split: self.delta_split }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LkSection {
    pub separation: f64,
    pub fit_start: f64,
    pub fit_end: Option<f64>,
    pub stride: usize,
}

impl Default for LkSection {
    fn default() -> Self {
        Self { separation: 1e-3, fit_start: 2.0, fit_end: None, stride: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    pub radii: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub stride: usize,
}

impl Default for HypothesesSection {
    fn default() -> Self {
        Self { radii: vec![1.0, 2.0, 4.0], sigmas: vec![0.0, 1.0 / 3.0, 1.0], stride: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub tol: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub model: PathBuf,
    pub kernel: Option<PathBuf>,
    #[serde(default = "default_framework")]
    pub framework: Framework,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default = "default_initial")]
    pub initial: InitialRecipe,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub lk: LkSection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
    #[serde(default)]
    pub compare: CompareSection,
}

fn default_framework() -> Framework {
    Framework::History
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_initial() -> InitialRecipe {
    InitialRecipe::Zero
}

/// A parsed experiment with its model and kernel loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub path: PathBuf,
    pub file: ExperimentFile,
    pub kernel: MemoryKernel,
    pub model: GalerkinModel,
}

impl Experiment {
    pub fn output_dir(&self) -> &Path {
        &self.file.output
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_path_buf(), message: message.into() }
}

/// Parse a TOML file, reporting the line of a syntax or schema error.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
    parse_toml_str(&text, path)
}

pub fn parse_toml_str<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let msg = e.message().trim().to_string();
        match line {
            Some(l) => config_error(path, format!("line {l}: {msg}")),
            None => config_error(path, msg),
        }
    })
}

pub fn load_kernel(path: &Path) -> Result<MemoryKernel> {
    let file: KernelFile = parse_toml(path)?;
    build_kernel(&file, &base_dir(path), path)
}

pub fn build_kernel(file: &KernelFile, base: &Path, path: &Path) -> Result<MemoryKernel> {
    let jumps: Vec<Jump> = file.jumps.iter().map(|&(position, amplitude)| Jump { position, amplitude }).collect();
    let id = file.id.clone();
    let kernel = match file.family {
        KernelFamily::Exponential => {
            let delta = file.delta.unwrap_or(1.0);
            if jumps.is_empty() && file.theta.unwrap_or(1.0) == 1.0 {
                make_exponential_kernel(delta)?
            } else {
                MemoryKernel::new(KernelSpec {
                    id: id.clone().unwrap_or_else(|| format!("exponential(delta={delta})")),
                    profile: KernelProfile::Exponential { rate: delta },
                    jumps,
                    theta: file.theta.unwrap_or(1.0),
                    delta_decay: delta,
                    normalize: true,
                })?
            }
        }
        KernelFamily::Flatzone => {
            if jumps.is_empty() && file.theta.is_none() && file.delta.is_none() {
                make_flatzone_kernel()
            } else {
                MemoryKernel::new(KernelSpec {
                    id: id.clone().unwrap_or_else(|| "flatzone".into()),
                    profile: KernelProfile::FlatZone,
                    jumps,
                    theta: file.theta.unwrap_or(std::f64::consts::E),
                    delta_decay: file.delta.unwrap_or(1.0),
                    normalize: true,
                })?
            }
        }
        KernelFamily::Tabulated => {
            let table = file.table.as_ref().ok_or_else(|| config_error(path, "tabulated kernel needs a `table` CSV"))?;
            let (nodes, values) = io::read_two_columns(&resolve(base, table))?;
            let delta = file.delta.ok_or_else(|| config_error(path, "tabulated kernel needs `delta`"))?;
            MemoryKernel::new(KernelSpec {
                id: id.clone().unwrap_or_else(|| format!("tabulated({})", table.display())),
                profile: KernelProfile::Tabulated { nodes, values },
                jumps,
                theta: file.theta.unwrap_or(1.0),
                delta_decay: delta,
                normalize: true,
            })?
        }
    };
    Ok(kernel)
}

/// Model and the kernel it names, if any.
pub fn load_model(path: &Path) -> Result<(GalerkinModel, Option<MemoryKernel>)> {
    let file: ModelFile = parse_toml(path)?;
    let base = base_dir(path);
    let nonlinearity = match file.f {
        NonlinearityKind::Zero => Nonlinearity::Zero,
        NonlinearityKind::Cubic => Nonlinearity::Cubic,
        NonlinearityKind::CubicMinusLinear => Nonlinearity::CubicMinusLinear {
            beta: file.beta.ok_or_else(|| config_error(path, "cubic_minus_linear needs `beta`"))?,
        },
    };
    let forcing = match &file.g {
        None => vec![0.0; file.modes],
        Some(ForcingSource::Inline(g)) => g.clone(),
        Some(ForcingSource::File(p)) => io::read_two_columns(&resolve(&base, p))?.1,
    };
    if forcing.len() != file.modes {
        return Err(config_error(path, format!("g has {} coefficients, expected {}", forcing.len(), file.modes)));
    }
    let model = match (file.domain.as_str(), &file.eigenfile) {
        (_, Some(eig)) => {
            let lambdas = io::read_column(&resolve(&base, eig))?;
            if lambdas.len() != file.modes {
                return Err(config_error(path, format!("eigenfile has {} values, expected {}", lambdas.len(), file.modes)));
            }
            GalerkinModel::new(Spectrum::new(lambdas)?, nonlinearity, forcing, None)?
        }
        ("interval_pi", None) => GalerkinModel::new(
            Spectrum::interval_pi(file.modes)?,
            nonlinearity,
            forcing,
            Some(SineCollocation::new(file.modes)),
        )?,
        (other, None) => return Err(config_error(path, format!("unknown domain '{other}'; use interval_pi or eigenfile"))),
    };
    let kernel = file.kernel.as_ref().map(|k| load_kernel(&resolve(&base, k))).transpose()?;
    Ok((model, kernel))
}

pub fn load_experiment(path: &Path) -> Result<Experiment> {
    let mut file: ExperimentFile = parse_toml(path)?;
    let base = base_dir(path);
    if !(file.dt > 0.0) {
        return Err(config_error(path, format!("dt must be positive, got {}", file.dt)));
    }
    if !(file.t_end >= file.dt) {
        return Err(config_error(path, format!("t_end = {} must be at least dt = {}", file.t_end, file.dt)));
    }
    if file.ensemble.size == 0 {
        return Err(config_error(path, "ensemble size must be at least 1"));
    }
    let (model, model_kernel) = load_model(&resolve(&base, &file.model))?;
    let kernel = match (&file.kernel, model_kernel) {
        (Some(k), _) => load_kernel(&resolve(&base, k))?,
        (None, Some(k)) => k,
        (None, None) => return Err(config_error(path, "no kernel given in the experiment or the model")),
    };
    file.output = resolve(&base, &file.output);
    if let InitialRecipe::File { phase, history } = &mut file.initial {
        *phase = resolve(&base, phase);
        if let Some(h) = history {
            *h = resolve(&base, h);
        }
    }
    Ok(Experiment { path: path.to_path_buf(), file, kernel, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_reports_line() {
        let text = "model = \"m.toml\"\ndt = 0.1\nt_end = \"x\"\n";
        let err = parse_toml_str::<ExperimentFile>(text, Path::new("e.toml")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn initial_recipes() {
        let text = "model = \"m\"\ndt = 0.1\nt_end = 1\n[initial]\nkind = \"random_ball\"\nradius = 2.0\nspace = \"H0\"\n";
        let f: ExperimentFile = parse_toml_str(text, Path::new("e")).unwrap();
        assert_eq!(f.initial, InitialRecipe::RandomBall { radius: 2.0, space: BallSpace::H0 });
        assert_eq!(f.ensemble.size, 1);
        assert_eq!(f.framework, Framework::History);
    }
}

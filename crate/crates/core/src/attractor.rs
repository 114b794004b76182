//! Point-cloud diagnostics for attracting sets: Hausdorff semidistance,
//! exponential attraction rates, invariance residuals, box counting.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{state_at, Trajectory};
use crate::fit::{linear_fit, LinearFit};
use crate::kernels::MemoryKernel;
use crate::memory_spaces::{ExtendedVector, Memory};
use crate::modal::Spectrum;

/// Finite set of points of equal dimension, with the norm they are measured in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
    pub label: String,
    pub norm: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, label: impl Into<String>, norm: impl Into<String>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or_else(|| Error::InvalidArgument("empty point cloud".into()))?;
        let mut data = Vec::with_capacity(dim * points.len());
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("point cloud coordinates must be finite".into()));
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data, label: label.into(), norm: norm.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    /// Points of both clouds, keeping this cloud's label and norm.
    pub fn union(&self, other: &PointCloud) -> Result<PointCloud> {
        self.compatible(other)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(PointCloud { dim: self.dim, data, label: self.label.clone(), norm: self.norm.clone() })
    }

    fn compatible(&self, other: &PointCloud) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.norm != other.norm {
            return Err(Error::InvalidArgument(format!("norm conventions differ: '{}' vs '{}'", self.norm, other.norm)));
        }
        Ok(())
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sup_{a in A} inf_{b in B} |a - b|`.
pub fn hausdorff_semidist(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    a.compatible(b)?;
    let worst = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            b.points().map(|q| dist_sq(p, q)).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst.sqrt())
}

/// Fitted `d(t) ~ Q e^{-omega t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub omega: f64,
    pub q: f64,
    pub fit: LinearFit,
}

/// Samples below this are dropped from rate fits.
pub const DISTANCE_FLOOR: f64 = 1e-10;

/// Least-squares fit of `ln d` against `t`, skipping the first 20% of the
/// samples and every distance below [`DISTANCE_FLOOR`].
pub fn attraction_rate(series: &[(f64, f64)]) -> Result<RateFit> {
    if !series.is_empty() && series.iter().all(|(_, d)| *d == 0.0) {
        return Err(Error::Degenerate("all distances are zero: already on attractor".into()));
    }
    let skip = series.len() / 5;
    let (ts, ls): (Vec<f64>, Vec<f64>) =
        series[skip..].iter().filter(|(_, d)| *d >= DISTANCE_FLOOR).map(|(t, d)| (*t, d.ln())).unzip();
    if ts.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "attraction rate needs at least 5 samples above {DISTANCE_FLOOR:e} after the transient, got {}",
            ts.len()
        )));
    }
    let fit = linear_fit(&ts, &ls)?;
    Ok(RateFit { omega: -fit.slope, q: fit.intercept.exp(), fit })
}

/// `dist(S(t) E, E)` for a cloud `E` and a map `S(t)` given per point.
pub fn invariance_residual<F>(cloud: &PointCloud, stepper: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let moved: Vec<Vec<f64>> = (0..cloud.len()).into_par_iter().map(|i| stepper(cloud.point(i))).collect::<Result<_>>()?;
    let moved = PointCloud::new(moved, format!("{} (advanced)", cloud.label), cloud.norm.clone())?;
    hausdorff_semidist(&moved, cloud)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub dimension: f64,
    /// `(r, N(r))` for every probed box size.
    pub counts: Vec<(f64, usize)>,
    pub fit: Option<LinearFit>,
}

/// Slope of `ln N(r)` against `ln(1/r)` for `radii` log-spaced box sizes in
/// `[r_min, r_max]`.
pub fn box_counting_dim(cloud: &PointCloud, r_range: (f64, f64), radii: usize) -> Result<DimensionEstimate> {
    let (r_min, r_max) = r_range;
    if cloud.len() < 100 {
        return Err(Error::InvalidArgument(format!("box counting needs at least 100 points, got {}", cloud.len())));
    }
    if !(r_min > 0.0 && r_max >= 10.0 * r_min) {
        return Err(Error::InvalidArgument(format!("box sizes must span a decade, got [{r_min}, {r_max}]")));
    }
    if radii < 2 {
        return Err(Error::InvalidArgument("need at least two box sizes".into()));
    }
    let first = cloud.point(0);
    if cloud.points().all(|p| p == first) {
        return Ok(DimensionEstimate { dimension: 0.0, counts: vec![], fit: None });
    }
    let dim = cloud.dim();
    let mut lo = vec![f64::INFINITY; dim];
    for p in cloud.points() {
        for (l, x) in lo.iter_mut().zip(p) {
            *l = l.min(*x);
        }
    }
    let ratio = (r_max / r_min).ln();
    let counts: Vec<(f64, usize)> = (0..radii)
        .into_par_iter()
        .map(|i| {
            let r = r_min * (ratio * i as f64 / (radii - 1) as f64).exp();
            let boxes: HashSet<Vec<i64>> =
                cloud.points().map(|p| p.iter().zip(&lo).map(|(x, l)| ((x - l) / r).floor() as i64).collect()).collect();
            (r, boxes.len())
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|(r, _)| -r.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(DimensionEstimate { dimension: fit.slope, counts, fit: Some(fit) })
}

/// Coordinates of `z` in which the Euclidean norm is the `H^0` (or `V^0`) norm:
/// `(lambda^{1/2} u, v, sqrt(w rho / lambda) memory)`.
pub fn embed(z: &ExtendedVector, spectrum: &Spectrum) -> Result<Vec<f64>> {
    spectrum.check(&z.u)?;
    spectrum.check(&z.v)?;
    let lambdas = spectrum.lambdas();
    let mut out: Vec<f64> = z.u.iter().zip(lambdas).map(|(x, l)| x * l.sqrt()).collect();
    out.extend_from_slice(&z.v);
    let (weights, values) = match &z.memory {
        Memory::History(eta) => (eta.measure().weights(), eta.values()),
        Memory::State(xi) => (xi.measure().weights(), xi.values()),
    };
    for (w, row) in weights.iter().zip(values.chunks(lambdas.len())) {
        for (x, l) in row.iter().zip(lambdas) {
            out.push(if *w == 0.0 { 0.0 } else { (w / l).sqrt() * x });
        }
    }
    Ok(out)
}

/// Embedded states of `traj` at the given snapshots.
pub fn cloud_from_trajectory(
    traj: &Trajectory,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    snapshots: &[usize],
    label: &str,
) -> Result<PointCloud> {
    let points = snapshots
        .par_iter()
        .map(|&n| embed(&state_at(traj, n, kernel, 1)?, spectrum))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::new(points, label, "H0")
}

/// Tail samples `t >= t_burn` of every member, every `stride` snapshots.
pub fn surrogate_attractor(
    bundle: &[Trajectory],
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    t_burn: f64,
    stride: usize,
) -> Result<PointCloud> {
    let mut points = Vec::new();
    for tr in bundle {
        let idx: Vec<usize> = (0..tr.len()).filter(|&n| tr.time(n) >= t_burn - 1e-9).step_by(stride.max(1)).collect();
        points.extend(cloud_from_trajectory(tr, kernel, spectrum, &idx, "surrogate")?.points().map(|p| p.to_vec()));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!("no snapshot reaches t_burn = {t_burn}")));
    }
    PointCloud::new(points, "surrogate", "H0")
}

/// `(t, dist(S(t) B, E))` with `S(t) B` the bundle at common snapshots
/// `0, stride, ...` up to `t_max`.
pub fn bundle_distance_series(
    bundle: &[Trajectory],
    surrogate: &PointCloud,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    t_max: f64,
    stride: usize,
) -> Result<Vec<(f64, f64)>> {
    let first = bundle.first().ok_or_else(|| Error::InvalidArgument("empty bundle".into()))?;
    let len = bundle.iter().map(|t| t.len()).min().unwrap_or(0);
    let idx: Vec<usize> = (0..len).filter(|&n| first.time(n) <= t_max + 1e-9).step_by(stride.max(1)).collect();
    idx.iter()
        .map(|&n| {
            let points = bundle
                .iter()
                .map(|tr| embed(&state_at(tr, n, kernel, 1)?, spectrum))
                .collect::<Result<Vec<_>>>()?;
            let cloud = PointCloud::new(points, "bundle", "H0")?;
            Ok((first.time(n), hausdorff_semidist(&cloud, surrogate)?))
        })
        .collect()
}

/// Invariance residual of a trajectory tail: the samples from `t_burn` on,
/// advanced by `lag` along the same trajectory, against the samples themselves.
pub fn tail_invariance_residual(
    traj: &Trajectory,
    kernel: &MemoryKernel,
    spectrum: &Spectrum,
    t_burn: f64,
    lag: f64,
    stride: usize,
) -> Result<f64> {
    let shift = (lag / traj.dt()).round() as usize;
    let tail: Vec<usize> = (0..traj.len()).filter(|&n| traj.time(n) >= t_burn - 1e-9).step_by(stride.max(1)).collect();
    let moved: Vec<usize> = tail.iter().map(|n| n + shift).filter(|&n| n < traj.len()).collect();
    if moved.is_empty() {
        return Err(Error::InvalidArgument(format!("lag {lag} runs past the end of the trajectory")));
    }
    let e = cloud_from_trajectory(traj, kernel, spectrum, &tail, "tail")?;
    let s = cloud_from_trajectory(traj, kernel, spectrum, &moved, "tail (advanced)")?;
    hausdorff_semidist(&s, &e)
}

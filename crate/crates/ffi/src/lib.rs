//! C interface to memoryflow.
//!
//! Every function returns an [`MfStatus`]; on failure the message is kept per
//! thread and read with [`mf_last_error`]. Objects are opaque handles created
//! by `*_new`/`*_load`/`mf_simulate` and released with the matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use memoryflow::attractor::{hausdorff_semidist, PointCloud};
use memoryflow::config::load_kernel;
use memoryflow::evolution::{simulate, zero_memory, Framework, Trajectory};
use memoryflow::kernels::{check_nec, flatness_rate, make_exponential_kernel, make_flatzone_kernel, MemoryKernel};
use memoryflow::memory_spaces::ExtendedVector;
use memoryflow::viscoelastic::{assemble, GalerkinModel, Nonlinearity};
use memoryflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidKernel = 3,
    InvalidModel = 4,
    BlowUp = 5,
    Io = 6,
    Config = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfFramework {
    History = 0,
    State = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfNonlinearity {
    Zero = 0,
    Cubic = 1,
    CubicMinusLinear = 2,
}

pub struct MfKernel(MemoryKernel);

pub struct MfModel(GalerkinModel);

pub struct MfTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MfStatus {
    match e {
        Error::InvalidKernel(_) | Error::TruncationExceedsMass { .. } => MfStatus::InvalidKernel,
        Error::InvalidModel(_) => MfStatus::InvalidModel,
        Error::BlowUp { .. } => MfStatus::BlowUp,
        Error::Io(_) | Error::Csv(_) => MfStatus::Io,
        Error::Config { .. } => MfStatus::Config,
        _ => MfStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MfStatus, String)>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MfStatus::Panic
        }
    }
}

fn lib<T>(r: memoryflow::Result<T>) -> Result<T, (MfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MfStatus, String) {
    (MfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MfStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MfStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (MfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn mf_kernel_exponential(delta: f64, kernel: *mut *mut MfKernel) -> MfStatus {
    guard(|| {
        let slot = out(kernel, "kernel")?;
        let k = lib(make_exponential_kernel(delta))?;
        *slot = Box::into_raw(Box::new(MfKernel(k)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_kernel_flatzone(kernel: *mut *mut MfKernel) -> MfStatus {
    guard(|| {
        let slot = out(kernel, "kernel")?;
        *slot = Box::into_raw(Box::new(MfKernel(make_flatzone_kernel())));
        Ok(())
    })
}

/// Load a kernel definition file (TOML).
#[no_mangle]
pub unsafe extern "C" fn mf_kernel_load(path: *const c_char, kernel: *mut *mut MfKernel) -> MfStatus {
    guard(|| {
        let slot = out(kernel, "kernel")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| (MfStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let k = lib(load_kernel(Path::new(p)))?;
        *slot = Box::into_raw(Box::new(MfKernel(k)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_kernel_free(kernel: *mut MfKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// `mu(s)` and `k(s)`; either output may be null.
#[no_mangle]
pub unsafe extern "C" fn mf_kernel_eval(kernel: *const MfKernel, s: f64, mu: *mut f64, k: *mut f64) -> MfStatus {
    guard(|| {
        let kern = &handle(kernel, "kernel")?.0;
        if !(s >= 0.0) {
            return Err((MfStatus::InvalidArgument, format!("s must be nonnegative, got {s}")));
        }
        if let Some(m) = mu.as_mut() {
            *m = kern.mu(s);
        }
        if let Some(x) = k.as_mut() {
            *x = kern.k(s);
        }
        Ok(())
    })
}

/// Grid scan of `mu(t + s) <= theta e^{-delta t} mu(s)` with the given spacing.
#[no_mangle]
pub unsafe extern "C" fn mf_kernel_check_nec(
    kernel: *const MfKernel,
    theta: f64,
    delta: f64,
    spacing: f64,
    holds: *mut bool,
    worst_ratio: *mut f64,
) -> MfStatus {
    guard(|| {
        let kern = &handle(kernel, "kernel")?.0;
        let holds = out(holds, "holds")?;
        if !(spacing > 0.0) {
            return Err((MfStatus::InvalidArgument, format!("spacing must be positive, got {spacing}")));
        }
        let r = check_nec(kern, theta, delta, &kern.grid(spacing));
        *holds = r.holds;
        if let Some(w) = worst_ratio.as_mut() {
            *w = r.worst_ratio;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_kernel_flatness_rate(kernel: *const MfKernel, rate: *mut f64) -> MfStatus {
    guard(|| {
        let kern = &handle(kernel, "kernel")?.0;
        *out(rate, "rate")? = flatness_rate(kern);
        Ok(())
    })
}

/// Model on `(0, pi)` with `modes` sine modes. `forcing` holds `modes`
/// coefficients or is null for `g = 0`; `beta` is read only for
/// `MF_NONLINEARITY_CUBIC_MINUS_LINEAR`.
#[no_mangle]
pub unsafe extern "C" fn mf_model_interval(
    modes: usize,
    nonlinearity: MfNonlinearity,
    beta: f64,
    forcing: *const f64,
    model: *mut *mut MfModel,
) -> MfStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let nl = match nonlinearity {
            MfNonlinearity::Zero => Nonlinearity::Zero,
            MfNonlinearity::Cubic => Nonlinearity::Cubic,
            MfNonlinearity::CubicMinusLinear => Nonlinearity::CubicMinusLinear { beta },
        };
        let g = if forcing.is_null() { None } else { Some(slice(forcing, modes, "forcing")?.to_vec()) };
        let m = lib(GalerkinModel::interval_pi(modes, nl, g))?;
        *slot = Box::into_raw(Box::new(MfModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_model_free(model: *mut MfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Integrate from `(u0, v0)` with zero memory up to `t_end`.
#[no_mangle]
pub unsafe extern "C" fn mf_simulate(
    model: *const MfModel,
    kernel: *const MfKernel,
    u0: *const f64,
    v0: *const f64,
    modes: usize,
    dt: f64,
    t_end: f64,
    framework: MfFramework,
    trajectory: *mut *mut MfTrajectory,
) -> MfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let k = &handle(kernel, "kernel")?.0;
        let slot = out(trajectory, "trajectory")?;
        if modes != m.modes() {
            return Err((MfStatus::InvalidArgument, format!("model has {} modes, got {modes}", m.modes())));
        }
        let fw = match framework {
            MfFramework::History => Framework::History,
            MfFramework::State => Framework::State,
        };
        if !(dt > 0.0) {
            return Err((MfStatus::InvalidArgument, format!("dt must be positive, got {dt}")));
        }
        let z = ExtendedVector {
            u: slice(u0, modes, "u0")?.to_vec(),
            v: slice(v0, modes, "v0")?.to_vec(),
            memory: zero_memory(k, dt, modes, fw),
        };
        let ops = lib(assemble(m, k))?;
        let tr = lib(simulate(&ops, k, &z, dt, t_end, fw))?;
        *slot = Box::into_raw(Box::new(MfTrajectory(tr)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_trajectory_free(trajectory: *mut MfTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of stored snapshots and modes.
#[no_mangle]
pub unsafe extern "C" fn mf_trajectory_shape(trajectory: *const MfTrajectory, snapshots: *mut usize, modes: *mut usize) -> MfStatus {
    guard(|| {
        let tr = &handle(trajectory, "trajectory")?.0;
        *out(snapshots, "snapshots")? = tr.len();
        *out(modes, "modes")? = tr.modes();
        Ok(())
    })
}

/// Copy snapshot `index`: time into `t`, coefficients into `u` and `v`
/// (each `modes` long; `u` or `v` may be null to skip).
#[no_mangle]
pub unsafe extern "C" fn mf_trajectory_snapshot(
    trajectory: *const MfTrajectory,
    index: usize,
    t: *mut f64,
    u: *mut f64,
    v: *mut f64,
) -> MfStatus {
    guard(|| {
        let tr = &handle(trajectory, "trajectory")?.0;
        if index >= tr.len() {
            return Err((MfStatus::InvalidArgument, format!("snapshot {index} out of range ({} stored)", tr.len())));
        }
        if let Some(x) = t.as_mut() {
            *x = tr.time(index);
        }
        let j = tr.modes();
        if !u.is_null() {
            std::slice::from_raw_parts_mut(u, j).copy_from_slice(tr.u(index));
        }
        if !v.is_null() {
            std::slice::from_raw_parts_mut(v, j).copy_from_slice(tr.v(index));
        }
        Ok(())
    })
}

/// `sup_a inf_b |a - b|` for row-major clouds of `na` and `nb` points in dimension `dim`.
#[no_mangle]
pub unsafe extern "C" fn mf_hausdorff_semidist(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    dim: usize,
    dist: *mut f64,
) -> MfStatus {
    guard(|| {
        let slot = out(dist, "dist")?;
        if dim == 0 || na == 0 || nb == 0 {
            return Err((MfStatus::InvalidArgument, "clouds must be nonempty with positive dimension".into()));
        }
        let cloud = |p: &[f64], label: &str| lib(PointCloud::new(p.chunks(dim).map(<[f64]>::to_vec).collect(), label, "euclid"));
        let ca = cloud(slice(a, na * dim, "a")?, "a")?;
        let cb = cloud(slice(b, nb * dim, "b")?, "b")?;
        *slot = lib(hausdorff_semidist(&ca, &cb))?;
        Ok(())
    })
}

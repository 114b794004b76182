//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};

use memoryflow::evolution::{ModelOperators, StageContext};

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// Adaptive Simpson over consecutive breakpoints (kernel kinks, jumps).
pub fn piecewise_simpson(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    breaks.windows(2).map(|w| adaptive_simpson(f, w[0], w[1], tol)).sum()
}

/// Single mode with exponential kernel `mu = delta^2 e^{-delta s}` reduces to
/// `u' = v, v' = -lambda u - m, m' = -delta m + k0 lambda v` where `k0 = delta`.
pub fn reduced_linear_solution(lambda: f64, delta: f64, x0: [f64; 3], t: f64) -> [f64; 3] {
    let a = Matrix3::new(0.0, 1.0, 0.0, -lambda, 0.0, -1.0, 0.0, delta * lambda, -delta);
    let y = (a * t).exp() * Vector3::new(x0[0], x0[1], x0[2]);
    [y[0], y[1], y[2]]
}

/// Eigenvalues of the reduced linear system.
pub fn reduced_linear_spectrum(lambda: f64, delta: f64) -> Vec<(f64, f64)> {
    let a = Matrix3::new(0.0, 1.0, 0.0, -lambda, 0.0, -1.0, 0.0, delta * lambda, -delta);
    a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

/// `u'' + lambda u + int mu eta ds = forcing` for a single mode, with the
/// memory source `lambda v`.
pub struct SingleMode {
    pub lambda: f64,
}

impl ModelOperators for SingleMode {
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
    fn rhs(&self, u: &[f64], v: &[f64], m: &[f64], _ctx: StageContext, du: &mut [f64], dv: &mut [f64]) {
        du[0] = v[0];
        dv[0] = -self.lambda * u[0] - m[0];
    }
}

/// Method-of-lines upwind transport of `eta_t = -eta_s + a(t)`, `eta(0) = 0`,
/// with `a` supplied at the grid times; explicit Euler with CFL number 1 is
/// exact shift plus source accumulation. Returns `eta` on `s = i ds`.
pub fn upwind_history(sources: &[f64], dt: f64, ds: f64, nodes: usize, steps: usize) -> Vec<f64> {
    let cfl = dt / ds;
    let mut eta = vec![0.0; nodes];
    for n in 0..steps {
        let a_mid = 0.5 * (sources[n] + sources[n + 1]);
        let mut next = eta.clone();
        for i in 1..nodes {
            next[i] = eta[i] - cfl * (eta[i] - eta[i - 1]) + dt * a_mid;
        }
        next[0] = 0.0;
        eta = next;
    }
    eta
}

/// `sup_{a in A} inf_{b in B} |a - b|` by the double loop.
pub fn brute_semidistance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut sup: f64 = 0.0;
    for p in a {
        let mut inf = f64::INFINITY;
        for q in b {
            let d = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            inf = inf.min(d);
        }
        sup = sup.max(inf);
    }
    sup
}

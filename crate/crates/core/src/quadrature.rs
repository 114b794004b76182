//! Fixed-grid quadrature weights for uniformly spaced nodes.

use serde::{Deserialize, Serialize};

/// Composite rule used to integrate grid functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    /// Composite Simpson; an even node count closes with a 3/8 panel.
    Simpson,
}

/// Weights for `n` nodes spaced by `h`, covering `[0, (n-1)h]`.
pub fn uniform_weights(n: usize, h: f64, rule: QuadratureRule) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    match rule {
        QuadratureRule::Trapezoid => trapezoid_into(&mut w, h),
        QuadratureRule::Simpson => {
            if n == 2 {
                trapezoid_into(&mut w, h);
            } else if n % 2 == 1 {
                simpson_into(&mut w, h);
            } else if n == 4 {
                three_eighths_into(&mut w, h);
            } else {
                let split = n - 3;
                simpson_into(&mut w[..split], h);
                let mut tail = [0.0; 4];
                three_eighths_into(&mut tail, h);
                for (k, t) in tail.iter().enumerate() {
                    w[split - 1 + k] += t;
                }
            }
        }
    }
    w
}

fn trapezoid_into(w: &mut [f64], h: f64) {
    let n = w.len();
    for x in w.iter_mut() {
        *x = h;
    }
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
}

fn simpson_into(w: &mut [f64], h: f64) {
    let n = w.len();
    debug_assert!(n % 2 == 1);
    for (i, x) in w.iter_mut().enumerate() {
        *x = if i == 0 || i == n - 1 {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
}

fn three_eighths_into(w: &mut [f64], h: f64) {
    let c = 3.0 * h / 8.0;
    w[0] = c;
    w[1] = 3.0 * c;
    w[2] = 3.0 * c;
    w[3] = c;
}

/// Trapezoid weights for strictly increasing, possibly nonuniform nodes.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    for i in 0..n - 1 {
        let half = 0.5 * (nodes[i + 1] - nodes[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

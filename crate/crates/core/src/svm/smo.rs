//! Sequential minimal optimization for the C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Working pairs are chosen by maximal violation for `i` and second-order
//! gain for `j`. Iteration stops once the KKT gap `m(α) − M(α)` drops below
//! the tolerance.

use super::Gram;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig { tol: 1e-3, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `Σ α_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `m(α) − M(α)`.
    pub kkt_gap: f64,
}

/// Solves the binary dual for labels `y ∈ {−1, +1}`.
pub fn solve(gram: &Gram, y: &[f64], c: f64, config: &SmoConfig) -> SmoSolution {
    let n = y.len();
    assert_eq!(gram.len(), n);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| gram.get(i, i)).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt_gap = f64::INFINITY;

    while iterations < config.max_iter {
        // i: maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        // j: second-order selection in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i_sel != usize::MAX {
            let ki = gram.row(i_sel);
            for t in 0..n {
                let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    // Q_ii + Q_tt − 2 y_i y_t Q_it = K_ii + K_tt − 2 K_it
                    let mut quad = diag[i_sel] + diag[t] - 2.0 * ki[t];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        kkt_gap = gmax + gmax2;
        if kkt_gap < config.tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let ki = gram.row(i);
        let kj = gram.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * (y[i] * y[j] * ki[j]);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * (y[i] * y[j] * ki[j]);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        if di != 0.0 || dj != 0.0 {
            let (yi, yj) = (y[i], y[j]);
            for t in 0..n {
                grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
            }
        }
    }
    if !converged {
        log::warn!("SMO stopped at the iteration cap ({}) with KKT gap {kkt_gap:.3e}", config.max_iter);
    }

    SmoSolution { bias: -rho(&alpha, &grad, y, c), alpha, iterations, converged, kkt_gap }
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if !ub.is_finite() {
        // single-sided problem (one class absent)
        lb
    } else if !lb.is_finite() {
        ub
    } else {
        (ub + lb) / 2.0
    }
}

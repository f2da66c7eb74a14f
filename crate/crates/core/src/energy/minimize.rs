//! Convex minimization of the crude energy with a set of vertices held fixed.
//!
//! Newton steps on the free vertices, with the Hessian (a weighted graph
//! Laplacian) inverted by Jacobi-preconditioned conjugate gradients and a
//! backtracking Armijo line search on the energy.

use crate::error::{Error, Result};
use crate::gasket::GasketGraph;

use super::{crude_energy_values, crude_gradient_values, ApModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerConfig {
    /// Stop once the sup-norm of the free gradient falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 100_000,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy: f64,
}

/// Solves `L_w x = rhs` on the free vertices, where `L_w` is the graph
/// Laplacian with edge weights `weights` and the fixed vertices act as
/// homogeneous Dirichlet nodes. Returns the solution (zero at fixed ids).
pub(crate) fn pcg_weighted_laplacian(
    n: usize,
    edges: &[[usize; 2]],
    weights: &[f64],
    free: &[bool],
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let mut diag = vec![0.0; n];
    for (&[i, j], &w) in edges.iter().zip(weights) {
        diag[i] += w;
        diag[j] += w;
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&[i, j], &w) in edges.iter().zip(weights) {
            let t = w * (x[i] - x[j]);
            y[i] += t;
            y[j] -= t;
        }
        for (k, v) in y.iter_mut().enumerate() {
            if !free[k] {
                *v = 0.0;
            }
        }
    };
    let precond = |r: &[f64], z: &mut [f64]| {
        for k in 0..n {
            z[k] = if free[k] && diag[k] > 0.0 {
                r[k] / diag[k]
            } else {
                0.0
            };
        }
    };

    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = (0..n).map(|k| if free[k] { rhs[k] } else { 0.0 }).collect();
    let r0 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r0 == 0.0 {
        return x;
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut d = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ad = vec![0.0; n];
    for _ in 0..max_iter {
        apply(&d, &mut ad);
        let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
        if !(dad > 0.0) {
            break;
        }
        let step = rz / dad;
        for k in 0..n {
            x[k] += step * d[k];
            r[k] -= step * ad[k];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= rel_tol * r0 {
            break;
        }
        precond(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            d[k] = z[k] + beta * d[k];
        }
    }
    x
}

fn free_sup(grad: &[f64], free: &[bool]) -> f64 {
    grad.iter()
        .zip(free)
        .filter(|(_, &f)| f)
        .fold(0.0f64, |m, (g, _)| m.max(g.abs()))
}

/// Minimizes the crude energy over the entries of `values` whose `fixed`
/// flag is false, in place. The energy is convex, so a stationary point is
/// a global minimizer.
pub fn minimize_crude_energy(
    g: &GasketGraph,
    model: &ApModel,
    values: &mut [f64],
    fixed: &[bool],
    cfg: &MinimizerConfig,
) -> Result<MinimizeReport> {
    let n = g.num_vertices();
    if values.len() != n || fixed.len() != n {
        return Err(Error::FieldLength {
            expected: n,
            got: values.len().min(fixed.len()),
        });
    }
    let free: Vec<bool> = fixed.iter().map(|f| !f).collect();
    let edges = g.edges();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut energy = crude_energy_values(g, model, values);

    for iter in 0..cfg.max_iter {
        crude_gradient_values(g, model, values, &mut grad);
        let gnorm = free_sup(&grad, &free);
        if gnorm < cfg.grad_tol {
            return Ok(MinimizeReport {
                iterations: iter,
                grad_norm: gnorm,
                energy,
            });
        }

        let dmax = edges
            .iter()
            .fold(0.0f64, |m, &[i, j]| m.max((values[i] - values[j]).abs()));
        let floor = 1e-6 * dmax.max(f64::MIN_POSITIVE);
        let weights: Vec<f64> = edges
            .iter()
            .map(|&[i, j]| model.edge_curvature(values[i] - values[j], floor))
            .collect();
        let rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
        let mut step = pcg_weighted_laplacian(n, edges, &weights, &free, &rhs, 1e-12, 4 * n + 50);
        let mut slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        if !(slope < 0.0) {
            // Fall back to steepest descent.
            step = rhs.clone();
            slope = -grad
                .iter()
                .zip(&free)
                .filter(|(_, &f)| f)
                .map(|(g, _)| g * g)
                .sum::<f64>();
        }

        // Below this predicted decrease the energy difference is round-off,
        // so progress is judged by the gradient instead.
        let roundoff = -slope <= 1e-13 * energy.abs().max(f64::MIN_POSITIVE);
        let mut t = 1.0;
        let mut accepted = false;
        let mut tg = vec![0.0; n];
        for _ in 0..60 {
            for k in 0..n {
                trial[k] = values[k] + t * step[k];
            }
            let e = crude_energy_values(g, model, &trial);
            let ok = if roundoff {
                crude_gradient_values(g, model, &trial, &mut tg);
                free_sup(&tg, &free) < gnorm
            } else {
                e <= energy + cfg.armijo * t * slope
            };
            if ok {
                values.copy_from_slice(&trial);
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                what: "crude energy minimizer (line search)",
                iterations: iter,
                residual: gnorm,
            });
        }
    }
    crude_gradient_values(g, model, values, &mut grad);
    Err(Error::NonConvergence {
        what: "crude energy minimizer",
        iterations: cfg.max_iter,
        residual: free_sup(&grad, &free),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_p2_extension_of_corner_data() {
        let g = GasketGraph::standard(1).unwrap();
        let model = ApModel::new(2.0).unwrap();
        let mut vals = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fixed = [true, true, true, false, false, false];
        let rep = minimize_crude_energy(&g, &model, &mut vals, &fixed, &MinimizerConfig::default())
            .unwrap();
        assert!((vals[3] - 0.4).abs() < 1e-12);
        assert!((vals[4] - 0.4).abs() < 1e-12);
        assert!((vals[5] - 0.2).abs() < 1e-12);
        assert!((rep.energy - 1.2).abs() < 1e-12);
    }

    #[test]
    fn constant_data_stays_constant() {
        let g = GasketGraph::standard(3).unwrap();
        let model = ApModel::new(3.0).unwrap();
        let n = g.num_vertices();
        let mut vals = vec![0.0; n];
        vals[..3].copy_from_slice(&[2.5, 2.5, 2.5]);
        let fixed: Vec<bool> = (0..n).map(|k| k < 3).collect();
        let rep = minimize_crude_energy(&g, &model, &mut vals, &fixed, &MinimizerConfig::default())
            .unwrap();
        // p = 3 is degenerate at constants: a 1e-10 gradient allows O(1e-5)
        // differences.
        assert!(vals.iter().all(|v| (v - 2.5).abs() < 1e-4));
        assert!(rep.energy < 1e-12);
    }

    #[test]
    fn p4_level_one_by_brute_force() {
        // Nested grid search over the three midpoint values as an oracle.
        let g = GasketGraph::standard(1).unwrap();
        let model = ApModel::new(4.0).unwrap();
        let mut vals = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fixed = [true, true, true, false, false, false];
        let rep = minimize_crude_energy(&g, &model, &mut vals, &fixed, &MinimizerConfig::default())
            .unwrap();
        assert!((vals[3] - vals[4]).abs() < 1e-9, "symmetric midpoints");

        let energy_at = |x: f64, y: f64, z: f64| {
            let v = [1.0, 0.0, 0.0, x, y, z];
            crude_energy_values(&g, &model, &v)
        };
        let mut best = f64::INFINITY;
        let mut arg = (0.0, 0.0);
        let steps = 400;
        for a in 0..=steps {
            for b in 0..=steps {
                let x = a as f64 / steps as f64;
                let z = b as f64 / steps as f64;
                let e = energy_at(x, x, z);
                if e < best {
                    best = e;
                    arg = (x, z);
                }
            }
        }
        assert!(rep.energy <= best + 1e-12);
        assert!((vals[3] - arg.0).abs() < 5e-3 && (vals[5] - arg.1).abs() < 5e-3);
    }
}

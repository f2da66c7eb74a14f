//! Cell energy `A_p`, crude and renormalized p-energies, and their
//! derivatives.
//!
//! The default cell energy is `A_p(a1, a2, a3) = sum_{i<j} |a_i - a_j|^p`.
//! Since two cells of the gasket share at most a vertex, the crude energy is
//! a sum over the sides of all cells, each side counted once.

mod embedding;
mod extension;
mod minimize;

pub use embedding::{estimate_embedding_k, EmbeddingEstimate};
pub use extension::{estimate_rp, extend_field, p_harmonic_extension, prolongate, RpEstimate};
pub(crate) use minimize::pcg_weighted_laplacian;
pub use minimize::{minimize_crude_energy, MinimizeReport, MinimizerConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::gasket::GasketGraph;

/// Symmetric, convex, degree-p homogeneous cell energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApModel {
    p: f64,
}

impl ApModel {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "exponent p = {p} must exceed 1"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Sums the three side terms in sorted order, so every permutation of
    /// the arguments gives the same bits.
    pub fn eval(&self, a1: f64, a2: f64, a3: f64) -> f64 {
        let mut t = [
            self.edge_term(a1 - a2),
            self.edge_term(a2 - a3),
            self.edge_term(a1 - a3),
        ];
        t.sort_by(f64::total_cmp);
        t[0] + t[1] + t[2]
    }

    /// Generating function `g(x) = A_p(-1, x, 1)`; even in `x`.
    pub fn g(&self, x: f64) -> f64 {
        self.eval(-1.0, x, 1.0)
    }

    #[inline]
    pub(crate) fn edge_term(&self, d: f64) -> f64 {
        if self.p == 2.0 {
            d * d
        } else {
            d.abs().powf(self.p)
        }
    }

    /// Derivative of `|d|^p`: `p |d|^{p-2} d`, zero at `d = 0`.
    #[inline]
    pub(crate) fn edge_slope(&self, d: f64) -> f64 {
        if self.p == 2.0 {
            2.0 * d
        } else if d == 0.0 {
            0.0
        } else {
            self.p * d.abs().powf(self.p - 1.0) * d.signum()
        }
    }

    /// Second derivative of `|d|^p` with `|d|` floored at `floor`, so that the
    /// value stays finite for `p < 2` and positive for `p > 2`.
    #[inline]
    pub(crate) fn edge_curvature(&self, d: f64, floor: f64) -> f64 {
        if self.p == 2.0 {
            2.0
        } else {
            self.p * (self.p - 1.0) * d.abs().max(floor).powf(self.p - 2.0)
        }
    }
}

/// Crude energy `E_p^{(m)}` of raw vertex values on `g`.
pub(crate) fn crude_energy_values(g: &GasketGraph, model: &ApModel, u: &[f64]) -> f64 {
    g.edges()
        .iter()
        .map(|&[i, j]| model.edge_term(u[i] - u[j]))
        .sum()
}

/// Gradient of the crude energy, accumulated into `out` (overwritten).
pub(crate) fn crude_gradient_values(g: &GasketGraph, model: &ApModel, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &[i, j] in g.edges() {
        let s = model.edge_slope(u[i] - u[j]);
        out[i] += s;
        out[j] -= s;
    }
}

/// Graph, cell energy and renormalization factor for one working level.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    graph: GasketGraph,
    model: ApModel,
    rp: f64,
    scale: f64,
}

impl EnergyContext {
    pub fn new(graph: GasketGraph, model: ApModel, rp: f64) -> Result<Self> {
        if !(rp > 0.0 && rp < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "renormalization factor {rp} must lie in (0, 1)"
            )));
        }
        let scale = rp.powi(-(graph.level() as i32));
        Ok(Self {
            graph,
            model,
            rp,
            scale,
        })
    }

    pub fn graph(&self) -> &GasketGraph {
        &self.graph
    }

    pub fn model(&self) -> &ApModel {
        &self.model
    }

    pub fn p(&self) -> f64 {
        self.model.p
    }

    pub fn rp(&self) -> f64 {
        self.rp
    }

    /// `r_p^{-m}`
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn crude_energy(&self, u: &VertexField) -> Result<f64> {
        u.check_graph(&self.graph)?;
        Ok(crude_energy_values(&self.graph, &self.model, u.values()))
    }

    pub fn renormalized_energy(&self, u: &VertexField) -> Result<f64> {
        Ok(self.scale * self.crude_energy(u)?)
    }

    /// `||u||_{E_p} = E_p(u)^{1/p}`
    pub fn energy_norm(&self, u: &VertexField) -> Result<f64> {
        Ok(self.renormalized_energy(u)?.powf(1.0 / self.p()))
    }

    /// Per-vertex partial derivatives of the renormalized energy, boundary
    /// entries included.
    pub fn energy_gradient(&self, u: &VertexField) -> Result<VertexField> {
        u.check_graph(&self.graph)?;
        let mut out = vec![0.0; u.len()];
        crude_gradient_values(&self.graph, &self.model, u.values(), &mut out);
        out.iter_mut().for_each(|x| *x *= self.scale);
        VertexField::new(u.level(), out)
    }

    /// `(E_p(u) + E_p(v))^{1/p}`
    pub fn pair_norm(&self, u: &VertexField, v: &VertexField) -> Result<f64> {
        let e = self.renormalized_energy(u)? + self.renormalized_energy(v)?;
        Ok(e.powf(1.0 / self.p()))
    }

    /// Per-edge curvature weights of the renormalized energy at `u`
    /// (Hessian of `E_p` as a weighted graph Laplacian), with differences
    /// floored at `rel_floor * max |d|`.
    pub(crate) fn hessian_weights(&self, u: &[f64], rel_floor: f64) -> Vec<f64> {
        let edges = self.graph.edges();
        let dmax = edges
            .iter()
            .fold(0.0f64, |m, &[i, j]| m.max((u[i] - u[j]).abs()));
        let floor = if dmax > 0.0 { rel_floor * dmax } else { 1.0 };
        edges
            .iter()
            .map(|&[i, j]| self.scale * self.model.edge_curvature(u[i] - u[j], floor))
            .collect()
    }

    /// Empirical Hoelder constants: for each order `m'`, the largest
    /// `|u(x) - u(y)| / (E_p(u)^{1/p} r_p^{m'/p})` over pairs in the same or
    /// adjacent order-`m'` cells.
    pub fn holder_constant_check(&self, u: &VertexField, orders: &[usize]) -> Result<HolderReport> {
        let norm = self.energy_norm(u)?;
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument(
                "Hoelder check needs a field of positive energy".into(),
            ));
        }
        let vals = u.values();
        let mut per_order = Vec::with_capacity(orders.len());
        for &order in orders {
            let groups = self.graph.same_or_adjacent_groups(order)?;
            let osc = groups
                .iter()
                .map(|grp| {
                    let (lo, hi) = grp
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &id| {
                            (lo.min(vals[id]), hi.max(vals[id]))
                        });
                    hi - lo
                })
                .fold(0.0f64, f64::max);
            let denom = norm * self.rp.powf(order as f64 / self.p());
            per_order.push((order, osc / denom));
        }
        let max_constant = per_order.iter().fold(0.0f64, |m, &(_, c)| m.max(c));
        Ok(HolderReport {
            per_order,
            max_constant,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub per_order: Vec<(usize, f64)>,
    pub max_constant: f64,
}

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{minimize_crude_energy, EnergyContext, MinimizerConfig};

/// Discrete sharp constant of `||u||_inf <= K ||u||_{E_p}` over zero-trace
/// fields at the context's level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEstimate {
    pub k: f64,
    /// Vertex attaining the maximum.
    pub argmax: usize,
    /// `K(x)` per vertex id; zero on the boundary.
    pub per_vertex: Vec<f64>,
}

/// Inverse of the interior block of the `p = 2` renormalized energy matrix
/// `scale * L`, with `L` the graph Laplacian of the cell sides.
fn p2_interior_inverse(ctx: &EnergyContext) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let g = ctx.graph();
    let interior: Vec<usize> = g.interior_ids().collect();
    let mut pos = vec![usize::MAX; g.num_vertices()];
    for (k, &id) in interior.iter().enumerate() {
        pos[id] = k;
    }
    let n = interior.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &[i, j] in g.edges() {
        let (pi, pj) = (pos[i], pos[j]);
        if pi != usize::MAX {
            a[(pi, pi)] += 1.0;
        }
        if pj != usize::MAX {
            a[(pj, pj)] += 1.0;
        }
        if pi != usize::MAX && pj != usize::MAX {
            a[(pi, pj)] -= 1.0;
            a[(pj, pi)] -= 1.0;
        }
    }
    a *= ctx.scale();
    let chol = a.cholesky().ok_or_else(|| {
        Error::InvalidArgument("interior energy matrix is not positive definite".into())
    })?;
    Ok((interior, chol.inverse()))
}

/// Sharp embedding constant at the working level. For `p = 2`,
/// `K(x)^2` is the `x`-diagonal of the inverse interior energy matrix; for
/// other `p`, `K(x) = (min { E_p(u) : u(x) = 1, u = 0 on the boundary })^{-1/p}`.
/// The estimate is the maximum over interior vertices.
pub fn estimate_embedding_k(ctx: &EnergyContext) -> Result<EmbeddingEstimate> {
    let g = ctx.graph();
    if g.level() < 1 {
        return Err(Error::InvalidArgument(
            "embedding constant needs level >= 1".into(),
        ));
    }
    let (interior, inv) = p2_interior_inverse(ctx)?;
    let n = g.num_vertices();
    let mut per_vertex = vec![0.0; n];

    if ctx.p() == 2.0 {
        for (k, &id) in interior.iter().enumerate() {
            per_vertex[id] = inv[(k, k)].sqrt();
        }
    } else {
        let p = ctx.p();
        let cfg = MinimizerConfig::default();
        let values: Vec<Result<f64>> = interior
            .par_iter()
            .enumerate()
            .map(|(k, &x)| {
                // Warm start: the p = 2 extremal, normalized to u(x) = 1.
                let mut u = vec![0.0; n];
                for (l, &id) in interior.iter().enumerate() {
                    u[id] = inv[(l, k)] / inv[(k, k)];
                }
                let mut fixed = vec![false; n];
                for b in g.boundary_ids() {
                    fixed[b] = true;
                }
                fixed[x] = true;
                u[x] = 1.0;
                let rep = minimize_crude_energy(g, ctx.model(), &mut u, &fixed, &cfg)?;
                Ok((ctx.scale() * rep.energy).powf(-1.0 / p))
            })
            .collect();
        for (&id, v) in interior.iter().zip(values) {
            per_vertex[id] = v?;
        }
    }

    let (argmax, k) = per_vertex
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, 0.0),
            |(ai, av), (i, v)| if v > av { (i, v) } else { (ai, av) },
        );
    Ok(EmbeddingEstimate {
        k,
        argmax,
        per_vertex,
    })
}

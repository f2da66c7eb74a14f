use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::gasket::{vertex_count, GasketGraph};

use super::{crude_energy_values, minimize_crude_energy, ApModel, MinimizerConfig};

/// One-level refinement using the `(2/5, 2/5, 1/5)` harmonic rule: the
/// midpoint of the side `x y` in the cell `(x, y, z)` gets
/// `(2 u(x) + 2 u(y) + u(z)) / 5`. Exact for `p = 2`; a starting guess
/// otherwise.
pub fn prolongate(coarse: &VertexField) -> Result<VertexField> {
    let fine_level = coarse.level() + 1;
    let fine = GasketGraph::standard(fine_level)?;
    let c = coarse.values();
    let mut out = vec![0.0; vertex_count(fine_level)];
    out[..c.len()].copy_from_slice(c);
    // Child i of the coarse cell r is the fine cell 3r + i; its corner j
    // (j != i) is the midpoint of coarse corners i and j.
    let coarse_graph = GasketGraph::standard(coarse.level())?;
    for (r, &[x, y, z]) in coarse_graph.cells().iter().enumerate() {
        let child = |i: usize| fine.cells()[3 * r + i];
        out[child(0)[1]] = (2.0 * c[x] + 2.0 * c[y] + c[z]) / 5.0;
        out[child(0)[2]] = (2.0 * c[x] + 2.0 * c[z] + c[y]) / 5.0;
        out[child(1)[2]] = (2.0 * c[y] + 2.0 * c[z] + c[x]) / 5.0;
    }
    VertexField::new(fine_level, out)
}

/// Energy-minimizing extension of `coarse` to `to_level`: agrees with
/// `coarse` on its vertices and minimizes the crude energy at `to_level`.
pub fn extend_field(
    model: &ApModel,
    coarse: &VertexField,
    to_level: usize,
    cfg: &MinimizerConfig,
) -> Result<VertexField> {
    if to_level < coarse.level() {
        return Err(Error::InvalidArgument(format!(
            "cannot extend level {} data to level {to_level}",
            coarse.level()
        )));
    }
    let mut field = coarse.clone();
    while field.level() < to_level {
        field = prolongate(&field)?;
    }
    if to_level == coarse.level() {
        return Ok(field);
    }
    let g = GasketGraph::standard(to_level)?;
    let n_fixed = coarse.len();
    let fixed: Vec<bool> = (0..g.num_vertices()).map(|k| k < n_fixed).collect();
    minimize_crude_energy(&g, model, field.values_mut(), &fixed, cfg)?;
    Ok(field)
}

/// p-harmonic extension of boundary data `(u(q_1), u(q_2), u(q_3))`, first
/// refined to `from_level` and then extended to `to_level`. The result
/// minimizes the level-`to_level` crude energy among fields agreeing with
/// the level-`from_level` values.
pub fn p_harmonic_extension(
    model: &ApModel,
    boundary_values: [f64; 3],
    from_level: usize,
    to_level: usize,
    cfg: &MinimizerConfig,
) -> Result<VertexField> {
    if to_level < from_level {
        return Err(Error::InvalidArgument(format!(
            "to_level {to_level} is below from_level {from_level}"
        )));
    }
    let base = VertexField::new(0, boundary_values.to_vec())?;
    let coarse = extend_field(model, &base, from_level, cfg)?;
    extend_field(model, &coarse, to_level, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpEstimate {
    /// Last successive ratio `rho_{m+1} / rho_m`.
    pub rp: f64,
    /// `|ratio_m - ratio_{m-1}|` for the last two ratios.
    pub spread: f64,
    /// Minimal crude energies `rho_0, rho_1, ...`.
    pub energies: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Boundary data for the renormalization estimate; not symmetric, so no
/// level hits a degenerate configuration.
pub const RP_BOUNDARY_DATA: [f64; 3] = [0.0, 0.5, 1.0];

/// Estimates `r_p` as the limit of successive ratios of minimal crude
/// energies of extensions of fixed boundary data.
pub fn estimate_rp(model: &ApModel, max_level: usize, tol: f64) -> Result<RpEstimate> {
    estimate_rp_with_data(model, RP_BOUNDARY_DATA, max_level, tol)
}

pub fn estimate_rp_with_data(
    model: &ApModel,
    boundary: [f64; 3],
    max_level: usize,
    tol: f64,
) -> Result<RpEstimate> {
    if max_level < 2 {
        return Err(Error::InvalidArgument(format!(
            "max_level {max_level} must be at least 2"
        )));
    }
    let cfg = MinimizerConfig::default();
    let mut field = VertexField::new(0, boundary.to_vec())?;
    let g0 = GasketGraph::standard(0)?;
    let mut energies = vec![crude_energy_values(&g0, model, field.values())];
    if !(energies[0] > 0.0) {
        return Err(Error::InvalidArgument(
            "boundary data must be non-constant".into(),
        ));
    }
    let mut ratios: Vec<f64> = Vec::new();
    let mut spread = f64::INFINITY;
    for level in 1..=max_level {
        // Minimize over all non-boundary vertices, warm-started from the
        // refined previous minimizer.
        let mut next = prolongate(&field)?;
        let g = GasketGraph::standard(level)?;
        let fixed: Vec<bool> = (0..g.num_vertices()).map(|k| g.is_boundary(k)).collect();
        let rep = minimize_crude_energy(&g, model, next.values_mut(), &fixed, &cfg)?;
        energies.push(rep.energy);
        ratios.push(rep.energy / energies[level - 1]);
        field = next;
        if ratios.len() >= 2 {
            spread = (ratios[ratios.len() - 1] - ratios[ratios.len() - 2]).abs();
            if spread < tol {
                break;
            }
        }
    }
    let rp = *ratios.last().unwrap();
    Ok(RpEstimate {
        rp,
        spread,
        energies,
        ratios,
        converged: spread < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyContext;

    #[test]
    fn p2_ratio_is_three_fifths() {
        let m = ApModel::new(2.0).unwrap();
        let est = estimate_rp(&m, 4, 1e-8).unwrap();
        assert!((est.rp - 0.6).abs() < 1e-9);
        for r in &est.ratios {
            assert!((r - 0.6).abs() < 1e-10);
        }
        let est = estimate_rp(&m, 2, 1e-8).unwrap();
        assert!((est.rp - 0.6).abs() < 1e-9);
        let est = estimate_rp_with_data(&m, [1.0, 0.0, 0.0], 3, 1e-8).unwrap();
        assert!((est.ratios[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn max_level_below_two_is_rejected() {
        let m = ApModel::new(2.0).unwrap();
        assert!(estimate_rp(&m, 1, 1e-8).is_err());
    }

    #[test]
    fn p3_ratios_settle() {
        let m = ApModel::new(3.0).unwrap();
        // The successive ratios oscillate while settling near 0.28935; the
        // spread reached at level 7 is about 4.7e-6.
        let est = estimate_rp(&m, 7, 1e-6).unwrap();
        assert!(est.rp > 0.0 && est.rp < 1.0);
        assert_eq!(est.ratios.len(), 7);
        assert!(
            est.spread < 1e-5,
            "spread {} ratios {:?}",
            est.spread,
            est.ratios
        );
        assert!((est.rp - 0.28936).abs() < 1e-4);
    }

    #[test]
    fn repeated_harmonic_extension_keeps_energy() {
        let m = ApModel::new(2.0).unwrap();
        let cfg = MinimizerConfig::default();
        for level in 0..=6 {
            let u = p_harmonic_extension(&m, [1.0, 0.0, 0.0], 0, level, &cfg).unwrap();
            let ctx = EnergyContext::new(GasketGraph::standard(level).unwrap(), m, 0.6).unwrap();
            assert!(
                (ctx.renormalized_energy(&u).unwrap() - 2.0).abs() < 1e-9,
                "level {level}"
            );
        }
    }

    #[test]
    fn prolongation_is_p2_harmonic() {
        let m = ApModel::new(2.0).unwrap();
        let coarse = VertexField::new(0, vec![0.3, -1.0, 2.0]).unwrap();
        let a = prolongate(&prolongate(&coarse).unwrap()).unwrap();
        let b = extend_field(&m, &coarse, 2, &MinimizerConfig::default()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_boundary_gives_constant_extension() {
        let m = ApModel::new(4.0).unwrap();
        let u = p_harmonic_extension(&m, [1.5; 3], 0, 3, &MinimizerConfig::default()).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.5).abs() < 1e-12));
    }

    #[test]
    fn p4_level_one_is_symmetric() {
        let m = ApModel::new(4.0).unwrap();
        let u =
            p_harmonic_extension(&m, [1.0, 0.0, 0.0], 0, 1, &MinimizerConfig::default()).unwrap();
        assert!((u.values()[3] - u.values()[4]).abs() < 1e-9);
    }
}

//! Shared setup for the criterion benchmarks.

use sgp_core::functional::{Exponents, ProblemSpec};
use sgp_core::{ApModel, EnergyContext, GasketGraph, VertexField};

/// Context at `level` with the exact `p = 2` factor or the settled `p = 3`
/// estimate.
pub fn context(level: usize, p: f64) -> EnergyContext {
    let rp = if p == 2.0 { 0.6 } else { 0.2893569450556829 };
    let g = GasketGraph::standard(level).expect("level within range");
    EnergyContext::new(g, ApModel::new(p).expect("p > 1"), rp).expect("valid context")
}

/// Unit coefficients with `lambda = gamma = t`.
pub fn unit_problem(level: usize, exps: Exponents, t: f64) -> ProblemSpec {
    let one = VertexField::constant(level, 1.0);
    ProblemSpec::new(exps, t, t, one.clone(), one.clone(), one).expect("consistent levels")
}

/// Smooth zero-trace test field.
pub fn bump(g: &GasketGraph) -> VertexField {
    let mut f = VertexField::from_fn(g, |k| {
        let [x, y] = g.vertices()[k];
        (3.0 * x).sin() * (2.0 * y + 0.5).cos()
    });
    f.zero_boundary(g);
    f
}

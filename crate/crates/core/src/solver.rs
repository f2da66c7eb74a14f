//! Minimization of the Euler functional on each branch of the Nehari
//! manifold by projected, preconditioned quasi-Newton descent with random
//! multistart.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{pcg_weighted_laplacian, prolongate, EnergyContext};
use crate::error::{Error, Result};
use crate::fibering::{
    lambda_region, Branch, Constants, FiberingDiagnostics, LambdaRegion, RootKind,
};
use crate::field::VertexField;
use crate::functional::{
    check_hypotheses, euler_functional, euler_gradient, gradient_dual_norm, ProblemSpec,
};
use crate::gasket::GasketGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub starts: usize,
    pub max_outer_iters: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub initial_step: f64,
    /// Curvature pairs kept by the quasi-Newton update; 0 gives
    /// preconditioned steepest descent.
    pub memory: usize,
    /// Stop once the weak-form residual falls below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            starts: 16,
            max_outer_iters: 5000,
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            memory: 8,
            grad_tol: 1e-6,
            seed: 20240917,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidArgument("starts must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidArgument(
                "tolerances must be positive, armijo in (0, 1)".into(),
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.initial_step > 0.0) {
            return Err(Error::InvalidArgument(
                "shrink must lie in (0, 1), initial step > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A critical point of the functional on one Nehari branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub branch: Branch,
    pub u: VertexField,
    pub v: VertexField,
    pub i_value: f64,
    /// `Phi'(1)`
    pub phi1: f64,
    /// `Phi''(1)`
    pub phi2: f64,
    pub norm_p: f64,
    pub x: f64,
    pub h: f64,
    pub grad_dual_norm: f64,
    pub iterations: usize,
    pub start_index: usize,
    pub converged: bool,
}

/// Pairs below this norm are treated as the trivial solution.
const TRIVIAL_NORM: f64 = 1e-10;

fn root_kind(branch: Branch) -> RootKind {
    match branch {
        Branch::Plus => RootKind::Plus,
        Branch::Minus => RootKind::Minus,
    }
}

/// Scales `(u, v)` onto the given branch; `None` when the fibering map has
/// no root of that kind.
pub fn project(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
    branch: Branch,
) -> Result<Option<(VertexField, VertexField, f64)>> {
    let d = match FiberingDiagnostics::compute(spec, ctx, u, v) {
        Ok(d) => d,
        Err(Error::InvalidArgument(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(d.root(root_kind(branch))
        .map(|t| (u.scaled(t), v.scaled(t), t)))
}

pub fn project_plus(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<Option<(VertexField, VertexField, f64)>> {
    project(spec, ctx, u, v, Branch::Plus)
}

pub fn project_minus(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<Option<(VertexField, VertexField, f64)>> {
    project(spec, ctx, u, v, Branch::Minus)
}

/// Builds the branch solution record at an on-manifold pair.
pub fn evaluate_solution(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    branch: Branch,
    u: VertexField,
    v: VertexField,
) -> Result<Solution> {
    let d = FiberingDiagnostics::compute(spec, ctx, &u, &v)?;
    let (gu, gv) = euler_gradient(spec, ctx, &u, &v)?;
    Ok(Solution {
        branch,
        i_value: d.phi(1.0),
        phi1: d.phi_prime(1.0),
        phi2: d.phi_double_prime(1.0),
        norm_p: d.norm_p,
        x: d.x,
        h: d.h,
        grad_dual_norm: gradient_dual_norm(ctx.graph(), &gu, &gv),
        u,
        v,
        iterations: 0,
        start_index: 0,
        converged: false,
    })
}

/// Uniform `[-1, 1]` zero-trace field.
pub fn random_zero_trace(g: &GasketGraph, rng: &mut impl Rng) -> VertexField {
    let mut f = VertexField::from_fn(g, |_| rng.gen_range(-1.0..=1.0));
    f.zero_boundary(g);
    f
}

fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Random start for one branch, with signs adjusted so the branch's
/// projection exists generically: nonnegative components where the
/// matching concave parameter is positive (plus branch), both components
/// nonnegative (minus branch).
pub fn sample_start(
    spec: &ProblemSpec,
    g: &GasketGraph,
    branch: Branch,
    rng: &mut impl Rng,
) -> (VertexField, VertexField) {
    let u = random_zero_trace(g, rng);
    let v = random_zero_trace(g, rng);
    match branch {
        Branch::Plus => {
            let u = if spec.lambda > 0.0 { u.abs() } else { u };
            let v = if spec.gamma > 0.0 { v.abs() } else { v };
            (u, v)
        }
        Branch::Minus => (u.abs(), v.abs()),
    }
}

/// `-P^{-1} g` with `P` the Hessian of `||(u,v)||^p / p`, one weighted
/// Laplacian per component.
fn preconditioned_direction(ctx: &EnergyContext, u: &VertexField, gu: &VertexField) -> VertexField {
    let g = ctx.graph();
    let n = g.num_vertices();
    let p = ctx.p();
    let weights: Vec<f64> = ctx
        .hessian_weights(u.values(), 1e-3)
        .into_iter()
        .map(|w| w / p)
        .collect();
    let free: Vec<bool> = (0..n).map(|k| !g.is_boundary(k)).collect();
    let rhs: Vec<f64> = gu.values().iter().map(|x| -x).collect();
    let d = pcg_weighted_laplacian(n, g.edges(), &weights, &free, &rhs, 1e-10, 4 * n + 50);
    VertexField::new(u.level(), d).expect("length preserved")
}

/// Limited-memory inverse-Hessian update on the stacked `(u, v)` vector,
/// with the preconditioner as the initial inverse.
struct Lbfgs {
    mem: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn new(mem: usize) -> Self {
        Self {
            mem,
            pairs: VecDeque::with_capacity(mem),
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // Curvature pairs that are not positive would break the update.
        if !(sy > 1e-300) || self.mem == 0 {
            return;
        }
        if self.pairs.len() == self.mem {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64], precondition: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy_in_place(&mut q, -a, y);
            alphas.push(a);
        }
        let mut r = precondition(&q);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &r);
            axpy_in_place(&mut r, a - b, s);
        }
        r.iter_mut().for_each(|x| *x = -*x);
        r
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy_in_place(x: &mut [f64], a: f64, y: &[f64]) {
    for (xi, yi) in x.iter_mut().zip(y) {
        *xi += a * yi;
    }
}

fn stack(u: &VertexField, v: &VertexField) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() + v.len());
    out.extend_from_slice(u.values());
    out.extend_from_slice(v.values());
    out
}

fn split(level: usize, x: &[f64]) -> (VertexField, VertexField) {
    let n = x.len() / 2;
    (
        VertexField::new(level, x[..n].to_vec()).expect("length preserved"),
        VertexField::new(level, x[n..].to_vec()).expect("length preserved"),
    )
}

fn descend(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    branch: Branch,
    cfg: &SolverConfig,
    start: (VertexField, VertexField),
    start_index: usize,
) -> Result<Option<Solution>> {
    let g = ctx.graph();
    let level = g.level();
    let Some((mut u, mut v, _)) = project(spec, ctx, &start.0, &start.1, branch)? else {
        return Ok(None);
    };
    let mut value = euler_functional(spec, ctx, &u, &v)?;
    let (mut gu, mut gv) = euler_gradient(spec, ctx, &u, &v)?;
    let mut res = gradient_dual_norm(g, &gu, &gv);
    let mut iterations = 0;
    let mut converged = res < cfg.grad_tol;
    let mut memory = Lbfgs::new(cfg.memory);
    while !converged && iterations < cfg.max_outer_iters {
        iterations += 1;
        let grad = stack(&gu, &gv);
        let precondition = |r: &[f64]| {
            let (ru, rv) = split(level, r);
            let mut out = stack(
                &preconditioned_direction(ctx, &u, &ru),
                &preconditioned_direction(ctx, &v, &rv),
            );
            out.iter_mut().for_each(|x| *x = -*x);
            out
        };
        let mut d = memory.direction(&grad, precondition);
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) && !memory.pairs.is_empty() {
            memory.clear();
            d = memory.direction(&grad, precondition);
            slope = dot(&grad, &d);
        }
        if !(slope < 0.0) {
            break;
        }
        let (du, dv) = split(level, &d);
        // Near convergence the predicted decrease drops below the
        // round-off of the functional; steps are then judged by the
        // residual, with the value allowed to move by round-off only.
        let roundoff = -slope <= 1e-12 * value.abs().max(f64::MIN_POSITIVE);
        let mut s = cfg.initial_step;
        let mut accepted = None;
        while s > 1e-14 {
            let tu = u.axpy(s, &du);
            let tv = v.axpy(s, &dv);
            if let Some((nu, nv, _)) = project(spec, ctx, &tu, &tv, branch)? {
                let nval = euler_functional(spec, ctx, &nu, &nv)?;
                let armijo_ok = nval <= value + cfg.armijo * s * slope;
                if armijo_ok || (roundoff && nval <= value + 1e-12 * value.abs()) {
                    let (ngu, ngv) = euler_gradient(spec, ctx, &nu, &nv)?;
                    let nres = gradient_dual_norm(g, &ngu, &ngv);
                    if armijo_ok || nres < res {
                        accepted = Some((nu, nv, nval, ngu, ngv, nres));
                        break;
                    }
                }
            }
            s *= cfg.shrink;
        }
        let Some((nu, nv, nval, ngu, ngv, nres)) = accepted else {
            if memory.pairs.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let step: Vec<f64> = stack(&nu, &nv)
            .iter()
            .zip(stack(&u, &v))
            .map(|(a, b)| a - b)
            .collect();
        let change: Vec<f64> = stack(&ngu, &ngv)
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        memory.push(step, change);
        (u, v, value, gu, gv, res) = (nu, nv, nval, ngu, ngv, nres);
        converged = res < cfg.grad_tol;
    }
    if ctx.pair_norm(&u, &v)? < TRIVIAL_NORM {
        return Ok(None);
    }
    let mut sol = evaluate_solution(spec, ctx, branch, u, v)?;
    sol.iterations = iterations;
    sol.start_index = start_index;
    sol.converged = converged;
    Ok(Some(sol))
}

fn sign_condition(branch: Branch) -> &'static str {
    match branch {
        Branch::Plus => {
            "plus branch needs a positive concave term (lambda a > 0 or gamma b > 0 somewhere)"
        }
        Branch::Minus => {
            "minus branch needs a positive coupling term (h > 0 where u and v overlap)"
        }
    }
}

/// Multistart minimization on one branch. The plus branch is allowed on
/// the whole of Lambda; the minus branch needs Lambda0.
pub fn minimize_branch(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    constants: &Constants,
    branch: Branch,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    let report = check_hypotheses(spec, ctx.graph(), Some(constants.kappa0))?;
    if !report.structural_pass() {
        return Err(Error::Hypothesis(report.failures().join(", ")));
    }
    let region = lambda_region(spec, constants);
    let allowed = match branch {
        Branch::Plus => region != LambdaRegion::Outside,
        Branch::Minus => region == LambdaRegion::InsideLambda0,
    };
    if !allowed {
        return Err(Error::OutsideRegion {
            lambda: spec.lambda,
            gamma: spec.gamma,
            region: if branch == Branch::Plus {
                "Lambda"
            } else {
                "Lambda0"
            },
        });
    }

    let results: Vec<Result<Option<Solution>>> = (0..cfg.starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = start_rng(cfg.seed ^ branch_salt(branch), i);
            let start = sample_start(spec, ctx.graph(), branch, &mut rng);
            descend(spec, ctx, branch, cfg, start, i)
        })
        .collect();
    let mut best: Option<Solution> = None;
    for r in results {
        if let Some(sol) = r? {
            // Strict comparison keeps the lowest start index on ties.
            if best.as_ref().is_none_or(|b| sol.i_value < b.i_value) {
                best = Some(sol);
            }
        }
    }
    best.ok_or_else(|| Error::NoAdmissibleStart(sign_condition(branch).into()))
}

fn branch_salt(branch: Branch) -> u64 {
    match branch {
        Branch::Plus => 0,
        Branch::Minus => 0x9e37_79b9_7f4a_7c15,
    }
}

/// Both branch minimizers.
pub fn solve_system(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    constants: &Constants,
    cfg: &SolverConfig,
) -> Result<(Solution, Solution)> {
    let plus = minimize_branch(spec, ctx, constants, Branch::Plus, cfg)?;
    let minus = minimize_branch(spec, ctx, constants, Branch::Minus, cfg)?;
    Ok((plus, minus))
}

/// Scales `t_eps` of the perturbed pairs `(u + eps w1, v + eps w2)` for one
/// direction, over the halving sequence of `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTrace {
    pub eps: Vec<f64>,
    /// `t_eps` for `+eps` and `-eps`; `None` where no root exists.
    pub t_plus: Vec<Option<f64>>,
    pub t_minus: Vec<Option<f64>>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub traces: Vec<PerturbationTrace>,
    pub pass: bool,
}

/// `eps = 1e-2 / 2^k` down to about `1e-5`.
pub fn perturbation_eps() -> Vec<f64> {
    (0..=10).map(|k| 1e-2 / f64::from(1u32 << k)).collect()
}

fn strictly_shrinking(dev: &[Option<f64>]) -> bool {
    dev.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b < a || (a < 1e-12 && b < 1e-12),
        _ => false,
    }) && dev.iter().all(Option::is_some)
}

/// Direction family for the perturbation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub directions: usize,
    pub seed: u64,
    /// Directions are uniform random zero-trace data on this level,
    /// extended to the working level by harmonic refinement.
    pub coarse_level: usize,
    /// `||(w1, w2)||` as a fraction of `||(u, v)||`.
    pub relative_size: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            directions: 10,
            seed: 11,
            coarse_level: 1,
            relative_size: 0.1,
        }
    }
}

/// Random zero-trace data on `coarse_level`, refined to the level of `g`.
pub fn random_smooth_direction(
    g: &GasketGraph,
    coarse_level: usize,
    rng: &mut impl Rng,
) -> Result<VertexField> {
    if coarse_level == 0 || coarse_level > g.level() {
        return Err(Error::InvalidArgument(format!(
            "coarse level {coarse_level} must lie in 1..={}",
            g.level()
        )));
    }
    let mut f = random_zero_trace(&GasketGraph::standard(coarse_level)?, rng);
    while f.level() < g.level() {
        f = prolongate(&f)?;
    }
    Ok(f)
}

/// For random directions, checks that the branch root of the perturbed
/// pair exists and `|t_eps - 1|` decreases as `eps` halves.
///
/// `t_eps - 1` is `a eps + O(eps^(min(q, 2)))`; rough or large directions
/// put the window inside the regime where the higher-order terms still
/// compete with the linear one, which is why directions are smooth and
/// scaled relative to the solution.
pub fn perturbation_check(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    sol: &Solution,
    cfg: &PerturbationConfig,
) -> Result<PerturbationReport> {
    let g = ctx.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = perturbation_eps();
    let size = ctx.pair_norm(&sol.u, &sol.v)?;
    let mut traces = Vec::with_capacity(cfg.directions);
    for _ in 0..cfg.directions {
        let w1 = random_smooth_direction(g, cfg.coarse_level, &mut rng)?;
        let w2 = random_smooth_direction(g, cfg.coarse_level, &mut rng)?;
        let wn = ctx.pair_norm(&w1, &w2)?;
        if !(wn > 0.0) {
            return Err(Error::InvalidArgument(
                "perturbation direction has zero energy".into(),
            ));
        }
        let c = cfg.relative_size * size / wn;
        let (w1, w2) = (w1.scaled(c), w2.scaled(c));
        let mut t_plus = Vec::new();
        let mut t_minus = Vec::new();
        for &e in &eps {
            for (sign, out) in [(1.0, &mut t_plus), (-1.0, &mut t_minus)] {
                let pu = sol.u.axpy(sign * e, &w1);
                let pv = sol.v.axpy(sign * e, &w2);
                out.push(project(spec, ctx, &pu, &pv, sol.branch)?.map(|(_, _, t)| t));
            }
        }
        let dev = |ts: &[Option<f64>]| {
            ts.iter()
                .map(|t| t.map(|t| (t - 1.0).abs()))
                .collect::<Vec<_>>()
        };
        let monotone = strictly_shrinking(&dev(&t_plus)) && strictly_shrinking(&dev(&t_minus));
        traces.push(PerturbationTrace {
            eps: eps.clone(),
            t_plus,
            t_minus,
            monotone,
        });
    }
    let pass = traces.iter().all(|t| t.monotone);
    Ok(PerturbationReport { traces, pass })
}

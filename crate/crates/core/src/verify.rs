//! Checks binding solver output to the inequalities that separate the two
//! solution branches, collected in a serializable certificate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyContext, HolderReport};
use crate::error::{Error, Result};
use crate::fibering::{
    classify_scalars, lambda_region, Branch, Constants, FiberingDiagnostics, LambdaRegion,
    NehariClass,
};
use crate::field::VertexField;
use crate::functional::{
    check_hypotheses, euler_gradient, gradient_dual_norm, ray_scalars, HypothesisReport,
    ProblemSpec,
};
use crate::solver::{project, sample_start, Solution};

/// Largest weak-form defect of the pair against the interior coordinate
/// test functions (mass-normalized).
pub fn weak_residual(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<f64> {
    let (gu, gv) = euler_gradient(spec, ctx, u, v)?;
    Ok(gradient_dual_norm(ctx.graph(), &gu, &gv))
}

/// Relative band for `Phi'(1)` that counts as on the manifold.
pub const ON_MANIFOLD_RTOL: f64 = 1e-8;
/// Absolute margin required of every strict inequality.
pub const MARGIN: f64 = 1e-10;

/// `(X - (a+b-p)/(a+b-q) N, H - (p-q)/(a+b-q) N)`: the plus branch needs the
/// first positive, the minus branch the second.
pub fn branch_margins(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<(f64, f64)> {
    let s = ray_scalars(spec, ctx, u, v)?;
    let d = FiberingDiagnostics::from_scalars(spec.exps, s)?;
    if d.phi_prime(1.0).abs() > ON_MANIFOLD_RTOL * s.norm_p {
        return Err(Error::InvalidArgument(format!(
            "pair is off the Nehari manifold (Phi'(1) = {:e})",
            d.phi_prime(1.0)
        )));
    }
    Ok(margins_from(spec, s.norm_p, s.x, s.h))
}

fn margins_from(spec: &ProblemSpec, n: f64, x: f64, h: f64) -> (f64, f64) {
    let e = &spec.exps;
    let ab = e.ab();
    (
        x - (ab - e.p) / (ab - e.q) * n,
        h - (e.p - e.q) / (ab - e.q) * n,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    /// Residual threshold; normally the solver's `grad_tol`.
    pub grad_tol: f64,
    /// Random pairs projected onto both branches for the sampled checks.
    pub samples: usize,
    pub seed: u64,
    /// Cap on the empirical Hoelder constants of the solution components.
    pub holder_cap: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            samples: 200,
            seed: 7,
            holder_cap: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub branch: Branch,
    pub i_value: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub norm_p: f64,
    pub x: f64,
    pub h: f64,
    pub grad_dual_norm: f64,
    pub converged: bool,
    pub branch_margin: f64,
    /// Relative defects of the two Nehari identities for `I`.
    pub identity_defects: [f64; 2],
    pub residual_pass: bool,
    pub on_manifold_pass: bool,
    pub sign_pass: bool,
    pub branch_margin_pass: bool,
    pub identity_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEcho {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub level: usize,
    pub rp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub spec: SpecEcho,
    pub constants: Constants,
    pub hypotheses: HypothesisReport,
    pub region: LambdaRegion,
    pub config: CertifyConfig,
    pub plus: BranchReport,
    pub minus: BranchReport,
    /// `I+ < 0`
    pub plus_negative: bool,
    /// `d0 > 0`
    pub d0_positive: bool,
    /// `I- > d0`
    pub minus_above_d0: bool,
    /// `||(u-, v-)|| >= minus_radius`
    pub minus_radius_pass: bool,
    pub degeneracy_min_abs_phi2: f64,
    pub degeneracy_zero_count: usize,
    pub degeneracy_pass: bool,
    /// Smallest `I - lower bound` over sampled Nehari points, relative to
    /// the bound's scale.
    pub coercivity_min_margin: f64,
    pub coercivity_pass: bool,
    pub holder_reports: Vec<HolderReport>,
    pub holder_pass: bool,
    /// Largest `sup|f| / (K ||f||)` over the solution components.
    pub embedding_max_ratio: f64,
    pub embedding_pass: bool,
    pub pass: bool,
}

impl Certificate {
    /// Names of the failed items.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.hypotheses.all_pass() {
            out.extend(self.hypotheses.failures().into_iter().map(String::from));
        }
        for b in [&self.plus, &self.minus] {
            let name = match b.branch {
                Branch::Plus => "plus",
                Branch::Minus => "minus",
            };
            for (ok, what) in [
                (b.residual_pass, "weak residual"),
                (b.on_manifold_pass, "on-manifold"),
                (b.sign_pass, "branch sign"),
                (b.branch_margin_pass, "Nehari branch margin"),
                (b.identity_pass, "Nehari identities"),
            ] {
                if !ok {
                    out.push(format!("{name} {what}"));
                }
            }
        }
        for (ok, what) in [
            (self.plus_negative, "I+ < 0"),
            (self.d0_positive, "d0 > 0"),
            (self.minus_above_d0, "I- > d0"),
            (self.minus_radius_pass, "minus branch radius"),
            (self.degeneracy_pass, "no degenerate Nehari points"),
            (self.coercivity_pass, "coercivity bound"),
            (self.holder_pass, "Hoelder constants"),
            (self.embedding_pass, "embedding bound"),
        ] {
            if !ok {
                out.push(what.to_string());
            }
        }
        out
    }

    /// Recomputes every pass flag from the recorded numbers.
    pub fn recompute_flags(&mut self) {
        let tol = self.config.grad_tol;
        for b in [&mut self.plus, &mut self.minus] {
            b.residual_pass = b.grad_dual_norm <= tol;
            b.on_manifold_pass = b.phi1.abs() <= ON_MANIFOLD_RTOL * b.norm_p;
            b.sign_pass = match b.branch {
                Branch::Plus => b.phi2 > 0.0,
                Branch::Minus => b.phi2 < 0.0,
            };
            b.branch_margin_pass = b.branch_margin > MARGIN;
            b.identity_pass = b.identity_defects.iter().all(|d| *d <= 1e-8);
        }
        self.plus_negative = self.plus.i_value < -MARGIN;
        self.d0_positive = self.constants.d0 > MARGIN;
        self.minus_above_d0 = self.minus.i_value - self.constants.d0 > MARGIN;
        self.minus_radius_pass =
            self.minus.norm_p.powf(1.0 / self.spec.p) >= self.constants.minus_radius;
        self.degeneracy_pass =
            self.degeneracy_zero_count == 0 && self.degeneracy_min_abs_phi2 > 0.0;
        self.coercivity_pass = self.coercivity_min_margin >= -1e-10;
        self.holder_pass = self
            .holder_reports
            .iter()
            .all(|r| r.max_constant.is_finite() && r.max_constant <= self.config.holder_cap);
        self.embedding_pass = self.embedding_max_ratio <= 1.0 + 1e-8;
        self.pass = self.hypotheses.all_pass()
            && [&self.plus, &self.minus].iter().all(|b| {
                b.residual_pass
                    && b.on_manifold_pass
                    && b.sign_pass
                    && b.branch_margin_pass
                    && b.identity_pass
            })
            && self.plus_negative
            && self.d0_positive
            && self.minus_above_d0
            && self.minus_radius_pass
            && self.degeneracy_pass
            && self.coercivity_pass
            && self.holder_pass
            && self.embedding_pass;
    }
}

fn branch_report(spec: &ProblemSpec, ctx: &EnergyContext, sol: &Solution) -> Result<BranchReport> {
    let s = ray_scalars(spec, ctx, &sol.u, &sol.v)?;
    let d = FiberingDiagnostics::from_scalars(spec.exps, s)?;
    let i_value = d.phi(1.0);
    let (m1, m2) = margins_from(spec, s.norm_p, s.x, s.h);
    let e = &spec.exps;
    let ab = e.ab();
    let via_x = (1.0 / e.p - 1.0 / ab) * s.norm_p - (1.0 / e.q - 1.0 / ab) * s.x;
    let via_h = (1.0 / e.p - 1.0 / e.q) * s.norm_p + (1.0 / e.q - 1.0 / ab) * s.h;
    let rel = |a: f64| (a - i_value).abs() / i_value.abs().max(f64::MIN_POSITIVE);
    Ok(BranchReport {
        branch: sol.branch,
        i_value,
        phi1: d.phi_prime(1.0),
        phi2: d.phi_double_prime(1.0),
        norm_p: s.norm_p,
        x: s.x,
        h: s.h,
        grad_dual_norm: weak_residual(spec, ctx, &sol.u, &sol.v)?,
        converged: sol.converged,
        branch_margin: match sol.branch {
            Branch::Plus => m1,
            Branch::Minus => m2,
        },
        identity_defects: [rel(via_x), rel(via_h)],
        residual_pass: false,
        on_manifold_pass: false,
        sign_pass: false,
        branch_margin_pass: false,
        identity_pass: false,
    })
}

/// Minimum of `|Phi''(1)| / N`, the count of degenerate classifications,
/// and the smallest coercivity margin over random pairs projected onto
/// both branches.
pub fn sample_nehari_points(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    constants: &Constants,
    samples: usize,
    seed: u64,
) -> Result<(f64, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = &spec.exps;
    let ab = e.ab();
    let size = spec.lambda.abs() * constants.a_l1 + spec.gamma.abs() * constants.b_l1;
    let mut min_phi2 = f64::INFINITY;
    let mut zeros = 0;
    let mut min_margin = f64::INFINITY;
    for _ in 0..samples {
        let (u, v) = sample_start(spec, ctx.graph(), Branch::Minus, &mut rng);
        for branch in [Branch::Plus, Branch::Minus] {
            let Some((pu, pv, _)) = project(spec, ctx, &u, &v, branch)? else {
                continue;
            };
            let s = ray_scalars(spec, ctx, &pu, &pv)?;
            let class = classify_scalars(spec.exps, s, ON_MANIFOLD_RTOL)?;
            if class == NehariClass::MZero {
                zeros += 1;
            }
            let d = FiberingDiagnostics::from_scalars(spec.exps, s)?;
            min_phi2 = min_phi2.min(d.phi_double_prime(1.0).abs() / s.norm_p);
            // Coercivity lower bound with the norms of the components.
            let nu = ctx.energy_norm(&pu)?;
            let nv = ctx.energy_norm(&pv)?;
            let lead = (1.0 / e.p - 1.0 / ab) * s.norm_p;
            let tail = (1.0 / e.q - 1.0 / ab) * constants.k.powf(e.q) * size * (nu + nv).powf(e.q);
            let bound = lead - tail;
            let scale = lead.abs().max(tail.abs()).max(f64::MIN_POSITIVE);
            min_margin = min_margin.min((d.phi(1.0) - bound) / scale);
        }
    }
    Ok((min_phi2, zeros, min_margin))
}

pub fn certify(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    constants: &Constants,
    plus: &Solution,
    minus: &Solution,
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    let g = ctx.graph();
    let hypotheses = check_hypotheses(spec, g, Some(constants.kappa0))?;
    let (degeneracy_min_abs_phi2, degeneracy_zero_count, coercivity_min_margin) =
        sample_nehari_points(spec, ctx, constants, cfg.samples, cfg.seed)?;
    let orders: Vec<usize> = (0..=g.level()).collect();
    let mut holder_reports = Vec::new();
    let mut embedding_max_ratio = 0.0f64;
    for f in [&plus.u, &plus.v, &minus.u, &minus.v] {
        let norm = ctx.energy_norm(f)?;
        if norm > 0.0 {
            holder_reports.push(ctx.holder_constant_check(f, &orders)?);
            embedding_max_ratio = embedding_max_ratio.max(f.sup_norm() / (constants.k * norm));
        }
    }
    let mut cert = Certificate {
        spec: SpecEcho {
            p: spec.exps.p,
            q: spec.exps.q,
            alpha: spec.exps.alpha,
            beta: spec.exps.beta,
            lambda: spec.lambda,
            gamma: spec.gamma,
            level: g.level(),
            rp: ctx.rp(),
        },
        constants: constants.clone(),
        hypotheses,
        region: lambda_region(spec, constants),
        config: cfg.clone(),
        plus: branch_report(spec, ctx, plus)?,
        minus: branch_report(spec, ctx, minus)?,
        plus_negative: false,
        d0_positive: false,
        minus_above_d0: false,
        minus_radius_pass: false,
        degeneracy_min_abs_phi2,
        degeneracy_zero_count,
        degeneracy_pass: false,
        coercivity_min_margin,
        coercivity_pass: false,
        holder_reports,
        holder_pass: false,
        embedding_max_ratio,
        embedding_pass: false,
        pass: false,
    };
    cert.recompute_flags();
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ApModel;
    use crate::fibering::{compute_constants, constants_with_k};
    use crate::functional::Exponents;
    use crate::gasket::GasketGraph;
    use crate::solver::{solve_system, SolverConfig};

    fn setup(level: usize) -> (ProblemSpec, EnergyContext, Constants) {
        let g = GasketGraph::standard(level).unwrap();
        let ctx = EnergyContext::new(g, ApModel::new(2.0).unwrap(), 0.6).unwrap();
        let one = VertexField::constant(level, 1.0);
        let base = ProblemSpec::new(
            Exponents::standard(),
            0.0,
            0.0,
            one.clone(),
            one.clone(),
            one,
        )
        .unwrap();
        let c0 = compute_constants(&base, &ctx).unwrap();
        let lam = 0.6 * c0.kappa0 / (c0.a_l1 + c0.b_l1);
        let spec = base.with_parameters(lam, lam);
        let c = constants_with_k(&spec, &ctx, c0.k).unwrap();
        (spec, ctx, c)
    }

    #[test]
    fn zero_pair_has_zero_residual() {
        let (spec, ctx, _) = setup(2);
        let z = VertexField::zeros(2);
        assert_eq!(weak_residual(&spec, &ctx, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn healthy_run_certifies_and_noise_breaks_it() {
        let (spec, ctx, c) = setup(3);
        let cfg = SolverConfig {
            starts: 4,
            ..SolverConfig::default()
        };
        let (plus, minus) = solve_system(&spec, &ctx, &c, &cfg).unwrap();
        let ccfg = CertifyConfig {
            samples: 50,
            ..CertifyConfig::default()
        };
        let cert = certify(&spec, &ctx, &c, &plus, &minus, &ccfg).unwrap();
        assert!(cert.pass, "{:?}", cert.failures());
        assert!(cert.plus.i_value < 0.0 && cert.minus.i_value > cert.constants.d0);

        let mut flags = cert.clone();
        flags.recompute_flags();
        assert_eq!(flags, cert);
        let again = certify(&spec, &ctx, &c, &plus, &minus, &ccfg).unwrap();
        assert_eq!(again, cert);

        // A random non-critical pair has a large residual.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (u, v) = sample_start(&spec, ctx.graph(), Branch::Minus, &mut rng);
        assert!(weak_residual(&spec, &ctx, &u, &v).unwrap() > 1e3 * ccfg.grad_tol);

        let mut noisy = plus.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = crate::solver::random_zero_trace(ctx.graph(), &mut rng);
        noisy.u = noisy.u.axpy(1e-2, &noise);
        let bad = certify(&spec, &ctx, &c, &noisy, &minus, &ccfg).unwrap();
        assert!(!bad.plus.residual_pass && !bad.pass);
        assert!(bad.failures().iter().any(|f| f == "plus weak residual"));
    }

    #[test]
    fn margins_vanish_at_a_tangent_point() {
        let (spec, ctx, _) = setup(2);
        let g = ctx.graph();
        let mut u = VertexField::from_fn(g, |k| 1.0 + (k as f64 * 0.7).sin());
        u.zero_boundary(g);
        let v = u.clone();
        let s0 = ray_scalars(&spec.with_parameters(1.0, 1.0), &ctx, &u, &v).unwrap();
        let e = spec.exps;
        let ab = e.ab();
        // Scale so that H = (p-q)/(a+b-q) N, then pick lambda = gamma so
        // that X = (a+b-p)/(a+b-q) N: both Phi'(1) and Phi''(1) vanish.
        let c2 = (e.p - e.q) / (ab - e.q);
        let c1 = (ab - e.p) / (ab - e.q);
        let s = (c2 * s0.norm_p / s0.h).powf(1.0 / (ab - e.p));
        let n = s0.norm_p * s.powf(e.p);
        let lam = c1 * n / (s0.x * s.powf(e.q));
        let tangent = spec.with_parameters(lam, lam);
        let (m1, m2) = branch_margins(&tangent, &ctx, &u.scaled(s), &v.scaled(s)).unwrap();
        assert!(m1.abs() < 1e-12 * n && m2.abs() < 1e-12 * n);
        let d = FiberingDiagnostics::compute(&tangent, &ctx, &u.scaled(s), &v.scaled(s)).unwrap();
        assert!(d.is_tangent());
        assert!(branch_margins(&tangent, &ctx, &u, &v).is_err());
    }
}

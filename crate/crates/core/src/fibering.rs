//! Fibering maps `t -> I(tu, tv)`, Nehari root finding and classification,
//! and the explicit constants bounding the admissible parameter region.

use serde::{Deserialize, Serialize};

use crate::energy::{estimate_embedding_k, EnergyContext};
use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::functional::{l1_norm, ray_scalars, Exponents, ProblemSpec, RayScalars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Local minimum of the fibering map.
    Plus,
    /// Local maximum of the fibering map.
    Minus,
}

/// Sign pattern of the concave term `X` and the coupling term `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberingCase {
    /// `X <= 0, H <= 0`: the fibering map increases; no root.
    NoneIncreasing,
    /// `X <= 0, H > 0`: one root, a local maximum.
    MaxOnly,
    /// `X > 0, H <= 0`: one root, a local minimum.
    MinOnly,
    /// `X > 0, H > 0`: two roots when `X < M(t_max)`.
    MinAndMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    Plus,
    Minus,
    /// Tangency `X = M(t_max)`: a double root at `t_max`.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariRoot {
    pub t: f64,
    pub kind: RootKind,
}

/// Geometry of the fibering map of one pair, from its three ray scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberingDiagnostics {
    pub exps: Exponents,
    pub norm_p: f64,
    pub x: f64,
    pub h: f64,
    pub t_max: Option<f64>,
    pub m_at_tmax: Option<f64>,
    /// Positive roots of `M(t) = X`, in increasing order.
    pub roots: Vec<NehariRoot>,
    pub case: FiberingCase,
}

/// Relative width within which `X` and `M(t_max)` count as equal.
const TANGENCY_RTOL: f64 = 1e-12;

impl FiberingDiagnostics {
    pub fn from_scalars(exps: Exponents, s: RayScalars) -> Result<Self> {
        if !(s.norm_p > 0.0) {
            return Err(Error::InvalidArgument(
                "fibering map needs a pair of positive energy".into(),
            ));
        }
        if !exps.ordered() {
            return Err(Error::Hypothesis("H1 (1 < q < p < alpha + beta)".into()));
        }
        let mut d = Self {
            exps,
            norm_p: s.norm_p,
            x: s.x,
            h: s.h,
            t_max: None,
            m_at_tmax: None,
            roots: Vec::new(),
            case: match (s.x > 0.0, s.h > 0.0) {
                (false, false) => FiberingCase::NoneIncreasing,
                (false, true) => FiberingCase::MaxOnly,
                (true, false) => FiberingCase::MinOnly,
                (true, true) => FiberingCase::MinAndMax,
            },
        };
        if s.h > 0.0 {
            let e = &exps;
            let tm = ((e.p - e.q) * s.norm_p / ((e.ab() - e.q) * s.h)).powf(1.0 / (e.ab() - e.p));
            d.t_max = Some(tm);
            d.m_at_tmax = Some(d.m(tm));
        }
        d.roots = d.find_roots()?;
        Ok(d)
    }

    pub fn compute(
        spec: &ProblemSpec,
        ctx: &EnergyContext,
        u: &VertexField,
        v: &VertexField,
    ) -> Result<Self> {
        Self::from_scalars(spec.exps, ray_scalars(spec, ctx, u, v)?)
    }

    fn check_t(t: f64) {
        debug_assert!(t > 0.0, "fibering maps are defined for t > 0");
    }

    /// `Phi(t) = t^p N / p - t^q X / q - t^(a+b) H / (a+b)`
    pub fn phi(&self, t: f64) -> f64 {
        Self::check_t(t);
        let e = &self.exps;
        t.powf(e.p) * self.norm_p / e.p
            - t.powf(e.q) * self.x / e.q
            - t.powf(e.ab()) * self.h / e.ab()
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        Self::check_t(t);
        let e = &self.exps;
        t.powf(e.p - 1.0) * self.norm_p - t.powf(e.q - 1.0) * self.x - t.powf(e.ab() - 1.0) * self.h
    }

    pub fn phi_double_prime(&self, t: f64) -> f64 {
        Self::check_t(t);
        let e = &self.exps;
        (e.p - 1.0) * t.powf(e.p - 2.0) * self.norm_p
            - (e.q - 1.0) * t.powf(e.q - 2.0) * self.x
            - (e.ab() - 1.0) * t.powf(e.ab() - 2.0) * self.h
    }

    /// `M(t) = t^(p-q) N - t^(a+b-q) H`; `Phi'(t) = t^(q-1) (M(t) - X)`.
    pub fn m(&self, t: f64) -> f64 {
        Self::check_t(t);
        let e = &self.exps;
        t.powf(e.p - e.q) * self.norm_p - t.powf(e.ab() - e.q) * self.h
    }

    pub fn m_prime(&self, t: f64) -> f64 {
        Self::check_t(t);
        let e = &self.exps;
        (e.p - e.q) * t.powf(e.p - e.q - 1.0) * self.norm_p
            - (e.ab() - e.q) * t.powf(e.ab() - e.q - 1.0) * self.h
    }

    /// Root of the given kind, if present.
    pub fn root(&self, kind: RootKind) -> Option<f64> {
        self.roots.iter().find(|r| r.kind == kind).map(|r| r.t)
    }

    pub fn is_tangent(&self) -> bool {
        self.roots.iter().any(|r| r.kind == RootKind::Degenerate)
    }

    fn find_roots(&self) -> Result<Vec<NehariRoot>> {
        let x = self.x;
        match (self.case, self.t_max) {
            (FiberingCase::NoneIncreasing, _) => Ok(Vec::new()),
            (FiberingCase::MinOnly, _) => {
                // M increases from 0 to infinity.
                let hi = grow_until(1.0, |t| self.m(t) >= x)?;
                let t = bisect(|t| self.m(t) - x, 0.0, hi, true);
                Ok(vec![NehariRoot {
                    t,
                    kind: RootKind::Plus,
                }])
            }
            (FiberingCase::MaxOnly, Some(tm)) => {
                // M rises to M(t_max) > 0 >= X and then falls to -infinity.
                let hi = grow_until(2.0 * tm, |t| self.m(t) <= x)?;
                let t = bisect(|t| self.m(t) - x, tm, hi, false);
                Ok(vec![NehariRoot {
                    t,
                    kind: RootKind::Minus,
                }])
            }
            (FiberingCase::MinAndMax, Some(tm)) => {
                let peak = self.m_at_tmax.unwrap_or(0.0);
                if (x - peak).abs() <= TANGENCY_RTOL * peak.abs().max(x.abs()) {
                    return Ok(vec![NehariRoot {
                        t: tm,
                        kind: RootKind::Degenerate,
                    }]);
                }
                if x > peak {
                    return Ok(Vec::new());
                }
                let t0 = bisect(|t| self.m(t) - x, 0.0, tm, true);
                let hi = grow_until(2.0 * tm, |t| self.m(t) <= x)?;
                let t1 = bisect(|t| self.m(t) - x, tm, hi, false);
                Ok(vec![
                    NehariRoot {
                        t: t0,
                        kind: RootKind::Plus,
                    },
                    NehariRoot {
                        t: t1,
                        kind: RootKind::Minus,
                    },
                ])
            }
            (_, None) => unreachable!("t_max exists whenever H > 0"),
        }
    }

    /// Lower bound on `M(t_max)` from the embedding constant:
    /// `||(u,v)||^q c^((p-q)/(a+b-p)) (a+b-p)/(a+b-q) (1/(||h||_1 K^(a+b)))^((p-q)/(a+b-p))`
    /// with `c = (p-q)/(a+b-q)`.
    pub fn m_tmax_lower_bound(&self, k: f64, h_l1: f64) -> f64 {
        let e = &self.exps;
        let ab = e.ab();
        let expo = (e.p - e.q) / (ab - e.p);
        self.norm_p.powf(e.q / e.p)
            * ((e.p - e.q) / (ab - e.q)).powf(expo)
            * ((ab - e.p) / (ab - e.q))
            * (1.0 / (h_l1 * k.powf(ab))).powf(expo)
    }
}

/// Doubles `t` until `pred` holds.
fn grow_until(mut t: f64, pred: impl Fn(f64) -> bool) -> Result<f64> {
    for _ in 0..2100 {
        if pred(t) {
            return Ok(t);
        }
        t *= 2.0;
        if !t.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "Nehari root bracket",
        iterations: 2100,
        residual: f64::NAN,
    })
}

/// Bisection for a sign change of `f` on `(lo, hi]`; `increasing` states
/// whether `f` goes from negative to positive. Runs to floating-point
/// resolution, well below the 1e-12 relative target.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, increasing: bool) -> f64 {
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = if increasing {
            f(mid) < 0.0
        } else {
            f(mid) > 0.0
        };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        hi
    } else {
        // Pick whichever end has the smaller residual.
        if f(lo).abs() < f(hi).abs() {
            lo
        } else {
            hi
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NehariClass {
    MPlus,
    MZero,
    MMinus,
    OffManifold,
}

/// Classifies a pair by `Phi'(1)` and `Phi''(1)`, each compared with
/// `tol * ||(u,v)||^p`.
pub fn classify_scalars(exps: Exponents, s: RayScalars, tol: f64) -> Result<NehariClass> {
    let d = FiberingDiagnostics::from_scalars(exps, s)?;
    let band = tol * d.norm_p;
    if d.phi_prime(1.0).abs() > band {
        return Ok(NehariClass::OffManifold);
    }
    let c = d.phi_double_prime(1.0);
    Ok(if c.abs() <= band {
        NehariClass::MZero
    } else if c > 0.0 {
        NehariClass::MPlus
    } else {
        NehariClass::MMinus
    })
}

pub fn classify(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
    tol: f64,
) -> Result<NehariClass> {
    classify_scalars(spec.exps, ray_scalars(spec, ctx, u, v)?, tol)
}

/// Embedding constant and the derived parameter bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub k: f64,
    /// Bound on `|lambda| ||a||_1 + |gamma| ||b||_1` under which no pair is
    /// degenerate.
    pub kappa: f64,
    /// `(q/p) kappa`: bound under which the minus branch stays above `d0`.
    pub kappa0: f64,
    /// Lower bound for the functional on the minus branch.
    pub d0: f64,
    /// Lower bound for `||(u,v)||` on the minus branch.
    pub minus_radius: f64,
    pub a_l1: f64,
    pub b_l1: f64,
    pub h_l1: f64,
}

/// Constants from a given embedding constant `k`.
pub fn constants_with_k(spec: &ProblemSpec, ctx: &EnergyContext, k: f64) -> Result<Constants> {
    let g = ctx.graph();
    let a_l1 = l1_norm(g, &spec.a)?;
    let b_l1 = l1_norm(g, &spec.b)?;
    let h_l1 = l1_norm(g, &spec.h)?;
    if !(h_l1 > 0.0) {
        return Err(Error::ZeroCoupling);
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "embedding constant {k} must be positive"
        )));
    }
    let e = &spec.exps;
    if !e.ordered() {
        return Err(Error::Hypothesis("H1 (1 < q < p < alpha + beta)".into()));
    }
    let (p, q, ab) = (e.p, e.q, e.ab());
    let minus_radius = ((p - q) / (ab - q) / (k.powf(ab) * h_l1)).powf(1.0 / (ab - p));
    let kappa = (ab - p) / (ab - q) * k.powf(-q) * minus_radius.powf(p - q);
    let kappa0 = q / p * kappa;
    let size = spec.lambda.abs() * a_l1 + spec.gamma.abs() * b_l1;
    let d0 = minus_radius.powf(q)
        * ((1.0 / p - 1.0 / ab) * minus_radius.powf(p - q)
            - (1.0 / q - 1.0 / ab) * k.powf(q) * size);
    Ok(Constants {
        k,
        kappa,
        kappa0,
        d0,
        minus_radius,
        a_l1,
        b_l1,
        h_l1,
    })
}

/// Constants with `K` estimated on the working level.
pub fn compute_constants(spec: &ProblemSpec, ctx: &EnergyContext) -> Result<Constants> {
    let k = estimate_embedding_k(ctx)?.k;
    constants_with_k(spec, ctx, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRegion {
    InsideLambda0,
    InsideLambdaOnly,
    Outside,
}

fn region_of(size: f64, c: &Constants) -> LambdaRegion {
    if size < c.kappa0 {
        LambdaRegion::InsideLambda0
    } else if size < c.kappa {
        LambdaRegion::InsideLambdaOnly
    } else {
        LambdaRegion::Outside
    }
}

/// Membership from `|lambda| ||a||_1 + |gamma| ||b||_1`.
pub fn lambda_region(spec: &ProblemSpec, c: &Constants) -> LambdaRegion {
    region_of(spec.lambda.abs() * c.a_l1 + spec.gamma.abs() * c.b_l1, c)
}

/// Membership from `lambda ||a||_1 + gamma ||b||_1` without absolute values.
pub fn lambda_region_signed(spec: &ProblemSpec, c: &Constants) -> LambdaRegion {
    region_of(spec.lambda * c.a_l1 + spec.gamma * c.b_l1, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ApModel;
    use crate::gasket::GasketGraph;

    fn diag(norm_p: f64, x: f64, h: f64) -> FiberingDiagnostics {
        FiberingDiagnostics::from_scalars(Exponents::standard(), RayScalars { norm_p, x, h })
            .unwrap()
    }

    #[test]
    fn m_function_and_t_max() {
        let d = diag(1.0, 0.2, 1.0);
        for t in [0.1, 0.5, 2.0] {
            assert!((d.m(t) - (t.sqrt() - t.powf(1.5))).abs() < 1e-15);
        }
        let tm = d.t_max.unwrap();
        assert!((tm - 1.0 / 3.0).abs() < 1e-15);
        assert!(d.m_prime(tm).abs() < 1e-12);
        assert!(d.m_prime(tm * 0.99) > 0.0 && d.m_prime(tm * 1.01) < 0.0);
        // Scaling the pair by s scales t_max by 1/s.
        let s: f64 = 2.5;
        let ds = diag(s.powi(2), 0.2, s.powi(3));
        assert!((ds.t_max.unwrap() - tm / s).abs() < 1e-14);
    }

    #[test]
    fn two_roots_of_scalar_equation() {
        let d = diag(1.0, 0.2, 1.0);
        assert_eq!(d.case, FiberingCase::MinAndMax);
        let t0 = d.root(RootKind::Plus).unwrap();
        let t1 = d.root(RootKind::Minus).unwrap();
        // Independent oracle: sqrt(t)(1 - t) = 0.2 by Newton from either side.
        let newton = |mut t: f64| {
            for _ in 0..100 {
                let f = t.sqrt() * (1.0 - t) - 0.2;
                let df = 0.5 / t.sqrt() - 1.5 * t.sqrt();
                t -= f / df;
            }
            t
        };
        assert!((t0 - newton(0.04)).abs() < 1e-12);
        assert!((t1 - newton(0.8)).abs() < 1e-12);
        assert!((t0 - 0.0438).abs() < 1e-4 && (t1 - 0.7725).abs() < 1e-4);
        assert!(t0 < d.t_max.unwrap() && d.t_max.unwrap() < t1);
        assert!(d.m_prime(t0) > 0.0 && d.m_prime(t1) < 0.0);
        assert!(d.phi_double_prime(t0) > 0.0 && d.phi_double_prime(t1) < 0.0);
    }

    #[test]
    fn single_root_cases() {
        let d = diag(1.0, -1.0, 1.0);
        assert_eq!(d.case, FiberingCase::MaxOnly);
        assert_eq!(d.roots.len(), 1);
        let r = d.roots[0];
        assert_eq!(r.kind, RootKind::Minus);
        assert!(d.m_prime(r.t) < 0.0);
        assert!((d.m(r.t) + 1.0).abs() < 1e-12);

        let d = diag(2.0, 0.5, 0.0);
        assert_eq!(d.case, FiberingCase::MinOnly);
        assert!(d.t_max.is_none());
        let t = d.root(RootKind::Plus).unwrap();
        assert!((t - (0.25f64).powf(2.0)).abs() < 1e-14);
        assert!(d.m_prime(t) > 0.0);

        let d = diag(1.0, -0.3, -0.2);
        assert_eq!(d.case, FiberingCase::NoneIncreasing);
        assert!(d.roots.is_empty());
        for t in [0.01, 0.1, 1.0, 10.0] {
            assert!(d.m_prime(t) > 0.0);
            assert!(d.phi_prime(t) > 0.0);
        }
    }

    #[test]
    fn tangency_and_overshoot() {
        let peak = diag(1.0, 0.0, 1.0).m_at_tmax.unwrap();
        let d = diag(1.0, peak, 1.0);
        assert!(d.is_tangent());
        assert_eq!(d.roots.len(), 1);
        assert_eq!(d.roots[0].t, d.t_max.unwrap());
        let d = diag(1.0, 1.01 * peak, 1.0);
        assert!(d.roots.is_empty() && !d.is_tangent());
    }

    #[test]
    fn phi_derivatives_and_identity() {
        let d = diag(1.7, 0.3, 0.9);
        for t in [0.05, 0.4, 1.3] {
            let h = 1e-6 * t;
            let fd1 = (d.phi(t + h) - d.phi(t - h)) / (2.0 * h);
            let fd2 = (d.phi_prime(t + h) - d.phi_prime(t - h)) / (2.0 * h);
            assert!((fd1 - d.phi_prime(t)).abs() < 1e-7);
            assert!((fd2 - d.phi_double_prime(t)).abs() < 1e-6);
            let e = Exponents::standard();
            let rhs = (e.p - e.q) * t.powf(e.p - 2.0) * d.norm_p
                - (e.ab() - e.q) * t.powf(e.ab() - 2.0) * d.h
                + (e.q - 1.0) / t * d.phi_prime(t);
            assert!((d.phi_double_prime(t) - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
            assert!((d.phi_prime(t) - t.powf(e.q - 1.0) * (d.m(t) - d.x)).abs() < 1e-13);
        }
        assert!((d.phi_prime(1.0) - (1.7 - 0.3 - 0.9)).abs() < 1e-15);
        for r in &d.roots {
            let lhs = d.phi_double_prime(r.t);
            assert!((lhs - r.t.sqrt() * d.m_prime(r.t)).abs() <= 1e-10 * lhs.abs() + 1e-12);
        }
        let free = diag(2.0, 0.0, 0.0);
        assert!((free.phi(1.5) - 1.5f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn classification_bands() {
        let e = Exponents::standard();
        let on = |x: f64, h: f64| RayScalars {
            norm_p: x + h,
            x,
            h,
        };
        assert_eq!(
            classify_scalars(e, on(0.9, 0.1), 1e-8).unwrap(),
            NehariClass::MPlus
        );
        assert_eq!(
            classify_scalars(e, on(0.1, 0.9), 1e-8).unwrap(),
            NehariClass::MMinus
        );
        assert_eq!(
            classify_scalars(
                e,
                RayScalars {
                    norm_p: 1.0,
                    x: 0.5,
                    h: 0.2
                },
                1e-8
            )
            .unwrap(),
            NehariClass::OffManifold
        );
        // On the manifold Phi''(1) = (p-q) N - (a+b-q) H vanishes at H = N/3.
        assert_eq!(
            classify_scalars(e, on(2.0 / 3.0, 1.0 / 3.0), 1e-8).unwrap(),
            NehariClass::MZero
        );
        assert!(classify_scalars(
            e,
            RayScalars {
                norm_p: 0.0,
                x: 0.0,
                h: 0.0
            },
            1e-8
        )
        .is_err());
    }

    fn unit_spec(level: usize, lambda: f64, gamma: f64) -> ProblemSpec {
        let one = VertexField::constant(level, 1.0);
        ProblemSpec::new(
            Exponents::standard(),
            lambda,
            gamma,
            one.clone(),
            one.clone(),
            one,
        )
        .unwrap()
    }

    #[test]
    fn constants_closed_form() {
        let g = GasketGraph::standard(2).unwrap();
        let ctx = EnergyContext::new(g, ApModel::new(2.0).unwrap(), 0.6).unwrap();
        let spec = unit_spec(2, 0.0, 0.0);
        let c = constants_with_k(&spec, &ctx, 1.0).unwrap();
        let kappa = 2.0 / 3.0 * (1.0f64 / 3.0).sqrt();
        assert!((c.kappa - kappa).abs() < 1e-15);
        assert!((c.kappa - 0.3849).abs() < 1e-4 && (c.kappa0 - 0.2887).abs() < 1e-4);
        assert_eq!(c.kappa0, 0.75 * c.kappa);
        assert!(c.d0 > 0.0);

        // d0 is affine in the parameter size and reaches 0 at kappa0.
        let d_at = |s: f64| {
            constants_with_k(&unit_spec(2, s / 2.0, s / 2.0), &ctx, 1.0)
                .unwrap()
                .d0
        };
        let (d1, d2, d3) = (d_at(0.1), d_at(0.2), d_at(0.3 * c.kappa0 / 0.3));
        assert!(d1 > d2 && d2 > 0.0);
        assert!(d3.abs() < 1e-15);
        assert!(((d1 - d2) - (d_at(0.0) - d1)).abs() < 1e-15);

        let mut flat = spec.clone();
        flat.h = VertexField::zeros(2);
        assert_eq!(constants_with_k(&flat, &ctx, 1.0), Err(Error::ZeroCoupling));
    }

    #[test]
    fn region_membership() {
        let g = GasketGraph::standard(2).unwrap();
        let ctx = EnergyContext::new(g, ApModel::new(2.0).unwrap(), 0.6).unwrap();
        let c = constants_with_k(&unit_spec(2, 0.0, 0.0), &ctx, 1.0).unwrap();
        assert_eq!(
            lambda_region(&unit_spec(2, 0.0, 0.0), &c),
            LambdaRegion::InsideLambda0
        );
        let mid = (c.kappa0 + c.kappa) / 2.0;
        assert_eq!(
            lambda_region(&unit_spec(2, mid, 0.0), &c),
            LambdaRegion::InsideLambdaOnly
        );
        assert_eq!(
            lambda_region(&unit_spec(2, 0.0, -1.01 * c.kappa), &c),
            LambdaRegion::Outside
        );
        assert_eq!(
            lambda_region_signed(&unit_spec(2, 0.0, -1.01 * c.kappa), &c),
            LambdaRegion::InsideLambda0
        );
    }
}

//! Coefficient fields, quadrature, the Euler functional of the coupled
//! system and its gradient, and the structural hypothesis checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::gasket::{CellAddress, GasketGraph};

/// Exponents of the system: energy `p`, concave `q`, coupling `alpha`, `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Exponents {
    pub fn new(p: f64, q: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q), ("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "exponent {name} = {v} must be positive"
                )));
            }
        }
        Ok(Self { p, q, alpha, beta })
    }

    /// `p = 2, q = 1.5, alpha = beta = 1.5`
    pub fn standard() -> Self {
        Self {
            p: 2.0,
            q: 1.5,
            alpha: 1.5,
            beta: 1.5,
        }
    }

    /// `alpha + beta`
    pub fn ab(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `1 < q < p < alpha + beta`
    pub fn ordered(&self) -> bool {
        1.0 < self.q && self.q < self.p && self.p < self.ab()
    }
}

/// Parameters and coefficient fields of one problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub exps: Exponents,
    pub lambda: f64,
    pub gamma: f64,
    pub a: VertexField,
    pub b: VertexField,
    pub h: VertexField,
}

impl ProblemSpec {
    /// Checks that the three coefficient fields share one level and are
    /// finite; the ordering and sign hypotheses are reported separately by
    /// [`check_hypotheses`].
    pub fn new(
        exps: Exponents,
        lambda: f64,
        gamma: f64,
        a: VertexField,
        b: VertexField,
        h: VertexField,
    ) -> Result<Self> {
        if a.level() != b.level() || a.level() != h.level() {
            return Err(Error::InvalidArgument(format!(
                "coefficient levels differ: a {}, b {}, h {}",
                a.level(),
                b.level(),
                h.level()
            )));
        }
        if !(lambda.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidArgument(
                "lambda and gamma must be finite".into(),
            ));
        }
        for (name, f) in [("a", &a), ("b", &b), ("h", &h)] {
            if f.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "coefficient {name} has non-finite values"
                )));
            }
        }
        Ok(Self {
            exps,
            lambda,
            gamma,
            a,
            b,
            h,
        })
    }

    pub fn level(&self) -> usize {
        self.a.level()
    }

    /// Same spec with new `(lambda, gamma)`.
    pub fn with_parameters(&self, lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            ..self.clone()
        }
    }

    /// `|lambda| ||a||_1 + |gamma| ||b||_1`
    pub fn parameter_size(&self, g: &GasketGraph) -> Result<f64> {
        Ok(self.lambda.abs() * l1_norm(g, &self.a)? + self.gamma.abs() * l1_norm(g, &self.b)?)
    }

    /// `lambda ||a||_1 + gamma ||b||_1`, the form without absolute values.
    pub fn parameter_size_signed(&self, g: &GasketGraph) -> Result<f64> {
        Ok(self.lambda * l1_norm(g, &self.a)? + self.gamma * l1_norm(g, &self.b)?)
    }
}

/// `sign(t) |t|^s`, with value 0 at `t = 0`.
pub fn signed_pow(t: f64, s: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.signum() * t.abs().powf(s)
    }
}

fn abs_pow(t: f64, s: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(s)
    }
}

/// Quadrature `sum_x f(x) w(x)`.
pub fn integrate(g: &GasketGraph, f: &VertexField) -> Result<f64> {
    f.check_graph(g)?;
    Ok(f.values()
        .iter()
        .zip(g.vertex_weight())
        .map(|(v, w)| v * w)
        .sum())
}

/// Share of the quadrature carried by one level-m cell:
/// `3^-m / 3 * sum of f over its corners`. Summing over all cells gives
/// [`integrate`].
pub fn integrate_over_cell(g: &GasketGraph, f: &VertexField, cell: usize) -> Result<f64> {
    f.check_graph(g)?;
    let ids = g.cells().get(cell).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "cell index {cell} out of range (0..{})",
            g.num_cells()
        ))
    })?;
    let share = 1.0 / (3.0 * g.num_cells() as f64);
    Ok(ids.iter().map(|&id| f.values()[id] * share).sum())
}

pub fn l1_norm(g: &GasketGraph, f: &VertexField) -> Result<f64> {
    f.check_graph(g)?;
    Ok(f.values()
        .iter()
        .zip(g.vertex_weight())
        .map(|(v, w)| v.abs() * w)
        .sum())
}

fn check_pair(spec: &ProblemSpec, g: &GasketGraph, u: &VertexField, v: &VertexField) -> Result<()> {
    u.check_graph(g)?;
    v.check_graph(g)?;
    spec.a.check_graph(g)
}

/// `lambda int a |u|^q + gamma int b |v|^q`
pub fn term_concave(
    spec: &ProblemSpec,
    g: &GasketGraph,
    u: &VertexField,
    v: &VertexField,
) -> Result<f64> {
    check_pair(spec, g, u, v)?;
    let q = spec.exps.q;
    let (a, b) = (spec.a.values(), spec.b.values());
    let mut su = 0.0;
    let mut sv = 0.0;
    for (k, w) in g.vertex_weight().iter().enumerate() {
        su += a[k] * abs_pow(u.values()[k], q) * w;
        sv += b[k] * abs_pow(v.values()[k], q) * w;
    }
    Ok(spec.lambda * su + spec.gamma * sv)
}

/// `int h |u|^alpha |v|^beta`
pub fn term_coupling(
    spec: &ProblemSpec,
    g: &GasketGraph,
    u: &VertexField,
    v: &VertexField,
) -> Result<f64> {
    check_pair(spec, g, u, v)?;
    let Exponents { alpha, beta, .. } = spec.exps;
    let h = spec.h.values();
    Ok(g.vertex_weight()
        .iter()
        .enumerate()
        .map(|(k, w)| h[k] * abs_pow(u.values()[k], alpha) * abs_pow(v.values()[k], beta) * w)
        .sum())
}

/// The three scalars that determine the functional along the ray through
/// `(u, v)`: `||(u,v)||^p`, the concave term and the coupling term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayScalars {
    pub norm_p: f64,
    pub x: f64,
    pub h: f64,
}

pub fn ray_scalars(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<RayScalars> {
    let g = ctx.graph();
    Ok(RayScalars {
        norm_p: ctx.renormalized_energy(u)? + ctx.renormalized_energy(v)?,
        x: term_concave(spec, g, u, v)?,
        h: term_coupling(spec, g, u, v)?,
    })
}

/// `I(u, v) = ||(u,v)||^p / p - X / q - H / (alpha + beta)`
pub fn euler_functional(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<f64> {
    let s = ray_scalars(spec, ctx, u, v)?;
    let e = &spec.exps;
    Ok(s.norm_p / e.p - s.x / e.q - s.h / e.ab())
}

/// Partial derivatives of the Euler functional with respect to the interior
/// vertex values; boundary entries are zero.
pub fn euler_gradient(
    spec: &ProblemSpec,
    ctx: &EnergyContext,
    u: &VertexField,
    v: &VertexField,
) -> Result<(VertexField, VertexField)> {
    let g = ctx.graph();
    check_pair(spec, g, u, v)?;
    let Exponents { p, q, alpha, beta } = spec.exps;
    let ab = alpha + beta;
    let mut gu = ctx.energy_gradient(u)?.into_values();
    let mut gv = ctx.energy_gradient(v)?.into_values();
    let (a, b, h) = (spec.a.values(), spec.b.values(), spec.h.values());
    let (uv, vv) = (u.values(), v.values());
    for (k, &w) in g.vertex_weight().iter().enumerate() {
        if g.is_boundary(k) {
            gu[k] = 0.0;
            gv[k] = 0.0;
            continue;
        }
        let (x, y) = (uv[k], vv[k]);
        gu[k] = gu[k] / p
            - spec.lambda * a[k] * signed_pow(x, q - 1.0) * w
            - (alpha / ab) * h[k] * signed_pow(x, alpha - 1.0) * abs_pow(y, beta) * w;
        gv[k] = gv[k] / p
            - spec.gamma * b[k] * signed_pow(y, q - 1.0) * w
            - (beta / ab) * h[k] * abs_pow(x, alpha) * signed_pow(y, beta - 1.0) * w;
    }
    Ok((
        VertexField::new(u.level(), gu)?,
        VertexField::new(v.level(), gv)?,
    ))
}

/// Largest interior `|dI/du(x)| / w(x)` over both components: the defect of
/// the discrete weak form tested against mass-normalized hat functions.
pub fn gradient_dual_norm(g: &GasketGraph, gu: &VertexField, gv: &VertexField) -> f64 {
    let w = g.vertex_weight();
    g.interior_ids()
        .map(|k| (gu.values()[k].abs().max(gv.values()[k].abs())) / w[k])
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `1 < q < p < alpha + beta`
    pub ordering: bool,
    /// `a, b, h >= 0` pointwise.
    pub nonnegative: bool,
    /// `a, b, h` not identically zero.
    pub nontrivial: bool,
    pub a_l1: f64,
    pub b_l1: f64,
    pub h_l1: f64,
    /// `|lambda| ||a||_1 + |gamma| ||b||_1`
    pub size_abs: f64,
    /// `lambda ||a||_1 + gamma ||b||_1`
    pub size_signed: f64,
    pub kappa0: Option<f64>,
    /// `size_abs < kappa0`; absent until constants are known.
    pub smallness: Option<bool>,
    pub smallness_signed: Option<bool>,
}

impl HypothesisReport {
    pub fn structural_pass(&self) -> bool {
        self.ordering && self.nonnegative && self.nontrivial
    }

    pub fn all_pass(&self) -> bool {
        self.structural_pass() && self.smallness == Some(true)
    }

    /// Names of the failed items, in a fixed order.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.ordering {
            out.push("H1 (1 < q < p < alpha + beta)");
        }
        if !self.nonnegative {
            out.push("H3 (a, b, h >= 0)");
        }
        if !self.nontrivial {
            if !(self.h_l1 > 0.0) {
                out.push("H3 (||h||_1 > 0)");
            } else {
                out.push("H3 (a, b not identically zero)");
            }
        }
        if self.smallness == Some(false) {
            out.push("H2 (|lambda| ||a||_1 + |gamma| ||b||_1 < kappa0)");
        }
        out
    }
}

/// Evaluates the ordering, sign and smallness hypotheses. `kappa0` may be
/// omitted when constants are not yet available.
pub fn check_hypotheses(
    spec: &ProblemSpec,
    g: &GasketGraph,
    kappa0: Option<f64>,
) -> Result<HypothesisReport> {
    let a_l1 = l1_norm(g, &spec.a)?;
    let b_l1 = l1_norm(g, &spec.b)?;
    let h_l1 = l1_norm(g, &spec.h)?;
    let nonnegative = [&spec.a, &spec.b, &spec.h]
        .iter()
        .all(|f| f.values().iter().all(|&v| v >= 0.0));
    let nontrivial = a_l1 > 0.0 && b_l1 > 0.0 && h_l1 > 0.0;
    let size_abs = spec.lambda.abs() * a_l1 + spec.gamma.abs() * b_l1;
    let size_signed = spec.lambda * a_l1 + spec.gamma * b_l1;
    Ok(HypothesisReport {
        ordering: spec.exps.ordered(),
        nonnegative,
        nontrivial,
        a_l1,
        b_l1,
        h_l1,
        size_abs,
        size_signed,
        kappa0,
        smallness: kappa0.map(|k| size_abs < k),
        smallness_signed: kappa0.map(|k| size_signed < k),
    })
}

/// Built-in coefficient fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoefficientPreset {
    /// Constant 1.
    One,
    /// Constant `value`.
    Constant { value: f64 },
    /// 1 on the vertices of the sub-cell with the given address, 0 elsewhere.
    Bump { cell: String },
    /// Values read from a text file, one per vertex in id order.
    File { path: String },
}

impl CoefficientPreset {
    pub fn build(&self, g: &GasketGraph) -> Result<VertexField> {
        match self {
            CoefficientPreset::One => Ok(VertexField::constant(g.level(), 1.0)),
            CoefficientPreset::Constant { value } => Ok(VertexField::constant(g.level(), *value)),
            CoefficientPreset::Bump { cell } => bump_field(g, &cell.parse()?),
            CoefficientPreset::File { path } => read_field_file(path, g.level()),
        }
    }
}

/// Indicator of the vertices of the cell `F_w(S)` for an address `w` of
/// length at most the graph level.
pub fn bump_field(g: &GasketGraph, addr: &CellAddress) -> Result<VertexField> {
    let m = g.level();
    if addr.len() > m {
        return Err(Error::AddressLength {
            expected: m,
            got: addr.len(),
        });
    }
    // Level-m descendants of w form a contiguous block of cell indices.
    let block = 3usize.pow((m - addr.len()) as u32);
    let start = addr.rank() * block;
    let mut values = vec![0.0; g.num_vertices()];
    for cell in &g.cells()[start..start + block] {
        for &id in cell {
            values[id] = 1.0;
        }
    }
    VertexField::new(m, values)
}

/// Parses one value per line (blank lines and `#` comments skipped) and
/// requires a nonnegative value for every vertex of the given level.
pub fn parse_field_text(text: &str, level: usize) -> Result<VertexField> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::InvalidArgument(format!("line {}: cannot parse {line:?}", lineno + 1))
        })?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "line {}: coefficient value {v} must be finite and nonnegative",
                lineno + 1
            )));
        }
        values.push(v);
    }
    VertexField::new(level, values)
}

pub fn read_field_file(path: impl AsRef<Path>, level: usize) -> Result<VertexField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_field_text(&text, level)
}

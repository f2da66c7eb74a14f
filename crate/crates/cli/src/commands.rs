use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgp_core::energy::{estimate_embedding_k, estimate_rp, RpEstimate};
use sgp_core::fibering::{constants_with_k, lambda_region, Constants, LambdaRegion};
use sgp_core::functional::ProblemSpec;
use sgp_core::solver::{perturbation_check, solve_system, Solution};
use sgp_core::verify::{certify, Certificate};
use sgp_core::{ApModel, EnergyContext, GasketGraph};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::render::render_svg;
use crate::table::SolutionTable;

const H2_NAME: &str = "H2 (|lambda| ||a||_1 + |gamma| ||b||_1 < kappa0)";

/// Everything needed to solve at one parameter pair.
pub struct Prepared {
    pub config: RunConfig,
    pub ctx: EnergyContext,
    pub spec: ProblemSpec,
    pub constants: Constants,
    pub rp_estimate: Option<RpEstimate>,
}

fn load(config: Option<&Path>, overrides: &Overrides) -> CliResult<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    Ok(cfg)
}

/// Checks the ordering and sign hypotheses, then resolves `r_p`, `K` and
/// the parameters; the returned config has `rp`, `lambda` and `gamma` set.
pub fn prepare(mut cfg: RunConfig) -> CliResult<Prepared> {
    let g = GasketGraph::standard(cfg.level)?;
    let base = cfg.build_spec(&g)?;
    let model = ApModel::new(cfg.p)?;
    let rp_estimate = match cfg.rp {
        Some(_) => None,
        None => Some(estimate_rp(&model, cfg.rp_max_level, cfg.rp_tol)?),
    };
    let rp = cfg.rp.unwrap_or_else(|| rp_estimate.as_ref().unwrap().rp);
    cfg.rp = Some(rp);
    let ctx = EnergyContext::new(g, model, rp)?;
    let k = match cfg.k_override {
        Some(k) => k,
        None => estimate_embedding_k(&ctx)?.k,
    };
    let c = constants_with_k(&base, &ctx, k)?;
    let (lambda, gamma) = match cfg.explicit_parameters()? {
        Some(pair) => pair,
        None => cfg.diagonal_parameters(c.kappa0, c.a_l1, c.b_l1),
    };
    cfg.lambda = Some(lambda);
    cfg.gamma = Some(gamma);
    let spec = base.with_parameters(lambda, gamma);
    let constants = constants_with_k(&spec, &ctx, k)?;
    Ok(Prepared {
        config: cfg,
        ctx,
        spec,
        constants,
        rp_estimate,
    })
}

/// Contents of `certificate.json`: the resolved config, so a run can be
/// repeated from its artifacts, and the verification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rp_estimate: Option<RpEstimate>,
    pub certificate: Certificate,
    pub perturbation: Option<PerturbationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSummary {
    pub plus_pass: bool,
    pub minus_pass: bool,
}

pub struct SolveOutcome {
    pub record: RunRecord,
    pub plus: Solution,
    pub minus: Solution,
    pub out_dir: PathBuf,
}

fn h2_gate(spec: &ProblemSpec, c: &Constants) -> CliResult<()> {
    if lambda_region(spec, c) == LambdaRegion::InsideLambda0 {
        return Ok(());
    }
    let size = spec.lambda.abs() * c.a_l1 + spec.gamma.abs() * c.b_l1;
    Err(CliError::Hypothesis(format!(
        "{H2_NAME}: size {size:e}, kappa0 {:e}",
        c.kappa0
    )))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Solves both branches, certifies them and writes `plus.tsv`, `minus.tsv`,
/// `certificate.json` and, when enabled, SVG renders into the output
/// directory. Artifacts are written before a failed certificate is
/// reported.
pub fn cmd_solve(
    config: Option<&Path>,
    overrides: &Overrides,
    log: &mut dyn Write,
) -> CliResult<SolveOutcome> {
    let prep = prepare(load(config, overrides)?)?;
    let Prepared {
        config: cfg,
        ctx,
        spec,
        constants,
        rp_estimate,
    } = prep;
    if let Some(est) = &rp_estimate {
        if !est.converged {
            writeln!(
                log,
                "note: r_p estimate {} not settled (spread {:e})",
                est.rp, est.spread
            )
            .ok();
        }
    }
    h2_gate(&spec, &constants)?;
    let (plus, minus) = solve_system(&spec, &ctx, &constants, &cfg.solver)?;
    let certificate = certify(&spec, &ctx, &constants, &plus, &minus, &cfg.certify)?;
    let perturbation = if cfg.perturbation_check {
        let p = perturbation_check(&spec, &ctx, &plus, &cfg.perturbation)?;
        let m = perturbation_check(&spec, &ctx, &minus, &cfg.perturbation)?;
        Some(PerturbationSummary {
            plus_pass: p.pass,
            minus_pass: m.pass,
        })
    } else {
        None
    };

    let out_dir = cfg.out.clone();
    create_dir(&out_dir)?;
    let g = ctx.graph();
    for sol in [&plus, &minus] {
        let name = branch_name(sol);
        SolutionTable::new(g, &sol.u, &sol.v)?.write(&out_dir.join(format!("{name}.tsv")))?;
        if cfg.render {
            for (field, f) in [("u", &sol.u), ("v", &sol.v)] {
                let svg = render_svg(g, f, &format!("{field} on the {name} branch"));
                write_file(&out_dir.join(format!("{name}_{field}.svg")), &svg)?;
            }
        }
    }
    let record = RunRecord {
        config: cfg,
        rp_estimate,
        certificate,
        perturbation,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    write_file(&out_dir.join("certificate.json"), &json)?;

    let c = &record.certificate;
    writeln!(log, "lambda = {}, gamma = {}", spec.lambda, spec.gamma).ok();
    writeln!(
        log,
        "I+ = {:e} ({} iterations)",
        plus.i_value, plus.iterations
    )
    .ok();
    writeln!(
        log,
        "I- = {:e} ({} iterations)",
        minus.i_value, minus.iterations
    )
    .ok();
    writeln!(log, "d0 = {:e}", constants.d0).ok();
    writeln!(
        log,
        "residuals = {:e}, {:e}",
        plus.grad_dual_norm, minus.grad_dual_norm
    )
    .ok();
    if let Some(p) = &record.perturbation {
        writeln!(
            log,
            "perturbation check: plus {}, minus {}",
            pass_word(p.plus_pass),
            pass_word(p.minus_pass)
        )
        .ok();
    }
    writeln!(log, "certificate: {}", pass_word(c.pass)).ok();
    writeln!(log, "artifacts in {}", out_dir.display()).ok();
    if !c.pass {
        return Err(CliError::Certificate(c.failures()));
    }
    Ok(SolveOutcome {
        record,
        plus,
        minus,
        out_dir,
    })
}

fn branch_name(sol: &Solution) -> &'static str {
    match sol.branch {
        sgp_core::fibering::Branch::Plus => "plus",
        sgp_core::fibering::Branch::Minus => "minus",
    }
}

fn pass_word(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

/// Prints the `r_p` estimate and the spread of the last two ratios.
pub fn cmd_rp(p: f64, max_level: usize, tol: f64, log: &mut dyn Write) -> CliResult<RpEstimate> {
    let model = ApModel::new(p)?;
    let est = estimate_rp(&model, max_level, tol)?;
    writeln!(log, "rp = {}", est.rp).ok();
    writeln!(log, "spread = {:e}", est.spread).ok();
    let ratios: Vec<String> = est.ratios.iter().map(|r| r.to_string()).collect();
    writeln!(log, "ratios = {}", ratios.join(" ")).ok();
    if !est.converged {
        writeln!(
            log,
            "note: spread did not reach {tol:e} by level {max_level}"
        )
        .ok();
    }
    Ok(est)
}

/// Prints `K`, the derived constants, the L1 norms and region membership.
pub fn cmd_constants(
    config: Option<&Path>,
    overrides: &Overrides,
    log: &mut dyn Write,
) -> CliResult<Prepared> {
    let prep = prepare(load(config, overrides)?)?;
    let c = &prep.constants;
    let region = match lambda_region(&prep.spec, c) {
        LambdaRegion::InsideLambda0 => "inside Lambda0",
        LambdaRegion::InsideLambdaOnly => "inside Lambda, outside Lambda0",
        LambdaRegion::Outside => "outside Lambda",
    };
    let rows = [
        ("rp", prep.ctx.rp()),
        ("K", c.k),
        ("kappa", c.kappa),
        ("kappa0", c.kappa0),
        ("d0", c.d0),
        ("minus_radius", c.minus_radius),
        ("a_l1", c.a_l1),
        ("b_l1", c.b_l1),
        ("h_l1", c.h_l1),
        ("lambda", prep.spec.lambda),
        ("gamma", prep.spec.gamma),
    ];
    for (name, v) in rows {
        writeln!(log, "{name:<13}{v}").ok();
    }
    writeln!(log, "{:<13}{region}", "region").ok();
    Ok(prep)
}

/// Sweep options given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOverrides {
    pub lambda: Option<[f64; 2]>,
    pub gamma: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepStatus {
    Ok,
    H2Fail,
    SolverFail,
    CertificateFail,
}

impl SweepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepStatus::Ok => "ok",
            SweepStatus::H2Fail => "H2-fail",
            SweepStatus::SolverFail => "solver-fail",
            SweepStatus::CertificateFail => "certificate-fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub gamma: f64,
    pub i_plus: Option<f64>,
    pub i_minus: Option<f64>,
    pub d0: f64,
    pub pass: bool,
    pub status: SweepStatus,
}

pub const SWEEP_HEADER: &str = "lambda,gamma,i_plus,i_minus,d0,pass,status";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:?}"));
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{:?},{:?},{},{},{:?},{},{}\n",
            r.lambda,
            r.gamma,
            opt(r.i_plus),
            opt(r.i_minus),
            r.d0,
            r.pass,
            r.status.as_str()
        ));
    }
    s
}

fn sweep_point(prep: &Prepared, lambda: f64, gamma: f64) -> CliResult<SweepRow> {
    let spec = prep.spec.with_parameters(lambda, gamma);
    let constants = constants_with_k(&spec, &prep.ctx, prep.constants.k)?;
    let mut row = SweepRow {
        lambda,
        gamma,
        i_plus: None,
        i_minus: None,
        d0: constants.d0,
        pass: false,
        status: SweepStatus::H2Fail,
    };
    if h2_gate(&spec, &constants).is_err() {
        return Ok(row);
    }
    let cfg = &prep.config;
    let (plus, minus) = match solve_system(&spec, &prep.ctx, &constants, &cfg.solver) {
        Ok(pair) => pair,
        Err(e) => match CliError::from(e) {
            CliError::Solver(_) => {
                row.status = SweepStatus::SolverFail;
                return Ok(row);
            }
            other => return Err(other),
        },
    };
    let cert = certify(&spec, &prep.ctx, &constants, &plus, &minus, &cfg.certify)?;
    row.i_plus = Some(plus.i_value);
    row.i_minus = Some(minus.i_value);
    row.pass = cert.pass;
    row.status = if cert.pass {
        SweepStatus::Ok
    } else {
        SweepStatus::CertificateFail
    };
    Ok(row)
}

/// Solves and certifies every grid point inside Lambda0; points outside
/// are marked `H2-fail` without solving. Writes `sweep.csv` with rows in
/// grid order.
pub fn cmd_sweep(
    config: Option<&Path>,
    overrides: &Overrides,
    sweep: &SweepOverrides,
    log: &mut dyn Write,
) -> CliResult<Vec<SweepRow>> {
    let mut cfg = load(config, overrides)?;
    let s = &mut cfg.sweep;
    if let Some(r) = sweep.lambda {
        s.lambda = r;
    }
    if let Some(r) = sweep.gamma {
        s.gamma = r;
    }
    if let Some(n) = sweep.points {
        s.points = n;
    }
    if let Some(n) = sweep.workers {
        s.workers = n;
    }
    let grid = cfg.sweep.grid();
    let workers = cfg.sweep.workers.max(1);
    let out_dir = cfg.out.clone();
    let rows = if grid.is_empty() {
        Vec::new()
    } else {
        let prep = prepare(cfg)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(|| {
            grid.par_iter()
                .map(|&(l, g)| sweep_point(&prep, l, g))
                .collect::<CliResult<Vec<_>>>()
        })?
    };
    create_dir(&out_dir)?;
    let path = out_dir.join("sweep.csv");
    write_file(&path, &sweep_csv(&rows))?;
    let count = |st: SweepStatus| rows.iter().filter(|r| r.status == st).count();
    writeln!(
        log,
        "{} points: {} pass, {} H2-fail, {} solver-fail, {} certificate-fail; wrote {}",
        rows.len(),
        count(SweepStatus::Ok),
        count(SweepStatus::H2Fail),
        count(SweepStatus::SolverFail),
        count(SweepStatus::CertificateFail),
        path.display()
    )
    .ok();
    if count(SweepStatus::SolverFail) > 0 {
        return Err(CliError::Solver(format!(
            "{} grid points",
            count(SweepStatus::SolverFail)
        )));
    }
    if count(SweepStatus::CertificateFail) > 0 {
        return Err(CliError::Certificate(vec![format!(
            "{} grid points",
            count(SweepStatus::CertificateFail)
        )]));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldChoice {
    U,
    V,
}

/// Renders one component of a solution table as SVG.
pub fn cmd_render(
    solution: &Path,
    output: &Path,
    field: FieldChoice,
    log: &mut dyn Write,
) -> CliResult<()> {
    let table = SolutionTable::read(solution)?;
    let g = GasketGraph::standard(table.level)?;
    let (name, f) = match field {
        FieldChoice::U => ("u", &table.u),
        FieldChoice::V => ("v", &table.v),
    };
    let svg = render_svg(&g, f, &format!("{name} from {}", solution.display()));
    write_file(output, &svg)?;
    writeln!(log, "wrote {}", output.display()).ok();
    Ok(())
}

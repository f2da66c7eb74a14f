use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgp_core::functional::{check_hypotheses, CoefficientPreset, Exponents, ProblemSpec};
use sgp_core::solver::{PerturbationConfig, SolverConfig};
use sgp_core::verify::CertifyConfig;
use sgp_core::GasketGraph;

use crate::error::{CliError, CliResult};

/// Run configuration as read from TOML. Unset fields take the defaults
/// listed in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub level: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Explicit parameters; give both or neither.
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// Used when `lambda` and `gamma` are unset: `lambda = gamma` chosen so
    /// that `|lambda| ||a||_1 + |gamma| ||b||_1 = kappa0_fraction * kappa0`.
    pub kappa0_fraction: f64,
    pub coefficients: Coefficients,
    /// Renormalization factor; estimated when unset.
    pub rp: Option<f64>,
    pub rp_max_level: usize,
    pub rp_tol: f64,
    /// Embedding constant; estimated on the working level when unset.
    pub k_override: Option<f64>,
    pub out: PathBuf,
    pub render: bool,
    pub perturbation_check: bool,
    pub solver: SolverConfig,
    pub certify: CertifyConfig,
    pub perturbation: PerturbationConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            level: 5,
            p: 2.0,
            q: 1.5,
            alpha: 1.5,
            beta: 1.5,
            lambda: None,
            gamma: None,
            kappa0_fraction: 0.6,
            coefficients: Coefficients::default(),
            rp: None,
            rp_max_level: 7,
            rp_tol: 1e-8,
            k_override: None,
            out: PathBuf::from("out"),
            render: true,
            perturbation_check: true,
            solver: SolverConfig::default(),
            certify: CertifyConfig::default(),
            perturbation: PerturbationConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coefficients {
    pub a: CoefficientPreset,
    pub b: CoefficientPreset,
    pub h: CoefficientPreset,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            a: CoefficientPreset::One,
            b: CoefficientPreset::One,
            h: CoefficientPreset::One,
        }
    }
}

/// Grid for `sweep`: `points` evenly spaced values per axis, endpoints
/// included. An empty range (`points = 0` or `lo > hi`) gives no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambda: [f64; 2],
    pub gamma: [f64; 2],
    pub points: usize,
    /// Grid points solved concurrently.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda: [0.0, 0.0],
            gamma: [0.0, 0.0],
            points: 0,
            workers: 4,
        }
    }
}

impl SweepConfig {
    fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
        let [lo, hi] = range;
        if n == 0 || lo > hi {
            return Vec::new();
        }
        if n == 1 {
            return vec![lo];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Grid points in row-major order, `lambda` outer.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let ls = Self::axis(self.lambda, self.points);
        let gs = Self::axis(self.gamma, self.points);
        if ls.is_empty() || gs.is_empty() {
            return Vec::new();
        }
        ls.iter()
            .flat_map(|&l| gs.iter().map(move |&g| (l, g)))
            .collect()
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub level: Option<usize>,
    pub starts: Option<usize>,
    pub tol: Option<f64>,
    pub k_override: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.solver.seed = seed;
        }
        if let Some(level) = o.level {
            self.level = level;
        }
        if let Some(starts) = o.starts {
            self.solver.starts = starts;
        }
        if let Some(tol) = o.tol {
            self.solver.grad_tol = tol;
        }
        if o.k_override.is_some() {
            self.k_override = o.k_override;
        }
        // The certificate judges the residual at the solver tolerance.
        self.certify.grad_tol = self.solver.grad_tol;
    }

    pub fn exponents(&self) -> CliResult<Exponents> {
        Exponents::new(self.p, self.q, self.alpha, self.beta).map_err(CliError::from)
    }

    pub fn explicit_parameters(&self) -> CliResult<Option<(f64, f64)>> {
        match (self.lambda, self.gamma) {
            (Some(l), Some(g)) => Ok(Some((l, g))),
            (None, None) => Ok(None),
            _ => Err(CliError::Config(
                "give both lambda and gamma or neither".into(),
            )),
        }
    }

    /// Builds the problem with placeholder parameters `(0, 0)` when they
    /// are derived from `kappa0_fraction`, and checks the ordering and sign
    /// hypotheses.
    pub fn build_spec(&self, g: &GasketGraph) -> CliResult<ProblemSpec> {
        self.solver.validate()?;
        if self.rp_max_level < 2 {
            return Err(CliError::Config("rp_max_level must be at least 2".into()));
        }
        let (l, gm) = self.explicit_parameters()?.unwrap_or((0.0, 0.0));
        let exps = self.exponents()?;
        let c = &self.coefficients;
        let spec = ProblemSpec::new(exps, l, gm, c.a.build(g)?, c.b.build(g)?, c.h.build(g)?)?;
        let report = check_hypotheses(&spec, g, None)?;
        if !report.structural_pass() {
            return Err(CliError::Hypothesis(report.failures().join(", ")));
        }
        Ok(spec)
    }

    /// Parameters on the diagonal `lambda = gamma` at the configured
    /// fraction of `kappa0`.
    pub fn diagonal_parameters(&self, kappa0: f64, a_l1: f64, b_l1: f64) -> (f64, f64) {
        let t = self.kappa0_fraction * kappa0 / (a_l1 + b_l1);
        (t, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig {
            lambda: Some(0.25),
            gamma: Some(-0.5),
            ..Default::default()
        };
        c.coefficients.h = CoefficientPreset::Bump { cell: "12".into() };
        c.solver.starts = 3;
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("levle = 3").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            seed: Some(5),
            level: Some(3),
            starts: Some(2),
            tol: Some(1e-4),
            k_override: Some(1.0),
            ..Default::default()
        });
        assert_eq!(c.solver.seed, 5);
        assert_eq!(c.level, 3);
        assert_eq!(c.solver.starts, 2);
        assert_eq!(c.certify.grad_tol, 1e-4);
        assert_eq!(c.k_override, Some(1.0));
    }

    #[test]
    fn half_given_parameters_are_rejected() {
        let c = RunConfig {
            lambda: Some(1.0),
            ..Default::default()
        };
        assert!(c.explicit_parameters().is_err());
    }

    #[test]
    fn sweep_grid_order_and_empty_ranges() {
        let s = SweepConfig {
            lambda: [0.0, 1.0],
            gamma: [2.0, 3.0],
            points: 2,
            workers: 1,
        };
        assert_eq!(
            s.grid(),
            vec![(0.0, 2.0), (0.0, 3.0), (1.0, 2.0), (1.0, 3.0)]
        );
        let empty = SweepConfig {
            lambda: [1.0, 0.0],
            ..s.clone()
        };
        assert!(empty.grid().is_empty());
        assert!(SweepConfig { points: 0, ..s }.grid().is_empty());
    }
}

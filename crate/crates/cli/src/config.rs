//! Run configuration: a TOML file, `PINWHEEL_SECTION__KEY` environment
//! overrides, then command-line flags.

use pinwheel::ansatz::{default_r_grid, CutoffSpec};
use pinwheel::energy::{Params, PotentialSpec};
use pinwheel::groundstate::RadialGridSpec;
use pinwheel::io::FieldFormat;
use pinwheel::mesh::Grid;
use pinwheel::quadrature::geometric_grid;
use pinwheel::solver::{ContinuationSchedule, SolveOptions};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::CliError;

pub const ENV_PREFIX: &str = "PINWHEEL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; unset uses every core.
    pub threads: Option<usize>,
    pub format: FieldFormat,
    pub problem: ProblemConfig,
    pub radial: RadialGridSpec,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    pub schedule: ContinuationSchedule,
    pub scan: ScanConfig,
    pub orbit: OrbitConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            format: FieldFormat::Text,
            problem: ProblemConfig::default(),
            radial: RadialGridSpec::default(),
            grid: GridConfig::default(),
            solver: SolveOptions::default(),
            schedule: ContinuationSchedule {
                betas: vec![-1.0, -4.0, -16.0, -64.0, -256.0],
                warm_start: true,
            },
            scan: ScanConfig::default(),
            orbit: OrbitConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// System parameters; `d` is the spatial dimension of the grid and of the
/// ground-state profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub d: usize,
    pub ell: usize,
    pub m: usize,
    pub p: f64,
    pub beta: f64,
    pub potential: PotentialSpec,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            d: 2,
            ell: 2,
            m: 6,
            p: 2.0,
            beta: -1.0,
            potential: PotentialSpec::constant(1.0),
        }
    }
}

impl ProblemConfig {
    pub fn params(&self) -> Params {
        Params {
            d: self.d,
            ell: self.ell,
            m: self.m,
            p: self.p,
            beta: self.beta,
            potential: self.potential.clone(),
        }
    }
}

/// Lengths are in the same units as `1/√V_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    /// `n` nodes per axis on `[-half_width, half_width]^d`.
    Cartesian { n: usize, half_width: f64 },
    /// Disc of the given radius, `d = 2`.
    Polar {
        nr: usize,
        ntheta: usize,
        radius: f64,
    },
    /// Cylinder `r < radius`, `|z| <= half_height`, `d = 3`.
    Cylindrical {
        nr: usize,
        ntheta: usize,
        radius: f64,
        nz: usize,
        half_height: f64,
    },
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::Polar {
            nr: 128,
            ntheta: 120,
            radius: 16.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self, d: usize) -> pinwheel::Result<Arc<Grid<f64>>> {
        let (grid, want) = match *self {
            GridConfig::Cartesian { n, half_width } => (Grid::cartesian_box(d, n, half_width)?, d),
            GridConfig::Polar { nr, ntheta, radius } => (Grid::polar(nr, ntheta, radius)?, 2),
            GridConfig::Cylindrical {
                nr,
                ntheta,
                radius,
                nz,
                half_height,
            } => (Grid::cylindrical(nr, ntheta, radius, nz, half_height)?, 3),
        };
        if want != d {
            return Err(pinwheel::Error::Dimension(format!(
                "grid is {want}-dimensional but problem.d = {d}"
            )));
        }
        Ok(Arc::new(grid))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariant {
    /// Full ansatz bound of the existence argument.
    #[default]
    Existence,
    /// Cut-off ansatz with disjoint supports.
    Segregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub variant: ScanVariant,
    /// Geometric R grid; unset ends default to `4/√V_inf` and `16/√V_inf`.
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub points: usize,
    /// Cutoff radii for the segregated variant; unset uses the midpoints.
    pub cutoff: Option<CutoffSpec>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            variant: ScanVariant::Existence,
            r_min: None,
            r_max: None,
            points: 25,
            cutoff: None,
        }
    }
}

impl ScanConfig {
    pub fn r_grid(&self, v_inf: f64) -> Vec<f64> {
        let def = default_r_grid(v_inf);
        if self.r_min.is_none() && self.r_max.is_none() && self.points == def.len() {
            return def;
        }
        let lo = self.r_min.unwrap_or(def[0]);
        let hi = self.r_max.unwrap_or(*def.last().unwrap());
        geometric_grid(lo, hi, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    /// Ambient dimension `N >= 4`.
    pub n_dim: usize,
    /// Base point `(radius, 0, ..., 0)`.
    pub radius: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            n_dim: 4,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Random instances of the power inequality.
    pub instances: usize,
    /// Potential tail rate used for the potential-interaction check.
    pub kappa: f64,
    /// Separations `0, step, ..., max` of the convolution sweeps.
    pub sweep_max: f64,
    pub sweep_step: f64,
    /// Tolerance on plateau variations, decay ratios and rate errors.
    pub tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 10_000,
            kappa: 1.5,
            sweep_max: 20.0,
            sweep_step: 0.5,
            tol: 0.05,
        }
    }
}

impl RunConfig {
    /// File (if any), then environment overrides, then validation.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(RunConfig::default())
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let file: toml::Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            merge(&mut table, file);
        }
        apply_env(&mut table, env)?;
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.problem.params().validate()?;
        self.solver.validate()?;
        self.schedule.validate()?;
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        if self.scan.points < 4 {
            return Err(CliError::Config("scan.points must be at least 4".into()));
        }
        if !(self.verify.sweep_step > 0.0 && self.verify.sweep_max > 0.0 && self.verify.tol > 0.0) {
            return Err(CliError::Config(
                "verify sweep and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Recursive overlay. A table whose `kind` tag changes is replaced whole,
/// since its other keys belong to the old variant.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if b.get("kind") == o.get("kind") || !o.contains_key("kind") =>
            {
                merge(b, o)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `PINWHEEL_SOLVER__MAX_ITERS=500` sets `solver.max_iters`. Values are
/// parsed as TOML literals and fall back to strings. Variables without a
/// `__` separator belong to the command-line flags.
fn apply_env(
    table: &mut toml::Table,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.contains("__"))
        .collect();
    // A `kind` switch clears the variant's keys, so it goes before its siblings.
    vars.sort_by_key(|(k, _)| (!k.ends_with("__KIND"), k.clone()));
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override {key}")));
        }
        let value = match format!("v = {raw}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.clone()),
        };
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node
                .entry(part.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("{key}: '{part}' is not a table")))?;
        }
        let leaf = path.last().unwrap().clone();
        if leaf == "kind" && node.get("kind") != Some(&value) {
            node.clear();
        }
        node.insert(leaf, value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let cfg = RunConfig::load(
            None,
            env(&[
                ("PINWHEEL_SOLVER__MAX_ITERS", "17"),
                ("PINWHEEL_PROBLEM__BETA", "-4.5"),
                ("PINWHEEL_GRID__KIND", "cartesian"),
                ("PINWHEEL_GRID__N", "9"),
                ("PINWHEEL_GRID__HALF_WIDTH", "3.0"),
                ("PINWHEEL_SEED", "ignored here"),
                ("OTHER__X", "1"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.solver.max_iters, 17);
        assert_eq!(cfg.problem.beta, -4.5);
        assert_eq!(
            cfg.grid,
            GridConfig::Cartesian {
                n: 9,
                half_width: 3.0
            }
        );
        let cfg = RunConfig::load(None, env(&[("PINWHEEL_GRID__NR", "32")])).unwrap();
        assert_eq!(
            cfg.grid,
            GridConfig::Polar {
                nr: 32,
                ntheta: 120,
                radius: 16.0
            }
        );
    }

    #[test]
    fn file_overlays_defaults_and_switches_variants() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\n[solver]\nmax_iters = 9\n[grid]\nkind = \"cartesian\"\nn = 11\nhalf_width = 4.0\n")
            .unwrap();
        let cfg = RunConfig::load(Some(&path), env(&[("PINWHEEL_PROBLEM__D", "1")])).unwrap();
        assert_eq!((cfg.seed, cfg.solver.max_iters, cfg.problem.d), (7, 9, 1));
        assert_eq!(cfg.solver.tol, SolveOptions::default().tol);
        assert_eq!(
            cfg.grid,
            GridConfig::Cartesian {
                n: 11,
                half_width: 4.0
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, env(&[("PINWHEEL_SOLVER__MAX_ITER", "3")])).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn grid_dimension_must_match_problem() {
        assert!(GridConfig::default().build(3).is_err());
        assert_eq!(
            GridConfig::Cartesian {
                n: 5,
                half_width: 1.0
            }
            .build(3)
            .unwrap()
            .dim(),
            3
        );
    }

    #[test]
    fn scan_grid_defaults_and_overrides() {
        let s = ScanConfig::default();
        assert_eq!(s.r_grid(1.0), default_r_grid(1.0));
        let g = ScanConfig {
            r_min: Some(2.0),
            r_max: Some(8.0),
            points: 5,
            ..Default::default()
        }
        .r_grid(1.0);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[4] - 8.0).abs() < 1e-12);
    }
}

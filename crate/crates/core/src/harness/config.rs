//! Experiment configuration: `key = value` files plus flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::geometry::ManifoldModel;
use crate::graph::{default_epsilon, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Spectral,
    Poisson,
    Extension,
    Hminus1,
    Plugin,
    Lowerbound,
}

impl Study {
    pub const ALL: [Study; 6] = [
        Study::Spectral,
        Study::Poisson,
        Study::Extension,
        Study::Hminus1,
        Study::Plugin,
        Study::Lowerbound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::Spectral => "spectral",
            Study::Poisson => "poisson",
            Study::Extension => "extension",
            Study::Hminus1 => "hminus1",
            Study::Plugin => "plugin",
            Study::Lowerbound => "lowerbound",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown study '{s}'")))
    }
}

/// Everything needed to reproduce one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: Study,
    /// `torus1`, `torus2`, `torus3` or `sphere2`.
    pub manifold: String,
    /// `uniform`, `bump:<m>` (all signs +1) or `bump:<m>:<signs>` with signs
    /// written as a string of `+` and `-`.
    pub density: String,
    /// `tent` or `smoothstep`.
    pub kernel: String,
    pub l: usize,
    pub n_list: Vec<usize>,
    pub trials: usize,
    /// Constant in `ε = c (ln n / n)^{1/(d+4)}`; `None` picks the manifold
    /// default.
    pub eps_const: Option<f64>,
    pub seed: u64,
    pub mc_points: usize,
    pub out_dir: PathBuf,
    /// Explicit ε sweep (poisson); empty means the default rule.
    pub eps_list: Vec<f64>,
    /// Grid nodes per axis (plugin, lowerbound).
    pub grid: usize,
    /// Bump counts per axis (lowerbound).
    pub m_list: Vec<usize>,
    /// KDE bandwidth constant (plugin).
    pub c_bw: f64,
    /// Worker threads for trials; 0 uses the available parallelism.
    pub workers: usize,
}

/// Default `c_eps` on the torus.
pub const TORUS_EPS_CONST: f64 = 1.5;
/// Default `c_eps` on the sphere.
pub const SPHERE_EPS_CONST: f64 = 2.0;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: Study::Spectral,
            manifold: "torus2".into(),
            density: "uniform".into(),
            kernel: "tent".into(),
            l: 2,
            n_list: vec![1000, 2000, 4000],
            trials: 3,
            eps_const: None,
            seed: 1,
            mc_points: 10_000,
            out_dir: PathBuf::from("results"),
            eps_list: Vec::new(),
            grid: 1024,
            m_list: vec![4, 8, 16],
            c_bw: 0.4,
            workers: 1,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn for_study(study: Study) -> Self {
        Self {
            study,
            ..Self::default()
        }
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// ignored and unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "study" => self.study = value.parse()?,
            "manifold" => self.manifold = value.to_string(),
            "density" => self.density = value.to_string(),
            "kernel" => self.kernel = value.to_string(),
            "l" => self.l = parse_num(key, value)?,
            "n_list" => self.n_list = parse_list(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "eps_const" => {
                self.eps_const = match value {
                    "" | "default" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "mc_points" => self.mc_points = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "eps_list" => self.eps_list = parse_list(key, value)?,
            "grid" => self.grid = parse_num(key, value)?,
            "m_list" => self.m_list = parse_list(key, value)?,
            "c_bw" => self.c_bw = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Config("l must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.study != Study::Lowerbound {
            if self.n_list.is_empty() {
                return Err(Error::Config("n_list is empty".into()));
            }
            if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("n_list must be strictly increasing".into()));
            }
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("eps_list entries must lie in (0, 1)".into()));
        }
        if let Some(c) = self.eps_const {
            if !(c > 0.0) {
                return Err(Error::Config("eps_const must be positive".into()));
            }
        }
        if !(self.c_bw > 0.0) {
            return Err(Error::Config("c_bw must be positive".into()));
        }
        self.manifold_model()?;
        self.density_model()?;
        self.kernel()?;
        Ok(())
    }

    pub fn manifold_model(&self) -> Result<ManifoldModel> {
        ManifoldModel::parse(&self.manifold)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::parse(&self.kernel)
    }

    pub fn density_model(&self) -> Result<DensityModel> {
        let model = self.manifold_model()?;
        parse_density(&model, &self.density)
    }

    /// `c_eps` in effect: the configured value or the manifold default.
    pub fn eps_constant(&self) -> Result<f64> {
        Ok(match self.eps_const {
            Some(c) => c,
            None if self.manifold_model()?.is_torus() => TORUS_EPS_CONST,
            None => SPHERE_EPS_CONST,
        })
    }

    /// Default ε for sample size `n`.
    pub fn eps_for(&self, n: usize) -> Result<f64> {
        let d = self.manifold_model()?.intrinsic_dim;
        Ok(default_epsilon(n, d, self.eps_constant()?))
    }
}

/// Parses a density description against `model`.
pub fn parse_density(model: &ManifoldModel, spec: &str) -> Result<DensityModel> {
    let spec = spec.trim();
    if spec == "uniform" {
        return Ok(DensityModel::uniform(model));
    }
    let mut parts = spec.split(':');
    if parts.next() != Some("bump") {
        return Err(Error::Config(format!("unknown density '{spec}'")));
    }
    let m: usize = parse_num("density", parts.next().unwrap_or(""))?;
    let cells = m.checked_pow(model.intrinsic_dim as u32).unwrap_or(usize::MAX);
    let signs = match parts.next() {
        None => vec![1; cells.min(1 << 20)],
        Some(s) => s
            .chars()
            .map(|ch| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(Error::Config(format!("invalid sign '{ch}' in density"))),
            })
            .collect::<Result<Vec<i8>>>()?,
    };
    if parts.next().is_some() {
        return Err(Error::Config(format!("malformed density '{spec}'")));
    }
    DensityModel::bump(model, m, signs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_lines() {
        let cfg = ExperimentConfig::parse(
            "study = poisson\n# comment\nn_list = 100, 200\n\ntrials=2\neps_list = 0.2,0.3\nseed = 9 # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.study, Study::Poisson);
        assert_eq!(cfg.n_list, vec![100, 200]);
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.eps_list, vec![0.2, 0.3]);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("n_list = 200, 100").is_err());
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("l = 0").is_err());
        assert!(ExperimentConfig::parse("study = nonsense").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
        assert!(ExperimentConfig::parse("manifold = klein").is_err());
        assert!(ExperimentConfig::parse("density = bump:4:+x+-").is_err());
    }

    #[test]
    fn eps_defaults_depend_on_manifold() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.eps_constant().unwrap(), TORUS_EPS_CONST);
        cfg.manifold = "sphere2".into();
        assert_eq!(cfg.eps_constant().unwrap(), SPHERE_EPS_CONST);
        cfg.eps_const = Some(3.0);
        assert_eq!(cfg.eps_constant().unwrap(), 3.0);
    }

    #[test]
    fn density_descriptions() {
        let t1 = ManifoldModel::torus(1).unwrap();
        let d = parse_density(&t1, "bump:4:+-+-").unwrap();
        assert_eq!(d.name(), "bump4");
        assert!(parse_density(&t1, "bump:4").is_ok());
        assert!(parse_density(&t1, "bump:4:++").is_err());
        assert!(parse_density(&t1, "gaussian").is_err());
    }
}

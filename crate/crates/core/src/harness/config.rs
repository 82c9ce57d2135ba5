use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptConfig, RefineVariant};
use crate::error::{Error, Result};
use crate::fom::BurgersConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    /// Training inputs `(mu1, mu2)`.
    pub mu: Vec<[f64; 2]>,
    /// Snapshots `w^1 .. w^n_steps` are kept from each training run.
    pub n_steps: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        TrainingSpec {
            mu: vec![[3.0, 0.02]],
            n_steps: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSpec {
    pub mu: [f64; 2],
    /// Initial basis size.
    pub p0: usize,
    pub adaptive: bool,
}

impl Default for OnlineSpec {
    fn default() -> Self {
        OnlineSpec {
            mu: [3.0, 0.02],
            p0: 10,
            adaptive: true,
        }
    }
}

/// One row of a sweep: overrides applied on top of the base spec.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub p0: Option<usize>,
    pub adaptive: Option<bool>,
    pub fom_tol: Option<f64>,
    pub reset_freq: Option<usize>,
    pub variant: Option<RefineVariant>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub burgers: BurgersConfig,
    pub training: TrainingSpec,
    pub online: OnlineSpec,
    pub adapt: AdaptConfig,
    #[serde(rename = "case")]
    pub cases: Vec<CaseSpec>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            seed: 0,
            output_dir: PathBuf::from("out"),
            burgers: BurgersConfig::default(),
            training: TrainingSpec::default(),
            online: OnlineSpec::default(),
            adapt: AdaptConfig::default(),
            cases: Vec::new(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.burgers.validate()?;
        self.adapt.validate()?;
        if self.training.mu.is_empty() {
            return Err(Error::Config("at least one training input is required".into()));
        }
        if self.training.n_steps == 0 || self.training.n_steps > self.burgers.n_steps {
            return Err(Error::Config(format!(
                "training n_steps must lie in 1..={}, got {}",
                self.burgers.n_steps, self.training.n_steps
            )));
        }
        if self.online.p0 == 0 {
            return Err(Error::Config("p0 must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.cases.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("sweep case names must be unique".into()));
        }
        for case in &self.cases {
            self.with_case(case).validate()?;
        }
        Ok(())
    }

    /// This experiment with `case`'s overrides applied (and no nested cases).
    pub fn with_case(&self, case: &CaseSpec) -> ExperimentSpec {
        let mut s = self.clone();
        s.cases.clear();
        if let Some(p0) = case.p0 {
            s.online.p0 = p0;
        }
        if let Some(a) = case.adaptive {
            s.online.adaptive = a;
        }
        if let Some(t) = case.fom_tol {
            s.adapt.fom_tol = t;
        }
        if let Some(c) = case.reset_freq {
            s.adapt.reset_freq = c;
        }
        if let Some(v) = case.variant {
            s.adapt.variant = v;
        }
        s
    }
}

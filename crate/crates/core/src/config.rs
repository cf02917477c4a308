//! Declarative run configuration (TOML).
//!
//! ```toml
//! [session]
//! treatment = "session"
//! rounds = 80
//! seed = 7
//!
//! [run]
//! replications = 50
//! cell = "us-session"
//!
//! [[roster]]
//! count = 3
//! kind = "free_rider"
//!
//! [[roster]]
//! count = 9
//! kind = "tobit_latent"
//! preset = "us-session"
//! noise_sigma = 20
//! ```
//!
//! `count` is the "k x spec" shorthand; entries expand in order to subject ids
//! 0, 1, 2, ...

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentSpec, CoefficientRecord, InitialDraw};
use crate::error::{Error, Result};
use crate::game::SessionConfig;
use crate::simulator::RunSpec;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub replications: Option<u32>,
    /// Overrides `session.seed` when present.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub session_prefix: Option<String>,
    pub cell: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    #[serde(default = "one")]
    pub count: usize,
    pub kind: AgentKind,
    /// Name of a built-in coefficient set, see [`CoefficientRecord::preset`].
    pub preset: Option<String>,
    pub coefficients: Option<CoefficientRecord>,
    pub noise_sigma: Option<f64>,
    pub initial: Option<InitialDraw>,
}

fn one() -> usize {
    1
}

impl RosterEntry {
    pub fn to_spec(&self) -> Result<AgentSpec> {
        let coefficients = match (&self.preset, &self.coefficients) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `preset` or `coefficients`, not both".into()))
            }
            (Some(name), None) => Some(
                CoefficientRecord::preset(name)
                    .ok_or_else(|| Error::Config(format!("unknown coefficient preset `{name}`")))?,
            ),
            (None, c) => *c,
        };
        Ok(AgentSpec {
            kind: self.kind,
            coefficients,
            noise_sigma: self.noise_sigma.unwrap_or(AgentSpec::DEFAULT_SIGMA),
            initial: self.initial.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub run: RunSection,
    pub roster: Vec<RosterEntry>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn expand_roster(&self) -> Result<Vec<AgentSpec>> {
        let mut roster = Vec::new();
        for entry in &self.roster {
            let spec = entry.to_spec()?;
            roster.extend(std::iter::repeat_n(spec, entry.count));
        }
        Ok(roster)
    }

    pub fn to_run_spec(&self) -> Result<RunSpec> {
        let mut spec = RunSpec::new(self.session.clone(), self.expand_roster()?);
        if let Some(seed) = self.run.seed {
            spec.seed = seed;
            spec.config.seed = seed;
        }
        spec.replications = self.run.replications.unwrap_or(1);
        if let Some(o) = &self.run.output {
            spec.output = o.clone();
        }
        spec.cell = self.run.cell.clone();
        spec.session_prefix = self
            .run
            .session_prefix
            .clone()
            .or_else(|| self.run.cell.clone())
            .unwrap_or_else(|| "sim".into());
        spec.validate()?;
        Ok(spec)
    }
}

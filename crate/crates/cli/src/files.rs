//! JSON problem files.
//!
//! Every file is an object with a `kind` tag and an optional free-text `about`:
//!
//! ```json
//! {"kind": "lv", "about": "…", "problem": {"k1": …, "k2": …, "s": …, "mu": 1.5}}
//! ```

use std::path::Path;

use extremal_core::info::GaussianMixture;
use extremal_core::path::{Auxiliaries, BcPath, CostaPath, LvPath, SecPath};
use extremal_core::solvers::{BcFamily, BcProblem, CostaProblem, LvProblem, SecFamily, SecProblem};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub about: String,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    /// `x` is the source used by `path`; it defaults to `N(0, S)`.
    Lv { problem: LvProblem, x: Option<GaussianMixture> },
    Costa { problem: CostaProblem, x: Option<GaussianMixture> },
    /// `aux` defaults to the Gaussian auxiliaries built from the solution.
    Bc { problem: BcProblem, aux: Option<Auxiliaries> },
    Sec { problem: SecProblem, aux: Option<Auxiliaries> },
    LvPath { path: LvPath },
    CostaPath { path: CostaPath },
    BcPath { path: BcPath },
    SecPath { path: SecPath },
    BcRegion { family: BcFamily },
    SecRegion { family: SecFamily },
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Lv { .. } => "lv",
            Body::Costa { .. } => "costa",
            Body::Bc { .. } => "bc",
            Body::Sec { .. } => "sec",
            Body::LvPath { .. } => "lv_path",
            Body::CostaPath { .. } => "costa_path",
            Body::BcPath { .. } => "bc_path",
            Body::SecPath { .. } => "sec_path",
            Body::BcRegion { .. } => "bc_region",
            Body::SecRegion { .. } => "sec_region",
        }
    }
}

pub fn load(path: &Path) -> CliResult<ProblemFile> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

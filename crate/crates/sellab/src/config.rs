//! Run configuration: a TOML file, overridden field by field by flags.
//!
//! ```toml
//! threads = 4
//! methods = ["mle", "nls", "matching", "sieve"]
//!
//! [design]
//! n = 20000
//! p = 10
//! errors = "cauchy"        # or "normal"
//! seed = 0
//! replications = 50
//!
//! [first_stage]            # also [sieve]
//! learning_rate = 1.0
//! max_iterations = 1000000
//! tolerance = 1e-6
//! sieve_order = "auto"     # or a fixed order
//! max_sieve_order = 6
//! ridge = 1e-10
//!
//! [matching]
//! learning_rate = 1.0
//! neighbors = 1
//! stability_rounds = 50
//! max_iterations = 1000000
//!
//! [parametric]
//! restarts = 5
//! seed = 0
//! start_spread = 1.0
//! max_iterations = 500
//! gradient_tolerance = 1e-6
//!
//! [input]
//! path = "data.csv"
//! selection_normalized = "z0"
//! selection_free = ["z1", "z2"]
//! outcome_normalized = "x0"
//! outcome_free = ["x1", "x2"]
//! d = "d"
//! y = "y"
//! selection_sign = 1
//! outcome_sign = -1
//! standardize = true
//! binarize_outcome = false
//!
//! [output]
//! path = "report.csv"
//! text = "report.txt"
//! ```
//!
//! Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sellab_core::simlab::{ErrorLaw, Method, MethodSettings};
use sellab_core::stage1::{GdConfig, SieveOrder};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },

    #[error("{0}")]
    Parse(#[from] toml::de::Error),

    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub design: Option<DesignSection>,
    pub first_stage: Option<GdSection>,
    pub sieve: Option<GdSection>,
    pub matching: Option<MatchingSection>,
    pub parametric: Option<ParametricSection>,
    pub input: Option<InputSection>,
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub errors: Option<String>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OrderValue {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GdSection {
    pub learning_rate: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub sieve_order: Option<OrderValue>,
    pub max_sieve_order: Option<usize>,
    pub ridge: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatchingSection {
    pub learning_rate: Option<f64>,
    pub neighbors: Option<usize>,
    pub stability_rounds: Option<usize>,
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParametricSection {
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub start_spread: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub path: Option<PathBuf>,
    pub selection_normalized: Option<String>,
    pub selection_free: Option<Vec<String>>,
    pub outcome_normalized: Option<String>,
    pub outcome_free: Option<Vec<String>>,
    pub d: Option<String>,
    pub y: Option<String>,
    pub selection_sign: Option<f64>,
    pub outcome_sign: Option<f64>,
    pub standardize: Option<bool>,
    pub binarize_outcome: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub text: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

pub fn parse_error_law(s: &str) -> Result<ErrorLaw, ConfigError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "normal" => Ok(ErrorLaw::NormalPair),
        "cauchy" => Ok(ErrorLaw::CauchyPair),
        other => invalid(format!("unknown error law `{other}` (expected normal or cauchy)")),
    }
}

/// Parses method names, rejecting unknown and repeated entries.
pub fn parse_methods<S: AsRef<str>>(names: &[S]) -> Result<Vec<Method>, ConfigError> {
    let mut out = Vec::new();
    for name in names {
        let Some(m) = Method::parse(name.as_ref()) else {
            return invalid(format!("unknown method `{}`", name.as_ref()));
        };
        if out.contains(&m) {
            return invalid(format!("method `{}` listed twice", name.as_ref()));
        }
        out.push(m);
    }
    if out.is_empty() {
        return invalid("no methods selected");
    }
    Ok(out)
}

fn apply_gd(base: &mut GdConfig, s: &GdSection, what: &str) -> Result<(), ConfigError> {
    if let Some(v) = s.learning_rate {
        base.learning_rate = v;
    }
    if let Some(v) = s.max_iterations {
        base.max_iterations = v;
    }
    if let Some(v) = s.tolerance {
        base.tolerance = v;
    }
    if let Some(v) = s.ridge {
        base.ridge = v;
    }
    let max = s.max_sieve_order.unwrap_or(6);
    if max == 0 {
        return invalid(format!("[{what}] max_sieve_order must be at least 1"));
    }
    base.sieve_order = match &s.sieve_order {
        Some(OrderValue::Fixed(q)) => SieveOrder::Fixed(*q),
        Some(OrderValue::Named(a)) if a == "auto" => SieveOrder::auto_up_to(max),
        Some(OrderValue::Named(other)) => return invalid(format!("[{what}] sieve_order `{other}` is neither an integer nor \"auto\"")),
        None => SieveOrder::auto_up_to(max),
    };
    base.validate().map_err(|e| ConfigError::Invalid(format!("[{what}] {e}")))
}

/// Estimator settings with every section of `file` applied.
pub fn method_settings(file: &FileConfig) -> Result<MethodSettings, ConfigError> {
    let mut s = MethodSettings::default();
    apply_gd(&mut s.first_stage, file.first_stage.as_ref().unwrap_or(&GdSection::default()), "first_stage")?;
    apply_gd(&mut s.sieve, file.sieve.as_ref().unwrap_or(&GdSection::default()), "sieve")?;
    if let Some(m) = &file.matching {
        if let Some(v) = m.learning_rate {
            s.matching.learning_rate = v;
        }
        if let Some(v) = m.neighbors {
            s.neighbors = v;
        }
        if let Some(v) = m.stability_rounds {
            s.matching_termination.stability_rounds = v;
        }
        if let Some(v) = m.max_iterations {
            s.matching_termination.max_iterations = v;
        }
    }
    s.matching.validate().map_err(|e| ConfigError::Invalid(format!("[matching] {e}")))?;
    s.matching_termination
        .validate()
        .map_err(|e| ConfigError::Invalid(format!("[matching] {e}")))?;
    if s.neighbors == 0 {
        return invalid("[matching] neighbors must be at least 1");
    }
    if let Some(p) = &file.parametric {
        if let Some(v) = p.restarts {
            s.parametric.restarts = v;
        }
        if let Some(v) = p.seed {
            s.parametric.seed = v;
        }
        if let Some(v) = p.start_spread {
            s.parametric.start_spread = v;
        }
        if let Some(v) = p.max_iterations {
            s.parametric.bfgs.max_iterations = v;
        }
        if let Some(v) = p.gradient_tolerance {
            s.parametric.bfgs.gradient_tolerance = v;
        }
    }
    if !(s.parametric.start_spread >= 0.0 && s.parametric.start_spread.is_finite()) {
        return invalid("[parametric] start_spread must be a nonnegative number");
    }
    if !(s.parametric.bfgs.gradient_tolerance > 0.0) || s.parametric.bfgs.max_iterations == 0 {
        return invalid("[parametric] max_iterations and gradient_tolerance must be positive");
    }
    Ok(s)
}

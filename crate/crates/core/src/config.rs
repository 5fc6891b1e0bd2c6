//! Declarative run configuration (TOML) and the named agent presets.
//!
//! A config names the domain, the agent condition, learning parameters, the
//! protocol, and the similarity, shaping and abstraction components. A file
//! may start from a preset with `preset = "<name>"` and override any key.
//!
//! ```toml
//! preset = "pursuit_expert_qs"
//! seed = 42
//!
//! [protocol]
//! repeats = 2
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{AbstractionMap, PursuitTiles, SoccerDistance};
use crate::envs::grid::GridSpace;
use crate::envs::grid::GridSpec;
use crate::envs::pursuit::PursuitSpace;
use crate::envs::pursuit::{self, PreyBehavior, PursuitControl};
use crate::envs::soccer::SoccerSpace;
use crate::envs::soccer::{self, Cell, SoccerLayout};
use crate::envs::{Domain, StateSpace};
use crate::harness::report::{write_run_outputs, ReportError};
use crate::harness::{run_protocol, AgentSetup, EnvSpec, HarnessError, Protocol, RunReport};
use crate::learning::{LearnerKind, LearnerSpec};
use crate::shaping::{
    pbrs_from_potential, GridDistancePotential, PursuitStepShaping, ShapingFunction,
    SoccerPotential,
};
use crate::similarity::{
    compose, sample_pairs, validate, GridMirror, Kronecker, PursuitMirror, PursuitRotation,
    PursuitTransition, SharedSimilarity, SimilarityError, SoccerMirror, SoccerTranslation,
    ValidationReport,
};
use crate::table::LearningParams;

/// File name of the echoed effective config in a run's output directory.
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// The agent conditions: plain Q, similarity (S), abstraction (A), shaping (R),
/// and similarity with shaping (RS).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AgentPreset {
    Q,
    Qs,
    Qa,
    Qr,
    Qrs,
}

impl AgentPreset {
    pub fn label(self) -> &'static str {
        match self {
            AgentPreset::Q => "Q",
            AgentPreset::Qs => "QS",
            AgentPreset::Qa => "QA",
            AgentPreset::Qr => "QR",
            AgentPreset::Qrs => "QRS",
        }
    }

    fn needs(self) -> (bool, bool, bool) {
        // (similarity, shaping, abstraction)
        match self {
            AgentPreset::Q => (false, false, false),
            AgentPreset::Qs => (true, false, false),
            AgentPreset::Qa => (false, false, true),
            AgentPreset::Qr => (false, true, false),
            AgentPreset::Qrs => (true, true, false),
        }
    }
}

/// One similarity component, `{ notion = "...", params... }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "notion", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimilaritySpec {
    Kronecker {},
    SoccerTranslation {
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default = "default_radius")]
        radius: i32,
    },
    SoccerMirror {},
    PursuitRotation {},
    PursuitMirror {},
    PursuitTransition {
        #[serde(default = "default_transition_weight")]
        weight: f64,
    },
    GridMirror {},
}

fn default_decay() -> f64 {
    SoccerTranslation::DEFAULT_DECAY
}

fn default_radius() -> i32 {
    SoccerTranslation::DEFAULT_RADIUS
}

impl SimilaritySpec {
    pub fn domain(&self) -> Option<Domain> {
        match self {
            SimilaritySpec::Kronecker {} => None,
            SimilaritySpec::SoccerTranslation { .. } | SimilaritySpec::SoccerMirror {} => {
                Some(Domain::Soccer)
            }
            SimilaritySpec::PursuitRotation {}
            | SimilaritySpec::PursuitMirror {}
            | SimilaritySpec::PursuitTransition { .. } => Some(Domain::Pursuit),
            SimilaritySpec::GridMirror {} => Some(Domain::OracleGrid),
        }
    }

    /// Builds the function. With `checked` false, out-of-range parameters are
    /// passed through so the validator can report them.
    pub fn build(
        &self,
        domain: Domain,
        env: &EnvConfig,
        checked: bool,
    ) -> Result<SharedSimilarity, ConfigError> {
        if let Some(d) = self.domain() {
            if d != domain {
                return invalid(format!("similarity {self:?} is for {d}, not {domain}"));
            }
        }
        let control = env.control;
        Ok(match *self {
            SimilaritySpec::Kronecker {} => Arc::new(Kronecker { domain }),
            SimilaritySpec::SoccerTranslation { decay, radius } => {
                if checked {
                    Arc::new(SoccerTranslation::new(decay, radius)?)
                } else {
                    Arc::new(SoccerTranslation::new_unchecked(decay, radius))
                }
            }
            SimilaritySpec::SoccerMirror {} => Arc::new(SoccerMirror),
            SimilaritySpec::PursuitRotation {} => Arc::new(PursuitRotation { control }),
            SimilaritySpec::PursuitMirror {} => Arc::new(PursuitMirror { control }),
            SimilaritySpec::PursuitTransition { weight } => {
                if checked {
                    Arc::new(PursuitTransition::new(control, weight)?)
                } else {
                    Arc::new(PursuitTransition { control, weight })
                }
            }
            SimilaritySpec::GridMirror {} => Arc::new(GridMirror {
                spec: env.grid_spec(),
            }),
        })
    }
}

/// Builds the union of `specs`; a single component is used as is.
pub fn build_similarity(
    specs: &[SimilaritySpec],
    domain: Domain,
    env: &EnvConfig,
    checked: bool,
) -> Result<SharedSimilarity, ConfigError> {
    let parts = specs
        .iter()
        .map(|s| s.build(domain, env, checked))
        .collect::<Result<Vec<_>, _>>()?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    Ok(Arc::new(compose(parts)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarityFile {
    similarity: Vec<SimilaritySpec>,
}

/// Parses a similarity spec given either as TOML with `[[similarity]]`
/// tables or as a comma-separated list of parameterless notion names.
pub fn parse_similarity_specs(text: &str) -> Result<Vec<SimilaritySpec>, ConfigError> {
    let specs = if text.contains('=') || text.contains('[') {
        toml::from_str::<SimilarityFile>(text)
            .map_err(|e| ConfigError::Parse(e.to_string()))?
            .similarity
    } else {
        text.split(',')
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .map(|n| {
                toml::from_str::<SimilaritySpec>(&format!("notion = \"{n}\""))
                    .map_err(|_| ConfigError::Parse(format!("unknown similarity notion `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    if specs.is_empty() {
        return Err(ConfigError::Similarity(SimilarityError::Empty));
    }
    Ok(specs)
}

/// Builds the spec without parameter checks and validates it on `samples`
/// random pairs of the domain's reachable state space.
pub fn validate_similarity_specs(
    specs: &[SimilaritySpec],
    domain: Domain,
    env: &EnvConfig,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport, ConfigError> {
    let sigma = build_similarity(specs, domain, env, false)?;
    let space = env.state_space(domain);
    let pairs = sample_pairs(space.as_ref(), samples, &mut crate::seeded_rng(seed));
    Ok(validate(sigma.as_ref(), space.as_ref(), &pairs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapingSpec {
    None {},
    PbrsSoccer {
        #[serde(default = "default_soccer_scale")]
        scale: f64,
    },
    PursuitMicro {
        #[serde(default = "default_micro")]
        scale: f64,
    },
    PbrsGrid {
        #[serde(default = "default_soccer_scale")]
        scale: f64,
    },
}

impl Default for ShapingSpec {
    fn default() -> Self {
        ShapingSpec::None {}
    }
}

fn default_soccer_scale() -> f64 {
    SoccerPotential::DEFAULT_SCALE
}

fn default_micro() -> f64 {
    PursuitStepShaping::DEFAULT_MAGNITUDE
}

impl ShapingSpec {
    fn domain(&self) -> Option<Domain> {
        match self {
            ShapingSpec::None {} => None,
            ShapingSpec::PbrsSoccer { .. } => Some(Domain::Soccer),
            ShapingSpec::PursuitMicro { .. } => Some(Domain::Pursuit),
            ShapingSpec::PbrsGrid { .. } => Some(Domain::OracleGrid),
        }
    }

    pub fn build(&self, gamma: f64, env: &EnvConfig) -> Option<Arc<dyn ShapingFunction>> {
        match *self {
            ShapingSpec::None {} => None,
            ShapingSpec::PbrsSoccer { scale } => Some(Arc::new(pbrs_from_potential(
                SoccerPotential { scale },
                gamma,
            ))),
            ShapingSpec::PursuitMicro { scale } => {
                Some(Arc::new(PursuitStepShaping { magnitude: scale }))
            }
            ShapingSpec::PbrsGrid { scale } => Some(Arc::new(pbrs_from_potential(
                GridDistancePotential {
                    spec: env.grid_spec(),
                    scale,
                },
                gamma,
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbstractionSpec {
    None {},
    SoccerDistance {},
    PursuitTiles {
        #[serde(default = "default_tiles")]
        tiles_per_dim: u64,
    },
}

impl Default for AbstractionSpec {
    fn default() -> Self {
        AbstractionSpec::None {}
    }
}

fn default_tiles() -> u64 {
    PursuitTiles::DEFAULT_TILES
}

impl AbstractionSpec {
    fn domain(&self) -> Option<Domain> {
        match self {
            AbstractionSpec::None {} => None,
            AbstractionSpec::SoccerDistance {} => Some(Domain::Soccer),
            AbstractionSpec::PursuitTiles { .. } => Some(Domain::Pursuit),
        }
    }

    pub fn build(&self) -> Option<Arc<dyn AbstractionMap>> {
        match *self {
            AbstractionSpec::None {} => None,
            AbstractionSpec::SoccerDistance {} => Some(Arc::new(SoccerDistance)),
            AbstractionSpec::PursuitTiles { tiles_per_dim } => {
                Some(Arc::new(PursuitTiles::new(tiles_per_dim)))
            }
        }
    }
}

/// Environment settings. Keys that do not apply to the configured domain are
/// ignored; `step_cap = 0` selects the domain default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub step_cap: usize,
    pub control: PursuitControl,
    pub prey: PreyBehavior,
    pub agent_start: [i32; 2],
    pub opponent_start: [i32; 2],
    pub grid_size: [usize; 2],
    pub grid_goal: [usize; 2],
}

impl Default for EnvConfig {
    fn default() -> Self {
        let layout = SoccerLayout::default();
        let grid = GridSpec::five_by_five();
        EnvConfig {
            step_cap: 0,
            control: PursuitControl::default(),
            prey: PreyBehavior::default(),
            agent_start: [layout.agent.x, layout.agent.y],
            opponent_start: [layout.opponent.x, layout.opponent.y],
            grid_size: [grid.width, grid.height],
            grid_goal: [grid.goal.0, grid.goal.1],
        }
    }
}

impl EnvConfig {
    pub const GRID_STEP_CAP: usize = 200;

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            width: self.grid_size[0],
            height: self.grid_size[1],
            goal: (self.grid_goal[0], self.grid_goal[1]),
            goal_reward: 1.0,
        }
    }

    fn default_cap(domain: Domain) -> usize {
        match domain {
            Domain::Soccer => soccer::DEFAULT_STEP_CAP,
            Domain::Pursuit => pursuit::DEFAULT_STEP_CAP,
            Domain::OracleGrid => Self::GRID_STEP_CAP,
        }
    }

    pub fn state_space(&self, domain: Domain) -> Box<dyn StateSpace> {
        match domain {
            Domain::Soccer => Box::new(SoccerSpace),
            Domain::Pursuit => Box::new(PursuitSpace {
                control: self.control,
            }),
            Domain::OracleGrid => Box::new(GridSpace {
                spec: self.grid_spec(),
            }),
        }
    }

    pub fn spec(&self, domain: Domain) -> Result<EnvSpec, ConfigError> {
        let step_cap = if self.step_cap == 0 {
            Self::default_cap(domain)
        } else {
            self.step_cap
        };
        Ok(match domain {
            Domain::Soccer => {
                let agent = Cell::new(self.agent_start[0], self.agent_start[1]);
                let opponent = Cell::new(self.opponent_start[0], self.opponent_start[1]);
                if !agent.on_grid() || !opponent.on_grid() || agent == opponent {
                    return invalid("soccer start cells must be distinct cells of the 8x8 grid");
                }
                EnvSpec::Soccer {
                    layout: SoccerLayout { agent, opponent },
                    step_cap,
                }
            }
            Domain::Pursuit => EnvSpec::Pursuit {
                control: self.control,
                prey: self.prey,
                step_cap,
            },
            Domain::OracleGrid => {
                let spec = self.grid_spec();
                spec.validate()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                EnvSpec::Grid { spec, step_cap }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Agent name used in reports; defaults to the agent label.
    #[serde(default)]
    pub name: String,
    pub domain: Domain,
    pub agent: AgentPreset,
    /// Master seed of the run.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; empty means `runs/<name>`.
    #[serde(default)]
    pub out: String,
    #[serde(default)]
    pub params: LearningParams,
    pub protocol: Protocol,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub similarity: Vec<SimilaritySpec>,
    #[serde(default)]
    pub shaping: ShapingSpec,
    #[serde(default)]
    pub abstraction: AbstractionSpec,
}

/// Names of the built-in presets.
pub mod preset {
    pub const SOCCER_EXPERT_Q: &str = "soccer_expert_q";
    pub const SOCCER_EXPERT_QS: &str = "soccer_expert_qs";
    pub const SOCCER_EXPERT_QA: &str = "soccer_expert_qa";
    pub const SOCCER_EXPERT_QR: &str = "soccer_expert_qr";
    pub const SOCCER_EXPERT_QRS: &str = "soccer_expert_qrs";
    pub const PURSUIT_EXPERT_Q: &str = "pursuit_expert_q";
    pub const PURSUIT_EXPERT_QS: &str = "pursuit_expert_qs";
    pub const PURSUIT_EXPERT_QA: &str = "pursuit_expert_qa";
    pub const PURSUIT_EXPERT_QR: &str = "pursuit_expert_qr";
    pub const PURSUIT_EXPERT_QRS: &str = "pursuit_expert_qrs";

    pub const ALL: [&str; 10] = [
        SOCCER_EXPERT_Q,
        SOCCER_EXPERT_QS,
        SOCCER_EXPERT_QA,
        SOCCER_EXPERT_QR,
        SOCCER_EXPERT_QRS,
        PURSUIT_EXPERT_Q,
        PURSUIT_EXPERT_QS,
        PURSUIT_EXPERT_QA,
        PURSUIT_EXPERT_QR,
        PURSUIT_EXPERT_QRS,
    ];
}

/// Training parameters of the soccer experts.
pub fn soccer_expert_params() -> LearningParams {
    LearningParams {
        alpha: 0.3,
        gamma: 0.9,
        ..LearningParams::default()
    }
}

/// Training parameters of the pursuit experts.
pub fn pursuit_expert_params() -> LearningParams {
    LearningParams {
        alpha: 0.1,
        gamma: 0.9,
        ..LearningParams::default()
    }
}

/// Predator control used by the pursuit experts.
pub const PURSUIT_EXPERT_CONTROL: PursuitControl = PursuitControl::Independent;

/// Weight the pursuit experts give to transition-similar pairs.
pub const PURSUIT_EXPERT_TRANSITION_WEIGHT: f64 = 0.1;

fn default_transition_weight() -> f64 {
    1.0
}

fn expert(domain: Domain, agent: AgentPreset) -> RunConfig {
    let (params, protocol) = match domain {
        Domain::Soccer => (soccer_expert_params(), Protocol::soccer_desk()),
        _ => (pursuit_expert_params(), Protocol::pursuit_desk()),
    };
    let mut env = EnvConfig::default();
    if domain == Domain::Pursuit {
        env.control = PURSUIT_EXPERT_CONTROL;
    }
    let name = agent.label().to_string();
    let out = format!("runs/{}_expert_{}", domain, name.to_lowercase());
    let mut cfg = RunConfig {
        name,
        domain,
        agent,
        seed: 1,
        out,
        params,
        protocol,
        env,
        similarity: Vec::new(),
        shaping: ShapingSpec::None {},
        abstraction: AbstractionSpec::None {},
    };
    match (domain, agent) {
        (Domain::Soccer, AgentPreset::Qs | AgentPreset::Qrs) => {
            cfg.similarity = vec![
                SimilaritySpec::SoccerTranslation {
                    decay: default_decay(),
                    radius: default_radius(),
                },
                SimilaritySpec::SoccerMirror {},
            ];
        }
        (Domain::Pursuit, AgentPreset::Qs) => {
            cfg.similarity = vec![
                SimilaritySpec::PursuitRotation {},
                SimilaritySpec::PursuitMirror {},
                SimilaritySpec::PursuitTransition {
                    weight: PURSUIT_EXPERT_TRANSITION_WEIGHT,
                },
            ];
        }
        // rotations are left out of the shaped agent
        (Domain::Pursuit, AgentPreset::Qrs) => {
            cfg.similarity = vec![
                SimilaritySpec::PursuitMirror {},
                SimilaritySpec::PursuitTransition {
                    weight: PURSUIT_EXPERT_TRANSITION_WEIGHT,
                },
            ];
        }
        _ => {}
    }
    if matches!(agent, AgentPreset::Qr | AgentPreset::Qrs) {
        cfg.shaping = match domain {
            Domain::Soccer => ShapingSpec::PbrsSoccer {
                scale: default_soccer_scale(),
            },
            _ => ShapingSpec::PursuitMicro {
                scale: default_micro(),
            },
        };
    }
    if agent == AgentPreset::Qa {
        cfg.abstraction = match domain {
            Domain::Soccer => AbstractionSpec::SoccerDistance {},
            _ => AbstractionSpec::PursuitTiles {
                tiles_per_dim: default_tiles(),
            },
        };
    }
    cfg
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<RunConfig, ConfigError> {
        let (domain, agent) = name
            .strip_prefix("soccer_expert_")
            .map(|a| (Domain::Soccer, a))
            .or_else(|| {
                name.strip_prefix("pursuit_expert_")
                    .map(|a| (Domain::Pursuit, a))
            })
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        let agent = match agent {
            "q" => AgentPreset::Q,
            "qs" => AgentPreset::Qs,
            "qa" => AgentPreset::Qa,
            "qr" => AgentPreset::Qr,
            "qrs" => AgentPreset::Qrs,
            _ => return Err(ConfigError::UnknownPreset(name.to_string())),
        };
        Ok(expert(domain, agent))
    }

    /// Parses a config. A top-level `preset` key starts from that preset and
    /// overlays the remaining keys, merging tables key by key.
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = match table.get("preset") {
            None => {
                toml::from_str::<RunConfig>(text).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            Some(toml::Value::String(name)) => {
                let mut base = toml::Table::try_from(RunConfig::from_preset(name)?)
                    .map_err(|e| ConfigError::Parse(e.to_string()))?;
                let mut overlay = table.clone();
                overlay.remove("preset");
                merge(&mut base, overlay);
                toml::Value::Table(base)
                    .try_into::<RunConfig>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            Some(other) => {
                return Err(ConfigError::Parse(format!(
                    "`preset` must be a string, got {other}"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Name used in reports.
    pub fn agent_name(&self) -> String {
        if self.name.is_empty() {
            self.agent.label().to_string()
        } else {
            self.name.clone()
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        if self.out.is_empty() {
            PathBuf::from("runs").join(self.agent_name())
        } else {
            PathBuf::from(&self.out)
        }
    }

    /// The fully defaulted config: names, output path, step cap and the
    /// learner seed filled in.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        cfg.name = self.agent_name();
        cfg.out = self.out_dir().to_string_lossy().into_owned();
        if cfg.env.step_cap == 0 {
            cfg.env.step_cap = EnvConfig::default_cap(self.domain);
        }
        cfg.params.seed = self.seed;
        cfg
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn learner_kind(&self) -> LearnerKind {
        LearnerKind::from_parts(!self.similarity.is_empty(), self.params.lambda > 0.0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.protocol.validate()?;
        let (sim, shape, abs) = self.agent.needs();
        let label = self.agent.label();
        let check = |needed: bool, present: bool, what: &str| -> Result<(), ConfigError> {
            match (needed, present) {
                (true, false) => invalid(format!("agent {label} needs a {what} spec")),
                (false, true) => invalid(format!("agent {label} does not use a {what} spec")),
                _ => Ok(()),
            }
        };
        check(sim, !self.similarity.is_empty(), "similarity")?;
        check(shape, self.shaping != ShapingSpec::None {}, "shaping")?;
        check(
            abs,
            self.abstraction != AbstractionSpec::None {},
            "abstraction",
        )?;
        let domain = self.domain;
        let wrong = |what: &str, d: Domain| {
            invalid(format!("{what} is for {d} but the domain is {domain}"))
        };
        if let Some(d) = self.shaping.domain().filter(|&d| d != domain) {
            return wrong("shaping", d);
        }
        if let Some(d) = self.abstraction.domain().filter(|&d| d != domain) {
            return wrong("abstraction", d);
        }
        for s in &self.similarity {
            s.build(domain, &self.env, true)?;
        }
        self.env.spec(domain)?;
        Ok(())
    }

    pub fn agent_setup(&self) -> Result<AgentSetup, ConfigError> {
        self.validate()?;
        let env = self.env.spec(self.domain)?;
        let mut params = self.params.clone();
        params.seed = self.seed;
        let mut learner = LearnerSpec::new(self.learner_kind(), params, env.num_actions());
        if !self.similarity.is_empty() {
            learner.similarity = Some(build_similarity(
                &self.similarity,
                self.domain,
                &self.env,
                true,
            )?);
        }
        learner.shaping = self.shaping.build(self.params.gamma, &self.env);
        learner.abstraction = self.abstraction.build();
        Ok(AgentSetup {
            name: self.agent_name(),
            env,
            learner,
        })
    }

    /// Runs the protocol on up to `parallel` threads.
    pub fn run(&self, parallel: usize) -> Result<RunReport, ConfigError> {
        let setup = self.agent_setup()?;
        Ok(run_protocol(&self.protocol, &setup, self.seed, parallel)?)
    }

    /// Runs and writes the curve, summary, report and the effective config
    /// into the output directory.
    pub fn execute(&self, parallel: usize) -> Result<(RunReport, PathBuf), ConfigError> {
        let report = self.run(parallel)?;
        let eff = self.effective();
        let dir = eff.out_dir();
        write_run_outputs(&report, &dir)?;
        let echo = dir.join(CONFIG_ECHO_FILE);
        fs::write(&echo, eff.to_toml()?).map_err(|source| ConfigError::Io {
            path: echo.display().to_string(),
            source,
        })?;
        Ok((report, dir))
    }
}

/// Overlays `top` onto `base`; nested tables merge, everything else replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in preset::ALL {
            let cfg = RunConfig::from_preset(name).unwrap();
            cfg.validate().unwrap();
            cfg.agent_setup().unwrap().validate().unwrap();
        }
        assert!(matches!(
            RunConfig::from_preset("soccer_expert_x"),
            Err(ConfigError::UnknownPreset(_))
        ));
    }

    #[test]
    fn pursuit_presets_use_the_desk_protocol() {
        let cfg = RunConfig::from_preset(preset::PURSUIT_EXPERT_QRS).unwrap();
        assert_eq!(cfg.protocol.n_batches(), 100);
        assert_eq!(
            cfg.similarity,
            vec![
                SimilaritySpec::PursuitMirror {},
                SimilaritySpec::PursuitTransition {
                    weight: PURSUIT_EXPERT_TRANSITION_WEIGHT
                }
            ]
        );
    }

    #[test]
    fn preset_overlay_merges() {
        let cfg = RunConfig::from_toml_str(
            "preset = \"soccer_expert_qs\"\nseed = 9\n[protocol]\nrepeats = 2\n[params]\nalpha = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.protocol.repeats, 2);
        assert_eq!(cfg.protocol.train_games, 2_000);
        assert_eq!(cfg.params.alpha, 0.5);
        assert_eq!(cfg.params.gamma, 0.9);
        assert_eq!(cfg.similarity.len(), 2);
    }

    #[test]
    fn unknown_keys_and_notions_are_rejected() {
        let base = "domain = \"soccer\"\nagent = \"QS\"\n[protocol]\ntrain_games = 100\nbatch_size = 50\ntest_games = 10\nrepeats = 1\n";
        let bad_key =
            format!("{base}[params]\nalfa = 0.1\n[[similarity]]\nnotion = \"soccer_mirror\"\n");
        let err = RunConfig::from_toml_str(&bad_key).unwrap_err().to_string();
        assert!(err.contains("alfa") && err.contains("line"), "{err}");
        let bad_notion = format!("{base}[[similarity]]\nnotion = \"soccer_spin\"\n");
        let err = RunConfig::from_toml_str(&bad_notion)
            .unwrap_err()
            .to_string();
        assert!(err.contains("soccer_spin"), "{err}");
        let bad_param = format!("{base}[[similarity]]\nnotion = \"soccer_mirror\"\nradius = 3\n");
        assert!(RunConfig::from_toml_str(&bad_param).is_err());
        let bad_shaping =
            "domain = \"soccer\"\nagent = \"Q\"\n[shaping]\nkind = \"none\"\nscale = 1.0\n";
        assert!(RunConfig::from_toml_str(&format!("{bad_shaping}{}", &base[35..])).is_err());
        let ok = format!("{base}[[similarity]]\nnotion = \"soccer_translation\"\nradius = 1\n");
        let cfg = RunConfig::from_toml_str(&ok).unwrap();
        assert_eq!(
            cfg.similarity[0],
            SimilaritySpec::SoccerTranslation {
                decay: 0.5,
                radius: 1
            }
        );
    }

    #[test]
    fn consistency_rules() {
        let base = "domain = \"soccer\"\n[protocol]\ntrain_games = 100\nbatch_size = 50\ntest_games = 10\nrepeats = 1\n";
        let qs = format!("agent = \"QS\"\n{base}");
        let err = RunConfig::from_toml_str(&qs).unwrap_err().to_string();
        assert!(err.contains("needs a similarity"), "{err}");
        let qr_wrong = format!("agent = \"QR\"\n{base}[shaping]\nkind = \"pursuit_micro\"\n");
        assert!(RunConfig::from_toml_str(&qr_wrong)
            .unwrap_err()
            .to_string()
            .contains("pursuit"));
        let q_extra = format!("agent = \"Q\"\n{base}[abstraction]\nkind = \"soccer_distance\"\n");
        assert!(RunConfig::from_toml_str(&q_extra).is_err());
        let heavy = format!(
            "agent = \"QS\"\n{base}[[similarity]]\nnotion = \"soccer_translation\"\ndecay = 1.2\n"
        );
        assert!(RunConfig::from_toml_str(&heavy)
            .unwrap_err()
            .to_string()
            .contains("decay"));
        let divides = "agent = \"Q\"\ndomain = \"soccer\"\n[protocol]\ntrain_games = 100\nbatch_size = 30\ntest_games = 10\nrepeats = 1\n";
        assert!(RunConfig::from_toml_str(divides).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::from_preset(preset::SOCCER_EXPERT_QRS)
            .unwrap()
            .effective();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.effective(), cfg);
    }
}

//! The batch-train / halted-test evaluation protocol, repeated over
//! independent seeds, plus the value-iteration oracle and report output.

pub mod compare;
pub mod report;
pub mod vi;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::grid::{GridEnv, GridError, GridSpec};
use crate::envs::pursuit::{PreyBehavior, PursuitControl, PursuitEnv};
use crate::envs::soccer::{SoccerEnv, SoccerLayout};
use crate::envs::{Domain, Environment, EpisodeResult};
use crate::learning::{run_episode, run_episode_observed, LearnError, LearnerSpec, Mode};
use crate::{mix_seed, seeded_rng};

pub use compare::{compare, CompareError, Comparison};
pub use vi::{value_iteration, ViError, ViSolution};

/// How a batch is scored.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Learning is halted after each batch and `test_games` greedy games are played.
    #[default]
    Frozen,
    /// The batch's own training games are averaged; no test games.
    InBatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub train_games: usize,
    pub batch_size: usize,
    pub test_games: usize,
    pub repeats: usize,
    #[serde(default)]
    pub test_mode: TestMode,
}

impl Protocol {
    pub const fn new(
        train_games: usize,
        batch_size: usize,
        test_games: usize,
        repeats: usize,
    ) -> Protocol {
        Protocol {
            train_games,
            batch_size,
            test_games,
            repeats,
            test_mode: TestMode::Frozen,
        }
    }

    /// 1,000 games in batches of 50, 10,000 test games.
    pub const fn soccer_basic() -> Protocol {
        Protocol::new(1_000, 50, 10_000, 1)
    }

    pub const fn soccer_expert() -> Protocol {
        Protocol::new(2_000, 50, 10_000, 350)
    }

    /// The soccer expert protocol at 50 repeats.
    pub const fn soccer_desk() -> Protocol {
        Protocol::new(2_000, 50, 10_000, 50)
    }

    pub const fn pursuit_expert() -> Protocol {
        Protocol::new(10_000, 100, 10_000, 50)
    }

    /// The pursuit expert protocol with 1,000 test games and 10 repeats.
    pub const fn pursuit_desk() -> Protocol {
        Protocol::new(10_000, 100, 1_000, 10)
    }

    pub fn n_batches(&self) -> usize {
        self.train_games / self.batch_size.max(1)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |reason: String| Err(HarnessError::Protocol(reason));
        if self.batch_size == 0 || self.train_games == 0 {
            return bad("train_games and batch_size must be positive".into());
        }
        if !self.train_games.is_multiple_of(self.batch_size) {
            return bad(format!(
                "batch_size {} does not divide train_games {}",
                self.batch_size, self.train_games
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be positive".into());
        }
        if self.test_mode == TestMode::Frozen && self.test_games == 0 {
            return bad("frozen test mode needs test_games > 0".into());
        }
        Ok(())
    }
}

/// Which environment to build, with its settings.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Soccer {
        layout: SoccerLayout,
        step_cap: usize,
    },
    Pursuit {
        control: PursuitControl,
        prey: PreyBehavior,
        step_cap: usize,
    },
    Grid {
        spec: GridSpec,
        step_cap: usize,
    },
}

impl EnvSpec {
    pub fn domain(&self) -> Domain {
        match self {
            EnvSpec::Soccer { .. } => Domain::Soccer,
            EnvSpec::Pursuit { .. } => Domain::Pursuit,
            EnvSpec::Grid { .. } => Domain::OracleGrid,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Soccer { .. } => crate::envs::soccer::NUM_ACTIONS,
            EnvSpec::Pursuit { control, .. } => control.num_actions(),
            EnvSpec::Grid { .. } => crate::envs::grid::NUM_ACTIONS,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment + Send>, HarnessError> {
        Ok(match *self {
            EnvSpec::Soccer { layout, step_cap } => Box::new(SoccerEnv::new(layout, step_cap)),
            EnvSpec::Pursuit {
                control,
                prey,
                step_cap,
            } => Box::new(PursuitEnv::new(control, prey, step_cap)),
            EnvSpec::Grid { spec, step_cap } => Box::new(GridEnv::new(spec, step_cap)?),
        })
    }
}

/// A named agent: the environment it plays and how it learns.
#[derive(Clone, Debug)]
pub struct AgentSetup {
    pub name: String,
    pub env: EnvSpec,
    pub learner: LearnerSpec,
}

impl AgentSetup {
    /// Rejects components that belong to a different domain.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let domain = self.env.domain();
        let mismatch = |what: &'static str, found: Domain| {
            Err(HarnessError::DomainMismatch {
                what,
                found,
                expected: domain,
            })
        };
        if let Some(s) = &self.learner.similarity {
            if s.domain() != domain {
                return mismatch("similarity", s.domain());
            }
        }
        if let Some(a) = &self.learner.abstraction {
            if a.domain() != domain {
                return mismatch("abstraction", a.domain());
            }
        }
        if let Some(d) = self.learner.shaping.as_ref().and_then(|f| f.domain()) {
            if d != domain {
                return mismatch("shaping", d);
            }
        }
        if self.learner.n_actions != self.env.num_actions() {
            return Err(HarnessError::Learn(LearnError::ActionMismatch {
                learner: self.learner.n_actions,
                env: self.env.num_actions(),
            }));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("{what} is for {found} but the environment is {expected}")]
    DomainMismatch {
        what: &'static str,
        found: Domain,
        expected: Domain,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
}

/// The per-game quantity averaged into a batch score: a win indicator for
/// soccer, the step count otherwise.
pub fn game_metric(domain: Domain, result: &EpisodeResult) -> f64 {
    match domain {
        Domain::Soccer => (result.score > 0.0) as u8 as f64,
        Domain::Pursuit | Domain::OracleGrid => result.score,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based number of training batches played so far.
    pub batch: usize,
    pub mean_score: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub agent: String,
    pub domain: Domain,
    pub higher_is_better: bool,
    pub seed: u64,
    pub protocol: Protocol,
    /// Mean of the curve.
    pub avg_training: f64,
    pub avg_training_se: f64,
    /// Score of the final batch.
    pub asymptotic: f64,
    pub asymptotic_se: f64,
    /// Mean number of table entries targeted per learning update.
    pub mean_update_targets: f64,
    pub curve: Vec<CurvePoint>,
}

/// What one repeat produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatResult {
    pub batch_scores: Vec<f64>,
    pub updates: u64,
    pub update_targets: u64,
}

/// Seed of repeat `r` under `master`.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    mix_seed(master, r as u64)
}

/// Runs one repeat: a fresh learner trained batch by batch, each batch scored
/// by the protocol's test mode. Training and each test phase draw from
/// separate streams of the repeat seed, so every agent sees the same test
/// games for a given seed.
pub fn run_repeat(
    protocol: &Protocol,
    setup: &AgentSetup,
    seed: u64,
) -> Result<RepeatResult, HarnessError> {
    let domain = setup.env.domain();
    let mut env = setup.env.build()?;
    let mut learner = setup.learner.build()?;
    let mut train_rng = seeded_rng(mix_seed(seed, 0));
    let params = setup.learner.params.clone();
    let mut batch_scores = Vec::with_capacity(protocol.n_batches());
    for b in 0..protocol.n_batches() {
        let mut train_sum = 0.0;
        for g in 0..protocol.batch_size {
            let episode = (b * protocol.batch_size + g) as u64;
            let eps = params.epsilon_at(episode, protocol.train_games as u64);
            let r = run_episode(env.as_mut(), &mut learner, Mode::Train, eps, &mut train_rng)?;
            train_sum += game_metric(domain, &r);
        }
        let score = match protocol.test_mode {
            TestMode::InBatch => train_sum / protocol.batch_size as f64,
            TestMode::Frozen => {
                let mut test_rng = seeded_rng(mix_seed(seed, 1 + b as u64));
                let mut sum = 0.0;
                for _ in 0..protocol.test_games {
                    let r =
                        run_episode(env.as_mut(), &mut learner, Mode::Test, 0.0, &mut test_rng)?;
                    sum += game_metric(domain, &r);
                }
                sum / protocol.test_games as f64
            }
        };
        batch_scores.push(score);
    }
    let stats = learner.stats();
    Ok(RepeatResult {
        batch_scores,
        updates: stats.updates,
        update_targets: stats.targets,
    })
}

/// Trains for `episodes` games with the training stream of `seed` and writes
/// one line per learner step:
/// `episode,step,state_key,action,reward,next_state_key,terminal`.
/// Rewards are the environment's, before any shaping.
pub fn export_trace<W: std::io::Write>(
    protocol: &Protocol,
    setup: &AgentSetup,
    seed: u64,
    episodes: usize,
    mut out: W,
) -> Result<(), HarnessError> {
    let mut env = setup.env.build()?;
    let mut learner = setup.learner.build()?;
    let mut rng = seeded_rng(mix_seed(seed, 0));
    writeln!(
        out,
        "episode,step,state_key,action,reward,next_state_key,terminal"
    )?;
    for ep in 0..episodes {
        let mut io_result = Ok(());
        let eps = setup
            .learner
            .params
            .epsilon_at(ep as u64, protocol.train_games as u64);
        run_episode_observed(
            env.as_mut(),
            &mut learner,
            Mode::Train,
            eps,
            &mut rng,
            &mut |r| {
                if io_result.is_ok() {
                    io_result = writeln!(
                        out,
                        "{ep},{},{},{},{},{},{}",
                        r.step, r.state.0, r.action.0, r.reward, r.next_state.0, r.terminal
                    );
                }
            },
        )?;
        io_result?;
    }
    Ok(())
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates repeats (in order) into a report.
pub fn aggregate(
    name: &str,
    domain: Domain,
    protocol: &Protocol,
    seed: u64,
    repeats: &[RepeatResult],
) -> RunReport {
    let n_batches = protocol.n_batches();
    let curve: Vec<CurvePoint> = (0..n_batches)
        .map(|b| {
            let xs: Vec<f64> = repeats.iter().map(|r| r.batch_scores[b]).collect();
            let (mean_score, std_error) = mean_se(&xs);
            CurvePoint {
                batch: b + 1,
                mean_score,
                std_error,
            }
        })
        .collect();
    let per_repeat_avg: Vec<f64> = repeats
        .iter()
        .map(|r| r.batch_scores.iter().sum::<f64>() / n_batches as f64)
        .collect();
    let avg_training = curve.iter().map(|c| c.mean_score).sum::<f64>() / n_batches as f64;
    let avg_training_se = mean_se(&per_repeat_avg).1;
    let last = curve.last().expect("at least one batch");
    let updates: u64 = repeats.iter().map(|r| r.updates).sum();
    let targets: u64 = repeats.iter().map(|r| r.update_targets).sum();
    RunReport {
        agent: name.to_string(),
        domain,
        higher_is_better: domain.higher_is_better(),
        seed,
        protocol: protocol.clone(),
        avg_training,
        avg_training_se,
        asymptotic: last.mean_score,
        asymptotic_se: last.std_error,
        mean_update_targets: if updates == 0 {
            0.0
        } else {
            targets as f64 / updates as f64
        },
        curve,
    }
}

/// Runs every repeat of `protocol` for `setup` under master seed `seed`, on
/// up to `parallel` threads. The report does not depend on `parallel`.
pub fn run_protocol(
    protocol: &Protocol,
    setup: &AgentSetup,
    seed: u64,
    parallel: usize,
) -> Result<RunReport, HarnessError> {
    protocol.validate()?;
    setup.validate()?;
    let one = |r: usize| run_repeat(protocol, setup, repeat_seed(seed, r));
    let results: Result<Vec<RepeatResult>, HarnessError> = if parallel <= 1 || protocol.repeats == 1
    {
        (0..protocol.repeats).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        pool.install(|| (0..protocol.repeats).into_par_iter().map(one).collect())
    };
    Ok(aggregate(
        &setup.name,
        setup.env.domain(),
        protocol,
        seed,
        &results?,
    ))
}

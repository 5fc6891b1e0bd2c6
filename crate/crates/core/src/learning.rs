//! Q-learning and QS-learning update engines, Watkins eligibility traces,
//! epsilon-greedy exploration and the episode loop.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::AbstractionMap;
use crate::envs::{EnvError, Environment, EpisodeResult};
use crate::shaping::ShapingFunction;
use crate::similarity::{Neighbor, SharedSimilarity, SimilarityFunction};
use crate::table::{
    ActionId, Experience, LearningParams, ParamError, QTable, StateKey, TableError,
};
use crate::SimRng;

/// The update engine. Abstraction and shaping compose with any of them.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Q,
    Qs,
    QLambda,
    QsLambda,
}

impl LearnerKind {
    pub fn from_parts(spreads: bool, traces: bool) -> LearnerKind {
        match (spreads, traces) {
            (false, false) => LearnerKind::Q,
            (true, false) => LearnerKind::Qs,
            (false, true) => LearnerKind::QLambda,
            (true, true) => LearnerKind::QsLambda,
        }
    }

    pub fn spreads(self) -> bool {
        matches!(self, LearnerKind::Qs | LearnerKind::QsLambda)
    }

    pub fn uses_traces(self) -> bool {
        matches!(self, LearnerKind::QLambda | LearnerKind::QsLambda)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("invalid similarity weight {weight} for neighbor ({state}, {action})")]
    InvalidWeight {
        state: StateKey,
        action: ActionId,
        weight: f64,
    },
    #[error("duplicate neighbor key ({state}, {action})")]
    DuplicateNeighbor { state: StateKey, action: ActionId },
    #[error("similarity omits the experienced pair ({state}, {action}) at weight 1")]
    MissingSelf { state: StateKey, action: ActionId },
    #[error("{0:?} learner needs a similarity function")]
    MissingSimilarity(LearnerKind),
    #[error("{0:?} learner does not use a similarity function")]
    UnexpectedSimilarity(LearnerKind),
    #[error("learner has {learner} actions but the environment has {env}")]
    ActionMismatch { learner: usize, env: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Sparse replacing eligibility traces. Entries that decay below `cutoff`
/// are dropped.
#[derive(Clone, Debug)]
pub struct TraceTable {
    entries: Vec<(StateKey, ActionId, f64)>,
    cutoff: f64,
}

impl TraceTable {
    pub const DEFAULT_CUTOFF: f64 = 1e-8;

    pub fn new(cutoff: f64) -> TraceTable {
        TraceTable {
            entries: Vec::new(),
            cutoff,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: StateKey, a: ActionId) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == s && e.1 == a)
            .map_or(0.0, |e| e.2)
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateKey, ActionId, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// `e(s, a) = 1`.
    pub fn replace(&mut self, s: StateKey, a: ActionId) {
        match self.entries.iter_mut().find(|e| e.0 == s && e.1 == a) {
            Some(e) => e.2 = 1.0,
            None => self.entries.push((s, a, 1.0)),
        }
    }

    pub fn decay(&mut self, factor: f64) {
        let cutoff = self.cutoff;
        self.entries.retain_mut(|e| {
            e.2 *= factor;
            e.2 >= cutoff
        });
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

impl Default for TraceTable {
    fn default() -> Self {
        TraceTable::new(Self::DEFAULT_CUTOFF)
    }
}

/// `delta = r + gamma * max_{a' in actions_next} Q(s', a') - Q(s, a)`, without
/// the bootstrap term on terminal experiences.
pub fn td_error(
    q: &QTable,
    exp: &Experience,
    params: &LearningParams,
    actions_next: &[ActionId],
) -> Result<f64, TableError> {
    let q_sa = q.get(exp.state, exp.action);
    if exp.terminal {
        return Ok(exp.reward - q_sa);
    }
    Ok(exp.reward + params.gamma * q.max_over(exp.next_state, actions_next)? - q_sa)
}

/// [`td_error`] with every action legal in `s'`.
#[inline]
pub fn td_error_all(q: &QTable, exp: &Experience, gamma: f64) -> f64 {
    let q_sa = q.get(exp.state, exp.action);
    if exp.terminal {
        exp.reward - q_sa
    } else {
        exp.reward + gamma * q.max_value(exp.next_state) - q_sa
    }
}

/// One Q-learning step; returns delta.
#[inline]
pub fn q_update(q: &mut QTable, exp: &Experience, params: &LearningParams) -> f64 {
    let delta = td_error_all(q, exp, params.gamma);
    q.add(exp.state, exp.action, params.alpha * delta);
    delta
}

/// Checks a neighbour set for the experienced pair `(s, a)`: weights in
/// (0, 1], distinct keys, and `(s, a)` itself at weight 1.
pub fn check_neighbors(s: StateKey, a: ActionId, neighbors: &[Neighbor]) -> Result<(), LearnError> {
    let mut has_self = false;
    for (i, n) in neighbors.iter().enumerate() {
        if !(n.weight > 0.0 && n.weight <= 1.0) {
            return Err(LearnError::InvalidWeight {
                state: n.state,
                action: n.action,
                weight: n.weight,
            });
        }
        if neighbors[..i].iter().any(|m| m.same_key(n)) {
            return Err(LearnError::DuplicateNeighbor {
                state: n.state,
                action: n.action,
            });
        }
        has_self |= n.state == s && n.action == a && n.weight == 1.0;
    }
    if !has_self {
        return Err(LearnError::MissingSelf {
            state: s,
            action: a,
        });
    }
    Ok(())
}

/// One QS-learning step from a precomputed neighbour set: delta is formed
/// once, then every neighbour moves by `alpha * weight * delta`. Nothing is
/// written if the set is invalid. Returns delta.
pub fn spread_update(
    q: &mut QTable,
    exp: &Experience,
    neighbors: &[Neighbor],
    params: &LearningParams,
) -> Result<f64, LearnError> {
    check_neighbors(exp.state, exp.action, neighbors)?;
    let delta = td_error_all(q, exp, params.gamma);
    for n in neighbors {
        q.add(n.state, n.action, params.alpha * n.weight * delta);
    }
    Ok(delta)
}

/// One QS-learning step; returns delta.
pub fn qs_update(
    q: &mut QTable,
    exp: &Experience,
    sigma: &dyn SimilarityFunction,
    params: &LearningParams,
) -> Result<f64, LearnError> {
    let neighbors = sigma.neighbors(exp.state, exp.action);
    spread_update(q, exp, &neighbors, params)
}

fn trace_core(
    q: &mut QTable,
    traces: &mut TraceTable,
    exp: &Experience,
    params: &LearningParams,
    exploratory: bool,
) -> f64 {
    let delta = td_error_all(q, exp, params.gamma);
    if exploratory {
        traces.clear();
    }
    traces.replace(exp.state, exp.action);
    for &(s, a, e) in &traces.entries {
        q.add(s, a, params.alpha * e * delta);
    }
    delta
}

fn trace_finish(traces: &mut TraceTable, exp: &Experience, params: &LearningParams) {
    if exp.terminal {
        traces.clear();
    } else {
        traces.decay(params.gamma * params.lambda);
    }
}

/// One Watkins Q(lambda) step with replacing traces. `exploratory` is whether
/// `exp.action` was a non-greedy choice, which cuts all earlier traces.
/// Returns delta.
pub fn trace_update(
    q: &mut QTable,
    traces: &mut TraceTable,
    exp: &Experience,
    params: &LearningParams,
    exploratory: bool,
) -> f64 {
    let delta = trace_core(q, traces, exp, params, exploratory);
    trace_finish(traces, exp, params);
    delta
}

/// QS(lambda): the trace update, plus the similarity spread of the current
/// experience to every neighbour other than the pair itself.
pub fn qs_trace_update(
    q: &mut QTable,
    traces: &mut TraceTable,
    exp: &Experience,
    neighbors: &[Neighbor],
    params: &LearningParams,
    exploratory: bool,
) -> Result<f64, LearnError> {
    check_neighbors(exp.state, exp.action, neighbors)?;
    let delta = trace_core(q, traces, exp, params, exploratory);
    for n in neighbors {
        if n.state != exp.state || n.action != exp.action {
            q.add(n.state, n.action, params.alpha * n.weight * delta);
        }
    }
    trace_finish(traces, exp, params);
    Ok(delta)
}

/// Epsilon-greedy choice over `actions`. No random number is drawn when
/// `epsilon` is 0.
pub fn select_action(
    q: &QTable,
    s: StateKey,
    actions: &[ActionId],
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<ActionId, TableError> {
    let greedy = q.greedy_action(s, actions)?;
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(actions[rng.gen_range(0..actions.len())]);
    }
    Ok(greedy)
}

/// [`select_action`] over the table's whole action range. Also reports
/// whether the choice is exploratory, i.e. worth less than the greedy value.
#[inline]
pub fn select_action_all(
    q: &QTable,
    s: StateKey,
    epsilon: f64,
    rng: &mut SimRng,
) -> (ActionId, bool) {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let a = ActionId(rng.gen_range(0..q.n_actions() as u16));
        let exploratory = match q.row(s) {
            Some(row) => row[a.index()] < row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => false,
        };
        return (a, exploratory);
    }
    (q.greedy(s), false)
}

/// Counters of the learning updates a learner has made.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub updates: u64,
    /// Sum over updates of the number of table entries targeted.
    pub targets: u64,
}

impl UpdateStats {
    pub fn mean_targets(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.targets as f64 / self.updates as f64
        }
    }
}

/// Everything needed to build a [`Learner`].
#[derive(Clone, Debug)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub params: LearningParams,
    pub n_actions: usize,
    pub similarity: Option<SharedSimilarity>,
    pub shaping: Option<Arc<dyn ShapingFunction>>,
    pub abstraction: Option<Arc<dyn AbstractionMap>>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, params: LearningParams, n_actions: usize) -> LearnerSpec {
        LearnerSpec {
            kind,
            params,
            n_actions,
            similarity: None,
            shaping: None,
            abstraction: None,
        }
    }

    pub fn with_similarity(mut self, sigma: SharedSimilarity) -> Self {
        self.similarity = Some(sigma);
        self
    }

    pub fn with_shaping(mut self, shaping: Arc<dyn ShapingFunction>) -> Self {
        self.shaping = Some(shaping);
        self
    }

    pub fn with_abstraction(mut self, map: Arc<dyn AbstractionMap>) -> Self {
        self.abstraction = Some(map);
        self
    }

    pub fn build(&self) -> Result<Learner, LearnError> {
        Learner::new(self.clone())
    }
}

/// A Q-table together with the update engine, optional shaping, similarity
/// and abstraction, and per-agent traces.
#[derive(Debug)]
pub struct Learner {
    spec: LearnerSpec,
    pub q: QTable,
    traces: Vec<TraceTable>,
    concrete: Vec<Neighbor>,
    remapped: Vec<Neighbor>,
    stats: UpdateStats,
}

impl Learner {
    pub fn new(spec: LearnerSpec) -> Result<Learner, LearnError> {
        spec.params.validate()?;
        match (spec.kind.spreads(), spec.similarity.is_some()) {
            (true, false) => return Err(LearnError::MissingSimilarity(spec.kind)),
            (false, true) => return Err(LearnError::UnexpectedSimilarity(spec.kind)),
            _ => {}
        }
        let q = QTable::new(spec.n_actions);
        Ok(Learner {
            spec,
            q,
            traces: Vec::new(),
            concrete: Vec::new(),
            remapped: Vec::new(),
            stats: UpdateStats::default(),
        })
    }

    pub fn kind(&self) -> LearnerKind {
        self.spec.kind
    }

    pub fn params(&self) -> &LearningParams {
        &self.spec.params
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn stats(&self) -> UpdateStats {
        self.stats
    }

    pub fn traces(&self, agent: usize) -> Option<&TraceTable> {
        self.traces.get(agent)
    }

    /// The table key of a concrete state.
    #[inline]
    pub fn key(&self, s: StateKey) -> StateKey {
        match &self.spec.abstraction {
            Some(m) => m.map(s),
            None => s,
        }
    }

    #[inline]
    pub fn act(&self, s: StateKey, epsilon: f64, rng: &mut SimRng) -> (ActionId, bool) {
        select_action_all(&self.q, self.key(s), epsilon, rng)
    }

    pub fn greedy(&self, s: StateKey) -> ActionId {
        self.q.greedy(self.key(s))
    }

    pub fn end_episode(&mut self) {
        for t in &mut self.traces {
            t.clear();
        }
    }

    /// Learns from one concrete experience of learner `agent`. Shaping is
    /// applied to the concrete transition, then keys are remapped.
    pub fn learn(
        &mut self,
        agent: usize,
        exp: &Experience,
        exploratory: bool,
    ) -> Result<f64, LearnError> {
        let mut reward = exp.reward;
        if let Some(f) = &self.spec.shaping {
            reward += f.shape(exp.state, exp.action, exp.next_state, exp.terminal);
        }
        let table_exp = Experience {
            state: self.key(exp.state),
            action: exp.action,
            reward,
            next_state: self.key(exp.next_state),
            terminal: exp.terminal,
        };
        if self.spec.kind.spreads() {
            self.collect_neighbors(exp.state, exp.action);
        }
        if self.spec.kind.uses_traces() && self.traces.len() <= agent {
            self.traces.resize_with(agent + 1, TraceTable::default);
        }
        let params = &self.spec.params;
        let delta = match self.spec.kind {
            LearnerKind::Q => {
                self.stats.targets += 1;
                q_update(&mut self.q, &table_exp, params)
            }
            LearnerKind::Qs => {
                self.stats.targets += self.remapped.len() as u64;
                spread_update(&mut self.q, &table_exp, &self.remapped, params)?
            }
            LearnerKind::QLambda => {
                let t = &mut self.traces[agent];
                let d = trace_update(&mut self.q, t, &table_exp, params, exploratory);
                self.stats.targets += 1;
                d
            }
            LearnerKind::QsLambda => {
                let t = &mut self.traces[agent];
                self.stats.targets += self.remapped.len() as u64;
                qs_trace_update(
                    &mut self.q,
                    t,
                    &table_exp,
                    &self.remapped,
                    params,
                    exploratory,
                )?
            }
        };
        self.stats.updates += 1;
        Ok(delta)
    }

    /// Fills `self.remapped` with the neighbours of the concrete pair mapped
    /// to table keys; pairs that collide keep their largest weight.
    fn collect_neighbors(&mut self, s: StateKey, a: ActionId) {
        let sigma = self
            .spec
            .similarity
            .as_ref()
            .expect("checked at construction");
        self.remapped.clear();
        match &self.spec.abstraction {
            None => sigma.neighbors_into(s, a, &mut self.remapped),
            Some(map) => {
                self.concrete.clear();
                sigma.neighbors_into(s, a, &mut self.concrete);
                for n in &self.concrete {
                    let m = Neighbor::new(map.map(n.state), n.action, n.weight);
                    crate::similarity::push_max(&mut self.remapped, m);
                }
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Explore with the given epsilon and learn from every step.
    Train,
    /// Greedy, no table writes.
    Test,
}

/// One step as seen by learner `agent`, for trace export.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub agent: usize,
    pub state: StateKey,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateKey,
    pub terminal: bool,
}

const MAX_AGENTS: usize = 4;

/// Plays one episode. In [`Mode::Train`] every learner's experience is fed to
/// `learner`; in [`Mode::Test`] epsilon is ignored and nothing is written.
pub fn run_episode<E: Environment + ?Sized>(
    env: &mut E,
    learner: &mut Learner,
    mode: Mode,
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<EpisodeResult, LearnError> {
    run_episode_observed(env, learner, mode, epsilon, rng, &mut |_| {})
}

/// [`run_episode`] with a callback receiving every step of every learner.
pub fn run_episode_observed<E: Environment + ?Sized>(
    env: &mut E,
    learner: &mut Learner,
    mode: Mode,
    epsilon: f64,
    rng: &mut SimRng,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<EpisodeResult, LearnError> {
    play(env, learner, mode, epsilon, rng, usize::MAX, observer)
}

/// Trains for exactly `steps` environment steps, starting a new episode
/// whenever one ends. Returns the number of episodes started.
pub fn train_steps<E: Environment + ?Sized>(
    env: &mut E,
    learner: &mut Learner,
    steps: usize,
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<usize, LearnError> {
    let mut used = 0;
    let mut episodes = 0;
    while used < steps {
        used += play(
            env,
            learner,
            Mode::Train,
            epsilon,
            rng,
            steps - used,
            &mut |_| {},
        )?
        .steps;
        episodes += 1;
    }
    Ok(episodes)
}

fn play<E: Environment + ?Sized>(
    env: &mut E,
    learner: &mut Learner,
    mode: Mode,
    epsilon: f64,
    rng: &mut SimRng,
    limit: usize,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<EpisodeResult, LearnError> {
    if env.num_actions() != learner.q.n_actions() {
        return Err(LearnError::ActionMismatch {
            learner: learner.q.n_actions(),
            env: env.num_actions(),
        });
    }
    let n_agents = env.num_agents();
    assert!(
        n_agents <= MAX_AGENTS,
        "at most {MAX_AGENTS} learners per step"
    );
    let epsilon = if mode == Mode::Test { 0.0 } else { epsilon };
    let cap = env.step_cap().min(limit);

    env.reset(rng);
    learner.end_episode();
    let mut states = [StateKey(0); MAX_AGENTS];
    let mut actions = [ActionId(0); MAX_AGENTS];
    let mut exploratory = [false; MAX_AGENTS];
    let mut steps = 0;
    let mut truncated = false;
    loop {
        if steps >= cap {
            truncated = true;
            break;
        }
        for i in 0..n_agents {
            states[i] = env.observe(i);
            (actions[i], exploratory[i]) = learner.act(states[i], epsilon, rng);
        }
        let out = env.step(&actions[..n_agents], rng)?;
        steps += 1;
        for i in 0..n_agents {
            let exp = Experience {
                state: states[i],
                action: actions[i],
                reward: out.reward,
                next_state: env.observe(i),
                terminal: out.terminal,
            };
            observer(&StepRecord {
                step: steps,
                agent: i,
                state: exp.state,
                action: exp.action,
                reward: exp.reward,
                next_state: exp.next_state,
                terminal: exp.terminal,
            });
            if mode == Mode::Train {
                learner.learn(i, &exp, exploratory[i])?;
            }
        }
        if out.terminal {
            break;
        }
    }
    learner.end_episode();
    Ok(EpisodeResult {
        score: env.score(steps, truncated),
        steps,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::soccer::SoccerEnv;
    use crate::envs::Domain;
    use crate::seeded_rng;
    use crate::similarity::Kronecker;

    fn exp(s: u64, a: u16, r: f64, n: u64, terminal: bool) -> Experience {
        Experience {
            state: StateKey(s),
            action: ActionId(a),
            reward: r,
            next_state: StateKey(n),
            terminal,
        }
    }

    fn params(alpha: f64, gamma: f64, lambda: f64) -> LearningParams {
        LearningParams {
            alpha,
            gamma,
            lambda,
            ..LearningParams::default()
        }
    }

    #[test]
    fn td_error_examples() {
        let acts = crate::table::all_actions(3);
        let p = params(0.5, 0.9, 0.0);
        let q = QTable::new(3);
        assert_eq!(
            td_error(&q, &exp(0, 0, 1.0, 1, false), &p, &acts).unwrap(),
            1.0
        );
        let mut q = QTable::new(3);
        q.set(StateKey(0), ActionId(0), 2.0);
        q.set(StateKey(1), ActionId(2), 2.0);
        let d = td_error(&q, &exp(0, 0, 0.0, 1, false), &p, &acts).unwrap();
        assert!((d + 0.2).abs() < 1e-12);
        let mut q = QTable::new(3);
        q.set(StateKey(0), ActionId(0), 0.5);
        assert_eq!(
            td_error(&q, &exp(0, 0, 1.0, 0, true), &p, &acts).unwrap(),
            0.5
        );
        assert_eq!(
            td_error(&q, &exp(0, 0, 1.0, 0, true), &p, &[]).unwrap(),
            0.5
        );
        assert_eq!(
            td_error(&q, &exp(0, 0, 1.0, 0, false), &p, &[]),
            Err(TableError::NoActions)
        );
    }

    #[test]
    fn q_update_examples() {
        let mut q = QTable::new(2);
        q_update(&mut q, &exp(0, 1, 1.0, 1, false), &params(0.5, 0.9, 0.0));
        assert_eq!(q.get(StateKey(0), ActionId(1)), 0.5);
        assert_eq!(q.len(), 1);

        let mut q = QTable::new(2);
        q_update(&mut q, &exp(0, 0, 0.0, 1, false), &params(0.5, 0.9, 0.0));
        assert!(q.is_empty());

        let mut q = QTable::new(2);
        q_update(&mut q, &exp(0, 0, -1.0, 0, true), &params(1.0, 0.9, 0.0));
        assert_eq!(q.get(StateKey(0), ActionId(0)), -1.0);
    }

    #[test]
    fn spread_update_weights_and_errors() {
        let p = params(0.5, 0.9, 0.0);
        let e = exp(0, 0, 1.0, 9, true);
        let ns = [
            Neighbor::new(StateKey(0), ActionId(0), 1.0),
            Neighbor::new(StateKey(3), ActionId(1), 0.5),
        ];
        let mut q = QTable::new(2);
        spread_update(&mut q, &e, &ns, &p).unwrap();
        assert_eq!(q.get(StateKey(3), ActionId(1)), 0.25);
        assert_eq!(q.get(StateKey(0), ActionId(0)), 0.5);

        let mut q = QTable::new(2);
        let bad = [ns[0], Neighbor::new(StateKey(3), ActionId(1), 1.2)];
        let err = spread_update(&mut q, &e, &bad, &p).unwrap_err();
        assert!(err.to_string().starts_with("invalid similarity weight"));
        let zero = [ns[0], Neighbor::new(StateKey(3), ActionId(1), 0.0)];
        assert!(matches!(
            spread_update(&mut q, &e, &zero, &p),
            Err(LearnError::InvalidWeight { .. })
        ));
        let dup = [ns[0], ns[1], ns[1]];
        assert!(matches!(
            spread_update(&mut q, &e, &dup, &p),
            Err(LearnError::DuplicateNeighbor { .. })
        ));
        assert!(matches!(
            spread_update(&mut q, &e, &ns[1..], &p),
            Err(LearnError::MissingSelf { .. })
        ));
        assert!(q.is_empty(), "rejected updates must not write");
    }

    #[test]
    fn spread_counts_entries() {
        let p = params(0.1, 0.9, 0.0);
        let ns: Vec<_> = (0..12)
            .map(|i| Neighbor::new(StateKey(i), ActionId(0), 1.0))
            .collect();
        let mut q = QTable::new(1);
        spread_update(&mut q, &exp(0, 0, 1.0, 50, false), &ns, &p).unwrap();
        assert_eq!(q.len(), 12);
    }

    #[test]
    fn kronecker_spread_is_q_update() {
        let k = Kronecker {
            domain: Domain::Soccer,
        };
        let p = params(0.3, 0.9, 0.0);
        let mut a = QTable::new(5);
        let mut b = QTable::new(5);
        let mut rng = seeded_rng(5);
        for _ in 0..5_000 {
            let e = exp(
                rng.gen_range(0..20),
                rng.gen_range(0..5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0..20),
                rng.gen_bool(0.1),
            );
            q_update(&mut a, &e, &p);
            qs_update(&mut b, &e, &k, &p).unwrap();
        }
        assert!(a.bit_identical(&b));
    }

    #[test]
    fn trace_decay_product() {
        let p = params(0.5, 0.9, 0.5);
        let mut q = QTable::new(2);
        let mut t = TraceTable::default();
        trace_update(&mut q, &mut t, &exp(0, 0, 0.0, 1, false), &p, false);
        assert!((t.get(StateKey(0), ActionId(0)) - 0.45).abs() < 1e-15);
        trace_update(&mut q, &mut t, &exp(1, 0, 0.0, 2, false), &p, false);
        assert!((t.get(StateKey(0), ActionId(0)) - 0.45 * 0.45).abs() < 1e-15);
        trace_update(&mut q, &mut t, &exp(2, 1, 1.0, 2, true), &p, false);
        assert!(t.is_empty());
    }

    /// A 3-state chain 0 -> 1 -> 2 -> goal, hand-simulated with explicit
    /// eligibility arithmetic.
    #[test]
    fn trace_chain_matches_hand_simulation() {
        let (alpha, gamma, lambda) = (0.5, 0.9, 0.8);
        let p = params(alpha, gamma, lambda);
        let mut q = QTable::new(2);
        let mut t = TraceTable::default();

        // step 1: (0, a0) -> 1, r = 0; delta = 0 everywhere, e(0,0) = 1 then 0.72
        trace_update(&mut q, &mut t, &exp(0, 0, 0.0, 1, false), &p, false);
        // step 2: (1, a0) -> 2, r = 0
        trace_update(&mut q, &mut t, &exp(1, 0, 0.0, 2, false), &p, false);
        // step 3: (2, a0) -> goal, r = 1: delta = 1
        trace_update(&mut q, &mut t, &exp(2, 0, 1.0, 3, true), &p, false);
        let gl = gamma * lambda;
        assert_eq!(q.get(StateKey(2), ActionId(0)), alpha);
        assert!((q.get(StateKey(1), ActionId(0)) - alpha * gl).abs() < 1e-15);
        assert!((q.get(StateKey(0), ActionId(0)) - alpha * gl * gl).abs() < 1e-15);

        // second episode, exploratory action in the middle cuts the trace of state 0
        let mut q2 = q.clone();
        let mut t = TraceTable::default();
        let q20 = q2.get(StateKey(2), ActionId(0));
        let d1 = gamma * q2.get(StateKey(1), ActionId(0)) - q2.get(StateKey(0), ActionId(0));
        trace_update(&mut q2, &mut t, &exp(0, 0, 0.0, 1, false), &p, false);
        let q00 = q.get(StateKey(0), ActionId(0)) + alpha * d1;
        assert_eq!(q2.get(StateKey(0), ActionId(0)), q00);
        // exploratory (1, a1) -> 2
        let d2 = gamma * q20 - 0.0;
        trace_update(&mut q2, &mut t, &exp(1, 1, 0.0, 2, false), &p, true);
        assert_eq!(q2.get(StateKey(1), ActionId(1)), alpha * d2);
        assert_eq!(
            q2.get(StateKey(0), ActionId(0)),
            q00,
            "cut trace must not update state 0"
        );
        assert_eq!(t.get(StateKey(0), ActionId(0)), 0.0);
        assert!((t.get(StateKey(1), ActionId(1)) - gl).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_reduces_to_q() {
        let p = params(0.3, 0.9, 0.0);
        let mut a = QTable::new(3);
        let mut b = QTable::new(3);
        let mut t = TraceTable::default();
        let mut rng = seeded_rng(8);
        for _ in 0..5_000 {
            let e = exp(
                rng.gen_range(0..15),
                rng.gen_range(0..3),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0..15),
                rng.gen_bool(0.1),
            );
            q_update(&mut a, &e, &p);
            trace_update(&mut b, &mut t, &e, &p, rng.gen_bool(0.3));
            assert!(t.is_empty());
        }
        assert!(a.bit_identical(&b));
    }

    #[test]
    fn select_action_extremes() {
        let mut q = QTable::new(4);
        q.set(StateKey(0), ActionId(2), 1.0);
        let acts = crate::table::all_actions(4);
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(
                select_action(&q, StateKey(0), &acts, 0.0, &mut rng).unwrap(),
                ActionId(2)
            );
        }
        assert!(select_action(&q, StateKey(0), &[], 0.5, &mut rng).is_err());
        let mut a = seeded_rng(2);
        let mut b = seeded_rng(2);
        for _ in 0..200 {
            assert_eq!(
                select_action(&q, StateKey(0), &acts, 0.5, &mut a).unwrap(),
                select_action(&q, StateKey(0), &acts, 0.5, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn uniform_exploration_chi_square() {
        let q = QTable::new(5);
        let acts = crate::table::all_actions(5);
        let mut rng = seeded_rng(77);
        let mut counts = [0usize; 5];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&q, StateKey(3), &acts, 1.0, &mut rng)
                .unwrap()
                .index()] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 4 degrees of freedom, 99.9th percentile
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts {counts:?}");
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn exploratory_flag_is_value_based() {
        let mut q = QTable::new(3);
        let mut rng = seeded_rng(4);
        // unseen state: every action ties, nothing counts as exploratory
        for _ in 0..50 {
            assert!(!select_action_all(&q, StateKey(1), 1.0, &mut rng).1);
        }
        q.set(StateKey(1), ActionId(1), 1.0);
        for _ in 0..200 {
            let (a, x) = select_action_all(&q, StateKey(1), 1.0, &mut rng);
            assert_eq!(x, a != ActionId(1));
        }
    }

    #[test]
    fn learner_consistency_rules() {
        let p = LearningParams::default();
        assert!(matches!(
            LearnerSpec::new(LearnerKind::Qs, p.clone(), 5).build(),
            Err(LearnError::MissingSimilarity(LearnerKind::Qs))
        ));
        let k: SharedSimilarity = Arc::new(Kronecker {
            domain: Domain::Soccer,
        });
        assert!(LearnerSpec::new(LearnerKind::Q, p.clone(), 5)
            .with_similarity(k.clone())
            .build()
            .is_err());
        assert!(LearnerSpec::new(LearnerKind::QsLambda, p.clone(), 5)
            .with_similarity(k)
            .build()
            .is_ok());
        let bad = LearningParams { alpha: 0.0, ..p };
        assert!(matches!(
            LearnerSpec::new(LearnerKind::Q, bad, 5).build(),
            Err(LearnError::Param(_))
        ));
    }

    #[test]
    fn test_mode_leaves_table_unchanged() {
        let mut env = SoccerEnv::default();
        let mut learner = LearnerSpec::new(LearnerKind::Q, params(0.3, 0.9, 0.0), 5)
            .build()
            .unwrap();
        let mut rng = seeded_rng(11);
        for _ in 0..50 {
            run_episode(&mut env, &mut learner, Mode::Train, 0.3, &mut rng).unwrap();
        }
        let before = learner.q.clone();
        for _ in 0..50 {
            run_episode(&mut env, &mut learner, Mode::Test, 0.3, &mut rng).unwrap();
        }
        assert!(before.bit_identical(&learner.q));
    }

    #[test]
    fn action_count_mismatch_is_an_error() {
        let mut env = SoccerEnv::default();
        let mut learner = LearnerSpec::new(LearnerKind::Q, LearningParams::default(), 4)
            .build()
            .unwrap();
        let mut rng = seeded_rng(0);
        assert!(matches!(
            run_episode(&mut env, &mut learner, Mode::Train, 0.1, &mut rng),
            Err(LearnError::ActionMismatch { learner: 4, env: 5 })
        ));
    }
}

//! State-action similarity functions.
//!
//! A similarity function maps a pair `(s, a)` to the weighted set of pairs
//! whose values are expected to be close to `Q(s, a)`. It is valid when the
//! pair itself is present with weight exactly 1. Functions here are written as
//! neighbour generators: only pairs with positive weight are ever produced, so
//! a spread update touches a handful of entries rather than the whole table.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::envs::grid::GridSpec;
use crate::envs::pursuit::{self, PursuitControl, PursuitState};
use crate::envs::soccer::SoccerState;
use crate::envs::{Domain, Move, StateSpace};
use crate::table::{ActionId, StateKey};
use crate::SimRng;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub state: StateKey,
    pub action: ActionId,
    pub weight: f64,
}

impl Neighbor {
    pub fn new(state: StateKey, action: ActionId, weight: f64) -> Neighbor {
        Neighbor {
            state,
            action,
            weight,
        }
    }

    #[inline]
    pub fn same_key(&self, other: &Neighbor) -> bool {
        self.state == other.state && self.action == other.action
    }
}

/// The three kinds of similarity a designer typically expresses.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SimilarityNotion {
    /// Closeness in some representation of the state (e.g. a translated layout).
    Representational,
    /// Rotations and reflections of the state-action pair.
    Symmetry,
    /// Pairs whose actions have the same relative effect.
    Transition,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("invalid similarity parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("cannot compose similarity functions of different domains ({0} and {1})")]
    MixedDomains(Domain, Domain),
    #[error("empty similarity composition")]
    Empty,
}

pub trait SimilarityFunction: Send + Sync + fmt::Debug {
    fn domain(&self) -> Domain;

    fn name(&self) -> &'static str;

    fn notion(&self) -> Option<SimilarityNotion>;

    /// Appends the neighbours of `(s, a)`, the pair itself included.
    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>);

    fn neighbors(&self, s: StateKey, a: ActionId) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.neighbors_into(s, a, &mut out);
        out
    }
}

pub type SharedSimilarity = Arc<dyn SimilarityFunction>;

/// Adds `n`, or raises the weight of an existing entry with the same key.
#[inline]
pub fn push_max(out: &mut Vec<Neighbor>, n: Neighbor) {
    push_max_from(out, 0, n)
}

#[inline]
fn push_max_from(out: &mut Vec<Neighbor>, from: usize, n: Neighbor) {
    match out[from..].iter_mut().find(|m| m.same_key(&n)) {
        Some(m) => m.weight = m.weight.max(n.weight),
        None => out.push(n),
    }
}

/// `sigma(s, a, s', a') = 1` iff the pairs are equal.
#[derive(Copy, Clone, Debug)]
pub struct Kronecker {
    pub domain: Domain,
}

impl SimilarityFunction for Kronecker {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn name(&self) -> &'static str {
        "kronecker"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        None
    }

    #[inline]
    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        out.push(Neighbor::new(s, a, 1.0));
    }
}

pub fn kronecker(s: StateKey, a: ActionId) -> Vec<Neighbor> {
    vec![Neighbor::new(s, a, 1.0)]
}

/// Moves both soccer players together by every offset within an L1 `radius`,
/// weight `decay^|offset|`. Offsets that push a player off the grid are skipped.
#[derive(Copy, Clone, Debug)]
pub struct SoccerTranslation {
    decay: f64,
    radius: i32,
}

impl SoccerTranslation {
    pub const DEFAULT_DECAY: f64 = 0.5;
    pub const DEFAULT_RADIUS: i32 = 2;

    pub fn new(decay: f64, radius: i32) -> Result<SoccerTranslation, SimilarityError> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(SimilarityError::InvalidParameter {
                name: "decay",
                value: decay,
                reason: "must be in (0, 1)",
            });
        }
        if radius < 0 {
            return Err(SimilarityError::InvalidParameter {
                name: "radius",
                value: radius as f64,
                reason: "must be >= 0",
            });
        }
        Ok(SoccerTranslation { decay, radius })
    }

    /// Skips the range checks; only for exercising the validator.
    pub fn new_unchecked(decay: f64, radius: i32) -> SoccerTranslation {
        SoccerTranslation {
            decay,
            radius: radius.max(0),
        }
    }
}

impl Default for SoccerTranslation {
    fn default() -> Self {
        SoccerTranslation {
            decay: Self::DEFAULT_DECAY,
            radius: Self::DEFAULT_RADIUS,
        }
    }
}

impl SimilarityFunction for SoccerTranslation {
    fn domain(&self) -> Domain {
        Domain::Soccer
    }

    fn name(&self) -> &'static str {
        "soccer_translation"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Representational)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        out.push(Neighbor::new(s, a, 1.0));
        let Some(st) = SoccerState::decode(s) else {
            return;
        };
        let r = self.radius;
        for dx in -r..=r {
            for dy in -r..=r {
                let dist = dx.abs() + dy.abs();
                if dist == 0 || dist > r {
                    continue;
                }
                let agent = st.agent.shifted(dx, dy);
                let opponent = st.opponent.shifted(dx, dy);
                if agent.on_grid() && opponent.on_grid() {
                    let moved = SoccerState {
                        agent,
                        opponent,
                        ball: st.ball,
                    };
                    out.push(Neighbor::new(moved.encode(), a, self.decay.powi(dist)));
                }
            }
        }
    }
}

pub fn soccer_translation(s: StateKey, a: ActionId, decay: f64, radius: i32) -> Vec<Neighbor> {
    SoccerTranslation::new_unchecked(decay, radius).neighbors(s, a)
}

/// Reflects the field top-to-bottom (`y -> 7 - y`, North <-> South).
#[derive(Copy, Clone, Debug, Default)]
pub struct SoccerMirror;

impl SimilarityFunction for SoccerMirror {
    fn domain(&self) -> Domain {
        Domain::Soccer
    }

    fn name(&self) -> &'static str {
        "soccer_mirror"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Symmetry)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        out.push(Neighbor::new(s, a, 1.0));
        if let Some(st) = SoccerState::decode(s) {
            let m = Move::from_action(a).mirror_vertical();
            out.push(Neighbor::new(st.mirrored().encode(), m.action(), 1.0));
        }
    }
}

pub fn soccer_mirror(s: StateKey, a: ActionId) -> Vec<Neighbor> {
    SoccerMirror.neighbors(s, a)
}

/// Applies a move transform to a pursuit action under either control mode.
#[inline]
fn map_pursuit_action(control: PursuitControl, a: ActionId, f: impl Fn(Move) -> Move) -> ActionId {
    match control {
        PursuitControl::Joint => {
            let (m1, m2) = pursuit::split_joint(a);
            pursuit::joint_action(f(m1), f(m2))
        }
        PursuitControl::Independent => f(Move::from_action(a)).action(),
    }
}

#[inline]
fn rotate_delta((x, y): (i32, i32)) -> (i32, i32) {
    (-y, x)
}

/// Quarter-turn rotations of the pursuit configuration about the prey, with
/// every predator move rotated the same way.
#[derive(Copy, Clone, Debug, Default)]
pub struct PursuitRotation {
    pub control: PursuitControl,
}

impl SimilarityFunction for PursuitRotation {
    fn domain(&self) -> Domain {
        Domain::Pursuit
    }

    fn name(&self) -> &'static str {
        "pursuit_rotation"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Symmetry)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        let base = out.len();
        out.push(Neighbor::new(s, a, 1.0));
        let Some(mut st) = PursuitState::decode(s) else {
            return;
        };
        let mut act = a;
        for _ in 0..3 {
            st = st.map(rotate_delta);
            act = map_pursuit_action(self.control, act, Move::rotate_ccw);
            push_max_from(out, base, Neighbor::new(st.encode(), act, 1.0));
        }
    }
}

pub fn pursuit_rotation(s: StateKey, a: ActionId, control: PursuitControl) -> Vec<Neighbor> {
    PursuitRotation { control }.neighbors(s, a)
}

/// Left/right (`dx -> -dx`) and top/bottom (`dy -> -dy`) reflections, plus
/// their composition so that the set is closed.
#[derive(Copy, Clone, Debug, Default)]
pub struct PursuitMirror {
    pub control: PursuitControl,
}

impl SimilarityFunction for PursuitMirror {
    fn domain(&self) -> Domain {
        Domain::Pursuit
    }

    fn name(&self) -> &'static str {
        "pursuit_mirror"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Symmetry)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        let base = out.len();
        out.push(Neighbor::new(s, a, 1.0));
        let Some(st) = PursuitState::decode(s) else {
            return;
        };
        let h = st.map(|(x, y)| (-x, y));
        let ha = map_pursuit_action(self.control, a, Move::mirror_horizontal);
        push_max_from(out, base, Neighbor::new(h.encode(), ha, 1.0));
        let v = st.map(|(x, y)| (x, -y));
        let va = map_pursuit_action(self.control, a, Move::mirror_vertical);
        push_max_from(out, base, Neighbor::new(v.encode(), va, 1.0));
        let hv = st.map(|(x, y)| (-x, -y));
        let hva = map_pursuit_action(self.control, ha, Move::mirror_vertical);
        push_max_from(out, base, Neighbor::new(hv.encode(), hva, 1.0));
    }
}

pub fn pursuit_mirror(s: StateKey, a: ActionId, control: PursuitControl) -> Vec<Neighbor> {
    PursuitMirror { control }.neighbors(s, a)
}

/// Pairs expected to produce the same relative configuration after the
/// predators move, assuming the prey stands still and ignoring walls.
///
/// In joint control the class is every `(s', a')` with
/// `s'_i + move(a'_i) == s_i + move(a_i)` for both predators. In independent
/// control only the acting predator's move is known, so the other predator's
/// delta is held fixed. Pre-states must be reachable and uncaptured. Every
/// pair of the class other than the original gets `weight`.
#[derive(Copy, Clone, Debug)]
pub struct PursuitTransition {
    pub control: PursuitControl,
    pub weight: f64,
}

impl Default for PursuitTransition {
    fn default() -> Self {
        PursuitTransition::exact(PursuitControl::default())
    }
}

impl PursuitTransition {
    pub fn new(control: PursuitControl, weight: f64) -> Result<PursuitTransition, SimilarityError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(SimilarityError::InvalidParameter {
                name: "weight",
                value: weight,
                reason: "must be in (0, 1]",
            });
        }
        Ok(PursuitTransition { control, weight })
    }

    /// Full weight on the whole class.
    pub fn exact(control: PursuitControl) -> PursuitTransition {
        PursuitTransition {
            control,
            weight: 1.0,
        }
    }

    /// The stationary-prey post-move configuration of `(s, a)`.
    pub fn post_state(&self, s: &PursuitState, a: ActionId) -> PursuitState {
        let add = |(x, y): (i32, i32), m: Move| {
            let (dx, dy) = m.delta();
            (x + dx, y + dy)
        };
        match self.control {
            PursuitControl::Joint => {
                let (m1, m2) = pursuit::split_joint(a);
                PursuitState {
                    d: [add(s.d[0], m1), add(s.d[1], m2)],
                }
            }
            PursuitControl::Independent => PursuitState {
                d: [add(s.d[0], Move::from_action(a)), s.d[1]],
            },
        }
    }
}

#[inline]
fn valid_pre_state(s: &PursuitState) -> bool {
    s.is_reachable() && s.d.iter().all(|&d| d != (0, 0))
}

impl SimilarityFunction for PursuitTransition {
    fn domain(&self) -> Domain {
        Domain::Pursuit
    }

    fn name(&self) -> &'static str {
        "pursuit_transition"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Transition)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        out.push(Neighbor::new(s, a, 1.0));
        let Some(st) = PursuitState::decode(s) else {
            return;
        };
        let post = self.post_state(&st, a);
        let sub = |(x, y): (i32, i32), m: Move| {
            let (dx, dy) = m.delta();
            (x - dx, y - dy)
        };
        match self.control {
            PursuitControl::Joint => {
                for m1 in Move::ALL {
                    for m2 in Move::ALL {
                        let pre = PursuitState {
                            d: [sub(post.d[0], m1), sub(post.d[1], m2)],
                        };
                        let act = pursuit::joint_action(m1, m2);
                        if act != a && valid_pre_state(&pre) {
                            out.push(Neighbor::new(pre.encode(), act, self.weight));
                        }
                    }
                }
            }
            PursuitControl::Independent => {
                for m in Move::ALL {
                    let pre = PursuitState {
                        d: [sub(post.d[0], m), post.d[1]],
                    };
                    if m.action() != a && valid_pre_state(&pre) {
                        out.push(Neighbor::new(pre.encode(), m.action(), self.weight));
                    }
                }
            }
        }
    }
}

pub fn pursuit_transition(s: StateKey, a: ActionId, control: PursuitControl) -> Vec<Neighbor> {
    PursuitTransition::exact(control).neighbors(s, a)
}

/// Left/right reflection of the oracle gridworld.
#[derive(Copy, Clone, Debug)]
pub struct GridMirror {
    pub spec: GridSpec,
}

impl SimilarityFunction for GridMirror {
    fn domain(&self) -> Domain {
        Domain::OracleGrid
    }

    fn name(&self) -> &'static str {
        "grid_mirror"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        Some(SimilarityNotion::Symmetry)
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        let base = out.len();
        out.push(Neighbor::new(s, a, 1.0));
        let (x, y) = self.spec.cell(s.0 as usize);
        let mirrored = self.spec.index(self.spec.width - 1 - x, y);
        let m = Move::from_action(a).mirror_horizontal();
        push_max_from(
            out,
            base,
            Neighbor::new(StateKey(mirrored as u64), m.action(), 1.0),
        );
    }
}

/// Union of several similarity functions; a pair produced more than once keeps
/// its largest weight.
///
/// Symmetry parts are closed under composition: their images are expanded
/// repeatedly (weights multiply) until no new pair appears, so quarter turns
/// and reflections together give all eight maps of the square. Without the
/// closure the neighbour sets of symmetric pairs disagree and a single spread
/// error can feed back on itself. Representational and transition parts are
/// applied to the original pair only.
#[derive(Clone, Debug)]
pub struct Composite {
    domain: Domain,
    parts: Vec<SharedSimilarity>,
}

/// Bound on the size of a symmetry closure.
const MAX_CLOSURE: usize = 256;

impl Composite {
    pub fn parts(&self) -> &[SharedSimilarity] {
        &self.parts
    }
}

fn dedup_max(out: &mut Vec<Neighbor>, base: usize) {
    // in place, first occurrence keeps its slot
    let mut write = base;
    for read in base..out.len() {
        let n = out[read];
        match out[base..write].iter_mut().find(|m| m.same_key(&n)) {
            Some(m) => m.weight = m.weight.max(n.weight),
            None => {
                out[write] = n;
                write += 1;
            }
        }
    }
    out.truncate(write);
}

impl SimilarityFunction for Composite {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn name(&self) -> &'static str {
        "composite"
    }

    fn notion(&self) -> Option<SimilarityNotion> {
        None
    }

    fn neighbors_into(&self, s: StateKey, a: ActionId, out: &mut Vec<Neighbor>) {
        let base = out.len();
        let closed = |p: &SharedSimilarity| p.notion() == Some(SimilarityNotion::Symmetry);
        out.push(Neighbor::new(s, a, 1.0));
        let mut scratch = Vec::new();
        let mut next = base;
        while next < out.len() && out.len() - base < MAX_CLOSURE {
            let n = out[next];
            next += 1;
            for part in self.parts.iter().filter(|p| closed(p)) {
                scratch.clear();
                part.neighbors_into(n.state, n.action, &mut scratch);
                for m in &scratch {
                    let w = n.weight * m.weight;
                    match out[base..].iter_mut().find(|o| o.same_key(m)) {
                        Some(o) => o.weight = o.weight.max(w),
                        None => out.push(Neighbor::new(m.state, m.action, w)),
                    }
                }
            }
        }
        for part in self.parts.iter().filter(|p| !closed(p)) {
            part.neighbors_into(s, a, out);
        }
        dedup_max(out, base);
    }
}

pub fn compose(parts: Vec<SharedSimilarity>) -> Result<Composite, SimilarityError> {
    let first = parts.first().ok_or(SimilarityError::Empty)?.domain();
    if let Some(other) = parts.iter().map(|p| p.domain()).find(|&d| d != first) {
        return Err(SimilarityError::MixedDomains(first, other));
    }
    Ok(Composite {
        domain: first,
        parts,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    MissingSelf,
    SelfWeight(f64),
    WeightOutOfRange(f64),
    DuplicateKey,
    IllegalState(StateKey),
    IllegalAction(ActionId),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::MissingSelf => write!(f, "self pair missing"),
            ViolationKind::SelfWeight(w) => write!(f, "self-similarity ≠ 1 (got {w})"),
            ViolationKind::WeightOutOfRange(w) => write!(f, "weight out of range (got {w})"),
            ViolationKind::DuplicateKey => write!(f, "duplicate neighbor key"),
            ViolationKind::IllegalState(s) => write!(f, "illegal neighbor state {s}"),
            ViolationKind::IllegalAction(a) => write!(f, "illegal neighbor action {a}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub state: StateKey,
    pub action: ActionId,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checked: usize,
    pub total_neighbors: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mean_neighbors(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.total_neighbors as f64 / self.checked as f64
        }
    }
}

/// Checks every sample against the validity and legality rules. Failures are
/// collected, never raised.
pub fn validate(
    sigma: &dyn SimilarityFunction,
    space: &dyn StateSpace,
    samples: &[(StateKey, ActionId)],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut buf = Vec::new();
    for &(s, a) in samples {
        buf.clear();
        sigma.neighbors_into(s, a, &mut buf);
        report.checked += 1;
        report.total_neighbors += buf.len();
        let mut flag = |kind| {
            report.violations.push(Violation {
                state: s,
                action: a,
                kind,
            })
        };
        match buf.iter().find(|n| n.state == s && n.action == a) {
            None => flag(ViolationKind::MissingSelf),
            Some(n) if n.weight != 1.0 => flag(ViolationKind::SelfWeight(n.weight)),
            Some(_) => {}
        }
        for (i, n) in buf.iter().enumerate() {
            if !(n.weight > 0.0 && n.weight <= 1.0) {
                flag(ViolationKind::WeightOutOfRange(n.weight));
            }
            if buf[..i].iter().any(|m| m.same_key(n)) {
                flag(ViolationKind::DuplicateKey);
            }
            if !space.is_legal_state(n.state) {
                flag(ViolationKind::IllegalState(n.state));
            }
            if n.action.index() >= space.num_actions() {
                flag(ViolationKind::IllegalAction(n.action));
            }
        }
    }
    report
}

/// Uniformly sampled reachable state-action pairs.
pub fn sample_pairs(
    space: &dyn StateSpace,
    n: usize,
    rng: &mut SimRng,
) -> Vec<(StateKey, ActionId)> {
    (0..n)
        .map(|_| {
            let s = space.sample_state(rng);
            (s, ActionId(rng.gen_range(0..space.num_actions() as u16)))
        })
        .collect()
}

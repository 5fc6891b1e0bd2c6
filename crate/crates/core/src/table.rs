//! State/action encodings, experience records, learning hyperparameters and
//! the sparse Q-table shared by every learner.

use std::fmt;
use std::io::{self, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense integer encoding of a domain state.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey(pub u64);

/// Index of an action in `[0, |A|)` of the owning domain.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub u16);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One `<s, a, r, s'>` transition. A terminal experience never bootstraps.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: StateKey,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateKey,
    pub terminal: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("no actions")]
    NoActions,
    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: u16, n_actions: usize },
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid learning parameter `{name}` = {value}: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

/// Learning hyperparameters. The seed determines every stochastic choice of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly; 0 means "the whole training run".
    pub epsilon_decay_episodes: u64,
    pub seed: u64,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 0.1,
            gamma: 0.9,
            lambda: 0.0,
            epsilon_start: 0.3,
            epsilon_end: 0.01,
            epsilon_decay_episodes: 0,
            seed: 0,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        fn check(
            name: &'static str,
            value: f64,
            ok: bool,
            reason: &'static str,
        ) -> Result<(), ParamError> {
            if ok {
                Ok(())
            } else {
                Err(ParamError {
                    name,
                    value,
                    reason,
                })
            }
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        check(
            "alpha",
            self.alpha,
            self.alpha > 0.0 && self.alpha <= 1.0,
            "must be in (0, 1]",
        )?;
        check("gamma", self.gamma, unit(self.gamma), "must be in [0, 1]")?;
        check(
            "lambda",
            self.lambda,
            unit(self.lambda),
            "must be in [0, 1]",
        )?;
        check(
            "epsilon_start",
            self.epsilon_start,
            unit(self.epsilon_start),
            "must be in [0, 1]",
        )?;
        check(
            "epsilon_end",
            self.epsilon_end,
            unit(self.epsilon_end),
            "must be in [0, 1]",
        )?;
        Ok(())
    }

    /// Linear epsilon schedule. `horizon` replaces a zero `epsilon_decay_episodes`.
    pub fn epsilon_at(&self, episode: u64, horizon: u64) -> f64 {
        let span = if self.epsilon_decay_episodes == 0 {
            horizon
        } else {
            self.epsilon_decay_episodes
        };
        if span == 0 {
            return self.epsilon_end;
        }
        if episode >= span {
            return self.epsilon_end;
        }
        let frac = episode as f64 / span as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Sparse action-value table.
///
/// Storage is row-oriented: a visited state owns one contiguous row of
/// `n_actions` values in a flat arena, so the max over a state's actions costs
/// a single hash probe. Unvisited states read as `default_value`. A per-row
/// bitmask records which pairs have actually been written, which is what the
/// snapshot export and [`QTable::len`] report.
#[derive(Clone, Debug)]
pub struct QTable {
    n_actions: usize,
    default_value: f64,
    index: FxHashMap<StateKey, u32>,
    keys: Vec<StateKey>,
    values: Vec<f64>,
    written: Vec<u64>,
}

impl QTable {
    pub const MAX_ACTIONS: usize = 64;

    pub fn new(n_actions: usize) -> Self {
        Self::with_default(n_actions, 0.0)
    }

    pub fn with_default(n_actions: usize, default_value: f64) -> Self {
        assert!(
            (1..=Self::MAX_ACTIONS).contains(&n_actions),
            "QTable supports 1..={} actions, got {n_actions}",
            Self::MAX_ACTIONS
        );
        assert!(default_value.is_finite());
        QTable {
            n_actions,
            default_value,
            index: FxHashMap::default(),
            keys: Vec::new(),
            values: Vec::new(),
            written: Vec::new(),
        }
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    /// Number of written (state, action) entries.
    pub fn len(&self) -> usize {
        self.written.iter().map(|m| m.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Number of states with at least one written entry.
    pub fn n_states(&self) -> usize {
        self.keys.len()
    }

    /// All action values of `s`, or `None` if the state was never written.
    #[inline]
    pub fn row(&self, s: StateKey) -> Option<&[f64]> {
        self.index.get(&s).map(|&r| {
            let start = r as usize * self.n_actions;
            &self.values[start..start + self.n_actions]
        })
    }

    #[inline]
    pub fn get(&self, s: StateKey, a: ActionId) -> f64 {
        debug_assert!(a.index() < self.n_actions);
        match self.index.get(&s) {
            Some(&r) => self.values[r as usize * self.n_actions + a.index()],
            None => self.default_value,
        }
    }

    #[inline]
    fn row_index_or_insert(&mut self, s: StateKey) -> usize {
        let next = self.keys.len() as u32;
        let n = self.n_actions;
        let r = *self.index.entry(s).or_insert(next);
        if r == next {
            self.keys.push(s);
            self.values
                .extend(std::iter::repeat_n(self.default_value, n));
            self.written.push(0);
        }
        r as usize
    }

    #[inline]
    pub fn set(&mut self, s: StateKey, a: ActionId, value: f64) {
        assert!(a.index() < self.n_actions, "action {a} out of range");
        debug_assert!(value.is_finite(), "non-finite Q value {value}");
        let r = self.row_index_or_insert(s);
        self.values[r * self.n_actions + a.index()] = value;
        self.written[r] |= 1 << a.index();
    }

    /// `Q(s,a) += delta`. A zero increment leaves the table untouched.
    #[inline]
    pub fn add(&mut self, s: StateKey, a: ActionId, delta: f64) {
        if delta == 0.0 {
            return;
        }
        assert!(a.index() < self.n_actions, "action {a} out of range");
        let r = self.row_index_or_insert(s);
        let slot = &mut self.values[r * self.n_actions + a.index()];
        *slot += delta;
        debug_assert!(slot.is_finite(), "non-finite Q value");
        self.written[r] |= 1 << a.index();
    }

    /// `max_a Q(s, a)` over the full action range.
    #[inline]
    pub fn max_value(&self, s: StateKey) -> f64 {
        match self.row(s) {
            Some(row) => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => self.default_value,
        }
    }

    /// Max over an explicit action subset.
    pub fn max_over(&self, s: StateKey, actions: &[ActionId]) -> Result<f64, TableError> {
        if actions.is_empty() {
            return Err(TableError::NoActions);
        }
        Ok(actions
            .iter()
            .map(|&a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Argmax over the full action range, ties broken by the smallest id.
    #[inline]
    pub fn greedy(&self, s: StateKey) -> ActionId {
        match self.row(s) {
            Some(row) => {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = i;
                    }
                }
                ActionId(best as u16)
            }
            None => ActionId(0),
        }
    }

    /// Argmax over `actions`, ties broken by the smallest id.
    pub fn greedy_action(&self, s: StateKey, actions: &[ActionId]) -> Result<ActionId, TableError> {
        let mut best: Option<(ActionId, f64)> = None;
        for &a in actions {
            if a.index() >= self.n_actions {
                return Err(TableError::ActionOutOfRange {
                    action: a.0,
                    n_actions: self.n_actions,
                });
            }
            let v = self.get(s, a);
            best = match best {
                Some((ba, bv)) if bv > v || (bv == v && ba < a) => Some((ba, bv)),
                _ => Some((a, v)),
            };
        }
        best.map(|(a, _)| a).ok_or(TableError::NoActions)
    }

    /// Written entries sorted by `(state, action)`.
    pub fn entries(&self) -> Vec<(StateKey, ActionId, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for (r, &s) in self.keys.iter().enumerate() {
            let mask = self.written[r];
            for a in 0..self.n_actions {
                if mask & (1 << a) != 0 {
                    out.push((s, ActionId(a as u16), self.values[r * self.n_actions + a]));
                }
            }
        }
        out.sort_by_key(|&(s, a, _)| (s, a));
        out
    }

    /// Same written entries with bit-identical values.
    pub fn bit_identical(&self, other: &QTable) -> bool {
        self.n_actions == other.n_actions
            && self.default_value.to_bits() == other.default_value.to_bits()
            && self.len() == other.len()
            && self
                .entries()
                .iter()
                .zip(other.entries().iter())
                .all(|(x, y)| x.0 == y.0 && x.1 == y.1 && x.2.to_bits() == y.2.to_bits())
    }

    /// Snapshot export: `state_key,action_id,value` lines, 17 significant digits,
    /// sorted by `(state_key, action_id)`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (s, a, v) in self.entries() {
            writeln!(w, "{},{},{:.16e}", s.0, a.0, v)?;
        }
        Ok(())
    }
}

/// Free-function form of [`QTable::get`].
pub fn q_get(q: &QTable, s: StateKey, a: ActionId) -> f64 {
    q.get(s, a)
}

/// Free-function form of [`QTable::greedy_action`].
pub fn greedy_action(
    q: &QTable,
    s: StateKey,
    actions: &[ActionId],
) -> Result<ActionId, TableError> {
    q.greedy_action(s, actions)
}

/// `[ActionId(0), .., ActionId(n-1)]`.
pub fn all_actions(n: usize) -> Vec<ActionId> {
    (0..n as u16).map(ActionId).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S: StateKey = StateKey(42);

    #[test]
    fn empty_table_reads_default() {
        let q = QTable::new(5);
        assert_eq!(q_get(&q, S, ActionId(3)), 0.0);
        assert!(q.is_empty());
        let q = QTable::with_default(5, -1.5);
        assert_eq!(q.get(StateKey(7), ActionId(0)), -1.5);
        assert_eq!(q.max_value(StateKey(7)), -1.5);
    }

    #[test]
    fn read_after_write_and_key_isolation() {
        let mut q = QTable::new(5);
        q.set(S, ActionId(2), 2.5);
        assert_eq!(q.get(S, ActionId(2)), 2.5);
        assert_eq!(q.get(S, ActionId(1)), 0.0);
        assert_eq!(q.get(StateKey(43), ActionId(2)), 0.0);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn greedy_examples() {
        let acts = all_actions(3);
        let q = QTable::new(3);
        assert_eq!(q.greedy_action(S, &acts).unwrap(), ActionId(0));

        let mut q = QTable::new(3);
        q.set(S, ActionId(0), 1.0);
        q.set(S, ActionId(1), 3.0);
        q.set(S, ActionId(2), 2.0);
        assert_eq!(greedy_action(&q, S, &acts).unwrap(), ActionId(1));
        assert_eq!(q.greedy(S), ActionId(1));

        let mut q = QTable::new(10);
        q.set(S, ActionId(2), 5.0);
        q.set(S, ActionId(7), 5.0);
        q.set(S, ActionId(9), 1.0);
        let subset = [ActionId(2), ActionId(7), ActionId(9)];
        assert_eq!(q.greedy_action(S, &subset).unwrap(), ActionId(2));
        // order of the list does not matter
        let shuffled = [ActionId(9), ActionId(7), ActionId(2)];
        assert_eq!(q.greedy_action(S, &shuffled).unwrap(), ActionId(2));
    }

    #[test]
    fn greedy_on_empty_list_fails() {
        let q = QTable::new(3);
        assert_eq!(q.greedy_action(S, &[]), Err(TableError::NoActions));
        assert_eq!(
            q.greedy_action(S, &[ActionId(3)]).unwrap_err().to_string(),
            "action 3 out of range for 3 actions"
        );
        assert_eq!(TableError::NoActions.to_string(), "no actions");
    }

    #[test]
    fn zero_increment_is_not_a_write() {
        let mut q = QTable::new(2);
        q.add(S, ActionId(0), 0.0);
        assert!(q.is_empty());
        q.add(S, ActionId(0), 0.25);
        q.add(S, ActionId(0), 0.25);
        assert_eq!(q.get(S, ActionId(0)), 0.5);
    }

    #[test]
    fn snapshot_format_is_sorted_full_precision() {
        let mut q = QTable::new(3);
        q.set(StateKey(9), ActionId(1), 0.1);
        q.set(StateKey(2), ActionId(2), -1.0 / 3.0);
        q.set(StateKey(2), ActionId(0), 1.0);
        let mut buf = Vec::new();
        q.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "2,0,1.0000000000000000e0",
                "2,2,-3.3333333333333331e-1",
                "9,1,1.0000000000000001e-1",
            ]
        );
        for l in &lines {
            let v: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
            assert!(v.is_finite());
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let p = LearningParams::default();
        assert_eq!(p.epsilon_at(0, 100), 0.3);
        assert!((p.epsilon_at(50, 100) - 0.155).abs() < 1e-12);
        assert_eq!(p.epsilon_at(100, 100), 0.01);
        assert_eq!(p.epsilon_at(1000, 100), 0.01);
    }

    #[test]
    fn param_validation() {
        assert!(LearningParams::default().validate().is_ok());
        let bad = LearningParams {
            alpha: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().name, "alpha");
        let bad = LearningParams {
            gamma: 1.1,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().name, "gamma");
    }

    proptest! {
        #[test]
        fn last_write_wins(writes in proptest::collection::vec((0u64..50, 0u16..6, -100.0f64..100.0), 0..200)) {
            let mut q = QTable::new(6);
            let mut model = std::collections::HashMap::new();
            for &(s, a, v) in &writes {
                q.set(StateKey(s), ActionId(a), v);
                model.insert((s, a), v);
            }
            for s in 0..50u64 {
                for a in 0..6u16 {
                    let expect = model.get(&(s, a)).copied().unwrap_or(0.0);
                    prop_assert_eq!(q.get(StateKey(s), ActionId(a)).to_bits(), expect.to_bits());
                }
            }
            prop_assert_eq!(q.len(), model.len());
        }

        #[test]
        fn greedy_invariant_under_constant_shift(values in proptest::collection::vec(-10.0f64..10.0, 5), c in -50.0f64..50.0) {
            let acts = all_actions(5);
            let mut q = QTable::new(5);
            let mut shifted = QTable::new(5);
            // quantize so the shift is exact and ties survive it
            let values: Vec<f64> = values.iter().map(|v| (v * 4.0).round() / 4.0).collect();
            let c = c.round();
            for (i, &v) in values.iter().enumerate() {
                q.set(S, ActionId(i as u16), v);
                shifted.set(S, ActionId(i as u16), v + c);
            }
            prop_assert_eq!(q.greedy_action(S, &acts).unwrap(), shifted.greedy_action(S, &acts).unwrap());
            prop_assert_eq!(q.greedy(S), shifted.greedy(S));
        }
    }
}

//! Value iteration over an explicit finite MDP.

use thiserror::Error;

use crate::envs::grid::ExplicitMdp;

/// Actions whose values lie within this distance of the best one count as
/// tied when extracting a greedy policy.
pub const TIE_TOLERANCE: f64 = 1e-9;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ViError {
    #[error("gamma = {0} with no absorbing state: value iteration may not converge")]
    MayNotConverge(f64),
    #[error("gamma must be in [0, 1], got {0}")]
    BadGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("no convergence after {0} sweeps")]
    NotConverged(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViSolution {
    pub v: Vec<f64>,
    /// `q[s][a]`; terminal rows are zero.
    pub q: Vec<Vec<f64>>,
    /// Greedy action per state, lowest id among ties.
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

/// Index of the first value within `tol` of the maximum.
pub fn greedy_with_tolerance(values: &[f64], tol: f64) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= best - tol).unwrap_or(0)
}

/// Synchronous Bellman optimality backups until the sup-norm change drops
/// below `tol`.
pub fn value_iteration(mdp: &ExplicitMdp, gamma: f64, tol: f64) -> Result<ViSolution, ViError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ViError::BadGamma(gamma));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(ViError::BadTolerance(tol));
    }
    if gamma >= 1.0 && !mdp.terminal.iter().any(|&t| t) {
        return Err(ViError::MayNotConverge(gamma));
    }
    let backup = |v: &[f64], s: usize, a: usize| -> f64 {
        mdp.outcomes(s, a)
            .iter()
            .map(|o| o.prob * (o.reward + gamma * v[o.next]))
            .sum()
    };
    let mut v = vec![0.0; mdp.n_states];
    let mut sweeps = 0;
    loop {
        if sweeps == MAX_SWEEPS {
            return Err(ViError::NotConverged(sweeps));
        }
        sweeps += 1;
        let mut change: f64 = 0.0;
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                if mdp.terminal[s] {
                    return 0.0;
                }
                let best = (0..mdp.n_actions)
                    .map(|a| backup(&v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                change = change.max((best - v[s]).abs());
                best
            })
            .collect();
        v = next;
        if change < tol {
            break;
        }
    }
    let q: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|s| {
            if mdp.terminal[s] {
                vec![0.0; mdp.n_actions]
            } else {
                (0..mdp.n_actions).map(|a| backup(&v, s, a)).collect()
            }
        })
        .collect();
    let policy = q
        .iter()
        .map(|row| greedy_with_tolerance(row, TIE_TOLERANCE))
        .collect();
    Ok(ViSolution {
        v,
        q,
        policy,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::grid::{oracle_grid, GridSpec};
    use crate::envs::Move;
    use std::collections::VecDeque;

    #[test]
    fn geometric_self_loop() {
        let sol = value_iteration(&ExplicitMdp::self_loop(1.0), 0.5, 1e-12).unwrap();
        assert!((sol.v[0] - 2.0).abs() < 1e-11);
        let zero = value_iteration(&ExplicitMdp::self_loop(0.0), 0.5, 1e-12).unwrap();
        assert_eq!(zero.v, vec![0.0]);
    }

    #[test]
    fn undiscounted_loop_is_rejected() {
        assert_eq!(
            value_iteration(&ExplicitMdp::self_loop(1.0), 1.0, 1e-6),
            Err(ViError::MayNotConverge(1.0))
        );
        assert!(matches!(
            value_iteration(&ExplicitMdp::self_loop(1.0), 0.5, 0.0),
            Err(ViError::BadTolerance(_))
        ));
    }

    #[test]
    fn one_step_chain() {
        let spec = GridSpec {
            width: 2,
            height: 1,
            goal: (1, 0),
            goal_reward: 1.0,
        };
        let sol = value_iteration(&oracle_grid(&spec).unwrap(), 0.5, 1e-12).unwrap();
        assert_eq!(sol.v[0], 1.0);
        assert_eq!(sol.policy[0], Move::East.index());
        // staying put is worth gamma * V(start)
        assert_eq!(sol.q[0][Move::Stay.index()], 0.5);
    }

    #[test]
    fn zero_reward_mdp() {
        let mut mdp = oracle_grid(&GridSpec::five_by_five()).unwrap();
        mdp = mdp.map_rewards(|_, _, _, _| 0.0);
        let sol = value_iteration(&mdp, 0.9, 1e-10).unwrap();
        assert!(sol.v.iter().all(|&v| v == 0.0));
    }

    /// Breadth-first distances to the goal; optimal moves are exactly those
    /// reducing the distance by one.
    #[test]
    fn grid_policy_follows_shortest_paths() {
        let spec = GridSpec::five_by_five();
        let sol = value_iteration(&oracle_grid(&spec).unwrap(), 0.9, 1e-10).unwrap();
        let n = spec.n_states();
        let mut dist = vec![usize::MAX; n];
        let goal = spec.goal_index();
        dist[goal] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(c) = queue.pop_front() {
            for s in 0..n {
                if dist[s] == usize::MAX && Move::ALL.iter().any(|&m| spec.successor(s, m) == c) {
                    dist[s] = dist[c] + 1;
                    queue.push_back(s);
                }
            }
        }
        for s in 0..n {
            if s == goal {
                continue;
            }
            let chosen = spec.successor(s, Move::from_index(sol.policy[s]));
            assert_eq!(dist[chosen] + 1, dist[s], "state {s}");
            let first_shortest = Move::ALL
                .iter()
                .position(|&m| dist[spec.successor(s, m)] + 1 == dist[s])
                .unwrap();
            assert_eq!(sol.policy[s], first_shortest);
            assert!((sol.v[s] - 0.9f64.powi(dist[s] as i32 - 1)).abs() < 1e-9);
        }
        // strictly decreasing in goal distance
        for a in 0..n {
            for b in 0..n {
                if a != goal && b != goal && dist[a] < dist[b] {
                    assert!(sol.v[a] > sol.v[b]);
                }
            }
        }
    }
}

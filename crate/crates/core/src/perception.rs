//! Locally related robots and local information aggregation (LIA).
//!
//! A robot's related set is the union of its α_max nearest robots and every
//! robot currently choosing the same task. The observations and action
//! distributions of that set are mixed into fixed-width vectors with weights
//! w_k ∝ d_k^β, so the critic input width never depends on how many robots
//! happen to be related.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::world::{Action, WorldState};

/// Distances are clamped here before taking logarithms.
pub const D_MIN: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelatedSet {
    pub robot_id: usize,
    /// k-nearest robots, ascending distance (ties by id).
    pub neighbors: Vec<usize>,
    /// Other robots whose chosen task equals this robot's.
    pub same_action: Vec<usize>,
    /// Euclidean distance for every member of neighbors ∪ same_action.
    pub distances: BTreeMap<usize, f64>,
}

impl RelatedSet {
    /// neighbors ∪ same_action, ascending id, no duplicates.
    pub fn members(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self
            .neighbors
            .iter()
            .chain(&self.same_action)
            .copied()
            .filter(|&k| k != self.robot_id)
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty() && self.same_action.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedInfo {
    pub agg_obs: Vec<f64>,
    pub agg_act: Vec<f64>,
}

/// Pairwise distances plus neighbor lists at one instant. Stored with each
/// transition so related sets can be rebuilt for different joint actions.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionSnapshot {
    n: usize,
    pub neighbors: Vec<Vec<usize>>,
    distances: Vec<f64>,
}

impl PerceptionSnapshot {
    pub fn capture(world: &WorldState, alpha_max: usize) -> Self {
        let n = world.n_robots();
        let mut distances = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = world.robot_distance(a, b);
                distances[a * n + b] = d;
                distances[b * n + a] = d;
            }
        }
        let neighbors = (0..n)
            .map(|i| {
                let mut others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
                others.sort_by(|&a, &b| {
                    distances[i * n + a]
                        .total_cmp(&distances[i * n + b])
                        .then(a.cmp(&b))
                });
                others.truncate(alpha_max);
                others
            })
            .collect();
        Self {
            n,
            neighbors,
            distances,
        }
    }

    pub fn n_robots(&self) -> usize {
        self.n
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances[a * self.n + b]
    }

    /// Related set of robot `i` given every robot's chosen task.
    pub fn related_set(&self, i: usize, task_indices: &[usize]) -> RelatedSet {
        let neighbors = self.neighbors[i].clone();
        let same_action: Vec<usize> = (0..self.n)
            .filter(|&k| k != i && task_indices[k] == task_indices[i])
            .collect();
        let distances = neighbors
            .iter()
            .chain(&same_action)
            .map(|&k| (k, self.distance(i, k)))
            .collect();
        RelatedSet {
            robot_id: i,
            neighbors,
            same_action,
            distances,
        }
    }

    pub fn neighbor_sets(&self) -> Vec<RelatedSet> {
        (0..self.n)
            .map(|i| RelatedSet {
                robot_id: i,
                neighbors: self.neighbors[i].clone(),
                same_action: Vec::new(),
                distances: self.neighbors[i]
                    .iter()
                    .map(|&k| (k, self.distance(i, k)))
                    .collect(),
            })
            .collect()
    }
}

/// The α_max nearest other robots for every robot.
pub fn neighbor_sets(world: &WorldState, alpha_max: usize) -> Vec<RelatedSet> {
    PerceptionSnapshot::capture(world, alpha_max).neighbor_sets()
}

/// Fill in the same-action sets for a joint action.
pub fn related_sets(snapshot: &PerceptionSnapshot, actions: &[Action]) -> Vec<RelatedSet> {
    let tasks: Vec<usize> = actions.iter().map(|a| a.task_index).collect();
    (0..snapshot.n_robots())
        .map(|i| snapshot.related_set(i, &tasks))
        .collect()
}

/// w_k = d_k^β / Σ_m d_m^β, evaluated in log space.
pub fn lia_weights(distances: &[f64], beta: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::EmptyRelatedSet);
    }
    let logits: Vec<f64> = distances
        .iter()
        .map(|&d| beta * d.max(D_MIN).ln())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Weighted mix of member rows into `agg_obs` / `agg_act`. Members are
/// visited in ascending id so the result does not depend on set order.
/// An empty set leaves both outputs at zero.
pub fn aggregate_into<'a>(
    related: &RelatedSet,
    obs_row: impl Fn(usize) -> &'a [f64],
    act_row: impl Fn(usize) -> &'a [f64],
    beta: f64,
    agg_obs: &mut [f64],
    agg_act: &mut [f64],
) {
    agg_obs.iter_mut().for_each(|x| *x = 0.0);
    agg_act.iter_mut().for_each(|x| *x = 0.0);
    let members = related.members();
    let dists: Vec<f64> = members.iter().map(|k| related.distances[k]).collect();
    let Ok(weights) = lia_weights(&dists, beta) else {
        return;
    };
    for (&k, &w) in members.iter().zip(&weights) {
        for (acc, &x) in agg_obs.iter_mut().zip(obs_row(k)) {
            *acc += w * x;
        }
        for (acc, &x) in agg_act.iter_mut().zip(act_row(k)) {
            *acc += w * x;
        }
    }
}

pub fn aggregate(
    related: &RelatedSet,
    observations: &[&[f64]],
    distributions: &[&[f64]],
    beta: f64,
) -> AggregatedInfo {
    let obs_dim = observations.first().map_or(0, |o| o.len());
    let act_dim = distributions.first().map_or(0, |a| a.len());
    let mut agg_obs = vec![0.0; obs_dim];
    let mut agg_act = vec![0.0; act_dim];
    aggregate_into(
        related,
        |k| observations[k],
        |k| distributions[k],
        beta,
        &mut agg_obs,
        &mut agg_act,
    );
    AggregatedInfo { agg_obs, agg_act }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;
    use crate::world::init_world;

    fn line_world(xs: &[f64], alpha: usize) -> WorldState {
        let cfg = WorldConfig {
            n_robots: xs.len(),
            n_tasks: 2,
            alpha_max: alpha,
            ..WorldConfig::default()
        };
        let mut w = init_world(&cfg, 0).unwrap();
        for (r, &x) in w.robots.iter_mut().zip(xs) {
            r.position = [x / 10.0, 0.5];
        }
        w
    }

    #[test]
    fn two_robots_see_each_other() {
        let sets = neighbor_sets(&line_world(&[0.0, 3.0], 5), 5);
        assert_eq!(sets[0].neighbors, vec![1]);
        assert_eq!(sets[1].neighbors, vec![0]);
    }

    #[test]
    fn zero_cap_means_no_neighbors() {
        let sets = neighbor_sets(&line_world(&[0.0, 1.0, 2.0], 0), 0);
        assert!(sets.iter().all(|s| s.neighbors.is_empty()));
    }

    #[test]
    fn nearest_on_a_line() {
        let sets = neighbor_sets(&line_world(&[0.0, 1.0, 2.0, 3.0], 2), 2);
        assert_eq!(sets[0].neighbors, vec![1, 2]);
        assert_eq!(sets[3].neighbors, vec![2, 1]);
        // robot 1: 0 and 2 tie at distance 1, lower id first
        assert_eq!(sets[1].neighbors, vec![0, 2]);
        assert!((sets[0].distances[&2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn same_action_membership() {
        let w = line_world(&[0.0, 5.0, 0.5], 1);
        let snap = PerceptionSnapshot::capture(&w, 1);
        let acts = [Action::one_hot(0, 2), Action::one_hot(0, 2), Action::one_hot(1, 2)];
        let rel = related_sets(&snap, &acts);
        assert_eq!(rel[0].neighbors, vec![2]);
        assert_eq!(rel[0].same_action, vec![1]);
        assert_eq!(rel[0].members(), vec![1, 2]);
        assert!((rel[0].distances[&1] - 0.5).abs() < 1e-12);

        let all_same = [Action::one_hot(1, 2), Action::one_hot(1, 2), Action::one_hot(1, 2)];
        let rel = related_sets(&snap, &all_same);
        assert!(rel.iter().all(|s| s.same_action.len() == 2));
    }

    #[test]
    fn distinct_actions_leave_only_neighbors() {
        let w = line_world(&[0.0, 5.0, 9.0], 1);
        let snap = PerceptionSnapshot::capture(&w, 1);
        let acts = [Action::one_hot(0, 3), Action::one_hot(1, 3), Action::one_hot(2, 3)];
        for s in related_sets(&snap, &acts) {
            assert!(s.same_action.is_empty());
            assert_eq!(s.members(), s.neighbors);
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(lia_weights(&[0.3, 0.3], -1.0).unwrap(), vec![0.5, 0.5]);
        let w = lia_weights(&[1.0, 2.0], -1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        let w = lia_weights(&[0.1, 0.7, 0.2], 0.0).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(matches!(lia_weights(&[], -1.0), Err(Error::EmptyRelatedSet)));
        // clamped at D_MIN instead of ln(0)
        let w = lia_weights(&[0.0, 1.0], -1.0).unwrap();
        assert!(w[0] > 0.999 && w.iter().all(|x| x.is_finite()));
    }

    fn set_with(ids: &[(usize, f64)]) -> RelatedSet {
        RelatedSet {
            robot_id: 99,
            neighbors: ids.iter().map(|&(k, _)| k).collect(),
            same_action: vec![],
            distances: ids.iter().copied().collect(),
        }
    }

    #[test]
    fn aggregate_examples() {
        let obs: Vec<Vec<f64>> = vec![vec![3.0, 1.0], vec![6.0, 2.0]];
        let acts: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let o: Vec<&[f64]> = obs.iter().map(Vec::as_slice).collect();
        let a: Vec<&[f64]> = acts.iter().map(Vec::as_slice).collect();

        let single = aggregate(&set_with(&[(1, 0.4)]), &o, &a, -1.0);
        assert_eq!(single.agg_obs, obs[1]);
        assert_eq!(single.agg_act, acts[1]);

        let equal = aggregate(&set_with(&[(0, 0.2), (1, 0.2)]), &o, &a, -1.0);
        assert_eq!(equal.agg_act, vec![0.5, 0.5, 0.0]);

        // weights [2/3, 1/3] over (3, 6) -> 4
        let weighted = aggregate(&set_with(&[(0, 1.0), (1, 2.0)]), &o, &a, -1.0);
        assert!((weighted.agg_obs[0] - 4.0).abs() < 1e-12);

        let empty = aggregate(&set_with(&[]), &o, &a, -1.0);
        assert_eq!(empty.agg_obs, vec![0.0, 0.0]);
        assert_eq!(empty.agg_act, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn robot_never_relates_to_itself() {
        let w = line_world(&[0.0, 1.0, 2.0], 5);
        let snap = PerceptionSnapshot::capture(&w, 5);
        for s in related_sets(&snap, &vec![Action::one_hot(0, 2); 3]) {
            assert!(!s.neighbors.contains(&s.robot_id));
            assert!(!s.same_action.contains(&s.robot_id));
            assert!(!s.members().contains(&s.robot_id));
        }
    }
}

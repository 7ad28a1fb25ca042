//! Episode metrics: NATU, NATC and dominance rate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::world::{EpisodeResult, WorldState};

/// Best total task reward any capacity-respecting assignment can collect:
/// each robot takes at most one task, task `j` accepts at most its capacity.
/// Movement cost is ignored, so this bounds every achievable total utility.
/// Returns the chosen task per robot along with the value.
pub fn optimal_assignment(rewards: &[f64], n_robots: usize, capacities: &[usize]) -> (f64, Vec<Option<usize>>) {
    let n_tasks = capacities.len();
    // one column per task slot
    let slots: Vec<usize> = (0..n_tasks).flat_map(|j| std::iter::repeat_n(j, capacities[j])).collect();
    let mut choice = vec![None; n_robots];
    if n_robots == 0 || slots.is_empty() {
        return (0.0, choice);
    }
    let value = |i: usize, s: usize| rewards[i * n_tasks + slots[s]];
    if n_robots <= slots.len() {
        let cols = hungarian_max(n_robots, slots.len(), value);
        for (i, c) in cols.into_iter().enumerate() {
            choice[i] = Some(slots[c]);
        }
    } else {
        let cols = hungarian_max(slots.len(), n_robots, |r, c| value(c, r));
        for (s, i) in cols.into_iter().enumerate() {
            choice[i] = Some(slots[s]);
        }
    }
    let total = choice
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|j| rewards[i * n_tasks + j]))
        .sum();
    (total, choice)
}

/// Maximum-weight assignment of every row to a distinct column
/// (rows ≤ cols), shortest augmenting paths with potentials.
fn hungarian_max(rows: usize, cols: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let cost = |r: usize, c: usize| -weight(r, c);
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut c0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[c0] = true;
            let r0 = owner[c0];
            let mut delta = f64::INFINITY;
            let mut c1 = 0;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = c0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    c1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            c0 = c1;
            if owner[c0] == 0 {
                break;
            }
        }
        loop {
            let c1 = way[c0];
            owner[c0] = owner[c1];
            c0 = c1;
            if c0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; rows];
    for c in 1..=cols {
        if owner[c] != 0 {
            out[owner[c] - 1] = c - 1;
        }
    }
    out
}

/// U_max for the initial state of an episode.
pub fn u_max(world0: &WorldState) -> Result<f64> {
    let caps: Vec<usize> = world0.tasks.iter().map(|t| t.capacity).collect();
    let (total, _) = optimal_assignment(&world0.reward_matrix, world0.n_robots(), &caps);
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::Invalid("U_max is zero; NATU undefined".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Natu {
    pub raw: f64,
    /// `raw` clamped below at zero.
    pub reported: f64,
}

pub fn natu(episode: &EpisodeResult, world0: &WorldState) -> Result<Natu> {
    natu_from(episode.total_utility, u_max(world0)?)
}

pub fn natu_from(total_utility: f64, u_max: f64) -> Result<Natu> {
    if u_max <= 0.0 {
        return Err(Error::Invalid("U_max is zero; NATU undefined".into()));
    }
    let raw = total_utility / u_max;
    Ok(Natu {
        raw,
        reported: raw.max(0.0),
    })
}

pub fn natc(episode: &EpisodeResult, max_steps: usize) -> f64 {
    if episode.bind_times.is_empty() {
        return 0.0;
    }
    let mean = episode.bind_times.iter().map(|&t| t.min(max_steps) as f64).sum::<f64>()
        / episode.bind_times.len() as f64;
    mean / max_steps as f64
}

/// Per-scenario winner: the policy with strictly the highest total utility,
/// `None` on a tie for first place.
pub fn winners(results: &BTreeMap<String, Vec<f64>>) -> Result<Vec<Option<String>>> {
    let n = results.values().next().map_or(0, Vec::len);
    if results.values().any(|v| v.len() != n) {
        return Err(Error::Invalid("policies evaluated on different scenario counts".into()));
    }
    Ok((0..n)
        .map(|s| {
            let mut best: Option<(&String, f64)> = None;
            let mut tied = false;
            for (name, totals) in results {
                let x = totals[s];
                match best {
                    Some((_, b)) if x < b => {}
                    Some((_, b)) if x == b => tied = true,
                    _ => {
                        best = Some((name, x));
                        tied = false;
                    }
                }
            }
            if tied {
                None
            } else {
                best.map(|(name, _)| name.clone())
            }
        })
        .collect())
}

pub fn dominance_rate(results: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, f64>> {
    let wins = winners(results)?;
    let n = wins.len().max(1) as f64;
    Ok(results
        .keys()
        .map(|name| {
            let w = wins.iter().filter(|x| x.as_deref() == Some(name.as_str())).count();
            (name.clone(), w as f64 / n)
        })
        .collect())
}

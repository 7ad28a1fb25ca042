//! Scenario sets, batch evaluation and result artifacts.

pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExecConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::exec::{run_execution, PolicyKind};
use crate::maddpg::{check_actor, csv_err};
use crate::nn::NetworkParams;
use crate::rng;
use crate::world::init_world;

/// Environment variable capping the evaluation worker count.
pub const THREADS_ENV: &str = "SWARM_ALLOC_THREADS";

/// NATU above this is reported as suspicious.
pub const NATU_TOLERANCE: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub seed: u64,
    pub world: WorldConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scale: String,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    /// `count` scenarios sharing `world`, with distinct seeds derived from
    /// `seed`.
    pub fn generate(world: &WorldConfig, count: usize, seed: u64, scale: &str) -> Result<Self> {
        world.validate()?;
        let mut seen = BTreeSet::new();
        let mut scenarios = Vec::with_capacity(count);
        let mut k = 0u64;
        while scenarios.len() < count {
            let s = rng::derive_seed(seed, "scenario", k);
            k += 1;
            if seen.insert(s) {
                scenarios.push(Scenario {
                    id: scenarios.len(),
                    seed: s,
                    world: world.clone(),
                });
            }
        }
        Ok(Self {
            scale: scale.to_string(),
            scenarios,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut seeds = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            s.world.validate()?;
            if !seeds.insert(s.seed) {
                return Err(Error::Invalid(format!("duplicate scenario seed {}", s.seed)));
            }
            if !ids.insert(s.id) {
                return Err(Error::Invalid(format!("duplicate scenario id {}", s.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("scenario manifest: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario_id: usize,
    pub policy: PolicyKind,
    pub total_utility: f64,
    pub natu_raw: f64,
    pub natu: f64,
    pub natc: f64,
    /// Strict best policy on this scenario; `None` on a tie.
    pub winner: Option<PolicyKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub natu_mean: f64,
    pub natu_std: f64,
    pub natc_mean: f64,
    pub natc_std: f64,
    pub dr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Sorted by scenario id, then policy.
    pub rows: Vec<MetricsRow>,
    pub summary: BTreeMap<PolicyKind, PolicySummary>,
    /// Rows whose raw NATU exceeded [`NATU_TOLERANCE`].
    pub natu_exceedances: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricsReport {
    pub fn from_rows(mut rows: Vec<MetricsRow>, policies: &[PolicyKind]) -> Result<Self> {
        rows.sort_by_key(|r| (r.scenario_id, r.policy));
        let mut totals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in policies {
            totals.insert(
                p.name().to_string(),
                rows.iter().filter(|r| r.policy == *p).map(|r| r.total_utility).collect(),
            );
        }
        let winners = metrics::winners(&totals)?;
        let dr = metrics::dominance_rate(&totals)?;
        let ids: Vec<usize> = rows.iter().map(|r| r.scenario_id).collect::<BTreeSet<_>>().into_iter().collect();
        for row in &mut rows {
            let s = ids.binary_search(&row.scenario_id).expect("known id");
            row.winner = winners[s].as_deref().map(|w| w.parse().expect("policy name"));
        }
        let summary = policies
            .iter()
            .map(|p| {
                let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.policy == *p).collect();
                let (natu_mean, natu_std) = mean_std(&mine.iter().map(|r| r.natu).collect::<Vec<_>>());
                let (natc_mean, natc_std) = mean_std(&mine.iter().map(|r| r.natc).collect::<Vec<_>>());
                let summary = PolicySummary {
                    natu_mean,
                    natu_std,
                    natc_mean,
                    natc_std,
                    dr: dr[p.name()],
                };
                (*p, summary)
            })
            .collect();
        let natu_exceedances = rows.iter().filter(|r| r.natu_raw > NATU_TOLERANCE).count();
        Ok(Self {
            rows,
            summary,
            natu_exceedances,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario_id", "policy", "total_utility", "natu_raw", "natu", "natc", "winner"])
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scenario_id.to_string(),
                r.policy.name().to_string(),
                r.total_utility.to_string(),
                r.natu_raw.to_string(),
                r.natu.to_string(),
                r.natc.to_string(),
                r.winner.map_or("none", PolicyKind::name).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<metrics>", e))
    }

    pub fn summary_text(&self) -> String {
        let scenarios = self.rows.iter().map(|r| r.scenario_id).collect::<BTreeSet<_>>().len();
        let mut s = format!("scenarios: {scenarios}\n");
        for (p, m) in &self.summary {
            let _ = writeln!(
                s,
                "{:<22} natu {:.4} ± {:.4}  natc {:.4} ± {:.4}  dr {:.3}",
                p.name(),
                m.natu_mean,
                m.natu_std,
                m.natc_mean,
                m.natc_std,
                m.dr
            );
        }
        if self.natu_exceedances > 0 {
            let _ = writeln!(s, "warning: {} rows with natu above {NATU_TOLERANCE}", self.natu_exceedances);
        }
        s
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Seed of the per-robot improvement streams for a scenario.
pub fn exec_seed(scenario_seed: u64) -> u64 {
    rng::derive_seed(scenario_seed, "exec", 0)
}

/// Runs every policy on every scenario from identical initial states.
pub fn evaluate(
    set: &ScenarioSet,
    policies: &[PolicyKind],
    actor: Option<&NetworkParams>,
    exec: &ExecConfig,
) -> Result<MetricsReport> {
    set.validate()?;
    let mut unique = policies.to_vec();
    unique.sort();
    unique.dedup();
    if unique.is_empty() {
        return Err(Error::Config("no policies to evaluate".into()));
    }
    if unique.iter().any(|p| p.needs_params()) {
        let actor = actor.ok_or_else(|| Error::MissingParams("learned policies need a checkpoint".into()))?;
        for s in &set.scenarios {
            check_actor(actor, &s.world)?;
        }
    }

    let run = |s: &Scenario| -> Result<Vec<MetricsRow>> {
        let world0 = init_world(&s.world, s.seed)?;
        let u_max = metrics::u_max(&world0)?;
        unique
            .iter()
            .map(|&policy| {
                let mut world = world0.clone();
                let result = run_execution(&mut world, policy, actor, exec, exec_seed(s.seed))?;
                let natu = metrics::natu_from(result.total_utility, u_max)?;
                Ok(MetricsRow {
                    scenario_id: s.id,
                    policy,
                    total_utility: result.total_utility,
                    natu_raw: natu.raw,
                    natu: natu.reported,
                    natc: metrics::natc(&result, s.world.max_steps),
                    winner: None,
                })
            })
            .collect()
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let per_scenario: Vec<Result<Vec<MetricsRow>>> = pool.install(|| set.scenarios.par_iter().map(run).collect());
    let mut rows = Vec::new();
    for r in per_scenario {
        rows.extend(r?);
    }
    MetricsReport::from_rows(rows, &unique)
}

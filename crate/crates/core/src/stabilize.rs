//! Greedy, silhouette-rewarded role stabilization.
//!
//! Starting from an initial partition (normally a k-means result) every round
//! tries each user in every role, scores each attempt with the silhouette the
//! user would have there, moves the user to the best-scoring role and blends
//! that score into the user × role state matrix:
//!
//! ```text
//! S[i][j] <- (1 - beta) * S[i][j] + beta * reward
//! ```
//!
//! After a full round the partition is accepted when its average silhouette
//! exceeds `gamma` and its churn against the previous round is below `delta`;
//! otherwise another round runs over all users.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quality::{breakdown_with, randomness, silhouette_value, Partition};
use crate::{dist, seed, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Ascending user id.
    #[default]
    Sorted,
    /// A fresh seeded permutation every round.
    Shuffle,
}

/// What a user's rewards are measured against within a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Memberships and centroids as they stood at the end of the previous round.
    #[default]
    Snapshot,
    /// Memberships and centroids updated after every single move.
    Incremental,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizeConfig {
    /// Initial state value of every user's starting role.
    pub alpha: f64,
    /// Weight of the instant reward in the state update.
    pub beta: f64,
    /// Average silhouette must exceed this.
    pub gamma: f64,
    /// Round-to-round randomness must stay below this (absolute count).
    pub delta: f64,
    pub max_rounds: usize,
    pub order: OrderPolicy,
    pub reference: ReferenceMode,
    pub seed: u64,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.7,
            delta: 0.0,
            max_rounds: 500,
            order: OrderPolicy::Sorted,
            reference: ReferenceMode::Snapshot,
            seed: 0,
        }
    }
}

impl StabilizeConfig {
    pub const DEFAULT_DELTA_FRAC: f64 = 1.0 / 20.0;

    /// Defaults with `delta = |U| / 20`.
    pub fn for_users(users: usize) -> Self {
        Self::default().with_delta_frac(users, Self::DEFAULT_DELTA_FRAC)
    }

    pub fn with_delta_frac(mut self, users: usize, frac: f64) -> Self {
        self.delta = users as f64 * frac;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(self.gamma > -1.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (-1, 1)", self.gamma));
        }
        if !(self.delta >= 0.0) {
            return bad(format!("delta {} is negative", self.delta));
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1".into());
        }
        if !self.alpha.is_finite() {
            return bad(format!("alpha {} is not finite", self.alpha));
        }
        Ok(())
    }
}

/// User × role membership values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub user_ids: Vec<String>,
    pub roles: Vec<String>,
    /// Row-major `|U| × |ROLE|`.
    pub values: Vec<f64>,
    /// Number of rounds applied.
    pub round: usize,
}

impl StateMatrix {
    pub fn get(&self, user: usize, role: usize) -> f64 {
        self.values[user * self.roles.len() + role]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        let k = self.roles.len();
        &self.values[user * k..(user + 1) * k]
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(std::iter::once("user_id").chain(self.roles.iter().map(String::as_str)))?;
        for (u, id) in self.user_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(u).iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `alpha` where a user holds a role, zero elsewhere.
pub fn init_state(partition: &Partition, alpha: f64) -> Result<StateMatrix> {
    let k = partition.role_count();
    if k == 0 && !partition.is_empty() {
        return Err(Error::InvalidPartition("users but no roles".into()));
    }
    let mut values = vec![0.0; partition.len() * k];
    for (u, &r) in partition.assignment().iter().enumerate() {
        values[u * k + r] = alpha;
    }
    Ok(StateMatrix {
        user_ids: partition.user_ids().to_vec(),
        roles: partition.roles().to_vec(),
        values,
        round: 0,
    })
}

/// Role memberships and centroids that rewards are scored against. An empty
/// role keeps the last centroid it had.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleSnapshot {
    pub members: Vec<Vec<usize>>,
    pub centroids: Vec<Vec<f64>>,
}

impl RoleSnapshot {
    pub fn new(partition: &Partition, frozen: &[Vec<f64>]) -> Self {
        let centroids = partition
            .centroids()
            .into_iter()
            .zip(frozen)
            .map(|(c, f)| c.unwrap_or_else(|| f.clone()))
            .collect();
        Self { members: partition.member_lists(), centroids }
    }

    /// Snapshot of a partition in which no role is empty.
    pub fn of(partition: &Partition) -> Result<Self> {
        let centroids = partition
            .centroids()
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidPartition("a role is empty and has no previous centroid".into()))?;
        Ok(Self { members: partition.member_lists(), centroids })
    }
}

/// Reward of placing `user` in each role: the silhouette it would have as a
/// member, measured against the snapshot (the user itself never counts as a
/// co-member).
pub fn instant_rewards(vectors: &[Vec<f64>], user: usize, snap: &RoleSnapshot) -> Result<Vec<f64>> {
    let k = snap.centroids.len();
    if k < 2 {
        return Err(Error::SingleRole);
    }
    let x = &vectors[user];
    let cd: Vec<f64> = snap.centroids.iter().map(|c| dist(x, c)).collect();
    // nearest and second-nearest centroid give ORMin for every candidate role
    let (mut first, mut second) = (usize::MAX, usize::MAX);
    for j in 0..k {
        if first == usize::MAX || cd[j] < cd[first] {
            second = first;
            first = j;
        } else if second == usize::MAX || cd[j] < cd[second] {
            second = j;
        }
    }
    let rewards = snap
        .members
        .iter()
        .enumerate()
        .map(|(j, members)| {
            let tr = members
                .iter()
                .filter(|&&v| v != user)
                .map(|&v| dist(x, &vectors[v]))
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
            let or = if j == first { cd[second] } else { cd[first] };
            silhouette_value(tr, or)
        })
        .collect();
    Ok(rewards)
}

/// Highest reward; ties go to the larger state value, then the lower index.
pub fn greedy_select(rewards: &[f64], state_row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..rewards.len() {
        let better = rewards[j] > rewards[best] || (rewards[j] == rewards[best] && state_row[j] > state_row[best]);
        if better {
            best = j;
        }
    }
    best
}

/// Blends `reward` into `S[user][role]` and returns the new value.
pub fn update_state(s: &mut StateMatrix, user: usize, role: usize, reward: f64, beta: f64) -> f64 {
    let k = s.roles.len();
    let cell = &mut s.values[user * k + role];
    *cell = (1.0 - beta) * *cell + beta * reward;
    *cell
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub avg_silhouette: f64,
    /// Churn against the previous round's partition.
    pub randomness: usize,
    pub moved: usize,
    #[serde(skip)]
    pub duration: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub partition: Partition,
    pub centroids: Vec<Vec<f64>>,
    pub randomness: usize,
    pub avg_silhouette: f64,
    pub moved: usize,
}

fn processing_order(n: usize, cfg: &StabilizeConfig, round: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.order == OrderPolicy::Shuffle {
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, "order", round as u64)));
    }
    order
}

/// Snapshot reference: every reward of the round is scored against the
/// previous partition, so rewards are computed in parallel and applied in
/// processing order.
fn snapshot_round(previous: &Partition, snap: &RoleSnapshot, s: &mut StateMatrix, cfg: &StabilizeConfig, order: &[usize]) -> Result<Vec<usize>> {
    let vectors = previous.vectors();
    let rewards = (0..previous.len())
        .into_par_iter()
        .map(|u| instant_rewards(vectors, u, snap))
        .collect::<Result<Vec<_>>>()?;
    let mut assignment = previous.assignment().to_vec();
    for &u in order {
        let j = greedy_select(&rewards[u], s.row(u));
        assignment[u] = j;
        update_state(s, u, j, rewards[u][j], cfg.beta);
    }
    Ok(assignment)
}

/// Incremental reference: each move updates memberships and the two affected
/// centroids before the next user is scored.
fn incremental_round(previous: &Partition, snap: &RoleSnapshot, s: &mut StateMatrix, cfg: &StabilizeConfig, order: &[usize]) -> Result<Vec<usize>> {
    let vectors = previous.vectors();
    let mut snap = snap.clone();
    let dim = vectors.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; snap.members.len()];
    for (r, members) in snap.members.iter().enumerate() {
        for &u in members {
            sums[r].iter_mut().zip(&vectors[u]).for_each(|(s, x)| *s += x);
        }
    }
    let mut assignment = previous.assignment().to_vec();
    for &u in order {
        let rewards = instant_rewards(vectors, u, &snap)?;
        let j = greedy_select(&rewards, s.row(u));
        update_state(s, u, j, rewards[j], cfg.beta);
        let from = assignment[u];
        if from != j {
            snap.members[from].retain(|&v| v != u);
            let pos = snap.members[j].partition_point(|&v| v < u);
            snap.members[j].insert(pos, u);
            sums[from].iter_mut().zip(&vectors[u]).for_each(|(s, x)| *s -= x);
            sums[j].iter_mut().zip(&vectors[u]).for_each(|(s, x)| *s += x);
            for r in [from, j] {
                let n = snap.members[r].len();
                if n > 0 {
                    snap.centroids[r] = sums[r].iter().map(|s| s / n as f64).collect();
                }
            }
            assignment[u] = j;
        }
    }
    Ok(assignment)
}

/// One pass over all users. `centroids` are the previous round's role
/// centroids (frozen ones for empty roles).
pub fn run_round(
    previous: &Partition,
    centroids: &[Vec<f64>],
    s: &mut StateMatrix,
    cfg: &StabilizeConfig,
) -> Result<RoundOutcome> {
    if previous.role_count() < 2 {
        return Err(Error::SingleRole);
    }
    let snap = RoleSnapshot::new(previous, centroids);
    let order = processing_order(previous.len(), cfg, s.round);
    let assignment = match cfg.reference {
        ReferenceMode::Snapshot => snapshot_round(previous, &snap, s, cfg, &order)?,
        ReferenceMode::Incremental => incremental_round(previous, &snap, s, cfg, &order)?,
    };
    s.round += 1;
    let moved = assignment.iter().zip(previous.assignment()).filter(|(a, b)| a != b).count();
    let partition = previous.with_assignment(assignment)?;
    let centroids = RoleSnapshot::new(&partition, &snap.centroids).centroids;
    let with_frozen: Vec<Option<Vec<f64>>> = centroids.iter().cloned().map(Some).collect();
    let avg_silhouette = breakdown_with(&partition, &with_frozen)?.average;
    let randomness = randomness(previous, &partition)?;
    Ok(RoundOutcome { partition, centroids, randomness, avg_silhouette, moved })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilizationReport {
    pub config: StabilizeConfig,
    pub initial_avg_silhouette: f64,
    pub rounds: Vec<RoundRecord>,
    pub converged: bool,
    pub final_partition: Partition,
    pub final_state: StateMatrix,
}

impl StabilizationReport {
    pub fn rounds_used(&self) -> usize {
        self.rounds.len()
    }

    pub fn final_avg_silhouette(&self) -> f64 {
        self.rounds.last().map_or(self.initial_avg_silhouette, |r| r.avg_silhouette)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            config: self.config,
            converged: self.converged,
            rounds_used: self.rounds_used(),
            initial_avg_silhouette: self.initial_avg_silhouette,
            final_avg_silhouette: self.final_avg_silhouette(),
            rounds: self.rounds.clone(),
            assignments: self.final_partition.labels(),
        }
    }
}

/// Serializable view of a [`StabilizationReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config: StabilizeConfig,
    pub converged: bool,
    pub rounds_used: usize,
    pub initial_avg_silhouette: f64,
    pub final_avg_silhouette: f64,
    pub rounds: Vec<RoundRecord>,
    pub assignments: std::collections::BTreeMap<String, String>,
}

/// Rounds until `avg_silhouette > gamma` and `randomness < delta`, or until
/// `max_rounds`.
pub fn stabilize(initial: &Partition, cfg: &StabilizeConfig) -> Result<StabilizationReport> {
    cfg.validate()?;
    let snap = RoleSnapshot::of(initial)?;
    let mut state = init_state(initial, cfg.alpha)?;
    let initial_avg_silhouette =
        breakdown_with(initial, &snap.centroids.iter().cloned().map(Some).collect::<Vec<_>>())?.average;
    let mut partition = initial.clone();
    let mut centroids = snap.centroids;
    let mut rounds = Vec::new();
    let mut converged = false;
    while rounds.len() < cfg.max_rounds {
        let started = Instant::now();
        let out = run_round(&partition, &centroids, &mut state, cfg)?;
        let record = RoundRecord {
            round: rounds.len() + 1,
            avg_silhouette: out.avg_silhouette,
            randomness: out.randomness,
            moved: out.moved,
            duration: started.elapsed(),
        };
        log::debug!(
            "round {}: avg silhouette {:.4}, randomness {}",
            record.round,
            record.avg_silhouette,
            record.randomness
        );
        rounds.push(record);
        partition = out.partition;
        centroids = out.centroids;
        if out.avg_silhouette > cfg.gamma && (out.randomness as f64) < cfg.delta {
            converged = true;
            break;
        }
    }
    Ok(StabilizationReport { config: *cfg, initial_avg_silhouette, rounds, converged, final_partition: partition, final_state: state })
}

//! Synthetic data and brute-force oracles.
//!
//! The oracles here deliberately avoid the `quality` and `kmeans` modules:
//! they recompute centroids, role silhouettes and k-means objectives with
//! plain loops so tests can compare two independent routes.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::FeatureTable;
use crate::ingest::{CheckIn, RootCategoryMap, DEFAULT_ROOT_LABELS};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k_true: usize,
    pub users_per_cluster: usize,
    pub dims: usize,
    /// Distance between neighbouring centres in units of `noise`.
    pub separation: f64,
    /// RMS distance of a point from its centre.
    pub noise: f64,
    /// Clamp coordinates at zero, as count features would be.
    pub clip_nonnegative: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(k_true: usize, users_per_cluster: usize, dims: usize, separation: f64, seed: u64) -> Self {
        Self { k_true, users_per_cluster, dims, separation, noise: 1.0, clip_nonnegative: false, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.k_true == 0 || self.users_per_cluster == 0 || self.dims == 0 {
            return Err(Error::InvalidConfig("synthetic counts must be positive".into()));
        }
        if !(self.separation > 0.0 && self.noise > 0.0) {
            return Err(Error::InvalidConfig("separation and noise must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub table: FeatureTable,
    /// True cluster of every row.
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

/// Centres `separation * noise` apart: simplex vertices when there are at
/// least as many dimensions as clusters, otherwise a cubic lattice.
fn centers(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let spacing = spec.separation * spec.noise;
    if spec.k_true <= spec.dims {
        let edge = spacing / std::f64::consts::SQRT_2;
        (0..spec.k_true)
            .map(|i| (0..spec.dims).map(|d| if d == i { edge } else { 0.0 }).collect())
            .collect()
    } else {
        let side = (1..).find(|s: &usize| s.pow(spec.dims as u32) >= spec.k_true).unwrap();
        (0..spec.k_true)
            .map(|mut i| {
                (0..spec.dims)
                    .map(|_| {
                        let c = i % side;
                        i /= side;
                        c as f64 * spacing
                    })
                    .collect()
            })
            .collect()
    }
}

/// Isotropic Gaussian blobs. Rows are shuffled so user ids carry no label.
pub fn gen_clusters(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let centers = centers(spec);
    let sigma = spec.noise / (spec.dims as f64).sqrt();
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(spec.k_true * spec.users_per_cluster);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..spec.users_per_cluster {
            let v = c
                .iter()
                .map(|&x| {
                    let y = x + normal.sample(&mut rng);
                    if spec.clip_nonnegative { y.max(0.0) } else { y }
                })
                .collect();
            rows.push((label, v));
        }
    }
    rows.shuffle(&mut rng);
    let width = rows.len().to_string().len().max(4);
    let (labels, rows): (Vec<usize>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    Ok(SyntheticData {
        table: FeatureTable {
            user_ids: (0..rows.len()).map(|i| format!("s{i:0width$}")).collect(),
            columns: (0..spec.dims).map(|d| format!("f{d}")).collect(),
            rows,
        },
        labels,
        centers,
    })
}

/// Check-ins of `users` synthetic users drawn from `archetypes` behaviour
/// profiles, each preferring a few hours and root categories, together with a
/// root map covering every category name used.
pub fn gen_checkins(users: usize, rows: usize, archetypes: usize, seed: u64) -> (Vec<CheckIn>, RootCategoryMap) {
    let mut rng = seed::rng(seed);
    let venues: Vec<(String, &str)> = DEFAULT_ROOT_LABELS
        .iter()
        .flat_map(|root| (0..3).map(move |i| (format!("{root} venue {i}"), *root)))
        .collect();
    let map = RootCategoryMap::new(&DEFAULT_ROOT_LABELS, venues.iter().map(|(n, r)| (n.clone(), *r))).unwrap();
    let profiles: Vec<(Vec<u32>, Vec<usize>)> = (0..archetypes.max(1))
        .map(|_| {
            let hours = (0..3).map(|_| rng.random_range(0..24)).collect();
            let cats = (0..3).map(|_| rng.random_range(0..venues.len())).collect();
            (hours, cats)
        })
        .collect();
    let homes: Vec<(usize, f64, f64)> = (0..users)
        .map(|_| (rng.random_range(0..profiles.len()), rng.random_range(40.55..40.90), rng.random_range(-74.05..-73.75)))
        .collect();
    let epoch = DateTime::<Utc>::from_timestamp(1_333_238_400, 0).unwrap(); // 2012-04-01
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let u = if i < users { i } else { rng.random_range(0..users) };
        let (profile, hlat, hlon) = homes[u];
        let (hours, cats) = &profiles[profile];
        let hour = if rng.random_bool(0.8) { hours[rng.random_range(0..hours.len())] } else { rng.random_range(0..24) };
        let cat = if rng.random_bool(0.8) { cats[rng.random_range(0..cats.len())] } else { rng.random_range(0..venues.len()) };
        let spread = [0.002, 0.05, 0.2, 0.5][rng.random_range(0..4)];
        let t = epoch + Duration::days(rng.random_range(0..300)) + Duration::hours(i64::from(hour)) + Duration::seconds(rng.random_range(0..3600));
        out.push(CheckIn {
            user_id: format!("{}", u + 1),
            poi_id: format!("v{:04}", rng.random_range(0..5000)),
            category_id: format!("cat{cat:02}"),
            category_name: venues[cat].0.clone(),
            latitude: (hlat + rng.random_range(-spread..spread)).clamp(-90.0, 90.0),
            longitude: (hlon + rng.random_range(-spread..spread)).clamp(-180.0, 180.0),
            tz_offset_minutes: Some(0),
            utc_time: t,
        });
    }
    (out, map)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).powi(2);
    }
    s.sqrt()
}

/// Role silhouette of every user, recomputed from scratch. Empty roles have
/// no centroid and are not foreign roles.
pub fn oracle_silhouettes(vectors: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut means: Vec<Option<Vec<f64>>> = Vec::new();
    for r in 0..k {
        let mut acc = vec![0.0; dim];
        let mut n = 0.0;
        for (v, &a) in vectors.iter().zip(assignment) {
            if a == r {
                for d in 0..dim {
                    acc[d] += v[d];
                }
                n += 1.0;
            }
        }
        means.push(if n > 0.0 { Some(acc.iter().map(|x| x / n).collect()) } else { None });
    }
    let mut out = Vec::with_capacity(vectors.len());
    for i in 0..vectors.len() {
        let mut farthest: Option<f64> = None;
        for j in 0..vectors.len() {
            if j != i && assignment[j] == assignment[i] {
                let d = euclid(&vectors[i], &vectors[j]);
                farthest = Some(farthest.map_or(d, |f| if d > f { d } else { f }));
            }
        }
        let mut closest = f64::INFINITY;
        for (r, m) in means.iter().enumerate() {
            if let (true, Some(m)) = (r != assignment[i], m) {
                closest = closest.min(euclid(&vectors[i], m));
            }
        }
        let se = match farthest {
            None => 0.0,
            Some(t) if t == 0.0 && closest == 0.0 => 0.0,
            Some(t) => (closest - t) / if closest > t { closest } else { t },
        };
        out.push(se);
    }
    out
}

pub fn oracle_avg_silhouette(vectors: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let s = oracle_silhouettes(vectors, assignment, k);
    s.iter().sum::<f64>() / s.len() as f64
}

/// Every assignment of `n` items to `k` labels with no label unused, in
/// lexicographic order.
fn surjections(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = k.checked_pow(n as u32).unwrap_or(0);
    (0..total).filter_map(move |mut code| {
        let mut a = vec![0; n];
        for slot in a.iter_mut().rev() {
            *slot = code % k;
            code /= k;
        }
        let mut used = vec![false; k];
        a.iter().for_each(|&r| used[r] = true);
        used.iter().all(|&u| u).then_some(a)
    })
}

/// The assignment with the highest average role silhouette over all
/// assignments leaving no role empty; ties go to the lexicographically
/// smallest assignment.
pub fn oracle_best_partition(vectors: &[Vec<f64>], k: usize) -> Result<(Vec<usize>, f64)> {
    if vectors.len() > 10 || k > 3 || k < 2 || k > vectors.len() {
        return Err(Error::InstanceTooLarge(format!("{} vectors, k = {k}", vectors.len())));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for a in surjections(vectors.len(), k) {
        let s = oracle_avg_silhouette(vectors, &a, k);
        if best.as_ref().is_none_or(|b| s > b.1) {
            best = Some((a, s));
        }
    }
    Ok(best.expect("k <= n leaves at least one surjection"))
}

/// Optimal k-means objective by enumeration.
pub fn oracle_kmeans_optimum(points: &[Vec<f64>], k: usize) -> Result<(Vec<usize>, f64)> {
    if points.len() > 8 || k == 0 || k > points.len() {
        return Err(Error::InstanceTooLarge(format!("{} points, k = {k}", points.len())));
    }
    let dim = points[0].len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for a in surjections(points.len(), k) {
        let mut sse = 0.0;
        for r in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&a).filter(|(_, &x)| x == r).map(|(p, _)| p).collect();
            let n = members.len() as f64;
            for d in 0..dim {
                let mean = members.iter().map(|p| p[d]).sum::<f64>() / n;
                sse += members.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>();
            }
        }
        if best.as_ref().is_none_or(|b| sse < b.1) {
            best = Some((a, sse));
        }
    }
    Ok(best.unwrap())
}

/// Share of points whose nearest true centre is their own.
pub fn nearest_center_accuracy(data: &SyntheticData) -> f64 {
    let hits = data
        .table
        .rows
        .iter()
        .zip(&data.labels)
        .filter(|(v, &l)| {
            let d: Vec<f64> = data.centers.iter().map(|c| euclid(v, c)).collect();
            (0..d.len()).all(|j| j == l || d[j] > d[l])
        })
        .count();
    hits as f64 / data.labels.len() as f64
}

/// Fraction of points whose cluster, under the best one-to-one label
/// matching, agrees with the truth. Brute force over label permutations.
pub fn matched_accuracy(truth: &[usize], found: &[usize], k: usize) -> f64 {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&t, &f) in truth.iter().zip(found) {
        *counts.entry((f, t)).or_default() += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let s: usize = (0..k).map(|f| counts.get(&(f, p[f])).copied().unwrap_or(0)).sum();
        best = best.max(s);
    });
    best as f64 / truth.len() as f64
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

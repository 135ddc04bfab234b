//! k-means++ seeding, Lloyd iteration, within-cluster RMSE and the RMSE
//! elbow used to choose k.

use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{seed, sq_dist, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub rmse: f64,
    pub iterations: usize,
    /// Seed of the k-means++ draw, when the model came from one.
    pub seed: Option<u64>,
    /// Within-cluster sum of squares after every assignment step.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    /// Stop once no centroid moves by this much or more.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 300 }
    }
}

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let nearest: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, centroids)).collect();
    let sse = nearest.iter().map(|&(_, d)| d).sum();
    (nearest.into_iter().map(|(j, _)| j).collect(), sse)
}

/// Within-cluster sum of squared distances.
pub fn sse(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

/// `sqrt(sse / N)`; zero for an empty point set.
pub fn rmse(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    (sse(points, centroids, assignments) / points.len() as f64).sqrt()
}

pub fn distinct_count(points: &[Vec<f64>]) -> usize {
    // +0.0 and -0.0 are the same point
    let mut keys: Vec<Vec<u64>> =
        points.iter().map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: the first centre uniformly, each further centre with
/// probability proportional to its squared distance from the nearest centre
/// chosen so far.
pub fn seed_pp<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let distinct = distinct_count(points);
    if k == 0 || k > distinct {
        return Err(Error::TooFewPoints { k, distinct });
    }
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let next = points[pick.expect("distinct points remain")].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &next));
        }
        centroids.push(next);
    }
    Ok(centroids)
}

fn update_centroids(points: &[Vec<f64>], assignments: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = old[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }

    // An empty cluster takes the point of the largest cluster that lies
    // farthest from that cluster's mean.
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if !empty.is_empty() {
        let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        let mut candidates: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .filter(|&(i, _)| assignments[i] == largest)
            .map(|(i, p)| (i, sq_dist(p, &sums[largest])))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (j, &(i, _)) in empty.iter().zip(candidates.iter().cycle()) {
            log::debug!("cluster {j} empty; reseeding at point {i}");
            sums[*j] = points[i].clone();
        }
    }
    sums
}

/// Lloyd iteration from `init` until no centroid shifts by `tol` or more.
/// The returned assignment is always the nearest-centroid assignment of the
/// returned centroids.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, cfg: LloydConfig) -> ClusterModel {
    assert!(!init.is_empty(), "lloyd needs at least one centroid");
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    if !points.is_empty() {
        while iterations < cfg.max_iter.max(1) {
            iterations += 1;
            let (assignments, sse) = assign(points, &centroids);
            trace.push(sse);
            let next = update_centroids(points, &assignments, &centroids);
            let shift = next.iter().zip(&centroids).map(|(a, b)| sq_dist(a, b)).fold(0.0, f64::max).sqrt();
            centroids = next;
            if shift < cfg.tol {
                break;
            }
        }
    }
    let (assignments, _) = assign(points, &centroids);
    let rmse = rmse(points, &centroids, &assignments);
    ClusterModel { k: centroids.len(), centroids, assignments, rmse, iterations, seed: None, objective_trace: trace }
}

/// One k-means++ run: seeding from `seed`, then Lloyd.
pub fn kmeans_pp(points: &[Vec<f64>], k: usize, seed: u64, cfg: LloydConfig) -> Result<ClusterModel> {
    let mut rng = seed::rng(seed);
    let init = seed_pp(points, k, &mut rng)?;
    let mut model = lloyd(points, init, cfg);
    model.seed = Some(seed);
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    /// Lowest RMSE over the repeats.
    pub rmse: f64,
    /// Seed of the run that reached it.
    pub best_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub points: Vec<ElbowPoint>,
    pub repeats: usize,
    pub base_seed: u64,
}

impl ElbowCurve {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "rmse"])?;
        for p in &self.points {
            out.write_record([p.k.to_string(), p.rmse.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn repeat_seed(base_seed: u64, k: usize, repeat: usize) -> u64 {
    seed::derive(seed::derive(base_seed, "elbow", k as u64), "repeat", repeat as u64)
}

/// RMSE against k: for every k the best of `repeats` seeded k-means++ runs.
pub fn elbow_curve(
    points: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    repeats: usize,
    base_seed: u64,
    cfg: LloydConfig,
) -> Result<ElbowCurve> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("elbow needs at least one repeat".into()));
    }
    let mut out = Vec::new();
    for k in k_range {
        let mut best: Option<ElbowPoint> = None;
        for r in 0..repeats {
            let seed = repeat_seed(base_seed, k, r);
            let m = kmeans_pp(points, k, seed, cfg)?;
            if best.is_none_or(|b| m.rmse < b.rmse) {
                best = Some(ElbowPoint { k, rmse: m.rmse, best_seed: seed });
            }
        }
        out.extend(best);
    }
    Ok(ElbowCurve { points: out, repeats, base_seed })
}

/// The interior k with the largest discrete second difference
/// `rmse(k-1) - 2 rmse(k) + rmse(k+1)`; ties go to the smallest k.
pub fn pick_elbow(curve: &ElbowCurve) -> Result<usize> {
    let p = &curve.points;
    if p.len() < 3 || p.windows(2).any(|w| w[1].k != w[0].k + 1) {
        return Err(Error::ElbowTooShort);
    }
    let mut best = (p[1].k, f64::NEG_INFINITY);
    for w in p.windows(3) {
        let second = w[0].rmse - 2.0 * w[1].rmse + w[2].rmse;
        if second > best.1 {
            best = (w[1].k, second);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn curve(values: &[(usize, f64)]) -> ElbowCurve {
        ElbowCurve {
            points: values.iter().map(|&(k, rmse)| ElbowPoint { k, rmse, best_seed: 0 }).collect(),
            repeats: 1,
            base_seed: 0,
        }
    }

    #[test]
    fn seed_single_centroid_is_an_input_point() {
        let p = pts(&[1.0, 2.0, 3.0]);
        let c = seed_pp(&p, 1, &mut seed::rng(3)).unwrap();
        assert_eq!(c.len(), 1);
        assert!(p.contains(&c[0]));
    }

    #[test]
    fn seed_second_centroid_forced_by_weights() {
        let p = pts(&[0.0, 0.0, 10.0]);
        for s in 0..50 {
            let c = seed_pp(&p, 2, &mut seed::rng(s)).unwrap();
            let mut xs: Vec<f64> = c.iter().map(|v| v[0]).collect();
            xs.sort_by(f64::total_cmp);
            assert_eq!(xs, [0.0, 10.0]);
        }
    }

    #[test]
    fn seed_is_deterministic() {
        let p: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        assert_eq!(seed_pp(&p, 4, &mut seed::rng(9)).unwrap(), seed_pp(&p, 4, &mut seed::rng(9)).unwrap());
    }

    #[test]
    fn seed_rejects_too_many_clusters() {
        let p = pts(&[1.0, 1.0, 2.0]);
        assert!(matches!(seed_pp(&p, 3, &mut seed::rng(0)), Err(Error::TooFewPoints { k: 3, distinct: 2 })));
        assert!(seed_pp(&p, 0, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn lloyd_reaches_forced_fixed_point() {
        let p = pts(&[0.0, 1.0, 10.0, 11.0]);
        let m = lloyd(&p, pts(&[0.0, 10.0]), LloydConfig::default());
        assert_eq!(m.centroids, pts(&[0.5, 10.5]));
        assert_eq!(m.assignments, [0, 0, 1, 1]);
        assert_abs_diff_eq!(m.rmse, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lloyd_identical_points_leave_one_cluster_empty() {
        let p = pts(&[3.0; 5]);
        let m = lloyd(&p, pts(&[3.0, 4.0]), LloydConfig::default());
        assert_eq!(m.assignments, [0; 5]);
        assert_eq!(m.cluster_sizes(), [5, 0]);
        assert_eq!(m.rmse, 0.0);
    }

    #[test]
    fn empty_cluster_takes_farthest_point_of_largest() {
        // second centroid starts out of reach of every point
        let p = pts(&[0.0, 1.0, 2.0, 9.0]);
        let m = lloyd(&p, pts(&[1.0, 100.0]), LloydConfig::default());
        assert_eq!(m.cluster_sizes(), [3, 1]);
        assert_eq!(m.assignments[3], 1);
    }

    #[test]
    fn rmse_by_substitution() {
        let p = pts(&[1.0, 3.0]);
        assert_abs_diff_eq!(rmse(&p, &pts(&[0.0]), &[0, 0]), 5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(rmse(&p, &p, &[0, 1]), 0.0);
    }

    #[test]
    fn elbow_at_n_is_zero_and_deterministic() {
        let p = pts(&[0.0, 1.5, 4.0, 9.0]);
        let c = elbow_curve(&p, 4..=4, 3, 11, LloydConfig::default()).unwrap();
        assert_eq!(c.points[0].rmse, 0.0);
        let a = elbow_curve(&p, 1..=4, 3, 11, LloydConfig::default()).unwrap();
        assert_eq!(a, elbow_curve(&p, 1..=4, 3, 11, LloydConfig::default()).unwrap());
    }

    #[test]
    fn elbow_of_sharp_knee_at_nine() {
        let mut v: Vec<(usize, f64)> = (2..=8).map(|k| (k, 10.0 - 0.5 * (k - 2) as f64)).collect();
        v.extend((9..=15).map(|k| (k, 2.0 - 0.05 * (k - 9) as f64)));
        assert_eq!(pick_elbow(&curve(&v)).unwrap(), 9);
    }

    #[test]
    fn elbow_of_line_is_smallest_interior_k() {
        let v: Vec<(usize, f64)> = (1..=8).map(|k| (k, 20.0 - 2.0 * k as f64)).collect();
        assert_eq!(pick_elbow(&curve(&v)).unwrap(), 2);
    }

    #[test]
    fn elbow_knee_at_four_matches_exhaustive_scan() {
        let v = [(1, 12.0), (2, 9.0), (3, 6.5), (4, 3.0), (5, 2.6), (6, 2.3), (7, 2.1)];
        // exhaustive: second difference of every interior point, taken by hand
        let seconds: Vec<(usize, f64)> =
            (1..v.len() - 1).map(|i| (v[i].0, v[i - 1].1 - 2.0 * v[i].1 + v[i + 1].1)).collect();
        let best = seconds.iter().fold(seconds[0], |b, &s| if s.1 > b.1 { s } else { b });
        assert_eq!(best.0, 4);
        assert_eq!(pick_elbow(&curve(&v)).unwrap(), 4);
    }

    #[test]
    fn elbow_needs_three_consecutive_points() {
        assert!(matches!(pick_elbow(&curve(&[(2, 1.0), (3, 0.5)])), Err(Error::ElbowTooShort)));
        assert!(pick_elbow(&curve(&[(2, 1.0), (3, 0.5), (5, 0.1)])).is_err());
    }

    proptest! {
        #[test]
        fn lloyd_is_monotone_and_nearest_consistent(seed in any::<u64>(), k in 1usize..5) {
            let mut rng = seed::rng(seed);
            let p: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
            let m = kmeans_pp(&p, k, seed, LloydConfig::default()).unwrap();
            for w in m.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            for (pt, &a) in p.iter().zip(&m.assignments) {
                prop_assert_eq!(nearest(pt, &m.centroids).0, a);
            }
            let again = kmeans_pp(&p, k, seed, LloydConfig::default()).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}

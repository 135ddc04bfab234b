//! Role-level clustering quality.
//!
//! The silhouette used here is the role variant: for user `u` in role `R`,
//! `TRMax(u)` is the largest distance from `u` to another member of `R`,
//! `ORMin(u)` the smallest distance from `u` to the centroid of any other
//! role, and `Se(u) = (ORMin - TRMax) / max(ORMin, TRMax)`. A user alone in
//! its role scores 0, as does a user with `TRMax = ORMin = 0`.
//!
//! Randomness counts membership churn between two partitions over the same
//! roles: `sum_i (|R_i| - In_i) + (|R'_i| - In_i)` with `In_i = |R_i ∩ R'_i|`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use pathfinding::prelude::{kuhn_munkres, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{dist, Error, Result};

/// Users, their feature vectors and a role for every user.
///
/// Roles may be empty. Storing one role index per user keeps member lists
/// disjoint and covering by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    user_ids: Arc<[String]>,
    vectors: Arc<[Vec<f64>]>,
    roles: Vec<String>,
    assignment: Vec<usize>,
}

impl Partition {
    pub fn new(
        user_ids: impl Into<Arc<[String]>>,
        vectors: impl Into<Arc<[Vec<f64>]>>,
        roles: Vec<String>,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        let (user_ids, vectors) = (user_ids.into(), vectors.into());
        if user_ids.len() != vectors.len() || user_ids.len() != assignment.len() {
            return Err(Error::InvalidPartition(format!(
                "{} users, {} vectors, {} assignments",
                user_ids.len(),
                vectors.len(),
                assignment.len()
            )));
        }
        if let Some((i, &r)) = assignment.iter().enumerate().find(|&(_, &r)| r >= roles.len()) {
            return Err(Error::InvalidPartition(format!("user {:?} has role {r} of {}", user_ids[i], roles.len())));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != vectors[0].len()) {
            return Err(Error::InvalidPartition(format!(
                "vector of length {} among length {}",
                v.len(),
                vectors[0].len()
            )));
        }
        Ok(Self { user_ids, vectors, roles, assignment })
    }

    /// Builds a partition from per-role lists of user ids. Lists must be
    /// disjoint and together contain every user.
    pub fn from_member_lists(
        user_ids: impl Into<Arc<[String]>>,
        vectors: impl Into<Arc<[Vec<f64>]>>,
        roles: Vec<String>,
        lists: &[Vec<String>],
    ) -> Result<Self> {
        let user_ids = user_ids.into();
        if lists.len() != roles.len() {
            return Err(Error::InvalidPartition(format!("{} member lists for {} roles", lists.len(), roles.len())));
        }
        let index: BTreeMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut assignment = vec![usize::MAX; user_ids.len()];
        for (r, list) in lists.iter().enumerate() {
            for u in list {
                let &i = index.get(u.as_str()).ok_or_else(|| Error::InvalidPartition(format!("unknown user {u:?}")))?;
                if assignment[i] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("user {u:?} is in two roles")));
                }
                assignment[i] = r;
            }
        }
        if let Some(i) = assignment.iter().position(|&r| r == usize::MAX) {
            return Err(Error::InvalidPartition(format!("user {:?} has no role", user_ids[i])));
        }
        Self::new(user_ids, vectors, roles, assignment)
    }

    /// Same users and vectors under a different assignment.
    pub fn with_assignment(&self, assignment: Vec<usize>) -> Result<Self> {
        Self::new(self.user_ids.clone(), self.vectors.clone(), self.roles.clone(), assignment)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn role_of(&self, user: usize) -> usize {
        self.assignment[user]
    }

    /// User indices of every role, ascending.
    pub fn member_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.roles.len()];
        for (u, &r) in self.assignment.iter().enumerate() {
            lists[r].push(u);
        }
        lists
    }

    pub fn member_sets(&self) -> Vec<BTreeSet<usize>> {
        self.member_lists().into_iter().map(BTreeSet::from_iter).collect()
    }

    pub fn role_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.roles.len()];
        for &r in &self.assignment {
            sizes[r] += 1;
        }
        sizes
    }

    /// Centroid of every non-empty role.
    pub fn centroids(&self) -> Vec<Option<Vec<f64>>> {
        self.member_lists()
            .iter()
            .map(|m| centroid(m.iter().map(|&u| self.vectors[u].as_slice())).ok())
            .collect()
    }

    /// Assignment keyed by user id.
    pub fn labels(&self) -> BTreeMap<String, String> {
        self.user_ids
            .iter()
            .zip(&self.assignment)
            .map(|(u, &r)| (u.clone(), self.roles[r].clone()))
            .collect()
    }
}

/// Component-wise mean.
pub fn centroid<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut it = vectors.into_iter();
    let first = it.next().ok_or(Error::EmptySet)?;
    let mut sum = first.to_vec();
    let mut n = 1usize;
    for v in it {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Ok(sum)
}

/// Largest distance from `u` to the other members; `None` when there are none.
pub fn tr_max<'a>(u: &[f64], others: impl IntoIterator<Item = &'a [f64]>) -> Option<f64> {
    others.into_iter().map(|v| dist(u, v)).fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
}

/// Smallest distance from `u` to a foreign role centroid.
pub fn or_min<'a>(u: &[f64], other_centroids: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    other_centroids
        .into_iter()
        .map(|c| dist(u, c))
        .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.min(d))))
        .ok_or(Error::SingleRole)
}

/// Silhouette from its two distances, with the singleton and 0/0 rules.
pub fn silhouette_value(tr_max: Option<f64>, or_min: f64) -> f64 {
    match tr_max {
        None => 0.0,
        Some(tr) => {
            let denom = tr.max(or_min);
            if denom == 0.0 {
                0.0
            } else {
                (or_min - tr) / denom
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSilhouette {
    pub user_id: String,
    /// `None` when the user is alone in its role.
    pub tr_max: Option<f64>,
    pub or_min: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteBreakdown {
    pub per_user: Vec<UserSilhouette>,
    pub average: f64,
}

impl SilhouetteBreakdown {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user_id", "tr_max", "or_min", "se"])?;
        for u in &self.per_user {
            let tr = u.tr_max.map(|t| t.to_string()).unwrap_or_default();
            out.write_record([u.user_id.clone(), tr, u.or_min.to_string(), u.se.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn user_silhouette(p: &Partition, u: usize, lists: &[Vec<usize>], centroids: &[Option<Vec<f64>>]) -> Result<(Option<f64>, f64)> {
    let role = p.assignment[u];
    let x = &p.vectors[u];
    let tr = tr_max(x, lists[role].iter().filter(|&&v| v != u).map(|&v| p.vectors[v].as_slice()));
    let or = or_min(
        x,
        centroids.iter().enumerate().filter(|&(j, _)| j != role).filter_map(|(_, c)| c.as_deref()),
    )?;
    Ok((tr, or))
}

/// Per-user silhouette against explicit role centroids. Roles whose centroid
/// is `None` do not count as foreign roles.
pub fn breakdown_with(p: &Partition, centroids: &[Option<Vec<f64>>]) -> Result<SilhouetteBreakdown> {
    if centroids.len() != p.role_count() {
        return Err(Error::RoleMismatch);
    }
    let lists = p.member_lists();
    let per_user = (0..p.len())
        .into_par_iter()
        .map(|u| {
            let (tr_max, or_min) = user_silhouette(p, u, &lists, centroids)?;
            Ok(UserSilhouette { user_id: p.user_ids[u].clone(), tr_max, or_min, se: silhouette_value(tr_max, or_min) })
        })
        .collect::<Result<Vec<_>>>()?;
    let average = if per_user.is_empty() {
        0.0
    } else {
        per_user.iter().map(|s| s.se).sum::<f64>() / per_user.len() as f64
    };
    Ok(SilhouetteBreakdown { per_user, average })
}

pub fn breakdown(p: &Partition) -> Result<SilhouetteBreakdown> {
    breakdown_with(p, &p.centroids())
}

/// Silhouette of one user.
pub fn silhouette(p: &Partition, user: usize) -> Result<f64> {
    let (tr, or) = user_silhouette(p, user, &p.member_lists(), &p.centroids())?;
    Ok(silhouette_value(tr, or))
}

/// Mean silhouette over all users.
pub fn avg_silhouette(p: &Partition) -> Result<f64> {
    Ok(breakdown(p)?.average)
}

pub fn in_count<T: Ord>(before: &BTreeSet<T>, after: &BTreeSet<T>) -> usize {
    before.intersection(after).count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub per_role_in: Vec<usize>,
    pub total: usize,
}

fn check_comparable(before: &Partition, after: &Partition) -> Result<()> {
    if before.roles != after.roles || before.user_ids != after.user_ids {
        return Err(Error::RoleMismatch);
    }
    Ok(())
}

/// Membership churn between two partitions that share roles and users.
pub fn randomness_report(before: &Partition, after: &Partition) -> Result<RandomnessReport> {
    check_comparable(before, after)?;
    let (b, a) = (before.member_sets(), after.member_sets());
    let per_role_in: Vec<usize> = b.iter().zip(&a).map(|(x, y)| in_count(x, y)).collect();
    let total = b.iter().zip(&a).zip(&per_role_in).map(|((x, y), &i)| (x.len() - i) + (y.len() - i)).sum();
    Ok(RandomnessReport { per_role_in, total })
}

pub fn randomness(before: &Partition, after: &Partition) -> Result<usize> {
    Ok(randomness_report(before, after)?.total)
}

/// Maps each role of `other` onto a role of `reference` so that the summed
/// member overlap is maximal (Hungarian method). `result[j]` is the reference
/// role matched to `other`'s role `j`.
pub fn match_roles(reference: &Partition, other: &Partition) -> Result<Vec<usize>> {
    if reference.user_ids != other.user_ids || reference.role_count() != other.role_count() {
        return Err(Error::RoleMismatch);
    }
    let k = other.role_count();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut overlap = vec![vec![0i64; k]; k];
    for (&o, &r) in other.assignment.iter().zip(&reference.assignment) {
        overlap[o][r] += 1;
    }
    let weights = Matrix::from_rows(overlap).expect("square overlap matrix");
    Ok(kuhn_munkres(&weights).1)
}

/// `other` relabeled onto `reference`'s roles.
pub fn align(reference: &Partition, other: &Partition) -> Result<Partition> {
    let map = match_roles(reference, other)?;
    let assignment = other.assignment.iter().map(|&r| map[r]).collect();
    Partition::new(other.user_ids.clone(), other.vectors.clone(), reference.roles.clone(), assignment)
}

/// Randomness between two independent clusterings after role alignment.
pub fn aligned_randomness(a: &Partition, b: &Partition) -> Result<usize> {
    randomness(a, &align(a, b)?)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::seed;

    fn roles(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("R{i}")).collect()
    }

    fn part(xs: &[f64], assignment: &[usize], k: usize) -> Partition {
        let ids: Vec<String> = (1..=xs.len()).map(|i| i.to_string()).collect();
        let vecs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Partition::new(ids, vecs, roles(k), assignment.to_vec()).unwrap()
    }

    fn lists(p: &[&[&str]]) -> Vec<Vec<String>> {
        p.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect()
    }

    fn users(n: usize) -> (Vec<String>, Vec<Vec<f64>>) {
        ((1..=n).map(|i| i.to_string()).collect(), vec![vec![0.0]; n])
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid([[1.0, 2.0].as_slice()]).unwrap(), [1.0, 2.0]);
        assert_eq!(centroid([[0.0, 0.0].as_slice(), [2.0, 2.0].as_slice()]).unwrap(), [1.0, 1.0]);
        assert!(matches!(centroid(std::iter::empty::<&[f64]>()), Err(Error::EmptySet)));
    }

    #[test]
    fn tr_max_examples() {
        assert_eq!(tr_max(&[0.0], std::iter::empty()), None);
        let m = [[1.0], [3.0]];
        assert_eq!(tr_max(&[0.0], m.iter().map(|v| v.as_slice())), Some(3.0));
        let m = [[1.0], [3.0], [0.0]];
        assert_eq!(tr_max(&[0.0], m.iter().map(|v| v.as_slice())), Some(3.0));
    }

    #[test]
    fn or_min_examples() {
        assert_eq!(or_min(&[0.0], [[5.0].as_slice()]).unwrap(), 5.0);
        let c = [[5.0], [-2.0], [9.0]];
        assert_eq!(or_min(&[0.0], c.iter().map(|v| v.as_slice())).unwrap(), 2.0);
        assert_eq!(or_min(&[4.0], [[4.0].as_slice()]).unwrap(), 0.0);
        assert!(matches!(or_min(&[0.0], std::iter::empty()), Err(Error::SingleRole)));
    }

    #[test]
    fn silhouette_examples() {
        // u at 0, co-member at 1, foreign role centred at 10
        let p = part(&[0.0, 1.0, 10.0], &[0, 0, 1], 2);
        assert_abs_diff_eq!(silhouette(&p, 0).unwrap(), 0.9, epsilon = 1e-15);
        assert_eq!(silhouette(&p, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(silhouette_value(Some(4.0), 2.0), -0.5);
        assert_eq!(silhouette_value(Some(0.0), 0.0), 0.0);
        let one = part(&[0.0, 1.0], &[0, 0], 1);
        assert!(matches!(silhouette(&one, 0), Err(Error::SingleRole)));
    }

    #[test]
    fn average_examples() {
        // both users score 0.9: co-member at distance 1, foreign centroid at 10
        let p = part(&[0.0, 1.0, 10.0, 11.0, 11.0, 10.0], &[0, 0, 1, 1, 2, 2], 3);
        let b = breakdown(&p).unwrap();
        assert_eq!(b.per_user.len(), 6);
        let mean = b.per_user.iter().map(|s| s.se).sum::<f64>() / 6.0;
        assert_eq!(b.average, mean);

        // explicit centroids: se 0.5 for the user at 0, 0 for the one at 1
        let p = part(&[0.0, 1.0], &[0, 0], 2);
        let c = vec![Some(vec![0.5]), Some(vec![2.0])];
        let b = breakdown_with(&p, &c).unwrap();
        assert_abs_diff_eq!(b.per_user[0].se, 0.5);
        assert_abs_diff_eq!(b.per_user[1].se, 0.0);
        assert_abs_diff_eq!(b.average, 0.25);
    }

    #[test]
    fn empty_roles_are_not_foreign() {
        let p = part(&[0.0, 1.0, 10.0], &[0, 0, 1], 3);
        assert_eq!(p.centroids()[2], None);
        assert_abs_diff_eq!(silhouette(&p, 0).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn member_lists_are_validated() {
        let (ids, v) = users(3);
        assert!(Partition::from_member_lists(ids.clone(), v.clone(), roles(2), &lists(&[&["1", "2"], &["3"]])).is_ok());
        assert!(Partition::from_member_lists(ids.clone(), v.clone(), roles(2), &lists(&[&["1", "2"], &["2", "3"]])).is_err());
        assert!(Partition::from_member_lists(ids.clone(), v.clone(), roles(2), &lists(&[&["1"], &["3"]])).is_err());
        assert!(Partition::from_member_lists(ids, v, roles(2), &lists(&[&["1", "9"], &["2", "3"]])).is_err());
    }

    #[test]
    fn in_count_examples() {
        let s: BTreeSet<u32> = (0..7).collect();
        assert_eq!(in_count(&s, &s), 7);
        assert_eq!(in_count(&BTreeSet::from([1, 2]), &BTreeSet::from([3, 4])), 0);
        assert_eq!(in_count(&BTreeSet::from([1, 2, 3]), &BTreeSet::from([2, 3, 4])), 2);
    }

    #[test]
    fn randomness_worked_example() {
        let (ids, v) = users(5);
        let before = Partition::from_member_lists(ids.clone(), v.clone(), roles(2), &lists(&[&["1", "2", "3"], &["4", "5"]])).unwrap();
        let after = Partition::from_member_lists(ids, v, roles(2), &lists(&[&["1", "2"], &["3", "4", "5"]])).unwrap();
        let r = randomness_report(&before, &after).unwrap();
        assert_eq!(r.per_role_in, [2, 2]);
        assert_eq!(r.total, 2);
        assert_eq!(randomness(&before, &before).unwrap(), 0);
    }

    #[test]
    fn randomness_needs_matching_roles() {
        let a = part(&[0.0, 1.0], &[0, 1], 2);
        let b = part(&[0.0, 1.0], &[0, 1], 3);
        assert!(matches!(randomness(&a, &b), Err(Error::RoleMismatch)));
    }

    #[test]
    fn alignment_undoes_relabeling() {
        let a = part(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[0, 0, 1, 1, 2, 2], 3);
        let b = part(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[2, 2, 0, 0, 1, 0], 3);
        assert_eq!(randomness(&a, &b).unwrap(), 12);
        assert_eq!(match_roles(&a, &b).unwrap(), [1, 2, 0]);
        assert_eq!(aligned_randomness(&a, &b).unwrap(), 2);
    }

    fn random_partition(seed: u64) -> Partition {
        let mut rng = seed::rng(seed);
        let n = rng.random_range(3..12);
        let k = rng.random_range(2..4);
        let dims = rng.random_range(1..4);
        let ids: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..dims).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        a[0] = 0;
        a[1] = 1;
        Partition::new(ids, v, roles(k), a).unwrap()
    }

    proptest! {
        #[test]
        fn silhouette_is_bounded(seed in any::<u64>()) {
            let b = breakdown(&random_partition(seed)).unwrap();
            for s in &b.per_user {
                prop_assert!((-1.0..=1.0).contains(&s.se));
            }
        }

        #[test]
        fn silhouette_translation_and_scale_invariant(seed in any::<u64>(), shift in -10.0f64..10.0, scale in 0.1f64..10.0) {
            let p = random_partition(seed);
            let moved: Vec<Vec<f64>> = p.vectors().iter().map(|v| v.iter().map(|x| (x + shift) * scale).collect()).collect();
            let q = Partition::new(p.user_ids().to_vec(), moved, p.roles().to_vec(), p.assignment().to_vec()).unwrap();
            let (a, b) = (breakdown(&p).unwrap(), breakdown(&q).unwrap());
            for (x, y) in a.per_user.iter().zip(&b.per_user) {
                prop_assert!((x.se - y.se).abs() < 1e-9);
            }
        }

        #[test]
        fn randomness_identity_and_symmetry(s1 in any::<u64>(), s2 in any::<u64>()) {
            let p = random_partition(s1);
            let mut rng = seed::rng(s2);
            let a: Vec<usize> = (0..p.len()).map(|_| rng.random_range(0..p.role_count())).collect();
            let q = p.with_assignment(a).unwrap();
            prop_assert_eq!(randomness(&p, &p).unwrap(), 0);
            prop_assert_eq!(randomness(&p, &q).unwrap(), randomness(&q, &p).unwrap());
            prop_assert!(aligned_randomness(&p, &q).unwrap() <= randomness(&p, &q).unwrap());
        }

        #[test]
        fn centroid_permutation_invariant(seed in any::<u64>()) {
            let p = random_partition(seed);
            let mut vs: Vec<&[f64]> = p.vectors().iter().map(Vec::as_slice).collect();
            let a = centroid(vs.iter().copied()).unwrap();
            vs.reverse();
            let b = centroid(vs.iter().copied()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

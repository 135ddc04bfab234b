//! Per-user context × view count matrices.
//!
//! For every configured (context axis, view axis) pair each user gets a
//! `|context| × |view|` matrix whose cell `(r, c)` counts the user's
//! check-ins with context bucket `r` and view label `c`. Matrices are
//! flattened row-major before clustering.

mod table;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{distance_bucket, haversine_km, CheckIn, GeoPoint, RootCategoryMap, DISTANCE_BUCKETS};
use crate::{Error, Result};

pub use table::{FeatureMetadata, FeatureTable, PairMetadata};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    /// Local hour of day.
    Hour,
    /// Distance level between the user's home and the POI.
    HomeDistance,
}

/// Ordered bucket labels of one context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAxis {
    pub name: String,
    pub kind: ContextKind,
    pub values: Vec<String>,
}

impl ContextAxis {
    pub fn hour() -> Self {
        Self { name: "time".into(), kind: ContextKind::Hour, values: (0..24).map(|h| format!("h{h}")).collect() }
    }

    pub fn home_distance() -> Self {
        Self {
            name: "distance".into(),
            kind: ContextKind::HomeDistance,
            values: (0..DISTANCE_BUCKETS).map(|d| format!("d{d}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn bucket(&self, c: &CheckIn, home: Option<GeoPoint>) -> Result<usize> {
        match self.kind {
            ContextKind::Hour => Ok(usize::from(c.hour())),
            ContextKind::HomeDistance => {
                let home = home.ok_or_else(|| Error::MissingHome(c.user_id.clone()))?;
                distance_bucket(haversine_km(home, c.location()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    RootCategory,
}

/// Ordered labels of one view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewAxis {
    pub name: String,
    pub kind: ViewKind,
    pub values: Vec<String>,
}

impl ViewAxis {
    pub fn root_category(map: &RootCategoryMap) -> Self {
        Self { name: "root_category".into(), kind: ViewKind::RootCategory, values: map.labels().to_vec() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_axis(name: &str, values: &[String]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("axis {name:?} has no values")));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = values.iter().find(|v| !seen.insert(*v)) {
        return Err(Error::InvalidConfig(format!("axis {name:?} repeats value {dup:?}")));
    }
    Ok(())
}

/// Dense row-major `rows × cols` matrix owned by one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub user_id: String,
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(user_id: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self { user_id: user_id.into(), rows, cols, counts: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.counts[r * self.cols + c]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Row-major concatenation of the rows.
    pub fn flatten(&self) -> Vec<f64> {
        self.counts.clone()
    }

    pub fn unflatten(user_id: impl Into<String>, rows: usize, cols: usize, v: Vec<f64>) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "vector of length {} cannot form a {rows}x{cols} matrix",
                v.len()
            )));
        }
        Ok(Self { user_id: user_id.into(), rows, cols, counts: v })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Divide every entry by the matrix total.
    #[default]
    #[serde(alias = "l1")]
    L1Global,
}

/// Returns the normalized matrix and whether it was left untouched because
/// its total is zero.
pub fn normalize(m: &FeatureMatrix, mode: Normalization) -> (FeatureMatrix, bool) {
    match mode {
        Normalization::None => (m.clone(), false),
        Normalization::L1Global => {
            let total = m.total();
            if total == 0.0 {
                log::warn!("user {:?} has an all-zero matrix; left unnormalized", m.user_id);
                return (m.clone(), true);
            }
            let mut out = m.clone();
            out.counts.iter_mut().for_each(|x| *x /= total);
            (out, false)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub context: ContextAxis,
    pub view: ViewAxis,
}

impl FeaturePair {
    pub fn name(&self) -> String {
        format!("{}-{}", self.context.name, self.view.name)
    }

    /// `"{context}|{view}"` for every cell, row-major.
    pub fn cell_labels(&self) -> Vec<String> {
        self.context
            .values
            .iter()
            .flat_map(|r| self.view.values.iter().map(move |c| format!("{r}|{c}")))
            .collect()
    }
}

/// One matrix per user for every configured pair. Users are sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub pairs: Vec<FeaturePair>,
    pub users: Vec<String>,
    /// `matrices[pair][user]`.
    pub matrices: Vec<Vec<FeatureMatrix>>,
    /// Events dropped because their category did not resolve.
    pub skipped: usize,
}

impl FeatureSet {
    pub fn matrix(&self, pair: usize, user: &str) -> Option<&FeatureMatrix> {
        let i = self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()?;
        Some(&self.matrices[pair][i])
    }

    /// Flattened, normalized vectors of one pair in user order.
    pub fn table(&self, pair: usize, mode: Normalization) -> FeatureTable {
        let rows = self.matrices[pair].iter().map(|m| normalize(m, mode).0.flatten()).collect();
        FeatureTable { user_ids: self.users.clone(), columns: self.pairs[pair].cell_labels(), rows }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Fail on unresolvable categories instead of skipping the event.
    pub strict: bool,
}

/// Counts every user's check-ins into one matrix per (context, view) pair.
pub fn build_ufs(
    checkins: &[CheckIn],
    contexts: &[ContextAxis],
    views: &[ViewAxis],
    root_map: &RootCategoryMap,
    homes: &BTreeMap<String, GeoPoint>,
    opts: BuildOptions,
) -> Result<FeatureSet> {
    for a in contexts {
        check_axis(&a.name, &a.values)?;
    }
    for a in views {
        check_axis(&a.name, &a.values)?;
    }

    // Resolve each event's view labels once; skipped events drop from all pairs.
    let mut by_user: BTreeMap<&str, Vec<(&CheckIn, Vec<usize>)>> = BTreeMap::new();
    let mut skipped = 0;
    'events: for c in checkins {
        let mut cols = Vec::with_capacity(views.len());
        for v in views {
            let col = match v.kind {
                ViewKind::RootCategory => root_map.resolve(c).and_then(|root| v.values.iter().position(|l| l == root)),
            };
            match col {
                Some(col) => cols.push(col),
                None if opts.strict => {
                    return Err(Error::UnresolvedCategory(if c.category_name.is_empty() {
                        c.category_id.clone()
                    } else {
                        c.category_name.clone()
                    }))
                }
                None => {
                    skipped += 1;
                    continue 'events;
                }
            }
        }
        by_user.entry(&c.user_id).or_default().push((c, cols));
    }
    if skipped > 0 {
        log::warn!("{skipped} check-ins skipped: category did not resolve to a root");
    }

    let users: Vec<String> = by_user.keys().map(|u| u.to_string()).collect();
    let events: Vec<_> = by_user.into_values().collect();
    let mut pairs = Vec::new();
    let mut matrices = Vec::new();
    for context in contexts {
        for (vi, view) in views.iter().enumerate() {
            let per_user = users
                .par_iter()
                .zip(events.par_iter())
                .map(|(user, evs)| {
                    let home = homes.get(user).copied();
                    let mut m = FeatureMatrix::zeros(user.clone(), context.len(), view.len());
                    for (c, cols) in evs {
                        let r = context.bucket(c, home)?;
                        if r >= m.rows {
                            return Err(Error::InvalidConfig(format!(
                                "context {:?} bucket {r} outside its {} values",
                                context.name,
                                m.rows
                            )));
                        }
                        m.counts[r * m.cols + cols[vi]] += 1.0;
                    }
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            pairs.push(FeaturePair { context: context.clone(), view: view.clone() });
            matrices.push(per_user);
        }
    }
    Ok(FeatureSet { pairs, users, matrices, skipped })
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    use super::*;
    use crate::ingest::DEFAULT_ROOT_LABELS;

    fn root_map() -> RootCategoryMap {
        RootCategoryMap::new(
            &DEFAULT_ROOT_LABELS,
            [("American Restaurant", "Food"), ("Railway Station", "Travel & Transport"), ("Park", "Outdoors & Recreation")],
        )
        .unwrap()
    }

    fn checkin(user: &str, cat: &str, hour: u32, lat: f64) -> CheckIn {
        CheckIn {
            user_id: user.into(),
            poi_id: "p".into(),
            category_id: "x".into(),
            category_name: cat.into(),
            latitude: lat,
            longitude: -73.9,
            tz_offset_minutes: None,
            utc_time: Utc.with_ymd_and_hms(2012, 4, 7, hour, 0, 0).unwrap(),
        }
    }

    #[test]
    fn counts_per_cell() {
        let map = root_map();
        let cs: Vec<_> = (0..3).map(|_| checkin("u1", "American Restaurant", 17, 40.7)).collect();
        let fs = build_ufs(&cs, &[ContextAxis::hour()], &[ViewAxis::root_category(&map)], &map, &BTreeMap::new(), BuildOptions::default())
            .unwrap();
        let m = fs.matrix(0, "u1").unwrap();
        let food = map.label_index("Food").unwrap();
        assert_eq!(m.get(17, food), 3.0);
        assert_eq!(m.total(), 3.0);
        assert!(fs.matrix(0, "u2").is_none());
    }

    #[test]
    fn two_pairs_have_expected_shapes() {
        let map = root_map();
        let cs = vec![checkin("a", "Park", 9, 40.7), checkin("b", "Railway Station", 22, 40.9)];
        let homes = BTreeMap::from([
            ("a".to_string(), GeoPoint { latitude: 40.7, longitude: -73.9 }),
            ("b".to_string(), GeoPoint { latitude: 40.7, longitude: -73.9 }),
        ]);
        let fs = build_ufs(
            &cs,
            &[ContextAxis::hour(), ContextAxis::home_distance()],
            &[ViewAxis::root_category(&map)],
            &map,
            &homes,
            BuildOptions::default(),
        )
        .unwrap();
        assert_eq!(fs.pairs.len(), 2);
        for u in ["a", "b"] {
            assert_eq!((fs.matrix(0, u).unwrap().rows, fs.matrix(0, u).unwrap().cols), (24, 9));
            assert_eq!((fs.matrix(1, u).unwrap().rows, fs.matrix(1, u).unwrap().cols), (4, 9));
        }
        // 0.2 degrees of latitude is about 22 km
        let travel = map.label_index("Travel & Transport").unwrap();
        assert_eq!(fs.matrix(1, "b").unwrap().get(2, travel), 1.0);
        assert_eq!(fs.matrix(1, "a").unwrap().get(0, map.label_index("Outdoors & Recreation").unwrap()), 1.0);
        assert_eq!(fs.table(0, Normalization::None).columns[17 * 9 + 2], "h17|Food");
    }

    #[test]
    fn missing_home_is_an_error() {
        let map = root_map();
        let cs = vec![checkin("a", "Park", 9, 40.7)];
        let err = build_ufs(&cs, &[ContextAxis::home_distance()], &[ViewAxis::root_category(&map)], &map, &BTreeMap::new(), BuildOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingHome(ref u) if u == "a"));
    }

    #[test]
    fn unresolved_category_lenient_and_strict() {
        let map = root_map();
        let cs = vec![checkin("a", "Park", 9, 40.7), checkin("a", "Moon Base", 9, 40.7), checkin("z", "Moon Base", 3, 40.7)];
        let axes = ([ContextAxis::hour()], [ViewAxis::root_category(&map)]);
        let fs = build_ufs(&cs, &axes.0, &axes.1, &map, &BTreeMap::new(), BuildOptions::default()).unwrap();
        assert_eq!(fs.skipped, 2);
        assert_eq!(fs.users, ["a"]);
        assert_eq!(fs.matrix(0, "a").unwrap().total(), 1.0);
        let err = build_ufs(&cs, &axes.0, &axes.1, &map, &BTreeMap::new(), BuildOptions { strict: true }).unwrap_err();
        assert!(matches!(err, Error::UnresolvedCategory(ref c) if c == "Moon Base"));
    }

    #[test]
    fn normalization_modes() {
        let m = FeatureMatrix::unflatten("u", 2, 2, vec![2.0, 1.0, 1.0, 0.0]).unwrap();
        let (n, flagged) = normalize(&m, Normalization::L1Global);
        assert!(!flagged);
        assert_eq!(n.counts, [0.5, 0.25, 0.25, 0.0]);
        let z = FeatureMatrix::zeros("z", 2, 2);
        assert_eq!(normalize(&z, Normalization::L1Global), (z.clone(), true));
        assert_eq!(normalize(&m, Normalization::None), (m.clone(), false));
    }

    #[test]
    fn flatten_is_row_major() {
        let m = FeatureMatrix::unflatten("u", 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(FeatureMatrix::zeros("u", 24, 9).flatten().len(), 216);
        assert!(FeatureMatrix::unflatten("u", 2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn rejects_duplicate_axis_values() {
        let map = root_map();
        let mut ctx = ContextAxis::hour();
        ctx.values[1] = "h0".into();
        assert!(build_ufs(&[], &[ctx], &[ViewAxis::root_category(&map)], &map, &BTreeMap::new(), BuildOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn unflatten_inverts_flatten(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let v: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..100.0)).collect();
            let m = FeatureMatrix::unflatten("u", rows, cols, v).unwrap();
            prop_assert_eq!(FeatureMatrix::unflatten("u", rows, cols, m.flatten()).unwrap(), m);
        }

        #[test]
        fn l1_sums_to_one(v in proptest::collection::vec(0u32..50, 1..40)) {
            let m = FeatureMatrix::unflatten("u", 1, v.len(), v.iter().map(|&x| f64::from(x)).collect()).unwrap();
            let (n, flagged) = normalize(&m, Normalization::L1Global);
            if m.total() == 0.0 {
                prop_assert!(flagged);
            } else {
                prop_assert!((n.total() - 1.0).abs() < 1e-12);
            }
        }
    }
}

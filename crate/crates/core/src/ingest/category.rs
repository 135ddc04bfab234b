use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use super::CheckIn;
use crate::{Error, Result};

/// The nine Foursquare root categories.
pub const DEFAULT_ROOT_LABELS: [&str; 9] = [
    "Arts & Entertainment",
    "College & University",
    "Food",
    "Outdoors & Recreation",
    "Professional & Other Places",
    "Residence",
    "Shop & Service",
    "Travel & Transport",
    "Event",
];

/// Maps a category id or category name onto one root label.
#[derive(Clone, Debug, PartialEq)]
pub struct RootCategoryMap {
    labels: Vec<String>,
    entries: BTreeMap<String, String>,
}

/// JSON object kept as an ordered list of pairs so duplicate keys survive
/// deserialization and can be rejected.
struct Pairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for Pairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = Pairs;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping category keys to root labels")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Pairs, A::Error> {
                let mut pairs = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    pairs.push((k, v));
                }
                Ok(Pairs(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor).map_err(de::Error::custom)
    }
}

impl RootCategoryMap {
    /// Builds a map, rejecting duplicate keys and labels outside `labels`.
    pub fn new<I, K, V>(labels: &[&str], entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            let (k, v) = (k.into(), v.into());
            if !labels.contains(&v) {
                return Err(Error::UnknownRootLabel { key: k, label: v });
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::DuplicateCategoryKey(k));
            }
        }
        Ok(Self { labels, entries: map })
    }

    /// Loads a JSON object `{category_key: root_label}` against the default
    /// nine-label root set.
    pub fn from_json(source: impl std::io::Read) -> Result<Self> {
        Self::from_json_with_labels(source, &DEFAULT_ROOT_LABELS)
    }

    pub fn from_json_with_labels(source: impl std::io::Read, labels: &[&str]) -> Result<Self> {
        let Pairs(pairs) = serde_json::from_reader(source)?;
        Self::new(labels, pairs)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("string map serializes")
    }

    /// Root label set, in configured order. This order fixes the view axis.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Category id takes precedence over category name.
    pub fn resolve(&self, checkin: &CheckIn) -> Option<&str> {
        self.get(&checkin.category_id).or_else(|| self.get(&checkin.category_name))
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

//! Plaintext shadow of the database: the ground truth every encrypted
//! result set is diffed against. Lives in the harness layer only, never in
//! scheme state.

use crate::{DocId, Error, Result};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShadowDb {
    values: BTreeMap<u64, BTreeSet<DocId>>,
}

impl ShadowDb {
    pub fn new() -> Self {
        ShadowDb::default()
    }

    pub fn add(&mut self, value: u64, ind: DocId) {
        self.values.entry(value).or_default().insert(ind);
    }

    pub fn del(&mut self, value: u64, ind: &DocId) -> Result<()> {
        let present = self
            .values
            .get_mut(&value)
            .map(|set| set.remove(ind))
            .unwrap_or(false);
        if !present {
            return Err(Error::DocNotPresent { value });
        }
        Ok(())
    }

    pub fn contains(&self, value: u64, ind: &DocId) -> bool {
        self.values.get(&value).is_some_and(|set| set.contains(ind))
    }

    /// Union of documents over the inclusive range, clamped to the data.
    pub fn range(&self, a: u64, b: u64) -> BTreeSet<DocId> {
        self.values
            .range(a..=b)
            .flat_map(|(_, set)| set.iter().copied())
            .collect()
    }

    pub fn value_of(&self, ind: &DocId) -> Option<u64> {
        self.values
            .iter()
            .find(|(_, set)| set.contains(ind))
            .map(|(v, _)| *v)
    }

    pub fn doc_count(&self) -> usize {
        self.values.values().map(|s| s.len()).sum()
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (u64, &BTreeSet<DocId>)> {
        self.values.iter().map(|(v, s)| (*v, s))
    }

    pub(crate) fn from_entries(entries: Vec<(u64, Vec<DocId>)>) -> Self {
        ShadowDb {
            values: entries
                .into_iter()
                .map(|(v, ids)| (v, ids.into_iter().collect()))
                .collect(),
        }
    }
}

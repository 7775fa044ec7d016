use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::interactions::InteractionSet;
use super::RawPair;
use crate::error::{Error, Result};

/// Raw id <-> contiguous index maps for one side of the bipartite graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl IdMap {
    /// Returns the index for `raw`, assigning the next one on first sight.
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.index.get(raw) {
            return idx;
        }
        let idx = self.raw.len() as u32;
        self.raw.push(String::from(raw));
        self.index.insert(String::from(raw), idx);
        idx
    }

    pub fn index_of(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw_of(&self, idx: u32) -> Option<&str> {
        self.raw.get(idx as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Raw ids in index order.
    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }

    /// Rebuilds a map from raw ids listed in index order.
    pub fn from_raw_ids(raw: Vec<String>) -> Result<Self> {
        let mut map = IdMap::default();
        for r in &raw {
            let before = map.len();
            map.intern(r);
            if map.len() == before {
                return Err(Error::InvalidArgument {
                    name: "id map",
                    reason: alloc::format!("raw id `{r}` listed twice"),
                });
            }
        }
        Ok(map)
    }
}

/// Maps users and items independently to `0..M` and `0..N` in order of first
/// appearance.
pub fn remap_ids(pairs: &[RawPair]) -> Result<(InteractionSet, IdMap, IdMap)> {
    if pairs.is_empty() {
        return Err(Error::Empty);
    }
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut idx_pairs = Vec::with_capacity(pairs.len());
    for (u, i) in pairs {
        idx_pairs.push((users.intern(u), items.intern(i)));
    }
    let set = InteractionSet::from_pairs(users.len(), items.len(), &idx_pairs)?;
    Ok((set, users, items))
}

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Binary user-item interactions with contiguous ids, stored as one sorted
/// item list per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl InteractionSet {
    /// Builds the set from arbitrary pairs; duplicates collapse.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        for &(u, i) in pairs {
            if u as usize >= num_users {
                return Err(Error::Index { what: "user", index: u as usize, limit: num_users });
            }
            if i as usize >= num_items {
                return Err(Error::Index { what: "item", index: i as usize, limit: num_items });
            }
            per_user[u as usize].push(i);
        }
        Ok(Self::from_adjacency(num_items, per_user))
    }

    pub(crate) fn from_adjacency(num_items: usize, mut per_user: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(per_user.len() + 1);
        let mut items = Vec::new();
        offsets.push(0);
        for list in per_user.iter_mut() {
            list.sort_unstable();
            list.dedup();
            items.extend_from_slice(list);
            offsets.push(items.len());
        }
        Self { num_users: per_user.len(), num_items, offsets, items }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items of user `u`, ascending.
    #[inline]
    pub fn items_of(&self, u: u32) -> &[u32] {
        let u = u as usize;
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: u32) -> usize {
        let u = u as usize;
        self.offsets[u + 1] - self.offsets[u]
    }

    #[inline]
    pub fn contains(&self, u: u32, i: u32) -> bool {
        (u as usize) < self.num_users && self.items_of(u).binary_search(&i).is_ok()
    }

    /// The `k`-th pair in user-major order.
    pub fn pair_at(&self, k: usize) -> (u32, u32) {
        // offsets is non-decreasing; find the user whose range holds k
        let u = self.offsets.partition_point(|&o| o <= k) - 1;
        (u as u32, self.items[k])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users).flat_map(move |u| {
            self.items_of(u as u32).iter().map(move |&i| (u as u32, i))
        })
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_items];
        for &i in &self.items {
            deg[i as usize] += 1;
        }
        deg
    }

    /// Fraction of the full user-item matrix that is observed.
    pub fn density(&self) -> f64 {
        if self.num_users == 0 || self.num_items == 0 {
            return 0.0;
        }
        self.len() as f64 / (self.num_users as f64 * self.num_items as f64)
    }
}

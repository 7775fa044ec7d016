use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::records::RatingRecord;
use super::RawPair;
use crate::error::{Error, Result};

/// Keeps records rated at least `threshold`. Records without a rating are
/// implicit feedback already and always pass.
pub fn threshold_implicit(records: &[RatingRecord], threshold: f64) -> Vec<RawPair> {
    records
        .iter()
        .filter(|r| r.rating.map_or(true, |v| v >= threshold))
        .map(|r| (r.user_raw.clone(), r.item_raw.clone()))
        .collect()
}

/// Drops repeated `(user, item)` pairs, keeping the first occurrence.
pub fn dedup_pairs(pairs: &[RawPair]) -> Vec<RawPair> {
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut out = Vec::with_capacity(pairs.len());
    for (u, i) in pairs {
        if seen.insert((u.as_str(), i.as_str())) {
            out.push((u.clone(), i.clone()));
        }
    }
    out
}

fn intern<'a>(table: &mut BTreeMap<&'a str, usize>, key: &'a str) -> usize {
    let next = table.len();
    *table.entry(key).or_insert(next)
}

/// Iteratively removes users with fewer than `k_user` interactions and items
/// with fewer than `k_item` until nothing changes. Duplicates are collapsed
/// first and the surviving pairs keep their input order.
pub fn k_core_filter(pairs: &[RawPair], k_user: usize, k_item: usize) -> Result<Vec<RawPair>> {
    if k_user == 0 || k_item == 0 {
        return Err(Error::InvalidArgument {
            name: "k",
            reason: String::from("k-core thresholds must be at least 1"),
        });
    }
    let pairs = dedup_pairs(pairs);
    let mut users = BTreeMap::new();
    let mut items = BTreeMap::new();
    let mut edges = Vec::with_capacity(pairs.len());
    for (u, i) in &pairs {
        edges.push((intern(&mut users, u), intern(&mut items, i)));
    }

    let mut user_edges = vec![Vec::new(); users.len()];
    let mut item_edges = vec![Vec::new(); items.len()];
    for (e, &(u, i)) in edges.iter().enumerate() {
        user_edges[u].push(e);
        item_edges[i].push(e);
    }
    let mut user_deg: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut user_gone = vec![false; users.len()];
    let mut item_gone = vec![false; items.len()];
    let mut alive = vec![true; edges.len()];

    // Nodes are encoded as (is_item, index).
    let mut queue: VecDeque<(bool, usize)> = VecDeque::new();
    queue.extend((0..users.len()).filter(|&u| user_deg[u] < k_user).map(|u| (false, u)));
    queue.extend((0..items.len()).filter(|&i| item_deg[i] < k_item).map(|i| (true, i)));

    while let Some((is_item, node)) = queue.pop_front() {
        if is_item {
            if item_gone[node] {
                continue;
            }
            item_gone[node] = true;
            for &e in &item_edges[node] {
                if !alive[e] {
                    continue;
                }
                alive[e] = false;
                let u = edges[e].0;
                user_deg[u] -= 1;
                if !user_gone[u] && user_deg[u] < k_user {
                    queue.push_back((false, u));
                }
            }
        } else {
            if user_gone[node] {
                continue;
            }
            user_gone[node] = true;
            for &e in &user_edges[node] {
                if !alive[e] {
                    continue;
                }
                alive[e] = false;
                let i = edges[e].1;
                item_deg[i] -= 1;
                if !item_gone[i] && item_deg[i] < k_item {
                    queue.push_back((true, i));
                }
            }
        }
    }

    let out: Vec<RawPair> = pairs
        .into_iter()
        .zip(alive)
        .filter_map(|(p, keep)| keep.then_some(p))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyCore { k_user, k_item });
    }
    Ok(out)
}

//! Per-chip table of recent transfers, searched for the most similar entry.
//!
//! The sender and receiver each keep one table per chip and must apply the
//! same sequence of inserts. Slots are filled in order and, once the table is
//! full, the oldest slot is overwritten in place, so an entry keeps its slot
//! index for as long as it lives.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::word::ChipWord;

pub const DEFAULT_CAPACITY: usize = 64;
pub const MAX_CAPACITY: usize = 64;

/// When the original BD-Coder writes a transfer into its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    /// Only words that went out unencoded.
    #[default]
    RawOnly,
    /// Every word, encoded or not.
    EveryAccess,
}

impl fmt::Display for UpdatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdatePolicy::RawOnly => "raw-only",
            UpdatePolicy::EveryAccess => "every-access",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MseResult {
    pub index: usize,
    pub entry: ChipWord,
    /// Weight of `(entry ^ query) & !trunc_mask`.
    pub xor_weight: u32,
}

#[derive(Clone, PartialEq, Eq)]
pub struct DataTable {
    slots: Vec<ChipWord>,
    capacity: usize,
    /// Slot overwritten by the next insert once the table is full.
    oldest: usize,
    dedupe: bool,
}

impl fmt::Debug for DataTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataTable")
            .field("capacity", &self.capacity)
            .field("dedupe", &self.dedupe)
            .field("slots", &self.slots)
            .finish()
    }
}

impl DataTable {
    pub fn new(capacity: usize, dedupe: bool) -> Result<Self, ConfigError> {
        if capacity == 0 || capacity > MAX_CAPACITY {
            return Err(ConfigError::TableCapacity(capacity));
        }
        Ok(DataTable {
            slots: Vec::with_capacity(capacity),
            capacity,
            oldest: 0,
            dedupe,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn dedupe(&self) -> bool {
        self.dedupe
    }

    pub fn get(&self, slot: usize) -> Option<ChipWord> {
        self.slots.get(slot).copied()
    }

    /// Occupied slots in slot order.
    pub fn slots(&self) -> &[ChipWord] {
        &self.slots
    }

    pub fn contains(&self, w: ChipWord) -> bool {
        self.slots.contains(&w)
    }

    /// Entries from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = ChipWord> + '_ {
        let split = if self.slots.len() == self.capacity {
            self.oldest
        } else {
            0
        };
        self.slots[split..].iter().chain(&self.slots[..split]).copied()
    }

    /// Writes `w`, evicting the oldest entry when full. Returns the slot
    /// written, or `None` when a deduplicating table already holds `w`.
    pub fn insert(&mut self, w: ChipWord) -> Option<usize> {
        if self.dedupe && self.contains(w) {
            return None;
        }
        if self.slots.len() < self.capacity {
            self.slots.push(w);
            Some(self.slots.len() - 1)
        } else {
            let slot = self.oldest;
            self.slots[slot] = w;
            self.oldest = (slot + 1) % self.capacity;
            Some(slot)
        }
    }

    /// Entry minimizing the hamming distance to `query` over non-truncated
    /// bits; ties go to the lowest slot.
    pub fn mse_search(&self, query: ChipWord, trunc_mask: u64) -> Option<MseResult> {
        let keep = !trunc_mask;
        let q = query.0 & keep;
        let mut best: Option<(u32, usize)> = None;
        for (i, e) in self.slots.iter().enumerate() {
            let weight = ((e.0 & keep) ^ q).count_ones();
            if best.is_none_or(|(bw, _)| weight < bw) {
                best = Some((weight, i));
                if weight == 0 {
                    break;
                }
            }
        }
        best.map(|(xor_weight, index)| MseResult {
            index,
            entry: self.slots[index],
            xor_weight,
        })
    }

    pub fn snapshot(&self) -> TableSnapshot {
        TableSnapshot {
            capacity: self.capacity,
            dedupe: self.dedupe,
            oldest: self.oldest,
            slots: self.slots.iter().map(|w| format!("{:#018x}", w.0)).collect(),
        }
    }
}

/// Debug dump of a table in slot order, for auditing sender/receiver sync.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSnapshot {
    pub capacity: usize,
    pub dedupe: bool,
    pub oldest: usize,
    pub slots: Vec<String>,
}

impl TableSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

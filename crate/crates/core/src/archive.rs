//! Archive of the best controller found per component signature.
//!
//! Keyed by (wheel count, leg count, sensor count) — casters carry no
//! controller I/O, so they are not part of the key. New learners for a body
//! with a known signature warm-start from the archived weights. Entries are
//! replaced only by strictly better task performance, so per-key performance
//! never decreases.

use crate::bodyplan::BodyPlan;
use crate::controller::ElmanSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// (wheels, legs, sensors)
pub type ArchiveKey = (usize, usize, usize);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("key {0:?} implies no controller I/O (needs a sensor and an actuator)")]
    NonViableKey(ArchiveKey),
    #[error("key {key:?} implies {expected} weights, got {got}")]
    DimMismatch { key: ArchiveKey, expected: usize, got: usize },
}

/// Controller shape implied by a key: sensors in, wheels + legs out.
pub fn key_spec(key: ArchiveKey) -> Result<ElmanSpec, ArchiveError> {
    let (wheels, legs, sensors) = key;
    ElmanSpec::new(sensors, wheels + legs).map_err(|_| ArchiveError::NonViableKey(key))
}

pub fn archive_key(plan: &BodyPlan) -> ArchiveKey {
    let [wheels, legs, sensors, _casters] = plan.component_counts();
    (wheels, legs, sensors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub wheels: usize,
    pub legs: usize,
    pub sensors: usize,
    pub spec: ElmanSpec,
    pub weights: Vec<f64>,
    pub performance: f64,
}

impl ArchiveEntry {
    pub fn key(&self) -> ArchiveKey {
        (self.wheels, self.legs, self.sensors)
    }
}

/// Entries kept sorted by key; the archive stays small (one entry per
/// signature seen), so a sorted vec doubles as the serialized form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerArchive {
    entries: Vec<ArchiveEntry>,
}

impl ControllerArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn lookup(&self, key: ArchiveKey) -> Option<&ArchiveEntry> {
        self.entries
            .binary_search_by_key(&key, ArchiveEntry::key)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Stores the controller iff the key is new or the performance is
    /// strictly better than the entry it would replace; returns whether it
    /// was stored. Ties keep the incumbent.
    pub fn update(
        &mut self,
        key: ArchiveKey,
        weights: &[f64],
        performance: f64,
    ) -> Result<bool, ArchiveError> {
        let spec = key_spec(key)?;
        if weights.len() != spec.weights_dim() {
            return Err(ArchiveError::DimMismatch {
                key,
                expected: spec.weights_dim(),
                got: weights.len(),
            });
        }
        let (wheels, legs, sensors) = key;
        let entry = ArchiveEntry {
            wheels,
            legs,
            sensors,
            spec,
            weights: weights.to_vec(),
            performance,
        };
        match self.entries.binary_search_by_key(&key, ArchiveEntry::key) {
            Ok(i) => {
                if performance > self.entries[i].performance {
                    self.entries[i] = entry;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            Err(i) => {
                self.entries.insert(i, entry);
                Ok(true)
            }
        }
    }
}

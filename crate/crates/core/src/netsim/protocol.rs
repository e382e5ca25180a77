//! Router behaviour during header-processing and queueing delays.
//!
//! Each protocol is a [`RoutingProtocol`] strategy. A [`ProtocolRegistry`]
//! maps names to factories so configs and the CLI can select one at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DiscardReason, SimError};

/// Slack for time comparisons on accumulated storage, in seconds.
pub const TIME_EPS: f64 = 1e-12;

/// Mutable routing state a protocol may touch at one hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadState {
    /// remaining frame length (s)
    pub t_f: f64,
    /// remaining guard time (s)
    pub t_g: f64,
    /// cumulative storage so far (s)
    pub cum_storage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopOutcome {
    /// time spent in a fiber delay line at this hop (s)
    pub storage: f64,
    pub discard: Option<DiscardReason>,
}

pub trait RoutingProtocol: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether payloads wait in fiber delay lines instead of being truncated.
    fn stores_payload(&self) -> bool;

    /// Applies a router delay (`d_proc + d_queue`, already validated >= 0).
    fn apply(&self, state: &mut PayloadState, delay: f64) -> HopOutcome;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoStorage;

impl RoutingProtocol for NoStorage {
    fn name(&self) -> &'static str {
        "no-storage"
    }

    fn stores_payload(&self) -> bool {
        false
    }

    fn apply(&self, state: &mut PayloadState, delay: f64) -> HopOutcome {
        state.t_f -= delay;
        state.t_g = (state.t_g - delay).max(0.0);
        if state.t_f <= 0.0 {
            state.t_f = state.t_f.max(0.0);
            return HopOutcome { storage: 0.0, discard: Some(DiscardReason::ZeroLength) };
        }
        state.t_g = state.t_g.min(state.t_f);
        HopOutcome { storage: 0.0, discard: None }
    }
}

fn store_during_delay(state: &mut PayloadState, delay: f64) -> f64 {
    let storage = (delay - state.t_g).max(0.0);
    state.t_f -= state.t_g.min(delay);
    state.t_g = (state.t_g - delay).max(0.0);
    state.cum_storage += storage;
    storage
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StorageUnlimited;

impl RoutingProtocol for StorageUnlimited {
    fn name(&self) -> &'static str {
        "storage-unlimited"
    }

    fn stores_payload(&self) -> bool {
        true
    }

    fn apply(&self, state: &mut PayloadState, delay: f64) -> HopOutcome {
        let storage = store_during_delay(state, delay);
        HopOutcome { storage, discard: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StorageLimited {
    /// storage time limit (s)
    pub stl: f64,
}

impl RoutingProtocol for StorageLimited {
    fn name(&self) -> &'static str {
        "storage-limited"
    }

    fn stores_payload(&self) -> bool {
        true
    }

    fn apply(&self, state: &mut PayloadState, delay: f64) -> HopOutcome {
        let storage = store_during_delay(state, delay);
        // equality survives
        let discard = exceeds(state.cum_storage, self.stl).then_some(DiscardReason::StorageLimit);
        HopOutcome { storage, discard }
    }
}

/// `total > limit` with [`TIME_EPS`] slack, so accumulated sums that equal the
/// limit up to rounding are treated as equal.
#[inline]
pub fn exceeds(total: f64, limit: f64) -> bool {
    total - limit > TIME_EPS
}

/// Serializable protocol selector: a registry name plus an optional storage
/// time limit. Text form is `name` or `name:<stl seconds>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub name: String,
    pub stl: Option<f64>,
}

impl ProtocolSpec {
    pub fn no_storage() -> Self {
        Self { name: "no-storage".into(), stl: None }
    }

    pub fn storage_unlimited() -> Self {
        Self { name: "storage-unlimited".into(), stl: None }
    }

    pub fn storage_limited(stl: f64) -> Self {
        Self { name: "storage-limited".into(), stl: Some(stl) }
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stl {
            Some(stl) => write!(f, "{}:{}", self.name, stl),
            None => f.write_str(&self.name),
        }
    }
}

impl FromStr for ProtocolSpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once(':') {
            None => Ok(Self { name: s.to_string(), stl: None }),
            Some((name, stl)) => {
                let stl = stl
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| SimError::UnknownProtocol(s.to_string()))?;
                Ok(Self { name: name.trim().to_string(), stl: Some(stl) })
            }
        }
    }
}

impl Serialize for ProtocolSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProtocolSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type ProtocolFactory = fn(Option<f64>) -> Result<Arc<dyn RoutingProtocol>, SimError>;

#[derive(Clone)]
pub struct ProtocolRegistry {
    factories: BTreeMap<String, ProtocolFactory>,
}

impl fmt::Debug for ProtocolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for ProtocolRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn no_param(name: &str, stl: Option<f64>) -> Result<(), SimError> {
    match stl {
        None => Ok(()),
        Some(_) => Err(SimError::ConfigInvalid(format!("protocol `{name}` takes no storage time limit"))),
    }
}

impl ProtocolRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("no-storage", |stl| {
            no_param("no-storage", stl)?;
            Ok(Arc::new(NoStorage))
        });
        r.register("storage-unlimited", |stl| {
            no_param("storage-unlimited", stl)?;
            Ok(Arc::new(StorageUnlimited))
        });
        r.register("storage-limited", |stl| match stl {
            Some(stl) if stl >= 0.0 && !stl.is_nan() => Ok(Arc::new(StorageLimited { stl })),
            Some(stl) => Err(SimError::ConfigInvalid(format!("storage time limit {stl} must be >= 0"))),
            None => Err(SimError::ConfigInvalid("storage-limited requires `:<stl seconds>`".into())),
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: ProtocolFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &ProtocolSpec) -> Result<Arc<dyn RoutingProtocol>, SimError> {
        let factory = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| SimError::UnknownProtocol(spec.name.clone()))?;
        factory(spec.stl)
    }
}

// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{CornerMode, Edge};

use super::RcMismatch;

/// Everything the generator injected, per corner/mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub rc_threshold_ps: f64,
    pub lc_deny_set: Vec<String>,
    pub corner_modes: BTreeMap<CornerMode, CmTruth>,
}

impl GroundTruth {
    pub fn get(&self, cm: &CornerMode) -> Option<&CmTruth> {
        self.corner_modes.get(cm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmTruth {
    pub path_count: usize,
    /// Sorted ascending.
    pub violating_paths: Vec<u64>,
    pub worst_slack_path: u64,
    /// Paths carrying multi-report anomalies; the first is `worst_slack_path`.
    pub anomaly_paths: Vec<u64>,
    /// Net of the stage with the largest cross-talk delta, for paths with any.
    pub worst_xtalk_net: BTreeMap<u64, String>,
    pub dominant_pairs: Vec<DominantPair>,
    pub rc_mismatch_pairs: Vec<RcMismatch>,
    pub aggressor_rc_mismatch: Vec<AggressorRcMismatch>,
    pub unusual_lc: Vec<UnusualLc>,
    pub missing_clk: Vec<MissingClkSignal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominantPair {
    pub path_id: u64,
    pub stage: u32,
    pub victim: String,
    pub aggressor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggressorRcMismatch {
    pub path_id: u64,
    pub victim: String,
    pub aggressor: String,
    /// rc(victim) - rc(aggressor), ps.
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnusualLc {
    pub path_id: u64,
    pub net: String,
    pub constraint_kind: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingClkSignal {
    pub clock: String,
    pub net: String,
    pub missing: Vec<Edge>,
}

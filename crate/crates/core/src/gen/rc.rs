// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{TimingPath, WireNet};

use super::{ps, Fs, GenError};

/// Neighboring data-stage nets whose worst RC differs beyond threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcMismatch {
    pub path_id: u64,
    /// Net of the earlier stage.
    pub a: String,
    pub b: String,
    /// rc(a) - rc(b), ps.
    pub mismatch: f64,
}

/// Consecutive data-stage net pairs of a path, in stage order.
pub fn neighbor_pairs(path: &TimingPath) -> impl Iterator<Item = (&str, &str)> {
    path.data_stages.windows(2).map(|w| (w[0].net.as_str(), w[1].net.as_str()))
}

/// Rebuilds a wire entry with the given RC, keeping its capacitance.
pub(crate) fn with_rc(w: &WireNet, rc: Fs) -> WireNet {
    let c_milli = (w.worst_c * 1000.0).round() as i128;
    wire_from(&w.net, rc, c_milli)
}

/// `c_milli` is in 1e-3 fF; RC in fs equals r[mohm] * c[1e-3 fF] / 1e6.
pub(crate) fn wire_from(net: &str, rc: Fs, c_milli: i128) -> WireNet {
    let r_milli = ((rc as i128) * 1_000_000 + c_milli / 2) / c_milli;
    let rc = (r_milli * c_milli + 500_000) / 1_000_000;
    WireNet {
        net: net.to_string(),
        worst_r: r_milli as f64 / 1000.0,
        worst_c: c_milli as f64 / 1000.0,
        worst_rc: ps(rc as Fs),
    }
}

/// Raises the RC of every net from a chosen stage onward so that exactly
/// that neighbor pair jumps by 2.5x to 3x the threshold. Injections are
/// spread round-robin over `paths`, each on a distinct pair.
pub fn inject_rc_mismatch(
    wire: &mut [WireNet],
    paths: &[&TimingPath],
    count: usize,
    threshold_ps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RcMismatch>, GenError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if paths.is_empty() {
        return Err(GenError::SpecInfeasible("no paths to inject RC mismatch into".into()));
    }
    let index: HashMap<String, usize> = wire.iter().enumerate().map(|(i, w)| (w.net.clone(), i)).collect();
    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); paths.len()];
    for i in 0..count {
        let j = i % paths.len();
        let n = paths[j].data_stages.len();
        let free: Vec<usize> = (1..n).filter(|s| !chosen[j].contains(s)).collect();
        if free.is_empty() {
            return Err(GenError::SpecInfeasible(format!(
                "path {} has no neighbor pair left for RC mismatch",
                paths[j].summary.path_id
            )));
        }
        chosen[j].push(free[rng.gen_range(0..free.len())]);
    }

    let thr = (threshold_ps * 1000.0) as Fs;
    let mut out = Vec::with_capacity(count);
    for (path, stages) in paths.iter().zip(&mut chosen) {
        stages.sort_unstable();
        for &s in stages.iter() {
            let jump = rng.gen_range(thr * 5 / 2..=thr * 3);
            for st in &path.data_stages[s..] {
                let i = *index.get(&st.net).ok_or_else(|| {
                    GenError::SpecInfeasible(format!("net {} missing from wire report", st.net))
                })?;
                let rc = (wire[i].worst_rc * 1000.0).round() as Fs + jump;
                wire[i] = with_rc(&wire[i], rc);
            }
        }
        for &s in stages.iter() {
            let a = &path.data_stages[s - 1].net;
            let b = &path.data_stages[s].net;
            let mismatch = wire[index[a]].worst_rc - wire[index[b]].worst_rc;
            out.push(RcMismatch {
                path_id: path.summary.path_id,
                a: a.clone(),
                b: b.clone(),
                mismatch: (mismatch * 1000.0).round() / 1000.0,
            });
        }
    }
    Ok(out)
}

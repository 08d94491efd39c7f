//! Uplink sender selection and resource-block allocation.
//!
//! Risk centers are cells where conflicts are likely. The server wants at
//! least one agent that sees each center to upload successfully, which gives
//! a weighted coverage objective maximised greedily under a sender budget.

use rustc_hash::FxHashMap;

use thiserror::Error;

use crate::execution::{EventKind, StepOutcome};
use crate::map::{Cell, GridMap};
use crate::radio::{blocklength, db_to_linear, p_loss, LinkBudgetParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UplinkError {
    #[error("insufficient RBs: {c_ul} RBs for {senders} senders")]
    InsufficientRbs { c_ul: u32, senders: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCenter {
    pub cell: Cell,
    pub weight: f64,
}

/// Exponentially decayed conflict counts per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictHistory {
    pub decay: f64,
    counts: FxHashMap<Cell, f64>,
}

impl ConflictHistory {
    pub fn new(decay: f64) -> Self {
        Self { decay, counts: FxHashMap::default() }
    }

    /// Decays all counts, then adds one per vertex conflict at the contested
    /// cell and one per swap participant at its cell.
    pub fn observe(&mut self, prev_positions: &[Cell], outcome: &StepOutcome) {
        for v in self.counts.values_mut() {
            *v *= self.decay;
        }
        self.counts.retain(|_, v| *v > 1e-6);
        for (i, ev) in outcome.events.iter().enumerate() {
            if ev.contains(EventKind::Vertex) {
                *self.counts.entry(outcome.proposed[i]).or_insert(0.0) += 1.0;
            }
            if ev.contains(EventKind::Edge) {
                *self.counts.entry(prev_positions[i]).or_insert(0.0) += 1.0;
            }
        }
    }

    pub fn add(&mut self, c: Cell, amount: f64) {
        *self.counts.entry(c).or_insert(0.0) += amount;
    }

    pub fn get(&self, c: Cell) -> f64 {
        self.counts.get(&c).copied().unwrap_or(0.0)
    }
}

/// Corridor and door cells (free degree at most 2) with weight
/// `structural`, plus decayed conflict history. Sorted by cell.
pub fn identify_risk_centers(map: &GridMap, history: &ConflictHistory, structural: f64) -> Vec<RiskCenter> {
    let mut centers: Vec<RiskCenter> = map
        .free_cells()
        .iter()
        .filter_map(|&c| {
            let s = if map.free_degree(c) <= 2 { structural } else { 0.0 };
            let w = s + history.get(c);
            (w > 0.0).then_some(RiskCenter { cell: c, weight: w })
        })
        .collect();
    centers.sort_by_key(|r| r.cell);
    centers
}

/// For each center, the agents whose Chebyshev box of side `fov` covers it.
pub fn visibility(positions: &[Cell], centers: &[RiskCenter], fov: usize) -> Vec<Vec<usize>> {
    assert!(fov % 2 == 1, "field of view must be odd");
    let r = (fov / 2) as u32;
    centers
        .iter()
        .map(|u| (0..positions.len()).filter(|&i| positions[i].chebyshev(u.cell) <= r).collect())
        .collect()
}

/// `Σ_u w_u (1 − Π_{i ∈ S ∩ NN(u)} (1 − p_i))`.
pub fn coverage_value(selected: &[usize], centers: &[RiskCenter], nn: &[Vec<usize>], p: &[f64]) -> f64 {
    centers
        .iter()
        .zip(nn)
        .map(|(u, agents)| {
            let fail: f64 = agents.iter().filter(|i| selected.contains(i)).map(|&i| 1.0 - p[i]).product();
            u.weight * (1.0 - fail)
        })
        .sum()
}

/// Greedy maximisation of [`coverage_value`] over `candidates`, at most `k`
/// picks, stopping when no candidate adds positive value.
pub fn greedy_select(centers: &[RiskCenter], nn: &[Vec<usize>], candidates: &[usize], p: &[f64], k: usize) -> Vec<usize> {
    let mut covers: Vec<Vec<usize>> = vec![Vec::new(); p.len()];
    for (u, agents) in nn.iter().enumerate() {
        for &i in agents {
            covers[i].push(u);
        }
    }
    let mut cands: Vec<usize> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let mut fail = vec![1.0; centers.len()];
    let mut chosen = Vec::new();
    let mut taken = vec![false; p.len()];
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for &i in &cands {
            if taken[i] {
                continue;
            }
            let gain: f64 = covers[i].iter().map(|&u| centers[u].weight * fail[u] * p[i]).sum();
            if gain > 0.0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        chosen.push(i);
        taken[i] = true;
        for &u in &covers[i] {
            fail[u] *= 1.0 - p[i];
        }
    }
    chosen
}

/// Bit widths of the uplink message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UlPayload {
    pub header_bits: u64,
    pub coord_bits: u64,
    pub hidden_size: u64,
    pub bits_per_element: u64,
}

impl Default for UlPayload {
    fn default() -> Self {
        Self { header_bits: 32, coord_bits: 16, hidden_size: 128, bits_per_element: 16 }
    }
}

/// `header + (1 + peers)·(2·coord + d_h·bits_per_element)`.
pub fn ul_bit_length(peers: usize, p: &UlPayload) -> u64 {
    p.header_bits + (1 + peers as u64) * (2 * p.coord_bits + p.hidden_size * p.bits_per_element)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlGrant {
    pub agent: usize,
    pub bits: u64,
    pub rbs: u32,
    /// Bits per channel use.
    pub rate: f64,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UplinkPlan {
    pub grants: Vec<UlGrant>,
}

impl UplinkPlan {
    pub fn total_rbs(&self) -> u32 {
        self.grants.iter().map(|g| g.rbs).sum()
    }
}

/// Nominal success with one RB at the large-scale SNR.
pub fn nominal_success(snr_db: f64, bits: u64, link: &LinkBudgetParams) -> f64 {
    let n = blocklength(1, link);
    1.0 - p_loss(db_to_linear(snr_db), bits as f64 / n as f64, n)
}

/// Splits `c_ul` RBs among `senders` given as `(agent, bits, snr_db)`.
///
/// Senders are ordered by bits, largest first (ties by id), each starts
/// with one RB, and extra RBs go one at a time to the sender with the
/// highest loss probability above `target` (ties to the earlier sender).
pub fn allocate_ul(senders: &[(usize, u64, f64)], c_ul: u32, link: &LinkBudgetParams, target: f64) -> Result<UplinkPlan, UplinkError> {
    if (c_ul as usize) < senders.len() {
        return Err(UplinkError::InsufficientRbs { c_ul, senders: senders.len() });
    }
    let mut order: Vec<(usize, u64, f64)> = senders.to_vec();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let loss = |bits: u64, snr_db: f64, m: u32| {
        let n = blocklength(m, link);
        let r = bits as f64 / n as f64;
        (r, p_loss(db_to_linear(snr_db), r, n))
    };
    let mut grants: Vec<UlGrant> = order
        .iter()
        .map(|&(agent, bits, snr)| {
            let (rate, pl) = loss(bits, snr, 1);
            UlGrant { agent, bits, rbs: 1, rate, p_loss: pl }
        })
        .collect();
    let mut left = c_ul - senders.len() as u32;
    while left > 0 {
        let mut pick: Option<usize> = None;
        for (k, g) in grants.iter().enumerate() {
            if g.p_loss > target && pick.is_none_or(|j| g.p_loss > grants[j].p_loss) {
                pick = Some(k);
            }
        }
        let Some(k) = pick else { break };
        let snr = order[k].2;
        let g = &mut grants[k];
        g.rbs += 1;
        let (rate, pl) = loss(g.bits, snr, g.rbs);
        g.rate = rate;
        g.p_loss = pl;
        left -= 1;
    }
    Ok(UplinkPlan { grants })
}

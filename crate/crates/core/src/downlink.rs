//! Downlink scoring and selection.
//!
//! Event risk and counterfactual relief are estimated by short Monte-Carlo
//! rollouts of the local policy around the agent. They are combined with the
//! action shift the cloud would cause, the agent's priority and its downlink
//! success probability into a score, and the top scores are granted.

use rand::Rng;

use crate::execution::{step, Action, EventKind, TransitionKernel, WorldState};
use crate::map::{Cell, GridMap};
use crate::policy::local::{model_argmax, ActionModel};
use crate::policy::{masked_distribution, ActionLogits, LegalityMask};
use crate::rng::{Domain, Streams};

/// KL values are capped here; also the value for disjoint supports.
pub const KL_CAP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub horizon: usize,
    pub rollouts: usize,
    pub xi: f64,
    /// Peers simulated alongside the agent.
    pub max_peers: usize,
    /// Chebyshev radius within which peers are simulated.
    pub peer_radius: u32,
}

impl Default for McParams {
    fn default() -> Self {
        Self { horizon: 6, rollouts: 16, xi: 0.9, max_peers: 6, peer_radius: 4 }
    }
}

/// Event probabilities indexed by [`EventKind`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventRisk(pub [f64; 4]);

impl EventRisk {
    pub fn get(&self, e: EventKind) -> f64 {
        self.0[e as usize]
    }
}

/// `y(0) − y(1)` per event.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReliefScore(pub [f64; 4]);

impl ReliefScore {
    pub fn get(&self, e: EventKind) -> f64 {
        self.0[e as usize]
    }
}

/// The agent and its nearest peers, nearest first (ties by id).
fn sub_world(state: &WorldState, agent: usize, goals: &[Cell], p: &McParams) -> (Vec<usize>, WorldState) {
    let me = state.positions[agent];
    let mut peers: Vec<(u32, usize)> = (0..state.len())
        .filter(|&j| j != agent)
        .map(|j| (me.chebyshev(state.positions[j]), j))
        .filter(|&(d, _)| d <= p.peer_radius)
        .collect();
    peers.sort_unstable();
    peers.truncate(p.max_peers);
    let mut ids = vec![agent];
    ids.extend(peers.into_iter().map(|(_, j)| j));
    let pos = ids.iter().map(|&j| state.positions[j]).collect();
    let g = ids.iter().map(|&j| goals[j]).collect();
    (ids, WorldState::new(pos, g))
}

/// Decayed first-occurrence event indicators of agent `agent` averaged over
/// rollouts. With `first` set, the agent takes that action at the first
/// rollout step instead of its policy action. Rollout `m` draws from the
/// child streams `(t, agent, m)` whatever `first` is, so paired branches
/// share their randomness.
fn rollout_targets<M: ActionModel + ?Sized>(
    map: &GridMap,
    state: &WorldState,
    agent: usize,
    model: &M,
    k: &TransitionKernel,
    p: &McParams,
    streams: &Streams,
    first: Option<Action>,
) -> [f64; 4] {
    let goals: Vec<Cell> = (0..state.len()).map(|j| model.goal(j)).collect();
    let (ids, sub0) = sub_world(state, agent, &goals, p);
    let mut acc = [0.0; 4];
    for m in 0..p.rollouts {
        let rs = streams.child(Domain::Rollout, state.t, agent as u64, m as u64);
        let mut sub = sub0.clone();
        let mut hit = [0.0f64; 4];
        let mut decay = 1.0;
        for tau in 1..=p.horizon {
            decay *= p.xi;
            let actions: Vec<Action> = ids
                .iter()
                .enumerate()
                .map(|(s, &j)| match (tau, s, first) {
                    (1, 0, Some(a)) => a,
                    _ => model_argmax(model, map, j, sub.positions[s]),
                })
                .collect();
            let (next, out) = step(map, &sub, &actions, k, &rs).expect("rollout actions are adjacent");
            for e in EventKind::ALL {
                if out.events[0].contains(e) && hit[e as usize] == 0.0 {
                    hit[e as usize] = decay;
                }
            }
            sub = next;
        }
        for e in 0..4 {
            acc[e] += hit[e];
        }
    }
    acc.map(|v| (v / p.rollouts as f64).clamp(0.0, 1.0))
}

/// Event risk of `agent` under the local policy.
pub fn mc_event_risk<M: ActionModel + ?Sized>(
    map: &GridMap,
    state: &WorldState,
    agent: usize,
    model: &M,
    k: &TransitionKernel,
    p: &McParams,
    streams: &Streams,
) -> EventRisk {
    EventRisk(rollout_targets(map, state, agent, model, k, p, streams, None))
}

/// Risk without cloud help and relief from taking `cloud_action` first.
pub fn counterfactual_relief<M: ActionModel + ?Sized>(
    map: &GridMap,
    state: &WorldState,
    agent: usize,
    model: &M,
    cloud_action: Action,
    k: &TransitionKernel,
    p: &McParams,
    streams: &Streams,
) -> (EventRisk, ReliefScore) {
    let y0 = rollout_targets(map, state, agent, model, k, p, streams, None);
    let local = model_argmax(model, map, agent, state.positions[agent]);
    if cloud_action == local {
        return (EventRisk(y0), ReliefScore::default());
    }
    let y1 = rollout_targets(map, state, agent, model, k, p, streams, Some(cloud_action));
    let mut s = [0.0; 4];
    for e in 0..4 {
        s[e] = y0[e] - y1[e];
    }
    (EventRisk(y0), ReliefScore(s))
}

/// `D_KL(softmax(local) ‖ softmax(refined))` over the mask, in nats.
pub fn kl_gap(local: &ActionLogits, refined: &ActionLogits, mask: &LegalityMask) -> f64 {
    let p = masked_distribution(local, mask);
    let q = masked_distribution(refined, mask);
    let mut d = 0.0;
    for i in 0..5 {
        if p[i] > 0.0 {
            if q[i] <= 0.0 {
                return KL_CAP;
            }
            d += p[i] * (p[i] / q[i]).ln();
        }
    }
    d.clamp(0.0, KL_CAP)
}

/// Priority ranks (0 = highest) by successive sampling without replacement
/// with weights `max(s_i, eps)`. `epoch` keys the substream.
pub fn assign_priorities(scores: &[f64], eps: f64, streams: &Streams, epoch: u64) -> Vec<u32> {
    let mut rng = streams.stream(Domain::Priorities, epoch, 0, 0);
    let mut left: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s.max(eps))).collect();
    let mut rank = vec![0u32; scores.len()];
    let mut r = 0;
    while !left.is_empty() {
        let total: f64 = left.iter().map(|&(_, w)| w).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = left.len() - 1;
        for (k, &(_, w)) in left.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        let (i, _) = left.remove(pick);
        rank[i] = r;
        r += 1;
    }
    rank
}

/// `φ(κ)·p_dl·max(0, Σ ω ρ σ)·kl` with `φ(κ) = 1/(1+κ)`.
pub fn dl_score(kappa: u32, p_dl: f64, rho: &EventRisk, sigma: &ReliefScore, omega: &[f64; 4], kl: f64) -> f64 {
    let sum: f64 = (0..4).map(|e| omega[e] * rho.0[e] * sigma.0[e]).sum();
    p_dl * sum.max(0.0) * kl / (1.0 + kappa as f64)
}

/// Agents with the `c_dl` largest strictly positive scores, in id order.
pub fn select_dl(scores: &[f64], c_dl: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.0).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(c_dl);
    idx.sort_unstable();
    idx
}

pub fn dl_bit_length(peers: usize, b0: u64, b1: u64) -> u64 {
    b0 + b1 * peers as u64
}

pub fn dl_rate(bits: u64, n: u64) -> f64 {
    bits as f64 / n.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlGrant {
    pub agent: usize,
    pub score: f64,
    pub rate: f64,
    pub bits: u64,
    pub rbs: u32,
    pub success: bool,
}

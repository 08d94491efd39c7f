//! Windowed, budgeted central planner.
//!
//! Conflict windows are square boxes seeded by close pairs of agents known
//! to the server; overlapping boxes merge into one region. Inside a region
//! the agents are planned one after another with space-time A* over a short
//! reservation horizon, under several priority orderings, and the best joint
//! plan's first moves are returned.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use super::belief::{priority_masked_belief, BeliefMap, BlockedView};
use super::local::{model_argmax, ActionModel, LocalPolicy};
use crate::execution::Action;
use crate::map::{Cell, GridMap};
use crate::rng::{Domain, Streams};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    /// Side of the square window, odd.
    pub window: usize,
    /// Chebyshev distance at which two agents seed a window.
    pub proximity: u32,
    /// Reservation horizon in steps.
    pub horizon: usize,
    /// Wall-clock budget per call. Zero disables planning.
    pub tau: Duration,
    /// Extra orderings tried after the priority order.
    pub max_restarts: usize,
    /// Node expansions allowed per single-agent search.
    pub max_expansions: usize,
    /// Mass above which a higher-priority belief blocks a cell.
    pub theta_b: f64,
    /// Cost charged per horizon step an agent could not plan.
    pub truncation_penalty: u32,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            window: 9,
            proximity: 2,
            horizon: 4,
            tau: Duration::from_millis(100),
            max_restarts: 8,
            max_expansions: 4096,
            theta_b: 0.5,
            truncation_penalty: 10,
        }
    }
}

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Rect {
    pub fn around(map: &GridMap, center: Cell, side: usize) -> Rect {
        let r = (side / 2) as i32;
        Rect {
            x0: (center.x - r).max(0),
            y0: (center.y - r).max(0),
            x1: (center.x + r).min(map.width() as i32 - 1),
            y1: (center.y + r).min(map.height() as i32 - 1),
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x0 && c.x <= self.x1 && c.y >= self.y0 && c.y <= self.y1
    }

    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    pub fn area(&self) -> usize {
        ((self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)) as usize
    }
}

/// Union of overlapping windows and the known agents standing in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub boxes: Vec<Rect>,
    pub agents: Vec<usize>,
}

impl Region {
    pub fn contains(&self, c: Cell) -> bool {
        self.boxes.iter().any(|b| b.contains(c))
    }

    /// Number of distinct cells covered.
    pub fn cell_count(&self) -> usize {
        if self.boxes.len() == 1 {
            return self.boxes[0].area();
        }
        let mut cells = FxHashSet::default();
        for b in &self.boxes {
            for y in b.y0..=b.y1 {
                for x in b.x0..=b.x1 {
                    cells.insert((x, y));
                }
            }
        }
        cells.len()
    }
}

/// Read-only snapshot the planner works from.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub map: &'a GridMap,
    pub positions: &'a [Cell],
    pub priorities: &'a [u32],
    /// Agents whose state the server knows this step.
    pub known: &'a [bool],
    pub policy: &'a LocalPolicy,
    /// Beliefs of known agents, used to block cells near the region.
    pub beliefs: Option<&'a BeliefMap>,
}

impl PlanContext<'_> {
    fn local_action(&self, i: usize) -> Action {
        model_argmax(self.policy, self.map, i, self.positions[i])
    }

    fn intent(&self, i: usize) -> Cell {
        let p = self.positions[i];
        let t = self.local_action(i).apply(p);
        if self.map.is_free(t) {
            t
        } else {
            p
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Detects conflict windows among known agents.
///
/// Every pair of known agents within `proximity` seeds a window centred on
/// the contested cell (same predicted target), on the lower agent's cell
/// (predicted swap), or on the pair's midpoint otherwise.
pub fn conflict_windows(ctx: &PlanContext, params: &PlannerParams) -> Vec<Region> {
    let known: Vec<usize> = (0..ctx.positions.len()).filter(|&i| ctx.known[i]).collect();
    let intents: FxHashMap<usize, Cell> = known.iter().map(|&i| (i, ctx.intent(i))).collect();
    let mut boxes: Vec<Rect> = Vec::new();
    let mut seen = FxHashSet::default();
    for (a, &i) in known.iter().enumerate() {
        for &j in &known[a + 1..] {
            let (pi, pj) = (ctx.positions[i], ctx.positions[j]);
            if pi.chebyshev(pj) > params.proximity {
                continue;
            }
            let (ti, tj) = (intents[&i], intents[&j]);
            let center = if ti == tj {
                ti
            } else if ti == pj && tj == pi {
                pi
            } else {
                Cell::new((pi.x + pj.x).div_euclid(2), (pi.y + pj.y).div_euclid(2))
            };
            let r = Rect::around(ctx.map, center, params.window);
            if seen.insert(r) {
                boxes.push(r);
            }
        }
    }
    let mut parent: Vec<usize> = (0..boxes.len()).collect();
    for a in 0..boxes.len() {
        for b in a + 1..boxes.len() {
            if boxes[a].overlaps(&boxes[b]) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Rect>)> = Vec::new();
    for (k, &b) in boxes.iter().enumerate() {
        let root = find(&mut parent, k);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, v)) => v.push(b),
            None => groups.push((root, vec![b])),
        }
    }
    groups
        .into_iter()
        .map(|(_, boxes)| {
            let mut region = Region { boxes, agents: Vec::new() };
            region.agents = known.iter().copied().filter(|&i| region.contains(ctx.positions[i])).collect();
            region
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    /// First move per planned agent, in region agent order.
    pub actions: Vec<(usize, Action)>,
    /// Orderings evaluated beyond the first.
    pub restarts: usize,
    /// The wall-clock budget ran out before all orderings were tried.
    pub exhausted: bool,
    /// Local argmax actions were returned instead of a plan.
    pub fallback: bool,
    pub cost: u64,
}

#[derive(Default)]
struct Reservations {
    vertex: FxHashSet<(Cell, usize)>,
    edge: FxHashSet<(Cell, Cell, usize)>,
}

impl Reservations {
    fn reserve(&mut self, path: &[Cell], horizon: usize) {
        for t in 0..=horizon {
            let c = path[t.min(path.len() - 1)];
            self.vertex.insert((c, t));
            if t >= 1 {
                let prev = path[(t - 1).min(path.len() - 1)];
                if prev != c {
                    self.edge.insert((prev, c, t));
                }
            }
        }
    }
}

struct AgentPlan {
    path: Vec<Cell>,
    cost: u64,
    /// Off-goal waits, each weighted by how early it happens. Breaks cost
    /// ties toward acting now rather than later, which keeps replanning
    /// every step from postponing the same manoeuvre forever.
    delay: u64,
}

struct SearchSpace<'a> {
    ctx: &'a PlanContext<'a>,
    region: &'a Region,
    params: &'a PlannerParams,
}

impl SearchSpace<'_> {
    fn dist(&self, agent: usize, c: Cell) -> u64 {
        self.ctx.policy.field(agent).get(c).map_or(self.ctx.map.len() as u64, u64::from)
    }

    /// Space-time A* to depth `h`. Terminal cost is the elapsed cost plus
    /// the remaining distance to the goal; waiting on the goal is free.
    /// Equal costs are ordered by delay.
    fn search(
        &self,
        agent: usize,
        h: usize,
        res: &Reservations,
        unplanned: &FxHashSet<Cell>,
        view: &BlockedView,
    ) -> Option<AgentPlan> {
        let ctx = self.ctx;
        let start = ctx.positions[agent];
        let goal = ctx.policy.goal(agent);
        let guide = model_argmax(ctx.policy, ctx.map, agent, start);
        let mut order: Vec<Action> = vec![guide];
        order.extend(Action::ALL.iter().copied().filter(|&a| a != guide));

        let mut nodes: Vec<(Cell, usize, u64, u64, usize)> = vec![(start, 0, 0, 0, usize::MAX)];
        let mut heap = BinaryHeap::new();
        let mut closed: FxHashSet<(Cell, usize)> = FxHashSet::default();
        let mut seq = 0u64;
        let h0 = self.dist(agent, start);
        heap.push(Reverse((h0, 0u64, h0, seq, 0usize)));
        let mut expansions = 0;
        while let Some(Reverse((_, _, _, _, id))) = heap.pop() {
            let (c, t, g, delay, _) = nodes[id];
            if !closed.insert((c, t)) {
                continue;
            }
            if t == h {
                let mut path = Vec::with_capacity(h + 1);
                let mut k = id;
                while k != usize::MAX {
                    path.push(nodes[k].0);
                    k = nodes[k].4;
                }
                path.reverse();
                return Some(AgentPlan { path, cost: g + self.dist(agent, c), delay });
            }
            expansions += 1;
            if expansions > self.params.max_expansions {
                return None;
            }
            let nt = t + 1;
            for &a in &order {
                let nc = a.apply(c);
                if nc != c && (!ctx.map.is_free(nc) || !self.region.contains(nc)) {
                    continue;
                }
                if closed.contains(&(nc, nt)) || res.vertex.contains(&(nc, nt)) || res.edge.contains(&(nc, c, nt)) {
                    continue;
                }
                if nt == 1 && nc != start && unplanned.contains(&nc) {
                    continue;
                }
                if nc != start && view.is_blocked(nt, nc) {
                    continue;
                }
                let step = if a == Action::Stay && c == goal { 0 } else { 1 };
                let ng = g + step;
                let nd = if a == Action::Stay && c != goal { delay + (h - t) as u64 } else { delay };
                let hv = self.dist(agent, nc);
                seq += 1;
                nodes.push((nc, nt, ng, nd, id));
                heap.push(Reverse((ng + hv, nd, hv, seq, nodes.len() - 1)));
            }
        }
        None
    }

    /// Plans all agents in `order`.
    fn plan_ordering(&self, order: &[usize], views: &FxHashMap<usize, BlockedView>) -> OrderingPlan {
        let mut res = Reservations::default();
        let mut unplanned: FxHashSet<Cell> = order.iter().map(|&i| self.ctx.positions[i]).collect();
        let mut firsts = Vec::with_capacity(order.len());
        let mut failures = 0;
        let mut total = 0u64;
        let mut delay = 0u64;
        let w = self.params.horizon.max(1);
        for &i in order {
            let start = self.ctx.positions[i];
            unplanned.remove(&start);
            let view = &views[&i];
            let mut planned = None;
            for h in (1..=w).rev() {
                if let Some(p) = self.search(i, h, &res, &unplanned, view) {
                    let penalty = (w - h) as u64 * self.params.truncation_penalty as u64;
                    planned = Some((p, penalty));
                    break;
                }
            }
            match planned {
                Some((p, penalty)) => {
                    res.reserve(&p.path, w);
                    total += p.cost + penalty;
                    delay += p.delay;
                    firsts.push((i, p.path[1]));
                }
                None => {
                    failures += 1;
                    res.reserve(&[start], w);
                    total += self.dist(i, start) + (w as u64) * self.params.truncation_penalty as u64;
                    delay += (w * (w + 1) / 2) as u64;
                    firsts.push((i, start));
                }
            }
        }
        OrderingPlan { firsts, failures, cost: total, delay }
    }
}

/// Joint first moves of one ordering, the number of agents with no plan
/// at all, and the summed cost and delay.
struct OrderingPlan {
    firsts: Vec<(usize, Cell)>,
    failures: usize,
    cost: u64,
    delay: u64,
}

impl OrderingPlan {
    fn key(&self) -> (usize, u64, u64) {
        (self.failures, self.cost, self.delay)
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Checks that first moves have no shared target, no swap and no move into
/// an agent that stays.
pub fn intents_conflict_free(positions: &[Cell], moves: &[(usize, Cell)]) -> bool {
    let mut targets = FxHashSet::default();
    for &(_, t) in moves {
        if !targets.insert(t) {
            return false;
        }
    }
    let from: FxHashMap<Cell, Cell> = moves.iter().map(|&(i, t)| (positions[i], t)).collect();
    for &(i, t) in moves {
        let p = positions[i];
        if t == p {
            continue;
        }
        if let Some(&other) = from.get(&t) {
            if other == p || other == t {
                return false;
            }
        }
    }
    true
}

/// Plans the agents of `region`.
///
/// `t` keys the random orderings. Orderings are the priority order first,
/// then every permutation when there are few enough agents, else random
/// shuffles. The best plan has the fewest unplanned agents, then the lowest
/// cost, then the least delay, with ties going to the earlier ordering.
pub fn windowed_central_plan(
    ctx: &PlanContext,
    region: &Region,
    params: &PlannerParams,
    streams: &Streams,
    t: u64,
) -> PlanOutcome {
    let agents = &region.agents;
    let local = || PlanOutcome {
        actions: agents.iter().map(|&i| (i, ctx.local_action(i))).collect(),
        restarts: 0,
        exhausted: false,
        fallback: true,
        cost: 0,
    };
    if params.tau.is_zero() || agents.is_empty() {
        return local();
    }
    let started = Instant::now();

    let mut base: Vec<usize> = agents.clone();
    base.sort_by_key(|&i| (ctx.priorities[i], i));
    let mut orderings = vec![base.clone()];
    let perm_limit = params.max_restarts + 1;
    let small = (1..=base.len()).try_fold(1usize, |acc, k| acc.checked_mul(k).filter(|&v| v <= perm_limit)).is_some();
    if small {
        orderings.extend(permutations(&base).into_iter().filter(|p| *p != base));
    } else {
        let mut rng = streams.stream(Domain::Planner, t, base[0] as u64, agents.len() as u64);
        for _ in 0..params.max_restarts {
            let mut p = base.clone();
            p.shuffle(&mut rng);
            orderings.push(p);
        }
    }

    let in_v: Vec<usize> = agents.clone();
    let views: FxHashMap<usize, BlockedView> = agents
        .iter()
        .map(|&i| {
            let v = match ctx.beliefs {
                Some(b) => priority_masked_belief(b, ctx.priorities, i, params.theta_b, &in_v),
                None => BlockedView { blocked: vec![FxHashSet::default(); params.horizon] },
            };
            (i, v)
        })
        .collect();

    let space = SearchSpace { ctx, region, params };
    let mut best: Option<OrderingPlan> = None;
    let mut evaluated = 0;
    let mut exhausted = false;
    for (k, ord) in orderings.iter().enumerate() {
        if k > 0 && started.elapsed() >= params.tau {
            exhausted = true;
            break;
        }
        let cand = space.plan_ordering(ord, &views);
        evaluated += 1;
        let better = best.as_ref().is_none_or(|b| cand.key() < b.key());
        if better {
            best = Some(cand);
        }
    }
    let OrderingPlan { firsts, failures, cost, .. } = best.expect("at least one ordering");
    if failures > 0 {
        let mut out = local();
        out.restarts = evaluated - 1;
        out.exhausted = exhausted;
        return out;
    }
    assert!(intents_conflict_free(ctx.positions, &firsts), "planner produced conflicting intents");
    let mut actions: Vec<(usize, Action)> = firsts
        .iter()
        .map(|&(i, c)| (i, Action::between(ctx.positions[i], c).expect("adjacent move")))
        .collect();
    actions.sort_by_key(|&(i, _)| agents.iter().position(|&a| a == i));
    PlanOutcome { actions, restarts: evaluated - 1, exhausted, fallback: false, cost }
}

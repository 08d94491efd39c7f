//! Grid A* and breadth-first distance fields.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::execution::Action;
use crate::map::{manhattan, Cell, GridMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("goal {goal} is unreachable from {start}")]
    Unreachable { start: Cell, goal: Cell },
    #[error("{0} is not a free cell")]
    NotFree(Cell),
}

/// Shortest 4-connected path, start included.
///
/// Ties are broken by f, then h, then the direction of the last move
/// (up, down, left, right), then insertion order. A node is closed on its
/// first expansion.
pub fn astar(map: &GridMap, start: Cell, goal: Cell) -> Result<Vec<Cell>, PathError> {
    for c in [start, goal] {
        if !map.is_free(c) {
            return Err(PathError::NotFree(c));
        }
    }
    let n = map.len();
    let idx = |c: Cell| map.index(c).expect("free cell");
    let mut g = vec![u32::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    g[idx(start)] = 0;
    heap.push(Reverse((manhattan(start, goal), manhattan(start, goal), 0u8, seq, idx(start))));
    while let Some(Reverse((_, _, _, _, u))) = heap.pop() {
        if closed[u] {
            continue;
        }
        closed[u] = true;
        let c = map.cell_at(u);
        if c == goal {
            let mut path = vec![c];
            let mut v = u;
            while parent[v] != usize::MAX {
                v = parent[v];
                path.push(map.cell_at(v));
            }
            path.reverse();
            return Ok(path);
        }
        for (d, a) in Action::ALL[1..].iter().enumerate() {
            let nc = a.apply(c);
            if !map.is_free(nc) {
                continue;
            }
            let v = idx(nc);
            let ng = g[u] + 1;
            if closed[v] || ng >= g[v] {
                continue;
            }
            g[v] = ng;
            parent[v] = u;
            seq += 1;
            let h = manhattan(nc, goal);
            heap.push(Reverse((ng + h, h, d as u8, seq, v)));
        }
    }
    Err(PathError::Unreachable { start, goal })
}

/// Breadth-first distances to a goal over free cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    goal: Cell,
    width: usize,
    height: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn new(map: &GridMap, goal: Cell) -> Self {
        let mut dist = vec![u32::MAX; map.len()];
        let mut q = VecDeque::new();
        if let Some(i) = map.index(goal).filter(|_| map.is_free(goal)) {
            dist[i] = 0;
            q.push_back(goal);
        }
        while let Some(c) = q.pop_front() {
            let d = dist[map.index(c).unwrap()];
            for nc in map.free_neighbors(c) {
                let j = map.index(nc).unwrap();
                if dist[j] == u32::MAX {
                    dist[j] = d + 1;
                    q.push_back(nc);
                }
            }
        }
        Self { goal, width: map.width(), height: map.height(), dist }
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width || c.y as usize >= self.height {
            return None;
        }
        let d = self.dist[c.y as usize * self.width + c.x as usize];
        (d != u32::MAX).then_some(d)
    }

    /// First move (in up, down, left, right order) that lowers the distance.
    pub fn descend(&self, c: Cell) -> Option<Action> {
        let d = self.get(c)?;
        if d == 0 {
            return None;
        }
        Action::ALL[1..].iter().copied().find(|a| self.get(a.apply(c)) == Some(d - 1))
    }

    /// The descent path from `c` to the goal, start included.
    pub fn path_from(&self, c: Cell) -> Option<Vec<Cell>> {
        self.get(c)?;
        let mut path = vec![c];
        let mut cur = c;
        while let Some(a) = self.descend(cur) {
            cur = a.apply(cur);
            path.push(cur);
        }
        Some(path)
    }
}

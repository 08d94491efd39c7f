#![allow(dead_code)]

pub mod oracles;
pub mod parsing;
pub mod planning;

use std::collections::{HashSet, VecDeque};
use std::path::PathBuf;

use mapf_airsim::map::{parse_map, Cell, GridMap};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_map(stem: &str) -> GridMap {
    parse_map(&std::fs::read(fixture(&format!("{stem}.map"))).unwrap()).unwrap()
}

/// Plain BFS distance over 4-connected free cells.
pub fn bfs_distance(map: &GridMap, from: Cell, to: Cell) -> Option<u32> {
    if !map.is_free(from) || !map.is_free(to) {
        return None;
    }
    let mut seen = HashSet::from([from]);
    let mut q = VecDeque::from([(from, 0u32)]);
    while let Some((c, d)) = q.pop_front() {
        if c == to {
            return Some(d);
        }
        for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
            let n = Cell::new(c.x + dx, c.y + dy);
            if map.is_free(n) && seen.insert(n) {
                q.push_back((n, d + 1));
            }
        }
    }
    None
}

/// Distinct cells, all free, and no pair exchanged places.
pub fn check_safe(map: &GridMap, prev: &[Cell], next: &[Cell]) -> Result<(), String> {
    let mut seen = HashSet::new();
    for (i, &c) in next.iter().enumerate() {
        if !map.is_free(c) {
            return Err(format!("agent {i} on blocked cell {c:?}"));
        }
        if !seen.insert(c) {
            return Err(format!("two agents on {c:?}"));
        }
        let d = (c.x - prev[i].x).abs() + (c.y - prev[i].y).abs();
        if d > 1 {
            return Err(format!("agent {i} jumped from {:?} to {c:?}", prev[i]));
        }
    }
    for i in 0..next.len() {
        for j in i + 1..next.len() {
            if next[i] != prev[i] && next[i] == prev[j] && next[j] == prev[i] {
                return Err(format!("agents {i} and {j} swapped"));
            }
        }
    }
    Ok(())
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

//! Runtime scaling summaries from timed metrics rows.

use std::collections::BTreeMap;

use super::metrics::MetricsRecord;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Local,
    Cloud,
    Comm,
    Total,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Local, Phase::Cloud, Phase::Comm, Phase::Total];

    fn of(self, r: &MetricsRecord) -> Option<f64> {
        match self {
            Phase::Local => r.t_local_ms,
            Phase::Cloud => r.t_cloud_ms,
            Phase::Comm => r.t_comm_ms,
            Phase::Total => r.t_total_ms(),
        }
    }
}

/// What the records are grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAxis {
    Agents,
    /// Free-form map label; points are ordered by map name.
    Map,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub key: String,
    pub x: f64,
    pub runs: usize,
    /// Mean per-step ms for local, cloud, comm and total.
    pub mean_ms: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSummary {
    pub points: Vec<ScalingPoint>,
    /// `t(2x)/t(x)` per phase from a log-log least-squares fit, for the
    /// agent axis; for maps, the ratio of the last point to the first.
    pub growth: [f64; 4],
}

impl ScalingSummary {
    pub fn ratio(&self, phase: Phase) -> f64 {
        self.growth[phase as usize]
    }

    /// Mean of `phase` at the last point over the first.
    pub fn end_ratio(&self, phase: Phase) -> f64 {
        let (a, b) = (&self.points[0], &self.points[self.points.len() - 1]);
        ratio(b.mean_ms[phase as usize], a.mean_ms[phase as usize])
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

/// Groups records along `axis` and fits growth ratios.
pub fn profile_runtime(records: &[MetricsRecord], axis: ScaleAxis) -> Result<ScalingSummary, HarnessError> {
    let mut groups: BTreeMap<(u64, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        if Phase::ALL.iter().any(|p| p.of(r).is_none()) {
            return Err(HarnessError::Profile(format!("record for seed {} has no phase timings", r.seed)));
        }
        let key = match axis {
            ScaleAxis::Agents => (r.agents as u64, String::new()),
            ScaleAxis::Map => (0, r.map.clone()),
        };
        groups.entry(key).or_default().push(r);
    }
    if groups.len() < 2 {
        return Err(HarnessError::Profile(format!("need at least two distinct points, got {}", groups.len())));
    }
    let points: Vec<ScalingPoint> = groups
        .into_iter()
        .map(|((n, name), rs)| {
            let mut mean_ms = [0.0; 4];
            for p in Phase::ALL {
                mean_ms[p as usize] = rs.iter().map(|r| p.of(r).unwrap_or(0.0)).sum::<f64>() / rs.len() as f64;
            }
            let key = if name.is_empty() { n.to_string() } else { name };
            ScalingPoint { key, x: n as f64, runs: rs.len(), mean_ms }
        })
        .collect();
    let mut growth = [1.0; 4];
    for p in Phase::ALL {
        let k = p as usize;
        growth[k] = match axis {
            ScaleAxis::Map => ratio(points[points.len() - 1].mean_ms[k], points[0].mean_ms[k]),
            ScaleAxis::Agents => {
                let ys: Vec<f64> = points.iter().map(|pt| pt.mean_ms[k]).collect();
                if ys.iter().all(|&y| y == ys[0]) {
                    1.0
                } else if ys.iter().any(|&y| y <= 0.0) {
                    f64::NAN
                } else {
                    let xs: Vec<f64> = points.iter().map(|pt| pt.x.ln()).collect();
                    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
                    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
                    let my = ls.iter().sum::<f64>() / ls.len() as f64;
                    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
                    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
                    2f64.powf(sxy / sxx)
                }
            }
        };
    }
    Ok(ScalingSummary { points, growth })
}

use mapf_airsim::map::Cell;
use mapf_airsim::uplink::{coverage_value, RiskCenter};
use rand::Rng;

pub struct CoverageInstance {
    pub centers: Vec<RiskCenter>,
    pub nn: Vec<Vec<usize>>,
    pub p: Vec<f64>,
    pub k: usize,
}

impl CoverageInstance {
    /// At most 8 candidates, 6 centers and K = 3.
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let centers =
            (0..m).map(|u| RiskCenter { cell: Cell::new(u as i32, 0), weight: rng.random_range(0.1..3.0) }).collect();
        let nn = (0..m).map(|_| (0..n).filter(|_| rng.random_bool(0.4)).collect()).collect();
        let p = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        Self { centers, nn, p, k: rng.random_range(1..=3) }
    }

    pub fn value(&self, s: &[usize]) -> f64 {
        coverage_value(s, &self.centers, &self.nn, &self.p)
    }

    fn subset(&self, mask: u32) -> Vec<usize> {
        (0..self.p.len()).filter(|i| mask >> i & 1 == 1).collect()
    }

    /// Best value over every subset of size at most k.
    pub fn brute_force(&self) -> f64 {
        (0u32..(1 << self.p.len()))
            .filter(|m| m.count_ones() as usize <= self.k)
            .map(|m| self.value(&self.subset(m)))
            .fold(0.0, f64::max)
    }

    /// Monotonicity and diminishing returns over every chain A ⊆ B, x ∉ B.
    pub fn check_submodular(&self) -> Result<(), String> {
        let n = self.p.len();
        for b_mask in 0u32..(1 << n) {
            let b = self.subset(b_mask);
            let fb = self.value(&b);
            for a_mask in (0u32..(1 << n)).filter(|a| a & !b_mask == 0) {
                let a = self.subset(a_mask);
                let fa = self.value(&a);
                if fa > fb + 1e-12 {
                    return Err(format!("not monotone: {a:?} vs {b:?}"));
                }
                for x in (0..n).filter(|x| b_mask >> x & 1 == 0) {
                    let ax: Vec<usize> = a.iter().copied().chain([x]).collect();
                    let bx: Vec<usize> = b.iter().copied().chain([x]).collect();
                    if self.value(&ax) - fa < self.value(&bx) - fb - 1e-12 {
                        return Err(format!("gain of {x} grows from {a:?} to {b:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// KL(softmax a ‖ softmax b) over the masked entries, in log-space:
/// Σ p (a − b) − LSE(a) + LSE(b).
pub fn kl_logspace(a: &[f64; 5], b: &[f64; 5], mask: &[bool; 5]) -> f64 {
    let lse = |v: &[f64; 5]| {
        let m = (0..5).filter(|&i| mask[i]).map(|i| v[i]).fold(f64::NEG_INFINITY, f64::max);
        m + (0..5).filter(|&i| mask[i]).map(|i| (v[i] - m).exp()).sum::<f64>().ln()
    };
    let (za, zb) = (lse(a), lse(b));
    (0..5).filter(|&i| mask[i]).map(|i| (a[i] - za).exp() * ((a[i] - za) - (b[i] - zb))).sum()
}

//! Link budget, SNR field and the finite-blocklength packet-error model.

use std::f64::consts::{LN_2, SQRT_2};
use std::io::Write;

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::map::{Cell, GridMap};
use crate::rng::{Domain, Streams};

/// Thermal noise power spectral density, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// `(D, B, F)` of `D·log10(d) + B + F·log10(f0)` with `d` in meters and
/// `f0` in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossCoeffs {
    pub d: f64,
    pub b: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudgetParams {
    pub f0_hz: f64,
    pub rb_bandwidth_hz: f64,
    pub t_pkt_s: f64,
    pub eta: f64,
    pub p_tx_ul_dbm: f64,
    pub p_tx_dl_dbm: f64,
    pub noise_figure_db: f64,
    pub los: PathLossCoeffs,
    pub nlos: PathLossCoeffs,
    pub shadow_sigma_db: f64,
    pub cell_size_m: f64,
    /// Draw one shadowing offset per cell when the radio map is built
    /// instead of one per packet.
    pub frozen_shadowing: bool,
}

impl Default for LinkBudgetParams {
    fn default() -> Self {
        // InH-style constants rewritten for f0 in Hz:
        // 32.4 + 20 log10(f_GHz) = -147.6 + 20 log10(f_Hz), and likewise for NLoS.
        Self {
            f0_hz: 2.4e9,
            rb_bandwidth_hz: 180e3,
            t_pkt_s: 0.05,
            eta: 0.8,
            p_tx_ul_dbm: 20.0,
            p_tx_dl_dbm: 20.0,
            noise_figure_db: 7.0,
            los: PathLossCoeffs { d: 17.3, b: 32.4 - 20.0 * 9.0, f: 20.0 },
            nlos: PathLossCoeffs { d: 38.3, b: 17.3 - 24.9 * 9.0, f: 24.9 },
            shadow_sigma_db: 3.0,
            cell_size_m: 1.0,
            frozen_shadowing: false,
        }
    }
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.f0_hz > 0.0, "f0 must be positive"),
            (self.rb_bandwidth_hz > 0.0, "RB bandwidth must be positive"),
            (self.t_pkt_s > 0.0, "packet duration must be positive"),
            (self.eta > 0.0 && self.eta <= 1.0, "eta must lie in (0, 1]"),
            (self.shadow_sigma_db >= 0.0, "shadowing sigma must be non-negative"),
            (self.cell_size_m > 0.0, "cell size must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }

    /// Channel uses of one RB over one control step (before rounding).
    pub fn uses_per_rb(&self) -> f64 {
        self.eta * self.rb_bandwidth_hz * self.t_pkt_s
    }
}

fn raw_loss(d: f64, f0: f64, c: &PathLossCoeffs) -> f64 {
    c.d * d.log10() + c.b + c.f * f0.log10()
}

/// Large-scale path loss in dB. Distances below 1 m are clamped to 1 m.
/// The NLoS branch is floored at the LoS loss, so an obstructed link is
/// never better than a clear one.
pub fn path_loss(d: f64, f0: f64, los: bool, params: &LinkBudgetParams) -> f64 {
    let d = d.max(1.0);
    let l = raw_loss(d, f0, &params.los);
    if los {
        l
    } else {
        raw_loss(d, f0, &params.nlos).max(l)
    }
}

/// Noise power on one RB in dBm.
pub fn noise_power(rb_bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * rb_bandwidth_hz.log10() + noise_figure_db
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-cell large-scale UL/DL SNR around a single access point.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    width: usize,
    height: usize,
    pub ap: Cell,
    pub snr_ul_db: Vec<f64>,
    pub snr_dl_db: Vec<f64>,
    pub los: Vec<bool>,
}

impl RadioMap {
    fn idx(&self, c: Cell) -> usize {
        debug_assert!(c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width);
        c.y as usize * self.width + c.x as usize
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ul_db(&self, c: Cell) -> f64 {
        self.snr_ul_db[self.idx(c)]
    }

    pub fn dl_db(&self, c: Cell) -> f64 {
        self.snr_dl_db[self.idx(c)]
    }

    pub fn is_los(&self, c: Cell) -> bool {
        self.los[self.idx(c)]
    }

    /// CSV dump: `x,y,snr_ul_db,snr_dl_db,los`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "snr_ul_db", "snr_dl_db", "los"])?;
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    format!("{:.6}", self.snr_ul_db[i]),
                    format!("{:.6}", self.snr_dl_db[i]),
                    u8::from(self.los[i]).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Whether the segment between the centers of `a` and `b` crosses no
/// obstacle. Uses a supercover walk: when the segment passes exactly
/// through a grid corner, both cells beside the corner are tested.
/// The endpoints themselves are not tested.
pub fn line_of_sight(map: &GridMap, a: Cell, b: Cell) -> bool {
    let (nx, ny) = ((b.x - a.x).abs() as i64, (b.y - a.y).abs() as i64);
    let (sx, sy) = ((b.x - a.x).signum(), (b.y - a.y).signum());
    let (mut x, mut y) = (a.x, a.y);
    let (mut ix, mut iy) = (0i64, 0i64);
    let blocked = |c: Cell| c != b && c != a && !map.is_free(c);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            if blocked(Cell::new(x + sx, y)) || blocked(Cell::new(x, y + sy)) {
                return false;
            }
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        if blocked(Cell::new(x, y)) {
            return false;
        }
    }
    true
}

/// Builds the large-scale SNR field. Shadowing is not part of the stored
/// field unless `params.frozen_shadowing` is set, in which case `streams`
/// supplies one offset per cell.
pub fn build_radio_map(map: &GridMap, ap: Cell, params: &LinkBudgetParams) -> RadioMap {
    build_radio_map_with(map, ap, params, None)
}

pub fn build_radio_map_with(
    map: &GridMap,
    ap: Cell,
    params: &LinkBudgetParams,
    streams: Option<&Streams>,
) -> RadioMap {
    let noise = noise_power(params.rb_bandwidth_hz, params.noise_figure_db);
    let n = map.len();
    let (mut ul, mut dl, mut los) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let c = map.cell_at(i);
        let dx = (c.x - ap.x) as f64 * params.cell_size_m;
        let dy = (c.y - ap.y) as f64 * params.cell_size_m;
        let d = (dx * dx + dy * dy).sqrt();
        let clear = line_of_sight(map, ap, c);
        let loss = path_loss(d, params.f0_hz, clear, params);
        let shadow = match streams {
            Some(s) if params.frozen_shadowing && params.shadow_sigma_db > 0.0 => {
                let mut rng = s.stream(Domain::Shadowing, i as u64, 0, 0);
                params.shadow_sigma_db * standard_normal_quantile(open_unit(&mut rng))
            }
            _ => 0.0,
        };
        ul.push(params.p_tx_ul_dbm - loss - noise + shadow);
        dl.push(params.p_tx_dl_dbm - loss - noise + shadow);
        los.push(clear);
    }
    RadioMap { width: map.width(), height: map.height(), ap, snr_ul_db: ul, snr_dl_db: dl, los }
}

/// Shannon capacity in bits per channel use.
pub fn capacity(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// AWGN channel dispersion in bits² per channel use.
pub fn dispersion(gamma: f64) -> f64 {
    let log2e = 1.0 / LN_2;
    (1.0 - (1.0 + gamma).powi(-2)) * log2e * log2e
}

/// Gaussian tail probability Q(x) = P(Z > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Integer channel uses for `m` RBs, at least 1.
pub fn blocklength(m: u32, params: &LinkBudgetParams) -> u64 {
    ((m as f64 * params.uses_per_rb()).floor() as u64).max(1)
}

/// Normal-approximation block error probability.
pub fn p_loss(gamma: f64, rate: f64, n: u64) -> f64 {
    let c = capacity(gamma);
    let v = dispersion(gamma);
    if v <= 0.0 {
        return if rate < c {
            0.0
        } else if rate > c {
            1.0
        } else {
            0.5
        };
    }
    q_function((c - rate) / (v / n as f64).sqrt()).clamp(0.0, 1.0)
}

pub fn p_succ(gamma: f64, rate: f64, n: u64) -> f64 {
    1.0 - p_loss(gamma, rate, n)
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1): 53 random bits offset by half a step.
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draws one packet outcome. Exactly two draws are consumed: the shadowing
/// offset (even when `shadow_sigma_db` is zero) and the Bernoulli trial.
pub fn sample_packet<R: Rng + ?Sized>(
    gamma_db: f64,
    rate: f64,
    n: u64,
    shadow_sigma_db: f64,
    rng: &mut R,
) -> bool {
    let u_shadow = open_unit(rng);
    let u_trial: f64 = rng.random();
    let offset = if shadow_sigma_db > 0.0 {
        shadow_sigma_db * standard_normal_quantile(u_shadow)
    } else {
        0.0
    };
    u_trial < p_succ(db_to_linear(gamma_db + offset), rate, n)
}

/// One modulation-and-coding entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub rate: f64,
    pub min_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl Default for McsTable {
    /// Eight rates spaced geometrically from 0.2 to 4.0 bits/use; each
    /// threshold is the SNR at which capacity equals the rate.
    fn default() -> Self {
        let entries = (0..8)
            .map(|k| {
                let rate = 0.2 * 20f64.powf(k as f64 / 7.0);
                McsEntry { rate, min_snr_db: linear_to_db(2f64.powf(rate) - 1.0) }
            })
            .collect();
        Self { entries }
    }
}

impl McsTable {
    pub fn new(mut entries: Vec<McsEntry>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("MCS table must not be empty".into());
        }
        if entries.iter().any(|e| !(e.rate > 0.0)) {
            return Err("MCS rates must be positive".into());
        }
        entries.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    /// Largest rate whose block error at `(gamma, n)` meets `target`, else the
    /// smallest rate.
    pub fn select_rate(&self, gamma: f64, n: u64, target: f64) -> f64 {
        self.entries
            .iter()
            .rev()
            .find(|e| p_loss(gamma, e.rate, n) <= target)
            .unwrap_or(&self.entries[0])
            .rate
    }
}

/// Resource-block budget per control step.
#[derive(Debug, Clone, PartialEq)]
pub struct CommBudget {
    pub total_rbs: u32,
    pub c_ul: u32,
    pub c_dl: u32,
    pub mcs: McsTable,
}

impl CommBudget {
    pub fn validate(&self) -> Result<(), String> {
        if self.c_ul < 1 || self.c_ul > self.total_rbs {
            return Err(format!("C_UL must lie in [1, {}], got {}", self.total_rbs, self.c_ul));
        }
        if self.c_dl < 1 {
            return Err("C_DL must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    fn params() -> LinkBudgetParams {
        LinkBudgetParams::default()
    }

    #[test]
    fn path_loss_at_one_meter() {
        let p = params();
        let expect = p.los.b + p.los.f * p.f0_hz.log10();
        assert!((path_loss(1.0, p.f0_hz, true, &p) - expect).abs() < 1e-12);
        assert!((path_loss(0.2, p.f0_hz, true, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn path_loss_doubling_distance() {
        let p = params();
        let d = path_loss(20.0, p.f0_hz, true, &p) - path_loss(10.0, p.f0_hz, true, &p);
        assert!((d - p.los.d * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn default_constants_match_ghz_form() {
        let p = params();
        let ghz = 32.4 + 20.0 * 2.4f64.log10() + 17.3 * 10f64.log10();
        assert!((path_loss(10.0, p.f0_hz, true, &p) - ghz).abs() < 1e-9);
    }

    #[test]
    fn nlos_never_below_los() {
        let p = params();
        for d in [0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0] {
            assert!(path_loss(d, p.f0_hz, false, &p) >= path_loss(d, p.f0_hz, true, &p));
        }
    }

    #[test]
    fn noise_power_examples() {
        assert_eq!(noise_power(1.0, 0.0), -174.0);
        // log10(1.8e5) = log10(1.8) + 5 = 0.2552725051033060 + 5
        let expect = -174.0 + 52.552725051033060;
        assert!((noise_power(1.8e5, 0.0) - expect).abs() < 1e-12);
        assert!((noise_power(1.8e5, 3.0) - noise_power(1.8e5, 0.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_and_dispersion() {
        assert_eq!(capacity(0.0), 0.0);
        assert_eq!(capacity(1.0), 1.0);
        assert_eq!(capacity(3.0), 2.0);
        assert_eq!(dispersion(0.0), 0.0);
        let limit = (1.0 / LN_2).powi(2);
        assert!((limit - 2.0813689810056077).abs() < 1e-12);
        assert!((dispersion(1e9) - limit).abs() < 1e-9);
        let mut prev = 0.0;
        for k in 0..2000 {
            let v = dispersion(k as f64 * 0.05);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn blocklength_examples() {
        let mut p = params();
        p.eta = 1.0;
        p.rb_bandwidth_hz = 1000.0;
        p.t_pkt_s = 0.1;
        assert_eq!(blocklength(1, &p), 100);
        assert_eq!(blocklength(2, &p), 200);
        p.eta = 0.5;
        assert_eq!(blocklength(1, &p), 50);
        p.t_pkt_s = 1e-6;
        assert_eq!(blocklength(1, &p), 1);
        assert_eq!(blocklength(1, &params()), 7200);
    }

    #[test]
    fn p_loss_at_capacity_is_half() {
        for g in [0.1, 1.0, 7.0, 100.0] {
            assert!((p_loss(g, capacity(g), 300) - 0.5).abs() < 1e-12);
            assert!((p_succ(g, capacity(g), 300) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn p_loss_zero_dispersion_edge() {
        assert_eq!(p_loss(0.0, 0.5, 100), 1.0);
        assert_eq!(p_succ(0.0, 0.5, 100), 0.0);
    }

    #[test]
    fn p_loss_decreases_with_blocklength() {
        let mut prev = 1.0;
        for k in 1..=32 {
            let v = p_loss(1.0, 0.8, 50 * k);
            assert!(v < prev, "n = {}", 50 * k);
            prev = v;
        }
    }

    #[test]
    fn p_succ_tiny_rate() {
        assert_eq!(p_succ(10.0, 1e-6, 1000), 1.0);
    }

    #[test]
    fn sample_packet_always_succeeds_at_tiny_rate() {
        let mut rng = Streams::new(1).stream(Domain::Channel, 0, 0, 0);
        assert!((0..1000).all(|_| sample_packet(10.0, 1e-6, 1000, 0.0, &mut rng)));
    }

    #[test]
    fn sample_packet_is_deterministic() {
        let s = Streams::new(9);
        let run = || {
            let mut rng = s.stream(Domain::Channel, 1, 2, 3);
            (0..64).map(|_| sample_packet(0.0, 1.0, 100, 3.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sample_packet_consumes_two_draws() {
        let s = Streams::new(5);
        let mut a = s.stream(Domain::Channel, 0, 0, 0);
        let mut b = s.stream(Domain::Channel, 0, 0, 0);
        sample_packet(3.0, 1.0, 100, 0.0, &mut a);
        let _: u64 = b.random();
        let _: u64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn los_on_open_map() {
        let m = GridMap::open(6, 5);
        let r = build_radio_map(&m, Cell::new(2, 2), &params());
        assert!(r.los.iter().all(|&l| l));
        let best = r.snr_dl_db.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(r.dl_db(Cell::new(2, 2)), best);
    }

    #[test]
    fn los_hand_traced_fixture() {
        // AP at (0,2). The ray to (4,0) visits (0,2) (1,2) (1,1) (2,1) (3,1) (3,0) (4,0).
        let wall_off_ray = GridMap::from_rows(&[".....", ".....", "..@..", ".....", "....."]).unwrap();
        assert!(line_of_sight(&wall_off_ray, Cell::new(0, 2), Cell::new(4, 0)));
        assert!(!line_of_sight(&wall_off_ray, Cell::new(0, 2), Cell::new(4, 2)));
        let wall_on_ray = GridMap::from_rows(&[".....", "..@..", ".....", ".....", "....."]).unwrap();
        assert!(!line_of_sight(&wall_on_ray, Cell::new(0, 2), Cell::new(4, 0)));
        let r = build_radio_map(&wall_off_ray, Cell::new(0, 2), &params());
        assert!(!r.is_los(Cell::new(4, 2)));
        assert!(r.is_los(Cell::new(4, 0)));
    }

    #[test]
    fn los_corner_crossing_tests_both_sides() {
        let m = GridMap::from_rows(&["..", "@."]).unwrap();
        assert!(!line_of_sight(&m, Cell::new(0, 0), Cell::new(1, 1)));
    }

    #[test]
    fn snr_non_increasing_along_los_ray() {
        let m = GridMap::open(40, 3);
        let r = build_radio_map(&m, Cell::new(0, 1), &params());
        for x in 1..40 {
            assert!(r.dl_db(Cell::new(x, 1)) <= r.dl_db(Cell::new(x - 1, 1)));
            assert!(r.ul_db(Cell::new(x, 1)) <= r.ul_db(Cell::new(x - 1, 1)));
        }
    }

    #[test]
    fn frozen_shadowing_is_seeded() {
        let m = GridMap::open(8, 8);
        let p = LinkBudgetParams { frozen_shadowing: true, ..params() };
        let a = build_radio_map_with(&m, Cell::new(0, 0), &p, Some(&Streams::new(3)));
        let b = build_radio_map_with(&m, Cell::new(0, 0), &p, Some(&Streams::new(3)));
        let plain = build_radio_map(&m, Cell::new(0, 0), &p);
        assert_eq!(a, b);
        assert_ne!(a.snr_dl_db, plain.snr_dl_db);
    }

    #[test]
    fn radio_csv_dump() {
        let m = GridMap::from_rows(&[".@"]).unwrap();
        let r = build_radio_map(&m, Cell::new(0, 0), &params());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,snr_ul_db,snr_dl_db,los");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn mcs_default_table() {
        let t = McsTable::default();
        assert_eq!(t.entries().len(), 8);
        assert!((t.entries()[0].rate - 0.2).abs() < 1e-12);
        assert!((t.entries()[7].rate - 4.0).abs() < 1e-12);
        assert!(t.entries().windows(2).all(|w| w[0].rate < w[1].rate));
        // High SNR, long block: the top rate fits.
        assert_eq!(t.select_rate(db_to_linear(30.0), 1000, 0.1), t.entries()[7].rate);
        // Hopeless link: smallest rate.
        assert_eq!(t.select_rate(db_to_linear(-30.0), 100, 0.1), t.entries()[0].rate);
    }

    #[test]
    fn comm_budget_validation() {
        let ok = CommBudget { total_rbs: 10, c_ul: 4, c_dl: 2, mcs: McsTable::default() };
        assert!(ok.validate().is_ok());
        assert!(CommBudget { c_ul: 0, ..ok.clone() }.validate().is_err());
        assert!(CommBudget { c_ul: 11, ..ok.clone() }.validate().is_err());
        assert!(CommBudget { c_dl: 0, ..ok }.validate().is_err());
    }
}

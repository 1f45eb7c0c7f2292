//! Scenario configuration, node placement and large-scale propagation.
//!
//! Placement is uniform over a `D × D` square. Large-scale gains follow a
//! log-distance model `β(dB) = a − b·log10(d / 1 m)`; AP–UE and RIS–UE links
//! go through a two-stage blockage/LoS draw, and AP–RIS links are pure LoS.

use crate::optimizer::SolverParams;
use crate::power_model::PowerParams;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

/// Random source used for every stochastic draw in the crate.
pub type SimRng = ChaCha8Rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distance beyond which a LoS path never exists.
pub const LOS_CUTOFF_M: f64 = 300.0;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Derives a child seed from `master` and a path of integers by chained
/// SplitMix64 finalization. Distinct paths give statistically independent
/// streams.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Every physical and algorithmic parameter of one scenario.
///
/// Serialized as a flat key/value TOML document; power and solver keys live
/// at the top level alongside the physical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub num_ris: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub ris_element_spacing: f64,
    pub ap_height: f64,
    pub ue_height: f64,
    pub ris_height: f64,
    pub coherence_symbols: usize,
    pub training_symbols: usize,
    /// Uplink pilot power, watts.
    pub pilot_power: f64,
    /// Per-AP radiated power cap, watts.
    pub max_ap_power: f64,
    /// Cap on each UE's power parameter.
    pub per_ue_power_cap: f64,
    /// Minimum per-UE spectral efficiency, bits/s/Hz. The rate requirement
    /// in bits/s is `bandwidth · qos_min_se`.
    pub qos_min_se: f64,
    pub blockage_prob: f64,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Multiply rates by the downlink fraction `(τ_c − τ_t) / τ_c`.
    pub apply_prelog: bool,
    pub rng_seed: u64,
    #[serde(flatten)]
    pub power: PowerParams,
    #[serde(flatten)]
    pub solver: SolverParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let carrier_freq = 1.9e9;
        Self {
            num_aps: 10,
            num_ues: 5,
            num_ris: 2,
            ris_rows: 8,
            ris_cols: 8,
            area_side: 1000.0,
            carrier_freq,
            bandwidth: 20e6,
            ris_element_spacing: SPEED_OF_LIGHT / carrier_freq / 2.0,
            ap_height: 12.5,
            ue_height: 1.5,
            ris_height: 13.5,
            coherence_symbols: 1000,
            training_symbols: 20,
            pilot_power: 0.1,
            max_ap_power: 0.2,
            per_ue_power_cap: 0.2,
            qos_min_se: 1.0,
            blockage_prob: 0.5,
            pathloss_intercept_db: -30.5,
            pathloss_slope_db: 36.7,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            apply_prelog: false,
            rng_seed: 1,
            power: PowerParams::default(),
            solver: SolverParams::default(),
        }
    }
}

impl ScenarioConfig {
    /// Number of elements per RIS.
    pub fn ris_elements(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Thermal noise power over the bandwidth, watts. Used for both uplink
    /// pilots and downlink data.
    pub fn noise_power(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz + 10.0 * self.bandwidth.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }

    /// Fraction of the coherence block used for downlink data, or 1 when the
    /// pre-log factor is disabled.
    pub fn prelog(&self) -> f64 {
        if self.apply_prelog {
            (self.coherence_symbols - self.training_symbols) as f64 / self.coherence_symbols as f64
        } else {
            1.0
        }
    }

    /// Per-UE rate requirement ξ_k in bits/s.
    pub fn qos_rate(&self) -> f64 {
        self.bandwidth * self.qos_min_se
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_aps == 0 || self.num_ues == 0 {
            return bad("num_aps and num_ues must be at least 1");
        }
        if self.ris_rows == 0 || self.ris_cols == 0 {
            return bad("ris_rows and ris_cols must be at least 1");
        }
        if self.num_ues > self.num_aps {
            return bad("zero-forcing needs num_ues <= num_aps");
        }
        if self.training_symbols >= self.coherence_symbols {
            return bad("training_symbols must be smaller than coherence_symbols");
        }
        if self.num_ues > self.training_symbols {
            return bad("orthogonal pilots need num_ues <= training_symbols");
        }
        let positive = [
            ("area_side", self.area_side),
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("ris_element_spacing", self.ris_element_spacing),
            ("pilot_power", self.pilot_power),
            ("max_ap_power", self.max_ap_power),
            ("per_ue_power_cap", self.per_ue_power_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.blockage_prob) {
            return bad("blockage_prob must lie in [0, 1]");
        }
        if self.qos_min_se < 0.0 {
            return bad("qos_min_se must be non-negative");
        }
        if self.pathloss_slope_db <= 0.0 {
            return bad("pathloss_slope_db must be positive");
        }
        self.power.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    /// Parses a flat TOML document. Keys not recognized are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let known = Self::known_keys();
        let unknown: Vec<&String> = table.keys().filter(|k| !known.contains(k.as_str())).collect();
        if !unknown.is_empty() {
            return Err(Error::Parse(format!("unknown keys: {unknown:?}")));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn known_keys() -> BTreeSet<String> {
        let text = Self::default().to_toml_string();
        let table: toml::Table = text.parse().expect("default config round-trips");
        table.keys().cloned().collect()
    }
}

/// A point in the 3-D deployment, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    pub ris_positions: Vec<Position>,
    /// Boresight azimuth of each RIS, radians.
    pub ris_orientations: Vec<f64>,
    /// `M × K`.
    pub ap_ue_distance: DMatrix<f64>,
    /// `M × L`.
    pub ap_ris_distance: DMatrix<f64>,
    /// `L × K`.
    pub ris_ue_distance: DMatrix<f64>,
}

impl Topology {
    /// Builds a topology from explicit positions; RISs face the area center.
    pub fn from_positions(
        aps: Vec<Position>,
        ues: Vec<Position>,
        ris: Vec<Position>,
        area_side: f64,
    ) -> Self {
        let center = (area_side / 2.0, area_side / 2.0);
        let ris_orientations = ris
            .iter()
            .map(|r| {
                let (dx, dy) = (center.0 - r.x, center.1 - r.y);
                if dx == 0.0 && dy == 0.0 {
                    0.0
                } else {
                    dy.atan2(dx)
                }
            })
            .collect();
        let ap_ue_distance = DMatrix::from_fn(aps.len(), ues.len(), |m, k| aps[m].distance(&ues[k]));
        let ap_ris_distance = DMatrix::from_fn(aps.len(), ris.len(), |m, l| aps[m].distance(&ris[l]));
        let ris_ue_distance = DMatrix::from_fn(ris.len(), ues.len(), |l, k| ris[l].distance(&ues[k]));
        Self {
            ap_positions: aps,
            ue_positions: ues,
            ris_positions: ris,
            ris_orientations,
            ap_ue_distance,
            ap_ris_distance,
            ris_ue_distance,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn num_ris(&self) -> usize {
        self.ris_positions.len()
    }

    /// Plain-text table with one `entity,index,x,y,z` row per node.
    pub fn to_table(&self) -> String {
        let mut out = String::from("entity,index,x,y,z\n");
        let groups = [("ap", &self.ap_positions), ("ue", &self.ue_positions), ("ris", &self.ris_positions)];
        for (name, list) in groups {
            for (i, p) in list.iter().enumerate() {
                writeln!(out, "{name},{i},{},{},{}", p.x, p.y, p.z).unwrap();
            }
        }
        out
    }

    /// Parses the output of [`Topology::to_table`].
    pub fn from_table(text: &str, area_side: f64) -> Result<Self> {
        let mut aps = Vec::new();
        let mut ues = Vec::new();
        let mut ris = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", lineno + 1)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            let p = Position::new(num(fields[2])?, num(fields[3])?, num(fields[4])?);
            match fields[0] {
                "ap" => aps.push(p),
                "ue" => ues.push(p),
                "ris" => ris.push(p),
                other => return Err(Error::Parse(format!("unknown entity {other}"))),
            }
        }
        Ok(Self::from_positions(aps, ues, ris, area_side))
    }
}

/// Places APs, UEs and RISs uniformly over the square area at their
/// configured heights.
pub fn generate_topology(config: &ScenarioConfig, rng: &mut SimRng) -> Result<Topology> {
    config.validate()?;
    let d = config.area_side;
    let place = |n: usize, h: f64, rng: &mut SimRng| -> Vec<Position> {
        (0..n).map(|_| Position::new(rng.random::<f64>() * d, rng.random::<f64>() * d, h)).collect()
    };
    let aps = place(config.num_aps, config.ap_height, rng);
    let ues = place(config.num_ues, config.ue_height, rng);
    let ris = place(config.num_ris, config.ris_height, rng);
    Ok(Topology::from_positions(aps, ues, ris, d))
}

/// Probability of a LoS path given no major blockage.
pub fn los_probability(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    Ok(if d < LOS_CUTOFF_M { (LOS_CUTOFF_M - d) / LOS_CUTOFF_M } else { 0.0 })
}

/// Linear Rician factor of a LoS link at distance `d`: `K(dB) = 13 − 0.03 d`.
pub fn rician_factor(d: f64) -> f64 {
    10f64.powf((13.0 - 0.03 * d) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    ApUe,
    RisUe,
    ApRis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    /// Linear large-scale gain.
    pub beta: f64,
    /// Linear Rician factor; 0 for Rayleigh, infinite for pure LoS.
    pub kappa: f64,
    pub los: bool,
    /// Deterministic LoS link with no scattered component.
    pub pure_los: bool,
}

impl LinkStats {
    /// Power of the scattered component, `β / (κ + 1)`.
    pub fn scattered_power(&self) -> f64 {
        if self.pure_los {
            0.0
        } else {
            self.beta / (self.kappa + 1.0)
        }
    }

    /// Amplitude of the LoS mean, `√(β κ / (κ + 1))`.
    pub fn los_amplitude(&self) -> f64 {
        if self.pure_los {
            self.beta.sqrt()
        } else {
            (self.beta * self.kappa / (self.kappa + 1.0)).sqrt()
        }
    }
}

/// Log-distance pathloss parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pathloss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl Pathloss {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self { intercept_db: config.pathloss_intercept_db, slope_db: config.pathloss_slope_db }
    }

    /// Linear gain at distance `d` meters.
    pub fn gain(&self, d: f64) -> f64 {
        10f64.powf((self.intercept_db - self.slope_db * d.log10()) / 10.0)
    }
}

/// Draws the blockage / LoS state of one link and returns its statistics.
pub fn sample_link_stats(
    d: f64,
    kind: LinkKind,
    blockage_prob: f64,
    pathloss: &Pathloss,
    rng: &mut SimRng,
) -> Result<LinkStats> {
    let beta = pathloss.gain(d);
    if kind == LinkKind::ApRis {
        return Ok(LinkStats { beta, kappa: f64::INFINITY, los: true, pure_los: true });
    }
    let p_los = los_probability(d)?;
    let blocked = rng.random::<f64>() < blockage_prob;
    let los = !blocked && rng.random::<f64>() < p_los;
    let kappa = if los { rician_factor(d) } else { 0.0 };
    Ok(LinkStats { beta, kappa, los, pure_los: false })
}

/// Statistics of every link in a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    /// `M × K`.
    pub ap_ue: DMatrix<LinkStats>,
    /// `M × L`.
    pub ap_ris: DMatrix<LinkStats>,
    /// `L × K`.
    pub ris_ue: DMatrix<LinkStats>,
}

/// Samples link statistics in a fixed order: AP–UE (row-major), then RIS–UE.
pub fn sample_large_scale(config: &ScenarioConfig, topo: &Topology, rng: &mut SimRng) -> Result<LargeScale> {
    let pl = Pathloss::from_config(config);
    let p = config.blockage_prob;
    let (m, k, l) = (topo.num_aps(), topo.num_ues(), topo.num_ris());
    let mut ap_ue = Vec::with_capacity(m * k);
    for mi in 0..m {
        for ki in 0..k {
            ap_ue.push(sample_link_stats(topo.ap_ue_distance[(mi, ki)], LinkKind::ApUe, p, &pl, rng)?);
        }
    }
    let mut ris_ue = Vec::with_capacity(l * k);
    for li in 0..l {
        for ki in 0..k {
            ris_ue.push(sample_link_stats(topo.ris_ue_distance[(li, ki)], LinkKind::RisUe, p, &pl, rng)?);
        }
    }
    let mut ap_ris = Vec::with_capacity(m * l);
    for mi in 0..m {
        for li in 0..l {
            ap_ris.push(sample_link_stats(topo.ap_ris_distance[(mi, li)], LinkKind::ApRis, p, &pl, rng)?);
        }
    }
    Ok(LargeScale {
        ap_ue: DMatrix::from_row_slice(m, k, &ap_ue),
        ap_ris: DMatrix::from_row_slice(m, l, &ap_ris),
        ris_ue: DMatrix::from_row_slice(l, k, &ris_ue),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn flat_keys_and_unknown_keys() {
        let cfg = ScenarioConfig::from_toml_str("num_aps = 12\nap_fixed = 4.0\nwoa_population = 10\n").unwrap();
        assert_eq!(cfg.num_aps, 12);
        assert_eq!(cfg.power.ap_fixed, 4.0);
        assert_eq!(cfg.solver.woa_population, 10);
        assert!(ScenarioConfig::from_toml_str("num_apz = 3\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = ScenarioConfig { training_symbols: 1000, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = ScenarioConfig { blockage_prob: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = ScenarioConfig { area_side: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = ScenarioConfig { num_ues: 11, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noise_power_matches_thermal_floor() {
        let cfg = ScenarioConfig::default();
        // -174 dBm/Hz + 73.01 dB + 9 dB = -91.99 dBm
        let expected_dbm = -174.0 + 10.0 * 20e6f64.log10() + 9.0;
        assert!((10.0 * (cfg.noise_power() * 1e3).log10() - expected_dbm).abs() < 1e-9);
    }

    #[test]
    fn topology_is_deterministic_and_in_range() {
        let cfg = ScenarioConfig { num_aps: 1, num_ues: 1, area_side: 500.0, ..Default::default() };
        let a = generate_topology(&cfg, &mut rng_from_seed(11)).unwrap();
        let b = generate_topology(&cfg, &mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
        let cfg = ScenarioConfig { num_aps: 10, num_ues: 5, num_ris: 25, area_side: 500.0, ..Default::default() };
        let t = generate_topology(&cfg, &mut rng_from_seed(2)).unwrap();
        for p in t.ap_positions.iter().chain(&t.ue_positions).chain(&t.ris_positions) {
            assert!((0.0..=500.0).contains(&p.x) && (0.0..=500.0).contains(&p.y));
        }
        assert!(t.ap_positions.iter().all(|p| p.z == 12.5));
        assert!(t.ue_positions.iter().all(|p| p.z == 1.5));
        assert!(t.ris_positions.iter().all(|p| p.z == 13.5));
    }

    #[test]
    fn los_probability_piecewise() {
        assert_eq!(los_probability(300.0).unwrap(), 0.0);
        assert_eq!(los_probability(450.0).unwrap(), 0.0);
        assert_eq!(los_probability(150.0).unwrap(), 0.5);
        assert!((los_probability(1e-9).unwrap() - 1.0).abs() < 1e-10);
        assert!(los_probability(0.0).is_err());
        assert!(los_probability(-1.0).is_err());
    }

    #[test]
    fn rician_factor_at_100m() {
        assert!((rician_factor(100.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn link_kinds() {
        let pl = Pathloss { intercept_db: -30.5, slope_db: 36.7 };
        let mut rng = rng_from_seed(1);
        let ar = sample_link_stats(80.0, LinkKind::ApRis, 0.5, &pl, &mut rng).unwrap();
        assert!(ar.pure_los && ar.los);
        assert_eq!(ar.scattered_power(), 0.0);
        // always blocked
        let s = sample_link_stats(100.0, LinkKind::ApUe, 1.0, &pl, &mut rng).unwrap();
        assert_eq!(s.kappa, 0.0);
        assert!(!s.los);
        // never blocked, LoS certain at tiny distance
        let s = sample_link_stats(1e-6, LinkKind::RisUe, 0.0, &pl, &mut rng).unwrap();
        assert!(s.los && s.kappa > 0.0);
    }

    #[test]
    fn pathloss_is_decreasing() {
        let pl = Pathloss { intercept_db: -30.5, slope_db: 36.7 };
        let mut prev = f64::INFINITY;
        for i in 1..2000 {
            let b = pl.gain(i as f64 * 0.75);
            assert!(b > 0.0 && b < prev);
            prev = b;
        }
    }

    #[test]
    fn empirical_los_frequency() {
        let pl = Pathloss { intercept_db: -30.5, slope_db: 36.7 };
        let mut rng = rng_from_seed(77);
        let d = 120.0;
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| sample_link_stats(d, LinkKind::ApUe, 0.5, &pl, &mut rng).unwrap().los)
            .count();
        let p = 0.5 * (300.0 - d) / 300.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 3.0 * se);
    }

    #[test]
    fn topology_table_round_trip_and_distance_oracle() {
        let cfg = ScenarioConfig { num_aps: 10, num_ues: 5, num_ris: 25, ..Default::default() };
        let t = generate_topology(&cfg, &mut rng_from_seed(42)).unwrap();
        let back = Topology::from_table(&t.to_table(), cfg.area_side).unwrap();
        assert_eq!(back.ap_positions, t.ap_positions);
        for m in 0..10 {
            for k in 0..5 {
                let (a, u) = (t.ap_positions[m], t.ue_positions[k]);
                let d = ((a.x - u.x).powi(2) + (a.y - u.y).powi(2) + (a.z - u.z).powi(2)).sqrt();
                assert!((t.ap_ue_distance[(m, k)] - d).abs() <= 1e-12 * d);
            }
        }
        assert!(t.ap_ris_distance.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn large_scale_stream_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let t = generate_topology(&cfg, &mut rng_from_seed(5)).unwrap();
        let a = sample_large_scale(&cfg, &t, &mut rng_from_seed(6)).unwrap();
        let b = sample_large_scale(&cfg, &t, &mut rng_from_seed(6)).unwrap();
        assert_eq!(a, b);
        for s in a.ap_ue.iter().chain(a.ris_ue.iter()) {
            assert!(s.beta > 0.0 && s.kappa >= 0.0);
            if s.kappa > 0.0 {
                assert!(s.los);
            }
        }
    }
}

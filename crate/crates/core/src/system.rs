//! Per-coherence-block evaluator: turns a [`NetworkState`] into rates,
//! powers and the subtractive objective `F = f − α·g`.

use crate::channel::{ChannelRealization, RisPhase};
use crate::estimation::{estimate_all, ChannelEstimate, PilotNoise, PilotParams};
use crate::power_model::{energy_efficiency, split_power_coefficients, total_power, PowerParams, PowerSplit};
use crate::precoding::{
    error_interference, eta, heuristic_power, project_to_caps, rate_report, zf_precoder, ApActivation, HeuristicSum,
    RateReport,
};
use crate::scenario::ScenarioConfig;
use crate::{CMatrix, Error, Result};
use nalgebra::DMatrix;

/// Relative slack allowed when checking QoS and power caps.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Decision variables of the joint problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub activation: ApActivation,
    /// Per-UE power parameters `p_k`.
    pub power: Vec<f64>,
    pub phase: RisPhase,
}

/// Everything that stays fixed while one block is optimized: channels,
/// pinned pilot noise and the physical limits.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub real: ChannelRealization,
    pub pilot: PilotParams,
    pub pilot_noise: PilotNoise,
    /// Downlink noise power `σ_d²`, W.
    pub noise: f64,
    pub bandwidth: f64,
    pub prelog: f64,
    /// Per-UE rate requirement `ξ`, bits/s.
    pub qos_rate: f64,
    pub max_ap_power: f64,
    pub per_ue_cap: f64,
    pub power: PowerParams,
    pub heuristic_sum: HeuristicSum,
}

/// Precoder and interference coefficients for one (phase, activation) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoded {
    pub activation: ApActivation,
    pub v: CMatrix,
    pub gamma: DMatrix<f64>,
}

impl Precoded {
    /// `η_{mk} = |V_{mk}|²`.
    pub fn eta(&self) -> DMatrix<f64> {
        eta(&self.v)
    }
}

/// Rates, power and EE of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: RateReport,
    /// `f`, bits/s.
    pub sum_rate: f64,
    /// `g`, W.
    pub total_power: f64,
    pub ee: f64,
    pub qos_ok: bool,
    pub caps_ok: bool,
}

impl Evaluation {
    /// `f − α·g`.
    pub fn objective(&self, alpha: f64) -> f64 {
        self.sum_rate - alpha * self.total_power
    }

    pub fn feasible(&self) -> bool {
        self.qos_ok && self.caps_ok
    }
}

impl BlockModel {
    pub fn new(config: &ScenarioConfig, real: ChannelRealization, pilot_noise: PilotNoise) -> Result<Self> {
        if pilot_noise.shape() != (real.num_aps(), real.num_ues()) {
            return Err(Error::DimensionMismatch("pilot noise shape must be M x K".into()));
        }
        Ok(Self {
            real,
            pilot: PilotParams::from_config(config),
            pilot_noise,
            noise: config.noise_power(),
            bandwidth: config.bandwidth,
            prelog: config.prelog(),
            qos_rate: config.qos_rate(),
            max_ap_power: config.max_ap_power,
            per_ue_cap: config.per_ue_power_cap,
            power: config.power.clone(),
            heuristic_sum: HeuristicSum::Tail,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.real.num_aps()
    }

    pub fn num_ues(&self) -> usize {
        self.real.num_ues()
    }

    pub fn num_ris(&self) -> usize {
        self.real.num_ris()
    }

    pub fn ris_elements(&self) -> usize {
        self.real.ris_elements()
    }

    /// Effective bandwidth `B·prelog`, so that `f = B_eff Σ log2(1+SINR)`.
    pub fn effective_bandwidth(&self) -> f64 {
        self.bandwidth * self.prelog
    }

    pub fn split(&self, activation: &ApActivation) -> PowerSplit {
        split_power_coefficients(activation, &self.power, self.num_ris())
    }

    pub fn estimate(&self, phase: &RisPhase) -> Result<ChannelEstimate> {
        estimate_all(&self.real, phase, &self.pilot, &self.pilot_noise)
    }

    pub fn precode(&self, est: &ChannelEstimate, activation: &ApActivation) -> Result<Precoded> {
        let v = zf_precoder(&est.g_hat, activation)?;
        let gamma = error_interference(&v, &est.error_cov)?;
        Ok(Precoded { activation: activation.clone(), v, gamma })
    }

    pub fn heuristic_power(&self, est: &ChannelEstimate, activation: &ApActivation) -> Result<Vec<f64>> {
        heuristic_power(&est.g_hat, activation, self.max_ap_power, self.per_ue_cap, self.heuristic_sum)
    }

    /// Clips to the per-UE cap and scales down to the per-AP caps.
    pub fn project(&self, pre: &Precoded, p: &[f64]) -> Vec<f64> {
        project_to_caps(p, &pre.v, self.max_ap_power, self.per_ue_cap)
    }

    pub fn evaluate(&self, pre: &Precoded, p: &[f64]) -> Evaluation {
        let report = rate_report(p, &pre.gamma, self.noise, self.bandwidth, self.prelog, &pre.v);
        let sum_rate = report.sum_rate;
        let g = total_power(&pre.activation, &report.per_ap_tx, sum_rate, &self.power, self.num_ris());
        let ee = energy_efficiency(sum_rate, g).unwrap_or(0.0);
        let need = self.qos_rate * (1.0 - FEASIBILITY_TOL);
        let qos_ok = report.rate_per_ue.iter().all(|r| self.bandwidth * r >= need);
        let caps_ok = p.iter().all(|&x| x >= 0.0 && x <= self.per_ue_cap * (1.0 + FEASIBILITY_TOL))
            && report.per_ap_tx.iter().all(|&t| t <= self.max_ap_power * (1.0 + FEASIBILITY_TOL));
        Evaluation { report, sum_rate, total_power: g, ee, qos_ok, caps_ok }
    }

    /// Estimates, precodes and evaluates a full state.
    pub fn evaluate_state(&self, state: &NetworkState) -> Result<Evaluation> {
        let est = self.estimate(&state.phase)?;
        let pre = self.precode(&est, &state.activation)?;
        Ok(self.evaluate(&pre, &state.power))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::scenario::{generate_topology, rng_from_seed, sample_large_scale};

    pub(crate) fn small_config() -> ScenarioConfig {
        ScenarioConfig { num_aps: 5, num_ues: 2, num_ris: 1, ris_rows: 2, ris_cols: 2, area_side: 300.0, ..Default::default() }
    }

    pub(crate) fn model_with(cfg: &ScenarioConfig, seed: u64) -> BlockModel {
        let mut rng = rng_from_seed(seed);
        let topo = generate_topology(cfg, &mut rng).unwrap();
        let stats = sample_large_scale(cfg, &topo, &mut rng).unwrap();
        let real = sample_channels(cfg, &topo, &stats, &mut rng).unwrap();
        let noise = PilotNoise::draw(cfg.num_aps, cfg.num_ues, &mut rng);
        BlockModel::new(cfg, real, noise).unwrap()
    }

    pub(crate) fn model(seed: u64) -> BlockModel {
        model_with(&small_config(), seed)
    }

    #[test]
    fn evaluation_identities() {
        let m = model(3);
        let phase = RisPhase::zeros(1, 4);
        let est = m.estimate(&phase).unwrap();
        let act = ApActivation::all(5);
        let pre = m.precode(&est, &act).unwrap();
        let p = m.heuristic_power(&est, &act).unwrap();
        let e = m.evaluate(&pre, &p);
        assert!(e.caps_ok);
        assert!((e.ee * e.total_power - e.sum_rate).abs() <= 1e-9 * e.sum_rate);
        let split = m.split(&act);
        let rebuilt = e.report.total_tx() + e.sum_rate * split.dynamic_per_bps() + split.static_w;
        assert!((rebuilt - e.total_power).abs() <= 1e-12 * e.total_power);
        assert_eq!(e.objective(0.0), e.sum_rate);
        let state = NetworkState { activation: act, power: p, phase };
        assert_eq!(m.evaluate_state(&state).unwrap(), e);
    }
}

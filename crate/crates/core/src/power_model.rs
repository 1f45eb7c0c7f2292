//! Network power consumption with AP sleep states, and energy efficiency.
//!
//! Rate-proportional terms are specified in W/Gbps; [`BITS_PER_GBIT`] is the
//! only place the conversion happens.

use crate::precoding::ApActivation;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BITS_PER_GBIT: f64 = 1e9;

/// Converts a rate in bits/s to Gbps.
pub fn to_gbps(rate_bps: f64) -> f64 {
    rate_bps / BITS_PER_GBIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerParams {
    /// Fixed power of an active AP, W.
    pub ap_fixed: f64,
    /// Fixed CPU power, W.
    pub cpu_fixed: f64,
    /// CPU precoding power, W/Gbps.
    pub cpu_per_gbps: f64,
    /// Fixed fronthaul power per AP, W.
    pub fh_fixed: f64,
    /// Variable fronthaul power per active AP, W/Gbps.
    pub fh_per_gbps: f64,
    /// Static power per RIS, W.
    pub ris_static: f64,
    /// Fraction of the fixed AP power saved while asleep.
    pub sleep_factor: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            ap_fixed: 5.0,
            cpu_fixed: 5.0,
            cpu_per_gbps: 0.1,
            fh_fixed: 0.825,
            fh_per_gbps: 0.01,
            ris_static: 0.064,
            sleep_factor: 0.7,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.ap_fixed,
            self.cpu_fixed,
            self.cpu_per_gbps,
            self.fh_fixed,
            self.fh_per_gbps,
            self.ris_static,
        ];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("power parameters must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.sleep_factor) {
            return Err(Error::InvalidConfig("sleep_factor must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Everything that does not depend on the activation pattern, the
    /// transmit powers or the rate: sleeping-level AP power and FH fixed
    /// power for all APs, RIS static power and fixed CPU power.
    pub fn fixed_total(&self, num_aps: usize, num_ris: usize) -> f64 {
        num_aps as f64 * ((1.0 - self.sleep_factor) * self.ap_fixed + self.fh_fixed)
            + num_ris as f64 * self.ris_static
            + self.cpu_fixed
    }
}

/// Total power consumption, W.
///
/// `per_ap_tx` holds the radiated power of each AP and is ignored at
/// sleeping APs. The FH fixed power is charged for every AP regardless of
/// its state.
pub fn total_power(
    activation: &ApActivation,
    per_ap_tx: &[f64],
    sum_rate_bps: f64,
    params: &PowerParams,
    num_ris: usize,
) -> f64 {
    let f = to_gbps(sum_rate_bps);
    let mut ap = 0.0;
    let mut fh_var = 0.0;
    for (m, &on) in activation.mask().iter().enumerate() {
        let delta = if on { 1.0 } else { 0.0 };
        ap += (1.0 - params.sleep_factor * (1.0 - delta)) * params.ap_fixed;
        if on {
            ap += per_ap_tx[m];
            fh_var += params.fh_per_gbps;
        }
    }
    let m = activation.len() as f64;
    let cpu = params.cpu_fixed + f * params.cpu_per_gbps;
    let fh = m * params.fh_fixed + f * fh_var;
    let ris = num_ris as f64 * params.ris_static;
    ap + cpu + fh + ris
}

/// `f / P_total` in bits/Joule.
pub fn energy_efficiency(sum_rate_bps: f64, total_power_w: f64) -> Result<f64> {
    if !(total_power_w > 0.0) {
        return Err(Error::InvalidArgument(format!("total power must be positive, got {total_power_w}")));
    }
    Ok(sum_rate_bps / total_power_w)
}

/// Decomposition `P_total = Σ c_k p_k + f·P_dyn + P_stat` for a fixed
/// activation pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    /// Rate-proportional coefficient, W/Gbps.
    pub dynamic_per_gbps: f64,
    /// Effective static power, W.
    pub static_w: f64,
}

impl PowerSplit {
    /// Rate-proportional coefficient in W per bit/s.
    pub fn dynamic_per_bps(&self) -> f64 {
        self.dynamic_per_gbps / BITS_PER_GBIT
    }
}

pub fn split_power_coefficients(activation: &ApActivation, params: &PowerParams, num_ris: usize) -> PowerSplit {
    let active = activation.num_active() as f64;
    PowerSplit {
        dynamic_per_gbps: active * params.fh_per_gbps + params.cpu_per_gbps,
        static_w: active * params.sleep_factor * params.ap_fixed
            + params.fixed_total(activation.len(), num_ris),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_active_fixed_power() {
        let p = PowerParams::default();
        let act = ApActivation::all(10);
        let total = total_power(&act, &[0.0; 10], 0.0, &p, 25);
        assert!((total - 64.85).abs() < 1e-12);
    }

    #[test]
    fn all_asleep_fixed_power() {
        let p = PowerParams::default();
        let act = ApActivation::from_mask(vec![false; 10]);
        let total = total_power(&act, &[0.0; 10], 0.0, &p, 25);
        assert!((total - 29.85).abs() < 1e-12);
    }

    #[test]
    fn no_dormancy_saving() {
        let p = PowerParams { sleep_factor: 0.0, ..Default::default() };
        let on = total_power(&ApActivation::all(4), &[0.0; 4], 0.0, &p, 1);
        let off = total_power(&ApActivation::from_mask(vec![true, false, false, true]), &[0.0; 4], 0.0, &p, 1);
        assert!((on - off).abs() < 1e-12);
    }

    #[test]
    fn ee_ratio() {
        assert_eq!(energy_efficiency(0.0, 10.0).unwrap(), 0.0);
        assert!((energy_efficiency(64.85e6, 64.85).unwrap() - 1e6).abs() < 1e-6);
        let a = energy_efficiency(1e8, 50.0).unwrap();
        let b = energy_efficiency(2e8, 50.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-9);
        assert!(energy_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn split_examples() {
        let p = PowerParams::default();
        let none = split_power_coefficients(&ApActivation::from_mask(vec![false; 10]), &p, 25);
        assert!((none.dynamic_per_gbps - 0.1).abs() < 1e-15);
        let all = split_power_coefficients(&ApActivation::all(10), &p, 25);
        assert!((all.dynamic_per_gbps - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn split_reconstructs_total(
            mask in proptest::collection::vec(any::<bool>(), 1..16),
            tx_seed in proptest::collection::vec(0.0f64..0.2, 16),
            rate in 0.0f64..5e9,
            num_ris in 0usize..30,
        ) {
            let p = PowerParams::default();
            let act = ApActivation::from_mask(mask.clone());
            let tx: Vec<f64> = (0..mask.len()).map(|m| if mask[m] { tx_seed[m] } else { 0.0 }).collect();
            let total = total_power(&act, &tx, rate, &p, num_ris);
            let split = split_power_coefficients(&act, &p, num_ris);
            let tx_sum: f64 = tx.iter().sum();
            let rebuilt = tx_sum + rate * split.dynamic_per_bps() + split.static_w;
            prop_assert!((total - rebuilt).abs() <= 1e-12 * total);
        }

        #[test]
        fn deactivation_saves_exact_amount(
            mask in proptest::collection::vec(any::<bool>(), 2..12),
            tx_seed in proptest::collection::vec(0.0f64..0.2, 12),
            rate in 0.0f64..5e9,
        ) {
            let p = PowerParams::default();
            let Some(m) = mask.iter().position(|&b| b) else { return Ok(()); };
            let tx: Vec<f64> = (0..mask.len()).map(|i| if mask[i] { tx_seed[i] } else { 0.0 }).collect();
            let before = total_power(&ApActivation::from_mask(mask.clone()), &tx, rate, &p, 2);
            let mut off = mask.clone();
            off[m] = false;
            let after = total_power(&ApActivation::from_mask(off), &tx, rate, &p, 2);
            let saved = p.sleep_factor * p.ap_fixed + tx[m] + to_gbps(rate) * p.fh_per_gbps;
            prop_assert!(after < before);
            prop_assert!(((before - after) - saved).abs() < 1e-10);
        }
    }
}

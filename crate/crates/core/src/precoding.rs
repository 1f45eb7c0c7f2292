//! Zero-forcing precoding over the active APs, the heuristic power rule,
//! error-induced interference and achievable rates under imperfect CSI.
//!
//! `Ĝ` is stored `M × K` (row `m` holds AP `m`'s estimates). The precoder is
//! `V = Ĝ*(ĜᵀΔĜ*)⁻¹` with the rows of sleeping APs set to zero, so that
//! `ĜᵀΔV = I`.

use crate::linalg::{eigen_range, hpd_inverse};
use crate::{CMatrix, Complex64, Error, Result};
use nalgebra::DMatrix;

/// Gram matrices with a condition number above this are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Binary sleep/active state of each AP.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApActivation {
    mask: Vec<bool>,
}

impl ApActivation {
    pub fn all(num_aps: usize) -> Self {
        Self { mask: vec![true; num_aps] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_indices(num_aps: usize, active: &[usize]) -> Self {
        let mut mask = vec![false; num_aps];
        for &m in active {
            mask[m] = true;
        }
        Self { mask }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn is_active(&self, m: usize) -> bool {
        self.mask[m]
    }

    pub fn num_active(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&m| self.mask[m]).collect()
    }

    /// Copy with AP `m` set to `on`.
    pub fn with(&self, m: usize, on: bool) -> Self {
        let mut mask = self.mask.clone();
        mask[m] = on;
        Self { mask }
    }

    /// `"1101…"`, used in traces.
    pub fn to_bit_string(&self) -> String {
        self.mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// `V = Ĝ*(ĜᵀΔĜ*)⁻¹`, `M × K`, zero on sleeping rows.
///
/// Fails with [`Error::SingularGram`] when fewer than `K` APs are active or
/// the Gram matrix is numerically singular.
pub fn zf_precoder(g_hat: &CMatrix, activation: &ApActivation) -> Result<CMatrix> {
    let (m, k) = g_hat.shape();
    if activation.len() != m {
        return Err(Error::DimensionMismatch(format!("activation has {} APs, estimate has {m}", activation.len())));
    }
    let active = activation.active_indices();
    if active.len() < k {
        return Err(Error::SingularGram { condition: f64::INFINITY });
    }
    let sub = g_hat.select_rows(&active);
    let conj = sub.conjugate();
    let gram = sub.transpose() * &conj;
    let (lo, hi) = eigen_range(&gram);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { condition });
    }
    let inv = hpd_inverse(&gram).ok_or(Error::SingularGram { condition })?;
    let v_active = conj * inv;
    let mut v = CMatrix::zeros(m, k);
    for (row, &ap) in active.iter().enumerate() {
        v.set_row(ap, &v_active.row(row));
    }
    Ok(v)
}

/// Which partial sum of `η_m` the heuristic power rule divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeuristicSum {
    /// `Σ_{i ≥ k} η_{mi}`, as the rule is usually written.
    #[default]
    Tail,
    /// `Σ_i η_{mi}` over all UEs.
    Full,
}

/// `η_{mi} = |V_{mi}|²`, the power AP `m` spends per unit of `p_i`.
pub fn eta(v: &CMatrix) -> DMatrix<f64> {
    v.map(|z| z.norm_sqr())
}

/// Per-AP radiated power `Σ_k p_k |V_{mk}|²`.
pub fn per_ap_tx(v: &CMatrix, p: &[f64]) -> Vec<f64> {
    (0..v.nrows())
        .map(|m| (0..v.ncols()).map(|k| p[k] * v[(m, k)].norm_sqr()).sum())
        .collect()
}

/// Clips `p` to the per-UE cap and then scales it uniformly until no AP
/// exceeds `max_ap_power`.
pub fn project_to_caps(p: &[f64], v: &CMatrix, max_ap_power: f64, per_ue_cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = p.iter().map(|&x| x.clamp(0.0, per_ue_cap)).collect();
    let worst = per_ap_tx(v, &clipped).into_iter().fold(0.0, f64::max);
    if worst > max_ap_power {
        let s = max_ap_power / worst;
        clipped.iter().map(|x| x * s).collect()
    } else {
        clipped
    }
}

/// Heuristic ZF power `p_k = P_max / max_m Σ_i η_{mi}` (sum per
/// [`HeuristicSum`]), clipped to `per_ue_cap` and then projected onto the
/// per-AP caps.
///
/// The tail sum alone does not guarantee the per-AP caps once `K ≥ 2`, hence
/// the final projection.
pub fn heuristic_power(
    g_hat: &CMatrix,
    activation: &ApActivation,
    max_ap_power: f64,
    per_ue_cap: f64,
    sum: HeuristicSum,
) -> Result<Vec<f64>> {
    let v = zf_precoder(g_hat, activation)?;
    let e = eta(&v);
    let k = v.ncols();
    let p: Vec<f64> = (0..k)
        .map(|ki| {
            let start = match sum {
                HeuristicSum::Tail => ki,
                HeuristicSum::Full => 0,
            };
            let worst = activation
                .active_indices()
                .into_iter()
                .map(|m| (start..k).map(|i| e[(m, i)]).sum::<f64>())
                .fold(0.0, f64::max);
            if worst > 0.0 {
                (max_ap_power / worst).min(per_ue_cap)
            } else {
                per_ue_cap
            }
        })
        .collect();
    Ok(project_to_caps(&p, &v, max_ap_power, per_ue_cap))
}

/// `γ_{k,i} = E|ǧ_kᵀ Δ v_i|² = v_iᴴ conj(C_k) v_i` with `C_k = E[ǧ_k ǧ_kᴴ]`.
///
/// `v` must already be zero on sleeping rows.
pub fn error_interference(v: &CMatrix, error_cov: &[CMatrix]) -> Result<DMatrix<f64>> {
    let k = v.ncols();
    if error_cov.len() != k {
        return Err(Error::DimensionMismatch(format!("{} error covariances for {k} UEs", error_cov.len())));
    }
    let mut gamma = DMatrix::zeros(k, k);
    for (ki, c) in error_cov.iter().enumerate() {
        if c.shape() != (v.nrows(), v.nrows()) {
            return Err(Error::DimensionMismatch("error covariance must be M x M".into()));
        }
        let cv = c.conjugate() * v;
        for i in 0..k {
            let q: Complex64 = v.column(i).dotc(&cv.column(i));
            gamma[(ki, i)] = q.re.max(0.0);
        }
    }
    Ok(gamma)
}

/// SINRs, rates and powers for one power vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    /// Per-UE spectral efficiency, bits/s/Hz (pre-log applied).
    pub rate_per_ue: Vec<f64>,
    /// `f`, bits/s.
    pub sum_rate: f64,
    /// Radiated power of each AP, zero while asleep.
    pub per_ap_tx: Vec<f64>,
    /// `c_k = Σ_m |V_{mk}|²`.
    pub beam_gain: Vec<f64>,
}

impl RateReport {
    pub fn total_tx(&self) -> f64 {
        self.per_ap_tx.iter().sum()
    }
}

/// `SINR_k = p_k / (Σ_i p_i γ_{k,i} + σ²)`, `f = B·prelog·Σ log2(1+SINR_k)`.
pub fn rate_report(
    p: &[f64],
    gamma: &DMatrix<f64>,
    noise: f64,
    bandwidth: f64,
    prelog: f64,
    v: &CMatrix,
) -> RateReport {
    let k = p.len();
    let sinr: Vec<f64> = (0..k)
        .map(|ki| {
            let interference: f64 = (0..k).map(|i| p[i] * gamma[(ki, i)]).sum();
            p[ki] / (interference + noise)
        })
        .collect();
    let rate_per_ue: Vec<f64> = sinr.iter().map(|s| prelog * (1.0 + s).log2()).collect();
    let sum_rate = bandwidth * rate_per_ue.iter().sum::<f64>();
    let beam_gain = (0..k).map(|ki| v.column(ki).iter().map(|z| z.norm_sqr()).sum()).collect();
    RateReport { sinr, rate_per_ue, sum_rate, per_ap_tx: per_ap_tx(v, p), beam_gain }
}

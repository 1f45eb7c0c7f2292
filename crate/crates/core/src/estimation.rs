//! Direct MMSE estimation of the aggregate (direct + cascaded) channel.
//!
//! Each UE sends an orthogonal pilot of length `τ_t` at power `p_u`; after
//! despreading, AP observations of UE `k` are
//! `y_k = √(τ_t p_u)·g_k + n_k` with `n_k ~ CN(0, σ²I)`. The noise draws are
//! kept in a [`PilotNoise`] so that the same realization can be reused when
//! the RIS phases change (common random numbers).

use crate::channel::{effective_channel, mean_effective_channel, ChannelRealization, RisPhase};
use crate::linalg::{clip_psd, hermitian_part, standard_complex_normal};
use nalgebra::linalg::Cholesky;
use crate::scenario::{ScenarioConfig, SimRng};
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Pilot-stage parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotParams {
    pub training_symbols: usize,
    pub pilot_power: f64,
    /// Uplink noise power `σ_u²`, W.
    pub noise: f64,
}

impl PilotParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self { training_symbols: config.training_symbols, pilot_power: config.pilot_power, noise: config.noise_power() }
    }

    /// `τ_t·p_u`.
    pub fn pilot_gain(&self) -> f64 {
        self.training_symbols as f64 * self.pilot_power
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise > 0.0) {
            return Err(Error::InvalidArgument(format!("pilot noise power must be positive, got {}", self.noise)));
        }
        if !(self.pilot_gain() > 0.0) {
            return Err(Error::InvalidArgument("pilot energy must be positive".into()));
        }
        Ok(())
    }
}

/// Standard CN(0, 1) pilot-noise draws, `M × K`; scaled by `σ_u` on use.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotNoise {
    z: CMatrix,
}

impl PilotNoise {
    pub fn draw(num_aps: usize, num_ues: usize, rng: &mut SimRng) -> Self {
        Self { z: CMatrix::from_fn(num_aps, num_ues, |_, _| standard_complex_normal(rng)) }
    }

    pub fn zeros(num_aps: usize, num_ues: usize) -> Self {
        Self { z: CMatrix::zeros(num_aps, num_ues) }
    }

    pub fn column(&self, k: usize) -> CVector {
        self.z.column(k).clone_owned()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.z.shape()
    }
}

/// Channel estimates and second-order statistics for all UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `Ĝ`, `M × K`.
    pub g_hat: CMatrix,
    /// LoS mean `Ḡ`, `M × K`.
    pub g_bar: CMatrix,
    /// `Q_k` per UE.
    pub aggregate_cov: Vec<CMatrix>,
    /// `Ψ_k = (τ_t p_u Q_k + σ_u² I)⁻¹` per UE.
    pub psi: Vec<CMatrix>,
    /// Error covariance `C_k = E[ǧ_k ǧ_kᴴ]` per UE.
    pub error_cov: Vec<CMatrix>,
}

/// `H_ar,l Φ_l R Φ_lᴴ H_ar,lᴴ` for every RIS; `Q_k` is a UE-weighted sum of
/// these plus the direct scattered powers.
fn cascade_covariances(real: &ChannelRealization, phase: &RisPhase) -> Vec<CMatrix> {
    (0..real.num_ris())
        .map(|l| {
            let mut a = real.h_ar[l].clone();
            for (n, phi) in phase.coefficients(l).into_iter().enumerate() {
                for z in a.column_mut(n).iter_mut() {
                    *z *= phi;
                }
            }
            let b = &a * &real.correlation * a.adjoint();
            hermitian_part(&b)
        })
        .collect()
}

fn assemble_q(real: &ChannelRealization, cascades: &[CMatrix], k: usize) -> CMatrix {
    let m = real.num_aps();
    let mut q = CMatrix::from_diagonal(&CVector::from_fn(m, |mi, _| Complex64::new(real.au_scatter[(mi, k)], 0.0)));
    for (l, b) in cascades.iter().enumerate() {
        q += b * Complex64::new(real.ru_scatter[(l, k)], 0.0);
    }
    q
}

fn check_dims(real: &ChannelRealization, phase: &RisPhase) -> Result<()> {
    if phase.num_ris() != real.num_ris() || (real.num_ris() > 0 && phase.elements() != real.ris_elements()) {
        return Err(Error::DimensionMismatch("phase does not match channel realization".into()));
    }
    Ok(())
}

/// `Q_k = Σ_l H_ar,l Φ_l Γ_ru,lk Φ_lᴴ H_ar,lᴴ + diag(β_au,mk/(κ_au,mk+1))`.
pub fn aggregate_covariance(real: &ChannelRealization, phase: &RisPhase, k: usize) -> Result<CMatrix> {
    check_dims(real, phase)?;
    if k >= real.num_ues() {
        return Err(Error::InvalidArgument(format!("UE index {k} out of range")));
    }
    Ok(assemble_q(real, &cascade_covariances(real, phase), k))
}

/// One MMSE estimate: returns `(ĝ_k, C_k, Ψ_k)`.
///
/// `noise` holds standard CN(0, 1) draws that are scaled by `σ_u`.
pub fn mmse_estimate(
    g: &CVector,
    g_bar: &CVector,
    q: &CMatrix,
    params: &PilotParams,
    noise: &CVector,
) -> Result<(CVector, CMatrix, CMatrix)> {
    params.validate()?;
    let m = g.len();
    if g_bar.len() != m || q.shape() != (m, m) || noise.len() != m {
        return Err(Error::DimensionMismatch("estimation inputs disagree in size".into()));
    }
    let gain = params.pilot_gain();
    let root = gain.sqrt();
    let sigma2 = params.noise;
    let a = q * Complex64::new(gain, 0.0) + CMatrix::identity(m, m) * Complex64::new(sigma2, 0.0);
    let chol = Cholesky::new(hermitian_part(&a))
        .ok_or_else(|| Error::InvalidArgument("pilot covariance is not positive definite".into()))?;
    let psi = chol.inverse();
    // QΨ = (ΨQ)ᴴ because both factors are Hermitian.
    let q_psi = chol.solve(q).adjoint();
    let y = g * Complex64::new(root, 0.0) + noise * Complex64::new(sigma2.sqrt(), 0.0);
    let innovation = y - g_bar * Complex64::new(root, 0.0);
    let g_hat = g_bar + &q_psi * innovation * Complex64::new(root, 0.0);
    // C = Q − τp·QΨQ = σ²·QΨ, which avoids the cancellation of the first
    // form. The eigenvalue clip is only needed when rounding leaves it
    // indefinite.
    let c = hermitian_part(&(q_psi * Complex64::new(sigma2, 0.0)));
    let c = if Cholesky::new(c.clone()).is_some() { c } else { clip_psd(&c).0 };
    Ok((g_hat, c, hermitian_part(&psi)))
}

/// Estimates every UE's aggregate channel under `phase`.
pub fn estimate_all(
    real: &ChannelRealization,
    phase: &RisPhase,
    params: &PilotParams,
    noise: &PilotNoise,
) -> Result<ChannelEstimate> {
    check_dims(real, phase)?;
    let (m, k) = (real.num_aps(), real.num_ues());
    if noise.shape() != (m, k) {
        return Err(Error::DimensionMismatch("pilot noise shape must be M x K".into()));
    }
    let g = effective_channel(real, phase)?;
    let g_bar = mean_effective_channel(real, phase)?;
    let cascades = cascade_covariances(real, phase);
    let mut g_hat = CMatrix::zeros(m, k);
    let mut aggregate_cov = Vec::with_capacity(k);
    let mut psi = Vec::with_capacity(k);
    let mut error_cov = Vec::with_capacity(k);
    for ki in 0..k {
        let q = assemble_q(real, &cascades, ki);
        let (gh, c, ps) = mmse_estimate(
            &g.column(ki).clone_owned(),
            &g_bar.column(ki).clone_owned(),
            &q,
            params,
            &noise.column(ki),
        )?;
        g_hat.set_column(ki, &gh);
        aggregate_cov.push(q);
        psi.push(ps);
        error_cov.push(c);
    }
    Ok(ChannelEstimate { g_hat, g_bar, aggregate_cov, psi, error_cov })
}

//! Small-scale channel synthesis and the RIS-cascaded effective channel.
//!
//! Conventions fixed here:
//!
//! - UPA elements are indexed row-major over (horizontal `a`, vertical `b`):
//!   element `a·n_z + b` sits at `(a·d_R, b·d_R)` in the RIS plane.
//! - Angles seen from a RIS are measured in its local frame: azimuth from the
//!   boresight in the horizontal plane, elevation from the horizontal plane.
//! - The direct-link LoS phase is `2π·d/λ mod 2π`.
//! - The RIS spatial correlation is `R_uv = sinc(2‖loc_u − loc_v‖/λ)` with
//!   `sinc(x) = sin(πx)/(πx)`.

use crate::linalg::{clip_psd, psd_factor, standard_complex_normal};
use crate::scenario::{LargeScale, Position, ScenarioConfig, SimRng, Topology};
use crate::{CMatrix, CVector, Complex64, Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use std::f64::consts::PI;
use std::io::{Read, Write};

const TWO_PI: f64 = 2.0 * PI;

/// Maps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// RIS phase configuration for `L` surfaces of `N` elements each.
///
/// Only the angles are stored; unit-modulus coefficients are regenerated
/// from them on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase {
    angles: Vec<f64>,
    num_ris: usize,
    elements: usize,
}

impl RisPhase {
    pub fn new(angles: Vec<f64>, num_ris: usize, elements: usize) -> Result<Self> {
        if angles.len() != num_ris * elements {
            return Err(Error::DimensionMismatch(format!(
                "expected {} phase angles, got {}",
                num_ris * elements,
                angles.len()
            )));
        }
        Ok(Self { angles: angles.into_iter().map(wrap_angle).collect(), num_ris, elements })
    }

    pub fn zeros(num_ris: usize, elements: usize) -> Self {
        Self { angles: vec![0.0; num_ris * elements], num_ris, elements }
    }

    pub fn random(num_ris: usize, elements: usize, rng: &mut SimRng) -> Self {
        let angles = (0..num_ris * elements).map(|_| wrap_angle(rng.random::<f64>() * TWO_PI)).collect();
        Self { angles, num_ris, elements }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_ris(&self) -> usize {
        self.num_ris
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    /// `φ_{l,n} = e^{jθ_{l,n}}`.
    pub fn coefficient(&self, l: usize, n: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angles[l * self.elements + n])
    }

    pub fn coefficients(&self, l: usize) -> Vec<Complex64> {
        (0..self.elements).map(|n| self.coefficient(l, n)).collect()
    }
}

/// UPA response toward azimuth `theta` and elevation `phi`.
pub fn array_response(theta: f64, phi: f64, n_y: usize, n_z: usize, spacing: f64, wavelength: f64) -> CVector {
    let k = TWO_PI * spacing / wavelength;
    let (h, v) = (theta.sin() * phi.cos(), phi.sin());
    CVector::from_fn(n_y * n_z, |idx, _| {
        let (a, b) = ((idx / n_z) as f64, (idx % n_z) as f64);
        Complex64::from_polar(1.0, k * (a * h + b * v))
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Isotropic-scattering spatial correlation of the RIS elements, projected
/// onto the PSD cone.
pub fn spatial_correlation(n_y: usize, n_z: usize, spacing: f64, wavelength: f64) -> CMatrix {
    let n = n_y * n_z;
    let loc = |i: usize| (((i / n_z) as f64) * spacing, ((i % n_z) as f64) * spacing);
    let r = CMatrix::from_fn(n, n, |u, v| {
        let (pu, pv) = (loc(u), loc(v));
        let d = ((pu.0 - pv.0).powi(2) + (pu.1 - pv.1).powi(2)).sqrt();
        Complex64::new(sinc(2.0 * d / wavelength), 0.0)
    });
    let (mut clipped, _) = clip_psd(&r);
    for i in 0..n {
        clipped[(i, i)] = Complex64::new(clipped[(i, i)].re, 0.0);
    }
    clipped
}

/// Azimuth (from boresight) and elevation of `target` seen from a RIS.
pub fn ris_angles(ris: &Position, boresight: f64, target: &Position) -> (f64, f64) {
    let (dx, dy, dz) = (target.x - ris.x, target.y - ris.y, target.z - ris.z);
    let along = dx * boresight.cos() + dy * boresight.sin();
    let across = -dx * boresight.sin() + dy * boresight.cos();
    let horiz = (dx * dx + dy * dy).sqrt();
    (across.atan2(along), dz.atan2(horiz))
}

/// One coherence block's true channels and the statistics the estimator
/// needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Direct AP–UE channel, `M × K`.
    pub h_au: CMatrix,
    /// LoS mean of the direct channel, `M × K`.
    pub h_au_mean: CMatrix,
    /// Scattered power `β/(κ+1)` of each direct link, `M × K`.
    pub au_scatter: DMatrix<f64>,
    /// AP–RIS channels, one `M × N` matrix per RIS (row `m` is `h_ar,mlᵀ`).
    pub h_ar: Vec<CMatrix>,
    /// RIS–UE channels, one `N × K` matrix per RIS.
    pub h_ru: Vec<CMatrix>,
    /// LoS means of the RIS–UE channels.
    pub h_ru_mean: Vec<CMatrix>,
    /// Scattered power `β/(κ+1)` of each RIS–UE link, `L × K`.
    pub ru_scatter: DMatrix<f64>,
    /// RIS spatial correlation `R`, `N × N`.
    pub correlation: CMatrix,
}

impl ChannelRealization {
    pub fn num_aps(&self) -> usize {
        self.h_au.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.h_au.ncols()
    }

    pub fn num_ris(&self) -> usize {
        self.h_ar.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.correlation.nrows()
    }

    /// `Γ_{ru,lk} = β/(κ+1)·R`.
    pub fn ru_covariance(&self, l: usize, k: usize) -> CMatrix {
        &self.correlation * Complex64::new(self.ru_scatter[(l, k)], 0.0)
    }

    /// The same block with every RIS removed.
    pub fn without_ris(&self) -> Self {
        Self {
            h_ar: Vec::new(),
            h_ru: Vec::new(),
            h_ru_mean: Vec::new(),
            ru_scatter: DMatrix::zeros(0, self.num_ues()),
            ..self.clone()
        }
    }

    /// Writes a little-endian binary dump: the magic `CFRISCH1`, four `u64`
    /// dimensions `(M, K, L, N)`, then row-major complex doubles (re, im) for
    /// `h_au`, `h_au_mean`, each `h_ar`, each `h_ru`, each `h_ru_mean` and
    /// `correlation`, and row-major doubles for `au_scatter`, `ru_scatter`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        for d in [self.num_aps(), self.num_ues(), self.num_ris(), self.ris_elements()] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let put_c = |m: &CMatrix, w: &mut W| -> Result<()> {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].re.to_le_bytes())?;
                    w.write_all(&m[(i, j)].im.to_le_bytes())?;
                }
            }
            Ok(())
        };
        put_c(&self.h_au, &mut w)?;
        put_c(&self.h_au_mean, &mut w)?;
        for m in self.h_ar.iter().chain(&self.h_ru).chain(&self.h_ru_mean) {
            put_c(m, &mut w)?;
        }
        put_c(&self.correlation, &mut w)?;
        for m in [&self.au_scatter, &self.ru_scatter] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("bad channel dump magic".into()));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        let [m, k, l, n] = dims;
        let f64_in = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let get_c = |rows: usize, cols: usize, r: &mut R| -> Result<CMatrix> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let re = f64_in(r)?;
                let im = f64_in(r)?;
                data.push(Complex64::new(re, im));
            }
            Ok(CMatrix::from_row_slice(rows, cols, &data))
        };
        let h_au = get_c(m, k, &mut r)?;
        let h_au_mean = get_c(m, k, &mut r)?;
        let h_ar = (0..l).map(|_| get_c(m, n, &mut r)).collect::<Result<Vec<_>>>()?;
        let h_ru = (0..l).map(|_| get_c(n, k, &mut r)).collect::<Result<Vec<_>>>()?;
        let h_ru_mean = (0..l).map(|_| get_c(n, k, &mut r)).collect::<Result<Vec<_>>>()?;
        let correlation = get_c(n, n, &mut r)?;
        let get_r = |rows: usize, cols: usize, r: &mut R| -> Result<DMatrix<f64>> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            Ok(DMatrix::from_row_slice(rows, cols, &data))
        };
        let au_scatter = get_r(m, k, &mut r)?;
        let ru_scatter = get_r(l, k, &mut r)?;
        Ok(Self { h_au, h_au_mean, au_scatter, h_ar, h_ru, h_ru_mean, ru_scatter, correlation })
    }
}

const BINARY_MAGIC: &[u8; 8] = b"CFRISCH1";

/// Caches the deterministic parts of a topology's channels (LoS means,
/// AP–RIS links, correlation factor) and draws the random parts.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    h_au_mean: CMatrix,
    au_scatter: DMatrix<f64>,
    h_ar: Vec<CMatrix>,
    h_ru_mean: Vec<CMatrix>,
    ru_scatter: DMatrix<f64>,
    correlation: CMatrix,
    correlation_factor: CMatrix,
}

impl ChannelSampler {
    pub fn new(config: &ScenarioConfig, topo: &Topology, stats: &LargeScale) -> Result<Self> {
        let (m, k, l) = (topo.num_aps(), topo.num_ues(), topo.num_ris());
        if stats.ap_ue.shape() != (m, k) || stats.ris_ue.shape() != (l, k) || stats.ap_ris.shape() != (m, l) {
            return Err(Error::DimensionMismatch("link statistics do not match topology".into()));
        }
        let lambda = config.wavelength();
        let (ny, nz, dr) = (config.ris_cols, config.ris_rows, config.ris_element_spacing);
        let n = ny * nz;

        let h_au_mean = CMatrix::from_fn(m, k, |mi, ki| {
            let s = &stats.ap_ue[(mi, ki)];
            let phase = wrap_angle(TWO_PI * topo.ap_ue_distance[(mi, ki)] / lambda);
            Complex64::from_polar(s.los_amplitude(), phase)
        });
        let au_scatter = DMatrix::from_fn(m, k, |mi, ki| stats.ap_ue[(mi, ki)].scattered_power());

        let mut h_ar = Vec::with_capacity(l);
        let mut h_ru_mean = Vec::with_capacity(l);
        for li in 0..l {
            let pos = &topo.ris_positions[li];
            let boresight = topo.ris_orientations[li];
            let mut ar = CMatrix::zeros(m, n);
            for mi in 0..m {
                let (th, ph) = ris_angles(pos, boresight, &topo.ap_positions[mi]);
                let a = array_response(th, ph, ny, nz, dr, lambda);
                let amp = stats.ap_ris[(mi, li)].los_amplitude();
                for ni in 0..n {
                    ar[(mi, ni)] = a[ni] * amp;
                }
            }
            h_ar.push(ar);
            let mut ru = CMatrix::zeros(n, k);
            for ki in 0..k {
                let (th, ph) = ris_angles(pos, boresight, &topo.ue_positions[ki]);
                let a = array_response(th, ph, ny, nz, dr, lambda);
                let amp = stats.ris_ue[(li, ki)].los_amplitude();
                ru.set_column(ki, &(a * Complex64::new(amp, 0.0)));
            }
            h_ru_mean.push(ru);
        }
        let ru_scatter = DMatrix::from_fn(l, k, |li, ki| stats.ris_ue[(li, ki)].scattered_power());
        let correlation = spatial_correlation(ny, nz, dr, lambda);
        let correlation_factor = psd_factor(&correlation);
        Ok(Self { h_au_mean, au_scatter, h_ar, h_ru_mean, ru_scatter, correlation, correlation_factor })
    }

    /// Draws one realization. Direct links are drawn first (AP-major), then
    /// RIS–UE links (RIS-major, UE, element).
    pub fn draw(&self, rng: &mut SimRng) -> ChannelRealization {
        let (m, k) = self.h_au_mean.shape();
        let n = self.correlation.nrows();
        let mut h_au = self.h_au_mean.clone();
        for mi in 0..m {
            for ki in 0..k {
                h_au[(mi, ki)] += standard_complex_normal(rng) * self.au_scatter[(mi, ki)].sqrt();
            }
        }
        let mut h_ru = Vec::with_capacity(self.h_ru_mean.len());
        for (li, mean) in self.h_ru_mean.iter().enumerate() {
            let mut ru = mean.clone();
            for ki in 0..k {
                let z = CVector::from_fn(n, |_, _| standard_complex_normal(rng));
                let scatter = &self.correlation_factor * z * Complex64::new(self.ru_scatter[(li, ki)].sqrt(), 0.0);
                for ni in 0..n {
                    ru[(ni, ki)] += scatter[ni];
                }
            }
            h_ru.push(ru);
        }
        ChannelRealization {
            h_au,
            h_au_mean: self.h_au_mean.clone(),
            au_scatter: self.au_scatter.clone(),
            h_ar: self.h_ar.clone(),
            h_ru,
            h_ru_mean: self.h_ru_mean.clone(),
            ru_scatter: self.ru_scatter.clone(),
            correlation: self.correlation.clone(),
        }
    }
}

/// Draws one coherence block for a topology with known link statistics.
pub fn sample_channels(
    config: &ScenarioConfig,
    topo: &Topology,
    stats: &LargeScale,
    rng: &mut SimRng,
) -> Result<ChannelRealization> {
    Ok(ChannelSampler::new(config, topo, stats)?.draw(rng))
}

fn check_phase(real: &ChannelRealization, phase: &RisPhase) -> Result<()> {
    if phase.num_ris() != real.num_ris() || (real.num_ris() > 0 && phase.elements() != real.ris_elements()) {
        return Err(Error::DimensionMismatch(format!(
            "phase is {}x{}, channel has {} RIS of {} elements",
            phase.num_ris(),
            phase.elements(),
            real.num_ris(),
            real.ris_elements()
        )));
    }
    Ok(())
}

fn cascade(direct: &CMatrix, h_ar: &[CMatrix], h_ru: &[CMatrix], phase: &RisPhase) -> CMatrix {
    let mut g = direct.clone();
    for (l, (ar, ru)) in h_ar.iter().zip(h_ru).enumerate() {
        let mut scaled = ar.clone();
        for (n, phi) in phase.coefficients(l).into_iter().enumerate() {
            scaled.column_mut(n).scale_mut(1.0);
            for v in scaled.column_mut(n).iter_mut() {
                *v *= phi;
            }
        }
        g += scaled * ru;
    }
    g
}

/// `g_mk = h_au,mk + Σ_l h_ar,mlᵀ Φ_l h_ru,lk`, stacked as an `M × K` matrix.
pub fn effective_channel(real: &ChannelRealization, phase: &RisPhase) -> Result<CMatrix> {
    check_phase(real, phase)?;
    Ok(cascade(&real.h_au, &real.h_ar, &real.h_ru, phase))
}

/// LoS part `ḡ_k` of the effective channel, stacked as `M × K`.
pub fn mean_effective_channel(real: &ChannelRealization, phase: &RisPhase) -> Result<CMatrix> {
    check_phase(real, phase)?;
    Ok(cascade(&real.h_au_mean, &real.h_ar, &real.h_ru_mean, phase))
}

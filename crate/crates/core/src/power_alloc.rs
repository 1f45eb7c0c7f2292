//! Power allocation for a fixed activation and RIS configuration: successive
//! convex approximation of the subtractive objective
//! `F(p) = f(p)·(1 − α·P_dyn) − α·Σ c_k p_k − α·P_stat`.
//!
//! Each SCA iteration replaces every rate by its concave DC lower bound at
//! the current point and maximizes the surrogate over the (polyhedral)
//! feasible set with a log-barrier Newton method. QoS is imposed through the
//! exact SINR constraint `p_k ≥ t·(Σ_i γ_{k,i} p_i + σ²)`, `t = 2^{ξ/B_eff} − 1`,
//! which is linear in `p`; every iterate therefore satisfies the true QoS.
//!
//! Internally powers are scaled by `1/σ²` so that all quantities are O(1).

use crate::power_model::PowerSplit;
use crate::system::{BlockModel, Precoded};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

/// One power-allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProblem {
    pub gamma: DMatrix<f64>,
    /// `η_{mk}`, the power AP `m` spends per unit of `p_k` (zero rows for
    /// sleeping APs).
    pub eta: DMatrix<f64>,
    /// `σ_d²`, W.
    pub noise: f64,
    /// `B·prelog`, Hz.
    pub bandwidth: f64,
    /// `ξ`, bits/s.
    pub qos_rate: f64,
    pub max_ap_power: f64,
    pub per_ue_cap: f64,
    /// Dinkelbach parameter, bits/J.
    pub alpha: f64,
    pub split: PowerSplit,
}

/// Result of [`sca_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub power: Vec<f64>,
    pub iterations: usize,
    /// True objective `F` at the start point and after every iteration.
    pub objective_history: Vec<f64>,
}

/// Result of one convex subproblem solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub power: Vec<f64>,
    /// Upper bound on the surrogate suboptimality from the barrier
    /// (number of constraints divided by the final barrier weight), in
    /// units of the surrogate divided by `B_eff`.
    pub duality_gap: f64,
    pub newton_steps: usize,
}

impl PowerProblem {
    pub fn new(model: &BlockModel, pre: &Precoded, alpha: f64) -> Self {
        Self {
            gamma: pre.gamma.clone(),
            eta: pre.eta(),
            noise: model.noise,
            bandwidth: model.effective_bandwidth(),
            qos_rate: model.qos_rate,
            max_ap_power: model.max_ap_power,
            per_ue_cap: model.per_ue_cap,
            alpha,
            split: model.split(&pre.activation),
        }
    }

    pub fn num_ues(&self) -> usize {
        self.gamma.nrows()
    }

    /// `c_k = Σ_m η_{mk}`.
    pub fn beam_gain(&self) -> Vec<f64> {
        (0..self.num_ues()).map(|k| self.eta.column(k).sum()).collect()
    }

    /// Required SINR `t = 2^{ξ/B_eff} − 1`.
    pub fn sinr_target(&self) -> f64 {
        (self.qos_rate / self.bandwidth).exp2() - 1.0
    }

    /// `D_k(p) = Σ_i γ_{k,i} p_i + σ²`.
    fn interference(&self, p: &[f64], k: usize) -> f64 {
        (0..p.len()).map(|i| self.gamma[(k, i)] * p[i]).sum::<f64>() + self.noise
    }

    pub fn sinr(&self, p: &[f64]) -> Vec<f64> {
        (0..p.len()).map(|k| p[k] / self.interference(p, k)).collect()
    }

    /// `f(p)`, bits/s.
    pub fn sum_rate(&self, p: &[f64]) -> f64 {
        self.bandwidth * self.sinr(p).iter().map(|s| (1.0 + s).log2()).sum::<f64>()
    }

    /// `1 − α·P_dyn`, the weight of the sum rate in `F`.
    pub fn rate_weight(&self) -> f64 {
        1.0 - self.alpha * self.split.dynamic_per_bps()
    }

    /// True subtractive objective `F(p)`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        let c = self.beam_gain();
        let tx: f64 = c.iter().zip(p).map(|(c, p)| c * p).sum();
        self.sum_rate(p) * self.rate_weight() - self.alpha * (tx + self.split.static_w)
    }

    pub fn per_ap_tx(&self, p: &[f64]) -> Vec<f64> {
        (0..self.eta.nrows()).map(|m| (0..p.len()).map(|k| self.eta[(m, k)] * p[k]).sum()).collect()
    }

    pub fn caps_ok(&self, p: &[f64], tol: f64) -> bool {
        p.iter().all(|&x| x >= 0.0 && x <= self.per_ue_cap * (1.0 + tol))
            && self.per_ap_tx(p).iter().all(|&t| t <= self.max_ap_power * (1.0 + tol))
    }

    pub fn qos_ok(&self, p: &[f64], tol: f64) -> bool {
        let t = self.sinr_target();
        self.sinr(p).iter().all(|&s| s >= t * (1.0 - tol))
    }

    pub fn is_feasible(&self, p: &[f64], tol: f64) -> bool {
        self.caps_ok(p, tol) && self.qos_ok(p, tol)
    }

    /// Componentwise-smallest power meeting every QoS constraint with
    /// equality, `(I − tΓ)p = tσ²·1`, or `None` if no non-negative solution
    /// exists (the QoS targets are jointly unattainable at any power).
    pub fn min_qos_power(&self) -> Option<Vec<f64>> {
        let k = self.num_ues();
        let t = self.sinr_target();
        if t == 0.0 {
            return Some(vec![0.0; k]);
        }
        let a = DMatrix::identity(k, k) - &self.gamma * t;
        let b = DVector::from_element(k, t);
        let x = a.lu().solve(&b)?;
        if x.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Some(x.iter().map(|v| v * self.noise).collect())
        } else {
            None
        }
    }

    /// Whether any power vector satisfies QoS and all caps.
    pub fn qos_feasible(&self) -> bool {
        self.min_qos_power().is_some_and(|p| self.caps_ok(&p, 1e-12))
    }

    /// Moves a cap-feasible `p` toward the minimum QoS power until QoS
    /// holds, by bisection on the mixing weight.
    pub fn repair(&self, p: &[f64]) -> Result<Vec<f64>> {
        if self.qos_ok(p, 0.0) && self.caps_ok(p, 1e-12) {
            return Ok(p.to_vec());
        }
        let p_min = self.min_qos_power().ok_or_else(|| Error::QosInfeasible("QoS targets are unattainable".into()))?;
        if !self.caps_ok(&p_min, 1e-12) {
            return Err(Error::QosInfeasible("QoS needs more power than the caps allow".into()));
        }
        let mix = |lam: f64| -> Vec<f64> { p.iter().zip(&p_min).map(|(a, b)| (1.0 - lam) * a + lam * b).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let q = mix(mid);
            if self.qos_ok(&q, 0.0) && self.caps_ok(&q, 1e-12) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(mix(hi))
    }
}

/// DC lower bound of `R_k` around `p_s` and its gradient, in bits/s/Hz:
///
/// `R̃_k(p) = log2(p_k + D_k(p)) − log2(D_k(p_s)) − Σ_j γ_{k,j}(p_j − p_{s,j}) / (ln2·D_k(p_s))`.
pub fn rate_lower_bound(
    p: &[f64],
    p_s: &[f64],
    gamma: &DMatrix<f64>,
    noise: f64,
    k: usize,
) -> (f64, Vec<f64>) {
    let n = p.len();
    let d = |x: &[f64]| (0..n).map(|i| gamma[(k, i)] * x[i]).sum::<f64>() + noise;
    let (d_p, d_s) = (d(p), d(p_s));
    let lin: f64 = (0..n).map(|j| gamma[(k, j)] * (p[j] - p_s[j])).sum::<f64>() / (LN_2 * d_s);
    let value = (p[k] + d_p).log2() - d_s.log2() - lin;
    let grad = (0..n)
        .map(|j| {
            let own = if j == k { 1.0 } else { 0.0 };
            (own + gamma[(k, j)]) / (LN_2 * (p[k] + d_p)) - gamma[(k, j)] / (LN_2 * d_s)
        })
        .collect();
    (value, grad)
}

/// Linear constraints `g_iᵀx ≤ h_i` in scaled units `x = p/σ²`.
struct Polytope {
    rows: Vec<(DVector<f64>, f64)>,
}

impl Polytope {
    fn slacks(&self, x: &DVector<f64>) -> Vec<f64> {
        self.rows.iter().map(|(g, h)| h - g.dot(x)).collect()
    }

    fn strictly_inside(&self, x: &DVector<f64>) -> bool {
        self.slacks(x).iter().all(|&s| s > 0.0)
    }
}

fn build_polytope(prob: &PowerProblem) -> Polytope {
    let k = prob.num_ues();
    let s2 = prob.noise;
    let t = prob.sinr_target();
    let mut rows = Vec::new();
    let mut push = |g: DVector<f64>, h: f64| {
        let n = g.norm();
        if n > 0.0 {
            rows.push((g / n, h / n));
        }
    };
    for j in 0..k {
        push(DVector::from_fn(k, |i, _| if i == j { 1.0 } else { 0.0 }), prob.per_ue_cap / s2);
    }
    for m in 0..prob.eta.nrows() {
        if prob.eta.row(m).iter().any(|&v| v > 0.0) {
            push(DVector::from_fn(k, |i, _| prob.eta[(m, i)]), prob.max_ap_power / s2);
        }
    }
    if t > 0.0 {
        for j in 0..k {
            let g = DVector::from_fn(k, |i, _| t * prob.gamma[(j, i)] - if i == j { 1.0 } else { 0.0 });
            push(g, -t);
        }
    } else {
        for j in 0..k {
            let floor = 1e-9 * upper_bound(prob, j) / s2;
            push(DVector::from_fn(k, |i, _| if i == j { -1.0 } else { 0.0 }), -floor);
        }
    }
    Polytope { rows }
}

/// Largest value `p_k` can take on its own: the per-UE cap or the tightest
/// per-AP cap.
fn upper_bound(prob: &PowerProblem, k: usize) -> f64 {
    let mut ub = prob.per_ue_cap;
    for m in 0..prob.eta.nrows() {
        let e = prob.eta[(m, k)];
        if e > 0.0 {
            ub = ub.min(prob.max_ap_power / e);
        }
    }
    ub
}

/// Surrogate in scaled units, divided by `B_eff`:
/// `w·Σ_k R̃_k(x) − (α σ²/B_eff)·cᵀx` with its gradient and Hessian.
struct Surrogate {
    /// `a_k = e_k + γ_k` (row k).
    a: Vec<DVector<f64>>,
    /// Constant part of each `R̃_k` and linear coefficient vectors.
    lin: Vec<DVector<f64>>,
    offset: f64,
    weight: f64,
    cost: DVector<f64>,
}

impl Surrogate {
    fn new(prob: &PowerProblem, x_s: &DVector<f64>) -> Self {
        let k = prob.num_ues();
        let mut a = Vec::with_capacity(k);
        let mut lin = Vec::with_capacity(k);
        let mut offset = 0.0;
        for j in 0..k {
            let gamma_row = DVector::from_fn(k, |i, _| prob.gamma[(j, i)]);
            let d_s = gamma_row.dot(x_s) + 1.0;
            offset += -d_s.log2() + gamma_row.dot(x_s) / (LN_2 * d_s);
            lin.push(&gamma_row / (LN_2 * d_s));
            let mut row = gamma_row;
            row[j] += 1.0;
            a.push(row);
        }
        let c = prob.beam_gain();
        let scale = prob.alpha * prob.noise / prob.bandwidth;
        Self { a, lin, offset, weight: prob.rate_weight(), cost: DVector::from_fn(k, |i, _| c[i] * scale) }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut r = self.offset;
        for (a, l) in self.a.iter().zip(&self.lin) {
            r += (a.dot(x) + 1.0).log2() - l.dot(x);
        }
        self.weight * r - self.cost.dot(x)
    }

    fn gradient_hessian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = x.len();
        let mut g = -&self.cost;
        let mut h = DMatrix::zeros(k, k);
        for (a, l) in self.a.iter().zip(&self.lin) {
            let u = a.dot(x) + 1.0;
            g += (a / (LN_2 * u) - l) * self.weight;
            h -= (a * a.transpose()) * (self.weight / (LN_2 * u * u));
        }
        (g, h)
    }
}

/// Maximizes the surrogate built at `p_s` over the feasible polytope.
///
/// `p_s` must satisfy the caps and QoS. If the surrogate is not concave
/// (`1 − α·P_dyn ≤ 0`) the minimum QoS power is the global maximizer of
/// the true objective and is returned directly.
pub fn solve_convex_subproblem(prob: &PowerProblem, p_s: &[f64]) -> Result<SubproblemSolution> {
    let k = prob.num_ues();
    if p_s.len() != k {
        return Err(Error::DimensionMismatch(format!("{} powers for {k} UEs", p_s.len())));
    }
    let p_min = prob.min_qos_power().ok_or_else(|| Error::QosInfeasible("QoS targets are unattainable".into()))?;
    if !prob.caps_ok(&p_min, 1e-12) {
        return Err(Error::QosInfeasible("QoS needs more power than the caps allow".into()));
    }
    let keep = || SubproblemSolution { power: p_s.to_vec(), duality_gap: 0.0, newton_steps: 0 };
    if prob.rate_weight() <= 0.0 {
        let best = if prob.objective(&p_min) > prob.objective(p_s) { p_min } else { p_s.to_vec() };
        return Ok(SubproblemSolution { power: best, duality_gap: 0.0, newton_steps: 0 });
    }
    let s2 = prob.noise;
    let poly = build_polytope(prob);
    let x_s = DVector::from_fn(k, |i, _| p_s[i] / s2);

    // A strictly interior anchor: slightly above the minimum QoS power, or
    // twice the positivity floor when there is no QoS requirement.
    let t = prob.sinr_target();
    let anchor = [1e-2, 1e-4, 1e-6].iter().find_map(|&d| {
        let x = if t > 0.0 {
            DVector::from_fn(k, |i, _| p_min[i] / s2 * (1.0 + d))
        } else {
            DVector::from_fn(k, |i, _| 2e-9 * upper_bound(prob, i) / s2 * (1.0 + d))
        };
        poly.strictly_inside(&x).then_some(x)
    });
    let Some(anchor) = anchor else {
        return Ok(keep());
    };
    // Starting right on an active cap leaves the barrier Hessian too badly
    // conditioned to factor, so move a little toward the anchor first.
    let start = [1e-3, 1e-2, 0.1, 0.5, 1.0].iter().find_map(|&theta| {
        let x = &x_s * (1.0 - theta) + &anchor * theta;
        poly.strictly_inside(&x).then_some(x)
    });
    let Some(mut x) = start else {
        return Ok(keep());
    };

    let sur = Surrogate::new(prob, &x_s);
    let m = poly.rows.len() as f64;
    let gap_tol = 1e-11 * (1.0 + sur.value(&x_s).abs());
    let mut tau = m / (1.0 + sur.value(&x).abs());
    let mut newton_steps = 0;
    let barrier = |x: &DVector<f64>, tau: f64| -> f64 {
        let mut v = -tau * sur.value(x);
        for s in poly.slacks(x) {
            if s <= 0.0 {
                return f64::INFINITY;
            }
            v -= s.ln();
        }
        v
    };
    loop {
        for _ in 0..100 {
            let (g_s, h_s) = sur.gradient_hessian(&x);
            let mut grad = -g_s * tau;
            let mut hess = -h_s * tau;
            for ((g, _), s) in poly.rows.iter().zip(poly.slacks(&x)) {
                grad += g / s;
                hess += (g * g.transpose()) / (s * s);
            }
            let Some(chol) = regularized_cholesky(hess) else { break };
            let dx = -chol.solve(&grad);
            let decrement = -grad.dot(&dx);
            if decrement / 2.0 < 1e-12 {
                break;
            }
            newton_steps += 1;
            let f0 = barrier(&x, tau);
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-14 {
                let cand = &x + &dx * step;
                let f1 = barrier(&cand, tau);
                if f1.is_finite() && f1 <= f0 - 0.25 * step * decrement {
                    x = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m / tau < gap_tol {
            break;
        }
        tau *= 10.0;
        if tau > 1e30 {
            break;
        }
    }

    let power: Vec<f64> = x.iter().map(|v| v * s2).collect();
    // Minorize-maximize safeguard: the surrogate never exceeds the true
    // objective and is tight at p_s, so a worse true value means the solve
    // went wrong numerically.
    if prob.objective(&power) < prob.objective(p_s) || !prob.is_feasible(&power, 1e-9) {
        return Ok(keep());
    }
    Ok(SubproblemSolution { power, duality_gap: m / tau, newton_steps })
}

/// Cholesky factor of `h`, adding a growing diagonal shift when the plain
/// factorization fails on a numerically semidefinite matrix.
fn regularized_cholesky(h: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = h.diagonal().amax();
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    if let Some(chol) = h.clone().cholesky() {
        return Some(chol);
    }
    let mut shift = 1e-14 * scale;
    while shift <= 1e-6 * scale {
        let mut shifted = h.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(chol) = shifted.cholesky() {
            return Some(chol);
        }
        shift *= 100.0;
    }
    None
}

/// Successive convex approximation from a feasible `p_init`.
///
/// Stops when `‖p^{s+1} − p^s‖ / ‖p^s‖ < tol` or after `max_iters` solves.
pub fn sca_solve(prob: &PowerProblem, p_init: &[f64], tol: f64, max_iters: usize) -> Result<ScaOutcome> {
    if !prob.is_feasible(p_init, 1e-9) {
        return Err(Error::InvalidArgument("SCA start point must be feasible".into()));
    }
    let mut p = p_init.to_vec();
    let mut history = vec![prob.objective(&p)];
    let mut iterations = 0;
    while iterations < max_iters {
        let next = solve_convex_subproblem(prob, &p)?.power;
        iterations += 1;
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = p.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        p = next;
        history.push(prob.objective(&p));
        if diff <= tol * norm {
            break;
        }
    }
    Ok(ScaOutcome { power: p, iterations, objective_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_model::PowerSplit;
    use crate::scenario::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    const NOISE: f64 = 6.3e-13;

    fn scalar_problem(alpha: f64, c: f64) -> PowerProblem {
        PowerProblem {
            gamma: DMatrix::zeros(1, 1),
            eta: DMatrix::from_element(1, 1, c),
            noise: NOISE,
            bandwidth: 20e6,
            qos_rate: 0.0,
            max_ap_power: 1e6,
            per_ue_cap: 1e6,
            alpha,
            split: PowerSplit { dynamic_per_gbps: 0.1, static_w: 30.0 },
        }
    }

    pub(crate) fn random_problem(seed: u64, k: usize, alpha: f64) -> PowerProblem {
        let mut rng = rng_from_seed(seed);
        let m = k + 3;
        let gamma = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() * 0.02);
        let eta = DMatrix::from_fn(m, k, |_, _| rng.random::<f64>() * 1e10);
        PowerProblem {
            gamma,
            eta,
            noise: NOISE,
            bandwidth: 20e6,
            qos_rate: 20e6 * 0.5,
            max_ap_power: 0.2,
            per_ue_cap: 0.2,
            alpha,
            split: PowerSplit { dynamic_per_gbps: 0.1 + 0.01 * m as f64, static_w: 40.0 },
        }
    }

    #[test]
    fn bound_is_tight_at_expansion_point() {
        let prob = random_problem(1, 3, 1e6);
        let p = [2e-12, 5e-12, 1e-12];
        for k in 0..3 {
            let (v, _) = rate_lower_bound(&p, &p, &prob.gamma, NOISE, k);
            let exact = (1.0 + prob.sinr(&p)[k]).log2();
            assert!((v - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn bound_exact_without_interference() {
        let gamma = DMatrix::zeros(2, 2);
        let (v, _) = rate_lower_bound(&[3e-12, 1e-12], &[1e-13, 9e-12], &gamma, NOISE, 0);
        assert!((v - (1.0 + 3e-12 / NOISE).log2()).abs() < 1e-12);
    }

    #[test]
    fn bound_gradient_matches_finite_difference() {
        let prob = random_problem(2, 3, 0.0);
        let ps = [2e-12, 5e-12, 1e-12];
        let p = [3e-12, 4e-12, 2e-12];
        for k in 0..3 {
            let (_, g) = rate_lower_bound(&p, &ps, &prob.gamma, NOISE, k);
            for j in 0..3 {
                let h = 1e-16;
                let mut a = p;
                let mut b = p;
                a[j] += h;
                b[j] -= h;
                let fd = (rate_lower_bound(&a, &ps, &prob.gamma, NOISE, k).0
                    - rate_lower_bound(&b, &ps, &prob.gamma, NOISE, k).0)
                    / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e9), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn scalar_closed_form_optimum() {
        let (alpha, c) = (2e6, 1e9);
        let prob = scalar_problem(alpha, c);
        let w = prob.rate_weight();
        let expect = prob.bandwidth * w / (LN_2 * alpha * c) - NOISE;
        assert!(expect > 0.0);
        let out = sca_solve(&prob, &[1e-13], 1e-4, 50).unwrap();
        assert!((out.power[0] - expect).abs() <= 1e-6 * expect, "{} vs {expect}", out.power[0]);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn rate_only_objective_hits_a_cap() {
        for seed in 0..20 {
            let prob = random_problem(seed, 3, 0.0);
            let Some(p0) = prob.min_qos_power() else { continue };
            if !prob.caps_ok(&p0, 0.0) {
                continue;
            }
            let p = sca_solve(&prob, &p0, 1e-6, 200).unwrap().power;
            let tx = prob.per_ap_tx(&p);
            for k in 0..3 {
                let on_ue_cap = p[k] >= prob.per_ue_cap * (1.0 - 1e-6);
                let on_ap_cap = (0..prob.eta.nrows())
                    .any(|m| prob.eta[(m, k)] > 0.0 && tx[m] >= prob.max_ap_power * (1.0 - 1e-6));
                assert!(on_ue_cap || on_ap_cap, "seed {seed} ue {k}");
            }
        }
    }

    #[test]
    fn minimum_power_meets_qos_with_equality() {
        let prob = random_problem(5, 4, 1e6);
        let p = prob.min_qos_power().unwrap();
        let t = prob.sinr_target();
        for s in prob.sinr(&p) {
            assert!((s - t).abs() < 1e-9 * t);
        }
    }

    #[test]
    fn unattainable_qos_detected() {
        let mut prob = random_problem(6, 2, 1e6);
        prob.gamma = DMatrix::from_element(2, 2, 5.0);
        assert!(prob.min_qos_power().is_none());
        assert!(prob.repair(&[1e-12, 1e-12]).is_err());
        assert!(matches!(solve_convex_subproblem(&prob, &[1e-12, 1e-12]), Err(Error::QosInfeasible(_))));
    }

    #[test]
    fn repair_reaches_feasibility() {
        let prob = random_problem(7, 3, 1e6);
        let tiny = [1e-16, 1e-16, 1e-16];
        assert!(!prob.qos_ok(&tiny, 0.0));
        let fixed = prob.repair(&tiny).unwrap();
        assert!(prob.is_feasible(&fixed, 1e-12));
    }

    #[test]
    fn no_interference_converges_fast() {
        let mut prob = random_problem(8, 3, 5e6);
        prob.gamma = DMatrix::zeros(3, 3);
        let p0 = prob.min_qos_power().unwrap();
        let out = sca_solve(&prob, &p0, 1e-4, 50).unwrap();
        assert!(out.iterations <= 2);
    }

    #[test]
    fn non_concave_weight_returns_minimum_power() {
        let prob = random_problem(9, 2, 1e11);
        assert!(prob.rate_weight() < 0.0);
        let p0 = prob.repair(&[1e-13, 1e-13]).unwrap();
        let sol = solve_convex_subproblem(&prob, &p0).unwrap();
        assert!(prob.objective(&sol.power) >= prob.objective(&p0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bound_is_global_minorant(seed in 0u64..1000, scale in proptest::collection::vec(0.01f64..100.0, 6)) {
            let prob = random_problem(seed, 3, 0.0);
            let ps = [scale[0] * 1e-12, scale[1] * 1e-12, scale[2] * 1e-12];
            let p = [scale[3] * 1e-12, scale[4] * 1e-12, scale[5] * 1e-12];
            let exact = prob.sinr(&p);
            for k in 0..3 {
                let (v, _) = rate_lower_bound(&p, &ps, &prob.gamma, NOISE, k);
                prop_assert!(v <= (1.0 + exact[k]).log2() + 1e-12);
            }
        }

        #[test]
        fn sca_ascends_and_stays_feasible(seed in 0u64..1000, alpha_scale in 0.0f64..3.0) {
            let prob = random_problem(seed, 3, alpha_scale * 1e7);
            if !prob.qos_feasible() {
                return Ok(());
            }
            let p0 = prob.repair(&[prob.per_ue_cap * 1e-12; 3]).unwrap();
            let out = sca_solve(&prob, &p0, 1e-4, 50).unwrap();
            for w in out.objective_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
            }
            prop_assert!(prob.is_feasible(&out.power, 1e-9));
        }
    }
}

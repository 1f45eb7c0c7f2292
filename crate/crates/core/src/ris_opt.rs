//! RIS phase optimization over the full `L·N` angle vector: gradient
//! projection with central finite differences and Armijo backtracking, and
//! the whale optimization algorithm (WOA).
//!
//! A gradient step moves each coefficient tangentially,
//! `φ ← φ·(1 + j·s·∂f/∂θ)`, and projects back to the unit circle, which in
//! angles is `θ ← θ + atan(s·∂f/∂θ)`.

use crate::channel::{wrap_angle, RisPhase};
use crate::par::{map_range, Execution};
use crate::precoding::ApActivation;
use crate::scenario::SimRng;
use crate::system::BlockModel;
use rand::Rng;
use std::f64::consts::PI;

/// A function of the angle vector to be maximized.
pub trait PhaseObjective: Sync {
    fn dimension(&self) -> usize;

    /// Fitness; `-∞` marks an infeasible configuration.
    fn fitness(&self, theta: &[f64]) -> f64;

    /// Value used for finite differences. Defaults to [`fitness`](Self::fitness);
    /// override to skip feasibility screening.
    fn smooth(&self, theta: &[f64]) -> f64 {
        self.fitness(theta)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> PhaseObjective for (usize, F) {
    fn dimension(&self) -> usize {
        self.0
    }

    fn fitness(&self, theta: &[f64]) -> f64 {
        (self.1)(theta)
    }
}

/// What the RIS step maximizes with activation and power held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RisTarget {
    /// `f(Φ)`; equivalent to maximizing `F` when `1 − α·P_dyn > 0`.
    SumRate,
    /// `F(Φ) = f − α·g` directly.
    Subtractive { alpha: f64 },
}

/// Fitness of a phase vector: re-estimates the channel with the pinned pilot
/// noise, re-derives the precoder and interference terms, projects the power
/// onto the caps and evaluates the target.
pub struct RisFitness<'a> {
    pub model: &'a BlockModel,
    pub activation: &'a ApActivation,
    pub power: &'a [f64],
    pub target: RisTarget,
}

impl RisFitness<'_> {
    fn evaluate(&self, theta: &[f64], screen_qos: bool) -> f64 {
        let Ok(phase) = RisPhase::new(theta.to_vec(), self.model.num_ris(), self.model.ris_elements()) else {
            return f64::NEG_INFINITY;
        };
        let Ok(est) = self.model.estimate(&phase) else { return f64::NEG_INFINITY };
        let Ok(pre) = self.model.precode(&est, self.activation) else { return f64::NEG_INFINITY };
        let p = self.model.project(&pre, self.power);
        let eval = self.model.evaluate(&pre, &p);
        if screen_qos && !eval.qos_ok {
            return f64::NEG_INFINITY;
        }
        match self.target {
            RisTarget::SumRate => eval.sum_rate,
            RisTarget::Subtractive { alpha } => eval.objective(alpha),
        }
    }
}

impl PhaseObjective for RisFitness<'_> {
    fn dimension(&self) -> usize {
        self.model.num_ris() * self.model.ris_elements()
    }

    fn fitness(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, true)
    }

    fn smooth(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, false)
    }
}

/// Sum rate of a phase vector for a fixed activation and power.
pub fn sum_rate_of_phases(model: &BlockModel, activation: &ApActivation, power: &[f64], theta: &[f64]) -> f64 {
    RisFitness { model, activation, power, target: RisTarget::SumRate }.fitness(theta)
}

/// Central differences `(f(θ+εe_n) − f(θ−εe_n))/(2ε)` for every element;
/// `2·dim` evaluations of [`PhaseObjective::smooth`]. Components whose
/// stencil touches a non-finite value are zero.
pub fn numerical_gradient<O: PhaseObjective + ?Sized>(obj: &O, theta: &[f64], eps: f64, exec: Execution) -> Vec<f64> {
    let n = theta.len();
    let values = map_range(exec, 2 * n, |i| {
        let mut t = theta.to_vec();
        t[i / 2] += if i % 2 == 0 { eps } else { -eps };
        obj.smooth(&t)
    });
    (0..n)
        .map(|d| {
            let (plus, minus) = (values[2 * d], values[2 * d + 1]);
            if plus.is_finite() && minus.is_finite() {
                (plus - minus) / (2.0 * eps)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    /// Stop when the relative improvement of an accepted step is below this.
    pub tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Largest angle change (radians) tried by the line search.
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-increase fraction.
    pub slope: f64,
    /// The line search gives up below this largest angle change.
    pub min_step: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self { tol: 1e-4, max_iters: 30, fd_step: 1e-4, initial_step: 0.5, shrink: 0.5, slope: 1e-4, min_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpOutcome {
    pub theta: Vec<f64>,
    pub fitness: f64,
    /// Fitness at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub gradient_evaluations: usize,
    pub evaluations: usize,
}

/// Gradient projection with Armijo backtracking. Never returns a point worse
/// than `theta_init`.
pub fn gp_optimize<O: PhaseObjective + ?Sized>(obj: &O, theta_init: &[f64], params: &GpParams, exec: Execution) -> GpOutcome {
    let mut theta: Vec<f64> = theta_init.iter().map(|&t| wrap_angle(t)).collect();
    let mut f = obj.fitness(&theta);
    let mut out = GpOutcome {
        theta: theta.clone(),
        fitness: f,
        history: vec![f],
        iterations: 0,
        gradient_evaluations: 0,
        evaluations: 1,
    };
    if !f.is_finite() || theta.is_empty() {
        return out;
    }
    for _ in 0..params.max_iters {
        let g = numerical_gradient(obj, &theta, params.fd_step, exec);
        out.evaluations += 2 * theta.len();
        out.gradient_evaluations += 2 * theta.len();
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(gmax > 0.0) || !gmax.is_finite() {
            break;
        }
        let mut step = params.initial_step / gmax;
        let mut accepted = None;
        while step * gmax >= params.min_step {
            let delta: Vec<f64> = g.iter().map(|v| (step * v).atan()).collect();
            let cand: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| wrap_angle(t + d)).collect();
            let fc = obj.fitness(&cand);
            out.evaluations += 1;
            let predicted: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
            if fc.is_finite() && fc >= f + params.slope * predicted && fc > f {
                accepted = Some((cand, fc));
                break;
            }
            step *= params.shrink;
        }
        let Some((cand, fc)) = accepted else { break };
        let rel = (fc - f) / f.abs().max(f64::MIN_POSITIVE);
        theta = cand;
        f = fc;
        out.iterations += 1;
        out.history.push(f);
        if rel < params.tol {
            break;
        }
    }
    out.theta = theta;
    out.fitness = f;
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WoaParams {
    pub population: usize,
    pub iterations: usize,
    /// Logarithmic spiral constant `b`.
    pub spiral: f64,
}

impl Default for WoaParams {
    fn default() -> Self {
        Self { population: 30, iterations: 30, spiral: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WoaOutcome {
    pub theta: Vec<f64>,
    pub fitness: f64,
    /// Best fitness after initialization and after every iteration.
    pub best_history: Vec<f64>,
    /// Control parameter `a` used at every iteration.
    pub a_history: Vec<f64>,
    pub evaluations: usize,
}

/// `a_t = 2·(1 − t/(T−1))`, decreasing linearly from 2 to 0.
pub fn woa_control(t: usize, iterations: usize) -> f64 {
    if iterations <= 1 {
        2.0
    } else {
        2.0 * (1.0 - t as f64 / (iterations - 1) as f64)
    }
}

/// Whale optimization. Whale 0 starts at `theta_init`, the rest uniformly at
/// random. Positions are updated synchronously and evaluated in parallel; the
/// best whale ever seen is kept.
pub fn woa_optimize<O: PhaseObjective + ?Sized>(
    obj: &O,
    theta_init: &[f64],
    params: &WoaParams,
    rng: &mut SimRng,
    exec: Execution,
) -> WoaOutcome {
    let dim = theta_init.len();
    let n_pop = params.population.max(2);
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(n_pop);
    pop.push(theta_init.iter().map(|&t| wrap_angle(t)).collect());
    for _ in 1..n_pop {
        pop.push((0..dim).map(|_| wrap_angle(rng.random::<f64>() * 2.0 * PI)).collect());
    }
    let mut scores = map_range(exec, n_pop, |i| obj.fitness(&pop[i]));
    let mut evaluations = n_pop;
    let mut best_idx = 0;
    for i in 1..n_pop {
        if scores[i] > scores[best_idx] {
            best_idx = i;
        }
    }
    let mut best = pop[best_idx].clone();
    let mut best_fit = scores[best_idx];
    let mut best_history = vec![best_fit];
    let mut a_history = Vec::with_capacity(params.iterations);

    for t in 0..params.iterations {
        let a = woa_control(t, params.iterations);
        a_history.push(a);
        let previous = pop.clone();
        for i in 0..n_pop {
            let p: f64 = rng.random();
            let l: f64 = rng.random_range(-1.0..=1.0);
            let partner = rng.random_range(0..n_pop);
            let x = &mut pop[i];
            if p < 0.5 {
                for d in 0..dim {
                    let coef_a = 2.0 * a * rng.random::<f64>() - a;
                    let coef_c = 2.0 * rng.random::<f64>();
                    // |A| < 1 exploits around the best whale, otherwise a
                    // random whale is the reference (exploration).
                    let reference = if coef_a.abs() < 1.0 { best[d] } else { previous[partner][d] };
                    let dist = (coef_c * reference - x[d]).abs();
                    x[d] = wrap_angle(reference - coef_a * dist);
                }
            } else {
                let factor = (params.spiral * l).exp() * (2.0 * PI * l).cos();
                for d in 0..dim {
                    let dist = (best[d] - x[d]).abs();
                    x[d] = wrap_angle(dist * factor + best[d]);
                }
            }
        }
        scores = map_range(exec, n_pop, |i| obj.fitness(&pop[i]));
        evaluations += n_pop;
        for i in 0..n_pop {
            if scores[i] > best_fit {
                best_fit = scores[i];
                best = pop[i].clone();
            }
        }
        best_history.push(best_fit);
    }
    WoaOutcome { theta: best, fitness: best_fit, best_history, a_history, evaluations }
}


#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::channel::ChannelRealization;
    use crate::estimation::PilotNoise;
    use crate::scenario::{rng_from_seed, ScenarioConfig};
    use crate::system::tests::{model, model_with, small_config};
    use crate::{CMatrix, Complex64};
    use nalgebra::DMatrix;

    /// `M = K = L = N = 1` with real positive direct and cascaded gains and
    /// no scattering, so the estimate is exact and the best phase is 0.
    pub(crate) fn toy_model() -> BlockModel {
        let cfg = ScenarioConfig { num_aps: 1, num_ues: 1, num_ris: 1, ris_rows: 1, ris_cols: 1, ..Default::default() };
        let c = |v: f64| CMatrix::from_element(1, 1, Complex64::new(v, 0.0));
        let real = ChannelRealization {
            h_au: c(2e-6),
            h_au_mean: c(2e-6),
            au_scatter: DMatrix::zeros(1, 1),
            h_ar: vec![c(3e-3)],
            h_ru: vec![c(5e-4)],
            h_ru_mean: vec![c(5e-4)],
            ru_scatter: DMatrix::zeros(1, 1),
            correlation: c(1.0),
        };
        BlockModel::new(&cfg, real, PilotNoise::zeros(1, 1)).unwrap()
    }

    fn toy_fitness(m: &BlockModel) -> impl Fn(&[f64]) -> f64 + '_ {
        move |t: &[f64]| sum_rate_of_phases(m, &ApActivation::all(1), &[m.per_ue_cap], t)
    }

    fn grid_optimum(f: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
        (0..3600)
            .map(|i| {
                let t = i as f64 * 2.0 * PI / 3600.0;
                (t, f(&[t]))
            })
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    #[test]
    fn no_ris_fitness_is_constant() {
        let cfg = ScenarioConfig { num_ris: 0, ..small_config() };
        let m = model_with(&cfg, 4);
        let est = m.estimate(&RisPhase::zeros(0, 4)).unwrap();
        let p = m.heuristic_power(&est, &ApActivation::all(5)).unwrap();
        let a = sum_rate_of_phases(&m, &ApActivation::all(5), &p, &[]);
        assert!(a.is_finite() && a > 0.0);
        let fit = RisFitness { model: &m, activation: &ApActivation::all(5), power: &p, target: RisTarget::SumRate };
        assert_eq!(fit.dimension(), 0);
        assert!(numerical_gradient(&fit, &[], 1e-4, Execution::Sequential).is_empty());
    }

    #[test]
    fn fitness_is_deterministic_and_periodic() {
        let m = model(5);
        let act = ApActivation::all(5);
        let est = m.estimate(&RisPhase::zeros(1, 4)).unwrap();
        let p = m.heuristic_power(&est, &act).unwrap();
        let theta = [0.3, 1.2, 4.0, 5.5];
        let shifted: Vec<f64> = theta.iter().map(|t| t + 2.0 * PI).collect();
        let a = sum_rate_of_phases(&m, &act, &p, &theta);
        assert_eq!(a, sum_rate_of_phases(&m, &act, &p, &theta));
        let b = sum_rate_of_phases(&m, &act, &p, &shifted);
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let cfg = ScenarioConfig { ris_rows: 1, ris_cols: 1, ..small_config() };
        let mut m = model_with(&cfg, 6);
        m.real.h_ar = vec![CMatrix::zeros(5, 1)];
        let act = ApActivation::all(5);
        let est = m.estimate(&RisPhase::zeros(1, 1)).unwrap();
        let p = m.heuristic_power(&est, &act).unwrap();
        let fit = RisFitness { model: &m, activation: &act, power: &p, target: RisTarget::SumRate };
        let g = numerical_gradient(&fit, &[1.0], 1e-4, Execution::Sequential);
        assert!(g[0].abs() < 1e-9);
    }

    #[test]
    fn gradient_of_cosine() {
        let eps = 1e-4;
        let obj = (1usize, |t: &[f64]| t[0].cos());
        let g = numerical_gradient(&obj, &[PI / 2.0], eps, Execution::Sequential);
        assert!((g[0] + 1.0).abs() < eps * eps);
    }

    #[test]
    fn gradient_matches_higher_order_stencil() {
        let cfg = ScenarioConfig { ris_rows: 1, ris_cols: 2, ..small_config() };
        let m = model_with(&cfg, 7);
        let act = ApActivation::all(5);
        let est = m.estimate(&RisPhase::zeros(1, 2)).unwrap();
        let p = m.heuristic_power(&est, &act).unwrap();
        let fit = RisFitness { model: &m, activation: &act, power: &p, target: RisTarget::SumRate };
        let theta = [0.7, 2.1];
        let eps = 1e-4;
        let g = numerical_gradient(&fit, &theta, eps, Execution::Sequential);
        let scale = fit.smooth(&theta).abs();
        for d in 0..2 {
            let at = |h: f64| {
                let mut t = theta;
                t[d] += h;
                fit.smooth(&t)
            };
            let g4 = (-at(2.0 * eps) + 8.0 * at(eps) - 8.0 * at(-eps) + at(-2.0 * eps)) / (12.0 * eps);
            assert!((g[d] - g4).abs() <= 10.0 * eps * eps * scale, "{} vs {g4}", g[d]);
        }
    }

    #[test]
    fn gp_counts_and_ascent() {
        for seed in 0..10 {
            let m = model(seed);
            let act = ApActivation::all(5);
            let init = RisPhase::random(1, 4, &mut rng_from_seed(seed + 100));
            let est = m.estimate(&init).unwrap();
            let p = m.heuristic_power(&est, &act).unwrap();
            let fit = RisFitness { model: &m, activation: &act, power: &p, target: RisTarget::SumRate };
            let out = gp_optimize(&fit, init.angles(), &GpParams::default(), Execution::Sequential);
            for w in out.history.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert!(out.theta.iter().all(|t| (0.0..2.0 * PI).contains(t)));
            let per_gradient = 2 * 4;
            assert_eq!(out.gradient_evaluations % per_gradient, 0);
            assert!(out.gradient_evaluations >= per_gradient * out.iterations);
        }
    }

    #[test]
    fn gp_solves_single_element_toy() {
        let m = toy_model();
        let f = toy_fitness(&m);
        let (t_star, f_star) = grid_optimum(&f);
        assert!(t_star < 0.01 || t_star > 2.0 * PI - 0.01);
        let obj = (1usize, &f);
        let out = gp_optimize(&obj, &[2.0], &GpParams::default(), Execution::Sequential);
        assert!(out.fitness >= 0.99 * f_star, "{} vs {f_star}", out.fitness);
    }

    #[test]
    fn woa_control_and_elitism() {
        assert_eq!(woa_control(0, 10), 2.0);
        assert_eq!(woa_control(9, 10), 0.0);
        let m = toy_model();
        let f = toy_fitness(&m);
        let (_, f_star) = grid_optimum(&f);
        let obj = (1usize, &f);
        let params = WoaParams { population: 10, iterations: 20, spiral: 1.0 };
        let mut finals = Vec::new();
        for seed in 0..20 {
            let out = woa_optimize(&obj, &[2.5], &params, &mut rng_from_seed(seed), Execution::Sequential);
            assert_eq!(out.evaluations, 10 * 21);
            assert_eq!(out.a_history.first(), Some(&2.0));
            assert_eq!(out.a_history.last(), Some(&0.0));
            for w in out.best_history.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert!(out.theta.iter().all(|t| (0.0..2.0 * PI).contains(t)));
            finals.push(out.fitness);
        }
        let med = crate::harness::median(&mut finals);
        assert!(med >= 0.99 * f_star);
    }

    #[test]
    fn woa_is_execution_independent() {
        let m = model(3);
        let act = ApActivation::all(5);
        let est = m.estimate(&RisPhase::zeros(1, 4)).unwrap();
        let p = m.heuristic_power(&est, &act).unwrap();
        let fit = RisFitness { model: &m, activation: &act, power: &p, target: RisTarget::SumRate };
        let params = WoaParams { population: 6, iterations: 4, spiral: 1.0 };
        let a = woa_optimize(&fit, &[0.0; 4], &params, &mut rng_from_seed(1), Execution::Sequential);
        let b = woa_optimize(&fit, &[0.0; 4], &params, &mut rng_from_seed(1), Execution::Parallel);
        assert_eq!(a, b);
    }
}

//! Dinkelbach outer loop over `α` with alternating optimization of AP
//! activation, power and RIS phases for the subtractive objective
//! `F = f − α·g`.
//!
//! Each sub-step proposes a new state and it is kept only when it raises `F`
//! by more than `accept_rel·max(α·g, f)`. Rejected proposals leave the state
//! untouched, so `F` never decreases inside a cycle, `α` never decreases
//! across outer iterations, and the loop ends at an exact fixed point
//! `α = f/g` once no sub-step makes progress.

use crate::ap_select::{bnb_select, exhaustive_select, greedy_select, ApScorer, Selection};
use crate::channel::RisPhase;
use crate::par::Execution;
use crate::power_alloc::{sca_solve, PowerProblem};
use crate::precoding::{ApActivation, HeuristicSum};
use crate::ris_opt::{gp_optimize, woa_optimize, GpParams, RisFitness, RisTarget, WoaParams};
use crate::scenario::{derive_seed, rng_from_seed};
use crate::system::{BlockModel, Evaluation, NetworkState};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// Solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Branch and bound + SCA + gradient projection.
    #[default]
    NearOptimal,
    /// Greedy turn-off + SCA + WOA.
    LowComplexity,
}

impl Mode {
    pub fn steps(self) -> AoSteps {
        match self {
            Mode::NearOptimal => AoSteps { ap: ApStrategy::Bnb, ris: RisStrategy::Gp },
            Mode::LowComplexity => AoSteps { ap: ApStrategy::Greedy, ris: RisStrategy::Woa },
        }
    }

    pub fn ris_strategy(self) -> RisStrategy {
        self.steps().ris
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near-optimal" => Ok(Mode::NearOptimal),
            "low-complexity" => Ok(Mode::LowComplexity),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApStrategy {
    /// Keep the current activation.
    Fixed,
    Exhaustive,
    Bnb,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RisStrategy {
    /// Keep the current phases.
    Fixed,
    Gp,
    Woa,
}

/// Which sub-steps an AO cycle runs. Baselines restrict these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AoSteps {
    pub ap: ApStrategy,
    pub ris: RisStrategy,
}

/// Algorithm parameters. Serialized as flat keys next to the scenario keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub mode: Mode,
    /// Stop when `(α_{t+1} − α_t)/α_t` falls below this.
    pub dinkelbach_tol: f64,
    /// Minimum relative gain in `F` for a sub-step to be accepted.
    pub accept_rel: f64,
    /// Stop the AO cycles when a whole cycle gains less than this (relative).
    pub ao_tol: f64,
    pub max_outer_iters: usize,
    pub max_ao_cycles: usize,
    pub sca_tol: f64,
    pub sca_max_iters: usize,
    pub gp_tol: f64,
    pub gp_max_iters: usize,
    pub fd_step: f64,
    pub armijo_initial: f64,
    pub armijo_shrink: f64,
    pub armijo_slope: f64,
    pub armijo_min_step: f64,
    pub woa_population: usize,
    pub woa_iters: usize,
    pub woa_spiral: f64,
    pub bnb_node_cap: usize,
    /// Use the full sum instead of the tail sum in the heuristic power rule.
    pub heuristic_full_sum: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        let gp = GpParams::default();
        let woa = WoaParams::default();
        Self {
            mode: Mode::NearOptimal,
            dinkelbach_tol: 1e-12,
            accept_rel: 1e-6,
            ao_tol: 1e-6,
            max_outer_iters: 30,
            max_ao_cycles: 10,
            sca_tol: 1e-4,
            sca_max_iters: 50,
            gp_tol: gp.tol,
            gp_max_iters: gp.max_iters,
            fd_step: gp.fd_step,
            armijo_initial: gp.initial_step,
            armijo_shrink: gp.shrink,
            armijo_slope: gp.slope,
            armijo_min_step: gp.min_step,
            woa_population: woa.population,
            woa_iters: woa.iterations,
            woa_spiral: woa.spiral,
            bnb_node_cap: 1 << 20,
            heuristic_full_sum: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dinkelbach_tol", self.dinkelbach_tol),
            ("accept_rel", self.accept_rel),
            ("ao_tol", self.ao_tol),
            ("sca_tol", self.sca_tol),
            ("gp_tol", self.gp_tol),
            ("fd_step", self.fd_step),
            ("armijo_initial", self.armijo_initial),
            ("armijo_slope", self.armijo_slope),
            ("armijo_min_step", self.armijo_min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidConfig("armijo_shrink must lie in (0, 1)".into()));
        }
        if self.woa_population < 2 {
            return Err(Error::InvalidConfig("woa_population must be at least 2".into()));
        }
        if self.max_outer_iters == 0 || self.max_ao_cycles == 0 || self.sca_max_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be at least 1".into()));
        }
        if self.bnb_node_cap == 0 {
            return Err(Error::InvalidConfig("bnb_node_cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gp(&self) -> GpParams {
        GpParams {
            tol: self.gp_tol,
            max_iters: self.gp_max_iters,
            fd_step: self.fd_step,
            initial_step: self.armijo_initial,
            shrink: self.armijo_shrink,
            slope: self.armijo_slope,
            min_step: self.armijo_min_step,
        }
    }

    pub fn woa(&self) -> WoaParams {
        WoaParams { population: self.woa_population, iterations: self.woa_iters, spiral: self.woa_spiral }
    }

    pub fn heuristic_sum(&self) -> HeuristicSum {
        if self.heuristic_full_sum {
            HeuristicSum::Full
        } else {
            HeuristicSum::Tail
        }
    }
}

/// One outer (Dinkelbach) iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `α` used by this iteration's AO cycles, bits/J.
    pub alpha: f64,
    /// `f` after the cycles, bits/s.
    pub sum_rate: f64,
    /// `g` after the cycles, W.
    pub total_power: f64,
    /// `f/g`, the next `α`.
    pub ee: f64,
    /// `f − α·g` after the cycles.
    pub certificate: f64,
    pub active_aps: usize,
    pub ao_cycles: usize,
    /// `F` after the last AP, power and RIS sub-steps.
    pub objective_after_ap: f64,
    pub objective_after_power: f64,
    pub objective_after_ris: f64,
    pub ap_evaluations: usize,
    pub ap_nodes: usize,
    pub ap_proven: bool,
    pub sca_iterations: usize,
    pub ris_evaluations: usize,
    pub wall_time_s: f64,
}

/// Per-iteration history of a solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub initial_ee: f64,
    pub records: Vec<IterationRecord>,
    /// True when the loop stopped on the `α` tolerance rather than the
    /// iteration cap.
    pub converged: bool,
    /// Sub-step objective values `F` in order of execution, with the `α`
    /// they were computed for; used to check ascent.
    pub step_objectives: Vec<(f64, f64)>,
}

impl SolveTrace {
    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    pub fn final_ee(&self) -> f64 {
        self.records.last().map_or(self.initial_ee, |r| r.ee)
    }

    /// Writes one CSV row per outer iteration.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn ap_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.ap_evaluations).sum()
    }

    pub fn sca_iterations(&self) -> usize {
        self.records.iter().map(|r| r.sca_iterations).sum()
    }

    pub fn ris_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.ris_evaluations).sum()
    }
}

/// Result of [`dinkelbach_solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: NetworkState,
    pub evaluation: Evaluation,
    pub trace: SolveTrace,
}

/// All APs active, heuristic ZF power moved to QoS feasibility, given phases.
pub fn initial_state(model: &BlockModel, phase: RisPhase, params: &SolverParams) -> Result<NetworkState> {
    let activation = ApActivation::all(model.num_aps());
    let est = model.estimate(&phase)?;
    let pre = model.precode(&est, &activation)?;
    let p = crate::precoding::heuristic_power(
        &est.g_hat,
        &activation,
        model.max_ap_power,
        model.per_ue_cap,
        params.heuristic_sum(),
    )?;
    let prob = PowerProblem::new(model, &pre, 0.0);
    let power = prob.repair(&p)?;
    Ok(NetworkState { activation, power, phase })
}

struct Counters {
    ap_evaluations: usize,
    ap_nodes: usize,
    ap_proven: bool,
    sca_iterations: usize,
    ris_evaluations: usize,
    objective_after: [f64; 3],
    cycles: usize,
}

struct Ao<'a> {
    model: &'a BlockModel,
    params: &'a SolverParams,
    steps: AoSteps,
    exec: Execution,
    seed: u64,
}

fn threshold(params: &SolverParams, eval: &Evaluation, alpha: f64) -> f64 {
    params.accept_rel * (alpha * eval.total_power).max(eval.sum_rate).max(f64::MIN_POSITIVE)
}

impl Ao<'_> {
    fn evaluate(&self, state: &NetworkState) -> Result<Evaluation> {
        self.model.evaluate_state(state)
    }

    fn ap_step(&self, state: &NetworkState, alpha: f64, c: &mut Counters) -> Result<Option<NetworkState>> {
        if self.steps.ap == ApStrategy::Fixed {
            return Ok(None);
        }
        let est = self.model.estimate(&state.phase)?;
        let scorer = ApScorer::new(self.model, &est, &state.power, alpha, self.exec);
        let sel: Result<Selection> = match self.steps.ap {
            ApStrategy::Exhaustive => exhaustive_select(&scorer),
            ApStrategy::Bnb => bnb_select(&scorer, self.params.bnb_node_cap),
            ApStrategy::Greedy => greedy_select(&scorer),
            ApStrategy::Fixed => unreachable!(),
        };
        c.ap_evaluations += scorer.evaluations();
        let sel = match sel {
            Ok(s) => s,
            Err(Error::QosInfeasible(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        c.ap_nodes += sel.nodes;
        c.ap_proven &= sel.proven || self.steps.ap != ApStrategy::Bnb;
        Ok(Some(NetworkState { activation: sel.best.activation, power: sel.best.power, phase: state.phase.clone() }))
    }

    fn power_step(&self, state: &NetworkState, alpha: f64, c: &mut Counters) -> Result<Option<NetworkState>> {
        let est = self.model.estimate(&state.phase)?;
        let pre = self.model.precode(&est, &state.activation)?;
        let prob = PowerProblem::new(self.model, &pre, alpha);
        let out = sca_solve(&prob, &state.power, self.params.sca_tol, self.params.sca_max_iters)?;
        c.sca_iterations += out.iterations;
        Ok(Some(NetworkState { power: out.power, ..state.clone() }))
    }

    fn ris_step(&self, state: &NetworkState, alpha: f64, c: &mut Counters, salt: u64) -> Result<Option<NetworkState>> {
        if self.steps.ris == RisStrategy::Fixed || self.model.num_ris() == 0 {
            return Ok(None);
        }
        let split = self.model.split(&state.activation);
        let target = if 1.0 - alpha * split.dynamic_per_bps() > 0.0 {
            RisTarget::SumRate
        } else {
            RisTarget::Subtractive { alpha }
        };
        let fitness = RisFitness { model: self.model, activation: &state.activation, power: &state.power, target };
        let theta = match self.steps.ris {
            RisStrategy::Gp => {
                let out = gp_optimize(&fitness, state.phase.angles(), &self.params.gp(), self.exec);
                c.ris_evaluations += out.evaluations;
                out.theta
            }
            RisStrategy::Woa => {
                let mut rng = rng_from_seed(derive_seed(self.seed, &[salt]));
                let out = woa_optimize(&fitness, state.phase.angles(), &self.params.woa(), &mut rng, self.exec);
                c.ris_evaluations += out.evaluations;
                out.theta
            }
            RisStrategy::Fixed => unreachable!(),
        };
        let phase = RisPhase::new(theta, self.model.num_ris(), self.model.ris_elements())?;
        let est = self.model.estimate(&phase)?;
        let Ok(pre) = self.model.precode(&est, &state.activation) else { return Ok(None) };
        let power = self.model.project(&pre, &state.power);
        Ok(Some(NetworkState { activation: state.activation.clone(), power, phase }))
    }

    /// Accepts `proposal` if it is feasible and gains more than the
    /// threshold.
    fn accept(
        &self,
        state: &mut NetworkState,
        eval: &mut Evaluation,
        proposal: Option<NetworkState>,
        alpha: f64,
    ) -> Result<()> {
        let Some(next) = proposal else { return Ok(()) };
        let Ok(next_eval) = self.evaluate(&next) else { return Ok(()) };
        if next_eval.feasible() && next_eval.objective(alpha) > eval.objective(alpha) + threshold(self.params, eval, alpha) {
            *state = next;
            *eval = next_eval;
        }
        Ok(())
    }

    fn cycles(
        &self,
        state: &mut NetworkState,
        eval: &mut Evaluation,
        alpha: f64,
        outer: usize,
        trace: &mut SolveTrace,
    ) -> Result<Counters> {
        let mut c = Counters {
            ap_evaluations: 0,
            ap_nodes: 0,
            ap_proven: true,
            sca_iterations: 0,
            ris_evaluations: 0,
            objective_after: [eval.objective(alpha); 3],
            cycles: 0,
        };
        for cycle in 0..self.params.max_ao_cycles {
            let start = eval.objective(alpha);
            let proposal = self.ap_step(state, alpha, &mut c)?;
            self.accept(state, eval, proposal, alpha)?;
            c.objective_after[0] = eval.objective(alpha);
            trace.step_objectives.push((alpha, c.objective_after[0]));

            let proposal = self.power_step(state, alpha, &mut c)?;
            self.accept(state, eval, proposal, alpha)?;
            c.objective_after[1] = eval.objective(alpha);
            trace.step_objectives.push((alpha, c.objective_after[1]));

            let salt = (outer as u64) << 32 | cycle as u64;
            let proposal = self.ris_step(state, alpha, &mut c, salt)?;
            self.accept(state, eval, proposal, alpha)?;
            c.objective_after[2] = eval.objective(alpha);
            trace.step_objectives.push((alpha, c.objective_after[2]));

            c.cycles += 1;
            let gain = eval.objective(alpha) - start;
            let scale = (alpha * eval.total_power).max(eval.sum_rate).max(f64::MIN_POSITIVE);
            if gain <= self.params.ao_tol * scale {
                break;
            }
        }
        Ok(c)
    }
}

/// Outcome of [`dinkelbach`].
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachOutcome {
    /// `α_0, α_1, …`, one more than the number of inner solves.
    pub alphas: Vec<f64>,
    pub converged: bool,
}

/// Generic Dinkelbach iteration: `inner(t, α_t)` maximizes `f − α_t·g` and
/// returns the maximizer's `(f, g)`; then `α_{t+1} = f/g`. Stops when
/// `α_{t+1} − α_t ≤ tol·α_t` or after `max_iters` inner solves.
pub fn dinkelbach<F>(alpha0: f64, tol: f64, max_iters: usize, mut inner: F) -> Result<DinkelbachOutcome>
where
    F: FnMut(usize, f64) -> Result<(f64, f64)>,
{
    let mut alphas = vec![alpha0];
    let mut alpha = alpha0;
    for t in 0..max_iters {
        let (f, g) = inner(t, alpha)?;
        if !(g > 0.0) {
            return Err(Error::InvalidArgument(format!("denominator must be positive, got {g}")));
        }
        let next = f / g;
        alphas.push(next);
        if next - alpha <= tol * alpha.abs() {
            return Ok(DinkelbachOutcome { alphas, converged: true });
        }
        alpha = next;
    }
    Ok(DinkelbachOutcome { alphas, converged: false })
}

/// Dinkelbach iterations from a feasible `init`.
///
/// `seed` drives the WOA populations. Fails with [`Error::QosInfeasible`] if
/// `init` violates QoS or the power caps.
pub fn dinkelbach_solve(
    model: &BlockModel,
    init: NetworkState,
    params: &SolverParams,
    steps: AoSteps,
    exec: Execution,
    seed: u64,
) -> Result<Solution> {
    params.validate()?;
    let mut state = init;
    let mut eval = model.evaluate_state(&state)?;
    if !eval.feasible() {
        return Err(Error::QosInfeasible("initial state violates QoS or power caps".into()));
    }
    let ao = Ao { model, params, steps, exec, seed };
    let mut trace = SolveTrace { initial_ee: eval.ee, ..Default::default() };
    let outcome = dinkelbach(eval.ee, params.dinkelbach_tol, params.max_outer_iters, |iteration, alpha| {
        let started = Instant::now();
        let c = ao.cycles(&mut state, &mut eval, alpha, iteration, &mut trace)?;
        trace.records.push(IterationRecord {
            iteration,
            alpha,
            sum_rate: eval.sum_rate,
            total_power: eval.total_power,
            ee: eval.ee,
            certificate: eval.objective(alpha),
            active_aps: state.activation.num_active(),
            ao_cycles: c.cycles,
            objective_after_ap: c.objective_after[0],
            objective_after_power: c.objective_after[1],
            objective_after_ris: c.objective_after[2],
            ap_evaluations: c.ap_evaluations,
            ap_nodes: c.ap_nodes,
            ap_proven: c.ap_proven,
            sca_iterations: c.sca_iterations,
            ris_evaluations: c.ris_evaluations,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        Ok((eval.sum_rate, eval.total_power))
    })?;
    trace.converged = outcome.converged;
    Ok(Solution { state, evaluation: eval, trace })
}

//! AP activation for fixed power and RIS phases: exhaustive enumeration
//! (reference), depth-first branch and bound, and greedy turn-off.
//!
//! Every candidate activation is scored with the incumbent power vector
//! projected onto its per-AP caps; candidates whose Gram matrix is singular
//! or whose projected power violates QoS are infeasible.

use crate::estimation::ChannelEstimate;
use crate::par::{map_range, map_slice, Execution};
use crate::precoding::ApActivation;
use crate::system::BlockModel;
use crate::{Error, Result};
use std::cmp::Ordering;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

/// Largest `M` accepted by [`exhaustive_select`].
pub const EXHAUSTIVE_MAX_APS: usize = 14;

/// A scored feasible activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub activation: ApActivation,
    /// `F = f − α·g`.
    pub objective: f64,
    /// Projected power the candidate was scored with.
    pub power: Vec<f64>,
}

impl Candidate {
    /// `Greater` when `self` should be preferred: higher objective, then
    /// fewer active APs, then the lexicographically smaller active set.
    pub fn preference(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then_with(|| other.activation.num_active().cmp(&self.activation.num_active()))
            .then_with(|| other.activation.active_indices().cmp(&self.activation.active_indices()))
    }
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.preference(&a) == Ordering::Greater { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Outcome of an activation search.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: Candidate,
    /// Candidate scorings performed.
    pub evaluations: usize,
    /// Search-tree nodes visited (branch and bound only).
    pub nodes: usize,
    /// False when branch and bound hit its node cap before proving
    /// optimality.
    pub proven: bool,
}

/// Scores activations for one α, estimate and incumbent power.
pub struct ApScorer<'a> {
    pub model: &'a BlockModel,
    pub estimate: &'a ChannelEstimate,
    pub power: &'a [f64],
    pub alpha: f64,
    pub exec: Execution,
    evaluations: AtomicUsize,
}

impl<'a> ApScorer<'a> {
    pub fn new(model: &'a BlockModel, estimate: &'a ChannelEstimate, power: &'a [f64], alpha: f64, exec: Execution) -> Self {
        Self { model, estimate, power, alpha, exec, evaluations: AtomicUsize::new(0) }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(AtomicOrdering::Relaxed)
    }

    /// `None` for infeasible activations.
    pub fn score(&self, activation: &ApActivation) -> Option<Candidate> {
        self.evaluations.fetch_add(1, AtomicOrdering::Relaxed);
        let pre = self.model.precode(self.estimate, activation).ok()?;
        let power = self.model.project(&pre, self.power);
        let eval = self.model.evaluate(&pre, &power);
        eval.feasible().then(|| Candidate { activation: activation.clone(), objective: eval.objective(self.alpha), power })
    }

    fn num_aps(&self) -> usize {
        self.model.num_aps()
    }

    fn num_ues(&self) -> usize {
        self.model.num_ues()
    }
}

fn no_feasible() -> Error {
    Error::QosInfeasible("no activation pattern meets QoS with the current power".into())
}

/// Scores all `2^M` activations with at least `K` active APs.
pub fn exhaustive_select(scorer: &ApScorer) -> Result<Selection> {
    let m = scorer.num_aps();
    if m > EXHAUSTIVE_MAX_APS {
        return Err(Error::InvalidArgument(format!("exhaustive search is limited to {EXHAUSTIVE_MAX_APS} APs")));
    }
    let k = scorer.num_ues();
    let masks: Vec<u32> = (0u32..(1 << m)).filter(|b| b.count_ones() as usize >= k).collect();
    let scored = map_slice(scorer.exec, &masks, |&bits| {
        scorer.score(&ApActivation::from_mask((0..m).map(|i| bits >> i & 1 == 1).collect()))
    });
    let best = scored.into_iter().fold(None, better).ok_or_else(no_feasible)?;
    Ok(Selection { best, evaluations: scorer.evaluations(), nodes: 0, proven: true })
}

/// Depth-first branch and bound over `δ_1, …, δ_M`, trying "active" first.
///
/// The bound at a node with definitely-active set `D` is
/// `f̄·max(1 − α·P_dyn(D), 0) − α·P_stat(max(|D|, K))`, where
/// `f̄ = B_eff Σ_k log2(1 + p_k/σ²)` bounds the sum rate of any completion
/// (projection only lowers powers and the interference terms are
/// non-negative), and both power terms grow with the active set.
pub fn bnb_select(scorer: &ApScorer, node_cap: usize) -> Result<Selection> {
    let m = scorer.num_aps();
    let k = scorer.num_ues();
    let model = scorer.model;
    let alpha = scorer.alpha;
    let rate_cap: f64 = model.effective_bandwidth()
        * scorer.power.iter().map(|p| (1.0 + p.clamp(0.0, model.per_ue_cap) / model.noise).log2()).sum::<f64>();
    let bound = |on: usize| -> f64 {
        let split = model.split(&ApActivation::from_mask((0..m).map(|i| i < on).collect()));
        let stat = model.split(&ApActivation::from_mask((0..m).map(|i| i < on.max(k)).collect())).static_w;
        rate_cap * (1.0 - alpha * split.dynamic_per_bps()).max(0.0) - alpha * stat
    };

    struct Search<'s, 'a> {
        scorer: &'s ApScorer<'a>,
        mask: Vec<bool>,
        incumbent: Option<Candidate>,
        nodes: usize,
        cap: usize,
        capped: bool,
    }

    fn visit(s: &mut Search, depth: usize, on: usize, k: usize, bound: &dyn Fn(usize) -> f64) {
        if s.nodes >= s.cap {
            s.capped = true;
            return;
        }
        s.nodes += 1;
        let m = s.mask.len();
        if on + (m - depth) < k {
            return;
        }
        if let Some(inc) = &s.incumbent {
            if bound(on) < inc.objective {
                return;
            }
        }
        if depth == m {
            let cand = s.scorer.score(&ApActivation::from_mask(s.mask.clone()));
            s.incumbent = better(s.incumbent.take(), cand);
            return;
        }
        s.mask[depth] = true;
        visit(s, depth + 1, on + 1, k, bound);
        s.mask[depth] = false;
        visit(s, depth + 1, on, k, bound);
    }

    let mut search = Search { scorer, mask: vec![false; m], incumbent: None, nodes: 0, cap: node_cap, capped: false };
    visit(&mut search, 0, 0, k, &bound);
    let best = search.incumbent.ok_or_else(no_feasible)?;
    Ok(Selection { best, evaluations: scorer.evaluations(), nodes: search.nodes, proven: !search.capped })
}

/// Greedy turn-off: starting from all APs active, repeatedly put to sleep
/// the AP whose removal gives the largest `F`, as long as `F` strictly
/// improves and QoS still holds.
pub fn greedy_select(scorer: &ApScorer) -> Result<Selection> {
    let m = scorer.num_aps();
    let k = scorer.num_ues();
    let mut current = scorer.score(&ApActivation::all(m)).ok_or_else(no_feasible)?;
    while current.activation.num_active() > k {
        let options = current.activation.active_indices();
        let scored = map_range(scorer.exec, options.len(), |i| scorer.score(&current.activation.with(options[i], false)));
        match scored.into_iter().fold(None, better) {
            Some(best) if best.objective > current.objective => current = best,
            _ => break,
        }
    }
    Ok(Selection { best: current, evaluations: scorer.evaluations(), nodes: 0, proven: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RisPhase;
    use crate::scenario::ScenarioConfig;
    use crate::system::tests::{model, model_with, small_config};

    fn setup(seed: u64) -> (BlockModel, ChannelEstimate, Vec<f64>) {
        let m = model(seed);
        let est = m.estimate(&RisPhase::zeros(1, 4)).unwrap();
        let p = m.heuristic_power(&est, &ApActivation::all(5)).unwrap();
        (m, est, p)
    }

    #[test]
    fn bnb_matches_exhaustive() {
        for seed in 0..20 {
            let (m, est, p) = setup(seed);
            for alpha in [0.0, 1e6, 1e7, 1e8] {
                let ex = exhaustive_select(&ApScorer::new(&m, &est, &p, alpha, Execution::Sequential));
                let bb = bnb_select(&ApScorer::new(&m, &est, &p, alpha, Execution::Sequential), 1 << 20);
                match (ex, bb) {
                    (Ok(a), Ok(b)) => {
                        assert!((a.best.objective - b.best.objective).abs() <= 1e-9 * a.best.objective.abs().max(1.0));
                        assert_eq!(a.best.activation, b.best.activation);
                        assert!(b.proven);
                        assert!(b.nodes <= 1 << 6);
                    }
                    (Err(_), Err(_)) => {}
                    other => panic!("disagreement: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn greedy_is_sandwiched() {
        for seed in 0..20 {
            let (m, est, p) = setup(seed);
            let alpha = 2e7;
            let s = ApScorer::new(&m, &est, &p, alpha, Execution::Sequential);
            let Some(all) = s.score(&ApActivation::all(5)) else { continue };
            let ex = exhaustive_select(&s).unwrap();
            let gs = ApScorer::new(&m, &est, &p, alpha, Execution::Sequential);
            let gr = greedy_select(&gs).unwrap();
            assert!(gr.best.objective <= ex.best.objective + 1e-9 * ex.best.objective.abs());
            assert!(gr.best.objective >= all.objective);
            assert!(gr.evaluations <= 25 / 2 + 5);
        }
    }

    #[test]
    fn node_cap_flags_unproven() {
        let (m, est, p) = setup(1);
        let s = ApScorer::new(&m, &est, &p, 0.0, Execution::Sequential);
        let r = bnb_select(&s, 3).unwrap_or_else(|_| Selection {
            best: Candidate { activation: ApActivation::all(5), objective: 0.0, power: vec![] },
            evaluations: 0,
            nodes: 3,
            proven: false,
        });
        assert!(!r.proven);
    }

    #[test]
    fn minimum_cardinality_leaves_one_candidate() {
        let cfg = ScenarioConfig { num_aps: 2, num_ues: 2, qos_min_se: 0.0, ..small_config() };
        let m = model_with(&cfg, 2);
        let est = m.estimate(&RisPhase::zeros(1, 4)).unwrap();
        let p = m.heuristic_power(&est, &ApActivation::all(2)).unwrap();
        let s = ApScorer::new(&m, &est, &p, 1e7, Execution::Sequential);
        let sel = exhaustive_select(&s).unwrap();
        assert_eq!(sel.best.activation, ApActivation::all(2));
        assert_eq!(sel.evaluations, 1);
    }
}

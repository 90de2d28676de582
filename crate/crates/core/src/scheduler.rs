//! Bracket planning and successive-halving promotion.
//!
//! A bracket starts `n0` configurations at a common low budget and keeps the
//! best `1/eta` fraction at each rung, re-evaluating survivors at `eta`
//! times the budget until the maximum budget is reached. Brackets within one
//! cycle run sequentially; slots within a rung may run in parallel.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("IllegalBudgets: require 0 < b_min <= b_max, got [{b_min}, {b_max}]")]
    IllegalBudgets { b_min: f64, b_max: f64 },
    #[error("IllegalEta: eta must be an integer >= 2, got {0}")]
    IllegalEta(u32),
    #[error("IncompleteRung: rung {rung} has {completed} of {target} results")]
    IncompleteRung { rung: usize, completed: usize, target: usize },
    #[error("UnknownRungMember: config {config_id} was not dispatched at rung {rung}")]
    UnknownRungMember { rung: usize, config_id: u64 },
}

/// Planned geometry for one bracket: initial population, rung budgets, and
/// per-rung survivor counts.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketPlan {
    /// Bracket index, `s_max` down to 0.
    pub s: u32,
    /// Initial configuration count.
    pub n0: usize,
    /// Strictly increasing rung budgets ending at `b_max`.
    pub budgets: Vec<f64>,
    /// Rung populations, `survivors[0] = n0`, halved by `eta` per rung.
    pub survivors: Vec<usize>,
}

/// Largest `s` with `b_min * eta^s <= b_max` (robust to rounding).
pub fn max_bracket_index(b_min: f64, b_max: f64, eta: u32) -> u32 {
    let mut s = 0u32;
    let mut budget = b_min;
    while budget * eta as f64 <= b_max * (1.0 + 1e-9) {
        budget *= eta as f64;
        s += 1;
    }
    s
}

/// Plans one full cycle of brackets for the budget range `[b_min, b_max]`.
/// Budgets are emitted in objective units; when `declared` is supplied every
/// rung budget is snapped to the nearest declared value.
pub fn plan_hyperband(
    b_min: f64,
    b_max: f64,
    eta: u32,
    declared: Option<&[f64]>,
) -> Result<Vec<BracketPlan>, SchedulerError> {
    if !(b_min > 0.0 && b_min <= b_max) || !b_min.is_finite() || !b_max.is_finite() {
        return Err(SchedulerError::IllegalBudgets { b_min, b_max });
    }
    if eta < 2 {
        return Err(SchedulerError::IllegalEta(eta));
    }
    let s_max = max_bracket_index(b_min, b_max, eta);
    let mut plans = Vec::with_capacity(s_max as usize + 1);
    for s in (0..=s_max).rev() {
        let n0 = ((s_max + 1) as f64 / (s + 1) as f64 * (eta as f64).powi(s as i32)).ceil() as usize;
        let mut budgets = Vec::with_capacity(s as usize + 1);
        for rung in 0..=s {
            let budget = if rung == s {
                b_max
            } else {
                b_max / (eta as f64).powi((s - rung) as i32)
            };
            budgets.push(match declared {
                Some(set) => snap_to(budget, set),
                None => budget,
            });
        }
        let mut survivors = Vec::with_capacity(s as usize + 1);
        let mut population = n0;
        for _ in 0..=s {
            survivors.push(population);
            population /= eta as usize;
        }
        plans.push(BracketPlan { s, n0, budgets, survivors });
    }
    Ok(plans)
}

fn snap_to(budget: f64, declared: &[f64]) -> f64 {
    declared
        .iter()
        .copied()
        .min_by(|a, b| {
            (a - budget).abs().partial_cmp(&(b - budget).abs()).expect("budgets are finite")
        })
        .unwrap_or(budget)
}

/// Keeps the `floor(n/eta)` lowest-loss configurations; ties are broken by
/// smaller `config_id`. An empty result is legal only on a final rung.
pub fn successive_halving_promote(completed: &[(u64, f64)], eta: u32) -> Vec<u64> {
    let keep = completed.len() / eta as usize;
    let mut ranked: Vec<(u64, f64)> = completed.to_vec();
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1).expect("promotion losses are comparable").then(a.0.cmp(&b.0))
    });
    ranked.truncate(keep);
    ranked.into_iter().map(|(id, _)| id).collect()
}

/// Work item handed to the evaluation pool.
#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub kind: JobKind,
    pub bracket_id: u64,
    pub rung: usize,
    pub budget: f64,
    /// Present for promotions: the surviving configuration to re-evaluate.
    pub config_id: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JobKind {
    NewConfig,
    Promotion,
}

/// Outcome of polling a bracket for work.
#[derive(Clone, Debug, PartialEq)]
pub enum JobPoll {
    Ready(JobSpec),
    /// Everything dispatchable is in flight; wait for results.
    AwaitResults,
    Finished,
}

/// Execution state of one rung.
#[derive(Clone, Debug)]
pub struct RungState {
    pub budget: f64,
    pub target: usize,
    /// Configurations to run at this rung; rung 0 fills on dispatch, later
    /// rungs are filled by promotion.
    members: Vec<u64>,
    dispatched: usize,
    completed: Vec<(u64, f64)>,
    failed: usize,
    promoted: bool,
}

impl RungState {
    fn new(budget: f64, target: usize) -> Self {
        RungState {
            budget,
            target,
            members: Vec::new(),
            dispatched: 0,
            completed: Vec::new(),
            failed: 0,
            promoted: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed.len() >= self.target
    }

    pub fn completed(&self) -> &[(u64, f64)] {
        &self.completed
    }

    /// True when the rung completed without a single successful result.
    pub fn all_failed(&self) -> bool {
        self.is_complete() && self.failed >= self.target
    }
}

/// Mutable execution state of one bracket; driven by the optimizer event
/// loop from a single logical thread.
#[derive(Clone, Debug)]
pub struct BracketState {
    pub bracket_id: u64,
    plan: BracketPlan,
    rungs: Vec<RungState>,
}

impl BracketState {
    pub fn new(bracket_id: u64, plan: BracketPlan) -> Self {
        let rungs = plan
            .budgets
            .iter()
            .zip(&plan.survivors)
            .map(|(&budget, &target)| RungState::new(budget, target))
            .collect();
        BracketState { bracket_id, plan, rungs }
    }

    pub fn plan(&self) -> &BracketPlan {
        &self.plan
    }

    pub fn rungs(&self) -> &[RungState] {
        &self.rungs
    }

    pub fn is_complete(&self) -> bool {
        self.rungs.last().map(|r| r.is_complete()).unwrap_or(true)
    }

    /// Promoted survivors of a rung; errors until the rung has a result for
    /// every member.
    pub fn promotions(&self, rung: usize) -> Result<Vec<u64>, SchedulerError> {
        let state = &self.rungs[rung];
        if !state.is_complete() {
            return Err(SchedulerError::IncompleteRung {
                rung,
                completed: state.completed.len(),
                target: state.target,
            });
        }
        Ok(successive_halving_promote(&state.completed, self.eta()))
    }

    fn eta(&self) -> u32 {
        // rung populations encode eta; fall back to budget ratio for
        // single-rung brackets where it is irrelevant
        if self.plan.survivors.len() >= 2 && self.plan.survivors[1] > 0 {
            (self.plan.survivors[0] / self.plan.survivors[1]) as u32
        } else {
            2
        }
    }

    /// Returns the lowest-indexed actionable work item: fill the earliest
    /// rung with an open slot. Rung 0 slots are new configurations, later
    /// rungs re-evaluate promoted survivors.
    pub fn next_job(&self) -> JobPoll {
        if self.is_complete() {
            return JobPoll::Finished;
        }
        for (rung_idx, rung) in self.rungs.iter().enumerate() {
            if rung.dispatched >= rung.target {
                continue;
            }
            if rung_idx == 0 {
                return JobPoll::Ready(JobSpec {
                    kind: JobKind::NewConfig,
                    bracket_id: self.bracket_id,
                    rung: 0,
                    budget: rung.budget,
                    config_id: None,
                });
            }
            if rung.dispatched < rung.members.len() {
                return JobPoll::Ready(JobSpec {
                    kind: JobKind::Promotion,
                    bracket_id: self.bracket_id,
                    rung: rung_idx,
                    budget: rung.budget,
                    config_id: Some(rung.members[rung.dispatched]),
                });
            }
            // open slots exist but the previous rung has not promoted yet
            return JobPoll::AwaitResults;
        }
        JobPoll::AwaitResults
    }

    /// Marks a job as in flight. For rung 0 the caller supplies the freshly
    /// assigned `config_id`.
    pub fn mark_dispatched(&mut self, rung: usize, config_id: u64) {
        let state = &mut self.rungs[rung];
        if rung == 0 {
            state.members.push(config_id);
        } else {
            debug_assert_eq!(state.members.get(state.dispatched), Some(&config_id));
        }
        state.dispatched += 1;
    }

    /// Applies one result. Failed trials enter the rung as `+inf` loss so
    /// promotion never stalls on them. Completing a non-final rung promotes
    /// its survivors into the next rung exactly once.
    pub fn record_result(
        &mut self,
        rung: usize,
        config_id: u64,
        loss: Option<f64>,
    ) -> Result<(), SchedulerError> {
        let is_last = rung + 1 == self.rungs.len();
        let eta = self.eta();
        let state = &mut self.rungs[rung];
        if !state.members.contains(&config_id) {
            return Err(SchedulerError::UnknownRungMember { rung, config_id });
        }
        state.completed.push((config_id, loss.unwrap_or(f64::INFINITY)));
        if loss.is_none() {
            state.failed += 1;
        }
        if state.is_complete() && !is_last && !state.promoted {
            state.promoted = true;
            let promoted = successive_halving_promote(&state.completed, eta);
            self.rungs[rung + 1].members = promoted;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_the_one_three_nine_cycle() {
        let plans = plan_hyperband(1.0, 9.0, 3, None).unwrap();
        assert_eq!(plans.len(), 3);

        assert_eq!(plans[0].s, 2);
        assert_eq!(plans[0].n0, 9);
        assert_eq!(plans[0].budgets, vec![1.0, 3.0, 9.0]);
        assert_eq!(plans[0].survivors, vec![9, 3, 1]);

        assert_eq!(plans[1].s, 1);
        assert_eq!(plans[1].n0, 5);
        assert_eq!(plans[1].budgets, vec![3.0, 9.0]);
        assert_eq!(plans[1].survivors, vec![5, 1]);

        assert_eq!(plans[2].s, 0);
        assert_eq!(plans[2].n0, 3);
        assert_eq!(plans[2].budgets, vec![9.0]);
        assert_eq!(plans[2].survivors, vec![3]);
    }

    #[test]
    fn degenerate_fidelity_gives_single_bracket() {
        let plans = plan_hyperband(5.0, 5.0, 3, None).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].s, 0);
        assert_eq!(plans[0].n0, 1);
        assert_eq!(plans[0].budgets, vec![5.0]);
        assert_eq!(plans[0].survivors, vec![1]);
    }

    #[test]
    fn plans_eta_two_powers() {
        let plans = plan_hyperband(1.0, 8.0, 2, None).unwrap();
        assert_eq!(plans.len(), 4);
        assert_eq!(plans[0].s, 3);
        assert_eq!(plans[0].n0, 8);
        assert_eq!(plans[0].budgets, vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(plans[0].survivors, vec![8, 4, 2, 1]);
    }

    #[test]
    fn rejects_illegal_inputs() {
        assert!(matches!(
            plan_hyperband(0.0, 9.0, 3, None),
            Err(SchedulerError::IllegalBudgets { .. })
        ));
        assert!(matches!(
            plan_hyperband(9.0, 1.0, 3, None),
            Err(SchedulerError::IllegalBudgets { .. })
        ));
        assert!(matches!(plan_hyperband(1.0, 9.0, 1, None), Err(SchedulerError::IllegalEta(1))));
    }

    #[test]
    fn survivors_never_vanish_before_the_final_rung() {
        // brute force over the budget-ratio grid
        for ratio in 1..=81u32 {
            for eta in [2u32, 3, 4] {
                let plans = plan_hyperband(1.0, ratio as f64, eta, None).unwrap();
                for plan in &plans {
                    for (i, &count) in plan.survivors.iter().enumerate() {
                        assert!(
                            count >= 1,
                            "bracket s={} ratio={ratio} eta={eta} rung {i} has no survivors",
                            plan.s
                        );
                    }
                    for w in plan.survivors.windows(2) {
                        assert!(w[1] < w[0], "survivors must strictly decrease");
                    }
                    assert_eq!(*plan.budgets.last().unwrap(), ratio as f64);
                }
            }
        }
    }

    #[test]
    fn budget_accounting_matches_plan_sums() {
        let plans = plan_hyperband(1.0, 9.0, 3, None).unwrap();
        let totals: Vec<f64> = plans
            .iter()
            .map(|p| {
                p.budgets.iter().zip(&p.survivors).map(|(b, &n)| b * n as f64).sum::<f64>()
            })
            .collect();
        assert_eq!(totals, vec![27.0, 24.0, 27.0]);
    }

    #[test]
    fn promotion_is_top_fraction_with_id_ties() {
        assert_eq!(successive_halving_promote(&[(0, 5.0), (1, 1.0), (2, 3.0)], 3), vec![1]);

        let rung = [(0, 1.0), (1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0), (5, 9.0)];
        assert_eq!(successive_halving_promote(&rung, 3), vec![0, 1]);

        // permutation invariance
        let mut shuffled = rung;
        shuffled.reverse();
        assert_eq!(successive_halving_promote(&shuffled, 3), vec![0, 1]);

        // n=2, eta=3 promotes nobody; the planner only reaches this on
        // final rungs
        assert!(successive_halving_promote(&[(0, 1.0), (1, 2.0)], 3).is_empty());
    }

    #[test]
    fn bracket_walks_new_configs_then_promotions() {
        let plans = plan_hyperband(1.0, 9.0, 3, None).unwrap();
        let mut bracket = BracketState::new(0, plans[0].clone());

        // fresh bracket: first job is a new configuration at budget 1
        let job = match bracket.next_job() {
            JobPoll::Ready(job) => job,
            other => panic!("expected a job, got {other:?}"),
        };
        assert_eq!(job.kind, JobKind::NewConfig);
        assert_eq!(job.budget, 1.0);

        // fill and finish rung 0 with losses equal to the config id
        for id in 0..9u64 {
            match bracket.next_job() {
                JobPoll::Ready(job) => assert_eq!(job.kind, JobKind::NewConfig),
                other => panic!("expected job, got {other:?}"),
            }
            bracket.mark_dispatched(0, id);
        }
        assert_eq!(bracket.next_job(), JobPoll::AwaitResults);
        for id in 0..9u64 {
            bracket.record_result(0, id, Some(id as f64)).unwrap();
        }

        // rung 0 complete: the next three jobs promote ids 0,1,2 at budget 3
        for expected in 0..3u64 {
            let job = match bracket.next_job() {
                JobPoll::Ready(job) => job,
                other => panic!("expected promotion, got {other:?}"),
            };
            assert_eq!(job.kind, JobKind::Promotion);
            assert_eq!(job.budget, 3.0);
            assert_eq!(job.config_id, Some(expected));
            bracket.mark_dispatched(1, expected);
        }
        for id in 0..3u64 {
            bracket.record_result(1, id, Some(id as f64)).unwrap();
        }

        let job = match bracket.next_job() {
            JobPoll::Ready(job) => job,
            other => panic!("expected final promotion, got {other:?}"),
        };
        assert_eq!(job.budget, 9.0);
        assert_eq!(job.config_id, Some(0));
        bracket.mark_dispatched(2, 0);
        bracket.record_result(2, 0, Some(0.5)).unwrap();

        assert!(bracket.is_complete());
        assert_eq!(bracket.next_job(), JobPoll::Finished);
    }

    #[test]
    fn promotions_error_on_incomplete_rungs() {
        let plans = plan_hyperband(1.0, 3.0, 3, None).unwrap();
        let mut bracket = BracketState::new(0, plans[0].clone());
        for id in 0..3u64 {
            bracket.mark_dispatched(0, id);
        }
        bracket.record_result(0, 0, Some(1.0)).unwrap();
        assert!(matches!(
            bracket.promotions(0),
            Err(SchedulerError::IncompleteRung { rung: 0, completed: 1, target: 3 })
        ));
    }

    #[test]
    fn failed_trials_never_get_promoted() {
        let plans = plan_hyperband(1.0, 9.0, 3, None).unwrap();
        let mut bracket = BracketState::new(0, plans[0].clone());
        for id in 0..9u64 {
            bracket.mark_dispatched(0, id);
        }
        for id in 0..9u64 {
            // fail the three best-submitted ids
            let loss = if id < 3 { None } else { Some(id as f64) };
            bracket.record_result(0, id, loss).unwrap();
        }
        let promoted = bracket.promotions(0).unwrap();
        assert_eq!(promoted, vec![3, 4, 5]);
    }

    #[test]
    fn every_promotion_appeared_on_the_previous_rung() {
        let plans = plan_hyperband(1.0, 27.0, 3, None).unwrap();
        let mut bracket = BracketState::new(0, plans[0].clone());
        let mut next_id = 0u64;
        let mut per_rung: Vec<Vec<u64>> = vec![Vec::new(); bracket.rungs().len()];
        loop {
            match bracket.next_job() {
                JobPoll::Ready(job) => {
                    let id = match job.kind {
                        JobKind::NewConfig => {
                            let id = next_id;
                            next_id += 1;
                            id
                        }
                        JobKind::Promotion => job.config_id.unwrap(),
                    };
                    per_rung[job.rung].push(id);
                    bracket.mark_dispatched(job.rung, id);
                    bracket.record_result(job.rung, id, Some((id % 13) as f64)).unwrap();
                }
                JobPoll::AwaitResults => panic!("sequential walk never waits"),
                JobPoll::Finished => break,
            }
        }
        for rung in 1..per_rung.len() {
            for id in &per_rung[rung] {
                assert!(per_rung[rung - 1].contains(id));
            }
        }
    }
}

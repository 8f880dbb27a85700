//! Batch elicitation runs against a simulated user.

use serde::Serialize;
use teamforge_core::bandit::{select_arms, Arm, BanditParams, BanditState, Choice, StopReason};
use teamforge_core::{MemberId, ObjectiveVector, ParetoArchive, Result, SimulatedUser};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub user_seed: u64,
    pub recommended: Vec<MemberId>,
    pub objectives: ObjectiveVector,
    pub rounds_used: u64,
    pub stop_reason: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub user_weights: [f64; 3],
    pub tau: f64,
    pub arm_count: usize,
    pub trials: Vec<TrialOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub user_weights: [f64; 3],
    pub tau: f64,
    pub user_seed: u64,
    pub trials: u64,
    pub params: BanditParams,
    pub true_best: Option<Vec<MemberId>>,
}

/// Plays one full elicitation session and returns the stopped bandit.
pub fn run_session(
    arms: Vec<Arm>,
    params: &BanditParams,
    user: &mut SimulatedUser,
) -> Result<BanditState> {
    let utilities: Vec<f64> = arms
        .iter()
        .map(|a| user.utility(&a.evaluated_team.objectives))
        .collect();
    let mut state = BanditState::new(arms, params.clone())?;
    while !state.is_terminal() {
        let slate = state.next_presentation()?;
        let shown: Vec<f64> = slate.iter().map(|&a| utilities[a]).collect();
        let pick = user.choose_by_utility(&shown)?;
        state.record_choice(&slate, Choice::Arm(slate[pick]))?;
    }
    Ok(state)
}

/// Runs `config.trials` sessions; trial `t` uses user seed `user_seed + t`.
pub fn simulate(archive: &ParetoArchive, config: &SimulationConfig) -> Result<SimulationReport> {
    config.params.validate()?;
    let arms = select_arms(archive.entries(), config.params.max_arms)?;
    let arm_count = arms.len();
    let mut trials = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let user_seed = config.user_seed.wrapping_add(trial);
        let mut user = SimulatedUser::new(config.user_weights, config.tau, user_seed)?;
        let state = run_session(arms.clone(), &config.params, &mut user)?;
        let best = state.recommend()?;
        let stop = state.stop().expect("session ran to a stop");
        trials.push(TrialOutcome {
            trial,
            user_seed,
            recommended: best.team.members().to_vec(),
            objectives: best.objectives,
            rounds_used: state.rounds(),
            stop_reason: stop.reason,
            identified: config.true_best.as_ref().map(|t| t == best.team.members()),
        });
    }
    let identification_rate = config.true_best.as_ref().map(|_| {
        let hits = trials.iter().filter(|t| t.identified == Some(true)).count();
        hits as f64 / trials.len().max(1) as f64
    });
    Ok(SimulationReport {
        user_weights: config.user_weights,
        tau: config.tau,
        arm_count,
        trials,
        identification_rate,
    })
}

//! Exhaustive Pareto front for small rosters, used as a ground-truth oracle
//! for the evolutionary search.

use crate::error::{Error, Result};
use crate::model::{EvaluatedTeam, ProjectSpec, Roster, Team};
use crate::nsga2::ParetoArchive;
use crate::objectives::{dominates, ObjectiveContext};

/// Largest number of candidate teams the oracle will enumerate.
pub const MAX_CANDIDATES: u128 = 200_000;

/// Binomial coefficient `C(n, k)`, saturating.
pub fn candidate_count(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        visit(&combo);
        let Some(i) = (0..k).rev().find(|&i| combo[i] != i + n - k) else {
            return;
        };
        combo[i] += 1;
        for j in (i + 1)..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Every team of the spec's size, evaluated.
pub fn all_teams(roster: &Roster, spec: &ProjectSpec) -> Result<Vec<EvaluatedTeam>> {
    spec.check_against(roster)?;
    let count = candidate_count(roster.len(), spec.team_size);
    if count > MAX_CANDIDATES {
        return Err(Error::InvalidConfig(format!(
            "{count} candidate teams exceed the exhaustive limit of {MAX_CANDIDATES}"
        )));
    }
    let ctx = ObjectiveContext::precomputed(roster, spec);
    let mut out = Vec::with_capacity(count as usize);
    for_each_combination(roster.len(), spec.team_size, |combo| {
        let team = Team::from_indices(combo, roster);
        out.push(EvaluatedTeam::new(team, ctx.evaluate_indices(combo)));
    });
    Ok(out)
}

/// The true Pareto front over all `C(n, k)` teams.
///
/// Candidates are scanned against every candidate with an objective sum at
/// least as large (only those can dominate), a plain pairwise test.
pub fn exhaustive_front(roster: &Roster, spec: &ProjectSpec) -> Result<ParetoArchive> {
    let mut all = all_teams(roster, spec)?;
    let sum = |e: &EvaluatedTeam| e.objectives.as_array().iter().sum::<f64>();
    all.sort_by(|a, b| sum(b).total_cmp(&sum(a)));
    let front: Vec<EvaluatedTeam> = all
        .iter()
        .filter(|cand| {
            !all.iter()
                .take_while(|other| sum(other) >= sum(cand))
                .any(|other| dominates(&other.objectives, &cand.objectives))
        })
        .cloned()
        .collect();
    ParetoArchive::from_entries(front)
}

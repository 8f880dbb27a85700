//! Stage two: best-arm identification over a frozen set of archive teams.
//!
//! Each round presents a slate of the `m` arms with the highest lil'UCB
//! index. Every presented arm counts as a pull; the arm the user picks earns
//! reward 1 and the rest earn 0, so rewards are Bernoulli. The session stops
//! when one arm's pull count outweighs all others by the lil'UCB ratio, or
//! when the round budget runs out.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{EvaluatedTeam, OBJECTIVE_COUNT};

/// Sub-Gaussian variance bound of a Bernoulli reward.
pub const VARIANCE_BOUND: f64 = 0.25;

// Relative slack for the pull-count stopping inequality. The default
// `lambda` is rarely representable exactly, and integer pull counts that
// meet the inequality exactly must not miss it by an ulp.
const STOP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditParams {
    pub epsilon: f64,
    pub beta: f64,
    /// `None` means `1 + 10 / arm_count`.
    pub lambda: Option<f64>,
    pub delta: f64,
    /// Slate size `m`; capped at the arm count.
    pub presentation_size: usize,
    pub round_budget: u64,
    /// Upper bound on arms drawn from the archive.
    pub max_arms: usize,
}

impl Default for BanditParams {
    fn default() -> Self {
        BanditParams {
            epsilon: 0.0,
            beta: 0.5,
            lambda: None,
            delta: 0.1,
            presentation_size: 3,
            round_budget: 500,
            max_arms: 8,
        }
    }
}

impl BanditParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if let Some(lambda) = self.lambda {
            if !(lambda.is_finite() && lambda > 0.0) {
                return bad(format!("lambda must be > 0, got {lambda}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if self.presentation_size < 1 {
            return bad("presentation_size must be at least 1".into());
        }
        if self.round_budget < 1 {
            return bad("round_budget must be at least 1".into());
        }
        if self.max_arms < 1 {
            return bad("max_arms must be at least 1".into());
        }
        Ok(())
    }

    pub fn lambda_for(&self, arm_count: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 + 10.0 / arm_count as f64)
    }
}

/// One selectable team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub arm_index: usize,
    pub evaluated_team: EvaluatedTeam,
}

/// A user's answer to one slate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Arm(usize),
    Skip,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Arm(i) => write!(f, "{i}"),
            Choice::Skip => f.write_str("skip"),
        }
    }
}

impl Serialize for Choice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Choice::Arm(i) => s.serialize_u64(*i as u64),
            Choice::Skip => s.serialize_str("skip"),
        }
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ChoiceVisitor;

        impl Visitor<'_> for ChoiceVisitor {
            type Value = Choice;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an arm index or \"skip\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Choice, E> {
                usize::try_from(v)
                    .map(Choice::Arm)
                    .map_err(|_| E::custom("arm index out of range"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Choice, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom("arm index must be non-negative"))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Choice, E> {
                if v.eq_ignore_ascii_case("skip") {
                    Ok(Choice::Skip)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(ChoiceVisitor)
    }
}

// ---------------------------------------------------------------------------
// Arm selection
// ---------------------------------------------------------------------------

fn distance(a: &EvaluatedTeam, b: &EvaluatedTeam) -> f64 {
    let (a, b) = (a.objectives.as_array(), b.objectives.as_array());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Picks at most `max_arms` representative teams from an archive.
///
/// Small archives are taken whole. Otherwise the best team on each objective
/// seeds the set and the rest is filled greedily by max-min Euclidean
/// distance in objective space. Ties go to the earlier team in canonical
/// order. Arms are numbered in canonical team order.
pub fn select_arms(entries: &[EvaluatedTeam], max_arms: usize) -> Result<Vec<Arm>> {
    if entries.is_empty() {
        return Err(Error::EmptyArchive);
    }
    if max_arms < 1 {
        return Err(Error::InvalidConfig("max_arms must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].team.cmp(&entries[b].team));

    let chosen: Vec<usize> = if entries.len() <= max_arms {
        order
    } else {
        let mut chosen: Vec<usize> = Vec::with_capacity(max_arms);
        for m in 0..OBJECTIVE_COUNT {
            if chosen.len() == max_arms {
                break;
            }
            // first maximum in canonical order
            let best = order
                .iter()
                .copied()
                .reduce(|best, i| {
                    if entries[i].objectives.get(m) > entries[best].objectives.get(m) {
                        i
                    } else {
                        best
                    }
                })
                .expect("entries nonempty");
            if !chosen.contains(&best) {
                chosen.push(best);
            }
        }
        while chosen.len() < max_arms {
            let mut pick: Option<(usize, f64)> = None;
            for &i in &order {
                if chosen.contains(&i) {
                    continue;
                }
                let gap = chosen
                    .iter()
                    .map(|&c| distance(&entries[i], &entries[c]))
                    .fold(f64::INFINITY, f64::min);
                if pick.is_none_or(|(_, g)| gap > g) {
                    pick = Some((i, gap));
                }
            }
            match pick {
                Some((i, _)) => chosen.push(i),
                None => break,
            }
        }
        chosen.sort_by(|&a, &b| entries[a].team.cmp(&entries[b].team));
        chosen
    };

    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(arm_index, i)| Arm {
            arm_index,
            evaluated_team: entries[i].clone(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Index and state
// ---------------------------------------------------------------------------

/// lil'UCB index of an arm with `pulls` presentations and `wins` selections.
/// Unpulled arms have an infinite index.
pub fn ucb_index(pulls: u64, wins: u64, params: &BanditParams) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    let t = pulls as f64;
    let eps = params.epsilon;
    let mean = wins as f64 / t;
    let log_term = (((1.0 + eps) * t + 2.0).ln() / params.delta).ln();
    let bonus = (1.0 + params.beta)
        * (1.0 + eps.sqrt())
        * (2.0 * VARIANCE_BOUND * (1.0 + eps) * log_term / t).sqrt();
    mean + bonus
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PullRatio,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub arm_index: usize,
    pub reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub arm_index: usize,
    pub pulls: u64,
    pub wins: u64,
}

/// Pull counts, win counts and the stopping status of one elicitation.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    arms: Vec<Arm>,
    pulls: Vec<u64>,
    wins: Vec<u64>,
    rounds: u64,
    params: BanditParams,
    lambda: f64,
    slate_size: usize,
    stopped: Option<Stop>,
}

impl BanditState {
    pub fn new(arms: Vec<Arm>, params: BanditParams) -> Result<Self> {
        params.validate()?;
        if arms.is_empty() {
            return Err(Error::EmptyArchive);
        }
        if let Some((pos, arm)) = arms.iter().enumerate().find(|(i, a)| a.arm_index != *i) {
            return Err(Error::InvalidConfig(format!(
                "arm at position {pos} has index {}",
                arm.arm_index
            )));
        }
        let n = arms.len();
        Ok(BanditState {
            lambda: params.lambda_for(n),
            slate_size: params.presentation_size.min(n),
            pulls: vec![0; n],
            wins: vec![0; n],
            rounds: 0,
            arms,
            params,
            stopped: None,
        })
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn params(&self) -> &BanditParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Effective slate size: `presentation_size` capped at the arm count.
    pub fn slate_size(&self) -> usize {
        self.slate_size
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn wins(&self) -> &[u64] {
        &self.wins
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn is_terminal(&self) -> bool {
        self.stopped.is_some()
    }

    pub fn stop(&self) -> Option<Stop> {
        self.stopped
    }

    pub fn stats(&self) -> Vec<ArmStats> {
        (0..self.arms.len())
            .map(|i| ArmStats {
                arm_index: i,
                pulls: self.pulls[i],
                wins: self.wins[i],
            })
            .collect()
    }

    pub fn index_of(&self, arm: usize) -> f64 {
        ucb_index(self.pulls[arm], self.wins[arm], &self.params)
    }

    pub fn empirical_mean(&self, arm: usize) -> f64 {
        match self.pulls[arm] {
            0 => 0.0,
            t => self.wins[arm] as f64 / t as f64,
        }
    }

    /// The slate for the next round: the `m` highest indices, ties broken by
    /// fewer pulls and then lower arm index.
    pub fn next_presentation(&self) -> Result<Vec<usize>> {
        if self.is_terminal() {
            return Err(Error::SessionTerminal);
        }
        let index: Vec<f64> = (0..self.arms.len()).map(|i| self.index_of(i)).collect();
        let mut order: Vec<usize> = (0..self.arms.len()).collect();
        order.sort_by(|&a, &b| {
            index[b]
                .total_cmp(&index[a])
                .then(self.pulls[a].cmp(&self.pulls[b]))
                .then(a.cmp(&b))
        });
        order.truncate(self.slate_size);
        Ok(order)
    }

    /// Applies one round of feedback and runs the stopping check.
    pub fn record_choice(&mut self, presented: &[usize], choice: Choice) -> Result<Option<Stop>> {
        if self.is_terminal() {
            return Err(Error::SessionTerminal);
        }
        if presented.is_empty() {
            return Err(Error::EmptyPresentation);
        }
        for (pos, &arm) in presented.iter().enumerate() {
            if arm >= self.arms.len() || presented[..pos].contains(&arm) {
                return Err(Error::InvalidConfig(format!(
                    "presented arm {arm} is unknown or repeated"
                )));
            }
        }
        if let Choice::Arm(arm) = choice {
            if !presented.contains(&arm) {
                return Err(Error::ChoiceNotPresented(arm));
            }
        }
        for &arm in presented {
            self.pulls[arm] += 1;
        }
        if let Choice::Arm(arm) = choice {
            self.wins[arm] += 1;
        }
        self.rounds += 1;
        self.stopped = self.stopping_check();
        Ok(self.stopped)
    }

    /// Returns the arm to recommend if the session should stop now.
    ///
    /// The pull-ratio rule fires when some arm has
    /// `T_i >= 1 + lambda * sum_{j != i} T_j`. Otherwise, once the round
    /// budget is spent, the arm with the best empirical mean is chosen (ties
    /// to more pulls, then the lower index).
    pub fn stopping_check(&self) -> Option<Stop> {
        let total: u64 = self.pulls.iter().sum();
        for (i, &t) in self.pulls.iter().enumerate() {
            let threshold = 1.0 + self.lambda * (total - t) as f64;
            if t as f64 + STOP_TOLERANCE * threshold >= threshold {
                return Some(Stop {
                    arm_index: i,
                    reason: StopReason::PullRatio,
                });
            }
        }
        if self.rounds >= self.params.round_budget {
            let best = (0..self.arms.len())
                .min_by(|&a, &b| {
                    self.empirical_mean(b)
                        .total_cmp(&self.empirical_mean(a))
                        .then(self.pulls[b].cmp(&self.pulls[a]))
                        .then(a.cmp(&b))
                })
                .expect("at least one arm");
            return Some(Stop {
                arm_index: best,
                reason: StopReason::Budget,
            });
        }
        None
    }

    /// The recommended team of a stopped session.
    pub fn recommend(&self) -> Result<&EvaluatedTeam> {
        match self.stopped {
            Some(stop) => Ok(&self.arms[stop.arm_index].evaluated_team),
            None => Err(Error::SessionNotTerminal),
        }
    }

    #[cfg(test)]
    pub(crate) fn set_counts(&mut self, pulls: &[u64], wins: &[u64], rounds: u64) {
        self.pulls = pulls.to_vec();
        self.wins = wins.to_vec();
        self.rounds = rounds;
    }
}
#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Member, ObjectiveVector, Roster, Team};

    fn entries(objs: &[[f64; 3]]) -> Vec<EvaluatedTeam> {
        let n = objs.len() + 1;
        let members = (0..n).map(|i| Member::new(format!("m{i:02}"))).collect();
        let roster = Roster::new(members, Vec::<(&str, &str, f64)>::new()).unwrap();
        objs.iter()
            .enumerate()
            .map(|(i, &o)| {
                let team = Team::from_indices(&[i, i + 1], &roster);
                EvaluatedTeam::new(team, ObjectiveVector::from(o))
            })
            .collect()
    }

    fn state(n: usize, params: BanditParams) -> BanditState {
        let objs: Vec<[f64; 3]> = (0..n).map(|i| [i as f64 / n as f64, 0.5, 0.5]).collect();
        let arms = select_arms(&entries(&objs), n).unwrap();
        BanditState::new(arms, params).unwrap()
    }

    #[test]
    fn small_archive_is_taken_whole() {
        let e = entries(&[[0.1, 0.2, 0.3]; 5]);
        let arms = select_arms(&e, 8).unwrap();
        assert_eq!(arms.len(), 5);
        for (i, arm) in arms.iter().enumerate() {
            assert_eq!(arm.arm_index, i);
            assert_eq!(arm.evaluated_team, e[i]);
        }
        assert_eq!(select_arms(&[], 8).unwrap_err(), Error::EmptyArchive);
    }

    #[test]
    fn greedy_dispersion_example() {
        let e = entries(&[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.5],
            [0.45, 0.45, 0.45],
        ]);
        // by-hand max-min distances once the unit vectors are seeded
        let d_mid = (3.0f64 * 0.25).sqrt();
        let d_low = (0.55f64 * 0.55 + 2.0 * 0.45 * 0.45).sqrt();
        assert!(d_mid > d_low);
        let arms = select_arms(&e, 4).unwrap();
        let picked: Vec<_> = arms
            .iter()
            .map(|a| a.evaluated_team.objectives.as_array())
            .collect();
        assert_eq!(
            picked,
            vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.5, 0.5, 0.5]
            ]
        );
    }

    #[test]
    fn seeds_cover_every_objective() {
        let e = entries(&[
            [0.2, 0.9, 0.1],
            [0.3, 0.3, 0.3],
            [0.9, 0.1, 0.2],
            [0.4, 0.4, 0.4],
            [0.1, 0.2, 0.95],
            [0.35, 0.35, 0.5],
        ]);
        let arms = select_arms(&e, 3).unwrap();
        for m in 0..3 {
            let best = e.iter().map(|x| x.objectives.get(m)).fold(0.0, f64::max);
            assert!(arms
                .iter()
                .any(|a| a.evaluated_team.objectives.get(m) == best));
        }
    }

    #[test]
    fn index_examples() {
        let p = BanditParams::default();
        assert_eq!(ucb_index(0, 0, &p), f64::INFINITY);
        let oracle = 1.5 * (0.5 * ((3.0f64).ln() / 0.1).ln()).sqrt();
        assert!((ucb_index(1, 0, &p) - oracle).abs() < 1e-12);
        assert!((ucb_index(1, 0, &p) - 1.6421).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for t in [10u64, 100, 1_000, 10_000, 100_000] {
            let idx = ucb_index(t, t, &p);
            assert!(idx < prev && idx > 1.0);
            prev = idx;
        }
        assert!(prev - 1.0 < 0.02);
    }

    #[test]
    fn first_round_uses_index_order() {
        let s = state(5, BanditParams::default());
        assert_eq!(s.next_presentation().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn unpulled_arm_is_always_presented() {
        let mut s = state(4, BanditParams::default());
        s.set_counts(&[5, 0, 9, 3], &[5, 0, 9, 3], 6);
        assert!(s.next_presentation().unwrap().contains(&1));
    }

    #[test]
    fn top_m_by_index() {
        let params = BanditParams {
            presentation_size: 2,
            ..Default::default()
        };
        let mut s = state(4, params);
        // pick counts whose indices order as arm1 > arm2 > arm0 > arm3
        s.set_counts(&[40, 4, 10, 200], &[20, 4, 8, 40], 100);
        let idx: Vec<f64> = (0..4).map(|i| s.index_of(i)).collect();
        assert!(
            idx[1] > idx[2] && idx[2] > idx[0] && idx[0] > idx[3],
            "{idx:?}"
        );
        assert_eq!(s.next_presentation().unwrap(), vec![1, 2]);
    }

    #[test]
    fn record_choice_updates_counts() {
        let mut s = state(4, BanditParams::default());
        s.record_choice(&[0, 1, 2], Choice::Arm(1)).unwrap();
        assert_eq!(s.pulls(), &[1, 1, 1, 0]);
        assert_eq!(s.wins(), &[0, 1, 0, 0]);
        s.record_choice(&[1, 2, 3], Choice::Skip).unwrap();
        assert_eq!(s.pulls(), &[1, 2, 2, 1]);
        assert_eq!(s.wins(), &[0, 1, 0, 0]);
        assert_eq!(s.rounds(), 2);
        assert_eq!(
            s.record_choice(&[0, 1, 2], Choice::Arm(3)).unwrap_err(),
            Error::ChoiceNotPresented(3)
        );
        assert_eq!(s.rounds(), 2);
    }

    #[test]
    fn pull_ratio_stop_at_exact_boundary() {
        let mut s = state(3, BanditParams::default());
        let lambda = 1.0 + 10.0 / 3.0;
        assert_eq!(s.lambda(), lambda);
        // 14 >= 1 + (13/3) * 3 holds exactly in rationals
        s.set_counts(&[14, 2, 1], &[14, 0, 0], 14);
        assert_eq!(
            s.stopping_check(),
            Some(Stop {
                arm_index: 0,
                reason: StopReason::PullRatio
            })
        );
        s.set_counts(&[13, 2, 1], &[13, 0, 0], 13);
        assert_eq!(s.stopping_check(), None);
        s.set_counts(&[1, 1, 1], &[0, 0, 0], 1);
        assert_eq!(s.stopping_check(), None);
    }

    #[test]
    fn budget_stop_breaks_mean_ties_by_pulls() {
        let params = BanditParams {
            round_budget: 10,
            ..Default::default()
        };
        let mut s = state(3, params);
        s.set_counts(&[5, 10, 4], &[1, 6, 2], 9);
        assert_eq!(s.stopping_check(), None);
        s.set_counts(&[5, 10, 5], &[1, 6, 3], 10);
        assert_eq!(
            s.stopping_check(),
            Some(Stop {
                arm_index: 1,
                reason: StopReason::Budget
            })
        );
    }

    #[test]
    fn recommend_requires_terminal() {
        let params = BanditParams {
            round_budget: 1,
            ..Default::default()
        };
        let mut s = state(4, params);
        assert_eq!(s.recommend().unwrap_err(), Error::SessionNotTerminal);
        let slate = s.next_presentation().unwrap();
        let stop = s
            .record_choice(&slate, Choice::Arm(slate[1]))
            .unwrap()
            .unwrap();
        assert_eq!(stop.reason, StopReason::Budget);
        assert_eq!(stop.arm_index, slate[1]);
        assert_eq!(s.recommend().unwrap(), &s.arms()[slate[1]].evaluated_team);
        assert_eq!(s.next_presentation().unwrap_err(), Error::SessionTerminal);
        assert_eq!(
            s.record_choice(&slate, Choice::Skip).unwrap_err(),
            Error::SessionTerminal
        );
    }

    #[test]
    fn slate_is_capped_by_arm_count() {
        let s = state(2, BanditParams::default());
        assert_eq!(s.slate_size(), 2);
        assert_eq!(s.next_presentation().unwrap(), vec![0, 1]);
    }

    #[test]
    fn choice_serde() {
        assert_eq!(serde_json::to_string(&Choice::Arm(2)).unwrap(), "2");
        assert_eq!(serde_json::to_string(&Choice::Skip).unwrap(), "\"skip\"");
        assert_eq!(serde_json::from_str::<Choice>("4").unwrap(), Choice::Arm(4));
        assert_eq!(
            serde_json::from_str::<Choice>("\"skip\"").unwrap(),
            Choice::Skip
        );
        assert!(serde_json::from_str::<Choice>("-1").is_err());
        assert!(serde_json::from_str::<Choice>("\"nope\"").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(BanditParams::default().validate().is_ok());
        for bad in [
            BanditParams {
                epsilon: -1.0,
                ..Default::default()
            },
            BanditParams {
                beta: 0.0,
                ..Default::default()
            },
            BanditParams {
                lambda: Some(0.0),
                ..Default::default()
            },
            BanditParams {
                delta: 1.0,
                ..Default::default()
            },
            BanditParams {
                presentation_size: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}

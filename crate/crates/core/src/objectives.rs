//! Team scoring and Pareto dominance.
//!
//! A team is scored on three maximized objectives:
//!
//! * **diversity**: one minus the mean pairwise cosine similarity of the
//!   members' expertise vectors,
//! * **cohesion**: mean pairwise familiarity weight,
//! * **coverage**: fraction of project requirements met by at least one
//!   member at or above the required proficiency.
//!
//! Pairwise sums always run over `i < j` in ascending roster order, so the
//! cached and uncached paths produce bit-identical results.

use crate::error::{Error, Result};
use crate::model::{EvaluatedTeam, Member, ObjectiveVector, ProjectSpec, Roster, Team};

/// Cosine similarity of two sparse expertise vectors, clamped to [0, 1].
///
/// A member with an all-zero vector is treated as dissimilar to everyone.
fn cosine_similarity(a: &Member, b: &Member) -> f64 {
    let norm_a = expertise_norm(a);
    let norm_b = expertise_norm(b);
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .expertise
        .iter()
        .filter_map(|(tag, &x)| b.expertise.get(tag).map(|&y| x * y))
        .sum();
    (dot / (norm_a * norm_b)).clamp(0.0, 1.0)
}

fn expertise_norm(m: &Member) -> f64 {
    m.expertise.values().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
struct PairCache {
    n: usize,
    similarity: Vec<f64>,
    familiarity: Vec<f64>,
}

/// Everything needed to score a team: the roster, the project spec and an
/// optional dense pairwise cache.
#[derive(Debug, Clone)]
pub struct ObjectiveContext<'a> {
    roster: &'a Roster,
    spec: &'a ProjectSpec,
    cache: Option<PairCache>,
}

impl<'a> ObjectiveContext<'a> {
    /// Context that recomputes pairwise terms on demand.
    pub fn new(roster: &'a Roster, spec: &'a ProjectSpec) -> Self {
        ObjectiveContext {
            roster,
            spec,
            cache: None,
        }
    }

    /// Context with dense n×n similarity and familiarity tables.
    pub fn precomputed(roster: &'a Roster, spec: &'a ProjectSpec) -> Self {
        let mut ctx = Self::new(roster, spec);
        let n = roster.len();
        let mut similarity = vec![0.0; n * n];
        let mut familiarity = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let s = ctx.similarity_uncached(i, j);
                let f = ctx.familiarity_uncached(i, j);
                similarity[i * n + j] = s;
                similarity[j * n + i] = s;
                familiarity[i * n + j] = f;
                familiarity[j * n + i] = f;
            }
        }
        ctx.cache = Some(PairCache {
            n,
            similarity,
            familiarity,
        });
        ctx
    }

    pub fn roster(&self) -> &'a Roster {
        self.roster
    }

    pub fn spec(&self) -> &'a ProjectSpec {
        self.spec
    }

    pub fn is_precomputed(&self) -> bool {
        self.cache.is_some()
    }

    fn similarity_uncached(&self, i: usize, j: usize) -> f64 {
        let members = self.roster.members();
        cosine_similarity(&members[i], &members[j])
    }

    fn familiarity_uncached(&self, i: usize, j: usize) -> f64 {
        let members = self.roster.members();
        self.roster
            .familiarity()
            .weight(&members[i].id, &members[j].id)
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(c) => c.similarity[i * c.n + j],
            None => self.similarity_uncached(i, j),
        }
    }

    fn familiarity(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(c) => c.familiarity[i * c.n + j],
            None => self.familiarity_uncached(i, j),
        }
    }

    fn team_indices(&self, team: &Team, min_size: usize) -> Result<Vec<usize>> {
        team.validate(self.roster)?;
        if team.len() < min_size {
            return Err(Error::InvalidTeam(format!(
                "needs at least {min_size} members, has {}",
                team.len()
            )));
        }
        team.indices(self.roster)
    }

    fn mean_over_pairs(&self, indices: &[usize], term: impl Fn(usize, usize) -> f64) -> f64 {
        let k = indices.len();
        let pairs = (k * (k - 1) / 2) as f64;
        let mut sum = 0.0;
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                sum += term(i, j);
            }
        }
        sum / pairs
    }

    // Index-level scoring used by the optimizer. `indices` must be distinct,
    // ascending and hold at least two members.

    pub(crate) fn diversity_of(&self, indices: &[usize]) -> f64 {
        let mean_sim = self.mean_over_pairs(indices, |i, j| self.similarity(i, j));
        (1.0 - mean_sim).clamp(0.0, 1.0)
    }

    pub(crate) fn cohesion_of(&self, indices: &[usize]) -> f64 {
        self.mean_over_pairs(indices, |i, j| self.familiarity(i, j))
            .clamp(0.0, 1.0)
    }

    pub(crate) fn coverage_of(&self, indices: &[usize]) -> f64 {
        let required = &self.spec.required;
        if required.is_empty() {
            return 1.0;
        }
        let members = self.roster.members();
        let met = required
            .iter()
            .filter(|req| {
                indices
                    .iter()
                    .any(|&i| members[i].proficiency(&req.discipline) >= req.min_proficiency)
            })
            .count();
        met as f64 / required.len() as f64
    }

    pub(crate) fn evaluate_indices(&self, indices: &[usize]) -> ObjectiveVector {
        ObjectiveVector {
            diversity: self.diversity_of(indices),
            cohesion: self.cohesion_of(indices),
            coverage: self.coverage_of(indices),
        }
    }
}

pub fn diversity(team: &Team, ctx: &ObjectiveContext<'_>) -> Result<f64> {
    let idx = ctx.team_indices(team, 2)?;
    Ok(ctx.diversity_of(&idx))
}

pub fn cohesion(team: &Team, ctx: &ObjectiveContext<'_>) -> Result<f64> {
    let idx = ctx.team_indices(team, 2)?;
    Ok(ctx.cohesion_of(&idx))
}

pub fn coverage(team: &Team, ctx: &ObjectiveContext<'_>) -> Result<f64> {
    let idx = ctx.team_indices(team, 1)?;
    Ok(ctx.coverage_of(&idx))
}

/// Scores a team on (diversity, cohesion, coverage). Pure and deterministic.
pub fn evaluate(team: &Team, ctx: &ObjectiveContext<'_>) -> Result<ObjectiveVector> {
    let idx = ctx.team_indices(team, 2)?;
    Ok(ctx.evaluate_indices(&idx))
}

pub fn evaluate_team(team: Team, ctx: &ObjectiveContext<'_>) -> Result<EvaluatedTeam> {
    let objectives = evaluate(&team, ctx)?;
    Ok(EvaluatedTeam::new(team, objectives))
}

/// Pareto dominance under maximization: `a` is at least as good everywhere
/// and strictly better somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let (a, b) = (a.as_array(), b.as_array());
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return false;
        }
        if x > y {
            strictly_better = true;
        }
    }
    strictly_better
}

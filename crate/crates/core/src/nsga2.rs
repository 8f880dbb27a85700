//! Stage one: evolve a Pareto archive of teams with NSGA-II.
//!
//! The chromosome is a team, encoded as the ascending roster positions of its
//! members. Selection is a binary tournament under the crowded comparison,
//! crossover keeps the parents' common members and fills the rest from their
//! symmetric difference, and mutation swaps slots for non-members. Survivors
//! are chosen by (μ+λ) truncation over parents and offspring.
//!
//! Every evaluated team is remembered; the returned archive is the
//! non-dominated, deduplicated subset of all of them.
//!
//! Random draws come from one stream (see [`crate::rng`]) in a fixed order:
//! initialization, then per generation all selection draws, all crossover
//! draws, all mutation draws, each in individual order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::debug;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvaluatedTeam, ObjectiveVector, ProjectSpec, Roster, Team, OBJECTIVE_COUNT};
use crate::objectives::{dominates, ObjectiveContext};
use crate::rng::{self, TeamRng};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-slot mutation probability; `None` means `1 / team_size`.
    pub mutation_rate: Option<f64>,
    pub rng_seed: u64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            population_size: 64,
            generations: 100,
            crossover_prob: 0.9,
            mutation_rate: None,
            rng_seed: 0,
        }
    }
}

impl EvolveConfig {
    pub fn with_seed(seed: u64) -> Self {
        EvolveConfig {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.population_size;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "population_size must be even and at least 4, got {n}"
            )));
        }
        if self.generations < 1 {
            return Err(Error::InvalidConfig(
                "generations must be at least 1".into(),
            ));
        }
        let unit = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !unit(self.crossover_prob) {
            return Err(Error::InvalidConfig(format!(
                "crossover_prob {} is outside [0, 1]",
                self.crossover_prob
            )));
        }
        if let Some(rate) = self.mutation_rate {
            if !unit(rate) {
                return Err(Error::InvalidConfig(format!(
                    "mutation_rate {rate} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn effective_mutation_rate(&self, team_size: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / team_size as f64)
    }
}

// ---------------------------------------------------------------------------
// Non-dominated sorting and crowding
// ---------------------------------------------------------------------------

/// Partitions `pop` into Pareto fronts, best first. Indices within a front
/// are ascending.
pub fn fast_non_dominated_sort(pop: &[ObjectiveVector]) -> Result<Vec<Vec<usize>>> {
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = pop.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_set: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&pop[p], &pop[q]) {
                dominates_set[p].push(q);
                dominated_by_count[q] += 1;
            } else if dominates(&pop[q], &pop[p]) {
                dominates_set[q].push(p);
                dominated_by_count[p] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominates_set[p] {
                dominated_by_count[q] -= 1;
                if dominated_by_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    Ok(fronts)
}

/// Crowding distance of each member of one front, keyed for tie-breaking.
///
/// Per objective the front is sorted by (value, key); the two extremes get
/// +∞ and interior members add `(next − prev) / (max − min)`. An objective
/// that is constant across the front contributes nothing. Fronts of at most
/// two members, or whose members all share one objective vector, are all
/// +∞.
fn crowding_keyed<K: Ord>(objs: &[ObjectiveVector], keys: &[K]) -> Vec<f64> {
    let n = objs.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut distance = vec![0.0; n];
    let mut any_spread = false;
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..OBJECTIVE_COUNT {
        order.sort_by(|&a, &b| {
            objs[a]
                .get(m)
                .total_cmp(&objs[b].get(m))
                .then_with(|| keys[a].cmp(&keys[b]))
        });
        let min = objs[order[0]].get(m);
        let max = objs[order[n - 1]].get(m);
        let range = max - min;
        if range <= 0.0 {
            continue;
        }
        any_spread = true;
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        for w in 1..(n - 1) {
            let i = order[w];
            if distance[i].is_finite() {
                distance[i] += (objs[order[w + 1]].get(m) - objs[order[w - 1]].get(m)) / range;
            }
        }
    }
    if !any_spread {
        return vec![f64::INFINITY; n];
    }
    distance
}

/// Crowding distances for a front, in the front's order.
pub fn crowding_distances(front: &[EvaluatedTeam]) -> Result<Vec<f64>> {
    if front.is_empty() {
        return Err(Error::EmptyFront);
    }
    let objs: Vec<ObjectiveVector> = front.iter().map(|e| e.objectives).collect();
    let keys: Vec<&Team> = front.iter().map(|e| &e.team).collect();
    Ok(crowding_keyed(&objs, &keys))
}

/// Standing of one individual for the crowded comparison.
#[derive(Debug, Clone, Copy)]
pub struct Standing<'a, K: ?Sized> {
    pub rank: usize,
    pub crowding: f64,
    pub key: &'a K,
}

/// Crowded comparison: `Less` means `x` is the better individual.
///
/// Lower rank wins, then larger crowding distance, then the smaller key.
pub fn crowded_compare<K: Ord + ?Sized>(x: &Standing<'_, K>, y: &Standing<'_, K>) -> Ordering {
    x.rank
        .cmp(&y.rank)
        .then_with(|| y.crowding.total_cmp(&x.crowding))
        .then_with(|| x.key.cmp(y.key))
}

fn rank_keyed<K: Ord>(objs: &[ObjectiveVector], keys: &[K]) -> (Vec<usize>, Vec<f64>) {
    let n = objs.len();
    let mut rank = vec![0; n];
    let mut crowding = vec![0.0; n];
    let fronts = fast_non_dominated_sort(objs).expect("population is never empty here");
    for (r, front) in fronts.iter().enumerate() {
        let front_objs: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i]).collect();
        let front_keys: Vec<&K> = front.iter().map(|&i| &keys[i]).collect();
        let dist = crowding_keyed(&front_objs, &front_keys);
        for (&i, d) in front.iter().zip(dist) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    (rank, crowding)
}

/// A population annotated with front rank and crowding distance.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPopulation {
    pub individuals: Vec<EvaluatedTeam>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

impl RankedPopulation {
    pub fn new(individuals: Vec<EvaluatedTeam>) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let objs: Vec<ObjectiveVector> = individuals.iter().map(|e| e.objectives).collect();
        let keys: Vec<&Team> = individuals.iter().map(|e| &e.team).collect();
        let (rank, crowding) = rank_keyed(&objs, &keys);
        Ok(RankedPopulation {
            individuals,
            rank,
            crowding,
        })
    }

    pub fn standing(&self, i: usize) -> Standing<'_, Team> {
        Standing {
            rank: self.rank[i],
            crowding: self.crowding[i],
            key: &self.individuals[i].team,
        }
    }

    pub fn front_count(&self) -> usize {
        self.rank.iter().max().map_or(0, |r| r + 1)
    }
}

// ---------------------------------------------------------------------------
// Variation operators
// ---------------------------------------------------------------------------

/// Intersection-preserving subset crossover over sorted, distinct slices.
fn crossover_sorted<T: Ord + Clone, R: RngCore + ?Sized>(a: &[T], b: &[T], rng: &mut R) -> Vec<T> {
    let mut common = Vec::with_capacity(a.len());
    let mut exclusive = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                common.push(x.clone());
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                exclusive.push(x.clone());
                i += 1;
            }
            (Some(_), Some(y)) => {
                exclusive.push(y.clone());
                j += 1;
            }
            (Some(x), None) => {
                exclusive.push(x.clone());
                i += 1;
            }
            (None, Some(y)) => {
                exclusive.push(y.clone());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let need = a.len() - common.len();
    rng::partial_shuffle(rng, &mut exclusive, need);
    common.extend(exclusive.into_iter().take(need));
    common.sort();
    common
}

fn check_parent(team: &Team) -> Result<()> {
    if team.members().windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidTeam(
            "member ids are not distinct and sorted".into(),
        ));
    }
    Ok(())
}

/// Child of two teams: all common members plus a uniform draw from the
/// members only one parent has.
pub fn crossover<R: RngCore + ?Sized>(
    parent_a: &Team,
    parent_b: &Team,
    rng: &mut R,
) -> Result<Team> {
    check_parent(parent_a)?;
    check_parent(parent_b)?;
    if parent_a.len() != parent_b.len() {
        return Err(Error::InvalidTeam(format!(
            "parents differ in size ({} vs {})",
            parent_a.len(),
            parent_b.len()
        )));
    }
    let child = crossover_sorted(parent_a.members(), parent_b.members(), rng);
    Ok(Team::from_sorted_unchecked(child))
}

/// Slot mutation over roster positions. `genome` holds distinct positions
/// below `roster_size`; it is sorted on return.
fn mutate_genome<R: RngCore + ?Sized>(
    genome: &mut [usize],
    roster_size: usize,
    rate: f64,
    rng: &mut R,
) {
    if genome.len() >= roster_size {
        return;
    }
    let mut in_team = vec![false; roster_size];
    for &g in genome.iter() {
        in_team[g] = true;
    }
    let mut outside: Vec<usize> = Vec::with_capacity(roster_size);
    for slot in 0..genome.len() {
        if rng::unit(rng) >= rate {
            continue;
        }
        outside.clear();
        outside.extend((0..roster_size).filter(|&i| !in_team[i]));
        let replacement = outside[rng::below(rng, outside.len())];
        in_team[genome[slot]] = false;
        in_team[replacement] = true;
        genome[slot] = replacement;
    }
    genome.sort_unstable();
}

/// Replaces each slot with probability `rate` by a uniformly chosen roster
/// member not currently on the team.
pub fn mutate<R: RngCore + ?Sized>(
    team: &Team,
    roster: &Roster,
    rate: f64,
    rng: &mut R,
) -> Result<Team> {
    team.validate(roster)?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "mutation_rate {rate} is outside [0, 1]"
        )));
    }
    let mut genome = team.indices(roster)?;
    mutate_genome(&mut genome, roster.len(), rate, rng);
    Ok(Team::from_indices(&genome, roster))
}

// ---------------------------------------------------------------------------
// Archive
// ---------------------------------------------------------------------------

/// Deduplicated, mutually non-dominated teams in ascending team order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParetoArchive {
    entries: Vec<EvaluatedTeam>,
}

impl ParetoArchive {
    /// Keeps the non-dominated subset of `candidates`, dropping duplicate
    /// teams.
    pub fn from_candidates(candidates: impl IntoIterator<Item = EvaluatedTeam>) -> Result<Self> {
        let mut unique: BTreeMap<Team, ObjectiveVector> = BTreeMap::new();
        for c in candidates {
            unique.entry(c.team).or_insert(c.objectives);
        }
        if unique.is_empty() {
            return Err(Error::EmptyArchive);
        }
        // In descending lexicographic objective order a dominator always
        // precedes what it dominates, so each candidate need only be checked
        // against the front built so far.
        let mut sorted: Vec<(Team, ObjectiveVector)> = unique.into_iter().collect();
        sorted.sort_by(|(ta, a), (tb, b)| {
            let (a, b) = (a.as_array(), b.as_array());
            b[0].total_cmp(&a[0])
                .then(b[1].total_cmp(&a[1]))
                .then(b[2].total_cmp(&a[2]))
                .then_with(|| ta.cmp(tb))
        });
        let mut front: Vec<EvaluatedTeam> = Vec::new();
        for (team, obj) in sorted {
            if !front.iter().any(|f| dominates(&f.objectives, &obj)) {
                front.push(EvaluatedTeam::new(team, obj));
            }
        }
        front.sort_by(|a, b| a.team.cmp(&b.team));
        Ok(ParetoArchive { entries: front })
    }

    /// Accepts entries as-is after checking every archive invariant.
    pub fn from_entries(mut entries: Vec<EvaluatedTeam>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyArchive);
        }
        entries.sort_by(|a, b| a.team.cmp(&b.team));
        if let Some(w) = entries.windows(2).find(|w| w[0].team == w[1].team) {
            return Err(Error::MalformedDocument(format!(
                "duplicate team {}",
                w[0].team
            )));
        }
        let k = entries[0].team.len();
        for e in &entries {
            check_parent(&e.team)?;
            if e.team.len() != k {
                return Err(Error::MalformedDocument(format!(
                    "team {} has {} members, expected {k}",
                    e.team,
                    e.team.len()
                )));
            }
        }
        for a in &entries {
            if let Some(b) = entries
                .iter()
                .find(|b| dominates(&b.objectives, &a.objectives))
            {
                return Err(Error::MalformedDocument(format!(
                    "team {} is dominated by {}",
                    a.team, b.team
                )));
            }
        }
        Ok(ParetoArchive { entries })
    }

    pub fn entries(&self) -> &[EvaluatedTeam] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn team_size(&self) -> usize {
        self.entries[0].team.len()
    }

    pub fn contains(&self, team: &Team) -> bool {
        self.entries.binary_search_by(|e| e.team.cmp(team)).is_ok()
    }
}

// ---------------------------------------------------------------------------
// Generational loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Individual {
    genome: Vec<usize>,
    objectives: ObjectiveVector,
}

/// A running NSGA-II optimization. Use [`evolve`] for the one-shot form.
pub struct Evolution<'a> {
    ctx: ObjectiveContext<'a>,
    config: EvolveConfig,
    team_size: usize,
    mutation_rate: f64,
    rng: TeamRng,
    population: Vec<Individual>,
    rank: Vec<usize>,
    crowding: Vec<f64>,
    seen: BTreeMap<Vec<usize>, ObjectiveVector>,
    generation: usize,
}

impl<'a> Evolution<'a> {
    /// Validates inputs and draws and ranks the initial population.
    pub fn new(roster: &'a Roster, spec: &'a ProjectSpec, config: &EvolveConfig) -> Result<Self> {
        config.validate()?;
        spec.check_against(roster)?;
        let team_size = spec.team_size;
        let mut evo = Evolution {
            ctx: ObjectiveContext::precomputed(roster, spec),
            config: config.clone(),
            team_size,
            mutation_rate: config.effective_mutation_rate(team_size),
            rng: rng::seeded(config.rng_seed),
            population: Vec::with_capacity(config.population_size),
            rank: Vec::new(),
            crowding: Vec::new(),
            seen: BTreeMap::new(),
            generation: 0,
        };
        let n = roster.len();
        let mut pool: Vec<usize> = (0..n).collect();
        for _ in 0..config.population_size {
            rng::partial_shuffle(&mut evo.rng, &mut pool, team_size);
            let mut genome = pool[..team_size].to_vec();
            genome.sort_unstable();
            let ind = evo.evaluate(genome);
            evo.population.push(ind);
        }
        evo.rerank();
        Ok(evo)
    }

    fn evaluate(&mut self, genome: Vec<usize>) -> Individual {
        let objectives = match self.seen.get(&genome) {
            Some(&o) => o,
            None => {
                let o = self.ctx.evaluate_indices(&genome);
                self.seen.insert(genome.clone(), o);
                o
            }
        };
        Individual { genome, objectives }
    }

    fn rerank(&mut self) {
        let objs: Vec<ObjectiveVector> = self.population.iter().map(|i| i.objectives).collect();
        let keys: Vec<&[usize]> = self
            .population
            .iter()
            .map(|i| i.genome.as_slice())
            .collect();
        let (rank, crowding) = rank_keyed(&objs, &keys);
        self.rank = rank;
        self.crowding = crowding;
    }

    fn standing(&self, i: usize) -> Standing<'_, [usize]> {
        Standing {
            rank: self.rank[i],
            crowding: self.crowding[i],
            key: &self.population[i].genome,
        }
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let a = rng::below(&mut self.rng, n);
        let b = rng::below(&mut self.rng, n);
        match crowded_compare(&self.standing(a), &self.standing(b)) {
            Ordering::Greater => b,
            _ => a,
        }
    }

    /// Runs one generation: selection, variation, evaluation and survival.
    pub fn step(&mut self) {
        let n = self.population.len();
        let parents: Vec<usize> = (0..n).map(|_| self.tournament()).collect();

        let mut children: Vec<Vec<usize>> = Vec::with_capacity(n);
        for pair in parents.chunks_exact(2) {
            let a = &self.population[pair[0]].genome;
            let b = &self.population[pair[1]].genome;
            if rng::unit(&mut self.rng) < self.config.crossover_prob {
                let c1 = crossover_sorted(a, b, &mut self.rng);
                let c2 = crossover_sorted(b, a, &mut self.rng);
                children.push(c1);
                children.push(c2);
            } else {
                children.push(a.clone());
                children.push(b.clone());
            }
        }
        let roster_size = self.ctx.roster().len();
        for child in &mut children {
            mutate_genome(child, roster_size, self.mutation_rate, &mut self.rng);
        }

        let offspring: Vec<Individual> = children.into_iter().map(|g| self.evaluate(g)).collect();
        self.population.extend(offspring);
        self.rerank();

        let mut order: Vec<usize> = (0..self.population.len()).collect();
        order.sort_by(|&x, &y| crowded_compare(&self.standing(x), &self.standing(y)));
        let mut merged: Vec<Option<Individual>> = std::mem::take(&mut self.population)
            .into_iter()
            .map(Some)
            .collect();
        self.population = order[..n]
            .iter()
            .map(|&i| merged[i].take().expect("each survivor taken once"))
            .collect();
        self.rerank();
        self.generation += 1;
        debug!(
            "generation {}: {} distinct teams evaluated",
            self.generation,
            self.seen.len()
        );
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn team_size(&self) -> usize {
        self.team_size
    }

    /// Current population as evaluated teams, in population order.
    pub fn population(&self) -> Vec<EvaluatedTeam> {
        let roster = self.ctx.roster();
        self.population
            .iter()
            .map(|i| EvaluatedTeam::new(Team::from_indices(&i.genome, roster), i.objectives))
            .collect()
    }

    /// Highest value of each objective in the current population.
    pub fn best_per_objective(&self) -> [f64; OBJECTIVE_COUNT] {
        let mut best = [f64::NEG_INFINITY; OBJECTIVE_COUNT];
        for ind in &self.population {
            for (m, b) in best.iter_mut().enumerate() {
                *b = b.max(ind.objectives.get(m));
            }
        }
        best
    }

    /// Number of distinct teams evaluated so far.
    pub fn evaluated_count(&self) -> usize {
        self.seen.len()
    }

    /// Non-dominated subset of every team evaluated so far.
    pub fn archive(&self) -> ParetoArchive {
        let roster = self.ctx.roster();
        ParetoArchive::from_candidates(
            self.seen
                .iter()
                .map(|(g, &o)| EvaluatedTeam::new(Team::from_indices(g, roster), o)),
        )
        .expect("at least the initial population was evaluated")
    }

    /// Runs all remaining generations and returns the archive.
    pub fn run(mut self) -> ParetoArchive {
        while self.generation < self.config.generations {
            self.step();
        }
        self.archive()
    }
}

/// Evolves a Pareto archive of teams for `spec` drawn from `roster`.
/// Deterministic given `config.rng_seed`.
pub fn evolve(roster: &Roster, spec: &ProjectSpec, config: &EvolveConfig) -> Result<ParetoArchive> {
    Ok(Evolution::new(roster, spec, config)?.run())
}

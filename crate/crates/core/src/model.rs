//! Domain types shared by the whole engine.
//!
//! All types are immutable once constructed. Constructors validate, so a
//! value of any of these types can be trusted downstream.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a roster member. Ordered byte-wise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(String);

impl MemberId {
    pub fn new(id: impl Into<String>) -> Self {
        MemberId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MemberId {
    fn from(s: &str) -> Self {
        MemberId(s.to_owned())
    }
}

impl From<String> for MemberId {
    fn from(s: String) -> Self {
        MemberId(s)
    }
}

fn check_unit(value: f64) -> bool {
    value.is_finite() && (0.0..=1.0).contains(&value)
}

// ---------------------------------------------------------------------------
// Members and the roster
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: MemberId,
    #[serde(rename = "name", default)]
    pub display_name: String,
    #[serde(rename = "org", default)]
    pub organization: String,
    /// Discipline tag to proficiency in [0, 1].
    #[serde(default)]
    pub expertise: BTreeMap<String, f64>,
}

impl Member {
    pub fn new(id: impl Into<MemberId>) -> Self {
        Member {
            id: id.into(),
            display_name: String::new(),
            organization: String::new(),
            expertise: BTreeMap::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = name.into();
        self
    }

    pub fn with_org(mut self, org: impl Into<String>) -> Self {
        self.organization = org.into();
        self
    }

    pub fn with_skill(mut self, discipline: impl Into<String>, proficiency: f64) -> Self {
        self.expertise.insert(discipline.into(), proficiency);
        self
    }

    pub fn proficiency(&self, discipline: &str) -> f64 {
        self.expertise.get(discipline).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.id.as_str().is_empty() {
            return Err(Error::EmptyMemberId);
        }
        for (discipline, &value) in &self.expertise {
            if !check_unit(value) {
                return Err(Error::ProficiencyOutOfRange {
                    owner: self.id.to_string(),
                    discipline: discipline.clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Undirected weighted acquaintance graph. Missing edges weigh 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FamiliarityGraph {
    // key is (smaller id, larger id)
    edges: BTreeMap<(MemberId, MemberId), f64>,
}

impl FamiliarityGraph {
    fn key(a: &MemberId, b: &MemberId) -> (MemberId, MemberId) {
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    }

    pub fn weight(&self, a: &MemberId, b: &MemberId) -> f64 {
        self.edges.get(&Self::key(a, b)).copied().unwrap_or(0.0)
    }

    /// Edges as `(a, b, weight)` with `a < b`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (&MemberId, &MemberId, f64)> {
        self.edges.iter().map(|((a, b), &w)| (a, b, w))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The member pool: expertise per member plus the familiarity graph.
///
/// Members are stored sorted by id, so a member's position doubles as a
/// compact, order-preserving index.
#[derive(Debug, Clone)]
pub struct Roster {
    members: Vec<Member>,
    familiarity: FamiliarityGraph,
    index: HashMap<MemberId, usize>,
}

impl PartialEq for Roster {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members && self.familiarity == other.familiarity
    }
}

impl Roster {
    /// Builds a validated roster. `edges` are `(a, b, weight)` triples.
    pub fn new<I, S>(members: Vec<Member>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<MemberId>,
    {
        let mut members = members;
        for member in &members {
            member.validate()?;
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(pair) = members.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateMember(pair[0].id.to_string()));
        }
        if members.len() < 2 {
            return Err(Error::RosterTooSmall(members.len()));
        }
        let index: HashMap<MemberId, usize> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();

        let mut graph = FamiliarityGraph::default();
        for (a, b, weight) in edges {
            let (a, b): (MemberId, MemberId) = (a.into(), b.into());
            for end in [&a, &b] {
                if !index.contains_key(end) {
                    return Err(Error::UnknownMember(end.to_string()));
                }
            }
            if a == b {
                return Err(Error::MalformedDocument(format!(
                    "familiarity edge from `{a}` to itself"
                )));
            }
            if !check_unit(weight) {
                return Err(Error::WeightOutOfRange {
                    a: a.to_string(),
                    b: b.to_string(),
                    weight,
                });
            }
            let key = FamiliarityGraph::key(&a, &b);
            if graph.edges.insert(key, weight).is_some() {
                return Err(Error::MalformedDocument(format!(
                    "more than one familiarity edge between `{a}` and `{b}`"
                )));
            }
        }

        Ok(Roster {
            members,
            familiarity: graph,
            index,
        })
    }

    /// Members in ascending id order.
    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn familiarity(&self) -> &FamiliarityGraph {
        &self.familiarity
    }

    pub fn index_of(&self, id: &MemberId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn member(&self, id: &MemberId) -> Option<&Member> {
        self.index_of(id).map(|i| &self.members[i])
    }

    pub fn contains(&self, id: &MemberId) -> bool {
        self.index.contains_key(id)
    }

    /// Union of all discipline tags declared by any member, sorted.
    pub fn disciplines(&self) -> BTreeSet<&str> {
        self.members
            .iter()
            .flat_map(|m| m.expertise.keys().map(String::as_str))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Project requirements
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub discipline: String,
    pub min_proficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ProjectSpec {
    pub team_size: usize,
    #[serde(default)]
    pub required: Vec<Requirement>,
}

#[derive(Deserialize)]
struct RawSpec {
    team_size: usize,
    #[serde(default)]
    required: Vec<Requirement>,
}

impl TryFrom<RawSpec> for ProjectSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        ProjectSpec::new(raw.team_size, raw.required)
    }
}

impl ProjectSpec {
    pub fn new(team_size: usize, required: Vec<Requirement>) -> Result<Self> {
        if team_size < 2 {
            return Err(Error::InvalidTeamSize(team_size));
        }
        let mut seen = BTreeSet::new();
        for req in &required {
            if !seen.insert(req.discipline.as_str()) {
                return Err(Error::DuplicateDiscipline(req.discipline.clone()));
            }
            if !check_unit(req.min_proficiency) {
                return Err(Error::ProficiencyOutOfRange {
                    owner: "spec".into(),
                    discipline: req.discipline.clone(),
                    value: req.min_proficiency,
                });
            }
        }
        Ok(ProjectSpec {
            team_size,
            required,
        })
    }

    /// Convenience constructor from `(discipline, threshold)` pairs.
    pub fn with_requirements<'a>(
        team_size: usize,
        required: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let required = required
            .into_iter()
            .map(|(d, t)| Requirement {
                discipline: d.to_owned(),
                min_proficiency: t,
            })
            .collect();
        Self::new(team_size, required)
    }

    /// Checks that the roster can supply a team of this size.
    pub fn check_against(&self, roster: &Roster) -> Result<()> {
        if self.team_size > roster.len() {
            return Err(Error::SpecTooLarge {
                team_size: self.team_size,
                roster_size: roster.len(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Teams and objective vectors
// ---------------------------------------------------------------------------

/// A set of distinct members, stored sorted ascending.
///
/// Two teams with the same member set are equal and serialize identically.
/// The derived ordering is lexicographic over the sorted ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Team {
    members: Vec<MemberId>,
}

impl Team {
    /// Canonicalizes `ids` into a team of exactly `team_size` roster members.
    pub fn canonicalize<I, S>(ids: I, roster: &Roster, team_size: usize) -> Result<Team>
    where
        I: IntoIterator<Item = S>,
        S: Into<MemberId>,
    {
        let mut members: Vec<MemberId> = ids.into_iter().map(Into::into).collect();
        members.sort();
        if let Some(pair) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateMember(pair[0].to_string()));
        }
        if let Some(unknown) = members.iter().find(|id| !roster.contains(id)) {
            return Err(Error::UnknownMember(unknown.to_string()));
        }
        if members.len() != team_size {
            return Err(Error::WrongSize {
                expected: team_size,
                got: members.len(),
            });
        }
        Ok(Team { members })
    }

    /// Builds a team from roster positions. Positions must be distinct.
    pub(crate) fn from_indices(indices: &[usize], roster: &Roster) -> Team {
        let mut members: Vec<MemberId> = indices
            .iter()
            .map(|&i| roster.members()[i].id.clone())
            .collect();
        members.sort();
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Team { members }
    }

    /// Wraps ids that are already sorted and distinct.
    pub(crate) fn from_sorted_unchecked(members: Vec<MemberId>) -> Team {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Team { members }
    }

    /// Roster positions of the members, ascending.
    pub fn indices(&self, roster: &Roster) -> Result<Vec<usize>> {
        self.members
            .iter()
            .map(|id| {
                roster
                    .index_of(id)
                    .ok_or_else(|| Error::UnknownMember(id.to_string()))
            })
            .collect()
    }

    /// Checks the team against a roster without a size constraint.
    pub fn validate(&self, roster: &Roster) -> Result<()> {
        if self.members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTeam(
                "member ids are not distinct and sorted".into(),
            ));
        }
        self.indices(roster).map(|_| ())
    }

    pub fn members(&self) -> &[MemberId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &MemberId) -> bool {
        self.members.binary_search(id).is_ok()
    }
}

impl fmt::Display for Team {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.members.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

/// Per-team scores, all in [0, 1] and all maximized.
///
/// Component order is always (diversity, cohesion, coverage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObjectives")]
pub struct ObjectiveVector {
    pub diversity: f64,
    pub cohesion: f64,
    pub coverage: f64,
}

pub const OBJECTIVE_COUNT: usize = 3;
pub const OBJECTIVE_NAMES: [&str; OBJECTIVE_COUNT] = ["diversity", "cohesion", "coverage"];

#[derive(Deserialize)]
struct RawObjectives {
    diversity: f64,
    cohesion: f64,
    coverage: f64,
}

impl TryFrom<RawObjectives> for ObjectiveVector {
    type Error = Error;

    fn try_from(raw: RawObjectives) -> Result<Self> {
        ObjectiveVector::new(raw.diversity, raw.cohesion, raw.coverage)
    }
}

impl ObjectiveVector {
    pub fn new(diversity: f64, cohesion: f64, coverage: f64) -> Result<Self> {
        let v = ObjectiveVector {
            diversity,
            cohesion,
            coverage,
        };
        if let Some(i) = v.as_array().iter().position(|&x| !check_unit(x)) {
            return Err(Error::MalformedDocument(format!(
                "objective `{}` = {} is outside [0, 1]",
                OBJECTIVE_NAMES[i],
                v.get(i)
            )));
        }
        Ok(v)
    }

    pub fn as_array(&self) -> [f64; OBJECTIVE_COUNT] {
        [self.diversity, self.cohesion, self.coverage]
    }

    pub fn get(&self, objective: usize) -> f64 {
        self.as_array()[objective]
    }
}

impl From<[f64; OBJECTIVE_COUNT]> for ObjectiveVector {
    /// Unchecked conversion, mainly for tests and synthetic fronts.
    fn from(v: [f64; OBJECTIVE_COUNT]) -> Self {
        ObjectiveVector {
            diversity: v[0],
            cohesion: v[1],
            coverage: v[2],
        }
    }
}

/// A team together with its evaluated objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedTeam {
    #[serde(rename = "member_ids")]
    pub team: Team,
    pub objectives: ObjectiveVector,
}

impl EvaluatedTeam {
    pub fn new(team: Team, objectives: ObjectiveVector) -> Self {
        EvaluatedTeam { team, objectives }
    }
}

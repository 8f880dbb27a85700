//! On-disk JSON documents: rosters, project specs and Pareto archives.
//!
//! Serialization is canonical: members sorted by id, expertise keys sorted,
//! familiarity edges stored once with `a < b` and sorted, archive entries in
//! team order. Floats use the shortest representation that round-trips
//! bit-exactly.
//!
//! ```text
//! roster:  {"members":[{"id","name","org","expertise":{tag:real}}],
//!           "familiarity":[{"a","b","w"}]}
//! spec:    {"team_size":int, "required":[{"discipline","min_proficiency"}]}
//! archive: {"roster_hash":hex, "spec_hash":hex, "seed":int,
//!           "entries":[{"member_ids":[str], "objectives":{..}}]}
//! ```

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{EvaluatedTeam, Member, MemberId, ProjectSpec, Requirement, Roster};
use crate::nsga2::ParetoArchive;

fn malformed(err: serde_json::Error) -> Error {
    Error::MalformedDocument(err.to_string())
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("documents always serialize");
    out.push(b'\n');
    out
}

// ---------------------------------------------------------------------------
// Roster
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub a: MemberId,
    pub b: MemberId,
    pub w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosterDoc {
    pub members: Vec<Member>,
    #[serde(default)]
    pub familiarity: Vec<EdgeDoc>,
}

impl From<&Roster> for RosterDoc {
    fn from(roster: &Roster) -> Self {
        RosterDoc {
            members: roster.members().to_vec(),
            familiarity: roster
                .familiarity()
                .edges()
                .map(|(a, b, w)| EdgeDoc {
                    a: a.clone(),
                    b: b.clone(),
                    w,
                })
                .collect(),
        }
    }
}

impl TryFrom<RosterDoc> for Roster {
    type Error = Error;

    fn try_from(doc: RosterDoc) -> Result<Roster> {
        Roster::new(
            doc.members,
            doc.familiarity.into_iter().map(|e| (e.a, e.b, e.w)),
        )
    }
}

impl Serialize for Roster {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RosterDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Roster {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = RosterDoc::deserialize(d)?;
        Roster::try_from(doc).map_err(serde::de::Error::custom)
    }
}

pub fn parse_roster(bytes: &[u8]) -> Result<Roster> {
    let doc: RosterDoc = serde_json::from_slice(bytes).map_err(malformed)?;
    Roster::try_from(doc)
}

pub fn roster_from_value(value: serde_json::Value) -> Result<Roster> {
    let doc: RosterDoc = serde_json::from_value(value).map_err(malformed)?;
    Roster::try_from(doc)
}

pub fn write_roster(roster: &Roster) -> Vec<u8> {
    to_pretty(roster)
}

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
struct SpecDoc {
    team_size: u64,
    #[serde(default)]
    required: Vec<Requirement>,
}

impl TryFrom<SpecDoc> for ProjectSpec {
    type Error = Error;

    fn try_from(doc: SpecDoc) -> Result<ProjectSpec> {
        let k = usize::try_from(doc.team_size)
            .map_err(|_| Error::MalformedDocument("team_size is too large".into()))?;
        ProjectSpec::new(k, doc.required)
    }
}

pub fn parse_spec(bytes: &[u8]) -> Result<ProjectSpec> {
    let doc: SpecDoc = serde_json::from_slice(bytes).map_err(malformed)?;
    ProjectSpec::try_from(doc)
}

pub fn spec_from_value(value: serde_json::Value) -> Result<ProjectSpec> {
    let doc: SpecDoc = serde_json::from_value(value).map_err(malformed)?;
    ProjectSpec::try_from(doc)
}

pub fn write_spec(spec: &ProjectSpec) -> Vec<u8> {
    to_pretty(spec)
}

/// SHA-256 over the compact canonical JSON of a document, hex encoded.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("documents always serialize");
    hex::encode(Sha256::digest(&bytes))
}

// ---------------------------------------------------------------------------
// Archive
// ---------------------------------------------------------------------------

/// Provenance stored alongside archive entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveMeta {
    pub roster_hash: String,
    pub spec_hash: String,
    pub seed: u64,
}

impl ArchiveMeta {
    pub fn new(roster: &Roster, spec: &ProjectSpec, seed: u64) -> Self {
        ArchiveMeta {
            roster_hash: content_hash(roster),
            spec_hash: content_hash(spec),
            seed,
        }
    }
}

#[derive(Serialize)]
struct ArchiveOut<'a> {
    roster_hash: &'a str,
    spec_hash: &'a str,
    seed: u64,
    entries: &'a [EvaluatedTeam],
}

#[derive(Deserialize)]
struct ArchiveIn {
    roster_hash: String,
    spec_hash: String,
    seed: u64,
    entries: Vec<EvaluatedTeam>,
}

pub fn write_archive(archive: &ParetoArchive, meta: &ArchiveMeta) -> Vec<u8> {
    to_pretty(&ArchiveOut {
        roster_hash: &meta.roster_hash,
        spec_hash: &meta.spec_hash,
        seed: meta.seed,
        entries: archive.entries(),
    })
}

pub fn read_archive(bytes: &[u8]) -> Result<(ParetoArchive, ArchiveMeta)> {
    let doc: ArchiveIn = serde_json::from_slice(bytes).map_err(malformed)?;
    let is_hex = |s: &str| s.bytes().all(|b| b.is_ascii_hexdigit());
    if !is_hex(&doc.roster_hash) || !is_hex(&doc.spec_hash) {
        return Err(Error::MalformedDocument(
            "hashes must be hex strings".into(),
        ));
    }
    if doc.entries.is_empty() {
        return Err(Error::MalformedDocument("archive has no entries".into()));
    }
    let archive = ParetoArchive::from_entries(doc.entries).map_err(|e| match e {
        Error::MalformedDocument(_) => e,
        other => Error::MalformedDocument(other.to_string()),
    })?;
    Ok((
        archive,
        ArchiveMeta {
            roster_hash: doc.roster_hash,
            spec_hash: doc.spec_hash,
            seed: doc.seed,
        },
    ))
}

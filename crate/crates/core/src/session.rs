//! The two-stage pipeline as an event-sourced state machine.
//!
//! A session moves forward through `Created → Evolved → Eliciting →
//! Recommended`. Every mutation appends exactly one event, and replaying the
//! event log reproduces the session field for field. [`SessionStore`] keeps
//! many sessions, serializes operations per session and mirrors each log to
//! `{session_id}.ndjson` under a data directory.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::bandit::{select_arms, Arm, ArmStats, BanditParams, BanditState, Choice, Stop};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{EvaluatedTeam, MemberId, ObjectiveVector, ProjectSpec, Roster};
use crate::nsga2::{evolve, EvolveConfig, ParetoArchive};

/// Environment variable naming the session log directory.
pub const DATA_DIR_ENV: &str = "TEAMFORGE_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "./data";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Evolved,
    Eliciting,
    Recommended,
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        roster: Roster,
        spec: ProjectSpec,
        evolve_config: EvolveConfig,
        bandit_params: BanditParams,
    },
    Evolved {
        archive: Vec<EvaluatedTeam>,
        /// Positions in `archive` of the teams chosen as arms, in arm order.
        arm_entries: Vec<usize>,
    },
    RoundPresented {
        nonce: String,
        arms: Vec<usize>,
    },
    ChoiceRecorded {
        nonce: String,
        presented: Vec<usize>,
        choice: Choice,
        rounds_used: u64,
        stop: Option<Stop>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

// ---------------------------------------------------------------------------
// Views returned to clients
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedTeam {
    pub arm_index: usize,
    pub member_ids: Vec<MemberId>,
    pub member_names: Vec<String>,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub nonce: String,
    pub teams: Vec<PresentedTeam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub phase: Phase,
    pub rounds_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub team: Vec<MemberId>,
    pub objectives: ObjectiveVector,
    pub rounds_used: u64,
    pub arms: Vec<ArmStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub archive_size: usize,
    pub arm_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Round {
    nonce: String,
    arms: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    roster: Roster,
    spec: ProjectSpec,
    evolve_config: EvolveConfig,
    bandit_params: BanditParams,
    phase: Phase,
    archive: Option<ParetoArchive>,
    bandit: Option<BanditState>,
    outstanding: Option<Round>,
    recommendation: Option<EvaluatedTeam>,
    log: Vec<EventRecord>,
}

fn validate_inputs(
    roster: &Roster,
    spec: &ProjectSpec,
    evolve_config: &EvolveConfig,
    bandit_params: &BanditParams,
) -> Result<()> {
    spec.check_against(roster)?;
    evolve_config.validate()?;
    bandit_params.validate()
}

impl Session {
    /// Validates inputs and opens a session in phase `Created`.
    pub fn create(
        id: impl Into<String>,
        roster: Roster,
        spec: ProjectSpec,
        evolve_config: EvolveConfig,
        bandit_params: BanditParams,
    ) -> Result<Session> {
        validate_inputs(&roster, &spec, &evolve_config, &bandit_params)
            .map_err(|e| Error::ValidationFailed(Box::new(e)))?;
        let event = Event::Created {
            session_id: id.into(),
            roster,
            spec,
            evolve_config,
            bandit_params,
        };
        let record = EventRecord {
            seq: 0,
            at: Utc::now(),
            event,
        };
        Session::from_created(record)
    }

    fn from_created(record: EventRecord) -> Result<Session> {
        let Event::Created {
            session_id,
            roster,
            spec,
            evolve_config,
            bandit_params,
        } = record.event.clone()
        else {
            return Err(Error::CorruptLog(
                "log must start with a `created` event".into(),
            ));
        };
        if record.seq != 0 {
            return Err(Error::CorruptLog("first event must have seq 0".into()));
        }
        Ok(Session {
            id: session_id,
            roster,
            spec,
            evolve_config,
            bandit_params,
            phase: Phase::Created,
            archive: None,
            bandit: None,
            outstanding: None,
            recommendation: None,
            log: vec![record],
        })
    }

    /// Rebuilds a session from its event log.
    pub fn replay(records: impl IntoIterator<Item = EventRecord>) -> Result<Session> {
        let mut records = records.into_iter();
        let first = records
            .next()
            .ok_or_else(|| Error::CorruptLog("empty event log".into()))?;
        let mut session = Session::from_created(first)?;
        for record in records {
            if record.seq != session.log.len() as u64 {
                return Err(Error::CorruptLog(format!(
                    "expected seq {}, found {}",
                    session.log.len(),
                    record.seq
                )));
            }
            session.apply(&record.event).map_err(|e| match e {
                Error::CorruptLog(_) => e,
                other => Error::CorruptLog(format!("event {}: {other}", record.seq)),
            })?;
            session.log.push(record);
        }
        Ok(session)
    }

    fn record(&mut self, event: Event) -> Result<()> {
        self.apply(&event)?;
        self.log.push(EventRecord {
            seq: self.log.len() as u64,
            at: Utc::now(),
            event,
        });
        Ok(())
    }

    /// State transition shared by live operations and replay.
    fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Created { .. } => {
                return Err(Error::CorruptLog("duplicate `created` event".into()));
            }
            Event::Evolved {
                archive,
                arm_entries,
            } => {
                self.expect_phase(&[Phase::Created])?;
                let archive = ParetoArchive::from_entries(archive.clone())?;
                let arms = arm_entries
                    .iter()
                    .enumerate()
                    .map(|(arm_index, &pos)| {
                        archive
                            .entries()
                            .get(pos)
                            .map(|e| Arm {
                                arm_index,
                                evaluated_team: e.clone(),
                            })
                            .ok_or_else(|| {
                                Error::CorruptLog(format!("arm entry {pos} out of range"))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.bandit = Some(BanditState::new(arms, self.bandit_params.clone())?);
                self.archive = Some(archive);
                self.phase = Phase::Evolved;
            }
            Event::RoundPresented { nonce, arms } => {
                self.expect_phase(&[Phase::Evolved, Phase::Eliciting])?;
                if self.outstanding.is_some() {
                    return Err(Error::CorruptLog("round presented twice".into()));
                }
                self.outstanding = Some(Round {
                    nonce: nonce.clone(),
                    arms: arms.clone(),
                });
                self.phase = Phase::Eliciting;
            }
            Event::ChoiceRecorded {
                nonce,
                presented,
                choice,
                rounds_used,
                stop,
            } => {
                self.expect_phase(&[Phase::Eliciting])?;
                match &self.outstanding {
                    Some(round) if &round.nonce == nonce && &round.arms == presented => {}
                    _ => return Err(Error::StaleNonce(nonce.clone())),
                }
                let bandit = self.bandit.as_mut().expect("bandit exists once evolved");
                let fired = bandit.record_choice(presented, *choice)?;
                if fired != *stop || bandit.rounds() != *rounds_used {
                    return Err(Error::CorruptLog(
                        "recorded outcome differs from recomputation".into(),
                    ));
                }
                self.outstanding = None;
                if fired.is_some() {
                    self.recommendation = Some(bandit.recommend()?.clone());
                    self.phase = Phase::Recommended;
                }
            }
        }
        Ok(())
    }

    fn expect_phase(&self, allowed: &[Phase]) -> Result<()> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(Error::WrongPhase { actual: self.phase })
        }
    }

    /// Runs stage one and freezes the arm set.
    pub fn run_evolution(&mut self) -> Result<EvolveSummary> {
        self.expect_phase(&[Phase::Created])?;
        let archive = evolve(&self.roster, &self.spec, &self.evolve_config)?;
        let arms = select_arms(archive.entries(), self.bandit_params.max_arms)?;
        let arm_entries = arms
            .iter()
            .map(|arm| {
                archive
                    .entries()
                    .iter()
                    .position(|e| e.team == arm.evaluated_team.team)
                    .expect("arms come from the archive")
            })
            .collect();
        info!(
            "session {}: archive of {} teams, {} arms",
            self.id,
            archive.len(),
            arms.len()
        );
        self.record(Event::Evolved {
            archive: archive.entries().to_vec(),
            arm_entries,
        })?;
        Ok(self.evolve_summary().expect("just evolved"))
    }

    fn evolve_summary(&self) -> Option<EvolveSummary> {
        Some(EvolveSummary {
            archive_size: self.archive.as_ref()?.len(),
            arm_count: self.bandit.as_ref()?.arm_count(),
        })
    }

    /// The outstanding slate, drawing a new one if none is pending. Repeated
    /// calls without a choice in between return the same slate and nonce.
    pub fn get_round(&mut self) -> Result<Presentation> {
        if self.phase == Phase::Recommended {
            return Err(Error::SessionTerminal);
        }
        self.expect_phase(&[Phase::Evolved, Phase::Eliciting])?;
        if self.outstanding.is_none() {
            let arms = self
                .bandit
                .as_ref()
                .expect("bandit exists once evolved")
                .next_presentation()?;
            let nonce = uuid::Uuid::new_v4().simple().to_string();
            self.record(Event::RoundPresented { nonce, arms })?;
        }
        Ok(self.presentation())
    }

    fn presentation(&self) -> Presentation {
        let round = self.outstanding.as_ref().expect("outstanding round");
        let bandit = self.bandit.as_ref().expect("bandit exists once evolved");
        let teams = round
            .arms
            .iter()
            .map(|&i| {
                let ev = &bandit.arms()[i].evaluated_team;
                PresentedTeam {
                    arm_index: i,
                    member_ids: ev.team.members().to_vec(),
                    member_names: ev
                        .team
                        .members()
                        .iter()
                        .map(|id| {
                            self.roster
                                .member(id)
                                .map(|m| m.display_name.clone())
                                .unwrap_or_default()
                        })
                        .collect(),
                    objectives: ev.objectives,
                }
            })
            .collect();
        Presentation {
            nonce: round.nonce.clone(),
            teams,
        }
    }

    /// Records the user's answer to the outstanding slate.
    pub fn submit_choice(&mut self, nonce: &str, choice: Choice) -> Result<SubmitOutcome> {
        self.expect_phase(&[Phase::Eliciting])?;
        let round = match &self.outstanding {
            Some(round) if round.nonce == nonce => round.clone(),
            _ => return Err(Error::StaleNonce(nonce.to_owned())),
        };
        if let Choice::Arm(arm) = choice {
            if !round.arms.contains(&arm) {
                return Err(Error::ChoiceNotPresented(arm));
            }
        }
        // dry run on a copy so the event carries the outcome
        let mut probe = self.bandit.clone().expect("bandit exists once evolved");
        let stop = probe.record_choice(&round.arms, choice)?;
        self.record(Event::ChoiceRecorded {
            nonce: round.nonce,
            presented: round.arms,
            choice,
            rounds_used: probe.rounds(),
            stop,
        })?;
        Ok(SubmitOutcome {
            phase: self.phase,
            rounds_used: self.rounds_used(),
        })
    }

    pub fn get_recommendation(&self) -> Result<Recommendation> {
        self.expect_phase(&[Phase::Recommended])?;
        let rec = self.recommendation.as_ref().expect("recommended");
        let bandit = self.bandit.as_ref().expect("bandit exists once evolved");
        Ok(Recommendation {
            team: rec.team.members().to_vec(),
            objectives: rec.objectives,
            rounds_used: bandit.rounds(),
            arms: bandit.stats(),
        })
    }

    pub fn archive(&self) -> Result<&ParetoArchive> {
        self.archive
            .as_ref()
            .ok_or(Error::WrongPhase { actual: self.phase })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn spec(&self) -> &ProjectSpec {
        &self.spec
    }

    pub fn bandit(&self) -> Option<&BanditState> {
        self.bandit.as_ref()
    }

    pub fn recommendation(&self) -> Option<&EvaluatedTeam> {
        self.recommendation.as_ref()
    }

    pub fn rounds_used(&self) -> u64 {
        self.bandit.as_ref().map_or(0, BanditState::rounds)
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.log
    }
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

/// Body of a session-creation request; roster and spec use the file schemas.
#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    pub roster: serde_json::Value,
    pub spec: serde_json::Value,
    #[serde(default)]
    pub evolve_config: Option<EvolveConfig>,
    #[serde(default)]
    pub bandit_params: Option<BanditParams>,
}

/// Concurrent collection of sessions with optional on-disk logs.
pub struct SessionStore {
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl SessionStore {
    /// A store that keeps logs only in memory.
    pub fn in_memory() -> Self {
        SessionStore {
            data_dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// A store persisting each session to `{dir}/{session_id}.ndjson`.
    pub fn with_data_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore {
            data_dir: Some(dir),
            sessions: RwLock::new(HashMap::new()),
        })
    }

    /// Data directory from `TEAMFORGE_DATA_DIR`, defaulting to `./data`.
    pub fn default_data_dir() -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.data_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.ndjson")))
    }

    fn persist(&self, id: &str, records: &[EventRecord]) -> Result<()> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = Vec::new();
        for record in records {
            serde_json::to_writer(&mut buf, record).expect("events always serialize");
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.flush()?;
        Ok(())
    }

    /// Reads and replays a log file.
    pub fn load_log(path: &Path) -> Result<Session> {
        let text = fs::read_to_string(path)?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str::<EventRecord>(l).map_err(|e| Error::CorruptLog(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Session::replay(records)
    }

    pub fn create(
        &self,
        roster: Roster,
        spec: ProjectSpec,
        evolve_config: EvolveConfig,
        bandit_params: BanditParams,
    ) -> Result<String> {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::create(id.clone(), roster, spec, evolve_config, bandit_params)?;
        self.persist(&id, session.events())?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// Parses and validates a creation request; every input error is
    /// reported as `ValidationFailed`.
    pub fn create_from_request(&self, req: CreateRequest) -> Result<String> {
        let wrap = |e: Error| Error::ValidationFailed(Box::new(e));
        let roster = io::roster_from_value(req.roster).map_err(wrap)?;
        let spec = io::spec_from_value(req.spec).map_err(wrap)?;
        self.create(
            roster,
            spec,
            req.evolve_config.unwrap_or_default(),
            req.bandit_params.unwrap_or_default(),
        )
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        if let Some(s) = self.sessions.read().expect("session map poisoned").get(id) {
            return Ok(Arc::clone(s));
        }
        if !valid_session_id(id) {
            return Err(Error::UnknownSession(id.to_owned()));
        }
        let path = match self.log_path(id) {
            Some(p) if p.exists() => p,
            _ => return Err(Error::UnknownSession(id.to_owned())),
        };
        let session = Self::load_log(&path)?;
        let mut map = self.sessions.write().expect("session map poisoned");
        let entry = map
            .entry(id.to_owned())
            .or_insert_with(|| Arc::new(Mutex::new(session)));
        Ok(Arc::clone(entry))
    }

    /// Runs `op` with exclusive access to one session and persists whatever
    /// events it appended.
    pub fn with_session<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Session) -> Result<T>,
    ) -> Result<T> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session poisoned");
        let before = session.events().len();
        let out = op(&mut session);
        let appended = &session.events()[before..];
        if !appended.is_empty() {
            if let Err(e) = self.persist(id, appended) {
                warn!(
                    "session {id}: failed to persist {} events: {e}",
                    appended.len()
                );
                return Err(e);
            }
        }
        out
    }

    /// A snapshot copy of a session.
    pub fn snapshot(&self, id: &str) -> Result<Session> {
        self.with_session(id, |s| Ok(s.clone()))
    }

    pub fn run_evolution(&self, id: &str) -> Result<EvolveSummary> {
        self.with_session(id, Session::run_evolution)
    }

    pub fn get_round(&self, id: &str) -> Result<Presentation> {
        self.with_session(id, Session::get_round)
    }

    pub fn submit_choice(&self, id: &str, nonce: &str, choice: Choice) -> Result<SubmitOutcome> {
        self.with_session(id, |s| s.submit_choice(nonce, choice))
    }

    pub fn get_recommendation(&self, id: &str) -> Result<Recommendation> {
        self.with_session(id, |s| s.get_recommendation())
    }

    pub fn archive(&self, id: &str) -> Result<ParetoArchive> {
        self.with_session(id, |s| s.archive().cloned())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

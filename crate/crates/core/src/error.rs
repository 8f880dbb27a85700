use thiserror::Error;

use crate::session::Phase;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variant names double as the stable `error_code` strings exposed over
/// HTTP and in CLI diagnostics; see [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // model
    #[error("duplicate member id `{0}`")]
    DuplicateMember(String),
    #[error("unknown member id `{0}`")]
    UnknownMember(String),
    #[error("expected {expected} members, got {got}")]
    WrongSize { expected: usize, got: usize },
    #[error("invalid team: {0}")]
    InvalidTeam(String),
    #[error("roster needs at least 2 members, got {0}")]
    RosterTooSmall(usize),
    #[error("empty member id")]
    EmptyMemberId,
    #[error("familiarity weight {weight} for ({a}, {b}) is outside [0, 1]")]
    WeightOutOfRange { a: String, b: String, weight: f64 },
    #[error("proficiency {value} for `{owner}` in `{discipline}` is outside [0, 1]")]
    ProficiencyOutOfRange {
        owner: String,
        discipline: String,
        value: f64,
    },
    #[error("team size must be at least 2, got {0}")]
    InvalidTeamSize(usize),
    #[error("discipline `{0}` is listed more than once")]
    DuplicateDiscipline(String),

    // evolution
    #[error("population is empty")]
    EmptyPopulation,
    #[error("front is empty")]
    EmptyFront,
    #[error("team size {team_size} exceeds roster size {roster_size}")]
    SpecTooLarge {
        team_size: usize,
        roster_size: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // elicitation
    #[error("archive is empty")]
    EmptyArchive,
    #[error("presentation is empty")]
    EmptyPresentation,
    #[error("arm {0} was not presented this round")]
    ChoiceNotPresented(usize),
    #[error("session has already produced a recommendation")]
    SessionTerminal,
    #[error("session has not produced a recommendation yet")]
    SessionNotTerminal,

    // session
    #[error("operation not allowed in phase {actual:?}")]
    WrongPhase { actual: Phase },
    #[error("nonce `{0}` does not match the outstanding round")]
    StaleNonce(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("validation failed: {0}")]
    ValidationFailed(Box<Error>),
    #[error("event log is inconsistent: {0}")]
    CorruptLog(String),

    // io
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the error.
    ///
    /// `ValidationFailed` reports the code of the error it wraps, so clients
    /// see e.g. `SpecTooLarge` rather than a generic wrapper.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DuplicateMember(_) => "DuplicateMember",
            Error::UnknownMember(_) => "UnknownMember",
            Error::WrongSize { .. } => "WrongSize",
            Error::InvalidTeam(_) => "InvalidTeam",
            Error::RosterTooSmall(_) => "RosterTooSmall",
            Error::EmptyMemberId => "EmptyMemberId",
            Error::WeightOutOfRange { .. } => "WeightOutOfRange",
            Error::ProficiencyOutOfRange { .. } => "ProficiencyOutOfRange",
            Error::InvalidTeamSize(_) => "InvalidTeamSize",
            Error::DuplicateDiscipline(_) => "DuplicateDiscipline",
            Error::EmptyPopulation => "EmptyPopulation",
            Error::EmptyFront => "EmptyFront",
            Error::SpecTooLarge { .. } => "SpecTooLarge",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyArchive => "EmptyArchive",
            Error::EmptyPresentation => "EmptyPresentation",
            Error::ChoiceNotPresented(_) => "ChoiceNotPresented",
            Error::SessionTerminal => "SessionTerminal",
            Error::SessionNotTerminal => "SessionNotTerminal",
            Error::WrongPhase { .. } => "WrongPhase",
            Error::StaleNonce(_) => "StaleNonce",
            Error::UnknownSession(_) => "UnknownSession",
            Error::ValidationFailed(inner) => inner.code(),
            Error::CorruptLog(_) => "CorruptLog",
            Error::MalformedDocument(_) => "MalformedDocument",
            Error::Io(_) => "Io",
        }
    }

    /// Name of the offending input field, when one can be pinned down.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::ValidationFailed(inner) => inner.field(),
            Error::DuplicateMember(_)
            | Error::EmptyMemberId
            | Error::RosterTooSmall(_)
            | Error::ProficiencyOutOfRange { .. } => Some("roster.members"),
            Error::UnknownMember(_) | Error::WeightOutOfRange { .. } => Some("roster.familiarity"),
            Error::InvalidTeamSize(_) | Error::SpecTooLarge { .. } => Some("spec.team_size"),
            Error::DuplicateDiscipline(_) => Some("spec.required"),
            Error::InvalidConfig(_) => Some("config"),
            _ => None,
        }
    }

    /// True for errors caused by bad input rather than by the engine.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::CorruptLog(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

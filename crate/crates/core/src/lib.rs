//! Team composition in two stages.
//!
//! Stage one evolves a Pareto archive of candidate teams from a member roster
//! with NSGA-II, scoring each team on expertise diversity, familiarity-based
//! cohesion and coverage of project requirements. Stage two presents slates
//! of archive teams to a decision-maker and uses lil'UCB best-arm
//! identification on their choices to settle on one recommendation.

pub mod bandit;
pub mod error;
pub mod exhaustive;
pub mod io;
pub mod model;
pub mod nsga2;
pub mod objectives;
pub mod rng;
pub mod session;
pub mod simulated_user;

pub use bandit::{
    select_arms, ucb_index, Arm, BanditParams, BanditState, Choice, Stop, StopReason,
};
pub use error::{Error, Result};
pub use model::{
    EvaluatedTeam, FamiliarityGraph, Member, MemberId, ObjectiveVector, ProjectSpec, Requirement,
    Roster, Team,
};
pub use nsga2::{evolve, EvolveConfig, ParetoArchive};
pub use objectives::{dominates, evaluate, ObjectiveContext};
pub use session::{Phase, Session, SessionStore};
pub use simulated_user::SimulatedUser;

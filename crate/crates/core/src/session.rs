//! Interactive sessions: a thin, thread-safe shell over [`Learner`].
//!
//! The session map is locked only to look up or insert a session; each
//! session has its own mutex, so generating one session's next query never
//! blocks requests on another.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::belief::{Answer, BeliefSamples, PreferenceRecord};
use crate::domains::{instantiate, EnvironmentInstance, FeatureVector};
use crate::error::Error;
use crate::experiments::{feature_grid, reward_correlation, DomainChoice};
use crate::learners::{Learner, LearnerConfig, Method, QueryRound};
use crate::rng;

pub const DEFAULT_ROUNDS: usize = 6;
const DEMO_GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub domain: DomainChoice,
    pub learner: LearnerConfig,
    /// Round limit; the session is done after this many answers.
    pub rounds: usize,
    /// Ground-truth weights enabling demo-mode correlation.
    pub ground_truth: Option<Vec<f64>>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            domain: DomainChoice::Named("gridnav".into()),
            learner: LearnerConfig::default(),
            rounds: DEFAULT_ROUNDS,
            ground_truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    BadRequest(String),
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::BadRequest(_) => "bad_request",
            SessionError::NotFound(_) => "not_found",
            SessionError::Conflict(_) => "conflict",
            SessionError::Internal(_) => "internal",
        }
    }
}

impl From<Error> for SessionError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => SessionError::BadRequest(m),
            other => SessionError::Internal(other.to_string()),
        }
    }
}

pub type SessionResult<T> = std::result::Result<T, SessionError>;

/// What the UI needs to render a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub round: usize,
    pub theta: Vec<f64>,
    pub environment: EnvironmentInstance,
    pub trajectory_a: Vec<usize>,
    pub trajectory_b: Vec<usize>,
    pub features_a: FeatureVector,
    pub features_b: FeatureVector,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub query: QueryView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub round: usize,
    pub posterior_mean: Vec<f64>,
    pub correlation: Option<f64>,
    pub next: Option<QueryView>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefView {
    pub round: usize,
    pub posterior_mean: Vec<f64>,
    pub belief: BeliefSamples,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    id: &'a str,
    config: &'a SessionConfig,
    method: Method,
    records: &'a [PreferenceRecord],
    rounds: &'a [QueryRound],
    pending_round: Option<usize>,
}

struct Session {
    id: String,
    config: SessionConfig,
    learner: Learner,
    grid: Option<Vec<FeatureVector>>,
}

impl Session {
    fn view(&self) -> SessionResult<QueryView> {
        let q = self.learner.pending().ok_or_else(|| SessionError::Conflict("no pending query".into()))?;
        let cfg = self.learner.config();
        let environment = instantiate(self.learner.spec(), &q.theta, cfg.env_seed)?;
        Ok(QueryView {
            round: self.learner.current_round(),
            theta: q.theta.clone(),
            environment,
            trajectory_a: q.trajectories[0].states.clone(),
            trajectory_b: q.trajectories[1].states.clone(),
            features_a: q.pair.features_a.clone(),
            features_b: q.pair.features_b.clone(),
            gain: q.gain,
        })
    }

    fn done(&self) -> bool {
        self.learner.rounds().len() >= self.config.rounds
    }
}

#[derive(Default)]
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    snapshot_dir: Option<PathBuf>,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also writes `<dir>/<id>.json` after every state change.
    pub fn with_snapshots(dir: PathBuf) -> Self {
        Self { sessions: RwLock::default(), snapshot_dir: Some(dir) }
    }

    fn get(&self, id: &str) -> SessionResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    fn snapshot(&self, s: &Session) -> SessionResult<()> {
        let Some(dir) = &self.snapshot_dir else { return Ok(()) };
        let snap = Snapshot {
            id: &s.id,
            config: &s.config,
            method: s.learner.config().method,
            records: s.learner.records(),
            rounds: s.learner.rounds(),
            pending_round: s.learner.pending().map(|_| s.learner.current_round()),
        };
        let write = || -> crate::Result<()> {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.json", s.id)), serde_json::to_vec_pretty(&snap)?)?;
            Ok(())
        };
        write().map_err(SessionError::from)
    }

    pub fn create_session(&self, config: SessionConfig) -> SessionResult<Created> {
        if config.rounds == 0 {
            return Err(SessionError::BadRequest("rounds must be at least 1".into()));
        }
        let spec = config.domain.resolve()?;
        let grid = match &config.ground_truth {
            Some(w) if w.len() != spec.feature_dim() => {
                return Err(SessionError::BadRequest("ground_truth dimension does not match the domain".into()))
            }
            Some(_) => Some(feature_grid(
                &spec,
                DEMO_GRID_POINTS,
                config.learner.env_seed,
                rng::derive(config.learner.seed, 0x96),
            )?),
            None => None,
        };
        let mut learner = Learner::new(config.learner.clone(), spec)?;
        learner.propose()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session { id: id.clone(), config, learner, grid };
        let query = session.view()?;
        self.snapshot(&session)?;
        self.sessions.write().expect("session map poisoned").insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(Created { id, query })
    }

    pub fn get_query(&self, id: &str) -> SessionResult<QueryView> {
        let s = self.get(id)?;
        let s = s.lock().expect("session poisoned");
        s.view()
    }

    /// Applies `choice` to the pending query of `round`. A round that does not
    /// match the pending one (a stale or repeated submit) is a conflict.
    pub fn post_answer(&self, id: &str, choice: Answer, round: usize) -> SessionResult<AnswerOutcome> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session poisoned");
        if s.learner.pending().is_none() {
            return Err(SessionError::Conflict("session has no pending query".into()));
        }
        let pending = s.learner.current_round();
        if round != pending {
            return Err(SessionError::Conflict(format!("round {round} is not the pending round {pending}")));
        }
        let posterior_mean = s.learner.answer(choice)?.posterior_mean.clone();
        let correlation = match (&s.config.ground_truth, &s.grid) {
            (Some(w), Some(grid)) => reward_correlation(w, &posterior_mean, grid).ok(),
            _ => None,
        };
        let done = s.done();
        let next = if done {
            None
        } else {
            s.learner.propose()?;
            Some(s.view()?)
        };
        self.snapshot(&s)?;
        Ok(AnswerOutcome { round, posterior_mean, correlation, next, done })
    }

    pub fn get_history(&self, id: &str) -> SessionResult<Vec<QueryRound>> {
        let s = self.get(id)?;
        let s = s.lock().expect("session poisoned");
        Ok(s.learner.rounds().to_vec())
    }

    pub fn get_belief(&self, id: &str) -> SessionResult<BeliefView> {
        let s = self.get(id)?;
        let s = s.lock().expect("session poisoned");
        Ok(BeliefView {
            round: s.learner.rounds().len(),
            posterior_mean: s.learner.posterior_mean()?,
            belief: s.learner.belief().clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

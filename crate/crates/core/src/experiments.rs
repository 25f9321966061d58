//! Simulated users, the reward-correlation metric and the batch runner.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{Answer, WeightVector};
use crate::domains::{instantiate, Bounds, DomainSpec, FeatureVector};
use crate::envdesign::random_thetas;
use crate::error::{invalid, Error, Result};
use crate::learners::{Learner, LearnerConfig, Method, QueryRound};
use crate::query::CandidatePair;
use crate::{dot, norm, rng};

const KMEANS_ITERATIONS: usize = 50;
const KMEANS_RETRIES: usize = 5;
const GRID_THETAS: usize = 20;
const GRID_ROLLOUTS: usize = 200;

/// User-study ground truth for the tabletop domain, before normalization.
pub const TABLETOP_GROUND_TRUTH: [f64; 4] = [-0.1, -0.1, -2.0, -1.0];
/// User-study ground truth for the navigation domain, before normalization.
pub const NAVIGATION_GROUND_TRUTH: [f64; 5] = [-1.0, -0.1, -2.0, -5.0, -0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedUser {
    pub true_weights: WeightVector,
    pub rationality: f64,
}

impl SimulatedUser {
    /// Normalizes `weights` to unit length.
    pub fn new(weights: &[f64], rationality: f64) -> Result<Self> {
        let n = norm(weights);
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid("ground-truth weights need a nonzero finite norm"));
        }
        if rationality.is_nan() || rationality <= 0.0 {
            return Err(invalid("rationality must be positive"));
        }
        let w = WeightVector::new(weights.iter().map(|v| v / n).collect())?;
        Ok(Self { true_weights: w, rationality })
    }

    pub fn tabletop_study() -> Self {
        Self::new(&TABLETOP_GROUND_TRUTH, 1.0).expect("fixture is nonzero")
    }

    pub fn navigation_study() -> Self {
        Self::new(&NAVIGATION_GROUND_TRUTH, 1.0).expect("fixture is nonzero")
    }
}

fn random_unit(d: usize, rng: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's algorithm from the given centers. `None` if a cluster empties.
fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, iterations: usize) -> Option<Vec<Vec<f64>>> {
    let d = points[0].len();
    for _ in 0..iterations {
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for p in points {
            let mut best = 0;
            for (c, center) in centers.iter().enumerate() {
                if sq_dist(p, center) < sq_dist(p, &centers[best]) {
                    best = c;
                }
            }
            counts[best] += 1;
            sums[best].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        if counts.contains(&0) {
            return None;
        }
        let next: Vec<Vec<f64>> =
            sums.into_iter().zip(&counts).map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect()).collect();
        if next == centers {
            break;
        }
        centers = next;
    }
    Some(centers)
}

/// First `k` pairwise-distinct points, scanning from `offset` and wrapping.
fn distinct_seeds(points: &[Vec<f64>], k: usize, offset: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..points.len() {
        let p = &points[(offset + i) % points.len()];
        if !out.contains(p) {
            out.push(p.clone());
            if out.len() == k {
                return Ok(out);
            }
        }
    }
    Err(invalid(format!("fewer than {k} distinct points")))
}

/// K-means centers. Initialized with the first `k` distinct points; when a
/// cluster empties, restarts from a shifted scan of the pool.
pub fn kmeans(points: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > points.len() {
        return Err(invalid(format!("cannot form {k} clusters from {} points", points.len())));
    }
    for attempt in 0..=KMEANS_RETRIES {
        let offset = attempt * points.len() / (KMEANS_RETRIES + 1);
        let init = distinct_seeds(points, k, offset)?;
        if let Some(centers) = lloyd(points, init, KMEANS_ITERATIONS) {
            return Ok(centers);
        }
    }
    Err(invalid("k-means kept producing empty clusters"))
}

/// Users at the normalized K-means centers of `pool` uniform unit vectors.
pub fn make_simulated_users(n: usize, pool: usize, d: usize, seed: u64) -> Result<Vec<SimulatedUser>> {
    if n > pool {
        return Err(invalid("more users than pool points"));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut rng = rng::seeded(seed);
    let points: Vec<Vec<f64>> = (0..pool).map(|_| random_unit(d, &mut rng)).collect();
    users_from_points(&points, n)
}

/// Users at the normalized K-means centers of explicit points.
pub fn users_from_points(points: &[Vec<f64>], n: usize) -> Result<Vec<SimulatedUser>> {
    kmeans(points, n)?.iter().map(|c| SimulatedUser::new(c, 1.0)).collect()
}

/// Samples an answer from the user's Boltzmann choice model.
pub fn simulate_choice(user: &SimulatedUser, pair: &CandidatePair, seed: u64) -> Result<Answer> {
    let d = user.true_weights.dim();
    if pair.features_a.len() != d || pair.features_b.len() != d {
        return Err(invalid("pair and user dimensions differ"));
    }
    let gap =
        user.rationality * (dot(&user.true_weights, &pair.features_a) - dot(&user.true_weights, &pair.features_b));
    let p_a = 1.0 / (1.0 + (-gap).exp());
    let u: f64 = rng::seeded(seed).random();
    Ok(if u < p_a { Answer::A } else { Answer::B })
}

/// Pearson correlation of the two reward series over `points`.
pub fn reward_correlation(w_gt: &[f64], w_est: &[f64], points: &[FeatureVector]) -> Result<f64> {
    if points.len() < 2 {
        return Err(invalid("correlation needs at least two points"));
    }
    if points.iter().any(|p| p.len() != w_gt.len() || p.len() != w_est.len()) {
        return Err(invalid("weight and feature dimensions differ"));
    }
    let x: Vec<f64> = points.iter().map(|p| dot(w_gt, p)).collect();
    let y: Vec<f64> = points.iter().map(|p| dot(w_est, p)).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    // Rewards constant up to rounding count as constant.
    let tiny = |s: f64, m: f64| s <= (1e-12 * m.abs().max(1.0)).powi(2) * n;
    if tiny(sxx, mx) || tiny(syy, my) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-dimension min/max over a set of feature vectors.
pub fn feature_box(features: &[FeatureVector]) -> Result<Bounds> {
    let first = features.first().ok_or_else(|| invalid("no features to bound"))?;
    let mut lower = first.to_vec();
    let mut upper = first.to_vec();
    for f in features {
        for (i, v) in f.iter().enumerate() {
            lower[i] = lower[i].min(*v);
            upper[i] = upper[i].max(*v);
        }
    }
    Bounds::new(lower, upper)
}

/// `n` points uniform in `bounds`.
pub fn sample_box(bounds: &Bounds, n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = rng::seeded(seed);
    (0..n).map(|_| FeatureVector::new_unchecked(bounds.sample(&mut rng))).collect()
}

/// Evaluation points for the correlation metric: uniform in the box spanned
/// by random rollouts across random environments.
pub fn feature_grid(spec: &DomainSpec, n_points: usize, env_seed: u64, seed: u64) -> Result<Vec<FeatureVector>> {
    let thetas = random_thetas(&spec.theta_bounds(), GRID_THETAS, rng::derive(seed, 1));
    let mut rng = rng::seeded(rng::derive(seed, 2));
    let mut feats = Vec::with_capacity(GRID_ROLLOUTS);
    for r in 0..GRID_ROLLOUTS {
        let env = instantiate(spec, &thetas[r % GRID_THETAS], env_seed)?;
        let model = env.model();
        let t = model.random_rollout(spec.horizon, &mut rng);
        feats.push(model.features(&t, spec.discount)?);
    }
    Ok(sample_box(&feature_box(&feats)?, n_points, rng::derive(seed, 3)))
}

/// Domain given by name (`"gridnav"`) or as a full spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainChoice {
    Named(String),
    Spec(DomainSpec),
}

impl DomainChoice {
    pub fn resolve(&self) -> Result<DomainSpec> {
        match self {
            DomainChoice::Named(n) => DomainSpec::by_name(n),
            DomainChoice::Spec(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainChoice,
    pub methods: Vec<Method>,
    /// Number of K-means users; ignored when `ground_truth` is set.
    pub users: usize,
    pub user_pool: usize,
    /// Explicit user weights, normalized on load.
    pub ground_truth: Option<Vec<Vec<f64>>>,
    pub rationality: f64,
    pub rounds: usize,
    /// Seeds per (method, user) cell.
    pub seeds: usize,
    pub grid_points: usize,
    /// Template for every episode; `method` and `seed` are overridden.
    pub learner: LearnerConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainChoice::Named("gridnav".into()),
            methods: vec![Method::Cred, Method::Cr, Method::Mbp, Method::Rr, Method::CrDr],
            users: 10,
            user_pool: 1000,
            ground_truth: None,
            rationality: 1.0,
            rounds: 20,
            seeds: 3,
            grid_points: 10_000,
            learner: LearnerConfig::default(),
            seed: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("methods must be nonempty"));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds must be at least 1"));
        }
        if self.ground_truth.is_none() && (self.users == 0 || self.users > self.user_pool) {
            return Err(invalid("need 1 <= users <= user_pool"));
        }
        if self.grid_points < 2 {
            return Err(invalid("grid_points must be at least 2"));
        }
        self.domain.resolve()?.validate()?;
        self.learner.validate()
    }

    pub fn simulated_users(&self, d: usize) -> Result<Vec<SimulatedUser>> {
        match &self.ground_truth {
            Some(ws) => ws.iter().map(|w| SimulatedUser::new(w, self.rationality)).collect(),
            None => Ok(make_simulated_users(self.users, self.user_pool, d, rng::derive(self.seed, 0x05e5))?
                .into_iter()
                .map(|u| SimulatedUser { rationality: self.rationality, ..u })
                .collect()),
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub user: usize,
    pub seed: usize,
    pub round: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub round: usize,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeError {
    pub method: Method,
    pub user: usize,
    pub seed: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Rounds `1..=R`, method-major.
    pub rounds: Vec<SummaryRow>,
    /// Round-0 correlation of the prior mean, one row per method.
    pub prior: Vec<SummaryRow>,
    pub errors: Vec<EpisodeError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub method: Method,
    pub user: usize,
    pub seed: usize,
    pub true_weights: Vec<f64>,
    pub rounds: Vec<QueryRound>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
    pub traces: Vec<EpisodeTrace>,
}

impl ExperimentResults {
    /// Mean correlation of `method` at `round`.
    pub fn mean(&self, method: Method, round: usize) -> Option<f64> {
        let rows = if round == 0 { &self.summary.prior } else { &self.summary.rounds };
        rows.iter().find(|r| r.method == method && r.round == round).map(|r| r.mean)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("method,user,seed,round,correlation\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.method, r.user, r.seed, r.round, r.correlation).expect("string write");
        }
        out
    }

    /// Writes `results.csv`, `summary.json` and `traces/*.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("traces"))?;
        fs::write(dir.join("results.csv"), self.csv())?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        for t in &self.traces {
            let mut lines = String::new();
            for r in &t.rounds {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            let name = format!("{}_u{}_s{}.jsonl", t.method, t.user, t.seed);
            fs::write(dir.join("traces").join(name), lines)?;
        }
        Ok(())
    }
}

struct Episode {
    rows: Vec<ResultRow>,
    trace: EpisodeTrace,
    error: Option<String>,
}

/// Seed of the (user, seed) cell, shared by every method so methods face the
/// same answer noise and belief chains where their queries coincide.
fn episode_seed(base: u64, user: usize, seed: usize) -> u64 {
    rng::derive(base, 0xE000_0000 + ((user as u64) << 16) + seed as u64)
}

fn run_episode(
    config: &ExperimentConfig,
    spec: &DomainSpec,
    grid: &[FeatureVector],
    method: Method,
    (user_index, user): (usize, &SimulatedUser),
    seed_index: usize,
) -> Episode {
    let ep_seed = episode_seed(config.seed, user_index, seed_index);
    let learner_cfg = LearnerConfig { method, seed: ep_seed, ..config.learner.clone() };
    let mut ep = Episode {
        rows: Vec::with_capacity(config.rounds + 1),
        trace: EpisodeTrace {
            method,
            user: user_index,
            seed: seed_index,
            true_weights: user.true_weights.to_vec(),
            rounds: Vec::new(),
        },
        error: None,
    };
    let row = |round, correlation| ResultRow { method, user: user_index, seed: seed_index, round, correlation };
    let result = (|| -> Result<()> {
        let mut learner = Learner::new(learner_cfg, spec.clone())?;
        let r0 = reward_correlation(&user.true_weights, &learner.posterior_mean()?, grid)?;
        ep.rows.push(row(0, r0));
        for round in 1..=config.rounds {
            let pair = learner.propose()?.pair.clone();
            let answer = simulate_choice(user, &pair, rng::derive(ep_seed, 0xC000 + round as u64))?;
            let done = learner.answer(answer)?.clone();
            let r = reward_correlation(&user.true_weights, &done.posterior_mean, grid)?;
            ep.rows.push(row(round, r));
            ep.trace.rounds.push(done);
        }
        Ok(())
    })();
    if let Err(e) = result {
        ep.error = Some(e.to_string());
    }
    ep
}

fn summarize(rows: &[ResultRow], method: Method, round: usize) -> SummaryRow {
    let xs: Vec<f64> = rows.iter().filter(|r| r.method == method && r.round == round).map(|r| r.correlation).collect();
    let n = xs.len();
    let mean = if n == 0 { f64::NAN } else { xs.iter().sum::<f64>() / n as f64 };
    let ci95 = if n < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    };
    SummaryRow { method, round, mean, ci95, n }
}

/// Runs every (method, user, seed) episode. Episodes run in parallel; results
/// are collected in a fixed order so output is independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let spec = config.domain.resolve()?;
    let users = config.simulated_users(spec.feature_dim())?;
    let grid = feature_grid(&spec, config.grid_points, config.learner.env_seed, rng::derive(config.seed, 0x96))?;

    let mut jobs = Vec::new();
    for &method in &config.methods {
        for (u, user) in users.iter().enumerate() {
            for s in 0..config.seeds {
                jobs.push((method, u, user, s));
            }
        }
    }
    let episodes: Vec<Episode> =
        jobs.par_iter().map(|&(method, u, user, s)| run_episode(config, &spec, &grid, method, (u, user), s)).collect();

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    for ep in episodes {
        rows.extend(ep.rows);
        if let Some(message) = ep.error {
            errors.push(EpisodeError { method: ep.trace.method, user: ep.trace.user, seed: ep.trace.seed, message });
        }
        traces.push(ep.trace);
    }
    let summary = Summary {
        rounds: config
            .methods
            .iter()
            .flat_map(|&m| (1..=config.rounds).map(move |r| (m, r)))
            .map(|(m, r)| summarize(&rows, m, r))
            .collect(),
        prior: config.methods.iter().map(|&m| summarize(&rows, m, 0)).collect(),
        errors,
    };
    Ok(ExperimentResults { rows, summary, traces })
}

//! Checks against independent reference computations.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prefdesign::belief::{posterior_mean, sample_posterior, Answer};
use prefdesign::counterfactual::{counterfactual_query, CounterfactualConfig};
use prefdesign::domains::Bounds;
use prefdesign::domains::{instantiate, plan, DomainSpec, NavEdge, NavGraph, Terrain};
use prefdesign::envdesign::{propose_next, run_environment_design, DesignBudget, GpModel};
use prefdesign::experiments::{sample_box, simulate_choice, users_from_points, SimulatedUser};
use prefdesign::learners::{next_query, Learner, LearnerConfig, Method};
use prefdesign::{BeliefSamples, CandidatePair, FeatureVector, PreferenceRecord, SamplerConfig, WeightVector};

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform draws from the unit ball by rejection from the cube.
fn ball_points(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if norm(&v) <= 1.0 {
            out.push(v);
        }
    }
    out
}

#[test]
fn prior_sampler_matches_uniform_ball() {
    let start = Instant::now();
    let cfg = SamplerConfig { samples: 100_000, total_steps: 500_000, burn_in: None };
    let b = sample_posterior(&[], 2, &cfg, 11).unwrap();
    assert_eq!(b.len(), 100_000);
    let mean = [0, 1].map(|i| b.samples.iter().map(|w| w[i]).sum::<f64>() / b.len() as f64);
    let inner = b.samples.iter().filter(|w| w.norm() <= 0.5).count() as f64 / b.len() as f64;
    // Area ratio of radius 0.5 to radius 1.
    assert!(norm(&mean) < 0.05, "mean {mean:?}");
    assert!((inner - 0.25).abs() <= 0.02, "inner mass {inner}");
    assert!(b.acceptance_rate > 0.0 && b.acceptance_rate < 1.0);
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn posterior_mean_matches_importance_weighted_oracle() {
    // Likelihood-weighted uniform ball points give the posterior mean directly.
    let records = vec![
        PreferenceRecord::new(fv(&[2.0, 0.0, 0.5]), fv(&[0.0, 1.0, 0.5]), Answer::A).unwrap(),
        PreferenceRecord::new(fv(&[0.0, 3.0, 0.0]), fv(&[1.0, 0.0, 1.0]), Answer::B).unwrap(),
        PreferenceRecord::new(fv(&[1.0, 1.0, 2.0]), fv(&[1.0, 1.0, 0.0]), Answer::A).unwrap(),
    ];
    let lik = |w: &[f64]| {
        records
            .iter()
            .map(|r| {
                let gap: f64 = r.features_a.iter().zip(r.features_b.iter()).zip(w).map(|((a, b), x)| (a - b) * x).sum();
                let s = if r.choice == Answer::A { gap } else { -gap };
                1.0 / (1.0 + (-s).exp())
            })
            .product::<f64>()
    };
    let pts = ball_points(3, 400_000, &mut ChaCha8Rng::seed_from_u64(2));
    let weights: Vec<f64> = pts.iter().map(|p| lik(p)).collect();
    let z: f64 = weights.iter().sum();
    let oracle: Vec<f64> = (0..3).map(|i| pts.iter().zip(&weights).map(|(p, w)| p[i] * w).sum::<f64>() / z).collect();

    let cfg = SamplerConfig { samples: 20_000, total_steps: 200_000, burn_in: None };
    let b = sample_posterior(&records, 3, &cfg, 5).unwrap();
    let m: Vec<f64> = (0..3).map(|i| b.samples.iter().map(|w| w[i]).sum::<f64>() / b.len() as f64).collect();
    for i in 0..3 {
        assert!((m[i] - oracle[i]).abs() < 0.03, "component {i}: {} vs {}", m[i], oracle[i]);
    }
    let pm = posterior_mean(&b).unwrap();
    assert!(pm.norm() <= 1.0);
}

fn terrain_slot(t: Terrain) -> Option<usize> {
    match t {
        Terrain::Paved => Some(1),
        Terrain::Grass => Some(2),
        Terrain::Asphalt => Some(3),
        Terrain::Concrete => Some(4),
        Terrain::Brick => None,
    }
}

fn edge_reward(e: &NavEdge, w: &[f64]) -> f64 {
    w[0] * e.length + terrain_slot(e.terrain).map_or(0.0, |s| w[s] * e.length)
}

/// Best reward over simple start-goal paths with at most `h` edges.
fn brute_force(g: &NavGraph, w: &[f64], h: usize) -> Option<f64> {
    fn go(g: &NavGraph, w: &[f64], at: usize, left: usize, seen: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if at == g.goal {
            if best.is_none_or(|b| acc > b) {
                *best = Some(acc);
            }
            return;
        }
        if left == 0 {
            return;
        }
        for e in &g.edges {
            let next = if e.a == at {
                e.b
            } else if e.b == at {
                e.a
            } else {
                continue;
            };
            if seen[next] {
                continue;
            }
            seen[next] = true;
            go(g, w, next, left - 1, seen, acc + edge_reward(e, w), best);
            seen[next] = false;
        }
    }
    let mut seen = vec![false; g.nodes.len()];
    seen[g.start] = true;
    let mut best = None;
    go(g, w, g.start, h, &mut seen, 0.0, &mut best);
    best
}

fn random_graph(seed: u64) -> NavGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=10);
    let nodes: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0]).collect();
    let mut edges = Vec::new();
    // A spanning path keeps the goal reachable; extra random chords add choice.
    for i in 1..n {
        let a = rng.random_range(0..i);
        edges.push((a, i));
    }
    for _ in 0..rng.random_range(0..2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }
    let edges = edges
        .into_iter()
        .map(|(a, b)| NavEdge {
            a,
            b,
            length: 0.2 + rng.random::<f64>() * 2.0,
            terrain: Terrain::ALL[rng.random_range(0..Terrain::ALL.len())],
        })
        .collect();
    NavGraph { nodes, edges, designable: vec![], palette: vec![Terrain::Paved], start: 0, goal: n - 1 }
}

#[test]
fn planner_matches_simple_path_brute_force() {
    let mut checked = 0;
    for seed in 0..150 {
        let g = random_graph(seed);
        let h = g.nodes.len() - 1;
        let spec = DomainSpec::nav_graph(g.clone(), h);
        let env = instantiate(&spec, &[], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..5 {
            // Non-positive weights make every edge cost something, so no walk
            // beats its cycle-free shortcut.
            let mut w: Vec<f64> = (0..5).map(|_| -rng.random::<f64>()).collect();
            let n = norm(&w);
            w.iter_mut().for_each(|x| *x /= n);
            let t = plan(&env, &w, &spec).unwrap();
            let got = env.model().reward(&t, &w, 1.0).unwrap();
            let want = brute_force(&g, &w, h).unwrap();
            assert_eq!(got, want, "seed {seed}");
            checked += 1;
        }
    }
    assert_eq!(checked, 750);
}

#[test]
fn propose_next_matches_grid_argmax() {
    let bounds = Bounds::unit(1);
    let spacing = 1e-4;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..8);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ls = [0.05, 0.1, 0.2][seed as usize % 3];
        let kappa = [0.0, 1.0, 2.576][seed as usize % 3];
        let model = GpModel::new(vec![ls], 1.0, 1e-4).unwrap().with_data(xs, ys).unwrap();
        let gp = model.condition().unwrap();
        let (mut gx, mut gv) = (0.0, f64::NEG_INFINITY);
        for i in 0..=10_000 {
            let x = i as f64 * spacing;
            let v = gp.ucb(&[x], kappa).unwrap();
            if v > gv {
                (gx, gv) = (x, v);
            }
        }
        let x = propose_next(&model, &bounds, kappa, seed).unwrap()[0];
        let v = gp.ucb(&[x], kappa).unwrap();
        assert!((x - gx).abs() <= spacing || v >= gv, "seed {seed}: {x} ({v}) vs grid {gx} ({gv})");
    }
}

/// Two equal-length routes from 0 to 3. The upper one is paved; the lower one
/// ends in a designable edge whose terrain is paved for θ₀ < 0.5 and grass
/// above. A designable spur off node 1 leads nowhere useful.
pub fn half_box_spec() -> DomainSpec {
    let e = |a, b, terrain| NavEdge { a, b, length: 1.0, terrain };
    let g = NavGraph {
        nodes: vec![[0.0, 0.0], [1.0, 1.0], [1.0, -1.0], [2.0, 0.0], [1.0, 2.0]],
        edges: vec![
            e(0, 1, Terrain::Paved),
            e(1, 3, Terrain::Paved),
            e(0, 2, Terrain::Paved),
            e(2, 3, Terrain::Paved),
            e(1, 4, Terrain::Paved),
        ],
        designable: vec![3, 4],
        palette: vec![Terrain::Paved, Terrain::Grass],
        start: 0,
        goal: 3,
    };
    DomainSpec::nav_graph(g, 2)
}

#[test]
fn design_lands_in_high_gain_half() {
    let spec = half_box_spec();
    let prior = sample_posterior(&[], 5, &SamplerConfig { samples: 300, total_steps: 3000, burn_in: None }, 1).unwrap();
    let budget = DesignBudget { total_evals: 12, ..Default::default() };
    let cf = CounterfactualConfig { samples: 30, keep: 6 };
    let hits = (0..10)
        .filter(|&seed| {
            let out = run_environment_design(&prior, &spec, &budget, &cf, 0, seed).unwrap();
            assert_eq!(out.trace.len(), 12);
            out.theta[0] >= 0.5
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn design_finds_contrast_absent_from_default_environment() {
    // Palette [grass, paved, grass]: the box midpoint bins to paved and makes
    // both routes identical, so only a designed environment can contrast them.
    let mut spec = half_box_spec();
    if let prefdesign::domains::DomainKind::Gridnav(prefdesign::domains::NavLayout::Graph(g)) = &mut spec.kind {
        g.palette = vec![Terrain::Grass, Terrain::Paved, Terrain::Grass];
        g.designable = vec![3];
    }
    let belief_cfg = SamplerConfig { samples: 300, total_steps: 3000, burn_in: None };
    let base = LearnerConfig {
        belief: belief_cfg,
        counterfactual: CounterfactualConfig { samples: 30, keep: 6 },
        design: DesignBudget { total_evals: 8, init_random: 3, ..Default::default() },
        seed: 4,
        ..Default::default()
    };
    let learner = Learner::new(base.clone(), spec.clone()).unwrap();
    let cr = next_query(&LearnerConfig { method: Method::Cr, ..base.clone() }, learner.belief(), &spec, 1).unwrap();
    let cred = next_query(&LearnerConfig { method: Method::Cred, ..base }, learner.belief(), &spec, 1).unwrap();
    assert!(cr.fallback);
    assert!(!cred.fallback);
    assert!(cred.gain > 0.0);
    assert!(cred.theta[0] < 1.0 / 3.0 || cred.theta[0] >= 2.0 / 3.0);
    let env = instantiate(&spec, &spec.default_theta(), 0).unwrap();
    let r = counterfactual_query(learner.belief(), &env, &spec, &CounterfactualConfig { samples: 30, keep: 6 }, 0);
    assert!(matches!(r, Err(prefdesign::Error::DegenerateQuery)));
}

#[test]
fn best_pair_gain_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<WeightVector> =
        ball_points(3, 25, &mut rng).into_iter().map(|w| WeightVector::new(w).unwrap()).collect();
    let belief = BeliefSamples::from_samples(samples.clone()).unwrap();
    let cands: Vec<FeatureVector> =
        (0..6).map(|_| fv(&[rng.random::<f64>() * 4.0, rng.random(), rng.random()])).collect();
    // Mutual information as H(I) - E[H(I|w)], in bits.
    let direct = |a: &FeatureVector, b: &FeatureVector| {
        let ps: Vec<f64> = samples
            .iter()
            .map(|w| {
                let gap: f64 = a.iter().zip(b.iter()).zip(w.iter()).map(|((x, y), v)| (x - y) * v).sum();
                1.0 / (1.0 + (-gap).exp())
            })
            .collect();
        let h = |p: f64| if p <= 0.0 || p >= 1.0 { 0.0 } else { -p * p.log2() - (1.0 - p) * (1.0 - p).log2() };
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        h(mean) - ps.iter().map(|&p| h(p)).sum::<f64>() / ps.len() as f64
    };
    let mut best = ((0, 1), f64::NEG_INFINITY);
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            let g = direct(&cands[i], &cands[j]);
            let ours =
                prefdesign::query::info_gain(&CandidatePair::new(cands[i].clone(), cands[j].clone()).unwrap(), &belief)
                    .unwrap();
            assert!((g - ours).abs() < 1e-9);
            if g > best.1 + 1e-12 {
                best = ((i, j), g);
            }
        }
    }
    let (pair, g) = prefdesign::query::best_pair(&cands, &belief).unwrap();
    assert_eq!(pair, best.0);
    assert!((g - best.1).abs() < 1e-9);
}

#[test]
fn kmeans_recovers_antipodal_caps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let axis = {
        let v = [0.3, -0.5, 0.8, 0.1];
        let n = norm(&v);
        v.map(|x| x / n)
    };
    let mut points = Vec::new();
    let mut caps: [Vec<Vec<f64>>; 2] = [vec![], vec![]];
    for _ in 0..1000 {
        let side = rng.random_range(0..2);
        let sign = if side == 0 { 1.0 } else { -1.0 };
        let p: Vec<f64> = axis.iter().map(|a| sign * a + 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let n = norm(&p);
        let p: Vec<f64> = p.into_iter().map(|x| x / n).collect();
        caps[side].push(p.clone());
        points.push(p);
    }
    let cap_mean = |c: &Vec<Vec<f64>>| {
        let m: Vec<f64> = (0..4).map(|i| c.iter().map(|p| p[i]).sum::<f64>()).collect();
        let n = norm(&m);
        m.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let oracle = [cap_mean(&caps[0]), cap_mean(&caps[1])];
    let users = users_from_points(&points, 2).unwrap();
    let angle =
        |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0).acos().to_degrees();
    for u in &users {
        assert!((u.true_weights.norm() - 1.0).abs() < 1e-9);
        let to_oracle = oracle.iter().map(|o| angle(&u.true_weights, o)).fold(f64::INFINITY, f64::min);
        let to_axis = angle(&u.true_weights, &axis).min(angle(&u.true_weights, &axis.map(|x| -x)));
        assert!(to_oracle < 15.0 && to_axis < 15.0, "{to_oracle} {to_axis}");
    }
    assert!(angle(&users[0].true_weights, &users[1].true_weights) > 150.0);
}

#[test]
fn simulated_choice_frequencies() {
    let user = SimulatedUser::new(&[1.0, 0.0], 1.0).unwrap();
    let freq = |pair: &CandidatePair| {
        (0..1000u64).filter(|&s| simulate_choice(&user, pair, s).unwrap() == Answer::A).count() as f64 / 1000.0
    };
    let equal = CandidatePair::new(fv(&[1.0, 2.0]), fv(&[1.0, 2.0])).unwrap();
    assert!((freq(&equal) - 0.5).abs() <= 0.03);
    let gap = CandidatePair::new(fv(&[3f64.ln(), 0.0]), fv(&[0.0, 0.0])).unwrap();
    assert!((freq(&gap) - 0.75).abs() <= 0.03);
}

#[test]
fn feature_box_sampling_reaches_its_edges() {
    let l = 7.5;
    let pts = sample_box(&Bounds::new(vec![0.0], vec![l]).unwrap(), 10_000, 4);
    let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    assert!(lo >= 0.0 && lo <= 0.01 * l);
    assert!(hi <= l && hi >= 0.99 * l);
}

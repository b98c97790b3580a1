//! Acceptance criteria, one line each.
//!
//! Criteria 1 to 7 run under `cargo test`. Criteria 8 to 10 are
//! hours-scale training comparisons; they are `#[ignore]`d and run with
//! `cargo test --release -p rbc-core --test acceptance -- --ignored`.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbc_core::camera::{Action, Intrinsics, Pose, EYE_HEIGHT};
use rbc_core::curiosity::{prediction_error, reward_from_error, RewardConfig, SplatCuriosity};
use rbc_core::evalbench::{
    brute_force_nearest, coverage_brute_force, coverage_from_points, run_eval_suite, PolicyExplorer, SpatialHash,
    DEFAULT_EVAL_SEEDS, DEFAULT_HORIZONS, DEFAULT_THRESHOLD,
};
use rbc_core::camera::Vec3;
use rbc_core::image::Image;
use rbc_core::policy::{sample_action, ChunkInput, ContextMode, EpisodeMemory, Policy, PolicyConfig, PolicyOutput};
use rbc_core::run::{run_finetune, run_training, RunConfig, Start};
use rbc_core::splatmem::{SplatCloud, SplatConfig, SplatView};
use rbc_core::trainer::{collect_rollout, compute_gae, minibatch_loss, minibatches, CollectOptions, PpoConfig, Worker, WorkerConfig};
use rbc_core::worldsim::{farthest_path, Env, EnvConfig, OutAndBack, Scene, SceneParams, TaskMode, TaskState};
use rbc_grad::suite::{check_primitive, PRIMITIVES};
use rbc_grad::{check_gradients, GradCheckConfig, Gradients, Graph, GraphLoss, Objective, ParamStore, Scalar, Tensor, Var};

type Outcome = Result<String, String>;

/// Print a criterion line outside the test harness's capture, then fail
/// the test if the criterion failed.
fn report(id: u32, name: &str, started: Instant, outcome: Outcome) {
    let secs = started.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("acceptance {id:>2} {tag} {name}: {detail} [{secs:.1}s]\n");
    let _ = std::io::stdout().write_all(line.as_bytes());
    if let Err(d) = outcome {
        panic!("criterion {id} failed: {d}");
    }
}

fn skip(id: u32, name: &str) {
    let line = format!("acceptance {id:>2} SKIP {name}: hours-scale, run with --ignored\n");
    let _ = std::io::stdout().write_all(line.as_bytes());
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- 1: gradients ---------------------------------------------------------

const GRAD_TOL: f64 = 1e-3;

struct ViewLoss {
    view: SplatView,
    target: Vec<f64>,
}

impl Objective for ViewLoss {
    fn evaluate<S: Scalar>(&self, params: &ParamStore<S>, with_grad: bool) -> rbc_grad::Result<(f64, Option<Gradients<S>>)> {
        let cid = params.id("colors")?;
        let oid = params.id("opacities")?;
        let target: Vec<S> = self.target.iter().map(|&v| S::from_f64(v)).collect();
        let (loss, gc, go) = self.view.mse_backward(params.get(cid).data(), params.get(oid).data(), &target);
        let grads = with_grad.then(|| {
            let mut g = Gradients::zeros_like(params);
            g.param_mut(cid).copy_from_slice(&gc);
            g.param_mut(oid).copy_from_slice(&go);
            g
        });
        Ok((loss.as_f64(), grads))
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, intr: Intrinsics) -> SplatCloud {
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    for _ in 0..n {
        c.push(
            [rng.random_range(1.0..4.0), rng.random_range(-1.5..1.5), rng.random_range(0.25..2.25)],
            rng.random_range(0.05..0.3),
            [rng.random(), rng.random(), rng.random()],
            rng.random_range(0.1..0.9),
            0,
        );
    }
    c
}

struct ChunkLoss<'a> {
    policy: &'a Policy,
    mem: EpisodeMemory,
    input: ChunkInput,
    actions: Vec<usize>,
}

impl GraphLoss for ChunkLoss<'_> {
    fn build<S: Scalar>(&self, g: &mut Graph<'_, S>) -> rbc_grad::Result<Var> {
        let (vars, _) = self
            .policy
            .net()
            .forward_chunk(g, &self.mem, &self.input)
            .map_err(|e| rbc_grad::GradError::InvalidArgument {
                op: "policy",
                reason: e.to_string(),
            })?;
        let lp = g.log_softmax(vars.logits)?;
        let picked = g.pick(lp, &self.actions)?;
        let a = g.mean(picked);
        let v2 = g.square(vars.values);
        let b = g.mean(v2);
        let b = g.scale(b, S::from_f64(0.5));
        g.sub(b, a)
    }
}

fn small_policy(mode: ContextMode) -> PolicyConfig {
    PolicyConfig {
        height: 16,
        width: 16,
        patch: 8,
        d_model: 16,
        heads: 2,
        layers: 4,
        window: 8,
        memory_after: vec![2, 4],
        mode,
        ..PolicyConfig::default()
    }
}

struct Episode {
    frames: Vec<Image>,
    actions: Vec<Action>,
    goal: Option<Image>,
}

fn random_frame(cfg: &PolicyConfig, rng: &mut impl Rng) -> Image {
    let data = (0..cfg.height * cfg.width * 3).map(|_| rng.random::<f32>()).collect();
    Image::from_data(cfg.height, cfg.width, 3, data).unwrap()
}

fn episode(cfg: &PolicyConfig, len: usize, with_goal: bool, seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..len).map(|_| random_frame(cfg, &mut rng)).collect();
    let actions = (0..len).map(|_| Action::from_index(rng.random_range(0..4)).unwrap()).collect();
    let goal = with_goal.then(|| random_frame(cfg, &mut rng));
    Episode { frames, actions, goal }
}

fn chunk_input(policy: &Policy, ep: &Episode, range: std::ops::Range<usize>) -> ChunkInput {
    let net = policy.net();
    let patches = range
        .clone()
        .flat_map(|t| net.frame_patches(&ep.frames[t], ep.actions[t]).unwrap())
        .collect();
    ChunkInput {
        patches,
        steps: range.len(),
        goal: ep.goal.as_ref().map(|g| net.goal_patches(g).unwrap()),
    }
}

fn criterion_1() -> Outcome {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |err: f64, what: String| {
        if err > worst.0 {
            worst = (err, what);
        }
    };
    for &prim in PRIMITIVES {
        for seed in 0..10 {
            let r = check_primitive::<f32>(prim, seed).map_err(|e| e.to_string())?;
            note(r.max_rel_error, format!("{prim:?} seed {seed}"));
        }
    }
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let intr = Intrinsics::new(16, 16);
        let c = random_cloud(&mut rng, 24, intr);
        let view = c.view(&Pose::new(0.0, 0.0, 0));
        let target: Vec<f64> = (0..16 * 16 * 3).map(|_| rng.random()).collect();
        let mut store = ParamStore::new();
        store.add("colors", Tensor::new(vec![24, 3], c.colors().to_vec()).unwrap()).unwrap();
        store.add("opacities", Tensor::new(vec![24], c.opacities().to_vec()).unwrap()).unwrap();
        let cfg = GradCheckConfig {
            delta: 1e-4,
            samples_per_param: 72,
            seed,
            floor: 1e-5,
        };
        let r = check_gradients::<f32, _>(&ViewLoss { view, target }, &store, cfg).map_err(|e| e.to_string())?;
        note(r.max_rel_error, format!("compositing seed {seed}"));
    }
    for seed in 0..10u64 {
        let mode = [ContextMode::Full, ContextMode::Ctx(4), ContextMode::RnnLike, ContextMode::ActorCtx1][seed as usize % 4];
        let cfg = PolicyConfig {
            d_model: 8,
            heads: 2,
            window: 4,
            ..small_policy(mode)
        };
        let policy = Policy::new(cfg.clone(), 100 + seed).unwrap();
        let ep = episode(&cfg, 7, seed % 2 == 0, 200 + seed);
        let mut mem = policy.new_memory();
        for t in 0..3 {
            policy.step(&mut mem, &ep.frames[t], ep.actions[t], ep.goal.as_ref()).unwrap();
        }
        let loss = ChunkLoss {
            policy: &policy,
            mem,
            input: chunk_input(&policy, &ep, 3..7),
            actions: vec![0, 3, 1, 2],
        };
        let cfg = GradCheckConfig {
            delta: 1e-3,
            samples_per_param: 3,
            seed,
            floor: 1e-3,
        };
        let r = check_gradients::<f32, _>(&loss, policy.params(), cfg).map_err(|e| e.to_string())?;
        note(r.max_rel_error, format!("policy {} seed {seed}", mode.name()));
    }
    check(
        worst.0 <= GRAD_TOL,
        format!(
            "{} primitives + compositing + policy over 10 seeds, max rel err {:.2e} ({}) <= {GRAD_TOL:.0e}",
            PRIMITIVES.len(),
            worst.0,
            worst.1
        ),
    )
}

// ---- 2: compositing invariants ------------------------------------------

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let intr = Intrinsics::new(16, 16);
    let mut violations = 0usize;
    let mut max_sum: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let c = random_cloud(&mut rng, n, intr);
        let pose = Pose::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), [23, 0, 1][rng.random_range(0..3)]);
        let view = c.view(&pose);
        for row in 0..16 {
            for col in 0..16 {
                let (trail, t_end) = view.trace(c.opacities(), row, col);
                let mut sum = 0.0;
                let mut last_t = 1.0;
                for k in &trail {
                    violations += (k.weight < 0.0) as usize + (k.transmittance > last_t) as usize;
                    last_t = k.transmittance;
                    sum += k.weight;
                }
                violations += (t_end > last_t || t_end < 0.0) as usize;
                violations += (sum > 1.0 + 1e-12) as usize;
                max_sum = max_sum.max(sum);
            }
        }
    }
    let intr = Intrinsics::new(65, 65);
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    c.push([2.0, 0.0, EYE_HEIGHT as f32], 0.05, [0.2, 0.7, 0.1], 1.0, 0);
    let r = c.render_view(&Pose::new(0.0, 0.0, 0));
    let opaque_exact = r.rgb.pixel(32, 32) == [0.2, 0.7, 0.1];
    check(
        violations == 0 && opaque_exact,
        format!("1000 clouds: {violations} violations, max sum of weights {max_sum:.6}; opaque primitive exact: {opaque_exact}"),
    )
}

// ---- 3: reward contract ---------------------------------------------------

fn constant(v: [f32; 3]) -> Image {
    let mut img = Image::new(64, 64, 3);
    for px in img.data.chunks_mut(3) {
        px.copy_from_slice(&v);
    }
    img
}

fn criterion_3() -> Outcome {
    let cfg = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = Image::from_data(64, 64, 3, (0..64 * 64 * 3).map(|_| rng.random::<f32>()).collect()).unwrap();
    let e0 = prediction_error(&img, &img, &cfg).map_err(|e| e.to_string())?;
    let mut worst_closed: f64 = 0.0;
    for delta in [0.01f32, 0.05, 0.1, 0.3] {
        let e = prediction_error(&constant([0.2, 0.4, 0.5]), &constant([0.2 + delta, 0.4 + delta, 0.5 + delta]), &cfg)
            .map_err(|e| e.to_string())?;
        worst_closed = worst_closed.max((e - 3.0 * (delta as f64).powi(2)).abs());
    }
    // rewards emitted along a real episode
    let scene = Arc::new(Scene::generate(3, 10, 10, &SceneParams::default()).map_err(|e| e.to_string())?);
    let mut env = Env::new(scene, EnvConfig::default());
    let first = env.reset(5, TaskMode::Explore).map_err(|e| e.to_string())?;
    let mut cur = SplatCuriosity::new(SplatConfig::default(), *env.intrinsics(), cfg, 5);
    cur.begin_episode(&first, 0);
    let mut values = std::collections::BTreeSet::new();
    let mut off_contract = 0;
    for t in 0..200 {
        let a = Action::from_index(rng.random_range(0..3)).unwrap();
        let f = env.step(a).map_err(|e| e.to_string())?.frame;
        let s = cur.step(&f).map_err(|e| e.to_string())?;
        off_contract += (s.reward != 0.5 && s.reward != -2e-4) as usize;
        values.insert(format!("{}", s.reward));
        let _ = t;
    }
    let strict = reward_from_error(cfg.tau, &cfg) == -2e-4;
    check(
        e0 == 0.0 && worst_closed <= 1e-6 && off_contract == 0 && strict,
        format!(
            "200 steps emitted {{{}}}, {off_contract} off-contract; e(identical) = {e0}; |e - 3d^2| <= {worst_closed:.1e} (<= 1e-6)",
            values.into_iter().collect::<Vec<_>>().join(", ")
        ),
    )
}

// ---- 4: persistence -------------------------------------------------------

const PERSIST_SCENE: u64 = 7;
const PERSIST_CELLS: usize = 10;

/// (r_old steps, r_new steps) on the return leg of a scripted out-and-back.
fn return_leg_rewards(memory_window: Option<usize>) -> Result<(usize, usize), String> {
    let scene = Arc::new(Scene::generate(PERSIST_SCENE, 16, 16, &SceneParams::default()).map_err(|e| e.to_string())?);
    let path = farthest_path(&scene, scene.free_cells()[0]).map_err(|e| e.to_string())?;
    let path = &path[..path.len().min(PERSIST_CELLS)];
    let script = OutAndBack::new(path).map_err(|e| e.to_string())?;
    let mut env = Env::new(
        scene,
        EnvConfig {
            max_steps: script.len() + 1,
            ..EnvConfig::default()
        },
    );
    let first = env.reset_to(script.start, TaskState::explore()).map_err(|e| e.to_string())?;
    let splat = SplatConfig {
        memory_window,
        ..SplatConfig::default()
    };
    let mut cur = SplatCuriosity::new(splat, *env.intrinsics(), RewardConfig::default(), 11);
    cur.begin_episode(&first, 0);
    let (mut old, mut new) = (0, 0);
    for (a, returning) in script.actions() {
        let f = env.step(a).map_err(|e| e.to_string())?.frame;
        let s = cur.step(&f).map_err(|e| e.to_string())?;
        if returning {
            if s.reward > 0.0 {
                new += 1;
            } else {
                old += 1;
            }
        }
    }
    Ok((old, new))
}

fn criterion_4() -> Outcome {
    let (old_full, new_full) = return_leg_rewards(None)?;
    let (_, new_short) = return_leg_rewards(Some(64))?;
    let frac = old_full as f64 / (old_full + new_full) as f64;
    check(
        frac >= 0.90 && new_short >= (3 * new_full).max(1),
        format!(
            "return leg of {} steps: full memory r_old {:.1}% (>= 90%), r_new full {new_full} vs window 64 {new_short} (>= 3x)",
            old_full + new_full,
            100.0 * frac
        ),
    )
}

// ---- 5: causality and streaming -----------------------------------------

fn recompute(policy: &Policy, ep: &Episode) -> (Vec<[f32; 4]>, Vec<f32>) {
    let input = chunk_input(policy, ep, 0..ep.frames.len());
    let mut g = Graph::new(policy.params());
    let (vars, _) = policy.net().forward_chunk(&mut g, &policy.new_memory(), &input).unwrap();
    let logits = g.data(vars.logits).chunks(4).map(|l| [l[0], l[1], l[2], l[3]]).collect();
    (logits, g.data(vars.values).to_vec())
}

fn criterion_5() -> Outcome {
    let mut leaks = Vec::new();
    for mode in [
        ContextMode::Full,
        ContextMode::Ctx(1),
        ContextMode::Ctx(4),
        ContextMode::RnnLike,
        ContextMode::ActorCtx1,
        ContextMode::CriticCtx1,
    ] {
        let cfg = small_policy(mode);
        let policy = Policy::new(cfg.clone(), 11).unwrap();
        let ep = episode(&cfg, 24, true, 12);
        let mut other = episode(&cfg, 24, true, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for t in 15..24 {
            other.frames[t] = random_frame(&cfg, &mut rng);
            other.actions[t] = Action::from_index((ep.actions[t].index() + 1) % 4).unwrap();
        }
        let (la, va) = recompute(&policy, &ep);
        let (lb, vb) = recompute(&policy, &other);
        if la[..15] != lb[..15] || va[..15] != vb[..15] {
            leaks.push(mode.name());
        }
    }
    let cfg = PolicyConfig::default();
    let policy = Policy::new(cfg.clone(), 21).unwrap();
    let ep = episode(&cfg, 256, false, 22);
    let mut mem = policy.new_memory();
    let streamed: Vec<PolicyOutput> = ep
        .frames
        .iter()
        .zip(&ep.actions)
        .map(|(f, &a)| policy.step(&mut mem, f, a, None).unwrap())
        .collect();
    let (logits, _) = recompute(&policy, &ep);
    let gap = streamed
        .iter()
        .zip(&logits)
        .flat_map(|(o, l)| (0..4).map(move |k| (o.logits[k] - l[k]).abs()))
        .fold(0f32, f32::max);
    check(
        leaks.is_empty() && gap <= 1e-5,
        format!("future perturbation leaks in {leaks:?}; 256-step streaming vs recompute max logit gap {gap:.2e} (<= 1e-5)"),
    )
}

// ---- 6: mixture and PPO ---------------------------------------------------

fn criterion_6() -> Outcome {
    let greedy = PolicyOutput {
        logits: [40.0, 0.0, 0.0, 0.0],
        value: 0.0,
    };
    let n = 10_000;
    let beta = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let off = (0..n)
        .filter(|_| sample_action(&greedy, beta, &mut rng).unwrap().0.index() != 0)
        .count() as f64;
    // with a deterministic policy, off-greedy draws are uniform-branch draws landing elsewhere
    let uniform_rate = off / 0.75 / n as f64;
    let p = 0.75 * beta;
    let sigma = (p * (1.0 - p) / n as f64).sqrt() / 0.75;
    let rate_ok = (uniform_rate - beta).abs() <= 3.0 * sigma;

    let pcfg = PolicyConfig {
        height: 32,
        width: 32,
        d_model: 16,
        heads: 2,
        layers: 2,
        window: 8,
        memory_after: vec![1, 2],
        ..PolicyConfig::default()
    };
    let policy = Policy::new(pcfg, 3).unwrap();
    let wcfg = WorkerConfig {
        seed: 5,
        maze_width: 8,
        maze_height: 8,
        scene: SceneParams::default(),
        env: EnvConfig {
            width: 32,
            height: 32,
            max_steps: 40,
            ..EnvConfig::default()
        },
        task: TaskMode::Explore,
        source: rbc_core::curiosity::RewardSource::Splat,
        splat: SplatConfig::default(),
        reward: RewardConfig::default(),
        scene_pool: Vec::new(),
    };
    let mut workers = vec![Worker::new(0, wcfg, &policy, 0).map_err(|e| e.to_string())?];
    let opts = CollectOptions {
        horizon: 64,
        chunk: 16,
        beta,
        update: 0,
    };
    let mut batch = collect_rollout(&mut workers, &policy, None, opts).map_err(|e| e.to_string())?;
    batch.compute_advantages(0.99, 0.95, true);
    let all: Vec<(usize, usize)> = minibatches(&batch, usize::MAX, None).concat();
    let mut g = Graph::new(policy.params());
    let terms = minibatch_loss(&mut g, &policy, &batch, &all, &PpoConfig::default(), 0.0).map_err(|e| e.to_string())?;
    let ratio_gap = terms
        .ratios
        .iter()
        .zip(&terms.log_probs)
        .map(|(r, lp)| {
            let pi = lp.exp();
            (r - pi / ((1.0 - beta) * pi + beta / 4.0)).abs()
        })
        .fold(0.0, f64::max);

    let (adv, _) = compute_gae(&[1.0, 0.0], &[0.5, 0.4, 0.0], &[false, false], 0.99, 0.95);
    let d1 = -0.4;
    let d0 = 1.0 + 0.99 * 0.4 - 0.5;
    let gae_gap = (adv[1] - d1).abs().max((adv[0] - (d0 + 0.99 * 0.95 * d1)).abs());
    check(
        rate_ok && ratio_gap <= 1e-6 && gae_gap <= 1e-6,
        format!(
            "uniform-branch rate {uniform_rate:.4} vs beta {beta} (3 sigma = {:.4}); ratio vs closed form {ratio_gap:.1e} over {} steps; GAE gap {gae_gap:.1e}",
            3.0 * sigma,
            terms.ratios.len()
        ),
    )
}

// ---- 7: metric oracle -----------------------------------------------------

fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64, lattice: bool) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            if lattice {
                Vec3::new(
                    rng.random_range(0..8) as f64 * 0.25,
                    rng.random_range(0..8) as f64 * 0.25,
                    rng.random_range(0..4) as f64 * 0.25,
                )
            } else {
                Vec3::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent), rng.random_range(0.0..2.5))
            }
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for inst in 0..100 {
        let lattice = inst % 2 == 1;
        let n_obs = rng.random_range(1..400);
        let pts = random_points(&mut rng, n_obs, 6.0, lattice);
        let index = SpatialHash::build(pts.clone(), [0.1, 0.5, 1.7][inst % 3]).map_err(|e| e.to_string())?;
        for q in &random_points(&mut rng, 50, 8.0, lattice) {
            mismatches += (index.nearest(q) != brute_force_nearest(&pts, q)) as usize;
        }
        let steps = rng.random_range(1..1100);
        let observed: Vec<Vec<Vec3>> = (0..steps)
            .map(|_| {
                let k = rng.random_range(0..4);
                random_points(&mut rng, k, 6.0, lattice)
            })
            .collect();
        let gt = random_points(&mut rng, 80, 6.0, lattice);
        let fast = coverage_from_points(&gt, &observed, DEFAULT_THRESHOLD, &DEFAULT_HORIZONS, 9.0).map_err(|e| e.to_string())?;
        let slow = coverage_brute_force(&gt, &observed, DEFAULT_THRESHOLD, &DEFAULT_HORIZONS, 9.0).map_err(|e| e.to_string())?;
        mismatches += (fast != slow) as usize;
    }
    let defaults = DEFAULT_THRESHOLD == 0.05 && DEFAULT_HORIZONS == [256, 512, 1024];
    check(
        mismatches == 0 && defaults,
        format!("100 instances, {mismatches} mismatches against brute force; threshold {DEFAULT_THRESHOLD} m, horizons {DEFAULT_HORIZONS:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "gradient suite", criterion_1),
        (2, "compositing invariants", criterion_2),
        (3, "reward contract", criterion_3),
        (4, "persistence", criterion_4),
        (5, "policy causality and streaming", criterion_5),
        (6, "mixture and PPO correctness", criterion_6),
        (7, "metric oracle", criterion_7),
    ];
    let filter = std::env::var("RBC_ACCEPTANCE").ok();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if filter.as_deref().is_some_and(|s| !s.split(',').any(|x| x == id.to_string())) {
            continue;
        }
        let started = Instant::now();
        let outcome = f();
        if outcome.is_err() {
            failed.push(id);
        }
        let _ = std::panic::catch_unwind(|| report(id, name, started, outcome));
    }
    if filter.is_none() {
        skip(8, "ablation ordering");
        skip(9, "fine-tuning benefit");
        skip(10, "regularizer necessity");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---- 8 to 10: training comparisons --------------------------------------

const SEEDS: [u64; 3] = [1, 2, 3];
const ORDER_MARGIN: f64 = 1.10;

fn desk_config(seed: u64) -> RunConfig {
    let dir = std::env::temp_dir().join(format!("rbc_acceptance_{}_{seed}", std::process::id()));
    RunConfig {
        seed,
        run_dir: dir.display().to_string(),
        ..RunConfig::default()
    }
}

/// Mean completeness at `horizon` of a policy trained under `cfg`, over
/// the held-out scenes.
fn trained_completeness(cfg: RunConfig, horizon: usize) -> f64 {
    let scenes = cfg.eval_scenes().unwrap();
    let eval = cfg.eval_config();
    let hash = cfg.hash();
    let out = run_training(cfg, Start::Fresh).unwrap();
    let mut explorer = PolicyExplorer::new(&out.policy, "policy", 0.0);
    run_eval_suite(&mut explorer, &scenes, &eval, &hash).unwrap().report.at(horizon).unwrap()
}

#[test]
#[ignore]
fn criterion_8_ablation_ordering() {
    let started = Instant::now();
    assert_eq!(DEFAULT_EVAL_SEEDS.lines().filter(|l| !l.trim().starts_with('#') && !l.trim().is_empty()).count(), 10);
    let mut means = std::collections::BTreeMap::new();
    for variant in ["full", "short_memory_64", "ctx1", "random_policy"] {
        let mut sum = 0.0;
        for seed in SEEDS {
            let base = desk_config(seed);
            let cfg = rbc_core::evalbench::variant_config(&base, variant).unwrap();
            sum += if variant == "random_policy" {
                let scenes = cfg.eval_scenes().unwrap();
                let mut r = rbc_core::evalbench::RandomExplorer::default();
                run_eval_suite(&mut r, &scenes, &cfg.eval_config(), &cfg.hash()).unwrap().report.at(256).unwrap()
            } else {
                let mut cfg = cfg;
                cfg.run_dir = format!("{}_{variant}", cfg.run_dir);
                trained_completeness(cfg, 256)
            };
        }
        means.insert(variant, sum / SEEDS.len() as f64);
    }
    let full = means["full"];
    let ok = ["short_memory_64", "ctx1", "random_policy"].iter().all(|v| full >= ORDER_MARGIN * means[v]);
    report(8, "ablation ordering", started, check(ok, format!("completeness@256 means {means:?}; full must lead each by >= 10%")));
}

#[test]
#[ignore]
fn criterion_9_finetune_benefit() {
    let started = Instant::now();
    let (mut pre_success, mut scratch_success) = (0.0, 0.0);
    for seed in SEEDS {
        let mut cfg = desk_config(seed);
        cfg.task.apples = 1;
        cfg.eval.scenes = Vec::new();
        let pre = run_training(cfg.clone(), Start::Fresh).unwrap();
        let ft = run_finetune(&pre.final_checkpoint, TaskMode::Apples, &cfg).unwrap();

        let mut scratch = cfg.clone();
        scratch.run_dir = format!("{}_scratch", cfg.run_dir);
        scratch.task.mode = "apples".into();
        scratch.trainer.reward_source = "task".into();
        scratch.total_steps = pre.step + ft.step;
        let scratch_out = run_training(scratch, Start::Fresh).unwrap();

        let mut eval_cfg = cfg.clone();
        eval_cfg.task.mode = "apples".into();
        let eval = eval_cfg.eval_config();
        let scenes = eval_cfg.eval_scenes().unwrap();
        let mut a = PolicyExplorer::new(&ft.policy, "finetuned", 0.0);
        pre_success += run_eval_suite(&mut a, &scenes, &eval, "").unwrap().report.success_rate;
        let mut b = PolicyExplorer::new(&scratch_out.policy, "scratch", 0.0);
        scratch_success += run_eval_suite(&mut b, &scenes, &eval, "").unwrap().report.success_rate;
    }
    let n = SEEDS.len() as f64;
    let (p, s) = (pre_success / n, scratch_success / n);
    report(
        9,
        "fine-tuning benefit",
        started,
        check(p >= 1.2 * s && p > 0.0, format!("pick success pretrained+finetuned {p:.3} vs scratch {s:.3} (>= 1.2x)")),
    );
}

#[test]
#[ignore]
fn criterion_10_regularizer_necessity() {
    let started = Instant::now();
    let (mut with, mut without) = (0.0, 0.0);
    for seed in SEEDS {
        let cfg = desk_config(seed);
        let mut bare = cfg.clone();
        bare.run_dir = format!("{}_bare", cfg.run_dir);
        bare.trainer.beta0 = 0.0;
        bare.trainer.entropy0 = 0.0;
        with += trained_completeness(cfg, 1024);
        without += trained_completeness(bare, 1024);
    }
    let n = SEEDS.len() as f64;
    report(
        10,
        "regularizer necessity",
        started,
        check(without < with, format!("completeness@1024 defaults {:.2} vs beta=0, entropy=0 {:.2}", with / n, without / n)),
    );
}

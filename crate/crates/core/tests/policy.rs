use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbc_core::camera::{Action, Intrinsics, Vec3};
use rbc_core::image::Image;
use rbc_core::policy::{
    behavior_prob, encode_action_pluecker, patchify, sample_action, ChunkInput, ContextMode, EpisodeMemory,
    Policy, PolicyConfig, PolicyOutput,
};
use rbc_grad::{check_gradients, GradCheckConfig, Graph, GraphLoss, ParamStore, Scalar, Var};

fn small(mode: ContextMode) -> PolicyConfig {
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

fn random_frame(cfg: &PolicyConfig, rng: &mut impl Rng) -> Image {
    let data = (0..cfg.height * cfg.width * 3).map(|_| rng.random::<f32>()).collect();
    Image::from_data(cfg.height, cfg.width, 3, data).unwrap()
}

struct Episode {
    frames: Vec<Image>,
    actions: Vec<Action>,
    goal: Option<Image>,
}

fn episode(cfg: &PolicyConfig, len: usize, with_goal: bool, seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..len).map(|_| random_frame(cfg, &mut rng)).collect();
    let actions = (0..len)
        .map(|_| Action::from_index(rng.random_range(0..4)).unwrap())
        .collect();
    let goal = with_goal.then(|| random_frame(cfg, &mut rng));
    Episode { frames, actions, goal }
}

fn stream(policy: &Policy, ep: &Episode) -> Vec<PolicyOutput> {
    let mut mem = policy.new_memory();
    ep.frames
        .iter()
        .zip(&ep.actions)
        .map(|(f, &a)| policy.step(&mut mem, f, a, ep.goal.as_ref()).unwrap())
        .collect()
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

/// Logits and values of consecutive chunks of at most `chunk` steps.
fn recompute(policy: &Policy, ep: &Episode, chunk: usize) -> (Vec<[f32; 4]>, Vec<f32>) {
    let mut mem = policy.new_memory();
    let (mut logits, mut values) = (Vec::new(), Vec::new());
    let mut t = 0;
    while t < ep.frames.len() {
        let end = (t + chunk).min(ep.frames.len());
        let input = chunk_input(policy, ep, t..end);
        let mut g = Graph::new(policy.params());
        let (vars, next) = policy.net().forward_chunk(&mut g, &mem, &input).unwrap();
        mem = next;
        logits.extend(g.data(vars.logits).chunks(4).map(|l| [l[0], l[1], l[2], l[3]]));
        values.extend_from_slice(g.data(vars.values));
        t = end;
    }
    (logits, values)
}

fn max_gap(a: &[PolicyOutput], logits: &[[f32; 4]], values: &[f32]) -> (f32, f32) {
    let mut gl = 0f32;
    let mut gv = 0f32;
    for ((o, l), v) in a.iter().zip(logits).zip(values) {
        for k in 0..4 {
            gl = gl.max((o.logits[k] - l[k]).abs());
        }
        gv = gv.max((o.value - v).abs());
    }
    (gl, gv)
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

// ---- Plücker action images ---------------------------------------------

#[test]
fn pause_rays_pass_through_the_origin() {
    let intr = Intrinsics::new(64, 64);
    let img = encode_action_pluecker(Action::Pause, &intr);
    assert!(img.data.chunks(6).all(|p| p[3] == 0.0 && p[4] == 0.0 && p[5] == 0.0));
    for (r, c) in [(0, 0), (31, 40), (63, 63)] {
        let ray = intr.pixel_ray(r, c);
        let expect = ray / ray.norm();
        assert!((img.direction(r, c) - expect).norm() < 1e-6);
    }
}

#[test]
fn forward_moment_is_translation_cross_direction() {
    let intr = Intrinsics::new(64, 64);
    let img = encode_action_pluecker(Action::Forward, &intr);
    let t = Vec3::new(0.0, 0.0, 0.25);
    for r in 0..64 {
        for c in 0..64 {
            let ray = intr.pixel_ray(r, c);
            let d = ray / ray.norm();
            assert!((img.direction(r, c) - d).norm() < 1e-6);
            assert!((img.moment(r, c) - cross(&t, &d)).norm() < 1e-6, "pixel ({r}, {c})");
        }
    }
}

#[test]
fn turn_direction_fields_are_mirror_images() {
    let intr = Intrinsics::new(64, 64);
    let left = encode_action_pluecker(Action::TurnLeft, &intr);
    let right = encode_action_pluecker(Action::TurnRight, &intr);
    assert_ne!(left, right);
    for r in 0..64 {
        for c in 0..64 {
            let a = left.direction(r, c);
            let b = right.direction(r, 63 - c);
            assert!((a.x + b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6 && (a.z - b.z).abs() < 1e-6);
            assert!(left.moment(r, c).norm() == 0.0);
        }
    }
}

proptest! {
    #[test]
    fn pluecker_rays_are_valid(a in 0usize..4, r in 0usize..64, c in 0usize..64) {
        let intr = Intrinsics::new(64, 64);
        let img = encode_action_pluecker(Action::from_index(a).unwrap(), &intr);
        let (d, m) = (img.direction(r, c), img.moment(r, c));
        prop_assert!((d.norm() - 1.0).abs() < 1e-6);
        prop_assert!(d.dot(&m).abs() < 1e-6);
    }
}

// ---- tokenizer ---------------------------------------------------------

#[test]
fn default_resolution_gives_sixty_four_patch_tokens() {
    let cfg = PolicyConfig::default();
    assert_eq!(cfg.patches(), 64);
    let policy = Policy::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frame = random_frame(&cfg, &mut rng);
    let patches = policy.net().frame_patches(&frame, Action::Forward).unwrap();
    assert_eq!(patches.len(), 64 * 8 * 8 * 9);
    let token = policy.encode_frame(&frame, policy.net().action_rays(Action::Forward)).unwrap();
    assert_eq!(token.0.len(), 128);
    assert!(token.0.iter().all(|x| x.is_finite()));
}

#[test]
fn indivisible_resolution_is_rejected() {
    let cfg = PolicyConfig {
        height: 60,
        ..PolicyConfig::default()
    };
    assert!(cfg.validate().is_err());
    assert!(Policy::new(cfg, 0).is_err());
    let intr = Intrinsics::new(64, 64);
    let rays = encode_action_pluecker(Action::Pause, &intr);
    let rgb = Image::new(64, 64, 3);
    assert!(patchify(&rgb, &rays, 7).is_err());
    assert!(patchify(&rgb, &rays, 8).is_ok());
}

#[test]
fn identical_frames_give_identical_tokens() {
    let cfg = small(ContextMode::Full);
    let policy = Policy::new(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frame = random_frame(&cfg, &mut rng);
    let patches = policy.net().frame_patches(&frame, Action::TurnLeft).unwrap();
    let both: Vec<f32> = patches.iter().chain(&patches).copied().collect();
    let mut g = Graph::new(policy.params());
    let z = policy.net().tokenize(&mut g, &both, 2).unwrap();
    let d = cfg.d_model;
    assert_eq!(&g.data(z)[..d], &g.data(z)[d..]);
}

fn swap_patches(patches: &[f32], pd: usize, i: usize, j: usize) -> Vec<f32> {
    let mut out = patches.to_vec();
    for k in 0..pd {
        out.swap(i * pd + k, j * pd + k);
    }
    out
}

#[test]
fn tokens_ignore_patch_order_without_positions() {
    let cfg = PolicyConfig {
        patch_positions: false,
        ..PolicyConfig::default()
    };
    let policy = Policy::new(cfg.clone(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let frame = random_frame(&cfg, &mut rng);
    let patches = policy.net().frame_patches(&frame, Action::Forward).unwrap();
    let swapped = swap_patches(&patches, cfg.patch_dim(), 3, 40);
    let token = |p: &[f32]| {
        let mut g = Graph::new(policy.params());
        let z = policy.net().tokenize(&mut g, p, 1).unwrap();
        g.data(z).to_vec()
    };
    let (a, b) = (token(&patches), token(&swapped));
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0f32, f32::max);
    assert!(gap < 1e-5, "gap {gap}");

    let with_pos = Policy::new(PolicyConfig::default(), 5).unwrap();
    let token = |p: &[f32]| {
        let mut g = Graph::new(with_pos.params());
        let z = with_pos.net().tokenize(&mut g, p, 1).unwrap();
        g.data(z).to_vec()
    };
    assert_ne!(token(&patches), token(&swapped));
}

// ---- temporal stack ----------------------------------------------------

/// Copy every parameter `dst` shares by name with `src`.
fn copy_shared(dst: &mut ParamStore<f32>, src: &ParamStore<f32>) {
    let ids: Vec<_> = dst.ids().collect();
    for id in ids {
        if let Ok(sid) = src.id(dst.name(id)) {
            *dst.get_mut(id) = src.get(sid).clone();
        }
    }
}

#[test]
fn first_step_memory_readout_is_zero() {
    let cfg = small(ContextMode::Full);
    let with_mem = Policy::new(cfg.clone(), 7).unwrap();
    let mut without = Policy::new(
        PolicyConfig {
            memory_after: vec![],
            ..cfg.clone()
        },
        99,
    )
    .unwrap();
    copy_shared(without.params_mut(), with_mem.params());
    let ep = episode(&cfg, 1, false, 8);
    let (a, b) = (stream(&with_mem, &ep), stream(&without, &ep));
    for k in 0..4 {
        assert!((a[0].logits[k] - b[0].logits[k]).abs() < 1e-6);
    }
    assert!((a[0].value - b[0].value).abs() < 1e-6);
}

#[test]
fn future_frames_do_not_change_past_outputs() {
    for mode in [ContextMode::Full, ContextMode::Ctx(4), ContextMode::RnnLike, ContextMode::ActorCtx1] {
        let cfg = small(mode);
        let policy = Policy::new(cfg.clone(), 11).unwrap();
        let ep = episode(&cfg, 24, true, 12);
        let mut other = episode(&cfg, 24, true, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for t in 15..24 {
            other.frames[t] = random_frame(&cfg, &mut rng);
            other.actions[t] = Action::from_index((ep.actions[t].index() + 1) % 4).unwrap();
        }
        let (la, va) = recompute(&policy, &ep, 24);
        let (lb, vb) = recompute(&policy, &other, 24);
        assert_eq!(la[..15], lb[..15], "{}", mode.name());
        assert_eq!(va[..15], vb[..15], "{}", mode.name());
        assert_ne!(la[15], lb[15], "{}", mode.name());
    }
}

#[test]
fn streaming_matches_recompute_over_256_steps() {
    let cfg = PolicyConfig::default();
    let policy = Policy::new(cfg.clone(), 21).unwrap();
    let ep = episode(&cfg, 256, false, 22);
    let streamed = stream(&policy, &ep);
    let (logits, values) = recompute(&policy, &ep, 256);
    let (gl, gv) = max_gap(&streamed, &logits, &values);
    assert!(gl <= 1e-5, "logit gap {gl}");
    assert!(gv <= 1e-4, "value gap {gv}");
}

#[test]
fn every_variant_streams_like_its_chunked_recompute() {
    let modes = [
        ContextMode::Full,
        ContextMode::Ctx(1),
        ContextMode::Ctx(4),
        ContextMode::Ctx(16),
        ContextMode::RnnLike,
        ContextMode::ActorCtx1,
        ContextMode::CriticCtx1,
    ];
    for mode in modes {
        for with_goal in [false, true] {
            let cfg = small(mode);
            let policy = Policy::new(cfg.clone(), 31).unwrap();
            let ep = episode(&cfg, 40, with_goal, 32);
            let streamed = stream(&policy, &ep);
            let (logits, values) = recompute(&policy, &ep, 7);
            let (gl, gv) = max_gap(&streamed, &logits, &values);
            assert!(gl <= 1e-5 && gv <= 1e-5, "{} goal={with_goal}: {gl} {gv}", mode.name());
        }
    }
}

#[test]
fn single_layer_window_ignores_older_frames() {
    let cfg = PolicyConfig {
        layers: 1,
        window: 16,
        memory_after: vec![],
        ..small(ContextMode::Full)
    };
    let policy = Policy::new(cfg.clone(), 41).unwrap();
    let ep = episode(&cfg, 41, false, 42);
    let (full, _) = recompute(&policy, &ep, 41);

    let mut older = episode(&cfg, 41, false, 42);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for t in 0..25 {
        older.frames[t] = random_frame(&cfg, &mut rng);
    }
    assert_eq!(recompute(&policy, &older, 41).0[40], full[40]);

    // the same 16 frames on their own
    let tail = Episode {
        frames: ep.frames[25..].to_vec(),
        actions: ep.actions[25..].to_vec(),
        goal: None,
    };
    let (alone, _) = recompute(&policy, &tail, 16);
    for k in 0..4 {
        assert!((alone[15][k] - full[40][k]).abs() < 1e-6);
    }

    let mut edge = episode(&cfg, 41, false, 42);
    edge.frames[25] = random_frame(&cfg, &mut rng);
    assert_ne!(recompute(&policy, &edge, 41).0[40], full[40]);
}

#[test]
fn stacked_windows_reach_layers_times_window() {
    let cfg = PolicyConfig {
        layers: 3,
        window: 4,
        memory_after: vec![],
        ..small(ContextMode::Full)
    };
    let policy = Policy::new(cfg.clone(), 44).unwrap();
    let ep = episode(&cfg, 30, false, 45);
    let base = recompute(&policy, &ep, 30).0[29];
    let reach = cfg.layers * (cfg.window - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let mut far = episode(&cfg, 30, false, 45);
    far.frames[29 - reach - 1] = random_frame(&cfg, &mut rng);
    assert_eq!(recompute(&policy, &far, 30).0[29], base);
    let mut near = episode(&cfg, 30, false, 45);
    near.frames[29 - reach] = random_frame(&cfg, &mut rng);
    assert_ne!(recompute(&policy, &near, 30).0[29], base);
}

#[test]
fn memory_carries_information_beyond_the_window() {
    let cfg = PolicyConfig {
        layers: 1,
        window: 2,
        memory_after: vec![1],
        ..small(ContextMode::Full)
    };
    let policy = Policy::new(cfg.clone(), 47).unwrap();
    let ep = episode(&cfg, 12, false, 48);
    let base = recompute(&policy, &ep, 12).0[11];
    let mut early = episode(&cfg, 12, false, 48);
    let mut rng = ChaCha8Rng::seed_from_u64(49);
    early.frames[0] = random_frame(&cfg, &mut rng);
    assert_ne!(recompute(&policy, &early, 12).0[11], base);
}

fn perturbed_history(cfg: &PolicyConfig, ep: &Episode, upto: usize, seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = ep.frames.clone();
    let mut actions = ep.actions.clone();
    for t in 0..upto {
        frames[t] = random_frame(cfg, &mut rng);
        actions[t] = Action::from_index(rng.random_range(0..4)).unwrap();
    }
    Episode {
        frames,
        actions,
        goal: ep.goal.clone(),
    }
}

#[test]
fn ctx1_depends_only_on_the_current_frame() {
    let cfg = small(ContextMode::Ctx(1));
    let policy = Policy::new(cfg.clone(), 51).unwrap();
    let ep = episode(&cfg, 20, true, 52);
    let other = perturbed_history(&cfg, &ep, 19, 53);
    let (a, b) = (stream(&policy, &ep), stream(&policy, &other));
    assert_eq!(a[19], b[19]);
}

#[test]
fn ctx4_sees_exactly_four_frames() {
    let cfg = small(ContextMode::Ctx(4));
    let policy = Policy::new(cfg.clone(), 54).unwrap();
    let ep = episode(&cfg, 20, false, 55);
    let a = stream(&policy, &ep);
    assert_eq!(stream(&policy, &perturbed_history(&cfg, &ep, 16, 56))[19], a[19]);
    assert_ne!(stream(&policy, &perturbed_history(&cfg, &ep, 17, 56))[19], a[19]);
}

#[test]
fn asymmetric_variants_keep_the_other_head_intact() {
    let full = Policy::new(small(ContextMode::Full), 61).unwrap();
    let single = Policy::from_parts(
        rbc_core::policy::PolicyNet::new(small(ContextMode::Ctx(1))).unwrap(),
        full.params().clone(),
    );
    let actor = Policy::from_parts(
        rbc_core::policy::PolicyNet::new(small(ContextMode::ActorCtx1)).unwrap(),
        full.params().clone(),
    );
    let critic = Policy::from_parts(
        rbc_core::policy::PolicyNet::new(small(ContextMode::CriticCtx1)).unwrap(),
        full.params().clone(),
    );
    let ep = episode(full.config(), 20, true, 62);
    let (f, s, a, c) = (stream(&full, &ep), stream(&single, &ep), stream(&actor, &ep), stream(&critic, &ep));
    for t in 0..20 {
        assert_eq!(a[t].value, f[t].value);
        assert_eq!(a[t].logits, s[t].logits);
        assert_eq!(c[t].logits, f[t].logits);
        assert_eq!(c[t].value, s[t].value);
    }
    assert_ne!(a[19].logits, f[19].logits);
}

#[test]
fn rnn_like_matches_the_parameter_budget() {
    let full = Policy::new(PolicyConfig::default(), 0).unwrap();
    let rnn = Policy::new(
        PolicyConfig {
            mode: ContextMode::RnnLike,
            ..PolicyConfig::default()
        },
        0,
    )
    .unwrap();
    let (a, b) = (full.num_params() as f64, rnn.num_params() as f64);
    assert!((a - b).abs() / a <= 0.10, "full {a} rnn {b}");
    assert!(rnn.net().gru_hidden() > 0);
}

#[test]
fn goal_changes_outputs_only_when_present() {
    let cfg = small(ContextMode::Full);
    let policy = Policy::new(cfg.clone(), 71).unwrap();
    let with = episode(&cfg, 10, true, 72);
    let without = Episode {
        frames: with.frames.clone(),
        actions: with.actions.clone(),
        goal: None,
    };
    let (a, b) = (stream(&policy, &with), stream(&policy, &without));
    assert_ne!(a[9], b[9]);

    // no goal: repeated runs are bitwise stable and carry no goal rows
    assert_eq!(stream(&policy, &without), b);
    let mut g = Graph::new(policy.params());
    let mem = policy.new_memory();
    policy.net().forward_chunk(&mut g, &mem, &chunk_input(&policy, &without, 0..3)).unwrap();
    let plain = g.len();
    let mut g = Graph::new(policy.params());
    policy.net().forward_chunk(&mut g, &mem, &chunk_input(&policy, &with, 0..3)).unwrap();
    assert!(g.len() > plain);
}

#[test]
fn memory_tracks_timestep_and_window_occupancy() {
    let cfg = small(ContextMode::Full);
    let policy = Policy::new(cfg.clone(), 81).unwrap();
    let ep = episode(&cfg, 12, false, 82);
    let mut mem: EpisodeMemory = policy.new_memory();
    for (t, (f, &a)) in ep.frames.iter().zip(&ep.actions).enumerate() {
        policy.step(&mut mem, f, a, None).unwrap();
        assert_eq!(mem.timestep(), t + 1);
        assert_eq!(mem.tokens_held(), (t + 1).min(cfg.window));
    }
}

// ---- gradients -----------------------------------------------------------

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

#[test]
fn policy_graph_passes_gradient_check() {
    for seed in 0..10u64 {
        let mode = [ContextMode::Full, ContextMode::Ctx(4), ContextMode::RnnLike, ContextMode::ActorCtx1]
            [seed as usize % 4];
        let cfg = PolicyConfig {
            d_model: 8,
            heads: 2,
            window: 4,
            ..small(mode)
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
        let report = check_gradients::<f32, _>(
            &loss,
            policy.params(),
            GradCheckConfig {
                delta: 1e-3,
                samples_per_param: 3,
                seed,
                floor: 1e-3,
            },
        )
        .unwrap();
        assert!(
            report.max_rel_error <= 1e-3,
            "seed {seed} {}: {} at {}[{}] ({} vs {})",
            mode.name(),
            report.max_rel_error,
            report.worst_param,
            report.worst_index,
            report.analytic,
            report.numeric
        );
    }
}

// ---- sampling ------------------------------------------------------------

fn output_with_probs(p: [f64; 4]) -> PolicyOutput {
    PolicyOutput {
        logits: p.map(|x| x.ln() as f32),
        value: 0.0,
    }
}

#[test]
fn behavior_prob_closed_forms() {
    let out = output_with_probs([0.5, 0.2, 0.2, 0.1]);
    let probs = out.probs();
    for a in Action::ALL {
        assert!((behavior_prob(&probs, a, 1.0) - 0.25).abs() < 1e-12);
        assert!((behavior_prob(&probs, a, 0.0) - probs[a.index()]).abs() < 1e-12);
    }
    assert!((behavior_prob(&probs, Action::from_index(0).unwrap(), 0.2) - 0.45).abs() < 1e-6);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn sampled_behavior_prob_matches_the_mixture() {
    let out = output_with_probs([0.7, 0.1, 0.1, 0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for beta in [0.0, 0.2, 1.0] {
        for _ in 0..200 {
            let (a, mu) = sample_action(&out, beta, &mut rng).unwrap();
            assert!((mu - behavior_prob(&out.probs(), a, beta)).abs() < 1e-12);
        }
    }
    assert!(sample_action(&out, 1.5, &mut rng).is_err());
}

#[test]
fn action_frequencies_follow_the_mixture() {
    // a deterministic policy isolates the uniform branch
    let out = PolicyOutput {
        logits: [40.0, 0.0, 0.0, 0.0],
        value: 0.0,
    };
    let n = 10_000;
    for (beta, seed) in [(0.2, 91), (0.5, 92)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let off = (0..n)
            .filter(|_| sample_action(&out, beta, &mut rng).unwrap().0.index() != 0)
            .count() as f64;
        // non-greedy draws happen on the uniform branch with prob 3/4
        let p = beta * 0.75;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((off - n as f64 * p).abs() <= 3.0 * sigma, "beta {beta}: {off}");
    }
}

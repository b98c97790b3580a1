use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbc_core::camera::{Action, Intrinsics, Pose, EYE_HEIGHT};
use rbc_core::image::Image;
use rbc_core::splatmem::*;
use rbc_core::worldsim::{Env, EnvConfig, Frame, Scene, SceneParams, TaskState};
use rbc_grad::{check_gradients, GradCheckConfig, Gradients, Objective, ParamStore, Scalar, Tensor};

fn frame_from(scene: &Scene, pose: Pose, intr: &Intrinsics) -> Frame {
    let view = rbc_core::worldsim::render(scene, &pose, intr).unwrap();
    Frame {
        rgb: view.rgb,
        depth: view.depth,
        pose,
        prev_action: Action::Pause,
        collided: false,
        step: 0,
    }
}

fn room() -> Scene {
    let mut rows = vec!["##########".to_string()];
    rows.extend((0..8).map(|_| "#........#".to_string()));
    rows.push("##########".into());
    Scene::from_ascii(&rows.join("\n"), 2).unwrap()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, intr: Intrinsics) -> SplatCloud {
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    for _ in 0..n {
        c.push(
            [
                rng.random_range(1.0..4.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.25..2.25),
            ],
            rng.random_range(0.05..0.3),
            [rng.random(), rng.random(), rng.random()],
            rng.random_range(0.1..0.9),
            0,
        );
    }
    c
}

#[test]
fn empty_cloud_renders_background() {
    let c = SplatCloud::new(SplatConfig::default(), Intrinsics::new(16, 16));
    let r = c.render_view(&Pose::new(0.0, 0.0, 0));
    assert!(r.rgb.data.iter().all(|&v| v == 0.5));
    assert!(r.transmittance.data.iter().all(|&t| t == 1.0));
}

#[test]
fn single_opaque_primitive_shows_its_color() {
    let intr = Intrinsics::new(65, 65);
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    c.push([2.0, 0.0, EYE_HEIGHT as f32], 0.05, [0.2, 0.7, 0.1], 1.0, 0);
    let r = c.render_view(&Pose::new(0.0, 0.0, 0));
    assert_eq!(r.rgb.pixel(32, 32), &[0.2, 0.7, 0.1]);
    assert_eq!(r.transmittance.pixel(32, 32)[0], 0.0);
}

#[test]
fn stacked_primitives_blend_by_transmittance() {
    let intr = Intrinsics::new(65, 65);
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    let (a, b) = ([0.8f32, 0.2, 0.4], [0.1f32, 0.6, 0.9]);
    c.push([3.0, 0.0, EYE_HEIGHT as f32], 0.05, b, 1.0, 0);
    c.push([2.0, 0.0, EYE_HEIGHT as f32], 0.05, a, 0.5, 0);
    let r = c.render_view(&Pose::new(0.0, 0.0, 0));
    for ch in 0..3 {
        let expect = 0.5 * a[ch] + 0.5 * b[ch];
        assert!((r.rgb.pixel(32, 32)[ch] - expect).abs() < 1e-7);
    }
}

#[test]
fn ungated_stride_one_inserts_one_primitive_per_pixel() {
    let scene = room();
    let intr = Intrinsics::new(64, 64);
    let cfg = SplatConfig {
        insert_stride: 1,
        gate: false,
        ..SplatConfig::default()
    };
    let mut c = SplatCloud::new(cfg, intr);
    let stats = c.insert_frame(&frame_from(&scene, Pose::new(2.5, 4.5, 0), &intr), None);
    assert_eq!(stats.added, 4096);
    assert_eq!(c.len(), 4096);
    assert!(c.opacities().iter().all(|&o| o == 0.9));
}

#[test]
fn non_finite_depth_is_skipped_and_counted() {
    let scene = room();
    let intr = Intrinsics::new(16, 16);
    let mut f = frame_from(&scene, Pose::new(2.5, 4.5, 0), &intr);
    f.depth.data[0] = f32::NAN;
    f.depth.data[17] = f32::INFINITY;
    let cfg = SplatConfig {
        insert_stride: 1,
        gate: false,
        ..SplatConfig::default()
    };
    let mut c = SplatCloud::new(cfg, intr);
    let stats = c.insert_frame(&f, None);
    assert_eq!(stats.skipped_nonfinite, 2);
    assert_eq!(stats.added, 254);
}

#[test]
fn memory_window_evicts_oldest_frame_and_its_primitives() {
    let scene = room();
    let intr = Intrinsics::new(16, 16);
    let cfg = SplatConfig {
        memory_window: Some(64),
        gate: false,
        ..SplatConfig::default()
    };
    let mut c = SplatCloud::new(cfg, intr);
    let mut pose = Pose::new(2.5, 4.5, 0);
    for k in 0..65 {
        pose = pose.turned(1);
        let stats = c.insert_frame(&frame_from(&scene, pose, &intr), None);
        if k < 64 {
            assert_eq!(stats.evicted_frames, 0);
        } else {
            assert_eq!(stats.evicted_frames, 1);
            assert_eq!(stats.evicted_primitives, 64);
        }
    }
    assert_eq!(c.stored_frames(), (1..65).collect::<Vec<u64>>());
    assert!(c.sources().iter().all(|&s| s != 0));
}

#[test]
fn prune_filters_by_opacity() {
    let intr = Intrinsics::new(8, 8);
    let mut c = SplatCloud::new(SplatConfig::default(), intr);
    c.push([1.0, 0.0, 1.0], 0.1, [0.5; 3], 0.01, 0);
    c.push([1.0, 0.0, 1.0], 0.1, [0.5; 3], 0.5, 0);
    let mut keep_all = c.clone();
    assert_eq!(keep_all.prune(0.0), 0);
    assert_eq!(c.prune(0.05), 1);
    assert_eq!(c.opacities(), &[0.5]);
    assert_eq!(c.prune(0.9), 1);
    assert!(c.is_empty());
}

#[test]
fn refine_requires_stored_frames() {
    let mut c = SplatCloud::new(SplatConfig::default(), Intrinsics::new(8, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(c.refine(10, &mut rng).is_err());
}

/// Footprints wide enough that one stride-2 view covers every pixel. The
/// default cap keeps primitives small for multi-view persistence, which
/// leaves a single view with holes that frozen geometry cannot close.
fn covering_config() -> SplatConfig {
    SplatConfig {
        scale_factor: 0.6,
        max_scale: f64::INFINITY,
        ..Default::default()
    }
}

#[test]
fn refining_one_view_reduces_its_loss() {
    let scene = room();
    let intr = Intrinsics::new(32, 32);
    let f = frame_from(&scene, Pose::new(3.3, 4.1, 2), &intr);
    let mut c = SplatCloud::new(covering_config(), intr);
    c.insert_frame(&f, None);
    // perturb colors so there is something to fit
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for v in c.colors_mut() {
        *v = (*v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut losses = vec![c.view_loss(&f.pose, &f.rgb)];
    for _ in 0..50 {
        c.refine(1, &mut rng).unwrap();
        losses.push(c.view_loss(&f.pose, &f.rgb));
    }
    let increases = losses.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-3)).count();
    assert!(increases <= 2, "{losses:?}");
    assert!(losses[50] < 0.5 * losses[0], "{} -> {}", losses[0], losses[50]);
}

#[test]
fn reinserting_a_refined_view_adds_almost_nothing() {
    let scene = room();
    let intr = Intrinsics::new(64, 64);
    let f = frame_from(&scene, Pose::new(2.4, 3.6, 1), &intr);
    let mut c = SplatCloud::new(covering_config(), intr);
    let first = c.insert_frame(&f, None);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..30 {
        c.refine(1, &mut rng).unwrap();
    }
    let again = c.insert_frame(&f, None);
    assert!(first.added == 1024);
    assert!(again.added * 50 < first.added, "{} new primitives", again.added);
}

#[test]
fn snapshot_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let intr = Intrinsics::new(16, 16);
    let c = random_cloud(&mut rng, 17, intr);
    let mut buf = Vec::new();
    c.write_snapshot(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"RBCG");
    assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 17);
    assert_eq!(buf.len(), 8 + 17 * 32);
    let back = SplatCloud::read_snapshot(&mut buf.as_slice(), SplatConfig::default(), intr).unwrap();
    assert_eq!(back.means(), c.means());
    assert_eq!(back.colors(), c.colors());
    assert_eq!(back.opacities(), c.opacities());
    buf[0] = b'X';
    assert!(SplatCloud::read_snapshot(&mut buf.as_slice(), SplatConfig::default(), intr).is_err());
}

/// Reconstruction MSE of one view as a function of colors and opacities.
struct ViewLoss {
    view: SplatView,
    target: Vec<f64>,
}

impl Objective for ViewLoss {
    fn evaluate<S: Scalar>(&self, params: &ParamStore<S>, with_grad: bool) -> rbc_grad::Result<(f64, Option<Gradients<S>>)> {
        let cid = params.id("colors")?;
        let oid = params.id("opacities")?;
        let target: Vec<S> = self.target.iter().map(|&v| S::from_f64(v)).collect();
        let (loss, gc, go) = self
            .view
            .mse_backward(params.get(cid).data(), params.get(oid).data(), &target);
        let grads = with_grad.then(|| {
            let mut g = Gradients::zeros_like(params);
            g.param_mut(cid).copy_from_slice(&gc);
            g.param_mut(oid).copy_from_slice(&go);
            g
        });
        Ok((loss.as_f64(), grads))
    }
}

fn compositing_gradcheck<S: Scalar>(tol: f64) {
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
        let report = check_gradients::<S, _>(&ViewLoss { view, target }, &store, cfg).unwrap();
        assert!(
            report.max_rel_error <= tol,
            "seed {seed} {}: {report:?}",
            S::NAME
        );
    }
}

#[test]
fn compositing_gradients_match_finite_differences() {
    compositing_gradcheck::<f32>(1e-3);
    compositing_gradcheck::<f64>(1e-4);
}

#[test]
fn mse_backward_loss_matches_forward_render() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let intr = Intrinsics::new(16, 16);
    let c = random_cloud(&mut rng, 40, intr);
    let pose = Pose::new(0.0, 0.0, 0);
    let target = Image::filled(16, 16, 3, 0.3);
    let (loss, _, _) = c.view(&pose).mse_backward::<f64>(
        &c.colors().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        &c.opacities().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        &vec![0.3f64; 16 * 16 * 3],
    );
    assert!((loss - c.view_loss(&pose, &target)).abs() < 1e-6);
}

#[test]
fn refit_through_curiosity_episode_keeps_opacities_valid() {
    let scene = Arc::new(Scene::generate(1, 10, 10, &SceneParams::default()).unwrap());
    let mut env = Env::new(scene, EnvConfig {
        width: 32,
        height: 32,
        ..EnvConfig::default()
    });
    let f = env.reset(3, rbc_core::worldsim::TaskMode::Explore).unwrap();
    let mut c = SplatCloud::new(SplatConfig::default(), *env.intrinsics());
    c.insert_frame(&f, None);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..40 {
        let a = Action::from_index(t % 3).unwrap();
        let out = env.step(a).unwrap();
        c.insert_frame(&out.frame, None);
        if t % 16 == 15 {
            c.refine(10, &mut rng).unwrap();
            c.prune(0.01);
        }
    }
    assert!(c.opacities().iter().all(|&o| (0.01..=1.0).contains(&o)));
    assert!(c.colors().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let _ = TaskState::explore();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn compositing_weights_are_a_partition(seed in 0u64..10_000, heading in 0u8..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let intr = Intrinsics::new(16, 16);
        let c = random_cloud(&mut rng, 30, intr);
        let view = c.view(&Pose::new(0.0, 0.0, heading % 3));
        for row in 0..16 {
            for col in 0..16 {
                let (trail, t_end) = view.trace(c.opacities(), row, col);
                let mut sum = 0.0;
                let mut last_t = 1.0;
                for k in &trail {
                    prop_assert!(k.weight >= 0.0);
                    prop_assert!(k.transmittance <= last_t);
                    last_t = k.transmittance;
                    sum += k.weight;
                }
                prop_assert!(t_end <= last_t && t_end >= 0.0);
                prop_assert!(sum <= 1.0 + 1e-12);
                prop_assert!((sum + t_end - 1.0).abs() < 1e-9);
            }
        }
    }
}

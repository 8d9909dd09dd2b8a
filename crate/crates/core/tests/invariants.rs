mod common;

use proptest::prelude::*;
use splatlab_core::codec::{self, QuantizationSpec};
use splatlab_core::experiment::{self, ExperimentPlan, SceneSpec};
use splatlab_core::model::SplatCloud;
use splatlab_core::render::{self, RenderSettings};
use splatlab_core::schedules::{self, RW_LEVELS};
use splatlab_core::sphharm::{self, ShCoefficients};
use splatlab_core::train::{self, PerturbSpec, TrainConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendered_pixels_stay_in_unit_range_and_repeat(seed in any::<u64>()) {
        let case = common::random_case(seed);
        let settings = RenderSettings::for_cloud(&case.cloud);
        let a = render::render_with(&case.cloud, &case.view, &settings).unwrap();
        let b = render::render_with(&case.cloud, &case.view, &settings).unwrap();
        prop_assert!(a.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a.image.data, b.image.data);
    }

    #[test]
    fn sh_color_is_clamped(
        coeffs in prop::collection::vec(-3.0f64..3.0, 48),
        theta in 0.0f64..std::f64::consts::PI,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let sh = ShCoefficients::from_vec(3, 3, coeffs).unwrap();
        for c in sphharm::sh_color(&sh, theta, phi) {
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn basis_has_antipodal_parity(theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..std::f64::consts::PI) {
        let here = sphharm::sh_basis(3, theta, phi).unwrap();
        let there = sphharm::sh_basis(3, std::f64::consts::PI - theta, phi + std::f64::consts::PI).unwrap();
        for l in 0..=3usize {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            for i in l * l..(l + 1) * (l + 1) {
                prop_assert!((there[i] - sign * here[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rect_wave_only_emits_levels(x in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let breaks = [a.min(b), a.max(b)];
        let v = schedules::rect_wave(x, RW_LEVELS, breaks).unwrap();
        prop_assert!(RW_LEVELS.contains(&v));
    }

    #[test]
    fn interpolated_rates_stay_between_endpoints(
        p1 in 1e-9f64..1.0, p2 in 1e-9f64..1.0, span in 1.0f64..1e4, frac in 0.0f64..=1.0,
    ) {
        let t = frac * span;
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        for v in [
            schedules::linear_lr(t, (0.0, p1), (span, p2)).unwrap(),
            schedules::exp_lr(t, (0.0, p1), (span, p2)).unwrap(),
        ] {
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exponential_rate_is_log_linear(p1 in 1e-9f64..1.0, p2 in 1e-9f64..1.0, t1 in 0.0f64..100.0, span in 1.0f64..3e4) {
        let t2 = t1 + span;
        for i in 0..=50 {
            let t = t1 + span * (i as f64 / 50.0);
            let affine = p1.ln() + (t - t1) / span * (p2.ln() - p1.ln());
            let got = schedules::exp_lr(t, (t1, p1), (t2, p2)).unwrap().ln();
            prop_assert!((got - affine).abs() <= 1e-10, "t {}: {} vs {}", t, got, affine);
        }
    }

    // Idempotence needs bounds on the rounding grid; off-grid bounds are
    // fixed points of the clamp but not of the rounding.
    #[test]
    fn quantize_is_idempotent_and_near(v in -5.0f64..5.0, places in 0u32..=6, lo in -3i32..=0, width in 1i32..=4) {
        let spec = QuantizationSpec::new(places, lo as f64, (lo + width) as f64).unwrap();
        let q = codec::quantize(v, &spec);
        prop_assert!(q >= spec.lo && q <= spec.hi);
        prop_assert_eq!(codec::quantize(q, &spec), q);
        if v >= spec.lo && v <= spec.hi {
            prop_assert!((q - v).abs() <= spec.step() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn decimation_keeps_every_gapth_point(n in 0usize..300, gap in 1usize..600) {
        let cloud = SplatCloud::init_synthetic(n, 3, 1.0, 0).unwrap();
        let kept = cloud.decimate(gap).unwrap();
        prop_assert_eq!(kept.len(), n.div_ceil(gap));
        for (i, p) in kept.points.iter().enumerate() {
            prop_assert_eq!(&p.position, &cloud.points[i * gap].position);
        }
    }
}

fn small_scene() -> (SplatCloud, train::Dataset) {
    let spec = SceneSpec {
        points: 30,
        image_size: 24,
        views: 4,
        ..SceneSpec::default()
    };
    let scene = experiment::gen_scene(&spec).unwrap();
    let init = train::perturb(&scene.truth, &PerturbSpec::default(), 5).unwrap();
    (init, scene.dataset())
}

#[test]
fn training_is_deterministic_and_cpu_time_fits_in_wall_time() {
    let (init, data) = small_scene();
    let cfg = TrainConfig {
        iterations: 60,
        ..TrainConfig::default()
    };
    let (a, ma) = train::train(&init, &data, &cfg).unwrap();
    let (b, mb) = train::train(&init, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma.loss_curve, mb.loss_curve);
    assert_eq!((ma.l1, ma.l2, ma.st), (mb.l1, mb.l2, mb.st));
    for m in [&ma, &mb] {
        assert!(m.pt > 0.0 && m.pt <= m.pc, "pt {} pc {}", m.pt, m.pc);
    }
}

#[test]
fn doubling_iterations_roughly_doubles_wall_time() {
    let (init, data) = small_scene();
    let run = |iterations| {
        let cfg = TrainConfig {
            iterations,
            ..TrainConfig::default()
        };
        (0..5)
            .map(|_| train::train(&init, &data, &cfg).unwrap().1.pc)
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = run(400) / run(200);
    assert!((1.3..3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn report_averages_match_the_rows() {
    let plan = ExperimentPlan::from_toml(
        r#"
        [scene]
        points = 20
        image_size = 16
        views = 3
        [sweep]
        axis = "degree"
        values = ["0", "3"]
        repeats = 3
        [train]
        iterations = 20
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    experiment::run_plan(&plan, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 4);
    for value in ["0", "3"] {
        let runs: Vec<_> = rows.iter().filter(|r| r[1] == value && r[2] != "avg").collect();
        let avg = rows.iter().find(|r| r[1] == value && r[2] == "avg").unwrap();
        assert_eq!(runs.len(), 3);
        for col in 4..=10 {
            let mean = runs.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
            let listed: f64 = avg[col].parse().unwrap();
            assert!((mean - listed).abs() <= 1e-5 + 1e-9 * mean.abs(), "col {col}: {mean} vs {listed}");
        }
        for r in &runs {
            assert!(dir.path().join(r[11]).is_file());
            assert!(dir.path().join(r[12]).is_file());
        }
    }
}

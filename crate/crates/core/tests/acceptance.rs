//! Acceptance checks, run sequentially so wall-clock comparisons do not
//! compete with each other. Prints one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlab_core::codec::{self, QuantizationSpec};
use splatlab_core::experiment::{self, ExperimentPlan, SceneSpec};
use splatlab_core::image::Channel;
use splatlab_core::model::{Background, ColorMode, SplatCloud, GEOMETRY_PLACES};
use splatlab_core::schedules::{self, ScheduleSpec, RW_LEVELS};
use splatlab_core::sphharm::{self, basis_len};
use splatlab_core::train::{self, Dataset, PerturbSpec, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("codec roundtrip and length law", codec_roundtrip),
        ("quantization cardinality", quantization_cardinality),
        ("SH orthonormality", sh_orthonormality),
        ("Legendre identities", legendre_identities),
        ("gradient correctness", gradient_correctness),
        ("schedule endpoints", schedule_endpoints),
        ("training sanity", training_sanity),
        ("degree direction", degree_direction),
        ("no-color direction", no_color_direction),
        ("decimation law", decimation_law),
        ("checkpoint roundtrip", checkpoint_roundtrip),
        ("harness determinism", harness_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn codec_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad_int = 0;
    let mut bad_len = 0;
    let mut edge = vec![0u64, 1, 94, 95, 96, 9024, 9025, 857_374, 857_375, (1 << 63) - 1];
    edge.extend((0..1_000_000).map(|_| rng.random_range(0..1u64 << 63)));
    for &n in &edge {
        let s = codec::encode_u(n);
        if codec::decode_u(&s).ok() != Some(n) {
            bad_int += 1;
        }
        // smallest k >= 1 with 95^k > n
        let mut k = 1;
        let mut p: u128 = 95;
        while p <= n as u128 {
            p *= 95;
            k += 1;
        }
        if s.len() != k {
            bad_len += 1;
        }
    }
    let mut bad_float = 0;
    for _ in 0..100_000 {
        let places = rng.random_range(0..=9u32);
        let significand: u64 = rng.random_range(0..1_000_000_000_000);
        let value: f64 = format!("{significand}e-{places}").parse().unwrap();
        let back = codec::encode_f(value, places).and_then(|s| codec::decode_f(&s));
        if back.ok() != Some(value) {
            bad_float += 1;
        }
    }
    outcome(
        bad_int + bad_len + bad_float == 0,
        format!(
            "{} ints ({bad_int} bad, {bad_len} length violations), 100000 decimals ({bad_float} bad)",
            edge.len()
        ),
    )
}

fn quantization_cardinality() -> Outcome {
    let spec = QuantizationSpec::new(1, 0.0, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = (0..=200_000).map(|i| i as f64 * 2.0 / 200_000.0);
    let random = (0..200_000).map(|_| rng.random_range(0.0..=2.0));
    let distinct: BTreeSet<u64> = grid.chain(random).map(|v| codec::quantize(v, &spec).to_bits()).collect();
    outcome(distinct.len() == 21, format!("{} distinct values (want 21)", distinct.len()))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn sh_orthonormality() -> Outcome {
    let n = basis_len(3);
    let mut gram = vec![0.0; n * n];
    let phis = 64;
    for (x, w) in gauss_legendre(32) {
        let theta = x.acos();
        for j in 0..phis {
            let phi = std::f64::consts::TAU * j as f64 / phis as f64;
            let b = sphharm::sh_basis(3, theta, phi).unwrap();
            let wt = w * std::f64::consts::TAU / phis as f64;
            for a in 0..n {
                for c in 0..n {
                    gram[a * n + c] += wt * b[a] * b[c];
                }
            }
        }
    }
    let dev = (0..n * n)
        .map(|k| (gram[k] - if k / n == k % n { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    outcome(dev <= 1e-10, format!("max |G - I| = {dev:.2e} (tol 1e-10)"))
}

fn legendre_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut parity, mut genfn) = (0.0f64, 0.0f64);
    let r = 0.1f64;
    for _ in 0..2000 {
        let x: f64 = rng.random_range(-1.0..=1.0);
        for l in 0..=12 {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let a = sphharm::legendre_p(l, -x).unwrap();
            let b = sphharm::legendre_p(l, x).unwrap();
            parity = parity.max((a - sign * b).abs());
            for m in 0..=l.min(3) {
                let s = if (l + m) % 2 == 0 { 1.0 } else { -1.0 };
                let a = sphharm::assoc_legendre(l, m, -x).unwrap();
                let b = sphharm::assoc_legendre(l, m, x).unwrap();
                parity = parity.max((a - s * b).abs());
            }
        }
        let series: f64 = (0..=12).map(|l| sphharm::legendre_p(l, x).unwrap() * r.powi(l as i32)).sum();
        let closed = 1.0 / (1.0 - 2.0 * x * r + r * r).sqrt();
        genfn = genfn.max((series - closed).abs());
    }
    outcome(
        parity <= 1e-12 && genfn <= 1e-9,
        format!("2000 x: parity dev {parity:.2e} (tol 1e-12), generating fn dev {genfn:.2e} (tol 1e-9)"),
    )
}

fn gradient_correctness() -> Outcome {
    let mut worst = [0.0f64; 5];
    let mut checked = 0;
    let mut skipped = 0;
    for seed in 0..20 {
        let case = common::random_case(1000 + seed);
        for (g, r) in common::check_case(&case).iter().enumerate() {
            worst[g] = worst[g].max(r.worst);
            checked += r.checked;
            skipped += r.discontinuous;
        }
    }
    let detail = common::GROUPS
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        worst.iter().all(|&w| w < 1e-4) && skipped * 100 <= checked,
        format!("20 scenes, {checked} partials, {skipped} at cutoff edges; worst rel err {detail} (tol 1e-4)"),
    )
}

fn schedule_endpoints() -> Outcome {
    let mut failures = Vec::new();
    for breaks in [[0.2, 1.0], [0.2, 0.4], [0.3, 0.6]] {
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let want = if x <= breaks[0] {
                RW_LEVELS[0]
            } else if x <= breaks[1] {
                RW_LEVELS[1]
            } else {
                RW_LEVELS[2]
            };
            if schedules::rect_wave(x, RW_LEVELS, breaks).unwrap() != want {
                failures.push(format!("rect_wave({x}, {breaks:?})"));
            }
        }
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut end_dev = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let t1 = rng.random_range(0.0..500.0);
        let t2 = t1 + rng.random_range(1.0..5000.0);
        let p1 = 10f64.powf(rng.random_range(-9.0..0.0));
        let p2 = 10f64.powf(rng.random_range(-9.0..0.0));
        end_dev = end_dev
            .max(rel(schedules::linear_lr(t1, (t1, p1), (t2, p2)).unwrap(), p1))
            .max(rel(schedules::linear_lr(t2, (t1, p1), (t2, p2)).unwrap(), p2))
            .max(rel(schedules::exp_lr(t1, (t1, p1), (t2, p2)).unwrap(), p1))
            .max(rel(schedules::exp_lr(t2, (t1, p1), (t2, p2)).unwrap(), p2));
    }
    for spec in ["linear:1e-3,1e-6", "exp:1.6e-4,1.6e-6"] {
        let s = ScheduleSpec::parse(spec, 1.0).unwrap();
        let (a, b) = match &s {
            ScheduleSpec::Linear { start_rate, end_rate, .. } | ScheduleSpec::Exponential { start_rate, end_rate, .. } => {
                (*start_rate, *end_rate)
            }
            _ => unreachable!(),
        };
        end_dev = end_dev
            .max(rel(s.eval(1, 30_000).unwrap(), a))
            .max(rel(s.eval(30_000, 30_000).unwrap(), b));
    }
    let mut band_violations = 0;
    for (a, b) in [(0.4, 1.0), (2.0, 3.0), (1.0, 0.5), (0.0, 2.0)] {
        for i in 0..10_000 {
            let t = 500.0 * i as f64 / 9_999.0;
            for m in [schedules::sine_mod(t, 500.0, a, b).unwrap(), schedules::cosine_mod(t, 500.0, a, b).unwrap()] {
                if m < 1.0 - a / 2.0 || m > 1.0 + a / 2.0 {
                    band_violations += 1;
                }
            }
        }
    }
    outcome(
        failures.is_empty() && end_dev <= 1e-12 && band_violations == 0,
        format!(
            "rect_wave mismatches {}, endpoint rel dev {end_dev:.1e} (tol 1e-12), modulation band violations {band_violations}",
            failures.len()
        ),
    )
}

fn default_scene(points: usize) -> (SplatCloud, Dataset) {
    let spec = SceneSpec {
        points,
        ..SceneSpec::default()
    };
    let scene = experiment::gen_scene(&spec).unwrap();
    let init = train::perturb(&scene.truth, &PerturbSpec::default(), 11).unwrap();
    (init, scene.dataset())
}

fn training_sanity() -> Outcome {
    let (init, data) = default_scene(200);
    let cfg = TrainConfig {
        iterations: 500,
        ..TrainConfig::default()
    };
    let (l_before, p_before) = train::evaluate(&init, &data.train, 3, cfg.background.resolve(0)).unwrap();
    let (_, m) = train::train(&init, &data, &cfg).unwrap();
    let drop = 1.0 - m.l2 / l_before;

    let mut frozen = cfg.clone();
    frozen.rates.feature = ScheduleSpec::constant(0.0);
    let (out, _) = train::train(&init, &data, &frozen).unwrap();
    let same_sh = init
        .points
        .iter()
        .zip(&out.points)
        .all(|(a, b)| {
            let (a, b) = (a.sh.as_ref().unwrap().as_slice(), b.sh.as_ref().unwrap().as_slice());
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let moved = init.points.iter().zip(&out.points).any(|(a, b)| a.position != b.position);
    outcome(
        drop >= 0.5 && m.p2 > p_before && same_sh && moved && out.len() == init.len(),
        format!(
            "train L1 {l_before:.5} -> {:.5} ({:.1}% drop, need 50%), PSNR {p_before:.2} -> {:.2} dB; feature_lr=0 SH bit-identical: {same_sh}",
            m.l2,
            100.0 * drop,
            m.p2
        ),
    )
}

/// Per-iteration wall time of each config, as the minimum over interleaved
/// rounds.
fn per_iteration_wall(init: &SplatCloud, data: &Dataset, cfgs: &[TrainConfig], rounds: usize) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; cfgs.len()];
    for _ in 0..rounds {
        for (b, cfg) in best.iter_mut().zip(cfgs) {
            let (_, m) = train::train(init, data, cfg).unwrap();
            *b = b.min(m.pc / m.st as f64);
        }
    }
    best
}

fn degree_direction() -> Outcome {
    let (init, data) = default_scene(200);
    let cfg = |d| TrainConfig {
        iterations: 100,
        max_degree: d,
        ..TrainConfig::default()
    };
    let (_, m0) = train::train(&init, &data, &cfg(0)).unwrap();
    let (_, m3) = train::train(&init, &data, &cfg(3)).unwrap();
    let exact = m0.work.sh_mults * 16 == m3.work.sh_mults && m0.work.sh_grad_mults * 16 == m3.work.sh_grad_mults;
    let t = per_iteration_wall(&init, &data, &[cfg(0), cfg(3)], 15);
    outcome(
        exact && m0.work.sh_mults > 0 && t[0] < t[1],
        format!(
            "SH mults/iter {} vs {} (ratio 1/{}), wall/iter {:.3} ms vs {:.3} ms",
            m0.work.sh_mults / 100,
            m3.work.sh_mults / 100,
            m3.work.sh_mults as f64 / m0.work.sh_mults as f64,
            t[0] * 1e3,
            t[1] * 1e3
        ),
    )
}

fn no_color_direction() -> Outcome {
    let (init, data) = default_scene(200);
    let full = TrainConfig {
        iterations: 100,
        ..TrainConfig::default()
    };
    let geo = TrainConfig {
        color_mode: ColorMode::GeometryOnly,
        ..full.clone()
    };
    let (geo_cloud, mg) = train::train(&init, &data, &geo).unwrap();
    let sh_work = mg.work.sh_mults + mg.work.sh_grad_mults + mg.work.sh_basis_terms;
    let t = per_iteration_wall(&init, &data, &[geo.clone(), full.clone()], 9);

    let bg = full.background.resolve(0);
    let (gray_l1, _) = train::evaluate(&geo_cloud, &data.train, 0, bg).unwrap();
    let fit_cfg = TrainConfig {
        iterations: 300,
        ..full
    };
    let colors = train::fit_colors_post(&geo_cloud, &data, &fit_cfg).unwrap();
    let colored = geo_cloud.attach_color(colors).unwrap();
    let (fit_l1, _) = train::evaluate(&colored, &data.train, 3, bg).unwrap();
    outcome(
        sh_work == 0 && t[0] < t[1] && fit_l1 < gray_l1,
        format!(
            "geometry_only SH work {sh_work}, wall/iter {:.3} ms vs full {:.3} ms ({:.2}x); add-back L1 {fit_l1:.5} vs mid-gray {gray_l1:.5}",
            t[0] * 1e3,
            t[1] * 1e3,
            t[1] / t[0]
        ),
    )
}

fn decimation_law() -> Outcome {
    let (init, data) = default_scene(500);
    let gaps = [2usize, 4, 8, 20, 50, 500];
    let sizes: Vec<usize> = gaps.iter().map(|&g| init.decimate(g).unwrap().len()).collect();
    let sizes_ok = gaps.iter().zip(&sizes).all(|(&g, &s)| s == 500usize.div_ceil(g));
    let cfgs: Vec<TrainConfig> = gaps
        .iter()
        .map(|&gap| TrainConfig {
            iterations: 100,
            gap,
            ..TrainConfig::default()
        })
        .collect();
    let t = per_iteration_wall(&init, &data, &cfgs, 9);
    let monotone = t.windows(2).all(|w| w[1] <= w[0]);
    let times = t.iter().map(|v| format!("{:.3}", v * 1e3)).collect::<Vec<_>>().join(", ");
    outcome(
        sizes_ok && monotone,
        format!("sizes {sizes:?}, wall/iter ms [{times}]"),
    )
}

fn checkpoint_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_geo = 0.0f64;
    let mut worst_sh_steps = 0.0f64;
    let mut mismatches = Vec::new();
    let mut kinds = BTreeSet::new();
    for i in 0..100u64 {
        let n = if i == 0 { 0 } else { rng.random_range(0..40) };
        let degree = rng.random_range(0..=3);
        let mut cloud = SplatCloud::init_synthetic(n, i, rng.random_range(0.1..20.0), degree).unwrap();
        cloud = match i % 4 {
            0 => cloud.strip_color(),
            1 => cloud.to_single_channel(Channel::Gray).unwrap(),
            _ => cloud,
        };
        cloud.background = if rng.random_bool(0.3) {
            Background::Random { seed: rng.random() }
        } else {
            Background::Solid([0; 3].map(|_| rng.random_range(0.0..=1.0)))
        };
        kinds.insert(cloud.color_mode.name());
        let places = rng.random_range(1..=6u32);
        let back = SplatCloud::from_checkpoint(&cloud.to_checkpoint(places).unwrap()).unwrap();
        if back.len() != cloud.len() || back.color_mode != cloud.color_mode || back.sh_degree() != cloud.sh_degree() {
            mismatches.push(format!("cloud {i}: shape"));
            continue;
        }
        let geo_step = 10f64.powi(-(GEOMETRY_PLACES as i32));
        match (cloud.background, back.background) {
            (Background::Random { seed: a }, Background::Random { seed: b }) if a == b => {}
            (Background::Solid(a), Background::Solid(b)) => {
                for k in 0..3 {
                    worst_geo = worst_geo.max((a[k] - b[k]).abs() / geo_step);
                }
            }
            _ => mismatches.push(format!("cloud {i}: background")),
        }
        let sh_step = 10f64.powi(-(places as i32));
        for (p, q) in cloud.points.iter().zip(&back.points) {
            let geo = p
                .position
                .iter()
                .zip(&q.position)
                .chain(p.scale.iter().zip(&q.scale))
                .chain(p.rotation.iter().zip(&q.rotation))
                .chain(std::iter::once((&p.opacity, &q.opacity)));
            for (a, b) in geo {
                worst_geo = worst_geo.max((a - b).abs() / geo_step);
            }
            match (&p.sh, &q.sh) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                        worst_sh_steps = worst_sh_steps.max((x - y).abs() / sh_step);
                    }
                }
                (None, None) => {}
                _ => mismatches.push(format!("cloud {i}: sh presence")),
            }
        }
    }
    outcome(
        mismatches.is_empty() && worst_geo <= 1.0 && worst_sh_steps <= 1.0 && kinds.len() >= 3,
        format!(
            "100 clouds ({} modes, incl. empty): worst error {worst_geo:.3} geometry steps, {worst_sh_steps:.3} SH steps; {} mismatches",
            kinds.len(),
            mismatches.len()
        ),
    )
}

fn harness_determinism() -> Outcome {
    let plan = ExperimentPlan::from_toml(
        r#"
        [scene]
        points = 40
        image_size = 24
        views = 4
        [sweep]
        axis = "background"
        values = ["white", "random", "0.4"]
        repeats = 3
        [train]
        iterations = 40
        "#,
    )
    .unwrap();
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                cols.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != 8 && *i != 9)
                    .map(|(_, c)| *c)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let csvs: Vec<String> = dirs
        .iter()
        .map(|d| {
            experiment::run_plan(&plan, d.path()).unwrap();
            std::fs::read_to_string(d.path().join("report.csv")).unwrap()
        })
        .collect();
    let same = strip(&csvs[0]) == strip(&csvs[1]);
    let rows = csvs[0].lines().count() - 1;
    let header_ok = csvs[0].starts_with("sweep_axis,value,repeat,seed,l1,l2,p1,p2,pt,pc,st");
    let mut artifacts_ok = true;
    for line in csvs[0].lines().skip(1).filter(|l| !l.contains(",avg,")) {
        let cols: Vec<&str> = line.split(',').collect();
        for f in &cols[11..13] {
            artifacts_ok &= dirs[0].path().join(f).is_file();
        }
        let curve = std::fs::read_to_string(dirs[0].path().join(cols[11])).unwrap();
        let curve2 = std::fs::read_to_string(dirs[1].path().join(cols[11])).unwrap();
        artifacts_ok &= curve == curve2 && curve.lines().count() == 32;
    }
    outcome(
        same && rows == 12 && header_ok && artifacts_ok,
        format!("{rows} rows, CSVs identical apart from pt/pc: {same}; artifacts present and identical: {artifacts_ok}"),
    )
}

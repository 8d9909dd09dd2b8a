//! Central-difference gradient oracle shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlab_core::image::{Channel, ImageBuffer};
use splatlab_core::model::{Background, SplatCloud};
use splatlab_core::render::{self, GradientSet, LossKind, RenderSettings, View};

pub struct Case {
    pub cloud: SplatCloud,
    pub view: View,
    pub target: ImageBuffer,
    pub kind: LossKind,
}

/// Up to 20 overlapping points seen on a 32x32 image, with random
/// higher-order color terms, color mode, background and loss.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=20);
    let degree = rng.random_range(0..=3);
    let mut cloud = SplatCloud::init_synthetic(n, seed ^ 0x5eed, 0.6, degree).unwrap();
    for p in &mut cloud.points {
        if let Some(sh) = p.sh.as_mut() {
            let per = sh.per_channel();
            for c in 0..sh.channels() {
                for k in 1..per {
                    sh.channel_mut(c)[k] = rng.random_range(-0.15..0.15);
                }
            }
        }
    }
    cloud = match rng.random_range(0..6) {
        0 => cloud.strip_color(),
        1 => cloud.to_single_channel(Channel::Gray).unwrap(),
        2 => cloud.to_single_channel(Channel::G).unwrap(),
        _ => cloud,
    };
    cloud.background = Background::Solid([0; 3].map(|_| rng.random_range(0.0..1.0)));
    let theta = rng.random_range(0.2..3.0);
    let phi = rng.random_range(0.0..6.2);
    let view = View::new(theta, phi, 32, 32, 0.05).unwrap();
    let channels = cloud.color_mode.image_channels();
    let target = ImageBuffer {
        height: 32,
        width: 32,
        channels,
        data: (0..32 * 32 * channels).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    let kind = if rng.random_bool(0.5) { LossKind::L1 } else { LossKind::Mse };
    Case {
        cloud,
        view,
        target,
        kind,
    }
}

pub const GROUPS: [&str; 5] = ["position", "scale", "rotation", "opacity", "sh"];

/// Worst relative error seen in one parameter group.
#[derive(Debug, Clone, Default)]
pub struct GroupReport {
    pub checked: usize,
    /// Stencils that straddled a footprint edge at every step tried.
    pub discontinuous: usize,
    pub worst: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps entries that are zero up
/// to rounding from dominating.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-8;
const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Loss plus a signature of the piecewise-smooth region: composited pair
/// count and which pixels sit above their target.
fn eval(cloud: &SplatCloud, case: &Case) -> (f64, (u64, Vec<bool>)) {
    let settings = RenderSettings::for_cloud(cloud);
    let out = render::render_with_gradients_using(cloud, &case.view, &case.target, case.kind, &settings).unwrap();
    let above = out.image.data.iter().zip(&case.target.data).map(|(a, b)| a > b).collect();
    (out.loss, (out.stats.contributions, above))
}

fn param(cloud: &mut SplatCloud, group: usize, point: usize, k: usize) -> Option<&mut f64> {
    let p = &mut cloud.points[point];
    match group {
        0 => p.position.get_mut(k),
        1 => p.scale.get_mut(k),
        2 => p.rotation.get_mut(k),
        3 => (k == 0).then_some(&mut p.opacity),
        _ => p.sh.as_mut().and_then(|s| s.as_mut_slice().get_mut(k)),
    }
}

fn analytic(g: &GradientSet, group: usize, point: usize, k: usize) -> f64 {
    match group {
        0 => g.position[point][k],
        1 => g.scale[point][k],
        2 => g.rotation[point][k],
        3 => g.opacity[point],
        _ => g.sh.as_ref().unwrap()[point][k],
    }
}

/// Compares every analytic partial against a five-point central difference.
/// A stencil that leaves the smooth region (a footprint cutoff or an L1
/// residual sign flips) is retried with a smaller step.
pub fn check_case(case: &Case) -> [GroupReport; 5] {
    let settings = RenderSettings::for_cloud(&case.cloud);
    let grads =
        render::render_with_gradients_using(&case.cloud, &case.view, &case.target, case.kind, &settings)
            .unwrap()
            .grads;
    let (_, base_region) = eval(&case.cloud, case);
    let mut reports: [GroupReport; 5] = Default::default();
    for (group, report) in reports.iter_mut().enumerate() {
        for point in 0..case.cloud.len() {
            for k in 0.. {
                let mut probe = case.cloud.clone();
                let Some(&mut x0) = param(&mut probe, group, point, k) else { break };
                let a = analytic(&grads, group, point, k);
                let mut result = None;
                for h in STEPS {
                    let mut side = |off: f64| {
                        *param(&mut probe, group, point, k).unwrap() = x0 + off;
                        eval(&probe, case)
                    };
                    let stencil = [side(2.0 * h), side(h), side(-h), side(-2.0 * h)];
                    if stencil.iter().all(|s| s.1 == base_region) {
                        let [p2, p1, m1, m2] = [0, 1, 2, 3].map(|i| stencil[i].0);
                        result = Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
                        break;
                    }
                }
                match result {
                    Some(n) => {
                        report.checked += 1;
                        report.worst = report.worst.max(rel_err(a, n, REL_FLOOR));
                    }
                    None => report.discontinuous += 1,
                }
            }
        }
    }
    reports
}

//! Gradient-descent training loop, densify/prune and post-hoc color fitting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, ImageError};
use crate::model::{Background, ColorMode, GaussianPoint, ModelError, SplatCloud};
use crate::render::{self, GradientSet, LossKind, RenderError, RenderSettings, RenderStats, View};
use crate::schedules::{GroupRates, RateGroupConfig, ScheduleError};
use crate::sphharm::{ShCoefficients, ShError, MAX_DEGREE};

/// Number of loss samples recorded per run.
pub const CURVE_SAMPLES: usize = 31;

/// Scales are kept at or above this after every step.
pub const MIN_SCALE: f64 = 1e-4;

/// Divisor applied to the scale of both halves of a split point.
pub const SPLIT_DIVISOR: f64 = 1.6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Sh(#[from] ShError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Train and test views with their target images (always RGB).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<(View, ImageBuffer)>,
    pub test: Vec<(View, ImageBuffer)>,
}

impl Dataset {
    /// Puts every `test_every`-th view (starting with the last) in the test split.
    pub fn split(views: Vec<(View, ImageBuffer)>, test_count: usize) -> Self {
        let n = views.len();
        let cut = n.saturating_sub(test_count);
        let mut train = views;
        let test = train.split_off(cut);
        Self { train, test }
    }

    fn map_targets(&self, f: impl Fn(&ImageBuffer) -> std::result::Result<ImageBuffer, ImageError>) -> Result<Self> {
        let conv = |set: &[(View, ImageBuffer)]| -> Result<Vec<(View, ImageBuffer)>> {
            set.iter().map(|(v, img)| Ok((*v, f(img)?))).collect()
        };
        Ok(Self {
            train: conv(&self.train)?,
            test: conv(&self.test)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub enabled: bool,
    pub interval: u64,
    /// Mean position-gradient norm above which a point is densified.
    pub clone_grad_threshold: f64,
    pub prune_opacity_threshold: f64,
    pub split_enabled: bool,
    /// Points whose largest scale exceeds this count as large.
    pub split_scale_threshold: f64,
    pub max_points: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            interval: 100,
            clone_grad_threshold: 2e-4,
            prune_opacity_threshold: 0.005,
            split_enabled: false,
            split_scale_threshold: 0.08,
            max_points: 2000,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(TrainError::Config("densify interval must be >= 1".into()));
        }
        for (name, v) in [
            ("clone_grad_threshold", self.clone_grad_threshold),
            ("prune_opacity_threshold", self.prune_opacity_threshold),
            ("split_scale_threshold", self.split_scale_threshold),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub rates: RateGroupConfig,
    pub background: Background,
    pub max_degree: usize,
    pub color_mode: ColorMode,
    pub gap: usize,
    pub densify: DensifyConfig,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            rates: RateGroupConfig::default(),
            background: Background::WHITE,
            max_degree: MAX_DEGREE,
            color_mode: ColorMode::Full,
            gap: 1,
            densify: DensifyConfig::default(),
            loss_kind: LossKind::L1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(TrainError::Config("iterations must be >= 1".into()));
        }
        if self.max_degree > MAX_DEGREE {
            return Err(ShError::Degree(self.max_degree).into());
        }
        if self.gap == 0 {
            return Err(TrainError::Config("sampling gap must be >= 1".into()));
        }
        if let Background::Solid(rgb) = self.background {
            Background::solid(rgb)?;
        }
        self.rates.validate()?;
        self.densify.validate()
    }
}

/// Summary of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Final mean L1 over test views.
    pub l1: f64,
    /// Final mean L1 over train views.
    pub l2: f64,
    /// Test PSNR in dB, infinite for an exact match.
    pub p1: f64,
    pub p2: f64,
    /// Thread CPU seconds spent in the loop.
    pub pt: f64,
    /// Wall seconds spent in the loop.
    pub pc: f64,
    pub st: u64,
    pub loss_curve: Vec<f64>,
    pub points: usize,
    /// Summed renderer counters over all iterations.
    pub work: RenderStats,
}

/// CPU and wall clocks started together; the CPU interval is nested inside
/// the wall interval.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    wall: Instant,
    cpu: f64,
}

impl Stopwatch {
    pub fn start() -> Self {
        let wall = Instant::now();
        Self { wall, cpu: thread_cpu_seconds() }
    }

    /// `(cpu seconds, wall seconds)` since start.
    pub fn elapsed(&self) -> (f64, f64) {
        let cpu = thread_cpu_seconds() - self.cpu;
        let wall = self.wall.elapsed().as_secs_f64();
        (cpu, wall)
    }
}

/// Current readings of the calling thread's CPU clock and a monotonic wall
/// clock, both in seconds.
pub fn timers() -> (f64, f64) {
    static EPOCH: std::sync::OnceLock<Instant> = std::sync::OnceLock::new();
    let epoch = *EPOCH.get_or_init(Instant::now);
    (thread_cpu_seconds(), epoch.elapsed().as_secs_f64())
}

fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "thread CPU clock unavailable");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Iterations at which the loss curve is sampled: `1 + floor(k (st-1) / 30)`.
pub fn curve_iterations(st: u64) -> Vec<u64> {
    let last = (CURVE_SAMPLES - 1) as u64;
    (0..=last).map(|k| 1 + k * (st - 1) / last).collect()
}

/// Accumulated position-gradient statistics since the last densify pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStats {
    pub grad_sum: Vec<[f64; 3]>,
    pub norm_sum: Vec<f64>,
    pub count: Vec<u64>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![[0.0; 3]; n],
            norm_sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    pub fn add(&mut self, grads: &GradientSet) {
        for (i, g) in grads.position.iter().enumerate() {
            for k in 0..3 {
                self.grad_sum[i][k] += g[k];
            }
            self.norm_sum[i] += norm3(*g);
            self.count[i] += 1;
        }
    }

    pub fn mean_norm(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.norm_sum[i] / self.count[i] as f64
        }
    }
}

/// Prunes transparent points, then densifies high-gradient ones: small
/// points (or all of them when splitting is off) gain a copy moved against
/// the gradient, large ones split into two halves along their longest axis.
pub fn densify_and_prune(cloud: &SplatCloud, stats: &GradStats, cfg: &DensifyConfig) -> Result<SplatCloud> {
    if stats.len() != cloud.len() {
        return Err(TrainError::Config(format!(
            "gradient stats cover {} points, cloud has {}",
            stats.len(),
            cloud.len()
        )));
    }
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.points[i].opacity >= cfg.prune_opacity_threshold)
        .collect();
    let mut budget = cfg.max_points.saturating_sub(keep.len());
    let mut points = Vec::with_capacity(keep.len());
    for i in keep {
        let p = &cloud.points[i];
        let hot = stats.mean_norm(i) > cfg.clone_grad_threshold;
        if !hot || budget == 0 {
            points.push(p.clone());
            continue;
        }
        let largest = p.scale.iter().cloned().fold(0.0, f64::max);
        if cfg.split_enabled && largest > cfg.split_scale_threshold {
            let (a, b) = split(p);
            points.push(a);
            points.push(b);
        } else {
            points.push(p.clone());
            let dir = stats.grad_sum[i];
            let n = norm3(dir);
            let mut copy = p.clone();
            if n > 0.0 {
                for k in 0..3 {
                    copy.position[k] -= largest * dir[k] / n;
                }
            }
            points.push(copy);
        }
        budget -= 1;
    }
    Ok(SplatCloud {
        points,
        ..cloud.clone()
    })
}

fn split(p: &GaussianPoint) -> (GaussianPoint, GaussianPoint) {
    let axis = (0..3).max_by(|&a, &b| p.scale[a].total_cmp(&p.scale[b])).unwrap_or(0);
    let q = p.rotation;
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rot = render::quat_to_mat(q.map(|v| v / norm));
    let offset: [f64; 3] = [0, 1, 2].map(|r| rot[r][axis] * p.scale[axis]);
    let child = |sign: f64| {
        let mut c = p.clone();
        c.scale = p.scale.map(|s| (s / SPLIT_DIVISOR).max(MIN_SCALE));
        for k in 0..3 {
            c.position[k] += sign * offset[k];
        }
        c
    };
    (child(1.0), child(-1.0))
}

/// Applies the config's sampling gap, color mode and degree to an input cloud.
pub fn prepare_cloud(cloud: &SplatCloud, cfg: &TrainConfig) -> Result<SplatCloud> {
    let mut c = cloud.decimate(cfg.gap)?.with_background(cfg.background);
    c = match (cfg.color_mode, c.color_mode) {
        (a, b) if a == b => c,
        (ColorMode::GeometryOnly, _) => c.strip_color(),
        (ColorMode::SingleChannel(ch), ColorMode::Full) => c.to_single_channel(ch)?,
        (ColorMode::Full, ColorMode::GeometryOnly) => {
            let zeros = (0..c.len())
                .map(|_| ShCoefficients::zeros(cfg.max_degree, 3))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            c.attach_color(zeros)?
        }
        (want, have) => {
            return Err(TrainError::Config(format!(
                "cannot convert a {} cloud to {}",
                have.name(),
                want.name()
            )))
        }
    };
    Ok(c.with_sh_degree(cfg.max_degree)?)
}

/// Targets as the given color mode sees them.
pub fn prepare_dataset(data: &Dataset, mode: ColorMode) -> Result<Dataset> {
    match mode {
        ColorMode::SingleChannel(ch) => data.map_targets(|img| img.channel_select(ch)),
        _ => Ok(data.clone()),
    }
}

/// Trains `cloud` on `data` after applying the config's sampling gap, color
/// mode and degree.
pub fn train(cloud: &SplatCloud, data: &Dataset, cfg: &TrainConfig) -> Result<(SplatCloud, MetricsRow)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::Config("dataset has no train views".into()));
    }
    let mut cloud = prepare_cloud(cloud, cfg)?;
    let data = prepare_dataset(data, cfg.color_mode)?;
    let samples = curve_iterations(cfg.iterations);
    let mut curve = Vec::with_capacity(CURVE_SAMPLES);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = GradStats::new(cloud.len());
    let mut work = RenderStats::default();

    let watch = Stopwatch::start();
    for t in 1..=cfg.iterations {
        let (view, target) = &data.train[rng.random_range(0..data.train.len())];
        let settings = RenderSettings {
            max_degree: cfg.max_degree,
            background: cfg.background.resolve(t),
        };
        let out = render::render_with_gradients_using(&cloud, view, target, cfg.loss_kind, &settings)?;
        while curve.len() < samples.len() && samples[curve.len()] == t {
            curve.push(out.loss);
        }
        work += out.stats;
        let rates = cfg.rates.eval(t, cfg.iterations)?;
        step(&mut cloud, &out.grads, &rates);
        if cfg.densify.enabled {
            stats.add(&out.grads);
            if t % cfg.densify.interval == 0 && t < cfg.iterations {
                cloud = densify_and_prune(&cloud, &stats, &cfg.densify)?;
                stats = GradStats::new(cloud.len());
            }
        }
    }
    let (pt, pc) = watch.elapsed();

    let eval_bg = cfg.background.resolve(0);
    let (l1, p1) = evaluate(&cloud, &data.test, cfg.max_degree, eval_bg)?;
    let (l2, p2) = evaluate(&cloud, &data.train, cfg.max_degree, eval_bg)?;
    let points = cloud.len();
    Ok((
        cloud,
        MetricsRow {
            l1,
            l2,
            p1,
            p2,
            pt,
            pc,
            st: cfg.iterations,
            loss_curve: curve,
            points,
            work,
        },
    ))
}

/// Mean L1 and pooled-MSE PSNR over `views`; `(NaN, NaN)` for no views.
pub fn evaluate(
    cloud: &SplatCloud,
    views: &[(View, ImageBuffer)],
    max_degree: usize,
    background: [f64; 3],
) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let settings = RenderSettings { max_degree, background };
    let (mut l1, mut mse) = (0.0, 0.0);
    for (view, target) in views {
        let img = render::render_with(cloud, view, &settings)?.image;
        l1 += render::loss(&img, target, LossKind::L1)?;
        mse += render::loss(&img, target, LossKind::Mse)?;
    }
    let n = views.len() as f64;
    Ok((l1 / n, render::psnr_from_mse(mse / n)))
}

fn step(cloud: &mut SplatCloud, g: &GradientSet, r: &GroupRates) {
    for (i, p) in cloud.points.iter_mut().enumerate() {
        for k in 0..3 {
            p.position[k] -= r.xyz * g.position[i][k];
            p.scale[k] = (p.scale[k] - r.scaling * g.scale[i][k]).max(MIN_SCALE);
        }
        // renormalizing an untouched quaternion would still move it by an ulp
        if r.rotation != 0.0 && g.rotation[i] != [0.0; 4] {
            for k in 0..4 {
                p.rotation[k] -= r.rotation * g.rotation[i][k];
            }
            let n = p.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            p.rotation = if n > 0.0 { p.rotation.map(|v| v / n) } else { [1.0, 0.0, 0.0, 0.0] };
        }
        p.opacity = (p.opacity - r.opacity * g.opacity[i]).clamp(0.0, 1.0);
        if r.feature != 0.0 {
            if let (Some(sh), Some(gsh)) = (p.sh.as_mut(), g.sh.as_ref()) {
                for (c, d) in sh.as_mut_slice().iter_mut().zip(&gsh[i]) {
                    *c -= r.feature * d;
                }
            }
        }
    }
}

/// Fits RGB coefficients of degree `cfg.max_degree` to a frozen
/// geometry-only cloud, starting from zero (mid-gray). Only the feature
/// schedule of `cfg.rates` is used.
pub fn fit_colors_post(cloud: &SplatCloud, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<ShCoefficients>> {
    TrainConfig {
        iterations: cfg.iterations.max(1),
        ..cfg.clone()
    }
    .validate()?;
    if data.train.is_empty() {
        return Err(TrainError::Config("dataset has no train views".into()));
    }
    if cloud.color_mode != ColorMode::GeometryOnly {
        return Err(TrainError::Config(format!(
            "color fitting expects a geometry_only cloud, got {}",
            cloud.color_mode.name()
        )));
    }
    let zeros = (0..cloud.len())
        .map(|_| ShCoefficients::zeros(cfg.max_degree, 3))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut colored = cloud.attach_color(zeros)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for t in 1..=cfg.iterations {
        let (view, target) = &data.train[rng.random_range(0..data.train.len())];
        let settings = RenderSettings {
            max_degree: cfg.max_degree,
            background: cfg.background.resolve(t),
        };
        let out = render::render_with_gradients_using(&colored, view, target, cfg.loss_kind, &settings)?;
        let lr = cfg.rates.feature.eval(t, cfg.iterations)?;
        let gsh = out.grads.sh.as_ref().expect("colored cloud has SH gradients");
        for (p, g) in colored.points.iter_mut().zip(gsh) {
            if let Some(sh) = p.sh.as_mut() {
                for (c, d) in sh.as_mut_slice().iter_mut().zip(g) {
                    *c -= lr * d;
                }
            }
        }
    }
    Ok(colored.colors().unwrap_or_default())
}

/// Noise applied to a ground-truth cloud to make a training start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    /// Std. dev. of additive position noise.
    pub position: f64,
    /// Std. dev. of the log-scale noise.
    pub log_scale: f64,
    /// Std. dev. of additive opacity noise (result clamped to `[0.05, 1]`).
    pub opacity: f64,
    /// Std. dev. of additive DC color noise, in color units.
    pub color: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            position: 0.05,
            log_scale: 0.3,
            opacity: 0.2,
            color: 0.2,
        }
    }
}

/// Perturbs positions, scales, opacities and DC colors; rotations are kept.
pub fn perturb(cloud: &SplatCloud, spec: &PerturbSpec, seed: u64) -> Result<SplatCloud> {
    let normal = |sd: f64| {
        Normal::new(0.0, sd).map_err(|_| TrainError::Config(format!("bad perturbation std. dev. {sd}")))
    };
    let (np, ns, no, nc) = (
        normal(spec.position)?,
        normal(spec.log_scale)?,
        normal(spec.opacity)?,
        normal(spec.color / crate::sphharm::sh_norm_k(0, 0)?)?,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cloud.clone();
    for p in &mut out.points {
        for k in 0..3 {
            p.position[k] += np.sample(&mut rng);
            p.scale[k] = (p.scale[k] * ns.sample(&mut rng).exp()).max(MIN_SCALE);
        }
        p.opacity = (p.opacity + no.sample(&mut rng)).clamp(0.05, 1.0);
        if let Some(sh) = p.sh.as_mut() {
            for c in 0..sh.channels() {
                sh.channel_mut(c)[0] += nc.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

//! Experiment plans: synthetic scenes, knob sweeps and CSV reports.
//!
//! A plan is a TOML file with four sections:
//!
//! ```toml
//! [scene]              # ground truth: points, seed, extent, views, test_views,
//!                      # image_size, sh_degree, sh_detail, background
//! [perturb]            # init noise: position, log_scale, opacity, color
//! [sweep]              # axis, values, repeats, timed
//! [train]              # iterations, loss, background, max_degree, color_mode,
//!                      # gap, seed, add_back_iterations
//! [train.rates]        # xyz / scaling / opacity / rotation / feature: a number,
//!                      # a schedule string ("rw0-2", "exp:1.6e-4,1.6e-6") or a table
//! [train.densify]      # enabled, interval, clone_grad_threshold, ...
//! ```
//!
//! Every section and key is optional.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Channel, ImageBuffer, ImageError};
use crate::model::{Background, ColorMode, ModelError, SplatCloud};
use crate::render::{self, LossKind, RenderError, View};
use crate::schedules::{RateGroup, RateGroupConfig, ScheduleError, ScheduleSpec};
use crate::train::{self, Dataset, DensifyConfig, MetricsRow, PerturbSpec, Stopwatch, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("plan file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ground-truth scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub points: usize,
    pub seed: u64,
    pub extent: f64,
    pub views: usize,
    /// The last `test_views` views are held out.
    pub test_views: usize,
    pub image_size: usize,
    pub sh_degree: usize,
    /// Std. dev. of the non-DC color coefficients.
    pub sh_detail: f64,
    pub background: String,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            points: 200,
            seed: 1,
            extent: 1.0,
            views: 8,
            test_views: 1,
            image_size: 64,
            sh_degree: 3,
            sh_detail: 0.1,
            background: "white".into(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.test_views >= self.views {
            return Err(ExperimentError::Config(format!(
                "need at least one train view ({} views, {} held out)",
                self.views, self.test_views
            )));
        }
        let bad_extent = self.extent.is_nan() || self.extent <= 0.0;
        let bad_detail = self.sh_detail.is_nan() || self.sh_detail < 0.0;
        if self.image_size == 0 || bad_extent || bad_detail {
            return Err(ExperimentError::Config(
                "image_size, extent must be positive and sh_detail non-negative".into(),
            ));
        }
        self.background()?;
        Ok(())
    }

    pub fn background(&self) -> Result<Background> {
        Ok(Background::parse(&self.background, self.seed)?)
    }

    /// Views alternate between an upper and a lower ring, evenly spread in azimuth.
    pub fn camera_views(&self) -> Result<Vec<View>> {
        let px = 3.6 * self.extent / self.image_size as f64;
        (0..self.views)
            .map(|k| {
                let theta = if k % 2 == 0 { 1.0 } else { 2.1 };
                let phi = std::f64::consts::TAU * k as f64 / self.views as f64;
                Ok(View::new(theta, phi, self.image_size, self.image_size, px)?)
            })
            .collect()
    }
}

/// A generated ground truth with its rendered targets.
#[derive(Debug, Clone)]
pub struct Scene {
    pub truth: SplatCloud,
    pub views: Vec<View>,
    pub targets: Vec<ImageBuffer>,
    pub test_views: usize,
}

impl Scene {
    pub fn dataset(&self) -> Dataset {
        Dataset::split(
            self.views.iter().copied().zip(self.targets.iter().cloned()).collect(),
            self.test_views,
        )
    }
}

/// Precision used for ground-truth checkpoints.
pub const SCENE_SH_PLACES: u32 = 6;

/// Builds the ground truth and renders its targets. The cloud is passed
/// through its checkpoint encoding first so that targets re-render exactly
/// from the saved file.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut cloud = SplatCloud::init_synthetic(spec.points, spec.seed, spec.extent, spec.sh_degree)?
        .with_background(spec.background()?);
    let detail = Normal::new(0.0, spec.sh_detail)
        .map_err(|_| ExperimentError::Config(format!("bad sh_detail {}", spec.sh_detail)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    for p in &mut cloud.points {
        if let Some(sh) = p.sh.as_mut() {
            for c in 0..sh.channels() {
                for v in &mut sh.channel_mut(c)[1..] {
                    *v = detail.sample(&mut rng);
                }
            }
        }
    }
    let truth = SplatCloud::from_checkpoint(&cloud.to_checkpoint(SCENE_SH_PLACES)?)?;
    let views = spec.camera_views()?;
    let degree = truth.sh_degree().unwrap_or(0);
    let targets = views
        .iter()
        .map(|v| render::render(&truth, v, degree))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Scene {
        truth,
        views,
        targets,
        test_views: spec.test_views,
    })
}

/// Writes `truth.ckpt`, `views.csv` and `targets/view_NN.ppm` under `dir`.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    let targets = dir.join("targets");
    fs::create_dir_all(&targets).map_err(io_err(&targets))?;
    let ckpt = dir.join("truth.ckpt");
    scene.truth.save_checkpoint(&ckpt, SCENE_SH_PLACES)?;
    let mut csv = String::from("view,theta,phi,height,width,pixel_size,split,file\n");
    let n_train = scene.views.len() - scene.test_views;
    for (k, (v, img)) in scene.views.iter().zip(&scene.targets).enumerate() {
        let name = format!("targets/view_{k:02}.{}", netpbm_ext(img));
        img.save(&dir.join(&name))?;
        let split = if k < n_train { "train" } else { "test" };
        writeln!(
            csv,
            "{k},{:.17},{:.17},{},{},{:.17},{split},{name}",
            v.theta, v.phi, v.height, v.width, v.pixel_size
        )
        .unwrap();
    }
    let path = dir.join("views.csv");
    fs::write(&path, csv).map_err(io_err(&path))
}

fn netpbm_ext(img: &ImageBuffer) -> &'static str {
    if img.channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Knob varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Channel,
    ColorMode,
    Degree,
    Background,
    Gap,
    XyzSchedule,
    GroupLr,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::Channel,
        SweepAxis::ColorMode,
        SweepAxis::Degree,
        SweepAxis::Background,
        SweepAxis::Gap,
        SweepAxis::XyzSchedule,
        SweepAxis::GroupLr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Channel => "channel",
            SweepAxis::ColorMode => "color_mode",
            SweepAxis::Degree => "degree",
            SweepAxis::Background => "background",
            SweepAxis::Gap => "gap",
            SweepAxis::XyzSchedule => "xyz_schedule",
            SweepAxis::GroupLr => "group_lr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// What a single run does after its knob is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub config: TrainConfig,
    /// Train without color, then fit colors for this many iterations.
    pub add_back: Option<u64>,
}

/// Applies one sweep value to a base config.
pub fn apply_knob(axis: SweepAxis, value: &str, base: &TrainConfig, add_back_iterations: u64, seed: u64) -> Result<RunSetup> {
    let bad = || ExperimentError::Config(format!("invalid {} value '{value}'", axis.name()));
    let mut cfg = base.clone();
    let mut add_back = None;
    match axis {
        SweepAxis::Channel => {
            cfg.color_mode = match value {
                "rgb" | "full" => ColorMode::Full,
                v => ColorMode::SingleChannel(Channel::parse(v).ok_or_else(bad)?),
            }
        }
        SweepAxis::ColorMode => {
            if value == "add_back" {
                cfg.color_mode = ColorMode::GeometryOnly;
                add_back = Some(add_back_iterations);
            } else {
                cfg.color_mode = ColorMode::parse(value).ok_or_else(bad)?;
            }
        }
        SweepAxis::Degree => cfg.max_degree = value.parse().map_err(|_| bad())?,
        SweepAxis::Background => cfg.background = Background::parse(value, seed)?,
        SweepAxis::Gap => cfg.gap = value.parse().map_err(|_| bad())?,
        SweepAxis::XyzSchedule => {
            let base_rate = base.rates.xyz.eval(1, base.iterations)?;
            cfg.rates.xyz = ScheduleSpec::parse(value, base_rate)?;
        }
        SweepAxis::GroupLr => {
            let (group, spec) = value.split_once('=').ok_or_else(bad)?;
            let group = RateGroup::parse(group.trim()).ok_or_else(bad)?;
            let base_rate = base.rates.get(group).eval(1, base.iterations)?;
            *cfg.rates.get_mut(group) = ScheduleSpec::parse(spec.trim(), base_rate)?;
        }
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(RunSetup { config: cfg, add_back })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<toml::Value>,
    pub repeats: usize,
    /// Runs rows one at a time so wall-clock columns are meaningful.
    pub timed: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Degree,
            values: ["0", "1", "2", "3"].map(|v| toml::Value::String(v.into())).to_vec(),
            repeats: 5,
            timed: false,
        }
    }
}

impl SweepSpec {
    /// Values as strings; numbers keep their TOML spelling.
    pub fn value_strings(&self) -> Vec<String> {
        self.values
            .iter()
            .map(|v| match v {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect()
    }
}

/// A rate given as a number, a schedule string or a full schedule table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Number(f64),
    Text(String),
    Spec(ScheduleSpec),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesSection {
    pub xyz: Option<RateValue>,
    pub scaling: Option<RateValue>,
    pub opacity: Option<RateValue>,
    pub rotation: Option<RateValue>,
    pub feature: Option<RateValue>,
}

impl RatesSection {
    fn resolve(&self, iterations: u64) -> Result<RateGroupConfig> {
        let mut rates = RateGroupConfig::default();
        for (group, value) in [
            (RateGroup::Xyz, &self.xyz),
            (RateGroup::Scaling, &self.scaling),
            (RateGroup::Opacity, &self.opacity),
            (RateGroup::Rotation, &self.rotation),
            (RateGroup::Feature, &self.feature),
        ] {
            let Some(value) = value else { continue };
            let base = rates.get(group).eval(1, iterations)?;
            *rates.get_mut(group) = match value {
                RateValue::Number(r) => ScheduleSpec::constant(*r),
                RateValue::Text(t) => ScheduleSpec::parse(t, base)?,
                RateValue::Spec(s) => s.clone(),
            };
        }
        Ok(rates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: u64,
    pub loss: LossKind,
    pub background: String,
    pub max_degree: usize,
    pub color_mode: String,
    pub gap: usize,
    pub seed: u64,
    /// Color-fitting iterations for `add_back` runs; defaults to `iterations`.
    pub add_back_iterations: Option<u64>,
    pub rates: RatesSection,
    pub densify: DensifyConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            iterations: d.iterations,
            loss: d.loss_kind,
            background: "white".into(),
            max_degree: d.max_degree,
            color_mode: "full".into(),
            gap: d.gap,
            seed: d.seed,
            add_back_iterations: None,
            rates: RatesSection::default(),
            densify: d.densify,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            iterations: self.iterations,
            rates: self.rates.resolve(self.iterations.max(1))?,
            background: Background::parse(&self.background, self.seed)?,
            max_degree: self.max_degree,
            color_mode: ColorMode::parse(&self.color_mode)
                .ok_or_else(|| ExperimentError::Config(format!("unknown color_mode '{}'", self.color_mode)))?,
            gap: self.gap,
            densify: self.densify.clone(),
            loss_kind: self.loss,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scene: SceneSpec,
    pub perturb: PerturbSpec,
    pub sweep: SweepSpec,
    pub train: TrainSection,
}

/// One planned run before it executes.
#[derive(Debug, Clone)]
pub struct PlannedRun {
    pub value: String,
    pub repeat: usize,
    pub seed: u64,
    pub setup: RunSetup,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// Expands and validates every run; nothing is trained here.
    pub fn expand(&self) -> Result<Vec<PlannedRun>> {
        self.scene.validate()?;
        if self.sweep.repeats == 0 {
            return Err(ExperimentError::Config("repeats must be >= 1".into()));
        }
        let values = self.sweep.value_strings();
        if values.is_empty() {
            return Err(ExperimentError::Config("sweep has no values".into()));
        }
        let base = self.train.to_config()?;
        let add_back = self.train.add_back_iterations.unwrap_or(base.iterations);
        let mut runs = Vec::with_capacity(values.len() * self.sweep.repeats);
        for (vi, value) in values.iter().enumerate() {
            for repeat in 0..self.sweep.repeats {
                let seed = run_seed(self.train.seed, vi as u64, repeat as u64);
                let setup = apply_knob(self.sweep.axis, value, &base, add_back, seed)?;
                runs.push(PlannedRun {
                    value: value.clone(),
                    repeat,
                    seed,
                    setup,
                });
            }
        }
        Ok(runs)
    }
}

/// Per-run seed; repeats of different values share nothing but the scene.
pub fn run_seed(base: u64, value_index: u64, repeat: u64) -> u64 {
    splitmix(splitmix(base ^ splitmix(value_index)) ^ repeat)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub value: String,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricsRow,
    pub curve_file: String,
    pub image_file: String,
}

/// Per-value means over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageRow {
    pub value: String,
    pub l1: f64,
    pub l2: f64,
    pub p1: f64,
    pub p2: f64,
    pub pt: f64,
    pub pc: f64,
    pub st: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub axis: String,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "sweep_axis,value,repeat,seed,l1,l2,p1,p2,pt,pc,st,curve_file,image_file";

/// Five decimals; infinities print as `inf`.
pub fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.5}")
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

impl ReportTable {
    /// Distinct values in first-seen order.
    pub fn values(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.value) {
                out.push(r.value.clone());
            }
        }
        out
    }

    pub fn averages(&self) -> Vec<AverageRow> {
        self.values()
            .into_iter()
            .map(|value| {
                let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.value == value).map(|r| &r.metrics).collect();
                let m = |f: fn(&MetricsRow) -> f64| mean(rows.iter().map(|r| f(r)));
                AverageRow {
                    l1: m(|r| r.l1),
                    l2: m(|r| r.l2),
                    p1: m(|r| r.p1),
                    p2: m(|r| r.p2),
                    pt: m(|r| r.pt),
                    pc: m(|r| r.pc),
                    st: m(|r| r.st as f64),
                    value,
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.axis,
                csv_field(&r.value),
                r.repeat,
                r.seed,
                fmt_metric(m.l1),
                fmt_metric(m.l2),
                fmt_metric(m.p1),
                fmt_metric(m.p2),
                fmt_metric(m.pt),
                fmt_metric(m.pc),
                m.st,
                r.curve_file,
                r.image_file
            )
            .unwrap();
        }
        for a in self.averages() {
            writeln!(
                out,
                "{},{},avg,,{},{},{},{},{},{},{},,",
                self.axis,
                csv_field(&a.value),
                fmt_metric(a.l1),
                fmt_metric(a.l2),
                fmt_metric(a.p1),
                fmt_metric(a.p2),
                fmt_metric(a.pt),
                fmt_metric(a.pc),
                fmt_metric(a.st)
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Runs every planned row against one generated scene and writes
/// `report.csv`, `curves/*.csv` and `images/*` under `out`.
pub fn run_plan(plan: &ExperimentPlan, out: &Path) -> Result<ReportTable> {
    let runs = plan.expand()?;
    let scene = gen_scene(&plan.scene)?;
    let data = scene.dataset();
    for sub in ["curves", "images"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let axis = plan.sweep.axis.name();
    let exec = |run: &PlannedRun| -> Result<ReportRow> {
        let init = train::perturb(&scene.truth, &plan.perturb, run.seed)?;
        let (cloud, metrics) = execute(&init, &data, &run.setup)?;
        let stem = format!("{axis}_{}_{}", slug(&run.value), run.repeat);
        let curve_file = format!("curves/{stem}.csv");
        let mut curve = String::from("sample,iteration,loss\n");
        for (k, (it, loss)) in train::curve_iterations(metrics.st).iter().zip(&metrics.loss_curve).enumerate() {
            writeln!(curve, "{k},{it},{loss:.8}").unwrap();
        }
        let path = out.join(&curve_file);
        fs::write(&path, curve).map_err(io_err(&path))?;
        let (view, _) = data.test.first().or(data.train.first()).expect("validated scene has views");
        let img = render::render_with(
            &cloud,
            view,
            &render::RenderSettings {
                max_degree: cloud.sh_degree().unwrap_or(0).min(run.setup.config.max_degree),
                background: run.setup.config.background.resolve(0),
            },
        )?
        .image;
        let image_file = format!("images/{stem}.{}", netpbm_ext(&img));
        img.save(&out.join(&image_file))?;
        Ok(ReportRow {
            value: run.value.clone(),
            repeat: run.repeat,
            seed: run.seed,
            metrics,
            curve_file,
            image_file,
        })
    };
    let rows = if plan.sweep.timed {
        runs.iter().map(exec).collect::<Result<Vec<_>>>()?
    } else {
        runs.par_iter().map(exec).collect::<Result<Vec<_>>>()?
    };
    let table = ReportTable {
        axis: axis.to_string(),
        rows,
    };
    table.write_csv(&out.join("report.csv"))?;
    Ok(table)
}

/// Trains one row; `add_back` rows fit colors afterwards and report the
/// colored result, with timers covering both phases.
pub fn execute(init: &SplatCloud, data: &Dataset, setup: &RunSetup) -> Result<(SplatCloud, MetricsRow)> {
    let cfg = &setup.config;
    let Some(fit_iterations) = setup.add_back else {
        return Ok(train::train(init, data, cfg)?);
    };
    let watch = Stopwatch::start();
    let (geo, mut metrics) = train::train(init, data, cfg)?;
    let fit_cfg = TrainConfig {
        iterations: fit_iterations,
        color_mode: ColorMode::Full,
        ..cfg.clone()
    };
    let colors = train::fit_colors_post(&geo, data, &fit_cfg)?;
    let colored = geo.attach_color(colors)?;
    let (pt, pc) = watch.elapsed();
    let bg = cfg.background.resolve(0);
    let (l1, p1) = train::evaluate(&colored, &data.test, cfg.max_degree, bg)?;
    let (l2, p2) = train::evaluate(&colored, &data.train, cfg.max_degree, bg)?;
    metrics = MetricsRow {
        l1,
        l2,
        p1,
        p2,
        pt,
        pc,
        st: metrics.st + fit_iterations,
        ..metrics
    };
    Ok((colored, metrics))
}

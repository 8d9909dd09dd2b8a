//! Gaussian point clouds: construction, decimation, background, color
//! stripping and re-attachment, and ASCII checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::codec::{self, CodecError, QuantizationSpec};
use crate::image::Channel;
use crate::sphharm::{ShCoefficients, ShError, MAX_DEGREE};

pub type Rgb = [f64; 3];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("color alignment: {coeffs} coefficient sets for {points} points")]
    Alignment { points: usize, coeffs: usize },
    #[error("checkpoint line {line}: {reason}")]
    Load { line: usize, reason: String },
    #[error("unsupported checkpoint version '{0}'")]
    Version(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Sh(#[from] ShError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Decimal places kept for position, scale, rotation and opacity.
pub const GEOMETRY_PLACES: u32 = 6;

/// Default decimal places for SH coefficients.
pub const DEFAULT_SH_PLACES: u32 = 1;

const CHECKPOINT_TAG: &str = "splatlab-checkpoint 1";

/// How point colors are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Full,
    GeometryOnly,
    SingleChannel(Channel),
}

impl ColorMode {
    /// Color channels carried per point, zero without color.
    pub fn sh_channels(self) -> usize {
        match self {
            ColorMode::Full => 3,
            ColorMode::GeometryOnly => 0,
            ColorMode::SingleChannel(_) => 1,
        }
    }

    /// Channels of a rendered image.
    pub fn image_channels(self) -> usize {
        match self {
            ColorMode::SingleChannel(_) => 1,
            _ => 3,
        }
    }

    pub fn name(self) -> String {
        match self {
            ColorMode::Full => "full".into(),
            ColorMode::GeometryOnly => "geometry_only".into(),
            ColorMode::SingleChannel(c) => format!("single:{}", c.name()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" | "rgb" => Some(ColorMode::Full),
            "geometry_only" | "none" => Some(ColorMode::GeometryOnly),
            _ => Channel::parse(s.strip_prefix("single:").unwrap_or(s)).map(ColorMode::SingleChannel),
        }
    }
}

/// Scene background. `Random` draws a fresh uniform color per render index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Solid(Rgb),
    Random { seed: u64 },
}

impl Default for Background {
    fn default() -> Self {
        Background::WHITE
    }
}

impl Background {
    pub const WHITE: Background = Background::Solid([1.0; 3]);
    pub const BLACK: Background = Background::Solid([0.0; 3]);

    pub fn solid(rgb: Rgb) -> Result<Self> {
        if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(ModelError::Config(format!(
                "background channels must lie in [0, 1], got {rgb:?}"
            )));
        }
        Ok(Background::Solid(rgb))
    }

    pub fn gray(level: f64) -> Result<Self> {
        Self::solid([level; 3])
    }

    /// `white`, `black`, `random`, a scalar level, or `r,g,b`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let text = text.trim();
        match text {
            "white" => return Ok(Background::WHITE),
            "black" => return Ok(Background::BLACK),
            "random" => return Ok(Background::Random { seed }),
            _ => {}
        }
        let parts = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| ModelError::Config(format!("unrecognized background '{text}'")))?;
        match parts[..] {
            [v] => Self::gray(v),
            [r, g, b] => Self::solid([r, g, b]),
            _ => Err(ModelError::Config(format!("unrecognized background '{text}'"))),
        }
    }

    /// Concrete color for render number `index`.
    pub fn resolve(&self, index: u64) -> Rgb {
        match *self {
            Background::Solid(rgb) => rgb,
            Background::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index);
                [rng.random(), rng.random(), rng.random()]
            }
        }
    }
}

/// One anisotropic 3D Gaussian. Rotation is a `(w, x, y, z)` quaternion.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPoint {
    pub position: [f64; 3],
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub sh: Option<ShCoefficients>,
}

impl GaussianPoint {
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(format!("non-positive scale {:?}", self.scale));
        }
        let norm = self.rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(format!("quaternion norm {norm}"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {}", self.opacity));
        }
        if self.position.iter().any(|p| !p.is_finite()) {
            return Err(format!("position {:?}", self.position));
        }
        Ok(())
    }
}

/// A scene: points plus background and color mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatCloud {
    pub points: Vec<GaussianPoint>,
    pub background: Background,
    pub color_mode: ColorMode,
}

impl SplatCloud {
    pub fn empty(color_mode: ColorMode) -> Self {
        Self {
            points: Vec::new(),
            background: Background::default(),
            color_mode,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stored SH degree, `None` without color or without points.
    pub fn sh_degree(&self) -> Option<usize> {
        self.points
            .first()
            .and_then(|p| p.sh.as_ref())
            .map(ShCoefficients::degree)
    }

    /// Checks every point invariant and the color-mode contract.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(1e-6)
    }

    /// Like [`validate`](Self::validate) with a custom quaternion-norm tolerance.
    pub fn validate_with(&self, quat_tol: f64) -> Result<()> {
        let channels = self.color_mode.sh_channels();
        let degree = self.sh_degree();
        for (i, p) in self.points.iter().enumerate() {
            p.check(quat_tol)
                .map_err(|e| ModelError::Config(format!("point {i}: {e}")))?;
            match (&p.sh, channels) {
                (None, 0) => {}
                (Some(sh), c) if c > 0 && sh.channels() == c && Some(sh.degree()) == degree => {}
                _ => {
                    return Err(ModelError::Config(format!(
                        "point {i}: color data inconsistent with mode {}",
                        self.color_mode.name()
                    )))
                }
            }
        }
        Ok(())
    }

    /// Keeps points `0, gap, 2*gap, ...`.
    pub fn decimate(&self, gap: usize) -> Result<Self> {
        if gap == 0 {
            return Err(ModelError::Config("sampling gap must be >= 1".into()));
        }
        Ok(Self {
            points: self.points.iter().step_by(gap).cloned().collect(),
            ..self.clone()
        })
    }

    pub fn with_background(mut self, background: Background) -> Self {
        self.background = background;
        self
    }

    /// Drops all color data. Idempotent.
    pub fn strip_color(&self) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| GaussianPoint { sh: None, ..p.clone() })
                .collect(),
            background: self.background,
            color_mode: ColorMode::GeometryOnly,
        }
    }

    /// Per-point coefficients, in point order.
    pub fn colors(&self) -> Option<Vec<ShCoefficients>> {
        self.points.iter().map(|p| p.sh.clone()).collect()
    }

    /// Re-attaches index-aligned RGB coefficients, yielding a full-color cloud.
    pub fn attach_color(&self, coeffs: Vec<ShCoefficients>) -> Result<Self> {
        self.attach_color_as(coeffs, ColorMode::Full)
    }

    pub fn attach_color_as(&self, coeffs: Vec<ShCoefficients>, mode: ColorMode) -> Result<Self> {
        if coeffs.len() != self.points.len() {
            return Err(ModelError::Alignment {
                points: self.points.len(),
                coeffs: coeffs.len(),
            });
        }
        if mode == ColorMode::GeometryOnly {
            return Err(ModelError::Config("cannot attach color in geometry_only mode".into()));
        }
        let degree = coeffs.first().map(ShCoefficients::degree);
        for sh in &coeffs {
            if sh.channels() != mode.sh_channels() || Some(sh.degree()) != degree {
                return Err(ModelError::Config(format!(
                    "coefficient set ({} channels, degree {}) does not fit mode {}",
                    sh.channels(),
                    sh.degree(),
                    mode.name()
                )));
            }
        }
        Ok(Self {
            points: self
                .points
                .iter()
                .zip(coeffs)
                .map(|(p, sh)| GaussianPoint { sh: Some(sh), ..p.clone() })
                .collect(),
            background: self.background,
            color_mode: mode,
        })
    }

    /// Collapses full RGB color into one channel (`Gray` mixes by luma).
    pub fn to_single_channel(&self, channel: Channel) -> Result<Self> {
        if self.color_mode != ColorMode::Full {
            return Err(ModelError::Config(format!(
                "single-channel conversion needs a full-color cloud, got {}",
                self.color_mode.name()
            )));
        }
        let w = channel.weights();
        Ok(Self {
            points: self
                .points
                .iter()
                .map(|p| GaussianPoint {
                    sh: p.sh.as_ref().map(|sh| sh.mix_channels(&w)),
                    ..p.clone()
                })
                .collect(),
            background: self.background,
            color_mode: ColorMode::SingleChannel(channel),
        })
    }

    /// Truncates or zero-extends every point's SH to `degree`.
    pub fn with_sh_degree(&self, degree: usize) -> Result<Self> {
        let mut out = self.clone();
        for p in &mut out.points {
            if let Some(sh) = &p.sh {
                p.sh = Some(sh.with_degree(degree)?);
            }
        }
        Ok(out)
    }

    /// Random scene: uniform positions in `[-extent, extent]^3`, log-uniform
    /// scales, uniform unit quaternions, opacities in `[0.5, 1]` and DC-only
    /// colors in `[0.1, 0.9]`.
    pub fn init_synthetic(n: usize, seed: u64, extent: f64, sh_degree: usize) -> Result<Self> {
        if sh_degree > MAX_DEGREE {
            return Err(ShError::Degree(sh_degree).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = ((0.03 * extent).ln(), (0.12 * extent).ln());
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let position = [0; 3].map(|_| rng.random_range(-extent..=extent));
            let scale = [0; 3].map(|_| rng.random_range(lo..hi).exp());
            let rotation = random_unit_quaternion(&mut rng);
            let opacity = rng.random_range(0.5..=1.0);
            let color = [0; 3].map(|_| rng.random_range(0.1..=0.9));
            points.push(GaussianPoint {
                position,
                scale,
                rotation,
                opacity,
                sh: Some(ShCoefficients::from_dc_color(sh_degree, &color)?),
            });
        }
        Ok(Self {
            points,
            background: Background::default(),
            color_mode: ColorMode::Full,
        })
    }

    /// Serializes to the ASCII checkpoint format.
    pub fn to_checkpoint(&self, sh_places: u32) -> Result<String> {
        // quantized reloads drift off the unit sphere by up to ~1e-6
        self.validate_with(1e-5)?;
        let n = self.points.len();
        let mut out = String::from(CHECKPOINT_TAG);
        out.push('\n');
        write_header(&mut out, self, sh_places)?;

        let mut sections: Vec<(&str, usize, Vec<f64>, u32)> = vec![
            ("positions", 3, self.points.iter().flat_map(|p| p.position).collect(), GEOMETRY_PLACES),
            ("scales", 3, self.points.iter().flat_map(|p| p.scale).collect(), GEOMETRY_PLACES),
            ("rotations", 4, self.points.iter().flat_map(|p| p.rotation).collect(), GEOMETRY_PLACES),
            ("opacities", 1, self.points.iter().map(|p| p.opacity).collect(), GEOMETRY_PLACES),
        ];
        if self.color_mode != ColorMode::GeometryOnly {
            let cols = crate::sphharm::basis_len(self.sh_degree().unwrap_or(0)) * self.color_mode.sh_channels();
            let values = self
                .points
                .iter()
                .flat_map(|p| p.sh.as_ref().expect("validated").as_slice().iter().copied())
                .collect();
            sections.push(("sh", cols, values, sh_places));
        }
        for (name, cols, values, places) in sections {
            write_section(&mut out, name, n, cols, &values, places)?;
        }
        Ok(out)
    }

    /// Writes the checkpoint; returns the byte count.
    pub fn save_checkpoint(&self, path: &Path, sh_places: u32) -> Result<usize> {
        let text = self.to_checkpoint(sh_places)?;
        std::fs::write(path, &text)?;
        Ok(text.len())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut reader = LineReader {
            lines: text.split('\n').collect(),
            pos: 0,
        };
        let tag = reader.next()?;
        if tag != CHECKPOINT_TAG {
            return Err(ModelError::Version(tag.to_string()));
        }
        let n = codec::decode_u(reader.field("points")?).map_err(|e| reader.err(e))? as usize;
        let mode_text = reader.field("color_mode")?;
        let color_mode = ColorMode::parse(mode_text)
            .ok_or_else(|| reader.err(format!("unknown color mode '{mode_text}'")))?;
        let sh_degree = codec::decode_u(reader.field("sh_degree")?).map_err(|e| reader.err(e))? as usize;
        let sh_places = codec::decode_u(reader.field("sh_places")?).map_err(|e| reader.err(e))?;
        if sh_places > codec::MAX_PLACES as u64 {
            return Err(reader.err(format!("sh_places {sh_places} out of range")));
        }
        let sh_places = sh_places as u32;
        let background = match reader.field("background")? {
            "solid" => {
                let m = reader.matrix(1, 3)?;
                Background::solid([m[0], m[1], m[2]])?
            }
            "random" => Background::Random {
                seed: codec::decode_u(reader.field("bg_seed")?).map_err(|e| reader.err(e))?,
            },
            other => return Err(reader.err(format!("unknown background kind '{other}'"))),
        };

        let positions = reader.section("positions", n, 3, GEOMETRY_PLACES)?;
        let scales = reader.section("scales", n, 3, GEOMETRY_PLACES)?;
        let rotations = reader.section("rotations", n, 4, GEOMETRY_PLACES)?;
        let opacities = reader.section("opacities", n, 1, GEOMETRY_PLACES)?;
        let sh_cols = crate::sphharm::basis_len(sh_degree) * color_mode.sh_channels();
        let sh = if color_mode == ColorMode::GeometryOnly {
            None
        } else {
            Some(reader.section("sh", n, sh_cols, sh_places)?)
        };
        if !reader.rest_is_empty() {
            return Err(reader.err("trailing data after last section"));
        }

        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let sh = match &sh {
                Some(v) => Some(ShCoefficients::from_vec(
                    sh_degree,
                    color_mode.sh_channels(),
                    v[i * sh_cols..(i + 1) * sh_cols].to_vec(),
                )?),
                None => None,
            };
            points.push(GaussianPoint {
                position: positions[i * 3..i * 3 + 3].try_into().expect("3"),
                scale: scales[i * 3..i * 3 + 3].try_into().expect("3"),
                rotation: rotations[i * 4..i * 4 + 4].try_into().expect("4"),
                opacity: opacities[i],
                sh,
            });
        }
        Ok(Self {
            points,
            background,
            color_mode,
        })
    }
}

fn write_header(out: &mut String, cloud: &SplatCloud, sh_places: u32) -> Result<()> {
    let mut line = |k: &str, v: &str| writeln!(out, "{k}={v}").expect("string write");
    line("points", &codec::encode_u(cloud.points.len() as u64));
    line("color_mode", &cloud.color_mode.name());
    line("sh_degree", &codec::encode_u(cloud.sh_degree().unwrap_or(0) as u64));
    line("sh_places", &codec::encode_u(sh_places as u64));
    match cloud.background {
        Background::Solid(rgb) => {
            line("background", "solid");
            let spec = QuantizationSpec::new(GEOMETRY_PLACES, 0.0, 1.0)?;
            out.push_str(&codec::encode_matrix(&rgb, 1, 3, &spec)?);
            out.push('\n');
        }
        Background::Random { seed } => {
            line("background", "random");
            line("bg_seed", &codec::encode_u(seed));
        }
    }
    Ok(())
}

fn write_section(
    out: &mut String,
    name: &str,
    rows: usize,
    cols: usize,
    values: &[f64],
    places: u32,
) -> Result<()> {
    let scale = 10f64.powi(places as i32);
    let min = values.iter().copied().fold(0.0f64, f64::min);
    let offset = (min * scale).floor() / scale;
    let shifted: Vec<f64> = values.iter().map(|v| v - offset).collect();
    let spec = QuantizationSpec::new(places, 0.0, 1e15)?;
    let sign = if offset < 0.0 { '-' } else { '+' };
    writeln!(out, "[{name}]").expect("string write");
    writeln!(out, "offset={sign}{}", codec::encode_f(offset.abs(), places)?).expect("string write");
    out.push_str(&codec::encode_matrix(&shifted, rows, cols, &spec)?);
    out.push('\n');
    Ok(())
}

struct LineReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn err(&self, reason: impl ToString) -> ModelError {
        ModelError::Load {
            line: self.pos,
            reason: reason.to_string(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected '{key}=' record")))
    }

    /// Consumes one codec matrix and checks its shape.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let start = self.pos;
        let header = self.next()?;
        let (r, c) = codec::matrix_shape(header).map_err(|e| self.err(e))?;
        let expected = r.checked_mul(c).ok_or_else(|| self.err("matrix too large"))?;
        if self.pos + expected > self.lines.len() {
            return Err(self.err("truncated matrix"));
        }
        let blob = self.lines[start..start + 1 + expected].join("\n");
        self.pos = start + 1 + expected;
        let decoded = codec::decode_matrix(&blob).map_err(|e| self.err(e))?;
        if (decoded.rows, decoded.cols) != (rows, cols) {
            return Err(self.err(format!(
                "matrix is {}x{}, expected {rows}x{cols}",
                decoded.rows, decoded.cols
            )));
        }
        Ok(decoded.values)
    }

    /// Values are snapped to the `places` grid so the result does not depend on
    /// which offset the writer picked.
    fn section(&mut self, name: &str, rows: usize, cols: usize, places: u32) -> Result<Vec<f64>> {
        let head = self.next()?;
        if head != format!("[{name}]") {
            return Err(self.err(format!("expected section [{name}], found '{head}'")));
        }
        let raw = self.field("offset")?;
        let (sign, rec) = match raw.split_at_checked(1) {
            Some(("-", rec)) => (-1.0, rec),
            Some(("+", rec)) => (1.0, rec),
            _ => return Err(self.err("offset needs a sign")),
        };
        let offset = sign * codec::decode_f(rec).map_err(|e| self.err(e))?;
        let values = self.matrix(rows, cols)?;
        let scale = 10f64.powi(places as i32);
        Ok(values
            .into_iter()
            .map(|v| ((v + offset) * scale).round() / scale + 0.0)
            .collect())
    }

    fn rest_is_empty(&self) -> bool {
        self.lines[self.pos..].iter().all(|l| l.is_empty())
    }
}

pub(crate) fn random_unit_quaternion(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = [0; 4].map(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return q.map(|v| v / n);
        }
    }
}

//! Orthographic splat renderer with analytic gradients.
//!
//! Each Gaussian is projected along the view axis to a 2D footprint whose
//! covariance is the `(u, v)` block of `R S S^T R^T`, i.e. the 3D Gaussian
//! marginalized over depth. Points are ordered back-to-front by depth (ties
//! broken by index) and composited front-to-back:
//!
//! ```text
//! C = sum_i c_i a_i T_i + T_end * bg,   T_i = prod_{j<i} (1 - a_j)
//! a_i = opacity_i * exp(-q/2),          q = d^T Sigma2^-1 d  (q <= 9)
//! ```
//!
//! The backward pass walks contributions back-to-front keeping the color
//! composited *behind* each splat, so no division by `1 - a` is needed:
//! `dC/da_k = T_k (c_k - B_k)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, ImageError};
use crate::model::{ColorMode, Rgb, SplatCloud};
use crate::sphharm::{self, basis_len, ShCoefficients, MAX_DEGREE};

/// Mahalanobis cutoff, `(3 sigma)^2`.
pub const CUTOFF: f64 = 9.0;

/// Footprints with a smaller covariance determinant (pixels^4) are skipped.
pub const MIN_DET: f64 = 1e-12;

/// Color used for points without SH data.
pub const GEOMETRY_COLOR: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid view: {0}")]
    View(String),
    #[error("render degree {requested} exceeds the cloud's stored degree {stored}")]
    Degree { requested: usize, stored: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, RenderError>;

/// An orthographic camera looking along direction `(theta, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub theta: f64,
    pub phi: f64,
    pub height: usize,
    pub width: usize,
    /// World units per pixel.
    pub pixel_size: f64,
}

impl View {
    pub fn new(theta: f64, phi: f64, height: usize, width: usize, pixel_size: f64) -> Result<Self> {
        let v = Self {
            theta,
            phi,
            height,
            width,
            pixel_size,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(RenderError::View("image size must be at least 1x1".into()));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(RenderError::View(format!("theta {} outside [0, pi]", self.theta)));
        }
        if !(0.0..std::f64::consts::TAU).contains(&self.phi) {
            return Err(RenderError::View(format!("phi {} outside [0, 2pi)", self.phi)));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(RenderError::View("pixel size must be positive".into()));
        }
        Ok(())
    }

    /// `(look direction, image right, image down)`, orthonormal.
    pub fn axes(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let d = [st * cp, st * sp, ct];
        let u = [-sp, cp, 0.0];
        (d, u, cross(d, u))
    }

    /// Pixel-space projection of a world point (column, row coordinates).
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        let (_, u, v) = self.axes();
        [
            dot(p, u) / self.pixel_size + self.width as f64 / 2.0,
            dot(p, v) / self.pixel_size + self.height as f64 / 2.0,
        ]
    }

    /// `n` views evenly spread in azimuth around a ring at polar angle `theta`.
    pub fn ring(n: usize, theta: f64, height: usize, width: usize, pixel_size: f64) -> Result<Vec<View>> {
        (0..n)
            .map(|k| View::new(theta, std::f64::consts::TAU * k as f64 / n as f64, height, width, pixel_size))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L1,
    Mse,
}

/// Mean absolute or mean squared difference.
pub fn loss(image: &ImageBuffer, target: &ImageBuffer, kind: LossKind) -> Result<f64> {
    image.check_same_shape(target)?;
    let n = image.data.len().max(1) as f64;
    let sum: f64 = image
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| match kind {
            LossKind::L1 => (a - b).abs(),
            LossKind::Mse => (a - b) * (a - b),
        })
        .sum();
    Ok(sum / n)
}

/// `10 log10(1 / MSE)` in dB for images in `[0, 1]`; infinite for identical images.
pub fn psnr(image: &ImageBuffer, target: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(loss(image, target, LossKind::Mse)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Per-render settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub max_degree: usize,
    pub background: Rgb,
}

impl RenderSettings {
    /// Full stored degree and the cloud's background for render index 0.
    pub fn for_cloud(cloud: &SplatCloud) -> Self {
        Self {
            max_degree: cloud.sh_degree().unwrap_or(0),
            background: cloud.background.resolve(0),
        }
    }
}

/// Operation counters for one render (and its backward pass, if any).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    /// Coefficient-by-basis multiplies while evaluating point colors.
    pub sh_mults: u64,
    /// Coefficient-gradient multiplies in the backward pass.
    pub sh_grad_mults: u64,
    /// Basis functions evaluated.
    pub sh_basis_terms: u64,
    /// Points dropped for a degenerate footprint.
    pub skipped_degenerate: u64,
    /// (point, pixel) pairs composited.
    pub contributions: u64,
}

impl std::ops::AddAssign for RenderStats {
    fn add_assign(&mut self, o: Self) {
        self.sh_mults += o.sh_mults;
        self.sh_grad_mults += o.sh_grad_mults;
        self.sh_basis_terms += o.sh_basis_terms;
        self.skipped_degenerate += o.skipped_degenerate;
        self.contributions += o.contributions;
    }
}

/// Loss gradients, shaped like the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub position: Vec<[f64; 3]>,
    pub scale: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub opacity: Vec<f64>,
    /// Per-point gradients in coefficient layout; `None` without color.
    pub sh: Option<Vec<Vec<f64>>>,
}

impl GradientSet {
    fn zeros(cloud: &SplatCloud) -> Self {
        let n = cloud.len();
        Self {
            position: vec![[0.0; 3]; n],
            scale: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            opacity: vec![0.0; n],
            sh: (cloud.color_mode != ColorMode::GeometryOnly).then(|| {
                cloud
                    .points
                    .iter()
                    .map(|p| vec![0.0; p.sh.as_ref().map_or(0, |s| s.as_slice().len())])
                    .collect()
            }),
        }
    }

    /// Every value, group by group.
    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.position
            .iter()
            .flatten()
            .chain(self.scale.iter().flatten())
            .chain(self.rotation.iter().flatten())
            .chain(self.opacity.iter())
            .chain(self.sh.iter().flatten().flatten())
            .copied()
    }
}

pub struct RenderOutput {
    pub image: ImageBuffer,
    pub stats: RenderStats,
}

pub struct GradientOutput {
    pub loss: f64,
    pub image: ImageBuffer,
    pub grads: GradientSet,
    pub stats: RenderStats,
}

/// Renders with the cloud's background (render index 0) at `max_degree`.
pub fn render(cloud: &SplatCloud, view: &View, max_degree: usize) -> Result<ImageBuffer> {
    let settings = RenderSettings {
        max_degree,
        ..RenderSettings::for_cloud(cloud)
    };
    Ok(render_with(cloud, view, &settings)?.image)
}

pub fn render_with(cloud: &SplatCloud, view: &View, settings: &RenderSettings) -> Result<RenderOutput> {
    let fwd = forward(cloud, view, settings, false)?;
    Ok(RenderOutput {
        image: fwd.image,
        stats: fwd.stats,
    })
}

/// Loss against `target` and its gradient for every parameter group, at the
/// cloud's stored degree and background.
pub fn render_with_gradients(
    cloud: &SplatCloud,
    view: &View,
    target: &ImageBuffer,
    kind: LossKind,
) -> Result<(f64, GradientSet)> {
    let out = render_with_gradients_using(cloud, view, target, kind, &RenderSettings::for_cloud(cloud))?;
    Ok((out.loss, out.grads))
}

pub fn render_with_gradients_using(
    cloud: &SplatCloud,
    view: &View,
    target: &ImageBuffer,
    kind: LossKind,
    settings: &RenderSettings,
) -> Result<GradientOutput> {
    let fwd = forward(cloud, view, settings, true)?;
    fwd.image.check_same_shape(target)?;
    let loss_value = loss(&fwd.image, target, kind)?;
    let n = fwd.image.data.len().max(1) as f64;
    let d_pixels: Vec<f64> = fwd
        .image
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| match kind {
            LossKind::L1 => {
                let r = a - b;
                if r > 0.0 {
                    1.0 / n
                } else if r < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            }
            LossKind::Mse => 2.0 * (a - b) / n,
        })
        .collect();
    let (grads, stats) = backward(cloud, view, settings, &fwd, &d_pixels);
    Ok(GradientOutput {
        loss: loss_value,
        image: fwd.image,
        grads,
        stats,
    })
}

/// Projected per-point state shared by both passes.
struct Splat {
    index: usize,
    depth: f64,
    mean: [f64; 2],
    cov: [f64; 3],
    conic: [f64; 3],
    raw_color: [f64; 3],
    color: [f64; 3],
    rot: Mat3,
    quat_norm: f64,
    quat: [f64; 4],
}

struct Contribution {
    splat: u32,
    pixel: u32,
    alpha: f64,
    transmit: f64,
}

struct Forward {
    image: ImageBuffer,
    splats: Vec<Splat>,
    /// In compositing (front-to-back) order per pixel.
    contribs: Vec<Contribution>,
    basis: [f64; basis_len(MAX_DEGREE)],
    degree: usize,
    channels: usize,
    stats: RenderStats,
}

fn forward(cloud: &SplatCloud, view: &View, settings: &RenderSettings, record: bool) -> Result<Forward> {
    view.validate()?;
    let mode = cloud.color_mode;
    let channels = mode.image_channels();
    let stored = cloud.sh_degree();
    let degree = settings.max_degree;
    if let Some(stored) = stored {
        if degree > stored {
            return Err(RenderError::Degree {
                requested: degree,
                stored,
            });
        }
    }
    let mut stats = RenderStats::default();
    let (dir, u, v) = view.axes();
    let inv_px = 1.0 / view.pixel_size;
    let (ju, jv) = (scale3(u, inv_px), scale3(v, inv_px));

    let mut basis = [0.0; basis_len(MAX_DEGREE)];
    if mode != ColorMode::GeometryOnly && !cloud.is_empty() {
        stats.sh_basis_terms += sphharm::sh_basis_into(degree, view.theta, view.phi, &mut basis) as u64;
    }

    let mut splats = Vec::with_capacity(cloud.len());
    for (index, p) in cloud.points.iter().enumerate() {
        let qn = norm4(p.rotation);
        let quat = p.rotation.map(|c| c / qn);
        let rot = quat_to_mat(quat);
        let m = mat_scale_cols(rot, p.scale);
        let sigma = mat_mul_t(m, m);
        let cov = [quad(ju, sigma, ju), quad(ju, sigma, jv), quad(jv, sigma, jv)];
        let det = cov[0] * cov[2] - cov[1] * cov[1];
        // also catches NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(det > MIN_DET) {
            stats.skipped_degenerate += 1;
            continue;
        }
        let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
        let mut raw_color = [GEOMETRY_COLOR; 3];
        let mut color = [GEOMETRY_COLOR; 3];
        if let Some(sh) = &p.sh {
            stats.sh_mults += sphharm::raw_color_from_basis(sh, degree, &basis, &mut raw_color[..channels]);
            for c in 0..channels {
                color[c] = raw_color[c].clamp(0.0, 1.0);
            }
        }
        splats.push(Splat {
            index,
            depth: dot(p.position, dir),
            mean: [
                dot(p.position, ju) + view.width as f64 / 2.0,
                dot(p.position, jv) + view.height as f64 / 2.0,
            ],
            cov,
            conic,
            raw_color,
            color,
            rot,
            quat_norm: qn,
            quat,
        });
    }
    // back-to-front, stable on index; composited in reverse
    splats.sort_by(|a, b| b.depth.total_cmp(&a.depth).then(a.index.cmp(&b.index)));
    splats.reverse();

    let bg: Vec<f64> = match mode {
        ColorMode::SingleChannel(ch) => vec![ch.apply(settings.background)],
        _ => settings.background.to_vec(),
    };
    let (h, w) = (view.height, view.width);
    let mut accum = vec![0.0; h * w * channels];
    let mut transmit = vec![1.0; h * w];
    let mut contribs = Vec::new();

    for (si, s) in splats.iter().enumerate() {
        let alpha_peak = cloud.points[s.index].opacity;
        let rx = 3.0 * s.cov[0].sqrt();
        let ry = 3.0 * s.cov[2].sqrt();
        let Some((c0, c1)) = pixel_span(s.mean[0] - rx, s.mean[0] + rx, w) else { continue };
        let Some((r0, r1)) = pixel_span(s.mean[1] - ry, s.mean[1] + ry, h) else { continue };
        for row in r0..r1 {
            let dy = row as f64 + 0.5 - s.mean[1];
            for col in c0..c1 {
                let dx = col as f64 + 0.5 - s.mean[0];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > CUTOFF {
                    continue;
                }
                let pix = row * w + col;
                let alpha = alpha_peak * (-0.5 * q).exp();
                let t = transmit[pix];
                for c in 0..channels {
                    accum[pix * channels + c] += s.color[c] * alpha * t;
                }
                transmit[pix] = t * (1.0 - alpha);
                stats.contributions += 1;
                if record {
                    contribs.push(Contribution {
                        splat: si as u32,
                        pixel: pix as u32,
                        alpha,
                        transmit: t,
                    });
                }
            }
        }
    }
    for pix in 0..h * w {
        for c in 0..channels {
            let v = accum[pix * channels + c] + transmit[pix] * bg[c];
            accum[pix * channels + c] = v.clamp(0.0, 1.0);
        }
    }
    Ok(Forward {
        image: ImageBuffer {
            height: h,
            width: w,
            channels,
            data: accum,
        },
        splats,
        contribs,
        basis,
        degree,
        channels,
        stats,
    })
}

/// Pixel index range whose centers may fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let a = (lo - 0.5).ceil().max(0.0);
    let b = (hi - 0.5).floor().min(n as f64 - 1.0);
    (a <= b).then(|| (a as usize, b as usize + 1))
}

fn backward(
    cloud: &SplatCloud,
    view: &View,
    settings: &RenderSettings,
    fwd: &Forward,
    d_pixels: &[f64],
) -> (GradientSet, RenderStats) {
    let channels = fwd.channels;
    let w = view.width;
    let mut grads = GradientSet::zeros(cloud);
    let mut stats = fwd.stats;

    let bg: Vec<f64> = match cloud.color_mode {
        ColorMode::SingleChannel(ch) => vec![ch.apply(settings.background)],
        _ => settings.background.to_vec(),
    };
    // color composited behind the current splat, per pixel
    let mut behind: Vec<f64> = (0..view.height * w).flat_map(|_| bg.iter().copied()).collect();

    let ns = fwd.splats.len();
    let mut g_color = vec![[0.0f64; 3]; ns];
    let mut g_opacity = vec![0.0f64; ns];
    let mut g_mean = vec![[0.0f64; 2]; ns];
    let mut g_conic = vec![[0.0f64; 3]; ns];

    // final clamp on pixels is inactive for convex combinations of [0,1] colors
    for c in fwd.contribs.iter().rev() {
        let si = c.splat as usize;
        let s = &fwd.splats[si];
        let pix = c.pixel as usize;
        let mut g_alpha = 0.0;
        for ch in 0..channels {
            let gp = d_pixels[pix * channels + ch];
            let b = &mut behind[pix * channels + ch];
            g_color[si][ch] += gp * c.alpha * c.transmit;
            g_alpha += gp * c.transmit * (s.color[ch] - *b);
            *b = c.alpha * s.color[ch] + (1.0 - c.alpha) * *b;
        }
        let opacity = cloud.points[s.index].opacity;
        let row = (pix / w) as f64;
        let col = (pix % w) as f64;
        let dx = col + 0.5 - s.mean[0];
        let dy = row + 0.5 - s.mean[1];
        let gauss = if opacity > 0.0 {
            c.alpha / opacity
        } else {
            let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
            (-0.5 * q).exp()
        };
        g_opacity[si] += g_alpha * gauss;
        let g_q = g_alpha * (-0.5 * c.alpha);
        let [a, b, cc] = s.conic;
        g_mean[si][0] += g_q * -2.0 * (a * dx + b * dy);
        g_mean[si][1] += g_q * -2.0 * (b * dx + cc * dy);
        g_conic[si][0] += g_q * dx * dx;
        g_conic[si][1] += g_q * 2.0 * dx * dy;
        g_conic[si][2] += g_q * dy * dy;
    }

    let (_, u, v) = view.axes();
    let inv_px = 1.0 / view.pixel_size;
    let (ju, jv) = (scale3(u, inv_px), scale3(v, inv_px));
    let n_basis = basis_len(fwd.degree);

    for (si, s) in fwd.splats.iter().enumerate() {
        let i = s.index;
        let p = &cloud.points[i];
        grads.opacity[i] = g_opacity[si];
        grads.position[i] = add3(scale3(ju, g_mean[si][0]), scale3(jv, g_mean[si][1]));

        // conic = inverse(cov): dL/dcov = -inv * G * inv with G symmetric
        let inv = [[s.conic[0], s.conic[1]], [s.conic[1], s.conic[2]]];
        let g = [
            [g_conic[si][0], 0.5 * g_conic[si][1]],
            [0.5 * g_conic[si][1], g_conic[si][2]],
        ];
        let ig = mat2_mul(inv, g);
        let m = mat2_mul(ig, inv);
        let (g_a, g_b, g_c) = (-m[0][0], -2.0 * m[0][1], -m[1][1]);

        // cov = (ju^T S ju, ju^T S jv, jv^T S jv)
        let mut g_sigma = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                g_sigma[r][c] = g_a * ju[r] * ju[c] + g_b * ju[r] * jv[c] + g_c * jv[r] * jv[c];
            }
        }
        // Sigma = M M^T, M = R diag(scale)
        let mmat = mat_scale_cols(s.rot, p.scale);
        let sym = mat_add(g_sigma, transpose(g_sigma));
        let g_m = mat_mul(sym, mmat);
        let mut g_rot = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                grads.scale[i][c] += g_m[r][c] * s.rot[r][c];
                g_rot[r][c] = g_m[r][c] * p.scale[c];
            }
        }
        let g_qhat = quat_grad(s.quat, g_rot);
        let proj = (0..4).map(|k| g_qhat[k] * s.quat[k]).sum::<f64>();
        for k in 0..4 {
            grads.rotation[i][k] = (g_qhat[k] - s.quat[k] * proj) / s.quat_norm;
        }

        if let (Some(sh), Some(gsh)) = (p.sh.as_ref(), grads.sh.as_mut()) {
            stats.sh_grad_mults += sh_backward(sh, &s.raw_color, &g_color[si], &fwd.basis[..n_basis], &mut gsh[i]);
        }
    }
    (grads, stats)
}

fn sh_backward(sh: &ShCoefficients, raw: &[f64; 3], g_color: &[f64; 3], basis: &[f64], out: &mut [f64]) -> u64 {
    let per = sh.per_channel();
    for c in 0..sh.channels() {
        let g_raw = if raw[c] > 0.0 && raw[c] < 1.0 { g_color[c] } else { 0.0 };
        for (k, b) in basis.iter().enumerate() {
            out[c * per + k] = g_raw * b;
        }
    }
    (sh.channels() * basis.len()) as u64
}

type Mat3 = [[f64; 3]; 3];

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    a.map(|x| x * s)
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm4(q: [f64; 4]) -> f64 {
    q.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn quad(a: [f64; 3], m: Mat3, b: [f64; 3]) -> f64 {
    (0..3)
        .map(|r| a[r] * (0..3).map(|c| m[r][c] * b[c]).sum::<f64>())
        .sum()
}

fn mat_scale_cols(m: Mat3, s: [f64; 3]) -> Mat3 {
    let mut out = m;
    for row in &mut out {
        for c in 0..3 {
            row[c] *= s[c];
        }
    }
    out
}

fn mat_mul(a: Mat3, b: Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// `a * a^T`-style product `a * b^T`.
fn mat_mul_t(a: Mat3, b: Mat3) -> Mat3 {
    mat_mul(a, transpose(b))
}

fn transpose(a: Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[c][r];
        }
    }
    out
}

fn mat_add(a: Mat3, b: Mat3) -> Mat3 {
    let mut out = a;
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] += b[r][c];
        }
    }
    out
}

fn mat2_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Rotation matrix of a unit `(w, x, y, z)` quaternion.
pub(crate) fn quat_to_mat(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Gradient of `sum(g .* R(q))` with respect to the (unit) quaternion entries.
fn quat_grad(q: [f64; 4], g: Mat3) -> [f64; 4] {
    let [w, x, y, z] = q;
    let dw = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let dx = [[0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]];
    let dy = [[-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]];
    let dz = [[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]];
    let contract = |d: Mat3| -> f64 {
        2.0 * (0..3)
            .map(|r| (0..3).map(|c| g[r][c] * d[r][c]).sum::<f64>())
            .sum::<f64>()
    };
    [contract(dw), contract(dx), contract(dy), contract(dz)]
}

//! Per-iteration learning-rate schedules.
//!
//! Rectangular waves are expressed over the training fraction `t / T`. Sine and
//! cosine kinds are multiplicative factors around 1 applied to a base rate;
//! linear and exponential kinds interpolate between two `(iteration, rate)`
//! endpoints directly.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("{what} = {value} outside its domain")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid schedule: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ScheduleError>;

fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(ScheduleError::Config(msg.into()))
}

/// Levels used by the `rw*` presets.
pub const RW_LEVELS: [f64; 3] = [1e-3, 1e-6, 1e-9];

/// Three-level piecewise-constant wave over `x in [0, 1]`.
///
/// `x <= p1` gives `a1`, `p1 < x <= p2` gives `a2`, anything later `a3`.
pub fn rect_wave(x: f64, levels: [f64; 3], breaks: [f64; 2]) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ScheduleError::Domain { what: "x", value: x });
    }
    Ok(if x <= breaks[0] {
        levels[0]
    } else if x <= breaks[1] {
        levels[1]
    } else {
        levels[2]
    })
}

fn check_progress(t: f64, total: f64) -> Result<()> {
    if total <= 0.0 {
        return config("total iterations must be >= 1");
    }
    if !(0.0..=total).contains(&t) {
        return Err(ScheduleError::Domain { what: "t", value: t });
    }
    Ok(())
}

/// `a/2 * sin(b * t/T * 2pi + pi/2) + 1`
pub fn sine_mod(t: f64, total: f64, amplitude: f64, frequency: f64) -> Result<f64> {
    check_progress(t, total)?;
    Ok(amplitude / 2.0 * (frequency * t / total * 2.0 * PI + FRAC_PI_2).sin() + 1.0)
}

/// `a/2 * cos(b * t/T * 2pi + pi) + 1`
pub fn cosine_mod(t: f64, total: f64, amplitude: f64, frequency: f64) -> Result<f64> {
    check_progress(t, total)?;
    Ok(amplitude / 2.0 * (frequency * t / total * 2.0 * PI + PI).cos() + 1.0)
}

fn interp_weight(t: f64, t1: f64, t2: f64) -> Result<f64> {
    if t1 >= t2 {
        return config(format!("endpoint iterations must satisfy t1 < t2, got {t1} and {t2}"));
    }
    if !(t1..=t2).contains(&t) {
        return Err(ScheduleError::Domain { what: "t", value: t });
    }
    Ok((t - t1) / (t2 - t1))
}

/// Line through `(t1, p1)` and `(t2, p2)`; hits both endpoints exactly.
pub fn linear_lr(t: f64, start: (f64, f64), end: (f64, f64)) -> Result<f64> {
    let w = interp_weight(t, start.0, end.0)?;
    Ok((1.0 - w) * start.1 + w * end.1)
}

/// `E(t) = eps * exp(delta * t)` through both endpoints; returns `(eps, delta)`.
pub fn exp_fit(start: (f64, f64), end: (f64, f64)) -> Result<(f64, f64)> {
    if start.1 <= 0.0 || end.1 <= 0.0 {
        return config("exponential endpoints need positive rates");
    }
    if start.0 >= end.0 {
        return config("exponential endpoints need t1 < t2");
    }
    let delta = (end.1 / start.1).ln() / (end.0 - start.0);
    Ok((start.1 * (-delta * start.0).exp(), delta))
}

/// Exponential decay/growth through both endpoints.
///
/// Evaluated as the geometric interpolation `p1^(1-w) * p2^w`, which is the same
/// curve as [`exp_fit`] but lands on the endpoint rates exactly.
pub fn exp_lr(t: f64, start: (f64, f64), end: (f64, f64)) -> Result<f64> {
    if start.1 <= 0.0 || end.1 <= 0.0 {
        return config("exponential endpoints need positive rates");
    }
    let w = interp_weight(t, start.0, end.0)?;
    Ok(start.1.powf(1.0 - w) * end.1.powf(w))
}

/// One learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant {
        rate: f64,
    },
    RectWave {
        levels: [f64; 3],
        breaks: [f64; 2],
    },
    Sine {
        base_rate: f64,
        amplitude: f64,
        frequency: f64,
    },
    Cosine {
        base_rate: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Endpoint iterations default to `1` and `T`.
    Linear {
        start_rate: f64,
        end_rate: f64,
        #[serde(default)]
        start_iter: Option<u64>,
        #[serde(default)]
        end_iter: Option<u64>,
    },
    Exponential {
        start_rate: f64,
        end_rate: f64,
        #[serde(default)]
        start_iter: Option<u64>,
        #[serde(default)]
        end_iter: Option<u64>,
    },
}

impl ScheduleSpec {
    pub fn constant(rate: f64) -> Self {
        Self::Constant { rate }
    }

    /// Parses a compact schedule description.
    ///
    /// Accepted forms: a bare number (constant), `rw0-2`, `rw0-2-4`, `rw0-3-6`,
    /// `sine:A,B`, `cosine:A,B` (modulating `base_rate`), `linear:P1,P2` and
    /// `exp:P1,P2`.
    pub fn parse(text: &str, base_rate: f64) -> Result<Self> {
        let text = text.trim();
        if let Ok(rate) = text.parse::<f64>() {
            return Ok(Self::constant(rate)).and_then(Self::validated);
        }
        let breaks = match text {
            "rw0-2" => Some([0.2, 1.0]),
            "rw0-2-4" => Some([0.2, 0.4]),
            "rw0-3-6" => Some([0.3, 0.6]),
            _ => None,
        };
        if let Some(breaks) = breaks {
            return Ok(Self::RectWave {
                levels: RW_LEVELS,
                breaks,
            });
        }
        let Some((kind, args)) = text.split_once(':') else {
            return config(format!("unrecognized schedule '{text}'"));
        };
        let nums = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ScheduleError::Config(format!("'{text}': {e}")))?;
        let [a, b] = nums[..] else {
            return config(format!("'{text}' needs exactly two parameters"));
        };
        let spec = match kind {
            "sine" => Self::Sine {
                base_rate,
                amplitude: a,
                frequency: b,
            },
            "cosine" => Self::Cosine {
                base_rate,
                amplitude: a,
                frequency: b,
            },
            "linear" => Self::Linear {
                start_rate: a,
                end_rate: b,
                start_iter: None,
                end_iter: None,
            },
            "exp" | "exponential" => Self::Exponential {
                start_rate: a,
                end_rate: b,
                start_iter: None,
                end_iter: None,
            },
            _ => return config(format!("unknown schedule kind '{kind}'")),
        };
        spec.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                config(format!("{name} must be a finite non-negative rate, got {v}"))
            }
        };
        match *self {
            Self::Constant { rate } => nonneg("rate", rate),
            Self::RectWave { levels, breaks } => {
                for l in levels {
                    nonneg("level", l)?;
                }
                if !(0.0 <= breaks[0] && breaks[0] <= breaks[1] && breaks[1] <= 1.0) {
                    return config(format!("breakpoints must satisfy 0 <= p1 <= p2 <= 1, got {breaks:?}"));
                }
                Ok(())
            }
            Self::Sine { base_rate, amplitude, .. } | Self::Cosine { base_rate, amplitude, .. } => {
                nonneg("base_rate", base_rate)?;
                // factors stay non-negative only while a <= 2
                if !(0.0..=2.0).contains(&amplitude) {
                    return config(format!("amplitude must lie in [0, 2], got {amplitude}"));
                }
                Ok(())
            }
            Self::Linear { start_rate, end_rate, start_iter, end_iter } => {
                nonneg("start_rate", start_rate)?;
                nonneg("end_rate", end_rate)?;
                check_iters(start_iter, end_iter)
            }
            Self::Exponential { start_rate, end_rate, start_iter, end_iter } => {
                if !(start_rate > 0.0 && end_rate > 0.0) {
                    return config("exponential endpoints need positive rates");
                }
                check_iters(start_iter, end_iter)
            }
        }
    }

    /// Rate at iteration `t` of a run with `total` iterations.
    pub fn eval(&self, t: u64, total: u64) -> Result<f64> {
        if total == 0 {
            return config("total iterations must be >= 1");
        }
        if t > total {
            return Err(ScheduleError::Domain { what: "t", value: t as f64 });
        }
        let (tf, tot) = (t as f64, total as f64);
        match *self {
            Self::Constant { rate } => Ok(rate),
            Self::RectWave { levels, breaks } => rect_wave(tf / tot, levels, breaks),
            Self::Sine { base_rate, amplitude, frequency } => {
                Ok(base_rate * sine_mod(tf, tot, amplitude, frequency)?)
            }
            Self::Cosine { base_rate, amplitude, frequency } => {
                Ok(base_rate * cosine_mod(tf, tot, amplitude, frequency)?)
            }
            Self::Linear { start_rate, end_rate, start_iter, end_iter } => {
                let (t1, t2) = endpoints(start_iter, end_iter, total)?;
                linear_lr(tf.clamp(t1, t2), (t1, start_rate), (t2, end_rate))
            }
            Self::Exponential { start_rate, end_rate, start_iter, end_iter } => {
                let (t1, t2) = endpoints(start_iter, end_iter, total)?;
                exp_lr(tf.clamp(t1, t2), (t1, start_rate), (t2, end_rate))
            }
        }
    }

    /// True when the schedule yields zero at every iteration.
    pub fn is_zero(&self) -> bool {
        match *self {
            Self::Constant { rate } => rate == 0.0,
            Self::RectWave { levels, .. } => levels.iter().all(|&l| l == 0.0),
            Self::Sine { base_rate, .. } | Self::Cosine { base_rate, .. } => base_rate == 0.0,
            Self::Linear { start_rate, end_rate, .. } => start_rate == 0.0 && end_rate == 0.0,
            Self::Exponential { .. } => false,
        }
    }
}

fn check_iters(start: Option<u64>, end: Option<u64>) -> Result<()> {
    match (start, end) {
        (Some(a), Some(b)) if a >= b => config(format!("start_iter {a} must precede end_iter {b}")),
        _ => Ok(()),
    }
}

/// Resolves the default endpoints `t1 = 1`, `t2 = T`. A one-iteration run
/// collapses to the start rate.
fn endpoints(start: Option<u64>, end: Option<u64>, total: u64) -> Result<(f64, f64)> {
    let t1 = start.unwrap_or(1) as f64;
    let t2 = end.unwrap_or(total) as f64;
    if t1 >= t2 {
        return Ok((t1, t1 + 1.0));
    }
    Ok((t1, t2))
}

/// Learning-rate schedules for every optimized parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateGroupConfig {
    pub xyz: ScheduleSpec,
    pub scaling: ScheduleSpec,
    pub opacity: ScheduleSpec,
    pub rotation: ScheduleSpec,
    pub feature: ScheduleSpec,
}

/// Parameter groups addressed by [`RateGroupConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateGroup {
    Xyz,
    Scaling,
    Opacity,
    Rotation,
    Feature,
}

impl RateGroup {
    pub const ALL: [RateGroup; 5] = [
        RateGroup::Xyz,
        RateGroup::Scaling,
        RateGroup::Opacity,
        RateGroup::Rotation,
        RateGroup::Feature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateGroup::Xyz => "xyz",
            RateGroup::Scaling => "scaling",
            RateGroup::Opacity => "opacity",
            RateGroup::Rotation => "rotation",
            RateGroup::Feature => "feature",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }
}

/// Rates for each group at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupRates {
    pub xyz: f64,
    pub scaling: f64,
    pub opacity: f64,
    pub rotation: f64,
    pub feature: f64,
}

impl RateGroupConfig {
    pub fn get(&self, group: RateGroup) -> &ScheduleSpec {
        match group {
            RateGroup::Xyz => &self.xyz,
            RateGroup::Scaling => &self.scaling,
            RateGroup::Opacity => &self.opacity,
            RateGroup::Rotation => &self.rotation,
            RateGroup::Feature => &self.feature,
        }
    }

    pub fn get_mut(&mut self, group: RateGroup) -> &mut ScheduleSpec {
        match group {
            RateGroup::Xyz => &mut self.xyz,
            RateGroup::Scaling => &mut self.scaling,
            RateGroup::Opacity => &mut self.opacity,
            RateGroup::Rotation => &mut self.rotation,
            RateGroup::Feature => &mut self.feature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        RateGroup::ALL
            .iter()
            .try_for_each(|&g| self.get(g).validate())
    }

    pub fn eval(&self, t: u64, total: u64) -> Result<GroupRates> {
        Ok(GroupRates {
            xyz: self.xyz.eval(t, total)?,
            scaling: self.scaling.eval(t, total)?,
            opacity: self.opacity.eval(t, total)?,
            rotation: self.rotation.eval(t, total)?,
            feature: self.feature.eval(t, total)?,
        })
    }
}

impl Default for RateGroupConfig {
    /// Constant rates tuned for the desk-scale renderer's mean-reduced losses.
    fn default() -> Self {
        Self {
            xyz: ScheduleSpec::constant(0.2),
            scaling: ScheduleSpec::constant(2e-2),
            opacity: ScheduleSpec::constant(10.0),
            rotation: ScheduleSpec::constant(0.5),
            feature: ScheduleSpec::constant(40.0),
        }
    }
}

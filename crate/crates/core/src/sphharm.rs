//! Real spherical harmonics up to degree 3.
//!
//! Legendre polynomials use the three-term recursion
//! `(l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}`; associated functions start from
//! `P_m^m = (2m-1)!! (1-x^2)^{m/2}` (no Condon-Shortley phase) and recurse
//! upward in `l`. The real basis is
//!
//! ```text
//! Y_l^m = sqrt(2) K_l^m cos(m phi) P_l^m(cos theta)    m > 0
//! Y_l^m = sqrt(2) K_l^m sin(-m phi) P_l^-m(cos theta)  m < 0
//! Y_l^0 = K_l^0 P_l(cos theta)
//! K_l^m = sqrt((2l+1)/(4 pi) * (l-|m|)! / (l+|m|)!)
//! ```
//!
//! Flat index of `(l, m)` is `l^2 + l + m`.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

/// Highest supported SH degree.
pub const MAX_DEGREE: usize = 3;

/// Offset added to the SH dot product before clamping to `[0, 1]`.
pub const COLOR_OFFSET: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShError {
    #[error("argument x = {0} outside [-1, 1]")]
    Domain(f64),
    #[error("order m = {m} invalid for degree l = {l}")]
    Order { l: i64, m: i64 },
    #[error("degree {0} outside the supported range 0..=3")]
    Degree(usize),
    #[error("coefficient count {found} does not match {expected} for degree {degree} x {channels} channels")]
    CoeffCount {
        degree: usize,
        channels: usize,
        expected: usize,
        found: usize,
    },
}

pub type Result<T> = std::result::Result<T, ShError>;

fn check_x(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(ShError::Domain(x));
    }
    Ok(())
}

/// Number of basis functions for degrees `0..=degree`.
pub const fn basis_len(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree/order pair with a flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    pub l: usize,
    pub m: i64,
}

impl ShIndex {
    pub fn new(l: usize, m: i64) -> Result<Self> {
        if l > MAX_DEGREE {
            return Err(ShError::Degree(l));
        }
        if m.unsigned_abs() as usize > l {
            return Err(ShError::Order { l: l as i64, m });
        }
        Ok(Self { l, m })
    }

    pub fn flat(self) -> usize {
        ((self.l * self.l + self.l) as i64 + self.m) as usize
    }

    pub fn from_flat(i: usize) -> Self {
        let l = (i as f64).sqrt() as usize;
        let m = i as i64 - (l * l + l) as i64;
        Self { l, m }
    }
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre_p(l: usize, x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(legendre_unchecked(l, x))
}

fn legendre_unchecked(l: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if l == 0 {
        return prev;
    }
    for k in 1..l {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Associated Legendre function `P_l^m(x)` for `0 <= m <= l`.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> Result<f64> {
    check_x(x)?;
    if m > l {
        return Err(ShError::Order {
            l: l as i64,
            m: m as i64,
        });
    }
    Ok(assoc_unchecked(l, m, x))
}

fn assoc_unchecked(l: usize, m: usize, x: f64) -> f64 {
    let sin = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * sin;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    let mut pm0 = pmm;
    for ll in (m + 2)..=l {
        let llf = ll as f64;
        let next = ((2.0 * llf - 1.0) * x * pm1 - (llf + m as f64 - 1.0) * pm0) / (llf - m as f64);
        pm0 = pm1;
        pm1 = next;
    }
    pm1
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Normalization factor `K_l^m`.
pub fn sh_norm_k(l: usize, m: i64) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return Err(ShError::Order { l: l as i64, m });
    }
    Ok(((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt())
}

/// Real spherical harmonic `Y_l^m(theta, phi)`.
pub fn sh_eval(l: usize, m: i64, theta: f64, phi: f64) -> Result<f64> {
    let k = sh_norm_k(l, m)?;
    let x = theta.cos().clamp(-1.0, 1.0);
    let am = m.unsigned_abs() as usize;
    let p = assoc_unchecked(l, am, x);
    Ok(match m {
        0 => k * p,
        m if m > 0 => SQRT_2 * k * (m as f64 * phi).cos() * p,
        m => SQRT_2 * k * ((-m) as f64 * phi).sin() * p,
    })
}

/// All basis values for degrees `0..=max_degree`, in flat-index order.
pub fn sh_basis(max_degree: usize, theta: f64, phi: f64) -> Result<Vec<f64>> {
    if max_degree > MAX_DEGREE {
        return Err(ShError::Degree(max_degree));
    }
    let mut out = vec![0.0; basis_len(max_degree)];
    sh_basis_into(max_degree, theta, phi, &mut out);
    Ok(out)
}

/// Fills `out[..basis_len(max_degree)]`; returns the number of basis terms
/// written. `max_degree` must already be validated.
pub fn sh_basis_into(max_degree: usize, theta: f64, phi: f64, out: &mut [f64]) -> usize {
    let x = theta.cos().clamp(-1.0, 1.0);
    // P_l^m for l, m <= 3
    let mut plm = [[0.0f64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
    for (l, row) in plm.iter_mut().enumerate().take(max_degree + 1) {
        for (m, v) in row.iter_mut().enumerate().take(l + 1) {
            *v = assoc_unchecked(l, m, x);
        }
    }
    for l in 0..=max_degree {
        let base = l * l + l;
        let k0 = sh_norm_k(l, 0).expect("m = 0 is always valid");
        out[base] = k0 * plm[l][0];
        for m in 1..=l {
            let k = SQRT_2 * sh_norm_k(l, m as i64).expect("|m| <= l");
            let mf = m as f64;
            out[base + m] = k * (mf * phi).cos() * plm[l][m];
            out[base - m] = k * (mf * phi).sin() * plm[l][m];
        }
    }
    basis_len(max_degree)
}

/// Learned SH coefficients for one point, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    degree: usize,
    channels: usize,
    coeffs: Vec<f64>,
}

impl ShCoefficients {
    pub fn zeros(degree: usize, channels: usize) -> Result<Self> {
        Self::from_vec(degree, channels, vec![0.0; basis_len(degree) * channels])
    }

    pub fn from_vec(degree: usize, channels: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(ShError::Degree(degree));
        }
        let expected = basis_len(degree) * channels;
        if coeffs.len() != expected || channels == 0 {
            return Err(ShError::CoeffCount {
                degree,
                channels,
                expected,
                found: coeffs.len(),
            });
        }
        Ok(Self {
            degree,
            channels,
            coeffs,
        })
    }

    /// Coefficients whose DC terms reproduce `color` exactly (while in `[0, 1]`).
    pub fn from_dc_color(degree: usize, color: &[f64]) -> Result<Self> {
        let mut sh = Self::zeros(degree, color.len())?;
        let y00 = sh_norm_k(0, 0).expect("valid");
        for (c, &v) in color.iter().enumerate() {
            sh.channel_mut(c)[0] = (v - COLOR_OFFSET) / y00;
        }
        Ok(sh)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn per_channel(&self) -> usize {
        basis_len(self.degree)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.per_channel();
        &self.coeffs[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.per_channel();
        &mut self.coeffs[c * n..(c + 1) * n]
    }

    /// Truncates or zero-extends to `degree`.
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        let mut out = Self::zeros(degree, self.channels)?;
        let keep = basis_len(degree.min(self.degree));
        for c in 0..self.channels {
            out.channel_mut(c)[..keep].copy_from_slice(&self.channel(c)[..keep]);
        }
        Ok(out)
    }

    /// Linear combination of channels, e.g. luma weights. The color offset is
    /// preserved when the weights sum to one.
    pub fn mix_channels(&self, weights: &[f64]) -> Self {
        let n = self.per_channel();
        let mut coeffs = vec![0.0; n];
        for (c, &w) in weights.iter().enumerate().take(self.channels) {
            for (dst, src) in coeffs.iter_mut().zip(self.channel(c)) {
                *dst += w * src;
            }
        }
        Self {
            degree: self.degree,
            channels: 1,
            coeffs,
        }
    }
}

/// View-dependent color: per channel `clamp(dot(coeffs, basis) + 0.5, 0, 1)`.
pub fn sh_color(coeffs: &ShCoefficients, theta: f64, phi: f64) -> Vec<f64> {
    let mut basis = [0.0; basis_len(MAX_DEGREE)];
    sh_basis_into(coeffs.degree, theta, phi, &mut basis);
    let mut out = vec![0.0; coeffs.channels];
    color_from_basis(coeffs, coeffs.degree, &basis, &mut out);
    out
}

/// Evaluates the unclamped pre-activation `dot + 0.5` for each channel using the
/// first `basis_len(degree)` terms. Returns the number of coefficient multiplies.
pub fn raw_color_from_basis(
    coeffs: &ShCoefficients,
    degree: usize,
    basis: &[f64],
    out: &mut [f64],
) -> u64 {
    let n = basis_len(degree);
    for (c, o) in out.iter_mut().enumerate().take(coeffs.channels) {
        let ch = &coeffs.channel(c)[..n];
        *o = ch.iter().zip(&basis[..n]).map(|(a, b)| a * b).sum::<f64>() + COLOR_OFFSET;
    }
    (n * coeffs.channels) as u64
}

/// Clamped variant of [`raw_color_from_basis`].
pub fn color_from_basis(
    coeffs: &ShCoefficients,
    degree: usize,
    basis: &[f64],
    out: &mut [f64],
) -> u64 {
    let ops = raw_color_from_basis(coeffs, degree, basis, out);
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    ops
}

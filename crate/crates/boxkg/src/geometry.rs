//! Numeric kernel: Gumbel boxes, expected volumes, intersections,
//! conditional probabilities and the vector-to-box distance.
//!
//! All functions here are pure. Where training needs gradients, the forward
//! routines also return partial derivatives with respect to the box corners;
//! the model modules chain those into parameter gradients.

use crate::error::{BoxKgError, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntersectionMode {
    /// Gumbel max/min-stable logsumexp corners; gives gradients even when
    /// boxes are disjoint.
    Smooth,
    /// Coordinate-wise max of mins and min of maxes. The result may be an
    /// empty box (lo >= hi); the softplus volume still applies.
    Hard,
}

#[derive(Debug, Clone)]
pub struct BoxConfig {
    pub dim: usize,
    /// Global Gumbel temperature, > 0.
    pub beta: f64,
    pub euler_gamma: f64,
    /// Base balancing scalar for the vector-to-box distance, in (0, 1).
    pub alpha: f64,
    /// Positive floor for volumes used in reciprocals.
    pub volume_clamp: f64,
    pub intersection: IntersectionMode,
}

impl BoxConfig {
    pub fn new(dim: usize) -> Self {
        BoxConfig {
            dim,
            beta: 1.0,
            euler_gamma: EULER_GAMMA,
            alpha: 0.5,
            volume_clamp: 1e-10,
            intersection: IntersectionMode::Smooth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(BoxKgError::BadConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BoxKgError::BadConfig(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.volume_clamp > 0.0) {
            return Err(BoxKgError::BadConfig("volume_clamp must be > 0".into()));
        }
        Ok(())
    }
}

/// A Gumbel box parameterized by center and strictly positive offset.
/// Corners are `lo = center - offset`, `hi = center + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelBox {
    pub center: Vec<f64>,
    pub offset: Vec<f64>,
}

impl GumbelBox {
    pub fn new(center: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if center.len() != offset.len() {
            return Err(BoxKgError::DimMismatch {
                expected: center.len(),
                got: offset.len(),
            });
        }
        if offset.iter().any(|&o| !(o > 0.0)) {
            return Err(BoxKgError::BadConfig("box offset must be strictly positive".into()));
        }
        Ok(GumbelBox { center, offset })
    }

    /// Box from explicit corners; requires lo < hi coordinate-wise.
    pub fn from_corners(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let offset: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        GumbelBox::new(center, offset)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lo(&self) -> Vec<f64> {
        self.center.iter().zip(&self.offset).map(|(c, o)| c - o).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center.iter().zip(&self.offset).map(|(c, o)| c + o).collect()
    }
}

/// Numerically stable log(1 + exp(x)).
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable softplus; same as [`log1pexp`].
#[inline]
pub fn softplus(x: f64) -> f64 {
    log1pexp(x)
}

/// Inverse of softplus, for initializing pre-offsets at a target offset.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log expected volume of a box given its corner parameters, with partial
/// derivatives with respect to each corner coordinate.
///
/// `log E[Vol] = sum_i ln( beta * log(1 + exp((hi_i - lo_i)/beta - 2*gamma)) )`
#[derive(Debug, Clone)]
pub struct LogVolume {
    pub value: f64,
    /// d logVol / d lo_i
    pub d_lo: Vec<f64>,
    /// d logVol / d hi_i
    pub d_hi: Vec<f64>,
}

pub fn log_volume_corners(lo: &[f64], hi: &[f64], cfg: &BoxConfig) -> Result<LogVolume> {
    if lo.len() != hi.len() {
        return Err(BoxKgError::DimMismatch {
            expected: lo.len(),
            got: hi.len(),
        });
    }
    let beta = cfg.beta;
    let mut value = 0.0;
    let mut d_lo = vec![0.0; lo.len()];
    let mut d_hi = vec![0.0; lo.len()];
    for i in 0..lo.len() {
        if !lo[i].is_finite() || !hi[i].is_finite() {
            return Err(BoxKgError::NonFinite("box corner".into()));
        }
        let z = (hi[i] - lo[i]) / beta - 2.0 * cfg.euler_gamma;
        let side = beta * log1pexp(z); // expected side length, > 0
        value += side.ln();
        let d = sigmoid(z) / side; // d ln(side) / d hi_i
        d_hi[i] = d;
        d_lo[i] = -d;
    }
    Ok(LogVolume { value, d_lo, d_hi })
}

/// Expected (Gumbel) volume of a box; strictly positive for finite inputs.
pub fn expected_volume(b: &GumbelBox, cfg: &BoxConfig) -> Result<f64> {
    let lv = log_volume_corners(&b.lo(), &b.hi(), cfg)?;
    Ok(lv.value.exp())
}

/// Hard box volume `prod_i max(hi_i - lo_i, 0)`; the beta -> 0 limit.
pub fn hard_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| (b - a).max(0.0)).product()
}

/// Intersection corners plus the weight each input contributes to them.
///
/// `w_lo[i]` is d lo_int_i / d lo_x_i (the y share is 1 - w); same for `w_hi`.
#[derive(Debug, Clone)]
pub struct Intersection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub w_lo_x: Vec<f64>,
    pub w_hi_x: Vec<f64>,
}

pub fn intersect_corners(
    x_lo: &[f64],
    x_hi: &[f64],
    y_lo: &[f64],
    y_hi: &[f64],
    cfg: &BoxConfig,
) -> Result<Intersection> {
    let d = x_lo.len();
    if y_lo.len() != d || x_hi.len() != d || y_hi.len() != d {
        return Err(BoxKgError::DimMismatch {
            expected: d,
            got: y_lo.len(),
        });
    }
    let beta = cfg.beta;
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut w_lo_x = vec![0.0; d];
    let mut w_hi_x = vec![0.0; d];
    match cfg.intersection {
        IntersectionMode::Smooth => {
            for i in 0..d {
                // lo = beta * log(exp(xlo/b) + exp(ylo/b)), stably via max shift
                let (a, b) = (x_lo[i] / beta, y_lo[i] / beta);
                let m = a.max(b);
                lo[i] = beta * (m + ((a - m).exp() + (b - m).exp()).ln());
                w_lo_x[i] = sigmoid(a - b);
                // hi = -beta * log(exp(-xhi/b) + exp(-yhi/b))
                let (a, b) = (-x_hi[i] / beta, -y_hi[i] / beta);
                let m = a.max(b);
                hi[i] = -beta * (m + ((a - m).exp() + (b - m).exp()).ln());
                w_hi_x[i] = sigmoid(a - b);
            }
        }
        IntersectionMode::Hard => {
            for i in 0..d {
                if x_lo[i] >= y_lo[i] {
                    lo[i] = x_lo[i];
                    w_lo_x[i] = 1.0;
                } else {
                    lo[i] = y_lo[i];
                }
                if x_hi[i] <= y_hi[i] {
                    hi[i] = x_hi[i];
                    w_hi_x[i] = 1.0;
                } else {
                    hi[i] = y_hi[i];
                }
            }
        }
    }
    Ok(Intersection { lo, hi, w_lo_x, w_hi_x })
}

/// Intersection of two Gumbel boxes as corner parameters. May be "empty"
/// (lo >= hi) in hard mode.
pub fn intersect(x: &GumbelBox, y: &GumbelBox, cfg: &BoxConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = intersect_corners(&x.lo(), &x.hi(), &y.lo(), &y.hi(), cfg)?;
    Ok((r.lo, r.hi))
}

/// `E[Vol(x ∩ y)] / E[Vol(y)]`.
///
/// The ratio is returned raw; values exceeding 1 by less than 1e-9 (floating
/// point noise in smooth mode) are snapped to exactly 1.
pub fn conditional_probability(x: &GumbelBox, y: &GumbelBox, cfg: &BoxConfig) -> Result<f64> {
    let y_lo = y.lo();
    let y_hi = y.hi();
    let log_vol_y = log_volume_corners(&y_lo, &y_hi, cfg)?;
    if log_vol_y.value.exp() < cfg.volume_clamp {
        return Err(BoxKgError::DegenerateVolume(log_vol_y.value.exp()));
    }
    let inter = intersect_corners(&x.lo(), &x.hi(), &y_lo, &y_hi, cfg)?;
    let log_vol_int = log_volume_corners(&inter.lo, &inter.hi, cfg)?;
    let ratio = (log_vol_int.value - log_vol_y.value).exp();
    if ratio > 1.0 && ratio < 1.0 + 1e-9 {
        Ok(1.0)
    } else {
        Ok(ratio)
    }
}

/// Vector-to-box distance `f_d = dist_out + alpha * dist_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorBoxDistance {
    pub total: f64,
    pub dist_out: f64,
    pub dist_in: f64,
}

pub fn vector_to_box_distance(
    e: &[f64],
    c: &GumbelBox,
    alpha_value: f64,
) -> Result<VectorBoxDistance> {
    if e.len() != c.dim() {
        return Err(BoxKgError::DimMismatch {
            expected: c.dim(),
            got: e.len(),
        });
    }
    if !(alpha_value > 0.0 && alpha_value < 1.0) {
        return Err(BoxKgError::BadConfig(format!(
            "alpha_value must be in (0,1), got {alpha_value}"
        )));
    }
    let lo = c.lo();
    let hi = c.hi();
    let mut dist_out = 0.0;
    let mut dist_in = 0.0;
    for i in 0..e.len() {
        dist_out += (e[i] - hi[i]).max(0.0) + (lo[i] - e[i]).max(0.0);
        let clipped = e[i].max(lo[i]).min(hi[i]);
        dist_in += (c.center[i] - clipped).abs();
    }
    Ok(VectorBoxDistance {
        total: dist_out + alpha_value * dist_in,
        dist_out,
        dist_in,
    })
}

/// Cap on the `1/volume` sigmoid argument: beyond ~36 the sigmoid rounds
/// to exactly 1.0 in f64, which would push alpha onto its open bound.
pub const ALPHA_LOGIT_CAP: f64 = 30.0;

/// Volume-adaptive balancing coefficient
/// `alpha * sigmoid(1 / max(E[Vol(c)], volume_clamp))`, strictly in
/// (alpha/2, alpha).
pub fn adaptive_alpha(c: &GumbelBox, cfg: &BoxConfig) -> Result<f64> {
    let vol = expected_volume(c, cfg)?;
    let u = (1.0 / vol.max(cfg.volume_clamp)).min(ALPHA_LOGIT_CAP);
    Ok(cfg.alpha * sigmoid(u))
}

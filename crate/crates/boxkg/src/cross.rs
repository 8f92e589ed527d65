//! Cross-view module: entity-concept link distance with the volume-adaptive
//! balancing coefficient, and the sigmoid hinge objective over links.

use crate::error::{BoxKgError, Result};
use crate::geometry::{self, BoxConfig};
use crate::kgdata::Link;
use crate::params::{tables, GradBuffer, Params};

#[derive(Debug, Clone)]
pub struct CrossCfg {
    /// Hinge margin, > 0. Default 0.15.
    pub margin: f64,
    pub mean_reduce: bool,
}

impl Default for CrossCfg {
    fn default() -> Self {
        CrossCfg {
            margin: 0.15,
            mean_reduce: true,
        }
    }
}

/// Whether the parameter set carries a learned affine bridge from entity
/// space to box space (present iff d_vec != d_box).
pub fn has_bridge(params: &Params) -> bool {
    params.tables.contains_key(tables::BRIDGE_W)
}

/// Full forward pass of the link distance with every intermediate needed
/// for backprop.
struct LinkFwd {
    entity: usize,
    concept: usize,
    total: f64,
    dist_out: f64,
    dist_in: f64,
    e_box: Vec<f64>,   // bridged entity vector
    cen: Vec<f64>,
    sig_preoff: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    alpha_c: f64,
    // d alpha_c / d logVol (0 when the volume is clamped)
    d_alpha_d_logvol: f64,
    log_vol: geometry::LogVolume,
    bridged: bool,
}

fn link_forward(e: u32, c: u32, params: &Params, bcfg: &BoxConfig) -> Result<LinkFwd> {
    let e_vec = params.row(tables::ENTITY_VEC, e as usize)?;
    let cen = params.row(tables::CONCEPT_CENTER, c as usize)?.to_vec();
    let preoff = params.row(tables::CONCEPT_PREOFF, c as usize)?;
    let d_box = cen.len();

    let bridged = has_bridge(params);
    let e_box: Vec<f64> = if bridged {
        let w = params.table(tables::BRIDGE_W)?;
        let b = params.row(tables::BRIDGE_B, 0)?;
        if w.dim != e_vec.len() || w.rows != d_box {
            return Err(BoxKgError::DimMismatch { expected: d_box, got: w.rows });
        }
        (0..d_box)
            .map(|i| {
                let row = w.row(i);
                b[i] + row.iter().zip(e_vec).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    } else {
        if e_vec.len() != d_box {
            return Err(BoxKgError::DimMismatch { expected: d_box, got: e_vec.len() });
        }
        e_vec.to_vec()
    };

    let mut off = vec![0.0; d_box];
    let mut sig_preoff = vec![0.0; d_box];
    let mut lo = vec![0.0; d_box];
    let mut hi = vec![0.0; d_box];
    for i in 0..d_box {
        off[i] = geometry::softplus(preoff[i]);
        sig_preoff[i] = geometry::sigmoid(preoff[i]);
        lo[i] = cen[i] - off[i];
        hi[i] = cen[i] + off[i];
    }

    let log_vol = geometry::log_volume_corners(&lo, &hi, bcfg)?;
    let vol = log_vol.value.exp();
    let u = 1.0 / vol.max(bcfg.volume_clamp);
    let (alpha_c, d_alpha_d_logvol) = if vol > bcfg.volume_clamp && u < geometry::ALPHA_LOGIT_CAP {
        let s = geometry::sigmoid(u);
        // d alpha / d logVol = alpha * s(1-s) * du/dV * V = -alpha * s(1-s) * u
        (bcfg.alpha * s, -bcfg.alpha * s * (1.0 - s) * u)
    } else {
        // clamped or saturated region: alpha is constant there
        (bcfg.alpha * geometry::sigmoid(u.min(geometry::ALPHA_LOGIT_CAP)), 0.0)
    };

    let mut dist_out = 0.0;
    let mut dist_in = 0.0;
    for i in 0..d_box {
        dist_out += (e_box[i] - hi[i]).max(0.0) + (lo[i] - e_box[i]).max(0.0);
        let clipped = e_box[i].max(lo[i]).min(hi[i]);
        dist_in += (cen[i] - clipped).abs();
    }
    let total = dist_out + alpha_c * dist_in;
    if !total.is_finite() {
        return Err(BoxKgError::NonFinite("link distance".into()));
    }
    Ok(LinkFwd {
        entity: e as usize,
        concept: c as usize,
        total,
        dist_out,
        dist_in,
        e_box,
        cen,
        sig_preoff,
        lo,
        hi,
        alpha_c,
        d_alpha_d_logvol,
        log_vol,
        bridged,
    })
}

/// Accumulate gradients of `weight * f_d` into `grads`.
fn link_backward(
    fwd: &LinkFwd,
    weight: f64,
    params: &Params,
    grads: &mut GradBuffer,
) -> Result<()> {
    let d_box = fwd.cen.len();
    let mut d_e = vec![0.0; d_box];
    let mut d_cen = vec![0.0; d_box];
    let mut d_lo = vec![0.0; d_box];
    let mut d_hi = vec![0.0; d_box];

    // f_d = dist_out + alpha_c * dist_in; alpha_c depends on logVol(lo, hi).
    let d_dist_out = weight;
    let d_dist_in = weight * fwd.alpha_c;
    let d_alpha = weight * fwd.dist_in;

    for i in 0..d_box {
        // dist_out: at most one of the two hinges is active
        if fwd.e_box[i] > fwd.hi[i] {
            d_e[i] += d_dist_out;
            d_hi[i] -= d_dist_out;
        } else if fwd.e_box[i] < fwd.lo[i] {
            d_e[i] -= d_dist_out;
            d_lo[i] += d_dist_out;
        }
        // dist_in: |cen - clip(e)|
        let clipped = fwd.e_box[i].max(fwd.lo[i]).min(fwd.hi[i]);
        let sgn = if fwd.cen[i] > clipped {
            1.0
        } else if fwd.cen[i] < clipped {
            -1.0
        } else {
            0.0
        };
        d_cen[i] += d_dist_in * sgn;
        // d clip: routed to whichever argument is active
        let d_clip = -d_dist_in * sgn;
        if fwd.e_box[i] < fwd.lo[i] {
            d_lo[i] += d_clip;
        } else if fwd.e_box[i] > fwd.hi[i] {
            d_hi[i] += d_clip;
        } else {
            d_e[i] += d_clip;
        }
    }

    // alpha path into the corners through logVol
    let w_alpha = d_alpha * fwd.d_alpha_d_logvol;
    if w_alpha != 0.0 {
        for i in 0..d_box {
            d_lo[i] += w_alpha * fwd.log_vol.d_lo[i];
            d_hi[i] += w_alpha * fwd.log_vol.d_hi[i];
        }
    }

    // corners -> center / pre-offset
    let mut g_cen = vec![0.0; d_box];
    let mut g_preoff = vec![0.0; d_box];
    for i in 0..d_box {
        g_cen[i] = d_cen[i] + d_lo[i] + d_hi[i];
        g_preoff[i] = (d_hi[i] - d_lo[i]) * fwd.sig_preoff[i];
    }
    grads.add_row(tables::CONCEPT_CENTER, fwd.concept, &g_cen);
    grads.add_row(tables::CONCEPT_PREOFF, fwd.concept, &g_preoff);

    // bridged entity -> entity vector (and bridge weights)
    if fwd.bridged {
        let w = params.table(tables::BRIDGE_W)?;
        let e_vec = params.row(tables::ENTITY_VEC, fwd.entity)?;
        let d_vec = e_vec.len();
        let mut g_entity = vec![0.0; d_vec];
        for i in 0..d_box {
            if d_e[i] == 0.0 {
                continue;
            }
            let row = w.row(i);
            let acc = grads.row_mut(tables::BRIDGE_W, i, d_vec);
            for k in 0..d_vec {
                acc[k] += d_e[i] * e_vec[k];
                g_entity[k] += d_e[i] * row[k];
            }
        }
        grads.add_row(tables::BRIDGE_B, 0, &d_e);
        grads.add_row(tables::ENTITY_VEC, fwd.entity, &g_entity);
    } else {
        grads.add_row(tables::ENTITY_VEC, fwd.entity, &d_e);
    }
    Ok(())
}

/// Distance from an entity to the untransformed box of a concept, using the
/// volume-adaptive balancing coefficient.
pub fn link_distance(e: u32, c: u32, params: &Params, bcfg: &BoxConfig) -> Result<f64> {
    Ok(link_forward(e, c, params, bcfg)?.total)
}

/// Same as [`link_distance`] but also exposing the out/in components.
pub fn link_distance_parts(
    e: u32,
    c: u32,
    params: &Params,
    bcfg: &BoxConfig,
) -> Result<geometry::VectorBoxDistance> {
    let f = link_forward(e, c, params, bcfg)?;
    Ok(geometry::VectorBoxDistance {
        total: f.total,
        dist_out: f.dist_out,
        dist_in: f.dist_in,
    })
}

/// Cross-view objective over (positive, negative) link pairs:
/// `max(sigmoid(f_d(pos)) - sigmoid(f_d(neg)) + margin, 0)`.
pub fn loss_cross(
    pairs: &[(Link, Link)],
    params: &Params,
    ccfg: &CrossCfg,
    bcfg: &BoxConfig,
    mut grads: Option<&mut GradBuffer>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(BoxKgError::EmptyPartition("cross-view batch".into()));
    }
    if !(ccfg.margin > 0.0) {
        return Err(BoxKgError::BadConfig("cross margin must be > 0".into()));
    }
    let scale = if ccfg.mean_reduce {
        1.0 / pairs.len() as f64
    } else {
        1.0
    };
    let mut total = 0.0;
    for &(pos, neg) in pairs {
        let fp = link_forward(pos.0, pos.1, params, bcfg)?;
        let fng = link_forward(neg.0, neg.1, params, bcfg)?;
        let sp = geometry::sigmoid(fp.total);
        let sn = geometry::sigmoid(fng.total);
        let m = sp - sn + ccfg.margin;
        if m <= 0.0 {
            continue;
        }
        total += m * scale;
        if let Some(g) = grads.as_deref_mut() {
            link_backward(&fp, scale * sp * (1.0 - sp), params, g)?;
            link_backward(&fng, -scale * sn * (1.0 - sn), params, g)?;
        }
    }
    if !total.is_finite() {
        return Err(BoxKgError::NonFinite("cross-view loss".into()));
    }
    Ok(total)
}

//! Ontology-view scoring and loss: concept box table, relation transforms,
//! the conditional-probability triple score and its training objective.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{BoxKgError, Result};
use crate::geometry::{self, BoxConfig, GumbelBox};
use crate::kgdata::{Triple, Vocab};
use crate::params::{tables, GradBuffer, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMode {
    /// Relation shifts the center and scales the offset.
    ShiftScale,
    /// Two-layer projection head over a precomputed text feature produces
    /// the transformed center and pre-offset directly.
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OntoLossKind {
    /// `|phi(pos) - 1|^2 + |phi(neg)|^2` per pair.
    SquaredError,
    /// `-log phi(pos) - log(1 - phi(neg))` per pair.
    Bce,
}

#[derive(Debug, Clone)]
pub struct OntoCfg {
    pub transform: TransformMode,
    pub loss: OntoLossKind,
    pub mean_reduce: bool,
}

impl Default for OntoCfg {
    fn default() -> Self {
        OntoCfg {
            transform: TransformMode::ShiftScale,
            loss: OntoLossKind::SquaredError,
            mean_reduce: true,
        }
    }
}

/// Precomputed text features keyed by (concept, relation).
#[derive(Debug, Clone, Default)]
pub struct TextFeatureTable {
    pub dim: usize,
    map: HashMap<(u32, u32), Vec<f64>>,
}

impl TextFeatureTable {
    pub fn insert(&mut self, concept: u32, relation: u32, feature: Vec<f64>) {
        self.dim = feature.len();
        self.map.insert((concept, relation), feature);
    }

    pub fn get(&self, concept: u32, relation: u32) -> Result<&Vec<f64>> {
        self.map
            .get(&(concept, relation))
            .ok_or(BoxKgError::MissingTextFeature { concept, relation })
    }
}

/// Load a text-feature file: one record per line,
/// `concept_name<TAB>relation_name<TAB>v1,v2,...,vN`.
pub fn load_text_features(
    path: &Path,
    concepts: &Vocab,
    relations: &Vocab,
) -> Result<TextFeatureTable> {
    let mut table = TextFeatureTable::default();
    let file = File::open(path)?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(BoxKgError::MalformedLine {
                file: path.display().to_string(),
                line: i + 1,
                msg: "expected concept<TAB>relation<TAB>values".into(),
            });
        }
        let c = concepts.id_of(fields[0]).ok_or_else(|| BoxKgError::UnknownName {
            kind: "concept",
            name: fields[0].to_string(),
            suggestion: concepts.nearest(fields[0]),
        })?;
        let r = relations.id_of(fields[1]).ok_or_else(|| BoxKgError::UnknownName {
            kind: "relation",
            name: fields[1].to_string(),
            suggestion: relations.nearest(fields[1]),
        })?;
        let vals: Result<Vec<f64>> = fields[2]
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|e| BoxKgError::MalformedLine {
                    file: path.display().to_string(),
                    line: i + 1,
                    msg: format!("bad float `{v}`: {e}"),
                })
            })
            .collect();
        let vals = vals?;
        if table.dim != 0 && vals.len() != table.dim {
            return Err(BoxKgError::MalformedLine {
                file: path.display().to_string(),
                line: i + 1,
                msg: format!("feature length {} != {}", vals.len(), table.dim),
            });
        }
        table.insert(c, r, vals);
    }
    Ok(table)
}

/// Transformed box with the intermediates needed for backprop.
pub(crate) struct BoxFwd {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    cache: BoxCache,
}

enum BoxCache {
    ShiftScale {
        concept: usize,
        relation: usize,
        off: Vec<f64>,
        delta: Vec<f64>,
        sig_preoff: Vec<f64>,
        sig_predelta: Vec<f64>,
    },
    Text {
        concept: u32,
        relation: u32,
        hidden: Vec<f64>, // tanh activations
        sig_pre: Vec<f64>,
    },
}

pub(crate) fn eval_box(
    concept: u32,
    relation: u32,
    params: &Params,
    features: Option<&TextFeatureTable>,
    mode: TransformMode,
) -> Result<BoxFwd> {
    match mode {
        TransformMode::ShiftScale => {
            let cen = params.row(tables::CONCEPT_CENTER, concept as usize)?;
            let preoff = params.row(tables::CONCEPT_PREOFF, concept as usize)?;
            let tau = params.row(tables::ONTO_TAU, relation as usize)?;
            let predelta = params.row(tables::ONTO_PREDELTA, relation as usize)?;
            let d = cen.len();
            let mut lo = vec![0.0; d];
            let mut hi = vec![0.0; d];
            let mut off = vec![0.0; d];
            let mut delta = vec![0.0; d];
            let mut sig_preoff = vec![0.0; d];
            let mut sig_predelta = vec![0.0; d];
            for i in 0..d {
                off[i] = geometry::softplus(preoff[i]);
                delta[i] = geometry::softplus(predelta[i]);
                sig_preoff[i] = geometry::sigmoid(preoff[i]);
                sig_predelta[i] = geometry::sigmoid(predelta[i]);
                let c = cen[i] + tau[i];
                let o = off[i] * delta[i];
                lo[i] = c - o;
                hi[i] = c + o;
            }
            Ok(BoxFwd {
                lo,
                hi,
                cache: BoxCache::ShiftScale {
                    concept: concept as usize,
                    relation: relation as usize,
                    off,
                    delta,
                    sig_preoff,
                    sig_predelta,
                },
            })
        }
        TransformMode::Text => {
            let features = features.ok_or(BoxKgError::MissingTextFeature { concept, relation })?;
            let f = features.get(concept, relation)?;
            let w1 = params.table(tables::PROJ_W1)?;
            let b1 = params.row(tables::PROJ_B1, 0)?;
            let w2 = params.table(tables::PROJ_W2)?;
            let b2 = params.row(tables::PROJ_B2, 0)?;
            if w1.dim != f.len() {
                return Err(BoxKgError::DimMismatch {
                    expected: w1.dim,
                    got: f.len(),
                });
            }
            let n_hidden = w1.rows;
            let two_d = w2.rows;
            let d = two_d / 2;
            let mut hidden = vec![0.0; n_hidden];
            for j in 0..n_hidden {
                let row = w1.row(j);
                let mut a = b1[j];
                for k in 0..f.len() {
                    a += row[k] * f[k];
                }
                hidden[j] = a.tanh();
            }
            let mut out = vec![0.0; two_d];
            for m in 0..two_d {
                let row = w2.row(m);
                let mut o = b2[m];
                for j in 0..n_hidden {
                    o += row[j] * hidden[j];
                }
                out[m] = o;
            }
            let mut lo = vec![0.0; d];
            let mut hi = vec![0.0; d];
            let mut sig_pre = vec![0.0; d];
            for i in 0..d {
                let cen = out[i];
                let pre = out[d + i];
                let off = geometry::softplus(pre);
                sig_pre[i] = geometry::sigmoid(pre);
                lo[i] = cen - off;
                hi[i] = cen + off;
            }
            Ok(BoxFwd {
                lo,
                hi,
                cache: BoxCache::Text {
                    concept,
                    relation,
                    hidden,
                    sig_pre,
                },
            })
        }
    }
}

pub(crate) fn backprop_box(
    fwd: &BoxFwd,
    d_lo: &[f64],
    d_hi: &[f64],
    params: &Params,
    features: Option<&TextFeatureTable>,
    grads: &mut GradBuffer,
) -> Result<()> {
    match &fwd.cache {
        BoxCache::ShiftScale {
            concept,
            relation,
            off,
            delta,
            sig_preoff,
            sig_predelta,
        } => {
            let d = d_lo.len();
            let mut g_cen = vec![0.0; d];
            let mut g_preoff = vec![0.0; d];
            let mut g_predelta = vec![0.0; d];
            for i in 0..d {
                let d_cen = d_lo[i] + d_hi[i];
                let d_offp = d_hi[i] - d_lo[i]; // grad w.r.t. off * delta
                g_cen[i] = d_cen;
                g_preoff[i] = d_offp * delta[i] * sig_preoff[i];
                g_predelta[i] = d_offp * off[i] * sig_predelta[i];
            }
            grads.add_row(tables::CONCEPT_CENTER, *concept, &g_cen);
            grads.add_row(tables::ONTO_TAU, *relation, &g_cen);
            grads.add_row(tables::CONCEPT_PREOFF, *concept, &g_preoff);
            grads.add_row(tables::ONTO_PREDELTA, *relation, &g_predelta);
            Ok(())
        }
        BoxCache::Text {
            concept,
            relation,
            hidden,
            sig_pre,
        } => {
            let features = features.ok_or(BoxKgError::MissingTextFeature {
                concept: *concept,
                relation: *relation,
            })?;
            let f = features.get(*concept, *relation)?;
            let w2 = params.table(tables::PROJ_W2)?;
            let d = d_lo.len();
            let n_hidden = hidden.len();
            // gradient w.r.t. projector outputs (cen, pre-offset)
            let mut d_out = vec![0.0; 2 * d];
            for i in 0..d {
                d_out[i] = d_lo[i] + d_hi[i];
                d_out[d + i] = (d_hi[i] - d_lo[i]) * sig_pre[i];
            }
            let mut d_hidden = vec![0.0; n_hidden];
            for m in 0..2 * d {
                let row = w2.row(m);
                let g = d_out[m];
                if g == 0.0 {
                    continue;
                }
                let acc = grads.row_mut(tables::PROJ_W2, m, n_hidden);
                for j in 0..n_hidden {
                    acc[j] += g * hidden[j];
                    d_hidden[j] += g * row[j];
                }
            }
            grads.add_row(tables::PROJ_B2, 0, &d_out);
            let mut d_b1 = vec![0.0; n_hidden];
            for j in 0..n_hidden {
                let da = d_hidden[j] * (1.0 - hidden[j] * hidden[j]);
                d_b1[j] = da;
                if da == 0.0 {
                    continue;
                }
                let acc = grads.row_mut(tables::PROJ_W1, j, f.len());
                for k in 0..f.len() {
                    acc[k] += da * f[k];
                }
            }
            grads.add_row(tables::PROJ_B1, 0, &d_b1);
            Ok(())
        }
    }
}

/// Apply the relation transform to a concept box.
pub fn transform_box(
    concept: u32,
    relation: u32,
    params: &Params,
    features: Option<&TextFeatureTable>,
    mode: TransformMode,
) -> Result<GumbelBox> {
    let fwd = eval_box(concept, relation, params, features, mode)?;
    GumbelBox::from_corners(&fwd.lo, &fwd.hi)
}

/// The triple score phi and its gradient with respect to both boxes' corners.
pub(crate) struct PhiFwd {
    pub phi: f64,
    pub d_lo_h: Vec<f64>,
    pub d_hi_h: Vec<f64>,
    pub d_lo_t: Vec<f64>,
    pub d_hi_t: Vec<f64>,
}

pub(crate) fn phi_corners(
    lo_h: &[f64],
    hi_h: &[f64],
    lo_t: &[f64],
    hi_t: &[f64],
    cfg: &BoxConfig,
) -> Result<PhiFwd> {
    let lv_t = geometry::log_volume_corners(lo_t, hi_t, cfg)?;
    if lv_t.value.exp() < cfg.volume_clamp {
        return Err(BoxKgError::DegenerateVolume(lv_t.value.exp()));
    }
    let inter = geometry::intersect_corners(lo_h, hi_h, lo_t, hi_t, cfg)?;
    let lv_i = geometry::log_volume_corners(&inter.lo, &inter.hi, cfg)?;
    let phi = (lv_i.value - lv_t.value).exp();
    let d = lo_h.len();
    let mut out = PhiFwd {
        phi,
        d_lo_h: vec![0.0; d],
        d_hi_h: vec![0.0; d],
        d_lo_t: vec![0.0; d],
        d_hi_t: vec![0.0; d],
    };
    for i in 0..d {
        let d_lo_int = phi * lv_i.d_lo[i];
        let d_hi_int = phi * lv_i.d_hi[i];
        out.d_lo_h[i] = d_lo_int * inter.w_lo_x[i];
        out.d_hi_h[i] = d_hi_int * inter.w_hi_x[i];
        out.d_lo_t[i] = d_lo_int * (1.0 - inter.w_lo_x[i]) - phi * lv_t.d_lo[i];
        out.d_hi_t[i] = d_hi_int * (1.0 - inter.w_hi_x[i]) - phi * lv_t.d_hi[i];
    }
    Ok(out)
}

/// Conditional-probability score of an ontology triple,
/// `E[Vol(f_r(h) ∩ f_r(t))] / E[Vol(f_r(t))]`.
pub fn score_onto_triple(
    h: u32,
    r: u32,
    t: u32,
    params: &Params,
    features: Option<&TextFeatureTable>,
    ocfg: &OntoCfg,
    bcfg: &BoxConfig,
) -> Result<f64> {
    let bh = eval_box(h, r, params, features, ocfg.transform)?;
    let bt = eval_box(t, r, params, features, ocfg.transform)?;
    let phi = phi_corners(&bh.lo, &bh.hi, &bt.lo, &bt.hi, bcfg)?.phi;
    if phi > 1.0 && phi < 1.0 + 1e-9 {
        Ok(1.0)
    } else {
        Ok(phi)
    }
}

/// Ontology objective over (positive, negative) triple pairs. When `grads`
/// is given, accumulates gradients for every touched parameter.
pub fn loss_onto(
    pairs: &[(Triple, Triple)],
    params: &Params,
    features: Option<&TextFeatureTable>,
    ocfg: &OntoCfg,
    bcfg: &BoxConfig,
    mut grads: Option<&mut GradBuffer>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(BoxKgError::EmptyPartition("ontology batch".into()));
    }
    let scale = if ocfg.mean_reduce {
        1.0 / pairs.len() as f64
    } else {
        1.0
    };
    let mut total = 0.0;
    for &(pos, neg) in pairs {
        for (triple, is_pos) in [(pos, true), (neg, false)] {
            let (h, r, t) = triple;
            let bh = eval_box(h, r, params, features, ocfg.transform)?;
            let bt = eval_box(t, r, params, features, ocfg.transform)?;
            let phi = phi_corners(&bh.lo, &bh.hi, &bt.lo, &bt.hi, bcfg)?;
            let p = phi.phi;
            let (contrib, d_phi) = match ocfg.loss {
                OntoLossKind::SquaredError => {
                    if is_pos {
                        ((p - 1.0) * (p - 1.0), 2.0 * (p - 1.0))
                    } else {
                        (p * p, 2.0 * p)
                    }
                }
                OntoLossKind::Bce => {
                    let eps = 1e-12;
                    let pc = p.clamp(eps, 1.0 - eps);
                    if is_pos {
                        (-pc.ln(), -1.0 / pc)
                    } else {
                        (-(1.0 - pc).ln(), 1.0 / (1.0 - pc))
                    }
                }
            };
            total += contrib * scale;
            if let Some(g) = grads.as_deref_mut() {
                let w = d_phi * scale;
                let scaled = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * w).collect() };
                backprop_box(&bh, &scaled(&phi.d_lo_h), &scaled(&phi.d_hi_h), params, features, g)?;
                backprop_box(&bt, &scaled(&phi.d_lo_t), &scaled(&phi.d_hi_t), params, features, g)?;
            }
        }
    }
    if !total.is_finite() {
        return Err(BoxKgError::NonFinite("ontology loss".into()));
    }
    Ok(total)
}

//! Instance-view vector KGE: pluggable triple score and hinge objective.

use crate::error::{BoxKgError, Result};
use crate::kgdata::Triple;
use crate::params::{tables, GradBuffer, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// `-||h + r - t||`
    Translation,
    /// `-||h ∘ rot(r) - t||` with coordinate-pair rotation; the relation
    /// table stores `d/2` phases.
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone)]
pub struct InstCfg {
    pub score: ScoreKind,
    pub norm: Norm,
    /// Hinge margin, > 0. Default 0.3.
    pub margin: f64,
    pub mean_reduce: bool,
}

impl Default for InstCfg {
    fn default() -> Self {
        InstCfg {
            score: ScoreKind::Translation,
            norm: Norm::L1,
            margin: 0.3,
            mean_reduce: true,
        }
    }
}

/// Distance of a triple under the configured score, with gradients w.r.t.
/// the touched embedding rows. Score = -distance.
struct DistFwd {
    dist: f64,
    g_h: Vec<f64>,
    g_r: Vec<f64>,
    g_t: Vec<f64>,
}

fn triple_distance(triple: Triple, params: &Params, icfg: &InstCfg) -> Result<DistFwd> {
    let (hid, rid, tid) = triple;
    let h = params.row(tables::ENTITY_VEC, hid as usize)?;
    let t = params.row(tables::ENTITY_VEC, tid as usize)?;
    let r = params.row(tables::INST_REL, rid as usize)?;
    let d = h.len();

    // diff and its pullback onto (h, r, t)
    let mut diff = vec![0.0; d];
    match icfg.score {
        ScoreKind::Translation => {
            if r.len() != d {
                return Err(BoxKgError::DimMismatch { expected: d, got: r.len() });
            }
            for i in 0..d {
                diff[i] = h[i] + r[i] - t[i];
            }
        }
        ScoreKind::Rotation => {
            if r.len() != d / 2 || d % 2 != 0 {
                return Err(BoxKgError::DimMismatch { expected: d / 2, got: r.len() });
            }
            for p in 0..d / 2 {
                let (c, s) = (r[p].cos(), r[p].sin());
                let (h0, h1) = (h[2 * p], h[2 * p + 1]);
                diff[2 * p] = h0 * c - h1 * s - t[2 * p];
                diff[2 * p + 1] = h0 * s + h1 * c - t[2 * p + 1];
            }
        }
    }

    let mut d_diff = vec![0.0; d];
    let dist = match icfg.norm {
        Norm::L1 => {
            let mut sum = 0.0;
            for i in 0..d {
                sum += diff[i].abs();
                d_diff[i] = if diff[i] > 0.0 {
                    1.0
                } else if diff[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            sum
        }
        Norm::L2 => {
            let sq: f64 = diff.iter().map(|x| x * x).sum();
            let n = sq.sqrt();
            if n > 0.0 {
                for i in 0..d {
                    d_diff[i] = diff[i] / n;
                }
            }
            n
        }
    };

    let mut g_h = vec![0.0; d];
    let mut g_t = vec![0.0; d];
    let g_r;
    match icfg.score {
        ScoreKind::Translation => {
            g_r = d_diff.clone();
            for i in 0..d {
                g_h[i] = d_diff[i];
                g_t[i] = -d_diff[i];
            }
        }
        ScoreKind::Rotation => {
            let mut gr = vec![0.0; d / 2];
            for p in 0..d / 2 {
                let (c, s) = (r[p].cos(), r[p].sin());
                let (h0, h1) = (h[2 * p], h[2 * p + 1]);
                let rh0 = h0 * c - h1 * s;
                let rh1 = h0 * s + h1 * c;
                let (d0, d1) = (d_diff[2 * p], d_diff[2 * p + 1]);
                g_h[2 * p] = d0 * c + d1 * s;
                g_h[2 * p + 1] = -d0 * s + d1 * c;
                g_t[2 * p] = -d0;
                g_t[2 * p + 1] = -d1;
                gr[p] = d0 * (-rh1) + d1 * rh0;
            }
            g_r = gr;
        }
    }
    Ok(DistFwd { dist, g_h, g_r, g_t })
}

/// Triple plausibility score; higher is more plausible, always <= 0.
pub fn score_inst_triple(h: u32, r: u32, t: u32, params: &Params, icfg: &InstCfg) -> Result<f64> {
    Ok(-triple_distance((h, r, t), params, icfg)?.dist)
}

/// Hinge objective over (positive, negative) triple pairs:
/// `max(d(pos) - d(neg) + margin, 0)`, mean-reduced by default.
/// Gradients are sparse: only rows in the batch are touched.
pub fn loss_inst(
    pairs: &[(Triple, Triple)],
    params: &Params,
    icfg: &InstCfg,
    mut grads: Option<&mut GradBuffer>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(BoxKgError::EmptyPartition("instance batch".into()));
    }
    if !(icfg.margin > 0.0) {
        return Err(BoxKgError::BadConfig("instance margin must be > 0".into()));
    }
    let scale = if icfg.mean_reduce {
        1.0 / pairs.len() as f64
    } else {
        1.0
    };
    let mut total = 0.0;
    for &(pos, neg) in pairs {
        let fp = triple_distance(pos, params, icfg)?;
        let fnn = triple_distance(neg, params, icfg)?;
        let m = fp.dist - fnn.dist + icfg.margin;
        if m <= 0.0 {
            continue;
        }
        total += m * scale;
        if let Some(g) = grads.as_deref_mut() {
            let push = |g: &mut GradBuffer, f: &DistFwd, (h, r, t): Triple, sign: f64| {
                let add = |acc: &mut Vec<f64>, v: &[f64]| {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += sign * scale * x;
                    }
                };
                add(g.row_mut(tables::ENTITY_VEC, h as usize, f.g_h.len()), &f.g_h);
                add(g.row_mut(tables::INST_REL, r as usize, f.g_r.len()), &f.g_r);
                add(g.row_mut(tables::ENTITY_VEC, t as usize, f.g_t.len()), &f.g_t);
            };
            push(g, &fp, pos, 1.0);
            push(g, &fnn, neg, -1.0);
        }
    }
    if !total.is_finite() {
        return Err(BoxKgError::NonFinite("instance loss".into()));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Table;

    fn toy_params(d: usize, rot: bool) -> Params {
        let mut p = Params::default();
        p.insert(tables::ENTITY_VEC, Table::zeros(4, d));
        p.insert(tables::INST_REL, Table::zeros(2, if rot { d / 2 } else { d }));
        p
    }

    fn set_row(p: &mut Params, name: &str, i: usize, v: &[f64]) {
        p.table_mut(name).unwrap().row_mut(i).copy_from_slice(v);
    }

    #[test]
    fn exact_translation_scores_zero() {
        let mut p = toy_params(2, false);
        set_row(&mut p, tables::ENTITY_VEC, 0, &[0.5, -0.5]);
        set_row(&mut p, tables::INST_REL, 0, &[1.0, 1.0]);
        set_row(&mut p, tables::ENTITY_VEC, 1, &[1.5, 0.5]);
        let s = score_inst_triple(0, 0, 1, &p, &InstCfg::default()).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn translation_l1_norm_value() {
        let mut p = toy_params(2, false);
        set_row(&mut p, tables::INST_REL, 0, &[1.0, 1.0]);
        // h=(0,0), r=(1,1), t=(0,0) -> -2
        let s = score_inst_triple(0, 0, 1, &p, &InstCfg::default()).unwrap();
        assert_eq!(s, -2.0);
    }

    #[test]
    fn zero_phase_rotation_is_identity() {
        let mut p = toy_params(2, true);
        set_row(&mut p, tables::ENTITY_VEC, 0, &[0.3, 0.7]);
        set_row(&mut p, tables::ENTITY_VEC, 1, &[0.3, 0.7]);
        let icfg = InstCfg {
            score: ScoreKind::Rotation,
            ..InstCfg::default()
        };
        let s = score_inst_triple(0, 0, 1, &p, &icfg).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn hinge_satisfied_margin_contributes_zero() {
        let mut p = toy_params(2, false);
        // pos: h=t, d=0; neg: far away
        set_row(&mut p, tables::ENTITY_VEC, 2, &[10.0, 10.0]);
        let loss = loss_inst(&[((0, 0, 1), (0, 0, 2))], &p, &InstCfg::default(), None).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn hinge_direct_formula() {
        let mut p = toy_params(1, false);
        // d(pos)=1.0, d(neg)=0.9, margin 0.3 -> 0.4
        set_row(&mut p, tables::ENTITY_VEC, 1, &[1.0]);
        set_row(&mut p, tables::ENTITY_VEC, 2, &[0.9]);
        let loss = loss_inst(&[((1, 0, 0), (2, 0, 0))], &p, &InstCfg::default(), None).unwrap();
        assert!((loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn translation_invariant_under_common_shift() {
        let mut p = toy_params(3, false);
        set_row(&mut p, tables::ENTITY_VEC, 0, &[0.1, 0.2, 0.3]);
        set_row(&mut p, tables::ENTITY_VEC, 1, &[-0.4, 0.9, 0.0]);
        set_row(&mut p, tables::INST_REL, 0, &[0.5, -0.5, 0.2]);
        let icfg = InstCfg::default();
        let s0 = score_inst_triple(0, 0, 1, &p, &icfg).unwrap();
        let t = p.table_mut(tables::ENTITY_VEC).unwrap();
        for x in t.data.iter_mut() {
            *x += 2.5;
        }
        let s1 = score_inst_triple(0, 0, 1, &p, &icfg).unwrap();
        assert!((s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let mut p = toy_params(2, false);
        set_row(&mut p, tables::ENTITY_VEC, 0, &[0.3, 0.3]);
        set_row(&mut p, tables::ENTITY_VEC, 1, &[0.35, 0.25]);
        set_row(&mut p, tables::ENTITY_VEC, 2, &[1.0, -1.0]);
        let mut g = GradBuffer::default();
        loss_inst(&[((0, 0, 1), (0, 0, 2))], &p, &InstCfg::default(), Some(&mut g)).unwrap();
        assert!(g.get(tables::ENTITY_VEC, 3).is_none());
    }

    fn finite_diff(p: &mut Params, icfg: &InstCfg, pairs: &[(Triple, Triple)]) {
        let mut g = GradBuffer::default();
        loss_inst(pairs, p, icfg, Some(&mut g)).unwrap();
        let h = 1e-6;
        for (name, rows) in g.tables.clone() {
            for (row, gv) in rows {
                for (i, &gi) in gv.iter().enumerate() {
                    let orig = p.table(&name).unwrap().row(row)[i];
                    p.table_mut(&name).unwrap().row_mut(row)[i] = orig + h;
                    let lp = loss_inst(pairs, p, icfg, None).unwrap();
                    p.table_mut(&name).unwrap().row_mut(row)[i] = orig - h;
                    let lm = loss_inst(pairs, p, icfg, None).unwrap();
                    p.table_mut(&name).unwrap().row_mut(row)[i] = orig;
                    let num = (lp - lm) / (2.0 * h);
                    let rel = (num - gi).abs() / num.abs().max(gi.abs()).max(1e-8);
                    assert!(rel < 1e-4, "{name}[{row},{i}]: {gi} vs {num}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for (rot, norm) in [
            (false, Norm::L1),
            (false, Norm::L2),
            (true, Norm::L1),
            (true, Norm::L2),
        ] {
            let d = 4;
            let mut p = toy_params(d, rot);
            for name in [tables::ENTITY_VEC, tables::INST_REL] {
                let t = p.table_mut(name).unwrap();
                for x in t.data.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
            let icfg = InstCfg {
                score: if rot { ScoreKind::Rotation } else { ScoreKind::Translation },
                norm,
                ..InstCfg::default()
            };
            finite_diff(&mut p, &icfg, &[((0, 0, 1), (2, 1, 3))]);
        }
    }
}

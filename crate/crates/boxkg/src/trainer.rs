//! Joint optimization: alternating Adam updates over the three objectives,
//! checkpointing, early stopping and finite-difference gradient verification.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::cross::{self, CrossCfg};
use crate::error::{BoxKgError, Result};
use crate::eval::{self, Partition, View};
use crate::geometry::{self, BoxConfig};
use crate::inst::{self, InstCfg, ScoreKind};
use crate::kgdata::{Link, SplitKG, Triple};
use crate::onto::{self, OntoCfg, TextFeatureTable, TransformMode};
use crate::params::{tables, GradBuffer, Params, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Validation metric driving early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValMetric {
    InstMrr,
    OntoMrr,
    LinkMrr,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub d_vec: usize,
    pub d_box: usize,
    /// Hidden width of the text projection head; 0 means "same as the
    /// feature dimension".
    pub proj_hidden: usize,
    /// Negatives per positive, per view.
    pub neg_inst: usize,
    pub neg_onto: usize,
    pub neg_cross: usize,
    pub val_metric: ValMetric,
    pub bcfg: BoxConfig,
    pub ocfg: OntoCfg,
    pub icfg: InstCfg,
    pub ccfg: CrossCfg,
    pub adam: AdamHyper,
}

impl TrainConfig {
    pub fn new(d_vec: usize, d_box: usize) -> Self {
        TrainConfig {
            lr: 0.005,
            lambda1: 1.0,
            lambda2: 1.0,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            d_vec,
            d_box,
            proj_hidden: 0,
            neg_inst: 10,
            neg_onto: 5,
            neg_cross: 5,
            val_metric: ValMetric::InstMrr,
            bcfg: BoxConfig::new(d_box),
            ocfg: OntoCfg::default(),
            icfg: InstCfg::default(),
            ccfg: CrossCfg::default(),
            adam: AdamHyper::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(BoxKgError::BadConfig("learning rate must be > 0".into()));
        }
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(BoxKgError::BadConfig(
                "loss weights lambda1 and lambda2 must be > 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(BoxKgError::BadConfig("batch size must be >= 1".into()));
        }
        if self.d_vec == 0 || self.d_box == 0 {
            return Err(BoxKgError::BadConfig("embedding dims must be >= 1".into()));
        }
        if self.icfg.score == ScoreKind::Rotation && self.d_vec % 2 != 0 {
            return Err(BoxKgError::BadConfig(
                "rotation scoring needs an even entity dimension".into(),
            ));
        }
        if self.neg_inst == 0 || self.neg_onto == 0 || self.neg_cross == 0 {
            return Err(BoxKgError::BadConfig("negative counts must be >= 1".into()));
        }
        self.bcfg.validate()
    }
}

/// Everything needed to resume training exactly: parameters, optimizer
/// state, RNG position and the best-so-far snapshot.
pub struct TrainState {
    pub params: Params,
    pub adam_m: Params,
    pub adam_v: Params,
    /// Step counters per parameter group (table name).
    pub adam_t: BTreeMap<String, u64>,
    pub epoch: u64,
    pub rng: ChaCha20Rng,
    pub best_metric: f64,
    pub best_epoch: u64,
    pub best_params: Option<Params>,
    /// Run configuration echoed into checkpoints for provenance.
    pub config_echo: String,
}

fn zero_like(params: &Params) -> Params {
    let mut z = Params::default();
    for (name, t) in &params.tables {
        z.insert(name, Table::zeros(t.rows, t.dim));
    }
    z
}

fn uniform_table(rng: &mut ChaCha20Rng, rows: usize, dim: usize, bound: f64) -> Table {
    let mut t = Table::zeros(rows, dim);
    for x in t.data.iter_mut() {
        *x = rng.gen_range(-bound..bound);
    }
    t
}

/// Initialize all parameter tables. Entities and relations use the usual
/// `±6/√d` uniform; concept boxes start near the origin with unit offsets
/// so that every pair overlaps and gradients flow from the first step.
pub fn init_state(
    data: &SplitKG,
    cfg: &TrainConfig,
    features: Option<&TextFeatureTable>,
) -> Result<TrainState> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n_e = data.kg.entities.len();
    let n_c = data.kg.concepts.len();
    let n_ir = data.kg.inst_relations.len();
    let n_or = data.kg.onto_relations.len();

    let mut params = Params::default();
    let bound = 6.0 / (cfg.d_vec as f64).sqrt();
    params.insert(tables::ENTITY_VEC, uniform_table(&mut rng, n_e, cfg.d_vec, bound));
    match cfg.icfg.score {
        ScoreKind::Translation => {
            params.insert(tables::INST_REL, uniform_table(&mut rng, n_ir, cfg.d_vec, bound));
        }
        ScoreKind::Rotation => {
            // phases in (-pi, pi)
            params.insert(
                tables::INST_REL,
                uniform_table(&mut rng, n_ir, cfg.d_vec / 2, std::f64::consts::PI),
            );
        }
    }

    params.insert(
        tables::CONCEPT_CENTER,
        uniform_table(&mut rng, n_c, cfg.d_box, 0.5),
    );
    let pre_unit = geometry::softplus_inv(1.0);
    let mut preoff = Table::filled(n_c, cfg.d_box, pre_unit);
    for x in preoff.data.iter_mut() {
        *x += rng.gen_range(-0.1..0.1);
    }
    params.insert(tables::CONCEPT_PREOFF, preoff);

    match cfg.ocfg.transform {
        TransformMode::ShiftScale => {
            // identity-ish transform: zero shift, unit scale, small noise
            let mut tau = Table::zeros(n_or, cfg.d_box);
            let mut predelta = Table::filled(n_or, cfg.d_box, pre_unit);
            for x in tau.data.iter_mut() {
                *x += rng.gen_range(-0.01..0.01);
            }
            for x in predelta.data.iter_mut() {
                *x += rng.gen_range(-0.01..0.01);
            }
            params.insert(tables::ONTO_TAU, tau);
            params.insert(tables::ONTO_PREDELTA, predelta);
        }
        TransformMode::Text => {
            let feats = features.ok_or(BoxKgError::BadConfig(
                "text transform requires a feature table".into(),
            ))?;
            if feats.dim == 0 {
                return Err(BoxKgError::BadConfig("feature table is empty".into()));
            }
            let f_dim = feats.dim;
            let hidden = if cfg.proj_hidden == 0 { f_dim } else { cfg.proj_hidden };
            let xav = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.insert(
                tables::PROJ_W1,
                uniform_table(&mut rng, hidden, f_dim, xav(f_dim, hidden)),
            );
            params.insert(tables::PROJ_B1, Table::zeros(1, hidden));
            params.insert(
                tables::PROJ_W2,
                uniform_table(&mut rng, 2 * cfg.d_box, hidden, xav(hidden, 2 * cfg.d_box)),
            );
            // bias initializes output boxes to (0 center, unit offset)
            let mut b2 = Table::zeros(1, 2 * cfg.d_box);
            for i in 0..cfg.d_box {
                b2.data[cfg.d_box + i] = pre_unit;
            }
            params.insert(tables::PROJ_B2, b2);
        }
    }

    if cfg.d_vec != cfg.d_box {
        let xav = (6.0 / (cfg.d_vec + cfg.d_box) as f64).sqrt();
        params.insert(
            tables::BRIDGE_W,
            uniform_table(&mut rng, cfg.d_box, cfg.d_vec, xav),
        );
        params.insert(tables::BRIDGE_B, Table::zeros(1, cfg.d_box));
    }

    let adam_m = zero_like(&params);
    let adam_v = zero_like(&params);
    let adam_t = params.tables.keys().map(|k| (k.clone(), 0u64)).collect();
    Ok(TrainState {
        params,
        adam_m,
        adam_v,
        adam_t,
        epoch: 0,
        rng,
        best_metric: f64::NEG_INFINITY,
        best_epoch: 0,
        best_params: None,
        config_echo: String::new(),
    })
}

/// One sparse, bias-corrected Adam step: only rows present in `grads`
/// are touched; step counters advance per parameter group.
pub fn adam_step(
    params: &mut Params,
    grads: &GradBuffer,
    adam_m: &mut Params,
    adam_v: &mut Params,
    adam_t: &mut BTreeMap<String, u64>,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<()> {
    let (b1, b2, eps) = (hyper.beta1, hyper.beta2, hyper.eps);
    for (name, rows) in &grads.tables {
        let t = adam_t
            .get_mut(name)
            .ok_or_else(|| BoxKgError::MissingTable(name.clone()))?;
        *t += 1;
        let bc1 = 1.0 - b1.powi(*t as i32);
        let bc2 = 1.0 - b2.powi(*t as i32);
        let dim = params.table(name)?.dim;
        for (&row, g) in rows {
            if g.len() != dim {
                return Err(BoxKgError::DimMismatch { expected: dim, got: g.len() });
            }
            let m = adam_m.table_mut(name)?.row_mut(row);
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
            }
            let v = adam_v.table_mut(name)?.row_mut(row);
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            }
            let m = adam_m.table(name)?.row(row).to_vec();
            let v = adam_v.table(name)?.row(row).to_vec();
            let p = params.table_mut(name)?.row_mut(row);
            for i in 0..dim {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Per-view mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub onto: f64,
    pub inst: f64,
    pub cross: f64,
}

impl EpochLosses {
    /// Total objective `J = J^O + lambda1 J^I + lambda2 J^Cross`.
    pub fn total(&self, lambda1: f64, lambda2: f64) -> f64 {
        self.onto + lambda1 * self.inst + lambda2 * self.cross
    }
}

struct BatchCycle<'a, T> {
    order: Vec<usize>,
    items: &'a [T],
    cursor: usize,
}

impl<'a, T: Copy> BatchCycle<'a, T> {
    fn new(items: &'a [T], rng: &mut ChaCha20Rng) -> Self {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(rng);
        BatchCycle { order, items, cursor: 0 }
    }

    fn batches(&self, batch_size: usize) -> usize {
        self.items.len().div_ceil(batch_size)
    }

    /// Next `n` positives, wrapping (and reshuffling) at the end.
    fn take(&mut self, n: usize, rng: &mut ChaCha20Rng) -> Vec<T> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n.min(self.items.len()) {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.items[self.order[self.cursor]]);
            self.cursor += 1;
        }
        out
    }
}

fn onto_pairs(
    positives: &[Triple],
    k: usize,
    n_concepts: u32,
    known: &HashSet<Triple>,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(Triple, Triple)>> {
    let mut pairs = Vec::with_capacity(positives.len() * k);
    for &pos in positives {
        for neg in crate::kgdata::sample_negative_triples(pos, k, rng, n_concepts, known, false)? {
            pairs.push((pos, neg.item));
        }
    }
    Ok(pairs)
}

fn inst_pairs(
    positives: &[Triple],
    k: usize,
    n_entities: u32,
    known: &HashSet<Triple>,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(Triple, Triple)>> {
    let mut pairs = Vec::with_capacity(positives.len() * k);
    for &pos in positives {
        for neg in crate::kgdata::sample_negative_triples(pos, k, rng, n_entities, known, false)? {
            pairs.push((pos, neg.item));
        }
    }
    Ok(pairs)
}

fn cross_pairs(
    positives: &[Link],
    k: usize,
    n_entities: u32,
    n_concepts: u32,
    known: &HashSet<Link>,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(Link, Link)>> {
    let mut pairs = Vec::with_capacity(positives.len() * k);
    for &pos in positives {
        for neg in
            crate::kgdata::sample_negative_links(pos, k, rng, n_entities, n_concepts, known, false)?
        {
            pairs.push((pos, neg.item));
        }
    }
    Ok(pairs)
}

fn ensure_finite(loss: f64, view: &str, step: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(BoxKgError::NonFinite(format!(
            "{view} loss at batch {step} is {loss}"
        )))
    }
}

/// One epoch of alternating updates: at each step one ontology batch at
/// rate `lr`, one instance batch at `lambda1 lr`, one cross batch at
/// `lambda2 lr`. Epoch length is set by the largest view; smaller views
/// wrap around. Deterministic given the state RNG.
pub fn train_epoch(
    state: &mut TrainState,
    data: &SplitKG,
    cfg: &TrainConfig,
    features: Option<&TextFeatureTable>,
) -> Result<EpochLosses> {
    if data.onto_train.is_empty() {
        return Err(BoxKgError::EmptyPartition("ontology train".into()));
    }
    if data.inst_train.is_empty() {
        return Err(BoxKgError::EmptyPartition("instance train".into()));
    }
    if data.link_train.is_empty() {
        return Err(BoxKgError::EmptyPartition("link train".into()));
    }
    let known_onto = data.all_onto_positives();
    let known_inst = data.all_inst_positives();
    let known_link = data.all_link_positives();
    let n_e = data.kg.entities.len() as u32;
    let n_c = data.kg.concepts.len() as u32;

    let mut onto_cycle = BatchCycle::new(&data.onto_train, &mut state.rng);
    let mut inst_cycle = BatchCycle::new(&data.inst_train, &mut state.rng);
    let mut link_cycle = BatchCycle::new(&data.link_train, &mut state.rng);
    let steps = onto_cycle
        .batches(cfg.batch_size)
        .max(inst_cycle.batches(cfg.batch_size))
        .max(link_cycle.batches(cfg.batch_size));

    let mut sums = EpochLosses { onto: 0.0, inst: 0.0, cross: 0.0 };
    for step in 0..steps {
        let pos = onto_cycle.take(cfg.batch_size, &mut state.rng);
        let pairs = onto_pairs(&pos, cfg.neg_onto, n_c, &known_onto, &mut state.rng)?;
        let mut grads = GradBuffer::default();
        let loss = onto::loss_onto(
            &pairs,
            &state.params,
            features,
            &cfg.ocfg,
            &cfg.bcfg,
            Some(&mut grads),
        )?;
        sums.onto += ensure_finite(loss, "ontology", step)?;
        adam_step(
            &mut state.params,
            &grads,
            &mut state.adam_m,
            &mut state.adam_v,
            &mut state.adam_t,
            cfg.lr,
            &cfg.adam,
        )?;

        let pos = inst_cycle.take(cfg.batch_size, &mut state.rng);
        let pairs = inst_pairs(&pos, cfg.neg_inst, n_e, &known_inst, &mut state.rng)?;
        let mut grads = GradBuffer::default();
        let loss = inst::loss_inst(&pairs, &state.params, &cfg.icfg, Some(&mut grads))?;
        sums.inst += ensure_finite(loss, "instance", step)?;
        adam_step(
            &mut state.params,
            &grads,
            &mut state.adam_m,
            &mut state.adam_v,
            &mut state.adam_t,
            cfg.lambda1 * cfg.lr,
            &cfg.adam,
        )?;

        let pos = link_cycle.take(cfg.batch_size, &mut state.rng);
        let pairs = cross_pairs(&pos, cfg.neg_cross, n_e, n_c, &known_link, &mut state.rng)?;
        let mut grads = GradBuffer::default();
        let loss =
            cross::loss_cross(&pairs, &state.params, &cfg.ccfg, &cfg.bcfg, Some(&mut grads))?;
        sums.cross += ensure_finite(loss, "cross", step)?;
        adam_step(
            &mut state.params,
            &grads,
            &mut state.adam_m,
            &mut state.adam_v,
            &mut state.adam_t,
            cfg.lambda2 * cfg.lr,
            &cfg.adam,
        )?;
    }
    state.epoch += 1;
    let n = steps as f64;
    Ok(EpochLosses {
        onto: sums.onto / n,
        inst: sums.inst / n,
        cross: sums.cross / n,
    })
}

/// One epoch's row in the metrics log.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: u64,
    pub losses: EpochLosses,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: u64,
    pub best_metric: f64,
    pub stopped_early: bool,
    /// Parameters at the last trained epoch, before the best-epoch restore.
    pub final_params: Params,
}

pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,J_O,J_I,J_Cross,val_metric\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.losses.onto, r.losses.inst, r.losses.cross, r.val_metric
        ));
    }
    s
}

fn validation_metric(
    state: &TrainState,
    data: &SplitKG,
    cfg: &TrainConfig,
    features: Option<&TextFeatureTable>,
    threads: usize,
) -> Result<f64> {
    let report = match cfg.val_metric {
        ValMetric::InstMrr => eval::eval_kgc(
            &state.params,
            data,
            View::Instance,
            Partition::Valid,
            &cfg.ocfg,
            &cfg.icfg,
            &cfg.bcfg,
            features,
            threads,
        )?,
        ValMetric::OntoMrr => eval::eval_kgc(
            &state.params,
            data,
            View::Ontology,
            Partition::Valid,
            &cfg.ocfg,
            &cfg.icfg,
            &cfg.bcfg,
            features,
            threads,
        )?,
        ValMetric::LinkMrr => {
            eval::eval_linking(&state.params, data, Partition::Valid, &cfg.bcfg, threads)?
        }
    };
    Ok(report.mrr)
}

/// Full training loop with early stopping: runs up to `max_epochs`, tracks
/// the best validation metric, and restores the best parameters exactly
/// before returning. `on_epoch` fires after each epoch (for progress logs).
pub fn fit(
    state: &mut TrainState,
    data: &SplitKG,
    cfg: &TrainConfig,
    features: Option<&TextFeatureTable>,
    threads: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitReport> {
    cfg.validate()?;
    let mut history = Vec::new();
    let mut stopped_early = false;
    while state.epoch < cfg.max_epochs as u64 {
        let losses = train_epoch(state, data, cfg, features)?;
        let val = validation_metric(state, data, cfg, features, threads)?;
        let record = EpochRecord { epoch: state.epoch, losses, val_metric: val };
        on_epoch(&record);
        history.push(record);
        if val > state.best_metric {
            state.best_metric = val;
            state.best_epoch = state.epoch;
            state.best_params = Some(state.params.clone());
        } else if state.epoch - state.best_epoch >= cfg.patience as u64 {
            stopped_early = true;
            break;
        }
    }
    let final_params = state.params.clone();
    if let Some(best) = &state.best_params {
        state.params = best.clone();
    }
    Ok(FitReport {
        history,
        best_epoch: state.best_epoch,
        best_metric: state.best_metric,
        stopped_early,
        final_params,
    })
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GradCheckLoss {
    pub loss: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub rejected: usize,
    /// True when >90% of sampled coordinates were kink-adjacent; reported,
    /// not treated as a failure.
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub losses: Vec<GradCheckLoss>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.losses.iter().all(|l| l.max_rel_err <= self.tol)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in &self.losses {
            writeln!(
                f,
                "{:<10} max_rel_err {:>12.3e}  checked {:>4}  rejected {:>4}{}{}",
                l.loss,
                l.max_rel_err,
                l.checked,
                l.rejected,
                if l.saturated { "  (saturated)" } else { "" },
                if l.max_rel_err <= self.tol { "  ok" } else { "  FAIL" },
            )?;
        }
        Ok(())
    }
}

fn check_one_loss<F>(
    loss_name: &str,
    params: &Params,
    loss_fn: F,
    analytic: &GradBuffer,
    n_points: usize,
    step: f64,
    rng: &mut ChaCha20Rng,
    sabotage: f64,
) -> Result<GradCheckLoss>
where
    F: Fn(&Params) -> Result<f64>,
{
    // every coordinate the analytic gradient touched, in a fixed order
    let mut coords: Vec<(String, usize, usize)> = Vec::new();
    let mut names: Vec<&String> = analytic.tables.keys().collect();
    names.sort();
    for name in names {
        let mut rows: Vec<&usize> = analytic.tables[name].keys().collect();
        rows.sort();
        for &row in rows {
            for col in 0..analytic.tables[name][&row].len() {
                coords.push((name.clone(), row, col));
            }
        }
    }
    coords.shuffle(rng);

    let mut checked = 0usize;
    let mut rejected = 0usize;
    let mut max_rel_err: f64 = 0.0;
    for (name, row, col) in coords {
        if checked >= n_points {
            break;
        }
        let theta = params.table(&name)?.row(row)[col];
        let mut probe = params.clone();
        probe.table_mut(&name)?.row_mut(row)[col] = theta + step;
        let up = loss_fn(&probe)?;
        probe.table_mut(&name)?.row_mut(row)[col] = theta - step;
        let down = loss_fn(&probe)?;
        probe.table_mut(&name)?.row_mut(row)[col] = theta;
        let base = loss_fn(&probe)?;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.tables[&name][&row][col] + sabotage;
        let scale = a.abs().max(numeric.abs()).max(1.0);
        let rel_err = (a - numeric).abs() / scale;
        if rel_err > 1e-6 {
            // one-sided slopes disagree near subgradient kinks (hinges,
            // clip boundaries); resample rather than fail there
            let fwd = (up - base) / step;
            let bwd = (base - down) / step;
            if (fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(1.0) {
                rejected += 1;
                continue;
            }
        }
        checked += 1;
        max_rel_err = max_rel_err.max(rel_err);
    }
    let total = checked + rejected;
    Ok(GradCheckLoss {
        loss: loss_name.to_string(),
        max_rel_err,
        checked,
        rejected,
        saturated: total > 0 && rejected * 10 > total * 9,
    })
}

/// Compare the analytic gradients of all three losses against central
/// finite differences at `n_points` random coordinates each. Kink-adjacent
/// coordinates are rejected and resampled. `sabotage` (normally 0) offsets
/// the analytic gradients — a negative control for the checker itself.
pub fn check_gradients(
    state: &TrainState,
    data: &SplitKG,
    cfg: &TrainConfig,
    features: Option<&TextFeatureTable>,
    n_points: usize,
    step: f64,
    tol: f64,
    sabotage: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x9e3779b97f4a7c15);
    // enough positives that each loss touches >= n_points coordinates
    let cap = n_points.max(8);
    let n_e = data.kg.entities.len() as u32;
    let n_c = data.kg.concepts.len() as u32;

    let onto_batch: Vec<Triple> = data.onto_train.iter().copied().take(cap).collect();
    let inst_batch: Vec<Triple> = data.inst_train.iter().copied().take(cap).collect();
    let link_batch: Vec<Link> = data.link_train.iter().copied().take(cap).collect();
    let o_pairs = onto_pairs(&onto_batch, 1, n_c, &data.all_onto_positives(), &mut rng)?;
    let i_pairs = inst_pairs(&inst_batch, 1, n_e, &data.all_inst_positives(), &mut rng)?;
    let c_pairs = cross_pairs(&link_batch, 1, n_e, n_c, &data.all_link_positives(), &mut rng)?;

    let mut losses = Vec::new();

    let mut grads = GradBuffer::default();
    onto::loss_onto(&o_pairs, &state.params, features, &cfg.ocfg, &cfg.bcfg, Some(&mut grads))?;
    losses.push(check_one_loss(
        "onto",
        &state.params,
        |p| onto::loss_onto(&o_pairs, p, features, &cfg.ocfg, &cfg.bcfg, None),
        &grads,
        n_points,
        step,
        &mut rng,
        sabotage,
    )?);

    let mut grads = GradBuffer::default();
    inst::loss_inst(&i_pairs, &state.params, &cfg.icfg, Some(&mut grads))?;
    losses.push(check_one_loss(
        "inst",
        &state.params,
        |p| inst::loss_inst(&i_pairs, p, &cfg.icfg, None),
        &grads,
        n_points,
        step,
        &mut rng,
        sabotage,
    )?);

    let mut grads = GradBuffer::default();
    cross::loss_cross(&c_pairs, &state.params, &cfg.ccfg, &cfg.bcfg, Some(&mut grads))?;
    losses.push(check_one_loss(
        "cross",
        &state.params,
        |p| cross::loss_cross(&c_pairs, p, &cfg.ccfg, &cfg.bcfg, None),
        &grads,
        n_points,
        step,
        &mut rng,
        sabotage,
    )?);

    Ok(GradCheckReport { losses, tol })
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"BKG1";
const VERSION: u32 = 1;

struct CrcWriter<W: Write> {
    inner: W,
    crc: crc32fast::Hasher,
}

impl<W: Write> CrcWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.crc.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn put_u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    fn put_str(&mut self, s: &str) -> Result<()> {
        self.put_u64(s.len() as u64)?;
        self.put(s.as_bytes())
    }

    fn put_table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.put_str(name)?;
        self.put_u64(t.rows as u64)?;
        self.put_u64(t.dim as u64)?;
        for &x in &t.data {
            self.put(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

struct CrcReader<R: Read> {
    inner: R,
    crc: crc32fast::Hasher,
}

impl<R: Read> CrcReader<R> {
    fn get(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| BoxKgError::CheckpointFormat("unexpected end of file".into()))?;
        self.crc.update(buf);
        Ok(())
    }

    fn get_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.get(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn get_str(&mut self) -> Result<String> {
        let len = self.get_u64()? as usize;
        if len > 1 << 30 {
            return Err(BoxKgError::CheckpointFormat("oversized string".into()));
        }
        let mut b = vec![0u8; len];
        self.get(&mut b)?;
        String::from_utf8(b).map_err(|_| BoxKgError::CheckpointFormat("bad utf-8".into()))
    }

    fn get_table(&mut self) -> Result<(String, Table)> {
        let name = self.get_str()?;
        let rows = self.get_u64()? as usize;
        let dim = self.get_u64()? as usize;
        if rows.saturating_mul(dim) > 1 << 32 {
            return Err(BoxKgError::CheckpointFormat("oversized table".into()));
        }
        let mut t = Table::zeros(rows, dim);
        let mut b = [0u8; 8];
        for x in t.data.iter_mut() {
            self.get(&mut b)?;
            *x = f64::from_le_bytes(b);
        }
        Ok((name, t))
    }
}

fn scalar_table(v: f64) -> Table {
    let mut t = Table::zeros(1, 1);
    t.data[0] = v;
    t
}

/// Serialize a full training state: every table (parameters, moments, the
/// best-epoch snapshot), step counters, RNG position and a config echo, in
/// the `BKG1` little-endian format with a trailing CRC32.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = CrcWriter { inner: std::io::BufWriter::new(file), crc: crc32fast::Hasher::new() };
    w.put(MAGIC)?;
    w.put(&VERSION.to_le_bytes())?;
    w.put_str(&state.config_echo)?;

    // everything else rides in the table section under namespaced keys
    let mut named: Vec<(String, Table)> = Vec::new();
    named.push(("meta/epoch".into(), scalar_table(state.epoch as f64)));
    named.push(("meta/best_epoch".into(), scalar_table(state.best_epoch as f64)));
    named.push(("meta/best_metric".into(), scalar_table(state.best_metric)));
    let seed = state.rng.get_seed();
    let mut seed_t = Table::zeros(1, 32);
    for (i, &b) in seed.iter().enumerate() {
        seed_t.data[i] = b as f64;
    }
    named.push(("rng/seed".into(), seed_t));
    // u128 word position split into four exact u32 chunks
    let pos = state.rng.get_word_pos();
    let mut pos_t = Table::zeros(1, 4);
    for i in 0..4 {
        pos_t.data[i] = ((pos >> (32 * i)) & 0xffff_ffff) as f64;
    }
    named.push(("rng/word_pos".into(), pos_t));
    for (name, &t) in &state.adam_t {
        named.push((format!("adam_t/{name}"), scalar_table(t as f64)));
    }
    for (name, t) in &state.params.tables {
        named.push((format!("param/{name}"), t.clone()));
    }
    for (name, t) in &state.adam_m.tables {
        named.push((format!("m/{name}"), t.clone()));
    }
    for (name, t) in &state.adam_v.tables {
        named.push((format!("v/{name}"), t.clone()));
    }
    if let Some(best) = &state.best_params {
        for (name, t) in &best.tables {
            named.push((format!("best/{name}"), t.clone()));
        }
    }
    w.put_u64(named.len() as u64)?;
    for (name, t) in &named {
        w.put_table(name, t)?;
    }
    let crc = w.crc.finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let file = std::fs::File::open(path)?;
    let mut r = CrcReader { inner: std::io::BufReader::new(file), crc: crc32fast::Hasher::new() };
    let mut magic = [0u8; 4];
    r.get(&mut magic)?;
    if &magic != MAGIC {
        return Err(BoxKgError::CheckpointFormat(format!(
            "bad magic bytes {magic:02x?}"
        )));
    }
    let mut ver = [0u8; 4];
    r.get(&mut ver)?;
    let ver = u32::from_le_bytes(ver);
    if ver != VERSION {
        return Err(BoxKgError::VersionMismatch { found: ver, expected: VERSION });
    }
    let config_echo = r.get_str()?;
    let count = r.get_u64()? as usize;
    let mut named: BTreeMap<String, Table> = BTreeMap::new();
    for _ in 0..count {
        let (name, t) = r.get_table()?;
        named.insert(name, t);
    }
    let expected = r.crc.clone().finalize();
    let mut crc = [0u8; 4];
    r.inner
        .read_exact(&mut crc)
        .map_err(|_| BoxKgError::CheckpointFormat("missing checksum".into()))?;
    if u32::from_le_bytes(crc) != expected {
        return Err(BoxKgError::ChecksumMismatch);
    }

    let take_scalar = |named: &BTreeMap<String, Table>, key: &str| -> Result<f64> {
        named
            .get(key)
            .map(|t| t.data[0])
            .ok_or_else(|| BoxKgError::MissingTable(key.into()))
    };
    let epoch = take_scalar(&named, "meta/epoch")? as u64;
    let best_epoch = take_scalar(&named, "meta/best_epoch")? as u64;
    let best_metric = take_scalar(&named, "meta/best_metric")?;
    let seed_t = named
        .get("rng/seed")
        .ok_or_else(|| BoxKgError::MissingTable("rng/seed".into()))?;
    let mut seed = [0u8; 32];
    for i in 0..32 {
        seed[i] = seed_t.data[i] as u8;
    }
    let pos_t = named
        .get("rng/word_pos")
        .ok_or_else(|| BoxKgError::MissingTable("rng/word_pos".into()))?;
    let mut pos: u128 = 0;
    for i in 0..4 {
        pos |= (pos_t.data[i] as u128) << (32 * i);
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_word_pos(pos);

    let mut params = Params::default();
    let mut adam_m = Params::default();
    let mut adam_v = Params::default();
    let mut best = Params::default();
    let mut adam_t = BTreeMap::new();
    for (name, t) in named {
        if let Some(rest) = name.strip_prefix("param/") {
            params.insert(rest, t);
        } else if let Some(rest) = name.strip_prefix("m/") {
            adam_m.insert(rest, t);
        } else if let Some(rest) = name.strip_prefix("v/") {
            adam_v.insert(rest, t);
        } else if let Some(rest) = name.strip_prefix("best/") {
            best.insert(rest, t);
        } else if let Some(rest) = name.strip_prefix("adam_t/") {
            adam_t.insert(rest.to_string(), t.data[0] as u64);
        }
    }
    if params.tables.is_empty() {
        return Err(BoxKgError::MissingTable("no parameter tables".into()));
    }
    Ok(TrainState {
        params,
        adam_m,
        adam_v,
        adam_t,
        epoch,
        rng,
        best_metric,
        best_epoch,
        best_params: if best.tables.is_empty() { None } else { Some(best) },
        config_echo,
    })
}

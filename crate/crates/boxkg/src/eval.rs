//! Ranking-based evaluation: KG completion for both views, concept linking,
//! diversity-aware retrieval and case-study inspection.
//!
//! All evaluation is filtered: known positives from train, valid and test
//! other than the query target are removed from the candidate list. Ties
//! are resolved as the mean rank over the tied block.

use std::collections::HashSet;

use crate::cross;
use crate::error::{BoxKgError, Result};
use crate::geometry::{self, BoxConfig};
use crate::inst::{self, InstCfg};
use crate::kgdata::{SplitKG, Triple};
use crate::onto::{self, OntoCfg, TextFeatureTable};
use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Instance,
    Ontology,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Valid,
    Test,
}

/// Filtered rank of one query's true answer.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub rank: f64,
    pub candidates: usize,
}

/// Aggregate ranking metrics; hits are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub view: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub queries: usize,
}

impl MetricReport {
    pub fn from_ranks(view: &str, ranks: &[RankResult]) -> Self {
        let n = ranks.len().max(1) as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r.rank).sum::<f64>() / n;
        let hits = |k: f64| 100.0 * ranks.iter().filter(|r| r.rank <= k).count() as f64 / n;
        MetricReport {
            view: view.to_string(),
            mrr,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
            queries: ranks.len(),
        }
    }

    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for (metric, value) in [
            ("MRR", self.mrr),
            ("Hits@1", self.hits1),
            ("Hits@3", self.hits3),
            ("Hits@10", self.hits10),
        ] {
            s.push_str(&format!("{},{},{},{}\n", self.view, metric, value, self.queries));
        }
        s
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "view       {:>10}", self.view)?;
        writeln!(f, "queries    {:>10}", self.queries)?;
        writeln!(f, "MRR        {:>10.4}", self.mrr)?;
        writeln!(f, "Hits@1     {:>10.2}", self.hits1)?;
        writeln!(f, "Hits@3     {:>10.2}", self.hits3)?;
        writeln!(f, "Hits@10    {:>10.2}", self.hits10)
    }
}

/// Mean-tie filtered rank of `target` among `scores` (higher = better).
/// `filtered[i]` marks candidates removed from the list (other known
/// positives); the target itself must not be filtered.
pub fn filtered_rank(scores: &[f64], target: usize, filtered: &[bool]) -> RankResult {
    let s_t = scores[target];
    let mut better = 0usize;
    let mut tied = 0usize;
    let mut candidates = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if filtered[i] && i != target {
            continue;
        }
        candidates += 1;
        if s > s_t {
            better += 1;
        } else if s == s_t {
            tied += 1; // includes the target
        }
    }
    RankResult {
        rank: better as f64 + (tied as f64 + 1.0) / 2.0,
        candidates,
    }
}

fn run_queries<F>(n_queries: usize, threads: usize, f: F) -> Result<Vec<RankResult>>
where
    F: Fn(usize) -> Result<RankResult> + Sync,
{
    let threads = threads.max(1).min(n_queries.max(1));
    if threads == 1 {
        return (0..n_queries).map(&f).collect();
    }
    let chunk = n_queries.div_ceil(threads);
    let mut out: Vec<Result<Vec<RankResult>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(n_queries);
            let f = &f;
            handles.push(scope.spawn(move || (lo..hi).map(f).collect::<Result<Vec<_>>>()));
        }
        for h in handles {
            out.push(h.join().expect("evaluation worker panicked"));
        }
    });
    let mut merged = Vec::with_capacity(n_queries);
    for part in out {
        merged.extend(part?);
    }
    Ok(merged)
}

/// KG completion over one view: both head- and tail-corruption queries,
/// filtered ranking against all known positives.
#[allow(clippy::too_many_arguments)]
pub fn eval_kgc(
    params: &Params,
    data: &SplitKG,
    view: View,
    partition: Partition,
    ocfg: &OntoCfg,
    icfg: &InstCfg,
    bcfg: &BoxConfig,
    features: Option<&TextFeatureTable>,
    threads: usize,
) -> Result<MetricReport> {
    let tag = match view {
        View::Instance => "instance",
        View::Ontology => "ontology",
    };
    let ranks = eval_kgc_ranks(params, data, view, partition, ocfg, icfg, bcfg, features, threads)?;
    Ok(MetricReport::from_ranks(tag, &ranks))
}

/// Per-query ranks behind [`eval_kgc`], in query order: for each triple the
/// tail-corruption query then the head-corruption query.
#[allow(clippy::too_many_arguments)]
pub fn eval_kgc_ranks(
    params: &Params,
    data: &SplitKG,
    view: View,
    partition: Partition,
    ocfg: &OntoCfg,
    icfg: &InstCfg,
    bcfg: &BoxConfig,
    features: Option<&TextFeatureTable>,
    threads: usize,
) -> Result<Vec<RankResult>> {
    let (triples, positives, n_candidates, tag): (&[Triple], HashSet<Triple>, usize, &str) =
        match view {
            View::Instance => (
                match partition {
                    Partition::Valid => &data.inst_valid,
                    Partition::Test => &data.inst_test,
                },
                data.all_inst_positives(),
                data.kg.entities.len(),
                "instance",
            ),
            View::Ontology => (
                match partition {
                    Partition::Valid => &data.onto_valid,
                    Partition::Test => &data.onto_test,
                },
                data.all_onto_positives(),
                data.kg.concepts.len(),
                "ontology",
            ),
        };
    if triples.is_empty() {
        return Err(BoxKgError::EmptyPartition(format!("{tag} {partition:?}")));
    }
    let score = |h: u32, r: u32, t: u32| -> Result<f64> {
        match view {
            View::Instance => inst::score_inst_triple(h, r, t, params, icfg),
            View::Ontology => onto::score_onto_triple(h, r, t, params, features, ocfg, bcfg),
        }
    };
    // query index: 2 per triple (tail query, then head query)
    run_queries(triples.len() * 2, threads, |q| {
        let (h, r, t) = triples[q / 2];
        let tail_query = q % 2 == 0;
        let mut scores = vec![0.0; n_candidates];
        let mut filtered = vec![false; n_candidates];
        for cand in 0..n_candidates as u32 {
            let triple = if tail_query { (h, r, cand) } else { (cand, r, t) };
            scores[cand as usize] = score(triple.0, r, triple.2)?;
            filtered[cand as usize] = positives.contains(&triple);
        }
        let target = if tail_query { t } else { h } as usize;
        Ok(filtered_rank(&scores, target, &filtered))
    })
}

/// Concept linking: rank every concept for each held-out link by ascending
/// vector-to-box distance, filtered against the entity's other known concepts.
pub fn eval_linking(
    params: &Params,
    data: &SplitKG,
    partition: Partition,
    bcfg: &BoxConfig,
    threads: usize,
) -> Result<MetricReport> {
    let ranks = eval_linking_ranks(params, data, partition, bcfg, threads)?;
    Ok(MetricReport::from_ranks("linking", &ranks))
}

/// Per-link ranks behind [`eval_linking`], in partition order.
pub fn eval_linking_ranks(
    params: &Params,
    data: &SplitKG,
    partition: Partition,
    bcfg: &BoxConfig,
    threads: usize,
) -> Result<Vec<RankResult>> {
    let links = match partition {
        Partition::Valid => &data.link_valid,
        Partition::Test => &data.link_test,
    };
    if links.is_empty() {
        return Err(BoxKgError::EmptyPartition(format!("links {partition:?}")));
    }
    let positives = data.all_link_positives();
    let n_concepts = data.kg.concepts.len();
    run_queries(links.len(), threads, |q| {
        let (e, c) = links[q];
        let mut scores = vec![0.0; n_concepts];
        let mut filtered = vec![false; n_concepts];
        for cand in 0..n_concepts as u32 {
            // negate distance: filtered_rank expects higher = better
            scores[cand as usize] = -cross::link_distance(e, cand, params, bcfg)?;
            filtered[cand as usize] = positives.contains(&(e, cand));
        }
        Ok(filtered_rank(&scores, c as usize, &filtered))
    })
}

/// Per-recipe diversity-aware retrieval result.
#[derive(Debug, Clone)]
pub struct DiversityResult {
    pub recipe: u32,
    /// Hits@(K*M): percent of gold entities retrieved.
    pub hits: f64,
    pub gold: usize,
    pub retrieved: usize,
    pub padded: bool,
}

/// Diversity-aware evaluation: top-K related concepts under `relation`,
/// then top-M entities per concept, scored at a fixed budget `K*M`.
#[allow(clippy::too_many_arguments)]
pub fn eval_diversity(
    params: &Params,
    data: &SplitKG,
    recipes: &[u32],
    relation: u32,
    k: usize,
    m: usize,
    budget: usize,
    ocfg: &OntoCfg,
    bcfg: &BoxConfig,
    features: Option<&TextFeatureTable>,
) -> Result<Vec<DiversityResult>> {
    if k * m != budget {
        return Err(BoxKgError::BadConfig(format!(
            "types * items must equal the budget: {k} * {m} != {budget}"
        )));
    }
    let n_concepts = data.kg.concepts.len();
    let n_entities = data.kg.entities.len();
    let mut out = Vec::new();
    for &recipe in recipes {
        let gold: HashSet<u32> = data
            .link_test
            .iter()
            .filter(|&&(_, c)| c == recipe)
            .map(|&(e, _)| e)
            .collect();
        if gold.is_empty() {
            continue;
        }
        // top-K related concepts by ontology score under `relation`
        let mut related: Vec<(u32, f64)> = (0..n_concepts as u32)
            .filter(|&c| c != recipe)
            .map(|c| {
                onto::score_onto_triple(recipe, relation, c, params, features, ocfg, bcfg)
                    .map(|s| (c, s))
            })
            .collect::<Result<_>>()?;
        related.sort_by(|a, b| b.1.total_cmp(&a.1));
        let padded = related.len() < k;
        related.truncate(k);
        // top-M entities per related concept by ascending link distance
        let mut union: Vec<u32> = Vec::new();
        let mut seen: HashSet<u32> = HashSet::new();
        for &(c, _) in &related {
            let mut dists: Vec<(u32, f64)> = (0..n_entities as u32)
                .map(|e| cross::link_distance(e, c, params, bcfg).map(|d| (e, d)))
                .collect::<Result<_>>()?;
            dists.sort_by(|a, b| a.1.total_cmp(&b.1));
            for &(e, _) in dists.iter().take(m) {
                if seen.insert(e) {
                    union.push(e);
                }
            }
        }
        let hit = gold.iter().filter(|e| seen.contains(e)).count();
        out.push(DiversityResult {
            recipe,
            hits: 100.0 * hit as f64 / gold.len() as f64,
            gold: gold.len(),
            retrieved: union.len(),
            padded,
        });
    }
    if out.is_empty() {
        return Err(BoxKgError::EmptyPartition(
            "no recipe with gold links in the test partition".into(),
        ));
    }
    Ok(out)
}

/// Case-study inspection: concepts ranked by intersection volume with the
/// query concept (under the relation transform), plus the full volume table.
pub fn inspect_concepts(
    params: &Params,
    concept: u32,
    relation: u32,
    top_k: usize,
    n_concepts: usize,
    ocfg: &OntoCfg,
    bcfg: &BoxConfig,
    features: Option<&TextFeatureTable>,
) -> Result<(Vec<(u32, f64)>, Vec<(u32, f64)>)> {
    let query = onto::transform_box(concept, relation, params, features, ocfg.transform)?;
    let q_lo = query.lo();
    let q_hi = query.hi();
    let mut intersections: Vec<(u32, f64)> = Vec::with_capacity(n_concepts);
    for other in 0..n_concepts as u32 {
        let b = onto::transform_box(other, relation, params, features, ocfg.transform)?;
        let inter = geometry::intersect_corners(&q_lo, &q_hi, &b.lo(), &b.hi(), bcfg)?;
        let lv = geometry::log_volume_corners(&inter.lo, &inter.hi, bcfg)?;
        intersections.push((other, lv.value.exp()));
    }
    intersections.sort_by(|a, b| b.1.total_cmp(&a.1));
    intersections.truncate(top_k);
    let mut volumes: Vec<(u32, f64)> = Vec::with_capacity(n_concepts);
    for c in 0..n_concepts as u32 {
        let cen = params.row(crate::params::tables::CONCEPT_CENTER, c as usize)?;
        let pre = params.row(crate::params::tables::CONCEPT_PREOFF, c as usize)?;
        let off: Vec<f64> = pre.iter().map(|&x| geometry::softplus(x)).collect();
        let b = geometry::GumbelBox::new(cen.to_vec(), off)?;
        volumes.push((c, geometry::expected_volume(&b, bcfg)?));
    }
    volumes.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((intersections, volumes))
}

//! Synthetic two-view KG generator: a concept hierarchy, entities clustered
//! under leaves, and instance triples biased toward same-leaf pairs.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{BoxKgError, Result};
use crate::kgdata::TwoViewKG;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Children per node at each level below the root; `[7, 6]` gives a
    /// 3-level hierarchy with 1 + 7 + 42 = 50 concepts.
    pub branching: Vec<usize>,
    pub entities: usize,
    pub inst_triples: usize,
    pub inst_relations: usize,
    /// Fraction of ontology noise triples (random concept pairs) added on
    /// top of the hierarchy edges.
    pub noise: f64,
    /// Probability that an instance triple's tail shares the head's leaf.
    pub intra_leaf: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            branching: vec![7, 6],
            entities: 500,
            inst_triples: 5000,
            inst_relations: 3,
            noise: 0.0,
            intra_leaf: 0.9,
            seed: 17,
        }
    }
}

/// Generate a synthetic KG. Hierarchy edges are emitted as
/// `(super, subsumes, sub)` so that training pulls each sub-concept box
/// inside its parent. Every entity is linked to one leaf concept and to
/// that leaf's parent.
pub fn generate(cfg: &SynthConfig) -> Result<TwoViewKG> {
    if cfg.branching.is_empty() || cfg.branching.iter().any(|&b| b == 0) {
        return Err(BoxKgError::BadConfig("branching factors must be >= 1".into()));
    }
    if cfg.entities == 0 || cfg.inst_relations == 0 {
        return Err(BoxKgError::BadConfig("need at least one entity and relation".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) || !(0.0..=1.0).contains(&cfg.intra_leaf) {
        return Err(BoxKgError::BadConfig("rates must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut kg = TwoViewKG::default();

    // breadth-first concept layout; parent[i] for non-roots
    let mut parent: Vec<Option<u32>> = vec![None];
    kg.concepts.intern("c0");
    let mut level_start = 0usize;
    let mut level_len = 1usize;
    for &b in &cfg.branching {
        let next_start = parent.len();
        for p in level_start..level_start + level_len {
            for _ in 0..b {
                let id = kg.concepts.intern(&format!("c{}", parent.len()));
                debug_assert_eq!(id as usize, parent.len());
                parent.push(Some(p as u32));
            }
        }
        level_start = next_start;
        level_len = parent.len() - next_start;
    }
    let leaves: Vec<u32> = (level_start..parent.len()).map(|i| i as u32).collect();
    let n_c = parent.len() as u32;

    let subsumes = kg.onto_relations.intern("subsumes");
    let mut onto_seen: HashSet<(u32, u32)> = HashSet::new();
    for (child, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            kg.onto_triples.push((*p, subsumes, child as u32));
            onto_seen.insert((*p, child as u32));
        }
    }
    let n_noise = (cfg.noise * kg.onto_triples.len() as f64).round() as usize;
    let mut added = 0usize;
    let mut attempts = 0usize;
    while added < n_noise && attempts < 100 * n_noise.max(1) {
        attempts += 1;
        let h = rng.gen_range(0..n_c);
        let t = rng.gen_range(0..n_c);
        if h != t && onto_seen.insert((h, t)) {
            kg.onto_triples.push((h, subsumes, t));
            added += 1;
        }
    }

    // entities round-robin over leaves, linked to leaf and its parent
    let mut home = vec![0u32; cfg.entities];
    for e in 0..cfg.entities {
        kg.entities.intern(&format!("e{e}"));
        let leaf = leaves[e % leaves.len()];
        home[e] = leaf;
        kg.cross_links.push((e as u32, leaf));
        if let Some(p) = parent[leaf as usize] {
            kg.cross_links.push((e as u32, p));
        }
    }

    // leaf -> member entities, for intra-leaf tail sampling
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); parent.len()];
    for (e, &leaf) in home.iter().enumerate() {
        members[leaf as usize].push(e as u32);
    }

    for r in 0..cfg.inst_relations {
        kg.inst_relations.intern(&format!("r{r}"));
    }
    let mut inst_seen: HashSet<(u32, u32, u32)> = HashSet::new();
    let mut attempts = 0usize;
    while kg.inst_triples.len() < cfg.inst_triples && attempts < 100 * cfg.inst_triples {
        attempts += 1;
        let h = rng.gen_range(0..cfg.entities as u32);
        let r = rng.gen_range(0..cfg.inst_relations as u32);
        let t = if rng.gen_bool(cfg.intra_leaf) {
            let peers = &members[home[h as usize] as usize];
            peers[rng.gen_range(0..peers.len())]
        } else {
            rng.gen_range(0..cfg.entities as u32)
        };
        if h != t && inst_seen.insert((h, r, t)) {
            kg.inst_triples.push((h, r, t));
        }
    }
    if kg.inst_triples.len() < cfg.inst_triples {
        return Err(BoxKgError::SamplingExhausted {
            needed: cfg.inst_triples,
            got: kg.inst_triples.len(),
        });
    }
    kg.validate()?;
    Ok(kg)
}

/// Gold (sub, super) concept pairs recovered from the hierarchy edges.
pub fn gold_hierarchy_pairs(kg: &TwoViewKG) -> Vec<(u32, u32)> {
    kg.onto_triples.iter().map(|&(h, _, t)| (t, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_advertised_scale() {
        let kg = generate(&SynthConfig::default()).unwrap();
        assert_eq!(kg.concepts.len(), 50); // 1 + 7 + 42
        assert_eq!(kg.entities.len(), 500);
        assert_eq!(kg.inst_triples.len(), 5000);
        assert_eq!(kg.onto_triples.len(), 49); // tree edges
        assert_eq!(kg.cross_links.len(), 1000); // leaf + parent per entity
    }

    #[test]
    fn hierarchy_edges_point_from_super_to_sub() {
        let kg = generate(&SynthConfig::default()).unwrap();
        // BFS ids: parents always come before children
        for &(h, _, t) in &kg.onto_triples {
            assert!(h < t, "edge ({h}, {t}) not super->sub");
        }
        // every non-root concept has exactly one parent
        let mut seen = vec![0usize; kg.concepts.len()];
        for &(_, _, t) in &kg.onto_triples {
            seen[t as usize] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1..].iter().all(|&c| c == 1));
    }

    #[test]
    fn no_self_loops_or_duplicates() {
        let mut cfg = SynthConfig::default();
        cfg.noise = 0.1;
        let kg = generate(&cfg).unwrap();
        let uniq: HashSet<_> = kg.inst_triples.iter().collect();
        assert_eq!(uniq.len(), kg.inst_triples.len());
        assert!(kg.inst_triples.iter().all(|&(h, _, t)| h != t));
        let uniq: HashSet<_> = kg.onto_triples.iter().collect();
        assert_eq!(uniq.len(), kg.onto_triples.len());
        assert!(kg.onto_triples.iter().all(|&(h, _, t)| h != t));
    }

    #[test]
    fn same_seed_reproduces_same_kg() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.inst_triples, b.inst_triples);
        assert_eq!(a.onto_triples, b.onto_triples);
        assert_eq!(a.cross_links, b.cross_links);
    }

    #[test]
    fn gold_pairs_are_child_parent() {
        let kg = generate(&SynthConfig::default()).unwrap();
        let pairs = gold_hierarchy_pairs(&kg);
        assert_eq!(pairs.len(), 49);
        assert!(pairs.iter().all(|&(sub, sup)| sup < sub));
    }

    #[test]
    fn intra_leaf_bias_shows_in_triples() {
        let kg = generate(&SynthConfig::default()).unwrap();
        // reconstruct leaf homes from the first link of each entity
        let mut home = vec![u32::MAX; kg.entities.len()];
        for &(e, c) in &kg.cross_links {
            // leaves have the larger ids; entities link leaf first
            if home[e as usize] == u32::MAX || c > home[e as usize] {
                home[e as usize] = c;
            }
        }
        let same = kg
            .inst_triples
            .iter()
            .filter(|&&(h, _, t)| home[h as usize] == home[t as usize])
            .count();
        let frac = same as f64 / kg.inst_triples.len() as f64;
        assert!(frac > 0.8, "intra-leaf fraction {frac}");
    }
}

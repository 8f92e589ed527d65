//! Randomized invariant checks for the geometry kernels, data splitting,
//! negative sampling, ranking, and config round-trips.

use proptest::prelude::*;

use boxkg::config::RunConfig;
use boxkg::eval::filtered_rank;
use boxkg::geometry::{
    self, BoxConfig, GumbelBox, IntersectionMode, log1pexp, softplus, softplus_inv,
};
use boxkg::kgdata::{
    SplitMode, Triple, TwoViewKG, partition_sizes, sample_negative_links,
    sample_negative_triples, split_kg,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

fn any_box(dim: usize) -> impl Strategy<Value = GumbelBox> {
    (
        prop::collection::vec(-5.0f64..5.0, dim),
        prop::collection::vec(0.01f64..3.0, dim),
    )
        .prop_map(|(cen, off)| GumbelBox::new(cen, off).unwrap())
}

fn cfg(dim: usize, mode: IntersectionMode) -> BoxConfig {
    let mut c = BoxConfig::new(dim);
    c.intersection = mode;
    c
}

const MODES: [IntersectionMode; 2] = [IntersectionMode::Smooth, IntersectionMode::Hard];

proptest! {
    #[test]
    fn scalar_kernels_behave(x in -700.0f64..700.0) {
        // log1pexp is nonnegative, dominates x, and never overflows
        let v = log1pexp(x);
        prop_assert!(v.is_finite());
        prop_assert!(v >= 0.0);
        prop_assert!(v >= x - 1e-12);
        // softplus_inv inverts softplus where the latter is representable
        if x.abs() < 30.0 {
            let y = softplus(x);
            prop_assert!((softplus_inv(y) - x).abs() < 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn volume_positive_and_monotone(b in any_box(4), grow in 0.01f64..2.0) {
        for mode in MODES {
            let c = cfg(4, mode);
            let v = geometry::expected_volume(&b, &c).unwrap();
            prop_assert!(v.is_finite() && v > 0.0);
            let bigger = GumbelBox::new(
                b.center.clone(),
                b.offset.iter().map(|o| o + grow).collect(),
            )
            .unwrap();
            let v2 = geometry::expected_volume(&bigger, &c).unwrap();
            prop_assert!(v2 > v, "mode {mode:?}: grew offsets but volume {v2} <= {v}");
        }
    }

    #[test]
    fn intersection_no_larger_than_either(x in any_box(4), y in any_box(4)) {
        for mode in MODES {
            let c = cfg(4, mode);
            let (lo, hi) = geometry::intersect(&x, &y, &c).unwrap();
            let vi = geometry::log_volume_corners(&lo, &hi, &c).unwrap().value;
            let vx = geometry::log_volume_corners(&x.lo(), &x.hi(), &c).unwrap().value;
            let vy = geometry::log_volume_corners(&y.lo(), &y.hi(), &c).unwrap().value;
            prop_assert!(vi <= vx.min(vy) + 1e-9, "mode {mode:?}: {vi} > min({vx}, {vy})");
        }
    }

    #[test]
    fn conditional_probability_is_a_probability(x in any_box(3), y in any_box(3)) {
        for mode in MODES {
            let c = cfg(3, mode);
            let p = geometry::conditional_probability(&x, &y, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&p), "mode {mode:?}: P = {p}");
        }
    }

    #[test]
    fn adaptive_alpha_stays_in_open_interval(
        b in any_box(4),
        alpha in 0.05f64..0.95,
        scale in 0.001f64..100.0,
    ) {
        // scale sweeps volumes over many orders of magnitude, including ones
        // small enough to hit the volume clamp
        let scaled = GumbelBox::new(
            b.center.clone(),
            b.offset.iter().map(|o| o * scale).collect(),
        )
        .unwrap();
        let mut c = BoxConfig::new(4);
        c.alpha = alpha;
        let a = geometry::adaptive_alpha(&scaled, &c).unwrap();
        prop_assert!(a > alpha / 2.0 && a < alpha, "alpha {a} outside ({}, {alpha})", alpha / 2.0);
    }

    #[test]
    fn vector_box_distance_nonnegative_zero_at_center(
        b in any_box(4),
        e in prop::collection::vec(-6.0f64..6.0, 4),
        alpha in 0.05f64..0.95,
    ) {
        let d = geometry::vector_to_box_distance(&e, &b, alpha).unwrap();
        prop_assert!(d.total >= 0.0 && d.dist_out >= 0.0 && d.dist_in >= 0.0);
        let at_center = geometry::vector_to_box_distance(&b.center, &b, alpha).unwrap();
        prop_assert_eq!(at_center.total, 0.0);
    }

    #[test]
    fn partition_sizes_exhaust_n(n in 3usize..10_000, v in 0.05f64..0.3, t in 0.05f64..0.3) {
        let ratios = (1.0 - v - t, v, t);
        let (a, b, c) = partition_sizes(n, ratios);
        prop_assert_eq!(a + b + c, n);
        prop_assert!(a >= b && a >= c, "train {a} smaller than valid {b} / test {c}");
    }

    #[test]
    fn split_partitions_reconstruct_input(seed in 0u64..1000, n_links in 30usize..200) {
        let kg = toy_kg(50, 8, n_links);
        let links: Vec<_> = kg.cross_links.clone();
        let split = split_kg(kg, (0.8, 0.1, 0.1), seed, SplitMode::Linking).unwrap();
        let mut rebuilt: Vec<_> = split
            .link_train
            .iter()
            .chain(&split.link_valid)
            .chain(&split.link_test)
            .copied()
            .collect();
        rebuilt.sort_unstable();
        let mut original = links;
        original.sort_unstable();
        prop_assert_eq!(rebuilt, original);
        prop_assert!(!split.link_valid.is_empty() && !split.link_test.is_empty());
        // triples are untouched in linking mode
        prop_assert_eq!(split.inst_train.len(), split.kg.inst_triples.len());
        prop_assert_eq!(split.onto_train.len(), split.kg.onto_triples.len());
    }

    #[test]
    fn negative_triples_are_valid_corruptions(seed in 0u64..1000, k in 1usize..12) {
        let kg = toy_kg(40, 6, 60);
        let positives: HashSet<Triple> = kg.inst_triples.iter().copied().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pos = kg.inst_triples[seed as usize % kg.inst_triples.len()];
        let negs =
            sample_negative_triples(pos, k, &mut rng, kg.entities.len() as u32, &positives, true)
                .unwrap();
        prop_assert_eq!(negs.len(), k);
        let mut seen = HashSet::new();
        for n in &negs {
            prop_assert!(!positives.contains(&n.item));
            prop_assert!(seen.insert(n.item), "duplicate negative {:?}", n.item);
            let (h, r, t) = n.item;
            prop_assert_eq!(r, pos.1);
            if n.corrupted_head {
                prop_assert_eq!(t, pos.2);
            } else {
                prop_assert_eq!(h, pos.0);
            }
            prop_assert!(h < kg.entities.len() as u32 && t < kg.entities.len() as u32);
        }
    }

    #[test]
    fn negative_links_are_valid_corruptions(seed in 0u64..1000, k in 1usize..8) {
        let kg = toy_kg(40, 6, 60);
        let positives: HashSet<_> = kg.cross_links.iter().copied().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pos = kg.cross_links[seed as usize % kg.cross_links.len()];
        let negs = sample_negative_links(
            pos,
            k,
            &mut rng,
            kg.entities.len() as u32,
            kg.concepts.len() as u32,
            &positives,
            true,
        )
        .unwrap();
        prop_assert_eq!(negs.len(), k);
        for n in &negs {
            prop_assert!(!positives.contains(&n.item));
            if n.corrupted_head {
                prop_assert_eq!(n.item.1, pos.1);
                prop_assert!(n.item.0 < kg.entities.len() as u32);
            } else {
                prop_assert_eq!(n.item.0, pos.0);
                prop_assert!(n.item.1 < kg.concepts.len() as u32);
            }
        }
    }

    #[test]
    fn filtered_rank_matches_sort_reference(
        raw in prop::collection::vec(0i32..6, 5..40),
        target_ix in 0usize..1000,
        mask in prop::collection::vec(prop::bool::weighted(0.8), 40),
    ) {
        // coarse integer scores force plenty of ties; filtered = removed
        let scores: Vec<f64> = raw.iter().map(|&s| s as f64).collect();
        let target = target_ix % scores.len();
        let mut filtered: Vec<bool> = mask[..scores.len()].to_vec();
        filtered[target] = false;
        let got = filtered_rank(&scores, target, &filtered);
        prop_assert_eq!(got.rank, sort_rank(&scores, target, &filtered));
        prop_assert_eq!(got.candidates, filtered.iter().filter(|&&f| !f).count());
        prop_assert!(got.rank >= 1.0 && got.rank <= got.candidates as f64);
    }

    #[test]
    fn run_config_echo_round_trips(
        lr in 1e-5f64..1.0,
        beta in 0.001f64..10.0,
        alpha in 0.05f64..0.95,
        d_vec in 1usize..64,
        d_box in 1usize..64,
        epochs in 1usize..500,
        seed in any::<u64>(),
    ) {
        let mut c = RunConfig::default();
        c.set("lr", &lr.to_string()).unwrap();
        c.set("beta", &beta.to_string()).unwrap();
        c.set("alpha", &alpha.to_string()).unwrap();
        c.set("d_vec", &d_vec.to_string()).unwrap();
        c.set("d_box", &d_box.to_string()).unwrap();
        c.set("max_epochs", &epochs.to_string()).unwrap();
        c.set("seed", &seed.to_string()).unwrap();
        let back = RunConfig::from_echo(&c.echo()).unwrap();
        prop_assert_eq!(back.echo(), c.echo());
    }
}

/// Mean rank over tied blocks, computed by explicit sorting.
fn sort_rank(scores: &[f64], target: usize, filtered: &[bool]) -> f64 {
    let mut kept: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(i, _)| !filtered[i])
        .collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    let first = kept.iter().position(|&(_, s)| s == scores[target]).unwrap();
    let last = kept.iter().rposition(|&(_, s)| s == scores[target]).unwrap();
    (first + last) as f64 / 2.0 + 1.0
}

/// A small well-formed KG with e0..e{ne}, c0..c{nc}, one relation per view.
fn toy_kg(ne: usize, nc: usize, n_links: usize) -> TwoViewKG {
    let mut kg = TwoViewKG::default();
    for i in 0..ne {
        kg.entities.intern(&format!("e{i}"));
    }
    for i in 0..nc {
        kg.concepts.intern(&format!("c{i}"));
    }
    kg.inst_relations.intern("r0");
    kg.onto_relations.intern("subsumes");
    for i in 0..ne {
        kg.inst_triples.push((i as u32, 0, ((i * 7 + 3) % ne) as u32));
    }
    for i in 1..nc {
        kg.onto_triples.push((((i - 1) / 2) as u32, 0, i as u32));
    }
    for i in 0..n_links {
        kg.cross_links.push(((i % ne) as u32, ((i * 5 + i / ne) % nc) as u32));
    }
    kg.cross_links.sort_unstable();
    kg.cross_links.dedup();
    kg.validate().unwrap();
    kg
}

#[test]
fn toy_kg_is_well_formed() {
    let kg = toy_kg(40, 6, 60);
    assert!(kg.cross_links.len() >= 40);
    assert_eq!(kg.onto_triples.len(), 5);
}

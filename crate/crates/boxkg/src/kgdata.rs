//! Two-view KG loading, validation, splitting and negative sampling.
//!
//! File formats: triple files are UTF-8 TSV with exactly three fields per
//! line (`head<TAB>relation<TAB>tail`), link files have two fields
//! (`entity<TAB>concept`). Names may contain spaces but not tabs.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::error::{BoxKgError, Result};

pub type Triple = (u32, u32, u32);
pub type Link = (u32, u32);

/// Id-indexed name vocabulary; ids are assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Closest name by Levenshtein distance, for error suggestions.
    pub fn nearest(&self, query: &str) -> Option<String> {
        self.names
            .iter()
            .map(|n| (edit_distance(query, n), n))
            .min_by_key(|(d, _)| *d)
            .map(|(_, n)| n.clone())
    }
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The full two-view KG: vocabularies plus instance triples, ontology
/// triples and cross-view links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TwoViewKG {
    pub entities: Vocab,
    pub concepts: Vocab,
    pub inst_relations: Vocab,
    pub onto_relations: Vocab,
    pub inst_triples: Vec<Triple>,
    pub onto_triples: Vec<Triple>,
    pub cross_links: Vec<Link>,
    /// Duplicate input lines dropped during loading.
    pub duplicates_dropped: usize,
}

impl TwoViewKG {
    pub fn validate(&self) -> Result<()> {
        for name in self.entities.names() {
            if self.concepts.contains(name) {
                return Err(BoxKgError::NameCollision(name.clone()));
            }
        }
        let ne = self.entities.len() as u32;
        let nc = self.concepts.len() as u32;
        for &(h, r, t) in &self.inst_triples {
            check_id("entity", h, ne)?;
            check_id("entity", t, ne)?;
            check_id("instance relation", r, self.inst_relations.len() as u32)?;
        }
        for &(h, r, t) in &self.onto_triples {
            check_id("concept", h, nc)?;
            check_id("concept", t, nc)?;
            check_id("ontology relation", r, self.onto_relations.len() as u32)?;
        }
        for &(e, c) in &self.cross_links {
            check_id("entity", e, ne)?;
            check_id("concept", c, nc)?;
        }
        Ok(())
    }
}

fn check_id(kind: &'static str, id: u32, len: u32) -> Result<()> {
    if id >= len {
        return Err(BoxKgError::IdOutOfRange {
            kind,
            id,
            len: len as usize,
        });
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| {
        BoxKgError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line?);
    }
    Ok(lines)
}

fn split_fields<'a>(
    line: &'a str,
    n: usize,
    file: &Path,
    line_no: usize,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n || fields.iter().any(|f| f.is_empty()) {
        return Err(BoxKgError::MalformedLine {
            file: file.display().to_string(),
            line: line_no,
            msg: format!("expected {n} non-empty tab-separated fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

/// Load and validate a two-view KG from three TSV files.
///
/// Vocabulary ids follow first appearance order across the files
/// (instance triples, then ontology triples, then links). Duplicate lines
/// are dropped and counted.
pub fn load_kg(inst_path: &Path, onto_path: &Path, links_path: &Path) -> Result<TwoViewKG> {
    let mut kg = TwoViewKG::default();
    let mut seen_inst: HashSet<Triple> = HashSet::new();
    let mut seen_onto: HashSet<Triple> = HashSet::new();
    let mut seen_links: HashSet<Link> = HashSet::new();

    let inst_lines = read_lines(inst_path)?;
    if inst_lines.iter().all(|l| l.trim().is_empty()) {
        return Err(BoxKgError::EmptyFile(inst_path.display().to_string()));
    }
    for (i, line) in inst_lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(line, 3, inst_path, i + 1)?;
        let h = kg.entities.intern(f[0]);
        let r = kg.inst_relations.intern(f[1]);
        let t = kg.entities.intern(f[2]);
        if seen_inst.insert((h, r, t)) {
            kg.inst_triples.push((h, r, t));
        } else {
            kg.duplicates_dropped += 1;
        }
    }

    let onto_lines = read_lines(onto_path)?;
    if onto_lines.iter().all(|l| l.trim().is_empty()) {
        return Err(BoxKgError::EmptyFile(onto_path.display().to_string()));
    }
    for (i, line) in onto_lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(line, 3, onto_path, i + 1)?;
        for name in [f[0], f[2]] {
            if kg.entities.contains(name) {
                return Err(BoxKgError::NameCollision(name.to_string()));
            }
        }
        let h = kg.concepts.intern(f[0]);
        let r = kg.onto_relations.intern(f[1]);
        let t = kg.concepts.intern(f[2]);
        if seen_onto.insert((h, r, t)) {
            kg.onto_triples.push((h, r, t));
        } else {
            kg.duplicates_dropped += 1;
        }
    }

    let link_lines = read_lines(links_path)?;
    if link_lines.iter().all(|l| l.trim().is_empty()) {
        return Err(BoxKgError::EmptyFile(links_path.display().to_string()));
    }
    for (i, line) in link_lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(line, 2, links_path, i + 1)?;
        if kg.concepts.contains(f[0]) {
            return Err(BoxKgError::NameCollision(f[0].to_string()));
        }
        if kg.entities.contains(f[1]) {
            return Err(BoxKgError::NameCollision(f[1].to_string()));
        }
        let e = kg.entities.intern(f[0]);
        let c = kg.concepts.intern(f[1]);
        if seen_links.insert((e, c)) {
            kg.cross_links.push((e, c));
        } else {
            kg.duplicates_dropped += 1;
        }
    }

    kg.validate()?;
    Ok(kg)
}

/// Write a KG back to `inst.tsv`, `onto.tsv`, `links.tsv` under `dir`.
pub fn write_kg(kg: &TwoViewKG, dir: &Path) -> Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(File::create(dir.join("inst.tsv"))?);
    for &(h, r, t) in &kg.inst_triples {
        writeln!(
            f,
            "{}\t{}\t{}",
            kg.entities.name_of(h).unwrap(),
            kg.inst_relations.name_of(r).unwrap(),
            kg.entities.name_of(t).unwrap()
        )?;
    }
    let mut f = std::io::BufWriter::new(File::create(dir.join("onto.tsv"))?);
    for &(h, r, t) in &kg.onto_triples {
        writeln!(
            f,
            "{}\t{}\t{}",
            kg.concepts.name_of(h).unwrap(),
            kg.onto_relations.name_of(r).unwrap(),
            kg.concepts.name_of(t).unwrap()
        )?;
    }
    let mut f = std::io::BufWriter::new(File::create(dir.join("links.tsv"))?);
    for &(e, c) in &kg.cross_links {
        writeln!(
            f,
            "{}\t{}",
            kg.entities.name_of(e).unwrap(),
            kg.concepts.name_of(c).unwrap()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Both triple sets split; all cross links go to train.
    Kgc,
    /// Cross links split; all triples go to train.
    Linking,
}

/// Train/valid/test partitions of a [`TwoViewKG`].
#[derive(Debug, Clone)]
pub struct SplitKG {
    pub kg: TwoViewKG,
    pub inst_train: Vec<Triple>,
    pub inst_valid: Vec<Triple>,
    pub inst_test: Vec<Triple>,
    pub onto_train: Vec<Triple>,
    pub onto_valid: Vec<Triple>,
    pub onto_test: Vec<Triple>,
    pub link_train: Vec<Link>,
    pub link_valid: Vec<Link>,
    pub link_test: Vec<Link>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub mode: SplitMode,
}

/// Floor allocation with the remainder assigned to train.
pub fn partition_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = (ratios.0 * n as f64).floor() as usize;
    let valid = (ratios.1 * n as f64).floor() as usize;
    let test = (ratios.2 * n as f64).floor() as usize;
    (n - valid - test, valid, test.min(n - train - valid))
}

fn split_items<T: Copy>(
    items: &[T],
    ratios: (f64, f64, f64),
    rng: &mut impl Rng,
    what: &str,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(rng);
    let (n_train, n_valid, n_test) = partition_sizes(items.len(), ratios);
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(BoxKgError::EmptyPartition(format!(
            "{what}: {} items cannot fill {:?} partitions",
            items.len(),
            ratios
        )));
    }
    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        idx[range].iter().map(|&i| items[i]).collect()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_valid),
        take(n_train + n_valid..n_train + n_valid + n_test),
    ))
}

/// Deterministic random split of the KG for the chosen evaluation protocol.
pub fn split_kg(
    kg: TwoViewKG,
    ratios: (f64, f64, f64),
    seed: u64,
    mode: SplitMode,
) -> Result<SplitKG> {
    if ratios.0 <= 0.0 || ratios.1 <= 0.0 || ratios.2 <= 0.0 {
        return Err(BoxKgError::BadConfig("split ratios must be positive".into()));
    }
    if ((ratios.0 + ratios.1 + ratios.2) - 1.0).abs() > 1e-9 {
        return Err(BoxKgError::BadConfig(format!(
            "split ratios must sum to 1, got {:?}",
            ratios
        )));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut split = SplitKG {
        inst_train: kg.inst_triples.clone(),
        inst_valid: Vec::new(),
        inst_test: Vec::new(),
        onto_train: kg.onto_triples.clone(),
        onto_valid: Vec::new(),
        onto_test: Vec::new(),
        link_train: kg.cross_links.clone(),
        link_valid: Vec::new(),
        link_test: Vec::new(),
        ratios,
        seed,
        mode,
        kg,
    };
    match mode {
        SplitMode::Kgc => {
            let (a, b, c) = split_items(&split.kg.inst_triples, ratios, &mut rng, "instance triples")?;
            split.inst_train = a;
            split.inst_valid = b;
            split.inst_test = c;
            let (a, b, c) = split_items(&split.kg.onto_triples, ratios, &mut rng, "ontology triples")?;
            split.onto_train = a;
            split.onto_valid = b;
            split.onto_test = c;
        }
        SplitMode::Linking => {
            let (a, b, c) = split_items(&split.kg.cross_links, ratios, &mut rng, "cross links")?;
            split.link_train = a;
            split.link_valid = b;
            split.link_test = c;
        }
    }
    Ok(split)
}

impl SplitKG {
    pub fn all_inst_positives(&self) -> HashSet<Triple> {
        self.kg.inst_triples.iter().copied().collect()
    }

    pub fn all_onto_positives(&self) -> HashSet<Triple> {
        self.kg.onto_triples.iter().copied().collect()
    }

    pub fn all_link_positives(&self) -> HashSet<Link> {
        self.kg.cross_links.iter().copied().collect()
    }
}

/// A corrupted triple or link; `corrupted_head` records which side changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample<T> {
    pub item: T,
    pub corrupted_head: bool,
}

/// Sample `k` filtered negative triples by replacing head or tail
/// (uniform coin per sample) with a uniform draw from the same vocabulary.
///
/// Negatives never collide with any known positive. Retry budget is
/// `100 * k` draws; `distinct` additionally requires pairwise-distinct
/// samples.
pub fn sample_negative_triples(
    positive: Triple,
    k: usize,
    rng: &mut impl Rng,
    vocab_size: u32,
    positives: &HashSet<Triple>,
    distinct: bool,
) -> Result<Vec<NegativeSample<Triple>>> {
    debug_assert!(k >= 1);
    let (h, r, t) = positive;
    let budget = 100 * k;
    let mut out = Vec::with_capacity(k);
    let mut seen: HashSet<Triple> = HashSet::new();
    let mut draws = 0;
    while out.len() < k {
        if draws >= budget {
            return Err(BoxKgError::SamplingExhausted {
                needed: k,
                got: out.len(),
            });
        }
        draws += 1;
        let corrupt_head = rng.gen_bool(0.5);
        let repl = rng.gen_range(0..vocab_size);
        let cand = if corrupt_head { (repl, r, t) } else { (h, r, repl) };
        if positives.contains(&cand) {
            continue;
        }
        if distinct && !seen.insert(cand) {
            continue;
        }
        out.push(NegativeSample {
            item: cand,
            corrupted_head: corrupt_head,
        });
    }
    Ok(out)
}

/// Link analogue of [`sample_negative_triples`]; replaces the entity or the
/// concept side with equal probability.
pub fn sample_negative_links(
    positive: Link,
    k: usize,
    rng: &mut impl Rng,
    n_entities: u32,
    n_concepts: u32,
    positives: &HashSet<Link>,
    distinct: bool,
) -> Result<Vec<NegativeSample<Link>>> {
    debug_assert!(k >= 1);
    let (e, c) = positive;
    let budget = 100 * k;
    let mut out = Vec::with_capacity(k);
    let mut seen: HashSet<Link> = HashSet::new();
    let mut draws = 0;
    while out.len() < k {
        if draws >= budget {
            return Err(BoxKgError::SamplingExhausted {
                needed: k,
                got: out.len(),
            });
        }
        draws += 1;
        let corrupt_entity = rng.gen_bool(0.5);
        let cand = if corrupt_entity {
            (rng.gen_range(0..n_entities), c)
        } else {
            (e, rng.gen_range(0..n_concepts))
        };
        if positives.contains(&cand) {
            continue;
        }
        if distinct && !seen.insert(cand) {
            continue;
        }
        out.push(NegativeSample {
            item: cand,
            corrupted_head: corrupt_entity,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    fn minimal_kg(dir: &Path) -> TwoViewKG {
        let inst = write_file(dir, "inst.tsv", "a\tR\tb\n");
        let onto = write_file(dir, "onto.tsv", "X\tisa\tY\n");
        let links = write_file(dir, "links.tsv", "a\tX\n");
        load_kg(&inst, &onto, &links).unwrap()
    }

    #[test]
    fn load_minimal_kg() {
        let dir = tempfile::tempdir().unwrap();
        let kg = minimal_kg(dir.path());
        assert_eq!(kg.entities.len(), 2);
        assert_eq!(kg.concepts.len(), 2);
        assert_eq!(kg.inst_triples.len(), 1);
        assert_eq!(kg.onto_triples.len(), 1);
        assert_eq!(kg.cross_links.len(), 1);
        assert_eq!(kg.duplicates_dropped, 0);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let inst = write_file(dir.path(), "inst.tsv", "a\tR\tb\nbad\tline\n");
        let onto = write_file(dir.path(), "onto.tsv", "X\tisa\tY\n");
        let links = write_file(dir.path(), "links.tsv", "a\tX\n");
        let err = load_kg(&inst, &onto, &links).unwrap_err();
        match err {
            BoxKgError::MalformedLine { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn name_collision_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let inst = write_file(dir.path(), "inst.tsv", "a\tR\tb\n");
        let onto = write_file(dir.path(), "onto.tsv", "a\tisa\tY\n");
        let links = write_file(dir.path(), "links.tsv", "a\ta\n");
        assert!(matches!(
            load_kg(&inst, &onto, &links),
            Err(BoxKgError::NameCollision(_))
        ));
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let inst = write_file(dir.path(), "inst.tsv", "a\tR\tb\na\tR\tb\n");
        let onto = write_file(dir.path(), "onto.tsv", "X\tisa\tY\n");
        let links = write_file(dir.path(), "links.tsv", "a\tX\n");
        let kg = load_kg(&inst, &onto, &links).unwrap();
        assert_eq!(kg.inst_triples.len(), 1);
        assert_eq!(kg.duplicates_dropped, 1);
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let inst = write_file(dir.path(), "inst.tsv", "");
        let onto = write_file(dir.path(), "onto.tsv", "X\tisa\tY\n");
        let links = write_file(dir.path(), "links.tsv", "a\tX\n");
        assert!(matches!(
            load_kg(&inst, &onto, &links),
            Err(BoxKgError::EmptyFile(_))
        ));
    }

    #[test]
    fn load_is_idempotent_after_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kg = minimal_kg(dir.path());
        let out = dir.path().join("rt");
        write_kg(&kg, &out).unwrap();
        let kg2 = load_kg(
            &out.join("inst.tsv"),
            &out.join("onto.tsv"),
            &out.join("links.tsv"),
        )
        .unwrap();
        assert_eq!(kg, kg2);
    }

    fn toy_kg(n_inst: usize) -> TwoViewKG {
        let mut kg = TwoViewKG::default();
        for i in 0..(n_inst + 1) {
            kg.entities.intern(&format!("e{i}"));
        }
        kg.inst_relations.intern("R");
        for i in 0..12 {
            kg.concepts.intern(&format!("c{i}"));
        }
        kg.onto_relations.intern("isa");
        for i in 0..n_inst {
            kg.inst_triples.push((i as u32, 0, i as u32 + 1));
        }
        for i in 0..11 {
            kg.onto_triples.push((i as u32, 0, i as u32 + 1));
        }
        for i in 0..n_inst.max(3) {
            kg.cross_links.push((i as u32 % (n_inst as u32 + 1), (i % 2) as u32));
        }
        kg.cross_links.sort_unstable();
        kg.cross_links.dedup();
        kg
    }

    #[test]
    fn split_exact_division() {
        let kg = toy_kg(10);
        let s = split_kg(kg, (0.8, 0.1, 0.1), 7, SplitMode::Linking).unwrap();
        // linking mode: triples all in train, links split
        assert_eq!(s.inst_train.len(), 10);
        let n = s.kg.cross_links.len();
        let (a, b, c) = partition_sizes(n, (0.8, 0.1, 0.1));
        assert_eq!(s.link_train.len(), a);
        assert_eq!(s.link_valid.len(), b);
        assert_eq!(s.link_test.len(), c);
    }

    #[test]
    fn split_partition_sizes_match_floor_rule() {
        // Independent oracle: floor per partition, remainder to train.
        let oracle = |n: usize, r: (f64, f64, f64)| {
            let v = (r.1 * n as f64).floor() as usize;
            let t = (r.2 * n as f64).floor() as usize;
            (n - v - t, v, t)
        };
        for &n in &[10usize, 763, 100, 99, 7] {
            assert_eq!(partition_sizes(n, (0.8, 0.1, 0.1)), oracle(n, (0.8, 0.1, 0.1)));
        }
        assert_eq!(partition_sizes(763, (0.8, 0.1, 0.1)), (611, 76, 76));
    }

    #[test]
    fn split_is_deterministic_and_reconstructs_union() {
        let kg = toy_kg(20);
        let s1 = split_kg(kg.clone(), (0.8, 0.1, 0.1), 7, SplitMode::Kgc).unwrap();
        let s2 = split_kg(kg.clone(), (0.8, 0.1, 0.1), 7, SplitMode::Kgc).unwrap();
        assert_eq!(s1.inst_train, s2.inst_train);
        assert_eq!(s1.inst_valid, s2.inst_valid);
        assert_eq!(s1.inst_test, s2.inst_test);
        // disjoint and union == source
        let mut all: Vec<Triple> = s1
            .inst_train
            .iter()
            .chain(&s1.inst_valid)
            .chain(&s1.inst_test)
            .copied()
            .collect();
        assert_eq!(all.len(), kg.inst_triples.len());
        all.sort_unstable();
        let mut src = kg.inst_triples.clone();
        src.sort_unstable();
        assert_eq!(all, src);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let kg = toy_kg(10);
        assert!(split_kg(kg.clone(), (0.8, 0.1, 0.2), 7, SplitMode::Kgc).is_err());
        assert!(split_kg(kg, (1.0, -0.1, 0.1), 7, SplitMode::Kgc).is_err());
    }

    #[test]
    fn negatives_avoid_positives() {
        // entities {a,b,c}; positive (a,R,b)
        let positives: HashSet<Triple> = [(0, 0, 1)].into_iter().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let negs =
                sample_negative_triples((0, 0, 1), 1, &mut rng, 3, &positives, false).unwrap();
            assert!(!positives.contains(&negs[0].item));
            let (h, r, t) = negs[0].item;
            assert_eq!(r, 0);
            assert!(h == 0 || t == 1); // only one side corrupted
        }
    }

    #[test]
    fn negatives_pigeonhole_error() {
        // 2 entities, positive (0,R,1): corruptions are (1,R,1),(0,R,0) only.
        let positives: HashSet<Triple> = [(0, 0, 1)].into_iter().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let err = sample_negative_triples((0, 0, 1), 5, &mut rng, 2, &positives, true).unwrap_err();
        assert!(matches!(err, BoxKgError::SamplingExhausted { .. }));
    }

    #[test]
    fn negatives_deterministic_given_seed() {
        let positives: HashSet<Triple> = [(0, 0, 1)].into_iter().collect();
        let sample = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| {
                    sample_negative_triples((0, 0, 1), 3, &mut rng, 100, &positives, false)
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(sample(9), sample(9));
    }
}

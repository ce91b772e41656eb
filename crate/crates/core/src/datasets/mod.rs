//! Timelines of snapshots: triple-file ingestion, persistent split
//! assignment, sliding windows over timestamped logs and resampled copies
//! of a static graph.

mod io;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Dictionary, EntityId, RelationId, Snapshot, Split, Triple, TripleSet};
use crate::rng::KgRng;

pub use io::{read_snapshot_dir, write_snapshot_dir, SnapshotMeta, TimelineMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedTriple {
    pub triple: Triple,
    pub timestamp: i64,
}

/// Triples sorted by timestamp, ties in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TimedTripleLog {
    pub entries: Vec<TimedTriple>,
    pub dictionary: Dictionary,
    /// Repeated `(triple, timestamp)` lines that were dropped.
    pub duplicates: usize,
}

impl TimedTripleLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn triples(&self) -> TripleSet {
        self.entries.iter().map(|e| e.triple).collect()
    }
}

/// Reads `head<TAB>relation<TAB>tail[<TAB>timestamp]` lines. Lines without
/// a timestamp get their zero-based line index.
pub fn load_triples(path: &Path) -> Result<TimedTripleLog> {
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_triples(file, path)
}

pub fn parse_triples(reader: impl std::io::Read, path: &Path) -> Result<TimedTripleLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .comment(Some(b'#'))
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut dictionary = Dictionary::new();
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut duplicates = 0;
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(index + 1, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.len() != 3 && record.len() != 4 {
            return Err(parse_err(
                line,
                format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    record.len()
                ),
            ));
        }
        if record.iter().take(3).any(str::is_empty) {
            return Err(parse_err(line, "empty label".into()));
        }
        let timestamp = match record.get(3) {
            Some(ts) => ts
                .trim()
                .parse::<i64>()
                .map_err(|e| parse_err(line, format!("bad timestamp `{ts}`: {e}")))?,
            None => index as i64,
        };
        let triple = Triple {
            head: dictionary.intern_entity(&record[0]),
            relation: dictionary.intern_relation(&record[1]),
            tail: dictionary.intern_entity(&record[2]),
        };
        if !seen.insert((triple, timestamp)) {
            duplicates += 1;
            continue;
        }
        entries.push(TimedTriple { triple, timestamp });
    }
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate lines", path.display());
    }
    entries.sort_by_key(|e| e.timestamp);
    Ok(TimedTripleLog {
        entries,
        dictionary,
        duplicates,
    })
}

/// Persistent triple-to-split map. Unseen triples draw a split with the
/// configured proportions; seen ones always get their first split back.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    /// Train, valid and test weights.
    pub proportions: [f64; 3],
    assigned: HashMap<Triple, Split>,
}

/// Split proportions for generated timelines.
pub const GENERATED_PROPORTIONS: [f64; 3] = [0.9, 0.05, 0.05];
/// Split proportions of FB15K.
pub const FB15K_PROPORTIONS: [f64; 3] = [0.816, 0.084, 0.1];

impl SplitAssignment {
    pub fn new(proportions: [f64; 3]) -> Result<Self> {
        if proportions.iter().any(|p| !(*p >= 0.0)) || proportions.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!(
                "invalid split proportions {proportions:?}"
            )));
        }
        Ok(Self {
            proportions,
            assigned: HashMap::new(),
        })
    }

    /// Pre-assigns triples, e.g. from an existing partition.
    pub fn with_fixed(mut self, split: Split, triples: &TripleSet) -> Self {
        for t in triples {
            self.assigned.insert(*t, split);
        }
        self
    }

    pub fn get(&self, t: &Triple) -> Option<Split> {
        self.assigned.get(t).copied()
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn assign(&mut self, t: &Triple, rng: &mut KgRng) -> Split {
        if let Some(s) = self.assigned.get(t) {
            return *s;
        }
        let total: f64 = self.proportions.iter().sum();
        let u = rng.gen::<f64>() * total;
        let [p_train, p_valid, _] = self.proportions;
        let s = if u < p_train {
            Split::Train
        } else if u < p_train + p_valid {
            Split::Valid
        } else {
            Split::Test
        };
        self.assigned.insert(*t, s);
        s
    }

    /// Splits the triples, in the given order, into a snapshot whose
    /// elements are those the triples reference.
    pub fn snapshot<'a>(
        &mut self,
        time_step: usize,
        triples: impl IntoIterator<Item = &'a Triple>,
        rng: &mut KgRng,
    ) -> Snapshot {
        let [train, valid, test] = self.partition(triples, rng);
        Snapshot::from_splits(time_step, train, valid, test)
    }

    /// Train, valid and test parts of the triples, assigned in order.
    pub fn partition<'a>(
        &mut self,
        triples: impl IntoIterator<Item = &'a Triple>,
        rng: &mut KgRng,
    ) -> [TripleSet; 3] {
        let mut parts: [Vec<Triple>; 3] = Default::default();
        for t in triples {
            let i = match self.assign(t, rng) {
                Split::Train => 0,
                Split::Valid => 1,
                Split::Test => 2,
            };
            parts[i].push(*t);
        }
        parts.map(|p| p.into_iter().collect::<TripleSet>())
    }
}

/// Nearest integer, halves rounded down.
fn round_half_down(x: f64) -> usize {
    (x - 0.5).ceil().max(0.0) as usize
}

/// Window geometry of a sliding-window timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub window: usize,
    pub offsets: Vec<usize>,
}

impl WindowLayout {
    /// `round(w * n)` entries per window, the `i`th starting at
    /// `round(i * (n - window) / (k - 1))`; halves round down.
    pub fn new(n: usize, k: usize, w: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(
                "a sliding window timeline needs at least 2 snapshots".into(),
            ));
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Config(format!(
                "window fraction {w} is not in (0, 1)"
            )));
        }
        if n < k {
            return Err(Error::Config(format!(
                "{n} triples cannot fill {k} snapshots"
            )));
        }
        let window = round_half_down(w * n as f64);
        if window == 0 {
            return Err(Error::Config(format!("window {w} of {n} triples is empty")));
        }
        let span = n - window;
        let offsets = (0..k)
            .map(|i| (2 * i * span + (k - 1) - 1) / (2 * (k - 1)))
            .collect();
        Ok(Self { window, offsets })
    }

    /// Mean distance between consecutive window starts.
    pub fn stride(&self) -> f64 {
        let k = self.offsets.len();
        (self.offsets[k - 1] - self.offsets[0]) as f64 / (k - 1) as f64
    }
}

/// Snapshots over overlapping windows of a timestamp-ordered log.
pub fn sliding_window_snapshots(
    log: &TimedTripleLog,
    k: usize,
    w: f64,
    assignment: &mut SplitAssignment,
    rng: &mut KgRng,
) -> Result<(Vec<Snapshot>, WindowLayout)> {
    let layout = WindowLayout::new(log.len(), k, w)?;
    let snapshots = layout
        .offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let window = &log.entries[off..off + layout.window];
            assignment.snapshot(i, window.iter().map(|e| &e.triple), rng)
        })
        .collect();
    Ok((snapshots, layout))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub snapshots: usize,
    pub entity_keep: f64,
    pub relation_keep: f64,
    pub triple_keep: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            snapshots: 20,
            entity_keep: 0.995,
            relation_keep: 0.995,
            triple_keep: 0.95,
        }
    }
}

/// Nearest integer (halves away from zero), at least 1 when `n > 0`.
pub fn keep_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        0
    } else {
        ((n as f64 * fraction).round() as usize).clamp(1, n)
    }
}

/// Independent random subgraphs of a static graph: each snapshot samples
/// entities and relations, restricts the graph to them and keeps a random
/// share of the remaining triples. Sampled elements stay in the snapshot
/// even when no kept triple references them.
pub fn synthetic_snapshots(
    base: &TripleSet,
    cfg: &SyntheticConfig,
    assignment: &mut SplitAssignment,
    rng: &mut KgRng,
) -> Result<Vec<Snapshot>> {
    if base.is_empty() {
        return Err(Error::Config("base graph is empty".into()));
    }
    let mut entities: Vec<EntityId> = base.iter().flat_map(|t| [t.head, t.tail]).collect();
    entities.sort_unstable();
    entities.dedup();
    let mut relations: Vec<RelationId> = base.iter().map(|t| t.relation).collect();
    relations.sort_unstable();
    relations.dedup();
    let mut out = Vec::with_capacity(cfg.snapshots);
    for i in 0..cfg.snapshots {
        let ents: Vec<EntityId> = sample(
            rng,
            entities.len(),
            keep_count(entities.len(), cfg.entity_keep),
        )
        .into_iter()
        .map(|j| entities[j])
        .collect();
        let rels: Vec<RelationId> = sample(
            rng,
            relations.len(),
            keep_count(relations.len(), cfg.relation_keep),
        )
        .into_iter()
        .map(|j| relations[j])
        .collect();
        let mut ent_in = vec![false; entities.last().map_or(0, |e| e.index() + 1)];
        ents.iter().for_each(|e| ent_in[e.index()] = true);
        let mut rel_in = vec![false; relations.last().map_or(0, |r| r.index() + 1)];
        rels.iter().for_each(|r| rel_in[r.index()] = true);
        let induced: Vec<Triple> = base
            .iter()
            .filter(|t| {
                ent_in[t.head.index()] && ent_in[t.tail.index()] && rel_in[t.relation.index()]
            })
            .copied()
            .collect();
        let mut keep: Vec<usize> = sample(
            rng,
            induced.len(),
            keep_count(induced.len(), cfg.triple_keep),
        )
        .into_vec();
        keep.sort_unstable();
        let [train, valid, test] = assignment.partition(keep.iter().map(|&j| &induced[j]), rng);
        out.push(Snapshot::new(i, ents, rels, train, valid, test));
    }
    Ok(out)
}

/// Repeatedly drops triples whose entities or relation occur in fewer than
/// `min_degree` triples until nothing changes.
pub fn filter_min_degree(triples: &TripleSet, min_degree: usize) -> TripleSet {
    let mut current: Vec<Triple> = triples.iter().copied().collect();
    loop {
        let mut ent: HashMap<EntityId, usize> = HashMap::new();
        let mut rel: HashMap<RelationId, usize> = HashMap::new();
        for t in &current {
            *ent.entry(t.head).or_default() += 1;
            if t.tail != t.head {
                *ent.entry(t.tail).or_default() += 1;
            }
            *rel.entry(t.relation).or_default() += 1;
        }
        let before = current.len();
        current.retain(|t| {
            ent[&t.head] >= min_degree
                && ent[&t.tail] >= min_degree
                && rel[&t.relation] >= min_degree
        });
        if current.len() == before {
            return current.into_iter().collect();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub entities: usize,
    pub relations: usize,
    pub clusters: usize,
    pub triples: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            entities: 400,
            relations: 12,
            clusters: 50,
            triples: 5000,
        }
    }
}

/// Static graph with learnable structure: entities fall into a chain of
/// equal clusters and relation `r` links a head in cluster `c` to a
/// uniformly chosen tail in cluster `c + 1 + r mod (clusters - 1)`. Labels
/// are `e<i>` and `r<i>`.
pub fn planted_graph(cfg: &PlantedConfig, rng: &mut KgRng) -> Result<(TripleSet, Dictionary)> {
    if cfg.relations == 0 || cfg.clusters < 2 || cfg.clusters > cfg.entities {
        return Err(Error::Config(format!("degenerate planted graph {cfg:?}")));
    }
    let mut dict = Dictionary::new();
    for i in 0..cfg.entities {
        dict.intern_entity(&format!("e{i}"));
    }
    for i in 0..cfg.relations {
        dict.intern_relation(&format!("r{i}"));
    }
    let cluster_of = |e: usize| e % cfg.clusters;
    let shift = |r: usize| 1 + r % (cfg.clusters - 1);
    let members: Vec<Vec<usize>> = (0..cfg.clusters)
        .map(|c| (0..cfg.entities).filter(|e| cluster_of(*e) == c).collect())
        .collect();
    let capacity: usize = (0..cfg.relations)
        .map(|r| {
            (0..cfg.clusters - shift(r))
                .map(|c| members[c].len() * members[c + shift(r)].len())
                .sum::<usize>()
        })
        .sum();
    let wanted = cfg.triples.min(capacity);
    let mut set = std::collections::BTreeSet::new();
    let mut attempts = 0usize;
    while set.len() < wanted && attempts < 100 * wanted.max(1) {
        attempts += 1;
        let r = rng.gen_range(0..cfg.relations);
        let h = rng.gen_range(0..cfg.entities);
        let c = cluster_of(h) + shift(r);
        if c >= cfg.clusters {
            continue;
        }
        let pool = &members[c];
        let t = pool[rng.gen_range(0..pool.len())];
        set.insert(Triple::new(h as u32, r as u32, t as u32));
    }
    Ok((set.into_iter().collect(), dict))
}

/// Entity and relation counts per split, for reports.
pub fn snapshot_counts(s: &Snapshot) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("entities", s.vertices().len()),
        ("relations", s.relations().len()),
        ("train", s.train.len()),
        ("valid", s.valid.len()),
        ("test", s.test.len()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::validate_snapshot;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<TimedTripleLog> {
        parse_triples(text.as_bytes(), Path::new("mem.tsv"))
    }

    fn log_of(n: usize) -> TimedTripleLog {
        let text: String = (0..n)
            .map(|i| format!("e{i}\tr{}\te{}\n", i % 3, i + 1))
            .collect();
        parse(&text).unwrap()
    }

    #[test]
    fn loads_three_lines() {
        let log = parse("a\tr\tb\nb\tr\tc\nc\ts\ta\n").unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.dictionary.num_entities(), 3);
        assert_eq!(log.dictionary.num_relations(), 2);
        assert_eq!(log.entries[2].timestamp, 2);
    }

    #[test]
    fn sorts_by_timestamp_stably() {
        let log = parse("a\tr\tb\t5\nb\tr\tc\t1\nc\tr\ta\t5\nd\tr\ta\t1\n").unwrap();
        let heads: Vec<_> = log
            .entries
            .iter()
            .map(|e| log.dictionary.entity_label(e.triple.head).unwrap())
            .collect();
        assert_eq!(heads, ["b", "d", "a", "c"]);
    }

    #[test]
    fn short_line_reports_its_number() {
        match parse("a\tr\tb\nb\tr\nc\tr\ta\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("a\tr\tb\tsoon\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_lines_are_dropped() {
        let log = parse("a\tr\tb\t3\na\tr\tb\t3\na\tr\tb\t4\n").unwrap();
        assert_eq!((log.len(), log.duplicates), (2, 1));
    }

    #[test]
    fn assignment_persists() {
        let mut a = SplitAssignment::new(GENERATED_PROPORTIONS).unwrap();
        let mut rng = rng_from_seed(0);
        let t = Triple::new(1, 2, 3);
        let first = a.assign(&t, &mut rng);
        for _ in 0..10 {
            assert_eq!(a.assign(&t, &mut rng), first);
        }
        let mut fixed = SplitAssignment::new(GENERATED_PROPORTIONS)
            .unwrap()
            .with_fixed(Split::Test, &[t].into_iter().collect());
        assert_eq!(fixed.assign(&t, &mut rng), Split::Test);
    }

    #[test]
    fn assignment_proportions() {
        let mut a = SplitAssignment::new(GENERATED_PROPORTIONS).unwrap();
        let mut rng = rng_from_seed(42);
        let mut counts = [0usize; 3];
        let n = 100_000u32;
        for i in 0..n {
            match a.assign(&Triple::new(i, 0, i + 1), &mut rng) {
                Split::Train => counts[0] += 1,
                Split::Valid => counts[1] += 1,
                Split::Test => counts[2] += 1,
            }
        }
        for (c, p) in counts.iter().zip(GENERATED_PROPORTIONS) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn window_examples() {
        let l = WindowLayout::new(40, 3, 0.5).unwrap();
        assert_eq!((l.window, l.offsets.clone()), (20, vec![0, 10, 20]));
        for n in 2..200 {
            let l = WindowLayout::new(n, 2, 0.5).unwrap();
            assert!(l.offsets[1] >= l.window, "n = {n}");
            assert_eq!(l.offsets[1] + l.window, n);
        }
        for n in 20..400 {
            let l = WindowLayout::new(n, 20, 0.5).unwrap();
            assert!(l.offsets[19] >= l.window);
            assert_eq!(l.offsets[0], 0);
            assert_eq!(l.offsets[19] + l.window, n);
        }
        assert!(WindowLayout::new(5, 1, 0.5).is_err());
        assert!(WindowLayout::new(5, 2, 1.0).is_err());
        assert!(WindowLayout::new(3, 4, 0.5).is_err());
    }

    #[test]
    fn offsets_match_rounding_oracle() {
        // Exact rational rounding with halves down, written independently.
        for n in 2..120usize {
            for k in 2..n.min(12) {
                let l = WindowLayout::new(n, k, 0.5).unwrap();
                for (i, off) in l.offsets.iter().enumerate() {
                    let num = i * (n - l.window);
                    let den = k - 1;
                    let floor = num / den;
                    let rem = num % den;
                    let want = if 2 * rem > den { floor + 1 } else { floor };
                    assert_eq!(*off, want);
                }
            }
        }
    }

    #[test]
    fn sliding_windows_share_overlap() {
        let log = log_of(100);
        let mut a = SplitAssignment::new(GENERATED_PROPORTIONS).unwrap();
        let (snaps, layout) =
            sliding_window_snapshots(&log, 5, 0.5, &mut a, &mut rng_from_seed(1)).unwrap();
        assert_eq!(snaps.len(), 5);
        for (i, s) in snaps.iter().enumerate() {
            assert_eq!(s.num_triples(), 50);
            assert!(validate_snapshot(s).is_empty());
            assert_eq!(s.time_step, i);
        }
        let all = |s: &Snapshot| s.train.union(&s.valid).union(&s.test);
        for i in 0..4 {
            let shared = all(&snaps[i])
                .as_slice()
                .iter()
                .filter(|t| all(&snaps[i + 1]).contains(t))
                .count();
            assert_eq!(
                shared,
                layout.window - (layout.offsets[i + 1] - layout.offsets[i])
            );
        }
    }

    #[test]
    fn synthetic_counts() {
        let base: TripleSet = (0..300u32)
            .map(|i| Triple::new(i % 200, i % 200 % 7, (i * 7 + 3) % 200))
            .collect();
        let mut ents: Vec<_> = base.iter().flat_map(|t| [t.head, t.tail]).collect();
        ents.sort();
        ents.dedup();
        let mut a = SplitAssignment::new(FB15K_PROPORTIONS).unwrap();
        let cfg = SyntheticConfig {
            snapshots: 4,
            ..Default::default()
        };
        let snaps = synthetic_snapshots(&base, &cfg, &mut a, &mut rng_from_seed(3)).unwrap();
        assert_eq!(snaps.len(), 4);
        for s in &snaps {
            assert!(validate_snapshot(s).is_empty());
            assert_eq!(s.vertices().len(), keep_count(ents.len(), 0.995));
            assert_eq!(s.relations().len(), 7);
            assert!(s.num_triples() as f64 >= 0.9 * 0.95 * base.len() as f64 - 1.0);
        }
        assert_eq!(keep_count(200, 0.995), 199);
        assert_eq!(keep_count(1, 0.5), 1);
    }

    #[test]
    fn synthetic_single_triple() {
        let base: TripleSet = [Triple::new(0, 0, 1)].into_iter().collect();
        let mut a = SplitAssignment::new(FB15K_PROPORTIONS).unwrap();
        let cfg = SyntheticConfig {
            snapshots: 3,
            ..Default::default()
        };
        for s in synthetic_snapshots(&base, &cfg, &mut a, &mut rng_from_seed(3)).unwrap() {
            assert_eq!(s.num_triples(), 1);
        }
    }

    #[test]
    fn min_degree_reaches_fixpoint() {
        // A triangle plus a pendant edge from a degree-1 entity.
        let t: TripleSet = [(0, 0, 1), (1, 0, 2), (2, 0, 0), (3, 0, 0)]
            .iter()
            .map(|&(h, r, t)| Triple::new(h, r, t))
            .collect();
        let f = filter_min_degree(&t, 2);
        assert_eq!(f.len(), 3);
        assert!(!f.contains(&Triple::new(3, 0, 0)));
        assert!(filter_min_degree(&t, 3).is_empty());
    }

    #[test]
    fn planted_graph_has_requested_size() {
        let cfg = PlantedConfig::default();
        let (g, dict) = planted_graph(&cfg, &mut rng_from_seed(0)).unwrap();
        assert_eq!(g.len(), cfg.triples);
        assert_eq!(dict.num_entities(), cfg.entities);
        let c = cfg.clusters;
        for t in &g {
            let (ch, ct) = (t.head.index() % c, t.tail.index() % c);
            assert_eq!(ct, ch + 1 + t.relation.index() % (c - 1));
        }
    }

    proptest! {
        #[test]
        fn timelines_keep_splits_disjoint_and_stable(seed in 0u64..1000, k in 2usize..6) {
            let log = log_of(60);
            let mut a = SplitAssignment::new(GENERATED_PROPORTIONS).unwrap();
            let (snaps, _) = sliding_window_snapshots(&log, k, 0.5, &mut a, &mut rng_from_seed(seed)).unwrap();
            let mut seen: HashMap<Triple, Split> = HashMap::new();
            for s in &snaps {
                prop_assert!(validate_snapshot(s).is_empty());
                for split in Split::ALL {
                    for t in s.split(split) {
                        prop_assert_eq!(*seen.entry(*t).or_insert(split), split);
                    }
                }
            }
        }

        #[test]
        fn synthetic_triples_stay_inside_samples(seed in 0u64..1000) {
            let base: TripleSet = (0..120u32).map(|i| Triple::new(i % 40, i % 5, (i * 3 + 1) % 40)).collect();
            let mut a = SplitAssignment::new(FB15K_PROPORTIONS).unwrap();
            let cfg = SyntheticConfig { snapshots: 2, entity_keep: 0.9, relation_keep: 0.8, triple_keep: 0.95 };
            for s in synthetic_snapshots(&base, &cfg, &mut a, &mut rng_from_seed(seed)).unwrap() {
                prop_assert_eq!(s.vertices().len(), 36);
                prop_assert_eq!(s.relations().len(), 4);
                prop_assert!(validate_snapshot(&s).is_empty());
            }
        }
    }
}

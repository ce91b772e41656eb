//! Knowledge graph primitives: identifiers, triples, snapshots and the
//! change sets between consecutive snapshots.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A directed labeled edge `(head, relation, tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }

    pub fn with_head(self, head: EntityId) -> Self {
        Self { head, ..self }
    }

    pub fn with_tail(self, tail: EntityId) -> Self {
        Self { tail, ..self }
    }

    pub fn touches_entity(&self, e: EntityId) -> bool {
        self.head == e || self.tail == e
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head.0, self.relation.0, self.tail.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Interner {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), i);
        i
    }

    fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i as u32).is_some() {
                return Err(Error::Dictionary(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels, index })
    }
}

/// Bidirectional label/index mapping shared by every snapshot of a timeline.
///
/// Indices are dense and stable: a label keeps its index even after the
/// element disappears from later snapshots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    entities: Interner,
    relations: Interner,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    entities: std::collections::BTreeMap<String, u32>,
    relations: std::collections::BTreeMap<String, u32>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_entity(&mut self, label: &str) -> EntityId {
        EntityId(self.entities.intern(label))
    }

    pub fn intern_relation(&mut self, label: &str) -> RelationId {
        RelationId(self.relations.intern(label))
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.index.get(label).copied().map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.index.get(label).copied().map(RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> Option<&str> {
        self.entities.labels.get(id.index()).map(String::as_str)
    }

    pub fn relation_label(&self, id: RelationId) -> Option<&str> {
        self.relations.labels.get(id.index()).map(String::as_str)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.labels.len()
    }

    /// JSON object mapping each label to its row index.
    pub fn to_json(&self) -> Result<String> {
        let file = DictionaryFile {
            entities: self
                .entities
                .index
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            relations: self
                .relations
                .index
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DictionaryFile = serde_json::from_str(text)?;
        Ok(Self {
            entities: Interner::from_labels(dense_labels(file.entities, "entity")?)?,
            relations: Interner::from_labels(dense_labels(file.relations, "relation")?)?,
        })
    }
}

fn dense_labels(map: std::collections::BTreeMap<String, u32>, kind: &str) -> Result<Vec<String>> {
    let mut labels = vec![None; map.len()];
    for (label, idx) in map {
        let slot = labels
            .get_mut(idx as usize)
            .ok_or_else(|| Error::Dictionary(format!("{kind} index {idx} is not dense")))?;
        if slot.is_some() {
            return Err(Error::Dictionary(format!("{kind} index {idx} used twice")));
        }
        *slot = Some(label);
    }
    Ok(labels.into_iter().map(|l| l.expect("dense")).collect())
}

/// Immutable set of triples with head/tail lookup indexes.
#[derive(Clone, Debug, Default)]
pub struct TripleSet {
    triples: Vec<Triple>,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
}

impl PartialEq for TripleSet {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for TripleSet {}

impl FromIterator<Triple> for TripleSet {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut triples: Vec<Triple> = iter.into_iter().collect();
        triples.sort_unstable();
        triples.dedup();
        let mut tails: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut heads: HashMap<_, Vec<EntityId>> = HashMap::new();
        for t in &triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        // Tails arrive sorted from the triple order; heads need sorting.
        for v in heads.values_mut() {
            v.sort_unstable();
        }
        Self {
            triples,
            tails,
            heads,
        }
    }
}

impl<'a> IntoIterator for &'a TripleSet {
    type Item = &'a Triple;
    type IntoIter = std::slice::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

impl TripleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triple> {
        self.triples.iter()
    }

    /// Triples in ascending order.
    pub fn as_slice(&self) -> &[Triple] {
        &self.triples
    }

    /// Sorted tails `t` with `(head, relation, t)` in the set.
    pub fn tails_of(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Sorted heads `h` with `(h, relation, tail)` in the set.
    pub fn heads_of(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn difference(&self, other: &TripleSet) -> TripleSet {
        self.triples
            .iter()
            .filter(|t| !other.contains(t))
            .copied()
            .collect()
    }

    pub fn union(&self, other: &TripleSet) -> TripleSet {
        self.triples
            .iter()
            .chain(other.triples.iter())
            .copied()
            .collect()
    }
}

/// One time step of an evolving knowledge graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub time_step: usize,
    vertices: Vec<EntityId>,
    relations: Vec<RelationId>,
    pub train: TripleSet,
    pub valid: TripleSet,
    pub test: TripleSet,
}

impl Snapshot {
    pub fn new(
        time_step: usize,
        vertices: impl IntoIterator<Item = EntityId>,
        relations: impl IntoIterator<Item = RelationId>,
        train: TripleSet,
        valid: TripleSet,
        test: TripleSet,
    ) -> Self {
        let vertices: BTreeSet<_> = vertices.into_iter().collect();
        let relations: BTreeSet<_> = relations.into_iter().collect();
        Self {
            time_step,
            vertices: vertices.into_iter().collect(),
            relations: relations.into_iter().collect(),
            train,
            valid,
            test,
        }
    }

    /// Snapshot whose vertex and relation sets are those referenced by the splits.
    pub fn from_splits(
        time_step: usize,
        train: TripleSet,
        valid: TripleSet,
        test: TripleSet,
    ) -> Self {
        let all = train.iter().chain(valid.iter()).chain(test.iter());
        let vertices: Vec<_> = all.clone().flat_map(|t| [t.head, t.tail]).collect();
        let relations: Vec<_> = all.map(|t| t.relation).collect();
        Self::new(time_step, vertices, relations, train, valid, test)
    }

    /// Sorted entity ids.
    pub fn vertices(&self) -> &[EntityId] {
        &self.vertices
    }

    /// Sorted relation ids.
    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        self.vertices.binary_search(&e).is_ok()
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        self.relations.binary_search(&r).is_ok()
    }

    pub fn split(&self, split: Split) -> &TripleSet {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Whether the triple is a known fact in any split.
    pub fn is_known(&self, t: &Triple) -> bool {
        self.train.contains(t) || self.valid.contains(t) || self.test.contains(t)
    }

    pub fn num_triples(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    UnknownEntity {
        triple: Triple,
        split: Split,
        entity: EntityId,
    },
    UnknownRelation {
        triple: Triple,
        split: Split,
    },
    SplitOverlap {
        triple: Triple,
        first: Split,
        second: Split,
    },
}

/// All structural problems of a snapshot; empty when it is well formed.
pub fn validate_snapshot(s: &Snapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    for split in Split::ALL {
        for t in s.split(split) {
            for e in [t.head, t.tail] {
                if !s.has_entity(e) {
                    out.push(Violation::UnknownEntity {
                        triple: *t,
                        split,
                        entity: e,
                    });
                }
            }
            if !s.has_relation(t.relation) {
                out.push(Violation::UnknownRelation { triple: *t, split });
            }
        }
    }
    for (i, a) in Split::ALL.iter().enumerate() {
        for b in &Split::ALL[i + 1..] {
            for t in s.split(*a) {
                if s.split(*b).contains(t) {
                    out.push(Violation::SplitOverlap {
                        triple: *t,
                        first: *a,
                        second: *b,
                    });
                }
            }
        }
    }
    out
}

/// Additions and deletions between two consecutive snapshots.
///
/// Edge differences are taken per split, so applying a change set to the
/// older snapshot reproduces the newer one exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub added_vertices: Vec<EntityId>,
    pub deleted_vertices: Vec<EntityId>,
    pub added_relations: Vec<RelationId>,
    pub deleted_relations: Vec<RelationId>,
    pub added_train: TripleSet,
    pub added_valid: TripleSet,
    pub added_test: TripleSet,
    pub deleted_train: TripleSet,
    pub deleted_valid: TripleSet,
    pub deleted_test: TripleSet,
}

impl ChangeSet {
    pub fn added(&self, split: Split) -> &TripleSet {
        match split {
            Split::Train => &self.added_train,
            Split::Valid => &self.added_valid,
            Split::Test => &self.added_test,
        }
    }

    pub fn deleted(&self, split: Split) -> &TripleSet {
        match split {
            Split::Train => &self.deleted_train,
            Split::Valid => &self.deleted_valid,
            Split::Test => &self.deleted_test,
        }
    }

    pub fn is_added_entity(&self, e: EntityId) -> bool {
        self.added_vertices.binary_search(&e).is_ok()
    }

    pub fn is_added_relation(&self, r: RelationId) -> bool {
        self.added_relations.binary_search(&r).is_ok()
    }

    pub fn is_deleted_entity(&self, e: EntityId) -> bool {
        self.deleted_vertices.binary_search(&e).is_ok()
    }

    pub fn is_deleted_relation(&self, r: RelationId) -> bool {
        self.deleted_relations.binary_search(&r).is_ok()
    }

    /// Whether the triple references an element that is new in this change.
    pub fn touches_added(&self, t: &Triple) -> bool {
        self.is_added_entity(t.head)
            || self.is_added_entity(t.tail)
            || self.is_added_relation(t.relation)
    }

    /// Whether the triple references an element removed by this change.
    pub fn touches_deleted(&self, t: &Triple) -> bool {
        self.is_deleted_entity(t.head)
            || self.is_deleted_entity(t.tail)
            || self.is_deleted_relation(t.relation)
    }
}

fn sorted_difference<T: Ord + Copy>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter()
        .filter(|x| b.binary_search(x).is_err())
        .copied()
        .collect()
}

/// Change set turning `prev` into `next`.
pub fn diff_snapshots(prev: &Snapshot, next: &Snapshot) -> Result<ChangeSet> {
    for s in [prev, next] {
        if let Some(v) = validate_snapshot(s).into_iter().next() {
            return Err(Error::Contract(format!(
                "snapshot {} is malformed: {v:?}",
                s.time_step
            )));
        }
    }
    Ok(ChangeSet {
        added_vertices: sorted_difference(&next.vertices, &prev.vertices),
        deleted_vertices: sorted_difference(&prev.vertices, &next.vertices),
        added_relations: sorted_difference(&next.relations, &prev.relations),
        deleted_relations: sorted_difference(&prev.relations, &next.relations),
        added_train: next.train.difference(&prev.train),
        added_valid: next.valid.difference(&prev.valid),
        added_test: next.test.difference(&prev.test),
        deleted_train: prev.train.difference(&next.train),
        deleted_valid: prev.valid.difference(&next.valid),
        deleted_test: prev.test.difference(&next.test),
    })
}

/// Applies a change set to a snapshot, advancing its time step by one.
pub fn apply_changes(prev: &Snapshot, cs: &ChangeSet) -> Snapshot {
    let apply = |base: &TripleSet, added: &TripleSet, deleted: &TripleSet| -> TripleSet {
        base.iter()
            .filter(|t| !deleted.contains(t))
            .chain(added.iter())
            .copied()
            .collect()
    };
    let vertices = prev
        .vertices
        .iter()
        .filter(|e| !cs.is_deleted_entity(**e))
        .chain(cs.added_vertices.iter())
        .copied();
    let relations = prev
        .relations
        .iter()
        .filter(|r| !cs.is_deleted_relation(**r))
        .chain(cs.added_relations.iter())
        .copied();
    Snapshot::new(
        prev.time_step + 1,
        vertices,
        relations,
        apply(&prev.train, &cs.added_train, &cs.deleted_train),
        apply(&prev.valid, &cs.added_valid, &cs.deleted_valid),
        apply(&prev.test, &cs.added_test, &cs.deleted_test),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ts: &[(u32, u32, u32)]) -> TripleSet {
        ts.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect()
    }

    fn snap(step: usize, train: &[(u32, u32, u32)]) -> Snapshot {
        Snapshot::from_splits(step, set(train), TripleSet::new(), TripleSet::new())
    }

    #[test]
    fn new_vertex_and_edge_show_up_in_change_set() {
        let a = snap(0, &[(0, 0, 1)]);
        let b = snap(1, &[(0, 0, 1), (1, 0, 2)]);
        let cs = diff_snapshots(&a, &b).unwrap();
        assert_eq!(cs.added_vertices, vec![EntityId(2)]);
        assert_eq!(cs.added_train.as_slice(), &[Triple::new(1, 0, 2)]);
        assert!(cs.deleted_train.is_empty());
        assert!(cs.deleted_vertices.is_empty());
    }

    #[test]
    fn removed_relation_is_deleted_with_its_edges() {
        let a = snap(0, &[(0, 0, 1), (0, 1, 1)]);
        let b = snap(1, &[(0, 0, 1)]);
        let cs = diff_snapshots(&a, &b).unwrap();
        assert_eq!(cs.deleted_relations, vec![RelationId(1)]);
        assert_eq!(cs.deleted_train.as_slice(), &[Triple::new(0, 1, 1)]);
    }

    #[test]
    fn identical_snapshots_give_empty_change_set() {
        let a = snap(0, &[(0, 0, 1), (1, 0, 2)]);
        let cs = diff_snapshots(&a, &a).unwrap();
        assert_eq!(cs, ChangeSet::default());
    }

    #[test]
    fn apply_reverses_diff() {
        let a = Snapshot::from_splits(
            0,
            set(&[(0, 0, 1), (2, 1, 3)]),
            set(&[(1, 0, 2)]),
            set(&[(3, 1, 0)]),
        );
        let b = Snapshot::from_splits(
            1,
            set(&[(0, 0, 1), (4, 0, 1)]),
            set(&[(1, 0, 2), (0, 2, 4)]),
            set(&[]),
        );
        let cs = diff_snapshots(&a, &b).unwrap();
        assert_eq!(apply_changes(&a, &cs), b);
    }

    #[test]
    fn validate_reports_dangling_and_overlapping_triples() {
        let s = Snapshot::new(
            0,
            [EntityId(0), EntityId(1)],
            [RelationId(0)],
            set(&[(0, 0, 1), (0, 0, 5)]),
            set(&[(0, 0, 1)]),
            set(&[(1, 3, 0)]),
        );
        let v = validate_snapshot(&s);
        assert!(v.contains(&Violation::UnknownEntity {
            triple: Triple::new(0, 0, 5),
            split: Split::Train,
            entity: EntityId(5)
        }));
        assert!(v.contains(&Violation::UnknownRelation {
            triple: Triple::new(1, 3, 0),
            split: Split::Test
        }));
        assert!(v.contains(&Violation::SplitOverlap {
            triple: Triple::new(0, 0, 1),
            first: Split::Train,
            second: Split::Valid
        }));
        assert!(diff_snapshots(&s, &s).is_err());
    }

    #[test]
    fn triple_set_indexes() {
        let s = set(&[(0, 0, 2), (0, 0, 1), (3, 0, 1), (0, 1, 1)]);
        assert_eq!(
            s.tails_of(EntityId(0), RelationId(0)),
            &[EntityId(1), EntityId(2)]
        );
        assert_eq!(
            s.heads_of(RelationId(0), EntityId(1)),
            &[EntityId(0), EntityId(3)]
        );
        assert!(s.contains(&Triple::new(3, 0, 1)));
        assert!(!s.contains(&Triple::new(1, 0, 3)));
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn dictionary_json_round_trip() {
        let mut d = Dictionary::new();
        d.intern_entity("b");
        d.intern_entity("a");
        d.intern_relation("likes");
        assert_eq!(d.intern_entity("b"), EntityId(0));
        let back = Dictionary::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.entity("a"), Some(EntityId(1)));
        assert_eq!(back.relation_label(RelationId(0)), Some("likes"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_triples() -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
            proptest::collection::vec((0u32..8, 0u32..3, 0u32..8), 0..30)
        }

        fn arb_snapshot(step: usize) -> impl Strategy<Value = Snapshot> {
            (arb_triples(), proptest::collection::vec(0u8..3, 30)).prop_map(move |(ts, splits)| {
                let mut parts = [Vec::new(), Vec::new(), Vec::new()];
                let mut seen = BTreeSet::new();
                for (i, (h, r, t)) in ts.into_iter().enumerate() {
                    if seen.insert((h, r, t)) {
                        parts[splits[i] as usize].push(Triple::new(h, r, t));
                    }
                }
                let [a, b, c] = parts;
                Snapshot::from_splits(
                    step,
                    a.into_iter().collect(),
                    b.into_iter().collect(),
                    c.into_iter().collect(),
                )
            })
        }

        proptest! {
            #[test]
            fn diff_then_apply_round_trips(a in arb_snapshot(0), b in arb_snapshot(1)) {
                let cs = diff_snapshots(&a, &b).unwrap();
                prop_assert_eq!(apply_changes(&a, &cs), b);
                for split in Split::ALL {
                    for t in cs.added(split) {
                        prop_assert!(!cs.deleted(split).contains(t));
                    }
                }
                for e in &cs.added_vertices {
                    prop_assert!(cs.deleted_vertices.binary_search(e).is_err());
                }
            }
        }
    }
}

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, RelationId, Triple, TripleSet};

/// A newly added entity or relation. Relations sort before entities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Relation(RelationId),
    Entity(EntityId),
}

/// One dequeued element with the evidence it had at that moment.
///
/// For relations all informative triples are in `incoming`; `outgoing` is
/// empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStep {
    pub element: Element,
    pub incoming: Vec<Triple>,
    pub outgoing: Vec<Triple>,
    /// Triples still uninformative when the element was dequeued.
    pub uninformative: usize,
    pub priority: f64,
}

impl OrderStep {
    pub fn evidence_len(&self) -> usize {
        self.incoming.len() + self.outgoing.len()
    }
}

#[derive(Default)]
struct Sets {
    incoming: BTreeSet<Triple>,
    outgoing: BTreeSet<Triple>,
    uninformative: BTreeSet<Triple>,
    version: u64,
}

impl Sets {
    fn priority(&self, eps: f64) -> f64 {
        (self.incoming.len() + self.outgoing.len()) as f64 / (self.uninformative.len() as f64 + eps)
    }
}

/// Heap entry: highest priority first, then relations, then ascending id.
struct Entry {
    priority: f64,
    element: Element,
    version: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.element.cmp(&self.element))
            .then_with(|| self.version.cmp(&other.version))
    }
}

/// Order in which new elements are initialized.
///
/// Each element's informative triples involve no other uninitialized
/// element; its uninformative ones do. Elements are taken by highest ratio
/// of informative to uninformative triples, and once an element is
/// initialized the triples it was blocking become informative for the
/// remaining ones. Entity evidence is split into incoming (the entity is
/// the tail) and outgoing (it is the head) triples.
pub fn init_order(
    train: &TripleSet,
    added_vertices: &[EntityId],
    added_relations: &[RelationId],
    eps: f64,
) -> Vec<OrderStep> {
    let new_e: BTreeSet<EntityId> = added_vertices.iter().copied().collect();
    let new_r: BTreeSet<RelationId> = added_relations.iter().copied().collect();
    let mut sets: HashMap<Element, Sets> = HashMap::new();
    let mut by_relation: HashMap<RelationId, Vec<Triple>> = HashMap::new();
    let mut by_entity: HashMap<EntityId, Vec<Triple>> = HashMap::new();

    for &r in &new_r {
        sets.insert(Element::Relation(r), Sets::default());
    }
    for &v in &new_e {
        sets.insert(Element::Entity(v), Sets::default());
    }
    for t in train {
        let head_new = new_e.contains(&t.head);
        let tail_new = new_e.contains(&t.tail);
        let rel_new = new_r.contains(&t.relation);
        if !(head_new || tail_new || rel_new) {
            continue;
        }
        if rel_new {
            by_relation.entry(t.relation).or_default().push(*t);
            let s = sets
                .get_mut(&Element::Relation(t.relation))
                .expect("queued");
            if head_new || tail_new {
                s.uninformative.insert(*t);
            } else {
                s.incoming.insert(*t);
            }
        }
        if head_new {
            by_entity.entry(t.head).or_default().push(*t);
            let s = sets.get_mut(&Element::Entity(t.head)).expect("queued");
            if !rel_new && !tail_new {
                s.outgoing.insert(*t);
            } else {
                s.uninformative.insert(*t);
            }
        }
        if tail_new && t.tail != t.head {
            by_entity.entry(t.tail).or_default().push(*t);
            let s = sets.get_mut(&Element::Entity(t.tail)).expect("queued");
            if !rel_new && !head_new {
                s.incoming.insert(*t);
            } else {
                s.uninformative.insert(*t);
            }
        }
    }

    let mut heap: BinaryHeap<Entry> = sets
        .iter()
        .map(|(e, s)| Entry {
            priority: s.priority(eps),
            element: *e,
            version: 0,
        })
        .collect();
    let mut out = Vec::with_capacity(sets.len());
    let empty = Vec::new();

    while let Some(entry) = heap.pop() {
        let Some(s) = sets.get(&entry.element) else {
            continue;
        };
        if s.version != entry.version {
            continue;
        }
        let x = entry.element;
        let s = sets.remove(&x).expect("present");
        out.push(OrderStep {
            element: x,
            incoming: s.incoming.into_iter().collect(),
            outgoing: s.outgoing.into_iter().collect(),
            uninformative: s.uninformative.len(),
            priority: entry.priority,
        });
        // `sets` now holds exactly the elements still queued.
        let queued_e =
            |e: EntityId, sets: &HashMap<Element, Sets>| sets.contains_key(&Element::Entity(e));
        let queued_r =
            |r: RelationId, sets: &HashMap<Element, Sets>| sets.contains_key(&Element::Relation(r));
        let mut moves: Vec<(Element, Triple, bool)> = Vec::new();
        match x {
            Element::Relation(rx) => {
                for t in by_relation.get(&rx).unwrap_or(&empty) {
                    if queued_e(t.tail, &sets) && !queued_e(t.head, &sets) {
                        moves.push((Element::Entity(t.tail), *t, true));
                    }
                    if queued_e(t.head, &sets) && !queued_e(t.tail, &sets) {
                        moves.push((Element::Entity(t.head), *t, false));
                    }
                }
            }
            Element::Entity(ex) => {
                for t in by_entity.get(&ex).unwrap_or(&empty) {
                    let rel_queued = queued_r(t.relation, &sets);
                    if t.head == ex && !rel_queued && queued_e(t.tail, &sets) {
                        moves.push((Element::Entity(t.tail), *t, true));
                    }
                    if t.tail == ex && !rel_queued && queued_e(t.head, &sets) {
                        moves.push((Element::Entity(t.head), *t, false));
                    }
                    if rel_queued && !queued_e(t.head, &sets) && !queued_e(t.tail, &sets) {
                        moves.push((Element::Relation(t.relation), *t, true));
                    }
                }
            }
        }
        let mut touched = BTreeSet::new();
        for (el, t, incoming) in moves {
            let s = sets.get_mut(&el).expect("queued");
            s.uninformative.remove(&t);
            if incoming {
                s.incoming.insert(t);
            } else {
                s.outgoing.insert(t);
            }
            touched.insert(el);
        }
        for el in touched {
            let s = sets.get_mut(&el).expect("queued");
            s.version += 1;
            heap.push(Entry {
                priority: s.priority(eps),
                element: el,
                version: s.version,
            });
        }
    }
    out
}

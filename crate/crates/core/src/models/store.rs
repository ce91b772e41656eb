use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelSpec, Norm};
use crate::error::{Error, Result};
use crate::kg::{Dictionary, EntityId, RelationId};
use crate::rng::{derive_rng, streams, KgRng};

/// Shape of the parameter blocks of one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: ModelKind,
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub analogy_scalar_dims: usize,
    pub norm: Norm,
}

impl Layout {
    /// Parameters per entity block.
    pub fn entity_width(&self) -> usize {
        match self.kind {
            ModelKind::TransD => 2 * self.entity_dim,
            _ => self.entity_dim,
        }
    }

    /// Parameters per relation block.
    pub fn relation_width(&self) -> usize {
        match self.kind {
            ModelKind::TransH => 2 * self.entity_dim,
            ModelKind::TransD => 2 * self.relation_dim,
            ModelKind::Rescal => self.entity_dim * self.entity_dim,
            _ => self.entity_dim,
        }
    }

    pub fn width(&self, key: ParamKey) -> usize {
        match key {
            ParamKey::Entity(_) => self.entity_width(),
            ParamKey::Relation(_) => self.relation_width(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamKey {
    Entity(EntityId),
    Relation(RelationId),
}

/// Dense row storage for entity and relation parameter blocks, indexed by
/// dictionary id. Ids without a block are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    layout: Layout,
    entities: Vec<f64>,
    entity_present: Vec<bool>,
    relations: Vec<f64>,
    relation_present: Vec<bool>,
}

impl EmbeddingStore {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            entities: Vec::new(),
            entity_present: Vec::new(),
            relations: Vec::new(),
            relation_present: Vec::new(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn entity_slots(&self) -> usize {
        self.entity_present.len()
    }

    pub fn relation_slots(&self) -> usize {
        self.relation_present.len()
    }

    /// Grows the id space; existing blocks are untouched.
    pub fn reserve_ids(&mut self, entities: usize, relations: usize) {
        if entities > self.entity_present.len() {
            self.entity_present.resize(entities, false);
            self.entities
                .resize(entities * self.layout.entity_width(), 0.0);
        }
        if relations > self.relation_present.len() {
            self.relation_present.resize(relations, false);
            self.relations
                .resize(relations * self.layout.relation_width(), 0.0);
        }
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        self.entity_present.get(e.index()).copied().unwrap_or(false)
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        self.relation_present
            .get(r.index())
            .copied()
            .unwrap_or(false)
    }

    pub fn has(&self, key: ParamKey) -> bool {
        match key {
            ParamKey::Entity(e) => self.has_entity(e),
            ParamKey::Relation(r) => self.has_relation(r),
        }
    }

    pub fn entity(&self, e: EntityId) -> Option<&[f64]> {
        let w = self.layout.entity_width();
        self.has_entity(e)
            .then(|| &self.entities[e.index() * w..(e.index() + 1) * w])
    }

    pub fn relation(&self, r: RelationId) -> Option<&[f64]> {
        let w = self.layout.relation_width();
        self.has_relation(r)
            .then(|| &self.relations[r.index() * w..(r.index() + 1) * w])
    }

    pub fn block(&self, key: ParamKey) -> Option<&[f64]> {
        match key {
            ParamKey::Entity(e) => self.entity(e),
            ParamKey::Relation(r) => self.relation(r),
        }
    }

    pub fn block_mut(&mut self, key: ParamKey) -> Option<&mut [f64]> {
        if !self.has(key) {
            return None;
        }
        Some(match key {
            ParamKey::Entity(e) => {
                let w = self.layout.entity_width();
                &mut self.entities[e.index() * w..(e.index() + 1) * w]
            }
            ParamKey::Relation(r) => {
                let w = self.layout.relation_width();
                &mut self.relations[r.index() * w..(r.index() + 1) * w]
            }
        })
    }

    /// Inserts or replaces a block, growing the id space if needed.
    pub fn set_block(&mut self, key: ParamKey, values: &[f64]) -> Result<()> {
        let expected = self.layout.width(key);
        if values.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: values.len(),
            });
        }
        match key {
            ParamKey::Entity(e) => {
                self.reserve_ids(e.index() + 1, 0);
                self.entity_present[e.index()] = true;
            }
            ParamKey::Relation(r) => {
                self.reserve_ids(0, r.index() + 1);
                self.relation_present[r.index()] = true;
            }
        }
        self.block_mut(key)
            .expect("just inserted")
            .copy_from_slice(values);
        Ok(())
    }

    /// Drops a block; its slot is zeroed so serialized output stays canonical.
    pub fn remove(&mut self, key: ParamKey) {
        if let Some(b) = self.block_mut(key) {
            b.fill(0.0);
        }
        match key {
            ParamKey::Entity(e) if e.index() < self.entity_present.len() => {
                self.entity_present[e.index()] = false
            }
            ParamKey::Relation(r) if r.index() < self.relation_present.len() => {
                self.relation_present[r.index()] = false
            }
            _ => {}
        }
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entity_present
            .iter()
            .enumerate()
            .filter(|(_, p)| **p)
            .map(|(i, _)| EntityId(i as u32))
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.relation_present
            .iter()
            .enumerate()
            .filter(|(_, p)| **p)
            .map(|(i, _)| RelationId(i as u32))
    }

    pub fn num_entities(&self) -> usize {
        self.entity_present.iter().filter(|p| **p).count()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_present.iter().filter(|p| **p).count()
    }

    /// Binary form: header, presence flags, then every slot as row-major
    /// little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.entities.len() + self.relations.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.layout.kind.code());
        out.push(match self.layout.norm {
            Norm::L1 => 1,
            Norm::L2 => 2,
        });
        for v in [
            self.layout.entity_dim,
            self.layout.relation_dim,
            self.layout.analogy_scalar_dims,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.entity_present.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.relation_present.len() as u64).to_le_bytes());
        out.extend(self.entity_present.iter().map(|p| *p as u8));
        out.extend(self.relation_present.iter().map(|p| *p as u8));
        for v in self.entities.iter().chain(&self.relations) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_code(cur.take(1)?[0])
            .ok_or_else(|| Error::Format("bad model kind".into()))?;
        let norm = match cur.take(1)?[0] {
            1 => Norm::L1,
            2 => Norm::L2,
            c => return Err(Error::Format(format!("bad norm code {c}"))),
        };
        let entity_dim = u32::from_le_bytes(cur.array()?) as usize;
        let relation_dim = u32::from_le_bytes(cur.array()?) as usize;
        let analogy_scalar_dims = u32::from_le_bytes(cur.array()?) as usize;
        let layout = Layout {
            kind,
            entity_dim,
            relation_dim,
            analogy_scalar_dims,
            norm,
        };
        let n_ent = u64::from_le_bytes(cur.array()?) as usize;
        let n_rel = u64::from_le_bytes(cur.array()?) as usize;
        let flags = |b: &[u8]| -> Result<Vec<bool>> {
            b.iter()
                .map(|f| match f {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(Error::Format("bad presence flag".into())),
                })
                .collect()
        };
        let entity_present = flags(cur.take(n_ent)?)?;
        let relation_present = flags(cur.take(n_rel)?)?;
        let mut floats = |n: usize| -> Result<Vec<f64>> {
            let raw = cur.take(n * 8)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let entities = floats(n_ent * layout.entity_width())?;
        let relations = floats(n_rel * layout.relation_width())?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Self {
            layout,
            entities,
            entity_present,
            relations,
            relation_present,
        })
    }
}

const MAGIC: &[u8; 4] = b"DKGE";
const FORMAT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary store to `path` and the label dictionary next to it
/// with a `.json` extension.
pub fn write_store(store: &EmbeddingStore, dict: &Dictionary, path: &Path) -> Result<()> {
    std::fs::File::create(path)?.write_all(&store.to_bytes())?;
    std::fs::write(sidecar_path(path), dict.to_json()?)?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<(EmbeddingStore, Dictionary)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let store = EmbeddingStore::from_bytes(&bytes)?;
    let dict = Dictionary::from_json(&std::fs::read_to_string(sidecar_path(path))?)?;
    Ok((store, dict))
}

/// Sparse gradient: one dense vector per touched parameter block, iterated
/// in key order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrad {
    pub blocks: BTreeMap<ParamKey, Vec<f64>>,
}

impl SparseGrad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn get(&self, key: ParamKey) -> Option<&[f64]> {
        self.blocks.get(&key).map(Vec::as_slice)
    }

    /// Adds `values` into the block for `key`.
    pub fn add(&mut self, key: ParamKey, values: &[f64]) {
        match self.blocks.get_mut(&key) {
            Some(b) => b.iter_mut().zip(values).for_each(|(a, v)| *a += v),
            None => {
                self.blocks.insert(key, values.to_vec());
            }
        }
    }

    pub fn merge(&mut self, other: SparseGrad) {
        for (k, v) in other.blocks {
            self.add(k, &v);
        }
    }
}

/// Uniform initialization bound `sqrt(6 / (n + d))`.
pub(crate) fn init_bound(n: usize, d: usize) -> f64 {
    (6.0 / (n + d) as f64).sqrt()
}

/// Fresh uniform entity block for a graph with `n_entities` entities.
pub(crate) fn random_entity_block(
    spec: &ModelSpec,
    n_entities: usize,
    rng: &mut KgRng,
) -> Vec<f64> {
    let b = init_bound(n_entities, spec.entity_dim);
    (0..spec.layout().entity_width())
        .map(|_| rng.gen_range(-b..=b))
        .collect()
}

/// Fresh uniform relation block; TransH normals are rescaled to unit length.
pub(crate) fn random_relation_block(
    spec: &ModelSpec,
    n_relations: usize,
    rng: &mut KgRng,
) -> Vec<f64> {
    let b = init_bound(n_relations, spec.relation_dim);
    let mut block: Vec<f64> = (0..spec.layout().relation_width())
        .map(|_| rng.gen_range(-b..=b))
        .collect();
    if spec.kind == ModelKind::TransH {
        normalize_transh_normal(spec, &mut block);
    }
    block
}

pub(crate) fn normalize_transh_normal(spec: &ModelSpec, block: &mut [f64]) {
    let w = &mut block[spec.entity_dim..];
    let n = crate::linalg::norm2(w);
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
}

/// Random store covering the given elements. Relations are drawn first in
/// ascending id order, then entities.
pub fn init_parameters(
    spec: &ModelSpec,
    vertices: &[EntityId],
    relations: &[RelationId],
    seed: u64,
) -> Result<EmbeddingStore> {
    spec.validate()?;
    let mut rng = derive_rng(seed, streams::PARAMETER_INIT);
    let mut store = EmbeddingStore::new(spec.layout());
    let max_e = vertices.iter().map(|e| e.index() + 1).max().unwrap_or(0);
    let max_r = relations.iter().map(|r| r.index() + 1).max().unwrap_or(0);
    store.reserve_ids(max_e, max_r);
    let mut rels = relations.to_vec();
    rels.sort_unstable();
    rels.dedup();
    let mut ents = vertices.to_vec();
    ents.sort_unstable();
    ents.dedup();
    for r in &rels {
        let block = random_relation_block(spec, rels.len(), &mut rng);
        store.set_block(ParamKey::Relation(*r), &block)?;
    }
    for e in &ents {
        let block = random_entity_block(spec, ents.len(), &mut rng);
        store.set_block(ParamKey::Entity(*e), &block)?;
    }
    Ok(store)
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::models::{EmbeddingStore, ParamKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    L1,
    L2,
    Cosine,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Distance::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Cosine => {
                let nn = (dot(a, a) * dot(b, b)).sqrt();
                if nn == 0.0 {
                    1.0
                } else {
                    1.0 - dot(a, b) / nn
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Entities,
    Relations,
}

/// The two factors of NMC. [`nmc`] reports `movement / dist_empty`; the
/// product is kept reachable for the multiplicative reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmcParts {
    /// Sum over shared elements of displacement over summed new distances.
    pub movement: f64,
    /// Mean over elements of their summed distance to all new positions.
    pub dist_empty: f64,
}

impl NmcParts {
    pub fn value(&self) -> f64 {
        self.movement / self.dist_empty
    }
}

/// Normalized movement of shared elements between two stores: each
/// element's displacement relative to its summed distance to all other new
/// positions, scaled by the inverse mean of those sums. Zero means nothing
/// moved.
pub fn nmc(
    old: &EmbeddingStore,
    new: &EmbeddingStore,
    kind: ElementKind,
    distance: Distance,
    chunk: usize,
) -> Result<f64> {
    nmc_parts(old, new, kind, distance, chunk).map(|p| p.value())
}

/// Both factors of [`nmc`] for the shared elements of two stores.
pub fn nmc_parts(
    old: &EmbeddingStore,
    new: &EmbeddingStore,
    kind: ElementKind,
    distance: Distance,
    chunk: usize,
) -> Result<NmcParts> {
    let keys: Vec<ParamKey> = match kind {
        ElementKind::Entities => new
            .entity_ids()
            .filter(|e| old.has_entity(*e))
            .map(ParamKey::Entity)
            .collect(),
        ElementKind::Relations => new
            .relation_ids()
            .filter(|r| old.has_relation(*r))
            .map(ParamKey::Relation)
            .collect(),
    };
    let old_rows: Vec<&[f64]> = keys
        .iter()
        .map(|k| old.block(*k).expect("shared"))
        .collect();
    let new_rows: Vec<&[f64]> = keys
        .iter()
        .map(|k| new.block(*k).expect("shared"))
        .collect();
    nmc_rows_parts(&old_rows, &new_rows, distance, chunk)
}

/// [`nmc`] on aligned rows. Pairwise distances are produced `chunk` rows at
/// a time, so memory stays linear in the number of rows.
pub fn nmc_rows(old: &[&[f64]], new: &[&[f64]], distance: Distance, chunk: usize) -> Result<f64> {
    nmc_rows_parts(old, new, distance, chunk).map(|p| p.value())
}

pub fn nmc_rows_parts(
    old: &[&[f64]],
    new: &[&[f64]],
    distance: Distance,
    chunk: usize,
) -> Result<NmcParts> {
    if old.len() != new.len() {
        return Err(Error::Contract("row counts differ".into()));
    }
    let n = new.len();
    if n == 0 {
        return Err(Error::Undefined("no shared elements".into()));
    }
    let chunk = chunk.max(1);
    let row_sums: Vec<f64> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .flat_map_iter(|rows| {
            let mut buf = vec![0.0; rows.len() * n];
            for (k, &v) in rows.iter().enumerate() {
                for w in 0..n {
                    buf[k * n + w] = distance.eval(new[v], new[w]);
                }
            }
            (0..rows.len())
                .map(move |k| buf[k * n..(k + 1) * n].iter().sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    finish(old, new, distance, &row_sums)
}

pub(crate) fn finish(
    old: &[&[f64]],
    new: &[&[f64]],
    distance: Distance,
    row_sums: &[f64],
) -> Result<NmcParts> {
    let n = new.len() as f64;
    let dist_empty = row_sums.iter().sum::<f64>() / n;
    if dist_empty == 0.0 {
        return Err(Error::Undefined("all new positions coincide".into()));
    }
    let movement: f64 = (0..new.len())
        .map(|v| distance.eval(new[v], old[v]) / row_sums[v])
        .sum();
    Ok(NmcParts {
        movement,
        dist_empty,
    })
}

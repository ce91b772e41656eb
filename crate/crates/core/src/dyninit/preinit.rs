//! Starting points for new elements: random draws, averages, closed-form
//! optima of the translational constraints and their negative-evidence
//! variants.

use crate::error::{Error, Result};
use crate::kg::{EntityId, Triple};
use crate::linalg::{dot, solve};
use crate::models::{EmbeddingStore, Norm};

/// Mean of the given rows, or `None` when there are none.
pub fn mean_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for row in rows {
        let a = acc.get_or_insert_with(|| vec![0.0; row.len()]);
        a.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        n += 1;
    }
    acc.map(|mut a| {
        a.iter_mut().for_each(|x| *x /= n as f64);
        a
    })
}

fn entity(store: &EmbeddingStore, e: EntityId) -> Result<&[f64]> {
    store.entity(e).ok_or(Error::MissingEntity(e))
}

fn relation<'a>(store: &'a EmbeddingStore, t: &Triple) -> Result<&'a [f64]> {
    store
        .relation(t.relation)
        .ok_or(Error::MissingRelation(t.relation))
}

/// Where a TransE relation should sit to satisfy one triple: `t - h`.
pub fn relation_target_transe(store: &EmbeddingStore, t: &Triple) -> Result<Vec<f64>> {
    let (h, tl) = (entity(store, t.head)?, entity(store, t.tail)?);
    Ok(tl.iter().zip(h).map(|(a, b)| a - b).collect())
}

/// Where a TransE entity should sit: `h + r` when it is the tail of `t`,
/// `t - r` when it is the head.
pub fn entity_target_transe(store: &EmbeddingStore, t: &Triple, as_tail: bool) -> Result<Vec<f64>> {
    let d = store.layout().entity_dim;
    let r = &relation(store, t)?[..d];
    Ok(if as_tail {
        entity(store, t.head)?
            .iter()
            .zip(r)
            .map(|(a, b)| a + b)
            .collect()
    } else {
        entity(store, t.tail)?
            .iter()
            .zip(r)
            .map(|(a, b)| a - b)
            .collect()
    })
}

/// Mean of `t - h` over the relation's informative triples; the exact
/// minimizer of the summed squared TransE residuals.
pub fn pos_relation_transe(
    evidence: &[Triple],
    store: &EmbeddingStore,
) -> Result<Option<Vec<f64>>> {
    let targets = evidence
        .iter()
        .map(|t| relation_target_transe(store, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_rows(targets.iter().map(Vec::as_slice)))
}

/// Mean of `h + r` over incoming and `t - r` over outgoing triples.
pub fn pos_entity_transe(
    incoming: &[Triple],
    outgoing: &[Triple],
    store: &EmbeddingStore,
) -> Result<Option<Vec<f64>>> {
    let targets = entity_targets_transe(incoming, outgoing, store)?;
    Ok(mean_rows(targets.iter().map(Vec::as_slice)))
}

fn entity_targets_transe(
    incoming: &[Triple],
    outgoing: &[Triple],
    store: &EmbeddingStore,
) -> Result<Vec<Vec<f64>>> {
    incoming
        .iter()
        .map(|t| entity_target_transe(store, t, true))
        .chain(
            outgoing
                .iter()
                .map(|t| entity_target_transe(store, t, false)),
        )
        .collect()
}

/// A line `{point + s * dir}` with unit `dir`.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub point: Vec<f64>,
    pub dir: Vec<f64>,
}

/// TransH line of positions whose projection satisfies one triple: through
/// the projected partner plus (tail role) or minus (head role) the
/// relation vector, along the hyperplane normal.
pub fn entity_line_transh(store: &EmbeddingStore, t: &Triple, as_tail: bool) -> Result<Line> {
    let d = store.layout().entity_dim;
    let (r, w) = relation(store, t)?.split_at(d);
    let partner = entity(store, if as_tail { t.head } else { t.tail })?;
    let wp = dot(w, partner);
    let sign = if as_tail { 1.0 } else { -1.0 };
    let point = (0..d)
        .map(|i| partner[i] - wp * w[i] + sign * r[i])
        .collect();
    Ok(Line {
        point,
        dir: w.to_vec(),
    })
}

pub const RIDGE: f64 = 1e-9;

/// Least-squares point closest to all lines. When the normal equations are
/// singular (all directions parallel) a ridge of [`RIDGE`] is added and the
/// second value is true.
pub fn closest_point_to_lines(lines: &[Line]) -> Option<(Vec<f64>, bool)> {
    let d = lines.first()?.point.len();
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for line in lines {
        let (p, w) = (&line.point, &line.dir);
        let wp = dot(w, p);
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] += if i == j { 1.0 } else { 0.0 } - w[i] * w[j];
            }
            b[i] += p[i] - w[i] * wp;
        }
    }
    if let Some(x) = solve(&a, &b, 1e-12) {
        return Some((x, false));
    }
    for i in 0..d {
        a[i * d + i] += RIDGE;
    }
    let x = solve(&a, &b, 0.0).unwrap_or_else(|| vec![0.0; d]);
    Some((x, true))
}

/// The [`closest_point_to_lines`] entity position for TransH evidence.
pub fn pos_entity_transh(
    incoming: &[Triple],
    outgoing: &[Triple],
    store: &EmbeddingStore,
) -> Result<Option<(Vec<f64>, bool)>> {
    let lines = entity_lines_transh(incoming, outgoing, store)?;
    Ok(closest_point_to_lines(&lines))
}

fn entity_lines_transh(
    incoming: &[Triple],
    outgoing: &[Triple],
    store: &EmbeddingStore,
) -> Result<Vec<Line>> {
    incoming
        .iter()
        .map(|t| entity_line_transh(store, t, true))
        .chain(outgoing.iter().map(|t| entity_line_transh(store, t, false)))
        .collect()
}

/// Mean over best positions and the negated worst positions.
pub fn neg_direct_mean(best: &[Vec<f64>], worst: &[Vec<f64>]) -> Option<Vec<f64>> {
    let negated: Vec<Vec<f64>> = worst
        .iter()
        .map(|w| w.iter().map(|x| -x).collect())
        .collect();
    mean_rows(best.iter().chain(&negated).map(Vec::as_slice))
}

/// Closest point to the best lines and to the worst lines reflected
/// through the origin.
pub fn neg_direct_lines(best: &[Line], worst: &[Line]) -> Option<(Vec<f64>, bool)> {
    let mut lines = best.to_vec();
    lines.extend(worst.iter().map(|l| Line {
        point: l.point.iter().map(|x| -x).collect(),
        dir: l.dir.clone(),
    }));
    closest_point_to_lines(&lines)
}

pub(crate) fn distance(norm: Norm, a: &[f64], b: &[f64]) -> f64 {
    match norm {
        Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Norm::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neg2Outcome {
    pub vector: Vec<f64>,
    /// True when a full epoch passed without a jump.
    pub stable: bool,
    pub epochs: usize,
    pub jumps: usize,
}

/// Iterative negative evidence. Each epoch visits every best position and
/// draws `negs` worst positions for it from `worst(i)`; whenever the
/// current vector is closer to the worst position than to the best one it
/// jumps `step` of the way towards the best. Stops after `max_epochs` or
/// the first epoch without a jump.
pub fn neg2_iterative(
    start: Vec<f64>,
    best: &[Vec<f64>],
    mut worst: impl FnMut(usize) -> Option<Vec<f64>>,
    negs: usize,
    max_epochs: usize,
    step: f64,
    norm: Norm,
) -> Neg2Outcome {
    let mut x = start;
    let mut stable = false;
    let mut epochs = 0;
    let mut jumps = 0;
    while epochs < max_epochs && !stable {
        stable = true;
        for (i, b) in best.iter().enumerate() {
            for _ in 0..negs {
                let Some(w) = worst(i) else { continue };
                let dir: Vec<f64> = b.iter().zip(&x).map(|(b, x)| b - x).collect();
                let zero = vec![0.0; dir.len()];
                if distance(norm, &w, &x) < distance(norm, &dir, &zero) {
                    x.iter_mut().zip(&dir).for_each(|(x, d)| *x += step * d);
                    stable = false;
                    jumps += 1;
                }
            }
        }
        epochs += 1;
    }
    Neg2Outcome {
        vector: x,
        stable,
        epochs,
        jumps,
    }
}

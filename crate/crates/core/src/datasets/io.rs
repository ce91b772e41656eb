//! On-disk timelines: `snapshots/<i>/{train,valid,test}.tsv` with labels,
//! the snapshot's entity and relation labels in `entities.txt` and
//! `relations.txt`, one `dictionary.json` for the whole timeline and a
//! `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{
    diff_snapshots, validate_snapshot, Dictionary, Snapshot, Split, Triple, TripleSet,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Position of the window in the source log, for sliding windows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl SnapshotMeta {
    pub fn of(s: &Snapshot, offset: Option<usize>) -> Self {
        Self {
            entities: s.vertices().len(),
            relations: s.relations().len(),
            train: s.train.len(),
            valid: s.valid.len(),
            test: s.test.len(),
            offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineMeta {
    /// `window` or `synthetic`.
    pub mode: String,
    pub seed: u64,
    pub proportions: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<f64>,
    pub snapshots: Vec<SnapshotMeta>,
}

/// Counts of one materialized change set.
#[derive(Serialize)]
struct DeltaSummary {
    added_vertices: Vec<String>,
    deleted_vertices: Vec<String>,
    added_relations: Vec<String>,
    deleted_relations: Vec<String>,
    added: [usize; 3],
    deleted: [usize; 3],
}

fn lines(labels: &[&str]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Ids of the labels listed one per line in `path`.
fn read_ids<T>(path: &Path, lookup: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .map(|(i, label)| {
            lookup(label).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("`{label}` is not in the dictionary"),
            })
        })
        .collect()
}

fn snapshot_dir(root: &Path, i: usize) -> PathBuf {
    root.join("snapshots").join(i.to_string())
}

fn write_tsv(path: &Path, triples: &TripleSet, dict: &Dictionary) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_path(path)
        .map_err(csv_err)?;
    for t in triples {
        let missing = || Error::Dictionary(format!("no label for {t}"));
        w.write_record([
            dict.entity_label(t.head).ok_or_else(missing)?,
            dict.relation_label(t.relation).ok_or_else(missing)?,
            dict.entity_label(t.tail).ok_or_else(missing)?,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn read_tsv(path: &Path, dict: &Dictionary) -> Result<TripleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if record.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", record.len())));
        }
        let ent = |label: &str| {
            dict.entity(label)
                .ok_or_else(|| err(format!("entity `{label}` is not in the dictionary")))
        };
        let relation = dict.relation(&record[1]).ok_or_else(|| {
            err(format!(
                "relation `{}` is not in the dictionary",
                &record[1]
            ))
        })?;
        out.push(Triple {
            head: ent(&record[0])?,
            relation,
            tail: ent(&record[2])?,
        });
    }
    Ok(out.into_iter().collect())
}

/// Writes a timeline under `root`. With `deltas`, also writes
/// `delta_<i>.json` summarizing the change from snapshot `i - 1` to `i`.
pub fn write_snapshot_dir(
    root: &Path,
    snapshots: &[Snapshot],
    dict: &Dictionary,
    meta: &TimelineMeta,
    deltas: bool,
) -> Result<()> {
    fs::create_dir_all(root)?;
    for (i, s) in snapshots.iter().enumerate() {
        let dir = snapshot_dir(root, i);
        fs::create_dir_all(&dir)?;
        for split in Split::ALL {
            write_tsv(
                &dir.join(format!("{}.tsv", split.name())),
                s.split(split),
                dict,
            )?;
        }
        let ents: Vec<&str> = s
            .vertices()
            .iter()
            .map(|e| {
                dict.entity_label(*e)
                    .ok_or_else(|| Error::Dictionary(format!("no label for {e:?}")))
            })
            .collect::<Result<_>>()?;
        let rels: Vec<&str> = s
            .relations()
            .iter()
            .map(|r| {
                dict.relation_label(*r)
                    .ok_or_else(|| Error::Dictionary(format!("no label for {r:?}")))
            })
            .collect::<Result<_>>()?;
        fs::write(dir.join("entities.txt"), lines(&ents))?;
        fs::write(dir.join("relations.txt"), lines(&rels))?;
        if deltas && i > 0 {
            let cs = diff_snapshots(&snapshots[i - 1], s)?;
            let ents = |v: &[crate::kg::EntityId]| {
                v.iter()
                    .filter_map(|e| dict.entity_label(*e).map(str::to_owned))
                    .collect()
            };
            let rels = |v: &[crate::kg::RelationId]| {
                v.iter()
                    .filter_map(|r| dict.relation_label(*r).map(str::to_owned))
                    .collect()
            };
            let summary = DeltaSummary {
                added_vertices: ents(&cs.added_vertices),
                deleted_vertices: ents(&cs.deleted_vertices),
                added_relations: rels(&cs.added_relations),
                deleted_relations: rels(&cs.deleted_relations),
                added: Split::ALL.map(|s| cs.added(s).len()),
                deleted: Split::ALL.map(|s| cs.deleted(s).len()),
            };
            fs::write(
                root.join(format!("delta_{i}.json")),
                serde_json::to_string_pretty(&summary)?,
            )?;
        }
    }
    fs::write(root.join("dictionary.json"), dict.to_json()?)?;
    fs::write(root.join("meta.json"), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_snapshot_dir(root: &Path) -> Result<(Vec<Snapshot>, Dictionary, TimelineMeta)> {
    let meta: TimelineMeta = serde_json::from_str(&fs::read_to_string(root.join("meta.json"))?)?;
    let dict = Dictionary::from_json(&fs::read_to_string(root.join("dictionary.json"))?)?;
    let snapshots = (0..meta.snapshots.len())
        .map(|i| {
            let dir = snapshot_dir(root, i);
            let [train, valid, test] =
                Split::ALL.map(|split| read_tsv(&dir.join(format!("{}.tsv", split.name())), &dict));
            let (train, valid, test) = (train?, valid?, test?);
            // Element lists are optional; without them the splits define the
            // snapshot's elements.
            let (ent_path, rel_path) = (dir.join("entities.txt"), dir.join("relations.txt"));
            if ent_path.is_file() && rel_path.is_file() {
                let ents = read_ids(&ent_path, |l| dict.entity(l))?;
                let rels = read_ids(&rel_path, |l| dict.relation(l))?;
                let s = Snapshot::new(i, ents, rels, train, valid, test);
                if let Some(v) = validate_snapshot(&s).into_iter().next() {
                    return Err(Error::Contract(format!(
                        "snapshot {i} on disk is malformed: {v:?}"
                    )));
                }
                Ok(s)
            } else {
                Ok(Snapshot::from_splits(i, train, valid, test))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((snapshots, dict, meta))
}

//! Embedding models: scoring functions, losses and analytic gradients over a
//! shared parameter store.

mod kernels;
mod loss;
mod store;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernels::analogy_matrix;
pub(crate) use kernels::{add_score_grad, score_rows};
pub(crate) use loss::score_unchecked;
pub use loss::{
    grad, loss_logistic, loss_pairwise, pair_objective, score, sigmoid, softplus, LossInputs,
};
pub use store::{
    init_parameters, read_store, write_store, EmbeddingStore, Layout, ParamKey, SparseGrad,
};
pub(crate) use store::{normalize_transh_normal, random_entity_block, random_relation_block};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransH,
    TransD,
    DistMult,
    Rescal,
    Analogy,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::TransD,
        ModelKind::DistMult,
        ModelKind::Rescal,
        ModelKind::Analogy,
    ];

    /// Translational-distance models; the rest are semantic-matching models.
    pub fn is_translational(self) -> bool {
        matches!(
            self,
            ModelKind::TransE | ModelKind::TransH | ModelKind::TransD
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::TransD => "transd",
            ModelKind::DistMult => "distmult",
            ModelKind::Rescal => "rescal",
            ModelKind::Analogy => "analogy",
        }
    }

    fn code(self) -> u8 {
        ModelKind::ALL
            .iter()
            .position(|k| *k == self)
            .expect("listed") as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        ModelKind::ALL.get(c as usize).copied()
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Distance used by TransE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Margin ranking loss over (positive, negative) pairs.
    Pairwise,
    /// Softplus of the signed score.
    Logistic,
}

/// Model hyper-parameters. Scores are "higher is more plausible" for every kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Entity embedding dimension.
    pub entity_dim: usize,
    /// Relation embedding dimension; only TransD may differ from `entity_dim`.
    pub relation_dim: usize,
    /// TransE distance.
    pub norm: Norm,
    /// Hinge margin of the pairwise loss.
    pub margin: f64,
    pub loss: LossKind,
    /// Weight of the mean squared coordinate of every parameter block
    /// touched by a loss term.
    pub l2_weight: f64,
    /// TransH soft-constraint weight.
    pub transh_c: f64,
    /// TransH orthogonality tolerance.
    pub transh_eps: f64,
    /// Number of leading 1x1 blocks in the ANALOGY relation matrix; the
    /// remaining dimensions form 2x2 blocks.
    pub analogy_scalar_dims: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        let d = if kind == ModelKind::Rescal { 50 } else { 100 };
        Self::with_dim(kind, d)
    }

    pub fn with_dim(kind: ModelKind, d: usize) -> Self {
        Self {
            kind,
            entity_dim: d,
            relation_dim: d,
            norm: Norm::L2,
            margin: 1.0,
            loss: match kind {
                ModelKind::DistMult | ModelKind::Analogy => LossKind::Logistic,
                _ => LossKind::Pairwise,
            },
            l2_weight: 0.02,
            transh_c: 0.25,
            transh_eps: 1e-3,
            analogy_scalar_dims: d % 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entity_dim == 0 || self.relation_dim == 0 {
            return Err(Error::Config(
                "embedding dimensions must be positive".into(),
            ));
        }
        if self.kind != ModelKind::TransD && self.relation_dim != self.entity_dim {
            return Err(Error::Config(format!(
                "{} requires relation_dim == entity_dim",
                self.kind
            )));
        }
        if self.kind == ModelKind::Analogy {
            let s = self.analogy_scalar_dims;
            if s > self.entity_dim || !(self.entity_dim - s).is_multiple_of(2) {
                return Err(Error::Config(format!(
                    "analogy_scalar_dims={s} must leave an even number of the {} dimensions",
                    self.entity_dim
                )));
            }
        }
        if !(self.margin >= 0.0) || !(self.l2_weight >= 0.0) || !(self.transh_c >= 0.0) {
            return Err(Error::Config(
                "margin and penalty weights must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout {
            kind: self.kind,
            entity_dim: self.entity_dim,
            relation_dim: self.relation_dim,
            analogy_scalar_dims: if self.kind == ModelKind::Analogy {
                self.analogy_scalar_dims
            } else {
                0
            },
            norm: self.norm,
        }
    }

    /// Default hyper-parameters for the shape recorded in a store.
    pub fn from_layout(layout: &Layout) -> Self {
        let mut spec = Self::with_dim(layout.kind, layout.entity_dim);
        spec.relation_dim = layout.relation_dim;
        spec.norm = layout.norm;
        if layout.kind == ModelKind::Analogy {
            spec.analogy_scalar_dims = layout.analogy_scalar_dims;
        }
        spec
    }
}

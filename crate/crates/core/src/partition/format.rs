//! Versioned JSON encoding of a surrogate tree.
//!
//! ```text
//! {
//!   "header": {"version": "1", "d", "domain": {"lower", "upper"}, "names",
//!              "N", "rho", "n_min", "build_timestamp"},
//!   "build_meta": {...},
//!   "importance": [...],
//!   "tree": {"axis", "threshold", "left", "right"}
//!         | {"lower", "upper", "beta", "r2", "n", "sigma2"},
//!   "measurements": {"points", "values"}        (optional)
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so decoding reproduces
//! every coefficient and threshold bit for bit. A non-finite `r2` is written
//! as `null`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{validate, BuildMeta, Leaf, MeasurementSet, SurrogateTree, TreeNode};
use crate::geometry::HyperRectangle;
use crate::linfit::LocalLinearModel;

/// Version string written to and required in every document.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("unsupported surrogate version {found:?}, expected {expected:?}")]
    Version {
        found: String,
        expected: &'static str,
    },
    #[error("invalid surrogate document: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serde helper writing non-finite values as `null` and reading `null` back
/// as negative infinity.
pub(crate) mod lossy_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: String,
    d: usize,
    domain: HyperRectangle,
    #[serde(default)]
    names: Option<Vec<String>>,
    #[serde(rename = "N")]
    n_points: usize,
    rho: f64,
    n_min: usize,
    #[serde(default)]
    build_timestamp: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Internal(InternalRepr),
    Leaf(LeafRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InternalRepr {
    axis: usize,
    threshold: f64,
    left: Box<NodeRepr>,
    right: Box<NodeRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
    beta: Vec<f64>,
    #[serde(with = "lossy_f64")]
    r2: f64,
    n: usize,
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    header: Header,
    build_meta: BuildMeta,
    importance: Vec<f64>,
    tree: NodeRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    measurements: Option<MeasurementSet>,
}

fn encode_node(node: &TreeNode) -> NodeRepr {
    match node {
        TreeNode::Internal {
            axis,
            threshold,
            left,
            right,
        } => NodeRepr::Internal(InternalRepr {
            axis: *axis,
            threshold: *threshold,
            left: Box::new(encode_node(left)),
            right: Box::new(encode_node(right)),
        }),
        TreeNode::Leaf(leaf) => NodeRepr::Leaf(LeafRepr {
            lower: leaf.rect.lower().to_vec(),
            upper: leaf.rect.upper().to_vec(),
            beta: leaf.model.beta.clone(),
            r2: leaf.model.r2,
            n: leaf.model.n,
            sigma2: leaf.model.sigma2,
        }),
    }
}

fn decode_node(node: NodeRepr) -> Result<TreeNode, FormatError> {
    Ok(match node {
        NodeRepr::Internal(n) => TreeNode::Internal {
            axis: n.axis,
            threshold: n.threshold,
            left: Box::new(decode_node(*n.left)?),
            right: Box::new(decode_node(*n.right)?),
        },
        NodeRepr::Leaf(l) => TreeNode::Leaf(Leaf {
            rect: HyperRectangle::new(l.lower, l.upper)
                .map_err(|e| FormatError::Schema(format!("leaf bounds: {e}")))?,
            model: LocalLinearModel {
                beta: l.beta,
                sigma2: l.sigma2,
                r2: l.r2,
                n: l.n,
            },
        }),
    })
}

impl SurrogateTree {
    /// Encodes the tree as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        let doc = Document {
            header: Header {
                version: FORMAT_VERSION.to_string(),
                d: self.dim(),
                domain: self.domain.clone(),
                names: self.names.clone(),
                n_points: self.meta.n_points,
                rho: self.meta.rho,
                n_min: self.meta.n_min,
                build_timestamp: self.build_timestamp.clone(),
            },
            build_meta: self.meta.clone(),
            importance: self.importance.clone(),
            tree: encode_node(&self.root),
            measurements: self.measurements.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("surrogate documents always serialize")
    }

    /// Decodes and validates a document produced by [`SurrogateTree::to_json`].
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| FormatError::Schema(e.to_string()))?;
        match value.pointer("/header/version") {
            Some(Value::String(v)) if v == FORMAT_VERSION => {}
            Some(Value::String(v)) => {
                return Err(FormatError::Version {
                    found: v.clone(),
                    expected: FORMAT_VERSION,
                })
            }
            Some(other) => {
                return Err(FormatError::Version {
                    found: other.to_string(),
                    expected: FORMAT_VERSION,
                })
            }
            None => return Err(FormatError::Schema("missing header.version".into())),
        }
        let doc: Document =
            serde_json::from_value(value).map_err(|e| FormatError::Schema(e.to_string()))?;
        let d = doc.header.d;
        if doc.header.domain.dim() != d {
            return Err(FormatError::Schema(format!(
                "header.d is {d} but the domain has dimension {}",
                doc.header.domain.dim()
            )));
        }
        if let Some(names) = &doc.header.names {
            if names.len() != d {
                return Err(FormatError::Schema(format!(
                    "{} names for {d} features",
                    names.len()
                )));
            }
        }
        if doc.importance.len() != d {
            return Err(FormatError::Schema(format!(
                "{} importances for {d} features",
                doc.importance.len()
            )));
        }
        if let Some(m) = &doc.measurements {
            if m.points.len() != m.values.len() || m.points.iter().any(|p| p.len() != d) {
                return Err(FormatError::Schema("malformed measurements".into()));
            }
        }
        let root = decode_node(doc.tree)?;
        validate(&root, &doc.header.domain, &doc.header.domain, 0)
            .map_err(|e| FormatError::Schema(e.to_string()))?;

        let mut tree = SurrogateTree::assemble(doc.header.domain, root, doc.build_meta);
        tree.names = doc.header.names;
        tree.measurements = doc.measurements;
        tree.build_timestamp = doc.header.build_timestamp;
        Ok(tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

//! TOML design documents.
//!
//! ```toml
//! name = "D4"
//! nsim = 5000
//! level = 0.95
//! # thinning = 0.01
//!
//! [geometry]
//! kind = "balanced"
//! n_g = 1000
//! n_h = 1000
//! per_cell = 1
//!
//! [effects]
//! variant = "hvar"
//! noise = 0.1
//! noise_scale = "variance"
//!
//! [sampling]
//! kind = "one_way_g"
//! q = 0.05
//! p = 1.0
//!
//! [assignment]
//! kind = "one_way_h"
//! distribution = "uniform"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Design, Geometry, DEFAULT_LEVEL, DEFAULT_NSIM};
use crate::mechanisms::{AssignmentSpec, ClusterProbability, SamplingSpec};
use crate::population::{EffectScheme, EffectVariant, NoiseScale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nsim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thinning: Option<f64>,
    geometry: GeometryDoc,
    effects: EffectsDoc,
    sampling: SamplingDoc,
    assignment: AssignmentDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum GeometryDoc {
    Balanced {
        n_g: usize,
        n_h: usize,
        per_cell: usize,
    },
    Staircase {
        m: usize,
        m0: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectsDoc {
    variant: EffectVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_scale: Option<NoiseScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SamplingDoc {
    Full,
    Iid { p: f64 },
    OneWayG { q: f64, p: f64 },
    MultiwayAnd { a: f64, b: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DistributionDoc {
    Uniform,
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum AssignmentDoc {
    Iid {
        mu: f64,
    },
    OneWayH {
        distribution: DistributionDoc,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<[f64; 2]>,
    },
    MultiwayAnd {
        pa: f64,
        pb: f64,
    },
}

/// 1-based line of a byte offset.
fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// 1-based line defining `section.key`, either under a `[section]` header or
/// as a dotted key. An empty section names a top-level key.
fn key_line(src: &str, section: &str, key: &str) -> Option<usize> {
    let dotted = format!("{section}.{key}");
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == dotted) {
            return Some(i + 1);
        }
    }
    None
}

struct Checker<'a> {
    src: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, message: String) -> Error {
        Error::Config {
            line: key_line(self.src, section, key),
            message,
        }
    }

    fn probability(&self, section: &str, key: &str, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            let path = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            return Err(self.fail(section, key, format!("{path} = {x} is outside [0, 1]")));
        }
        Ok(x)
    }
}

fn to_design(doc: DesignDoc, src: &str) -> Result<Design> {
    let c = Checker { src };
    let geometry = match doc.geometry {
        GeometryDoc::Balanced { n_g, n_h, per_cell } => Geometry::Balanced { n_g, n_h, per_cell },
        GeometryDoc::Staircase { m, m0 } => Geometry::Staircase { m, m0 },
    };
    let mut effects = EffectScheme::new(doc.effects.variant);
    if let Some(noise) = doc.effects.noise {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(c.fail(
                "effects",
                "noise",
                format!("effects.noise = {noise} must be non-negative"),
            ));
        }
        effects.noise = noise;
    }
    if let Some(scale) = doc.effects.noise_scale {
        effects.noise_scale = scale;
    }
    let sampling = match doc.sampling {
        SamplingDoc::Full => SamplingSpec::Full,
        SamplingDoc::Iid { p } => SamplingSpec::Iid {
            p: c.probability("sampling", "p", p)?,
        },
        SamplingDoc::OneWayG { q, p } => SamplingSpec::OneWayG {
            q: c.probability("sampling", "q", q)?,
            p: c.probability("sampling", "p", p)?,
        },
        SamplingDoc::MultiwayAnd { a, b, p } => SamplingSpec::MultiwayAnd {
            a: c.probability("sampling", "a", a)?,
            b: c.probability("sampling", "b", b)?,
            p: c.probability("sampling", "p", p)?,
        },
    };
    let assignment = match doc.assignment {
        AssignmentDoc::Iid { mu } => AssignmentSpec::Iid {
            mu: c.probability("assignment", "mu", mu)?,
        },
        AssignmentDoc::OneWayH {
            distribution: DistributionDoc::Uniform,
            values,
            probabilities,
        } => {
            if values.is_some() || probabilities.is_some() {
                return Err(c.fail(
                    "assignment",
                    "distribution",
                    "a uniform distribution takes no values or probabilities".into(),
                ));
            }
            AssignmentSpec::OneWayH(ClusterProbability::Uniform)
        }
        AssignmentDoc::OneWayH {
            distribution: DistributionDoc::TwoPoint,
            values,
            probabilities,
        } => {
            let (Some(values), Some(probabilities)) = (values, probabilities) else {
                return Err(c.fail(
                    "assignment",
                    "distribution",
                    "a two_point distribution needs values and probabilities".into(),
                ));
            };
            for x in values {
                c.probability("assignment", "values", x)?;
            }
            for x in probabilities {
                c.probability("assignment", "probabilities", x)?;
            }
            AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                values,
                probabilities,
            })
        }
        AssignmentDoc::MultiwayAnd { pa, pb } => AssignmentSpec::MultiwayAnd {
            pa: c.probability("assignment", "pa", pa)?,
            pb: c.probability("assignment", "pb", pb)?,
        },
    };
    if let Some(f) = doc.thinning {
        if !(f > 0.0 && f <= 1.0) {
            return Err(c.fail("", "thinning", format!("thinning = {f} is outside (0, 1]")));
        }
    }
    let level = doc.level.unwrap_or(DEFAULT_LEVEL);
    if !(level > 0.0 && level < 1.0) {
        return Err(c.fail("", "level", format!("level = {level} is outside (0, 1)")));
    }
    let nsim = doc.nsim.unwrap_or(DEFAULT_NSIM);
    if nsim == 0 {
        return Err(c.fail("", "nsim", "nsim must be positive".into()));
    }
    let design = Design {
        name: doc.name,
        geometry,
        effects,
        sampling,
        assignment,
        thinning: doc.thinning,
        nsim,
        level,
    };
    design.validate().map_err(|e| Error::Config {
        line: None,
        message: e.to_string(),
    })?;
    Ok(design)
}

/// Parses and validates a design document.
pub fn parse_design_str(src: &str) -> Result<Design> {
    let doc: DesignDoc = toml::from_str(src).map_err(|e| Error::Config {
        line: e.span().map(|s| line_at(src, s.start)),
        message: e.message().to_string(),
    })?;
    to_design(doc, src)
}

pub fn parse_design_config(path: &Path) -> Result<Design> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Config {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_design_str(&src)
}

/// Renders a design as a document that parses back to an equal design.
pub fn serialize_design(design: &Design) -> Result<String> {
    let geometry = match design.geometry {
        Geometry::Balanced { n_g, n_h, per_cell } => GeometryDoc::Balanced { n_g, n_h, per_cell },
        Geometry::Staircase { m, m0 } => GeometryDoc::Staircase { m, m0 },
    };
    let sampling = match design.sampling {
        SamplingSpec::Full => SamplingDoc::Full,
        SamplingSpec::Iid { p } => SamplingDoc::Iid { p },
        SamplingSpec::OneWayG { q, p } => SamplingDoc::OneWayG { q, p },
        SamplingSpec::MultiwayAnd { a, b, p } => SamplingDoc::MultiwayAnd { a, b, p },
    };
    let assignment = match &design.assignment {
        AssignmentSpec::Iid { mu } => AssignmentDoc::Iid { mu: *mu },
        AssignmentSpec::OneWayH(ClusterProbability::Uniform) => AssignmentDoc::OneWayH {
            distribution: DistributionDoc::Uniform,
            values: None,
            probabilities: None,
        },
        AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
            values,
            probabilities,
        }) => AssignmentDoc::OneWayH {
            distribution: DistributionDoc::TwoPoint,
            values: Some(*values),
            probabilities: Some(*probabilities),
        },
        AssignmentSpec::MultiwayAnd { pa, pb } => AssignmentDoc::MultiwayAnd { pa: *pa, pb: *pb },
    };
    let doc = DesignDoc {
        name: design.name.clone(),
        nsim: Some(design.nsim),
        level: Some(design.level),
        thinning: design.thinning,
        geometry,
        effects: EffectsDoc {
            variant: design.effects.variant,
            noise: Some(design.effects.noise),
            noise_scale: Some(design.effects.noise_scale),
        },
        sampling,
        assignment,
    };
    toml::to_string(&doc).map_err(|e| Error::Config {
        line: None,
        message: e.to_string(),
    })
}

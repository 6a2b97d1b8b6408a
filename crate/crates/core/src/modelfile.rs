//! Declarative model files: a versioned TOML schema naming a model
//! family and its parameters, plus the potential and the optional
//! stable contraction of the skew extension.
//!
//! ```toml
//! schema = 1
//!
//! [system]
//! family = "finite-linear"
//! base = [0.0, 1.0]
//!
//! [[system.branches]]
//! image = [0.0, 0.5]
//! roof = 1.0                       # or { base = 1.0, slope = 0.5 }
//! weight = 0.3                     # optional, default 0
//!
//! [[system.branches]]
//! image = [0.5, 1.0]
//! roof = 1.0
//!
//! [potential]                      # optional, default "zero"
//! kind = "constant"                # zero | constant | branch-weights | linear
//! value = 0.7
//! s_coeff = 0.0                    # optional stable-fiber term, needs [skew]
//!
//! [skew]                           # optional
//! stable_rate = 1.0
//! ```
//!
//! Countable families replace the branch list with their parameter
//! table:
//!
//! ```toml
//! [system]
//! family = "geometric-countable"
//!
//! [system.geometric]
//! theta = 0.3
//! log_coeff = 2.0
//! offset = 0.693147180559945
//! ```
//!
//! A `lorenz-template` system takes `[system.lorenz]` with `ratio`,
//! `roof_base`, `roof_step`, `v_sigma`, `w_offset`.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    BaseInterval, BranchSpec, GeometricFamily, LorenzFamily, Roof, SuspensionSystem,
};
use crate::potential::Potential;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSchema {
    schema: u64,
    system: SystemSchema,
    potential: Option<PotentialSchema>,
    skew: Option<SkewSchema>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSchema {
    family: String,
    base: Option<[f64; 2]>,
    branches: Option<Vec<BranchSchema>>,
    geometric: Option<GeometricSchema>,
    lorenz: Option<LorenzSchema>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchSchema {
    image: [f64; 2],
    roof: RoofSchema,
    #[serde(default)]
    weight: f64,
    #[serde(default)]
    decreasing: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RoofSchema {
    Constant(f64),
    Affine { base: f64, slope: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometricSchema {
    theta: f64,
    #[serde(default)]
    log_coeff: f64,
    #[serde(default)]
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LorenzSchema {
    ratio: f64,
    roof_base: f64,
    roof_step: f64,
    #[serde(default)]
    v_sigma: f64,
    #[serde(default)]
    w_offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSchema {
    kind: String,
    value: Option<f64>,
    coeff: Option<f64>,
    s_coeff: Option<f64>,
    singular_value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkewSchema {
    stable_rate: f64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFile(msg.into())
}

/// Parse a model file from text.
pub fn parse_model(text: &str) -> Result<(SuspensionSystem, Potential)> {
    let file: FileSchema = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.schema != SCHEMA_VERSION {
        return Err(bad(format!(
            "schema version {} not supported, expected {SCHEMA_VERSION}",
            file.schema
        )));
    }
    let sys = build_system(&file.system)?;
    let sys = match file.skew {
        Some(skew) => sys.with_stable_rate(skew.stable_rate)?,
        None => sys,
    };
    let v = match file.potential {
        Some(p) => build_potential(&p)?,
        None => Potential::zero(),
    };
    Ok((sys, v))
}

/// Load and parse a model file from disk.
pub fn load_model(path: &Path) -> Result<(SuspensionSystem, Potential)> {
    let text = fs::read_to_string(path)
        .map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

fn build_system(s: &SystemSchema) -> Result<SuspensionSystem> {
    match s.family.as_str() {
        "finite-linear" => {
            let specs = s
                .branches
                .as_ref()
                .ok_or_else(|| bad("finite-linear needs a [[system.branches]] list"))?;
            if s.geometric.is_some() || s.lorenz.is_some() {
                return Err(bad("finite-linear takes only a branch list"));
            }
            let [lo, hi] = s.base.unwrap_or([0.0, 1.0]);
            let base = BaseInterval::new(lo, hi)?;
            let specs = specs
                .iter()
                .map(|b| {
                    let roof = match b.roof {
                        RoofSchema::Constant(c) => Roof::Constant(c),
                        RoofSchema::Affine { base, slope } => Roof::Affine { base, slope },
                    };
                    BranchSpec {
                        image: (b.image[0], b.image[1]),
                        roof,
                        weight: b.weight,
                        decreasing: b.decreasing,
                    }
                })
                .collect();
            SuspensionSystem::finite(base, specs)
        }
        "geometric-countable" => {
            let g = s
                .geometric
                .as_ref()
                .ok_or_else(|| bad("geometric-countable needs a [system.geometric] table"))?;
            if s.branches.is_some() || s.lorenz.is_some() || s.base.is_some() {
                return Err(bad("geometric-countable takes only its parameter table"));
            }
            SuspensionSystem::geometric(GeometricFamily {
                theta: g.theta,
                log_coeff: g.log_coeff,
                offset: g.offset,
            })
        }
        "lorenz-template" => {
            let l = s
                .lorenz
                .as_ref()
                .ok_or_else(|| bad("lorenz-template needs a [system.lorenz] table"))?;
            if s.branches.is_some() || s.geometric.is_some() || s.base.is_some() {
                return Err(bad("lorenz-template takes only its parameter table"));
            }
            SuspensionSystem::lorenz(LorenzFamily {
                ratio: l.ratio,
                roof_base: l.roof_base,
                roof_step: l.roof_step,
                v_sigma: l.v_sigma,
                w_offset: l.w_offset,
            })
        }
        other => Err(bad(format!(
            "unknown family {other:?}; expected finite-linear, geometric-countable, \
             or lorenz-template"
        ))),
    }
}

fn build_potential(p: &PotentialSchema) -> Result<Potential> {
    let mut pot = match p.kind.as_str() {
        "zero" => {
            if p.value.is_some() || p.coeff.is_some() {
                return Err(bad("zero potential takes no parameters"));
            }
            Potential::zero()
        }
        "constant" => {
            let c = p.value.ok_or_else(|| bad("constant potential needs value"))?;
            if p.coeff.is_some() {
                return Err(bad("constant potential takes value, not coeff"));
            }
            Potential::constant(c)
        }
        "branch-weights" => {
            if p.value.is_some() || p.coeff.is_some() {
                return Err(bad("branch-weights potential takes no parameters"));
            }
            Potential::branch_weights()
        }
        "linear" => {
            let c = p.coeff.ok_or_else(|| bad("linear potential needs coeff"))?;
            if p.value.is_some() {
                return Err(bad("linear potential takes coeff, not value"));
            }
            Potential::linear_x(c)
        }
        other => Err(bad(format!(
            "unknown potential kind {other:?}; expected zero, constant, \
             branch-weights, or linear"
        )))?,
    };
    if let Some(sc) = p.s_coeff {
        pot = pot.with_s_coeff(sc);
    }
    if let Some(sv) = p.singular_value {
        pot = pot.with_singular_value(sv);
    }
    Ok(pot)
}

// SPDX-License-Identifier: Apache-2.0

//! The technology interface: standard cells, metal layers, pitches and
//! named constants of a process kit, read from `tech.yml`.
//!
//! ```yaml
//! stdcells: [INV_X1, NAND2_X1, DFF_X1]
//! metal_layers: [M1, M2, M3]
//! track_pitch_x: 0.19
//! track_pitch_y: 0.14
//! time_unit: ns
//! constants:
//!   tile_height: 92.4
//! lef: [cells.lef]
//! ```
//!
//! Macro names from the optional `lef` files are added to `stdcells`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::node::Scalar;
use crate::tcl::{format_double, list_format, TclValue};

#[derive(Debug, Error)]
pub enum TechError {
    #[error("{}: technology file not found", .0.display())]
    MissingTechFile(PathBuf),
    #[error("{}:{line}: malformed technology file: {message}", path.display())]
    MalformedTechFile {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {axis} must be positive, got {value}", path.display())]
    NonPositivePitch {
        path: PathBuf,
        axis: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechnologyInterface {
    pub stdcells: BTreeSet<String>,
    pub metal_layers: Vec<String>,
    pub track_pitch_x: f64,
    pub track_pitch_y: f64,
    pub time_unit: String,
    pub constants: BTreeMap<String, Scalar>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTech {
    #[serde(default)]
    stdcells: Vec<String>,
    metal_layers: Vec<String>,
    track_pitch_x: f64,
    track_pitch_y: f64,
    time_unit: String,
    #[serde(default)]
    constants: BTreeMap<String, Scalar>,
    #[serde(default)]
    lef: Vec<PathBuf>,
}

/// Read `tech.yml` (and any LEF files it lists, relative to its directory).
pub fn load_technology_interface(path: &Path) -> Result<TechnologyInterface, TechError> {
    let text = fs::read_to_string(path).map_err(|_| TechError::MissingTechFile(path.to_path_buf()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_tech_text(&text, path, base)
}

/// Parse technology text. `path` labels errors; `lef` entries resolve
/// against `base`.
pub fn parse_tech_text(text: &str, path: &Path, base: &Path) -> Result<TechnologyInterface, TechError> {
    let malformed = |line: usize, message: String| TechError::MalformedTechFile {
        path: path.to_path_buf(),
        line,
        message,
    };
    let raw: RawTech = serde_yaml::from_str(text).map_err(|e| {
        malformed(e.location().map_or(0, |l| l.line()), e.to_string())
    })?;
    for (axis, value) in [("track_pitch_x", raw.track_pitch_x), ("track_pitch_y", raw.track_pitch_y)] {
        if value.is_nan() || value <= 0.0 || value.is_infinite() {
            return Err(TechError::NonPositivePitch {
                path: path.to_path_buf(),
                axis,
                value,
            });
        }
    }
    if raw.metal_layers.is_empty() {
        return Err(malformed(0, "metal_layers must not be empty".into()));
    }
    let mut stdcells = BTreeSet::new();
    for cell in raw.stdcells {
        if !stdcells.insert(cell.clone()) {
            return Err(malformed(0, format!("standard cell `{cell}` listed twice")));
        }
    }
    let mut layers = BTreeSet::new();
    for layer in &raw.metal_layers {
        if !layers.insert(layer) {
            return Err(malformed(0, format!("metal layer `{layer}` listed twice")));
        }
    }
    for (name, value) in &raw.constants {
        if !matches!(value, Scalar::Int(_) | Scalar::Float(_)) {
            return Err(malformed(0, format!("constant `{name}` is not a number")));
        }
    }
    for lef in raw.lef {
        let lef_path = base.join(&lef);
        let text = fs::read_to_string(&lef_path)
            .map_err(|e| malformed(0, format!("cannot read {}: {e}", lef_path.display())))?;
        stdcells.extend(lef_macro_names(&text));
    }
    Ok(TechnologyInterface {
        stdcells,
        metal_layers: raw.metal_layers,
        track_pitch_x: raw.track_pitch_x,
        track_pitch_y: raw.track_pitch_y,
        time_unit: raw.time_unit,
        constants: raw.constants,
    })
}

/// Names declared by `MACRO <name>` headers in LEF text, in order of first
/// appearance. Everything else in the file is ignored.
pub fn lef_macro_names(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        if tokens.next() == Some("MACRO") {
            if let Some(name) = tokens.next() {
                if seen.insert(name.to_string()) {
                    out.push(name.to_string());
                }
            }
        }
    }
    out
}

impl TechnologyInterface {
    /// Variables every node's static context starts with.
    pub fn bindings(&self) -> Vec<(String, TclValue)> {
        let mut out = vec![
            ("track_pitch_x".to_string(), TclValue::new(format_double(self.track_pitch_x))),
            ("track_pitch_y".to_string(), TclValue::new(format_double(self.track_pitch_y))),
            ("time_unit".to_string(), TclValue::new(self.time_unit.clone())),
            ("metal_layers".to_string(), TclValue::new(list_format(&self.metal_layers))),
        ];
        out.extend(
            self.constants
                .iter()
                .map(|(k, v)| (k.clone(), TclValue::new(v.render()))),
        );
        out
    }
}

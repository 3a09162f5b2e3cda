//! Bundled scenarios reproducing the Van der Pol network studies.

use crate::scenario::{Scenario, ScenarioError};

pub struct Preset {
    pub name: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "vdp_nodes",
        toml: include_str!("../scenarios/vdp_nodes.toml"),
    },
    Preset {
        name: "vdp_edges",
        toml: include_str!("../scenarios/vdp_edges.toml"),
    },
    Preset {
        name: "vdp_dynedges",
        toml: include_str!("../scenarios/vdp_dynedges.toml"),
    },
    Preset {
        name: "vdp_dynedges_im",
        toml: include_str!("../scenarios/vdp_dynedges_im.toml"),
    },
    Preset {
        name: "vdp_dynedges_adaptive",
        toml: include_str!("../scenarios/vdp_dynedges_adaptive.toml"),
    },
    Preset {
        name: "vdp_dynedges_adaptive_im",
        toml: include_str!("../scenarios/vdp_dynedges_adaptive_im.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Loads a bundled preset by name.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let p = find(name).ok_or_else(|| ScenarioError::Validation {
        path: "scenario".into(),
        message: format!("unknown preset `{name}`"),
    })?;
    Scenario::from_toml(p.toml)
}

/// A path to a TOML file, or else a preset name.
pub fn resolve(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = std::path::Path::new(arg);
    if path.is_file() {
        Scenario::load(path)
    } else if let Some(p) = find(arg) {
        Scenario::from_toml(p.toml)
    } else {
        Err(ScenarioError::Io {
            path: arg.into(),
            message: "no such file and no preset with that name".into(),
        })
    }
}

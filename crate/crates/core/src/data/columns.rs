use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelGrouping, Cluster, SubCluster, CLUSTER_NAMES, INPUT_CHANNELS};

/// Column map matching the JIGSAWS kinematics layout.
pub const DEFAULT_COLUMN_MAP_JSON: &str = include_str!("../../data/jigsaws_columns.json");

/// 0-based file columns of one manipulator's variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorColumns {
    pub name: String,
    pub xyz: Vec<usize>,
    pub rotation: Vec<usize>,
    pub linear_velocity: Vec<usize>,
    pub rotational_velocity: Vec<usize>,
    pub gripper: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub manipulators: Vec<ManipulatorColumns>,
}

impl ColumnMap {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("column map: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn default_column_map() -> ColumnMap {
    ColumnMap::from_json(DEFAULT_COLUMN_MAP_JSON).expect("bundled column map parses")
}

/// Grouping for the bundled JIGSAWS column map.
pub fn default_grouping() -> ChannelGrouping {
    canonical_grouping(&default_column_map()).expect("bundled column map is valid")
}

/// Builds the 4 x 5 grouping from a column map. Manipulators may appear in
/// any order in the map; clusters are always emitted as ML, MR, SL, SR with
/// sub-clusters xyz, linear velocity, rotational velocity, rotation, gripper.
pub fn canonical_grouping(map: &ColumnMap) -> Result<ChannelGrouping> {
    let mut clusters = Vec::with_capacity(CLUSTER_NAMES.len());
    for name in CLUSTER_NAMES {
        let matches: Vec<&ManipulatorColumns> =
            map.manipulators.iter().filter(|m| m.name == name).collect();
        let m = match matches.as_slice() {
            [m] => *m,
            [] => {
                return Err(Error::config(format!(
                    "column map has no manipulator named {name}"
                )))
            }
            _ => {
                return Err(Error::config(format!(
                    "column map lists manipulator {name} more than once"
                )))
            }
        };
        let sub = |role: &str, cols: &[usize]| SubCluster {
            name: role.to_string(),
            channels: cols.to_vec(),
        };
        clusters.push(Cluster {
            name: name.to_string(),
            sub_clusters: vec![
                sub("xyz", &m.xyz),
                sub("linear_velocity", &m.linear_velocity),
                sub("rotational_velocity", &m.rotational_velocity),
                sub("rotation", &m.rotation),
                sub("gripper", &m.gripper),
            ],
        });
    }
    if let Some(extra) = map
        .manipulators
        .iter()
        .find(|m| !CLUSTER_NAMES.contains(&m.name.as_str()))
    {
        return Err(Error::config(format!(
            "unknown manipulator '{}' in column map",
            extra.name
        )));
    }
    let total: usize = clusters
        .iter()
        .flat_map(|c| &c.sub_clusters)
        .map(|s| s.channels.len())
        .sum();
    if total != INPUT_CHANNELS {
        return Err(Error::config(format!(
            "column map assigns {total} columns, expected {INPUT_CHANNELS}"
        )));
    }
    ChannelGrouping::new(clusters)
}

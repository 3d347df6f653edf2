use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_CHANNELS: usize = 76;

/// Manipulator clusters in concatenation order.
pub const CLUSTER_NAMES: [&str; 4] = ["ML", "MR", "SL", "SR"];

/// Sub-cluster roles in declaration order, with their channel counts.
pub const SUB_CLUSTER_ROLES: [(&str, usize); 5] = [
    ("xyz", 3),
    ("linear_velocity", 3),
    ("rotational_velocity", 3),
    ("rotation", 9),
    ("gripper", 1),
];

pub const CHANNELS_PER_CLUSTER: usize = 19;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubCluster {
    pub name: String,
    pub channels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub name: String,
    pub sub_clusters: Vec<SubCluster>,
}

/// Maps the 76 input channels onto 4 manipulator clusters of 5 sub-clusters.
///
/// Construction validates the structure, so a value of this type always
/// covers every input channel exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelGrouping {
    clusters: Vec<Cluster>,
}

impl<'de> Deserialize<'de> for ChannelGrouping {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            clusters: Vec<Cluster>,
        }
        let raw = Raw::deserialize(d)?;
        ChannelGrouping::new(raw.clusters).map_err(serde::de::Error::custom)
    }
}

impl ChannelGrouping {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.len() != CLUSTER_NAMES.len() {
            return Err(Error::config(format!(
                "expected {} clusters, got {}",
                CLUSTER_NAMES.len(),
                clusters.len()
            )));
        }
        let mut seen = [false; INPUT_CHANNELS];
        for (cluster, expected_name) in clusters.iter().zip(CLUSTER_NAMES) {
            if cluster.name != expected_name {
                return Err(Error::config(format!(
                    "cluster '{}' found where '{expected_name}' was expected",
                    cluster.name
                )));
            }
            if cluster.sub_clusters.len() != SUB_CLUSTER_ROLES.len() {
                return Err(Error::config(format!(
                    "cluster {} has {} sub-clusters, expected {}",
                    cluster.name,
                    cluster.sub_clusters.len(),
                    SUB_CLUSTER_ROLES.len()
                )));
            }
            for (sub, (role, size)) in cluster.sub_clusters.iter().zip(SUB_CLUSTER_ROLES) {
                if sub.name != role {
                    return Err(Error::config(format!(
                        "cluster {}: sub-cluster '{}' found where '{role}' was expected",
                        cluster.name, sub.name
                    )));
                }
                if sub.channels.len() != size {
                    return Err(Error::config(format!(
                        "{}/{} has {} channels, expected {size}",
                        cluster.name,
                        sub.name,
                        sub.channels.len()
                    )));
                }
                for &ch in &sub.channels {
                    if ch >= INPUT_CHANNELS {
                        return Err(Error::config(format!(
                            "{}/{}: channel {ch} out of range 0..{INPUT_CHANNELS}",
                            cluster.name, sub.name
                        )));
                    }
                    if std::mem::replace(&mut seen[ch], true) {
                        return Err(Error::config(format!(
                            "channel {ch} assigned more than once ({}/{})",
                            cluster.name, sub.name
                        )));
                    }
                }
            }
        }
        // 76 in-range, distinct indices cover 0..76 by counting.
        Ok(Self { clusters })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn sub_clusters(&self) -> impl Iterator<Item = (&Cluster, &SubCluster)> {
        self.clusters
            .iter()
            .flat_map(|c| c.sub_clusters.iter().map(move |s| (c, s)))
    }

    pub fn sub_cluster(&self, cluster: &str, role: &str) -> Option<&SubCluster> {
        self.clusters
            .iter()
            .find(|c| c.name == cluster)?
            .sub_clusters
            .iter()
            .find(|s| s.name == role)
    }

    /// Index of the cluster owning an input channel.
    pub fn cluster_of(&self, channel: usize) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.sub_clusters.iter().any(|s| s.channels.contains(&channel)))
    }

    /// Flat sub-cluster index (0..20) owning an input channel.
    pub fn sub_cluster_of(&self, channel: usize) -> Option<usize> {
        self.sub_clusters()
            .position(|(_, s)| s.channels.contains(&channel))
    }
}

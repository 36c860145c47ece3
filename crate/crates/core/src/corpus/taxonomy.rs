// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

/// Temperatures at which every prompt is run.
pub const TEMPERATURES: [f64; 3] = [0.0, 0.3, 0.7];

/// The fourteen prompt groups, ordered by taxonomy level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "abl-ctrl")]
    AblCtrl,
    #[serde(rename = "undecid-nonref")]
    UndecidNonref,
    #[serde(rename = "presupposition")]
    Presupposition,
    #[serde(rename = "complex-nonref")]
    ComplexNonref,
    #[serde(rename = "nonsense")]
    Nonsense,
    #[serde(rename = "control")]
    Control,
    #[serde(rename = "grounded-sr")]
    GroundedSr,
    #[serde(rename = "paradox")]
    Paradox,
    #[serde(rename = "goedelian")]
    Goedelian,
    #[serde(rename = "fixed-point")]
    FixedPoint,
    #[serde(rename = "mutual-cyclic")]
    MutualCyclic,
    #[serde(rename = "infinite-regress")]
    InfiniteRegress,
    #[serde(rename = "meta-llm")]
    MetaLlm,
    #[serde(rename = "abl-sr")]
    AblSr,
}

impl Group {
    pub const ALL: [Group; 14] = [
        Group::AblCtrl,
        Group::UndecidNonref,
        Group::Presupposition,
        Group::ComplexNonref,
        Group::Nonsense,
        Group::Control,
        Group::GroundedSr,
        Group::Paradox,
        Group::Goedelian,
        Group::FixedPoint,
        Group::MutualCyclic,
        Group::InfiniteRegress,
        Group::MetaLlm,
        Group::AblSr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Group::AblCtrl => "abl-ctrl",
            Group::UndecidNonref => "undecid-nonref",
            Group::Presupposition => "presupposition",
            Group::ComplexNonref => "complex-nonref",
            Group::Nonsense => "nonsense",
            Group::Control => "control",
            Group::GroundedSr => "grounded-sr",
            Group::Paradox => "paradox",
            Group::Goedelian => "goedelian",
            Group::FixedPoint => "fixed-point",
            Group::MutualCyclic => "mutual-cyclic",
            Group::InfiniteRegress => "infinite-regress",
            Group::MetaLlm => "meta-llm",
            Group::AblSr => "abl-sr",
        }
    }

    pub fn from_label(label: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.label() == label)
    }

    /// Taxonomy level, -5 through 8.
    pub fn level(self) -> i32 {
        Group::ALL.iter().position(|&g| g == self).unwrap() as i32 - 5
    }

    /// Prompts per group in a complete 300-prompt inventory.
    pub fn full_count(self) -> usize {
        match self {
            Group::AblCtrl | Group::AblSr => 30,
            _ => 20,
        }
    }

    pub fn is_paired(self) -> bool {
        matches!(self, Group::AblCtrl | Group::AblSr)
    }

    pub fn cluster(self) -> Cluster {
        cluster_of(self)
    }
}

/// Analytical clusters over groups. `None` covers groups outside the four clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cluster {
    C1,
    C2,
    C3,
    C4,
    #[serde(rename = "NONE")]
    None,
}

impl Cluster {
    pub const ALL: [Cluster; 5] = [Cluster::C1, Cluster::C2, Cluster::C3, Cluster::C4, Cluster::None];

    pub fn label(self) -> &'static str {
        match self {
            Cluster::C1 => "C1",
            Cluster::C2 => "C2",
            Cluster::C3 => "C3",
            Cluster::C4 => "C4",
            Cluster::None => "NONE",
        }
    }

    pub fn from_label(label: &str) -> Option<Cluster> {
        Cluster::ALL.into_iter().find(|c| c.label() == label)
    }
}

/// Fixed group-to-cluster mapping.
///
/// C1 stable non-self-referential, C2 stable self-referential, C3 closable hard
/// reasoning, C4 non-closing truth recursion.
pub fn cluster_of(group: Group) -> Cluster {
    match group {
        Group::Control | Group::Presupposition => Cluster::C1,
        Group::GroundedSr | Group::MetaLlm => Cluster::C2,
        Group::ComplexNonref | Group::FixedPoint => Cluster::C3,
        Group::Paradox | Group::Goedelian | Group::MutualCyclic | Group::InfiniteRegress => Cluster::C4,
        Group::AblCtrl | Group::UndecidNonref | Group::Nonsense | Group::AblSr => Cluster::None,
    }
}

/// One manifest entry: a prompt run once under one model and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptMeta {
    pub prompt_id: String,
    pub text: String,
    pub level: i32,
    pub group: Group,
    pub cluster: Cluster,
    pub temperature: f64,
    pub model_id: String,
    #[serde(default)]
    pub pair_id: Option<String>,
    pub response_text: String,
    pub prompt_token_count: usize,
    pub response_token_count: usize,
}

impl PromptMeta {
    pub fn derived_cluster(&self) -> Cluster {
        cluster_of(self.group)
    }

    pub fn is_t0(&self) -> bool {
        self.temperature.abs() < 1e-9
    }

    /// Checks the per-entry invariants (cluster, level, temperature, pairing level).
    pub fn check(&self) -> Result<(), super::IntegrityIssue> {
        use super::IntegrityIssue as I;
        if self.cluster != self.derived_cluster() {
            return Err(I::ClusterMismatch {
                prompt_id: self.prompt_id.clone(),
                group: self.group,
                stored: self.cluster,
                derived: self.derived_cluster(),
            });
        }
        if self.level != self.group.level() {
            return Err(I::LevelMismatch { prompt_id: self.prompt_id.clone(), group: self.group, level: self.level });
        }
        if !TEMPERATURES.iter().any(|t| (t - self.temperature).abs() < 1e-9) {
            return Err(I::BadTemperature { prompt_id: self.prompt_id.clone(), temperature: self.temperature });
        }
        match (&self.pair_id, self.group.is_paired()) {
            (Some(_), false) => {
                return Err(I::PairOnWrongLevel { prompt_id: self.prompt_id.clone(), level: self.level })
            }
            (None, true) => return Err(I::MissingPairId { prompt_id: self.prompt_id.clone(), level: self.level }),
            _ => {}
        }
        if self.prompt_token_count == 0 {
            return Err(I::PromptTokenCount { prompt_id: self.prompt_id.clone() });
        }
        Ok(())
    }
}

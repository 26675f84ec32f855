//! Per-dataset presets for the three shipped benchmark corpora: GAN
//! hyperparameters, class partitions, and synthetic-sample plans.
//!
//! The UNSW preset keeps its published Adam betas (0.02 / 0.009) verbatim
//! even though they are far outside customary ranges; see
//! [`DatasetPreset::notes`].

use crate::dualnet::PartitionPolicy;
use crate::wcgan::{AugmentationPlan, GanConfig, NetworkAdam};

/// Everything dataset-specific the pipeline needs.
#[derive(Debug, Clone)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub label_column: &'static str,
    pub gan: GanConfig,
    pub partition: PartitionPolicy,
    pub augmentation: AugmentationPlan,
    pub k_features: usize,
    /// Caveats worth surfacing when the preset is used.
    pub notes: &'static [&'static str],
}

fn plan(minor_classes: &[&str], count: usize) -> AugmentationPlan {
    AugmentationPlan {
        synthetic_counts: minor_classes
            .iter()
            .map(|name| (name.to_string(), count))
            .collect(),
    }
}

const UNSW_MINOR: [&str; 4] = ["Analysis", "Backdoor", "Shellcode", "Worms"];

pub fn unsw_nb15() -> DatasetPreset {
    DatasetPreset {
        name: "unsw_nb15",
        label_column: "attack_cat",
        gan: GanConfig {
            batch_size: 128,
            generator_adam: NetworkAdam {
                learning_rate: 1e-4,
                beta1: 0.02,
                beta2: 0.009,
            },
            critic_adam: NetworkAdam {
                learning_rate: 1e-4,
                beta1: 0.02,
                beta2: 0.009,
            },
            ..GanConfig::default()
        },
        partition: PartitionPolicy::Explicit {
            normal: "Normal".into(),
            major: ["Generic", "Exploits", "Fuzzers", "DoS", "Reconnaissance"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            minor: UNSW_MINOR.iter().map(|s| s.to_string()).collect(),
        },
        augmentation: plan(&UNSW_MINOR, 4000),
        k_features: 30,
        notes: &[
            "adam beta1=0.02 / beta2=0.009 are the published values for this corpus; \
             they are far outside customary Adam ranges",
        ],
    }
}

const CIC_MINOR: [&str; 11] = [
    "Bot",
    "DoS GoldenEye",
    "DoS Slowhttptest",
    "DoS Slowloris",
    "FTP Patator",
    "Heartbleed",
    "Infiltration",
    "SSH Patator",
    "Web Attack - Brute Force",
    "Web Attack - SQL Injection",
    "Web Attack - XSS",
];

pub fn cic_ids2017() -> DatasetPreset {
    DatasetPreset {
        name: "cic_ids2017",
        label_column: "Label",
        gan: GanConfig::default(),
        partition: PartitionPolicy::Explicit {
            normal: "BENIGN".into(),
            major: ["DoS Hulk", "DDoS", "PortScan"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            minor: CIC_MINOR.iter().map(|s| s.to_string()).collect(),
        },
        augmentation: plan(&CIC_MINOR, 4000),
        k_features: 30,
        notes: &[],
    }
}

const IOTID20_MINOR: [&str; 2] = ["Scan_Hostport", "MITM_ARP_Spoofing"];

pub fn iotid20() -> DatasetPreset {
    DatasetPreset {
        name: "iotid20",
        label_column: "Sub_Cat",
        gan: GanConfig::default(),
        partition: PartitionPolicy::Explicit {
            normal: "Normal".into(),
            major: [
                "MiraiUDP_Flooding",
                "DoSSynflooding",
                "MiraiHostbruteforceg",
                "MiraiAckflooding",
                "MiraiHTTP_Flooding",
                "Scan_Port_OS",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            minor: IOTID20_MINOR.iter().map(|s| s.to_string()).collect(),
        },
        augmentation: plan(&IOTID20_MINOR, 12_000),
        k_features: 30,
        notes: &[],
    }
}

pub fn by_name(name: &str) -> Option<DatasetPreset> {
    match name {
        "unsw_nb15" | "unsw" => Some(unsw_nb15()),
        "cic_ids2017" | "cic" => Some(cic_ids2017()),
        "iotid20" | "iot" => Some(iotid20()),
        _ => None,
    }
}

pub fn all() -> Vec<DatasetPreset> {
    vec![unsw_nb15(), cic_ids2017(), iotid20()]
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    RabbaniI,
    RabbaniII,
    DukeI,
    DukeII,
    DukeIII,
    #[serde(rename = "BIOMISA")]
    Biomisa,
    Zhang,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl DatasetId {
    /// The seven public datasets, synthetic excluded.
    pub const PUBLISHED: [DatasetId; 7] = [
        DatasetId::RabbaniI,
        DatasetId::RabbaniII,
        DatasetId::DukeI,
        DatasetId::DukeII,
        DatasetId::DukeIII,
        DatasetId::Biomisa,
        DatasetId::Zhang,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::RabbaniI => "RabbaniI",
            DatasetId::RabbaniII => "RabbaniII",
            DatasetId::DukeI => "DukeI",
            DatasetId::DukeII => "DukeII",
            DatasetId::DukeIII => "DukeIII",
            DatasetId::Biomisa => "BIOMISA",
            DatasetId::Zhang => "Zhang",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Self::PUBLISHED.as_slice(), &[DatasetId::Synthetic]]
            .concat()
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "fundus")]
    Fundus,
    #[serde(rename = "OCT")]
    Oct,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Fundus => "fundus",
            Modality::Oct => "OCT",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fundus" => Ok(Modality::Fundus),
            "OCT" => Ok(Modality::Oct),
            other => Err(format!("unknown modality `{other}` (expected fundus or OCT)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

/// One scan listed in a manifest. A record without `mask_ref` is healthy:
/// its ground truth is all background.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_id: String,
    pub dataset_id: DatasetId,
    pub modality: Modality,
    pub image_ref: PathBuf,
    pub mask_ref: Option<PathBuf>,
    pub split: Split,
    pub pathology: String,
}

impl ScanRecord {
    pub fn is_healthy(&self) -> bool {
        self.mask_ref.is_none()
    }

    pub fn image_path(&self, root: &Path) -> PathBuf {
        root.join(&self.image_ref)
    }

    pub fn mask_path(&self, root: &Path) -> Option<PathBuf> {
        self.mask_ref.as_ref().map(|m| root.join(m))
    }
}

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::error::Error;
use crate::record::DatasetId;

/// Dataset families used by the transferability grid. Scanners within a
/// family share image characteristics, so they are never paired with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupId {
    R,
    D,
    Z,
    B,
}

impl GroupId {
    pub const ALL: [GroupId; 4] = [GroupId::R, GroupId::D, GroupId::Z, GroupId::B];

    pub fn members(self) -> &'static [DatasetId] {
        match self {
            GroupId::R => &[DatasetId::RabbaniI, DatasetId::RabbaniII],
            GroupId::D => &[DatasetId::DukeI, DatasetId::DukeII, DatasetId::DukeIII],
            GroupId::Z => &[DatasetId::Zhang],
            GroupId::B => &[DatasetId::Biomisa],
        }
    }

    pub fn of(dataset: DatasetId) -> Option<GroupId> {
        GroupId::ALL
            .into_iter()
            .find(|g| g.members().contains(&dataset))
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::R => "Rabbani",
            GroupId::D => "Duke",
            GroupId::Z => "Zhang",
            GroupId::B => "BIOMISA",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            GroupId::R => "R",
            GroupId::D => "D",
            GroupId::Z => "Z",
            GroupId::B => "B",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        GroupId::ALL
            .into_iter()
            .find(|g| g.code().eq_ignore_ascii_case(s) || g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown dataset group `{s}`")]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetGroup {
    pub group_id: GroupId,
    pub members: BTreeSet<DatasetId>,
}

impl From<GroupId> for DatasetGroup {
    fn from(group_id: GroupId) -> Self {
        DatasetGroup {
            group_id,
            members: group_id.members().iter().copied().collect(),
        }
    }
}

/// Records of `manifest` belonging to `group_id`, splits preserved.
pub fn group(manifest: &DatasetManifest, group_id: GroupId) -> DatasetManifest {
    let members = group_id.members();
    manifest.filter(|r| members.contains(&r.dataset_id))
}

//! Lesion class indexing and display colors.
//!
//! The index order is part of the on-disk mask format: a mask pixel with
//! value 3 is hard exudate in every file this crate reads or writes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of segmentation classes, background included.
pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LesionClass {
    #[serde(rename = "background")]
    Background,
    #[serde(rename = "IRF")]
    Irf,
    #[serde(rename = "SRF")]
    Srf,
    #[serde(rename = "HE")]
    He,
    #[serde(rename = "drusen")]
    Drusen,
    #[serde(rename = "CA")]
    Ca,
}

impl LesionClass {
    /// All classes in index order.
    pub const ALL: [LesionClass; NUM_CLASSES] = [
        LesionClass::Background,
        LesionClass::Irf,
        LesionClass::Srf,
        LesionClass::He,
        LesionClass::Drusen,
        LesionClass::Ca,
    ];

    /// The five lesion classes, background excluded.
    pub const LESIONS: [LesionClass; 5] = [
        LesionClass::Irf,
        LesionClass::Srf,
        LesionClass::He,
        LesionClass::Drusen,
        LesionClass::Ca,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LesionClass::Background => "background",
            LesionClass::Irf => "IRF",
            LesionClass::Srf => "SRF",
            LesionClass::He => "HE",
            LesionClass::Drusen => "drusen",
            LesionClass::Ca => "CA",
        }
    }

    pub fn is_lesion(self) -> bool {
        self != LesionClass::Background
    }
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LesionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown lesion class `{s}`")]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLUE: Rgb = Rgb([0, 0, 255]);
    pub const RED: Rgb = Rgb([255, 0, 0]);
    pub const YELLOW: Rgb = Rgb([255, 255, 0]);
    pub const GREEN: Rgb = Rgb([0, 255, 0]);
    pub const PINK: Rgb = Rgb([255, 105, 180]);
}

/// Overlay color of each lesion class. Background is never painted.
pub fn canonical_color(class: LesionClass) -> Option<Rgb> {
    match class {
        LesionClass::Background => None,
        LesionClass::Irf => Some(Rgb::RED),
        LesionClass::Srf => Some(Rgb::YELLOW),
        LesionClass::He => Some(Rgb::BLUE),
        LesionClass::Drusen => Some(Rgb::PINK),
        LesionClass::Ca => Some(Rgb::GREEN),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub index: u8,
    pub name: LesionClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb>,
}

/// The fixed six-entry class table. Construct with [`default_class_map`] or
/// [`ClassMap::from_toml`]; both enforce the invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassMap {
    #[serde(rename = "class")]
    entries: Vec<ClassEntry>,
}

pub fn default_class_map() -> ClassMap {
    ClassMap {
        entries: LesionClass::ALL
            .into_iter()
            .map(|name| ClassEntry {
                index: name.index(),
                name,
                color: canonical_color(name),
            })
            .collect(),
    }
}

#[derive(Deserialize)]
struct ClassMapFile {
    #[serde(rename = "class")]
    entries: Vec<ClassEntry>,
}

impl ClassMap {
    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, index: u8) -> Option<&ClassEntry> {
        self.entries.get(index as usize)
    }

    pub fn color(&self, index: u8) -> Option<Rgb> {
        self.entry(index).and_then(|e| e.color)
    }

    pub fn contains_index(&self, index: u8) -> bool {
        (index as usize) < self.entries.len()
    }

    /// Class whose overlay color is exactly `rgb`, if any.
    pub fn class_for_color(&self, rgb: Rgb) -> Option<u8> {
        self.entries
            .iter()
            .find(|e| e.color == Some(rgb))
            .map(|e| e.index)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("class map serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ClassMapFile = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        let map = ClassMap {
            entries: file.entries,
        };
        let problems = map.violations();
        if problems.is_empty() {
            Ok(map)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.entries.len() != NUM_CLASSES {
            problems.push(format!(
                "class map has {} entries, expected {NUM_CLASSES}",
                self.entries.len()
            ));
        }
        for (position, entry) in self.entries.iter().enumerate() {
            if entry.index as usize != position {
                problems.push(format!(
                    "entry {position} has index {}, indices must be contiguous from 0",
                    entry.index
                ));
            }
            if entry.name.index() != entry.index {
                problems.push(format!(
                    "class {} must have index {}, found {}",
                    entry.name,
                    entry.name.index(),
                    entry.index
                ));
            }
            if entry.color != canonical_color(entry.name) {
                problems.push(format!(
                    "class {} has color {:?}, expected {:?}",
                    entry.name,
                    entry.color,
                    canonical_color(entry.name)
                ));
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_layout() {
        let map = default_class_map();
        assert_eq!(map.len(), 6);
        assert_eq!(map.entry(0).unwrap().name, LesionClass::Background);
        assert_eq!(map.entry(0).unwrap().color, None);
        let irf = map.entry(1).unwrap();
        assert_eq!(irf.name, LesionClass::Irf);
        assert_eq!(irf.color, Some(Rgb::RED));
        let indices: Vec<u8> = map.entries().iter().map(|e| e.index).collect();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn figure_colors() {
        let map = default_class_map();
        assert_eq!(map.color(LesionClass::He.index()), Some(Rgb([0, 0, 255])));
        assert_eq!(map.color(LesionClass::Srf.index()), Some(Rgb([255, 255, 0])));
        assert_eq!(map.color(LesionClass::Ca.index()), Some(Rgb([0, 255, 0])));
        assert_eq!(map.color(LesionClass::Drusen.index()), Some(Rgb([255, 105, 180])));
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let map = default_class_map();
        let text = map.to_toml();
        let back = ClassMap::from_toml(&text).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn rejects_reordered_classes() {
        let text = default_class_map().to_toml().replace("\"IRF\"", "\"SRF\"");
        assert!(matches!(ClassMap::from_toml(&text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn color_lookup_inverts() {
        let map = default_class_map();
        for class in LesionClass::LESIONS {
            let rgb = map.color(class.index()).unwrap();
            assert_eq!(map.class_for_color(rgb), Some(class.index()));
        }
    }
}

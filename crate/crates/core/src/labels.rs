//! Label system bridging per-point segmentation classes to the object
//! classes used for mesh reconstruction.
//!
//! The default table has 25 segmentation classes: two stuff classes
//! (`wall`, `floor`) and 23 object classes. Each object class maps to one
//! of the 8 reconstruction classes or to nothing. A table can be replaced
//! with a plain-text file of `seg_name<TAB>recon_name_or_NONE` lines.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`LabelSystem::seg_categories`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegLabel(pub u16);

/// Index into [`LabelSystem::recon_categories`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReconLabel(pub u16);

impl fmt::Display for ReconLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The reconstruction classes, in reporting order.
pub const RECON_CATEGORIES: [&str; 8] = [
    "table",
    "chair",
    "bookshelf",
    "sofa",
    "trash bin",
    "cabinet",
    "display",
    "bathtub",
];

/// Built-in segmentation table: `(name, reconstruction class or None)`.
const DEFAULT_TABLE: [(&str, Option<&str>); 25] = [
    ("wall", None),
    ("floor", None),
    ("cabinet", Some("cabinet")),
    ("bed", None),
    ("chair", Some("chair")),
    ("sofa", Some("sofa")),
    ("table", Some("table")),
    ("door", None),
    ("window", None),
    ("bookshelf", Some("bookshelf")),
    ("picture", None),
    ("counter", Some("cabinet")),
    ("desk", Some("table")),
    ("curtain", None),
    ("refrigerator", Some("cabinet")),
    ("shower curtain", None),
    ("toilet", None),
    ("sink", None),
    ("bathtub", Some("bathtub")),
    ("other furniture", None),
    ("trash bin", Some("trash bin")),
    ("display", Some("display")),
    ("dresser", Some("cabinet")),
    ("nightstand", Some("cabinet")),
    ("coffee table", Some("table")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSystem {
    seg_categories: Vec<String>,
    recon_categories: Vec<String>,
    mapping: Vec<Option<ReconLabel>>,
}

impl Default for LabelSystem {
    fn default() -> Self {
        let recon_categories: Vec<String> = RECON_CATEGORIES.iter().map(|s| s.to_string()).collect();
        let mut seg_categories = Vec::with_capacity(DEFAULT_TABLE.len());
        let mut mapping = Vec::with_capacity(DEFAULT_TABLE.len());
        for (seg, recon) in DEFAULT_TABLE {
            seg_categories.push(seg.to_string());
            mapping.push(recon.map(|r| {
                let idx = RECON_CATEGORIES.iter().position(|c| *c == r).unwrap();
                ReconLabel(idx as u16)
            }));
        }
        LabelSystem {
            seg_categories,
            recon_categories,
            mapping,
        }
    }
}

impl LabelSystem {
    /// Identifier written into scene headers for the built-in table.
    pub const DEFAULT_ID: &'static str = "default-25";

    /// Parses a `seg_name<TAB>recon_name_or_NONE` table. Reconstruction
    /// names must be among [`RECON_CATEGORIES`].
    pub fn from_table_str(text: &str) -> Result<Self> {
        let recon_categories: Vec<String> = RECON_CATEGORIES.iter().map(|s| s.to_string()).collect();
        let mut seg_categories = Vec::new();
        let mut mapping = Vec::new();
        for (lineno, line) in text.split('\n').enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (seg, recon) = line.split_once('\t').ok_or_else(|| {
                Error::load("label table", format!("line {}: expected a TAB separator", lineno + 1))
            })?;
            let seg = seg.trim();
            let recon = recon.trim();
            if seg.is_empty() {
                return Err(Error::load("label table", format!("line {}: empty segmentation name", lineno + 1)));
            }
            if seg_categories.iter().any(|s| s == seg) {
                return Err(Error::load("label table", format!("line {}: duplicate class '{seg}'", lineno + 1)));
            }
            let mapped = if recon == "NONE" {
                None
            } else {
                let idx = recon_categories.iter().position(|c| c == recon).ok_or_else(|| {
                    Error::load(
                        "label table",
                        format!("line {}: unknown reconstruction class '{recon}'", lineno + 1),
                    )
                })?;
                Some(ReconLabel(idx as u16))
            };
            seg_categories.push(seg.to_string());
            mapping.push(mapped);
        }
        if seg_categories.is_empty() {
            return Err(Error::load("label table", "no entries"));
        }
        if seg_categories.len() > u16::MAX as usize {
            return Err(Error::load("label table", "too many classes"));
        }
        Ok(LabelSystem {
            seg_categories,
            recon_categories,
            mapping,
        })
    }

    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_table_str(&text)
    }

    /// Renders the table in the plain-text override format.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        for (seg, m) in self.seg_categories.iter().zip(&self.mapping) {
            out.push_str(seg);
            out.push('\t');
            match m {
                Some(r) => out.push_str(&self.recon_categories[r.0 as usize]),
                None => out.push_str("NONE"),
            }
            out.push('\n');
        }
        out
    }

    pub fn seg_categories(&self) -> &[String] {
        &self.seg_categories
    }

    pub fn recon_categories(&self) -> &[String] {
        &self.recon_categories
    }

    pub fn seg_count(&self) -> usize {
        self.seg_categories.len()
    }

    pub fn recon_count(&self) -> usize {
        self.recon_categories.len()
    }

    /// Maps a segmentation class to its reconstruction class (`None` for stuff
    /// and for classes without a reconstruction counterpart).
    pub fn map_label(&self, seg: SegLabel) -> Result<Option<ReconLabel>> {
        self.mapping
            .get(seg.0 as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown segmentation class {}", seg.0)))
    }

    pub fn map_name(&self, seg_name: &str) -> Result<Option<&str>> {
        let seg = self
            .seg_by_name(seg_name)
            .ok_or_else(|| Error::invalid(format!("unknown segmentation class '{seg_name}'")))?;
        Ok(self.map_label(seg)?.map(|r| self.recon_name(r)))
    }

    pub fn seg_by_name(&self, name: &str) -> Option<SegLabel> {
        self.seg_categories
            .iter()
            .position(|s| s == name)
            .map(|i| SegLabel(i as u16))
    }

    pub fn recon_by_name(&self, name: &str) -> Option<ReconLabel> {
        self.recon_categories
            .iter()
            .position(|s| s == name)
            .map(|i| ReconLabel(i as u16))
    }

    pub fn seg_name(&self, seg: SegLabel) -> &str {
        &self.seg_categories[seg.0 as usize]
    }

    pub fn recon_name(&self, recon: ReconLabel) -> &str {
        &self.recon_categories[recon.0 as usize]
    }

    /// First segmentation class mapping onto `recon`.
    pub fn seg_for_recon(&self, recon: ReconLabel) -> Option<SegLabel> {
        self.mapping
            .iter()
            .position(|m| *m == Some(recon))
            .map(|i| SegLabel(i as u16))
    }
}

//! Per-scene ground-truth and prediction manifests: `<scene>.gt.json` and
//! `<scene>.pred.json`, referencing mesh and point files next to them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mesh::{load_mesh, load_points, save_mesh, save_points};
use crate::error::{Error, Result};
use crate::eval::{GtRecord, PredictionRecord};
use crate::labels::{ReconLabel, RECON_CATEGORIES};

pub const GT_SUFFIX: &str = ".gt.json";
pub const PRED_SUFFIX: &str = ".pred.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub category: String,
    pub mesh: String,
    pub points: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtManifest {
    pub scene: String,
    pub instances: Vec<GtInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredInstance {
    pub category: String,
    pub confidence: f64,
    pub mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredManifest {
    pub scene: String,
    pub instances: Vec<PredInstance>,
}

fn name_of(c: ReconLabel) -> Result<String> {
    RECON_CATEGORIES
        .get(c.0 as usize)
        .map(|s| s.to_string())
        .ok_or_else(|| Error::invalid(format!("unknown reconstruction class {}", c.0)))
}

fn label_of(what: &str, name: &str) -> Result<ReconLabel> {
    RECON_CATEGORIES
        .iter()
        .position(|c| *c == name)
        .map(|i| ReconLabel(i as u16))
        .ok_or_else(|| Error::load(what, format!("unknown category '{name}'")))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let what = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(&what, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::load(&what, format!("malformed manifest: {e}")))
}

pub fn write_gt(dir: &Path, scene: &str, gts: &[GtRecord]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut instances = Vec::with_capacity(gts.len());
    for (i, g) in gts.iter().enumerate() {
        let mesh = format!("{scene}_gt_{i}.ply");
        let points = format!("{scene}_gt_{i}_points.ply");
        save_mesh(&g.mesh.clone().with_category(Some(g.category)), &dir.join(&mesh))?;
        save_points(&g.instance_points, &dir.join(&points))?;
        instances.push(GtInstance { category: name_of(g.category)?, mesh, points });
    }
    let path = dir.join(format!("{scene}{GT_SUFFIX}"));
    write_json(&GtManifest { scene: scene.into(), instances }, &path)?;
    Ok(path)
}

pub fn read_gt(path: &Path) -> Result<(String, Vec<GtRecord>)> {
    let m: GtManifest = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let what = path.display().to_string();
    let mut out = Vec::with_capacity(m.instances.len());
    for inst in &m.instances {
        out.push(GtRecord {
            mesh: load_mesh(&dir.join(&inst.mesh))?,
            instance_points: load_points(&dir.join(&inst.points))?,
            category: label_of(&what, &inst.category)?,
        });
    }
    Ok((m.scene, out))
}

/// Writes prediction meshes (as `<scene>_pred_<i>.<ext>`) and the manifest.
pub fn write_pred(
    dir: &Path,
    scene: &str,
    preds: &[PredictionRecord],
    proposals: Option<&[usize]>,
    mesh_ext: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut instances = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let mesh = format!("{scene}_pred_{i}.{mesh_ext}");
        save_mesh(&p.mesh.clone().with_category(Some(p.category)), &dir.join(&mesh))?;
        instances.push(PredInstance {
            category: name_of(p.category)?,
            confidence: p.confidence,
            mesh,
            proposal: proposals.map(|ids| ids[i]),
        });
    }
    let path = dir.join(format!("{scene}{PRED_SUFFIX}"));
    write_json(&PredManifest { scene: scene.into(), instances }, &path)?;
    Ok(path)
}

pub fn read_pred(path: &Path) -> Result<(String, Vec<PredictionRecord>)> {
    let m: PredManifest = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let what = path.display().to_string();
    let mut out = Vec::with_capacity(m.instances.len());
    for inst in &m.instances {
        if !(0.0..=1.0).contains(&inst.confidence) {
            return Err(Error::load(&what, format!("confidence {} outside [0, 1]", inst.confidence)));
        }
        out.push(PredictionRecord {
            mesh: load_mesh(&dir.join(&inst.mesh))?,
            confidence: inst.confidence,
            category: label_of(&what, &inst.category)?,
        });
    }
    Ok((m.scene, out))
}

/// Manifests in `dir` with the given suffix, keyed by scene name.
pub fn scan(dir: &Path, suffix: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::load(dir.display().to_string(), e.to_string()))? {
        let path = entry?.path();
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            if let Some(scene) = name.strip_suffix(suffix) {
                out.insert(scene.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

//! Scene files: JSON header + f32 blocks (positions, offsets, angles) and
//! u16 blocks (categories, instance ids), in that order.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::container::{self, push_f32s, push_u16s, BlockReader};
use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use crate::labels::{LabelSystem, SegLabel};
use crate::model::PointScene;

pub const SCENE_FORMAT: &str = "srk-scene";

pub const FIELD_POSITIONS: &str = "positions";
pub const FIELD_OFFSETS: &str = "offsets";
pub const FIELD_ANGLES: &str = "angles";
pub const FIELD_CATEGORIES: &str = "categories";
pub const FIELD_INSTANCE_IDS: &str = "instance_ids";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHeader {
    pub format: String,
    pub version: u32,
    pub point_count: usize,
    pub fields: Vec<String>,
    pub units: String,
    pub label_system: String,
}

pub fn scene_to_bytes(scene: &PointScene, label_system: &str) -> Result<Vec<u8>> {
    let mut fields = vec![FIELD_POSITIONS, FIELD_OFFSETS, FIELD_ANGLES, FIELD_CATEGORIES];
    if scene.gt_instance_ids().is_some() {
        fields.push(FIELD_INSTANCE_IDS);
    }
    let header = SceneHeader {
        format: SCENE_FORMAT.into(),
        version: 1,
        point_count: scene.len(),
        fields: fields.iter().map(|s| s.to_string()).collect(),
        units: "m".into(),
        label_system: label_system.into(),
    };
    let mut payload = Vec::with_capacity(scene.len() * 30);
    push_f32s(&mut payload, scene.points().iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]));
    push_f32s(&mut payload, scene.offsets().iter().flat_map(|o| [o.x as f32, o.y as f32, o.z as f32]));
    push_f32s(&mut payload, scene.angles().iter().map(|&a| a as f32));
    push_u16s(&mut payload, scene.categories().iter().map(|c| c.0));
    if let Some(ids) = scene.gt_instance_ids() {
        push_u16s(&mut payload, ids.iter().copied());
    }
    container::encode(&header, &payload)
}

/// Parses a scene. Offsets and angles default to zero when absent; angles are
/// wrapped into [-pi, pi).
pub fn scene_from_bytes(what: &str, bytes: &[u8], labels: Option<&LabelSystem>) -> Result<(PointScene, SceneHeader)> {
    let (header, payload): (SceneHeader, _) = container::decode(what, bytes)?;
    if header.format != SCENE_FORMAT {
        return Err(Error::load(what, format!("format '{}' is not '{SCENE_FORMAT}'", header.format)));
    }
    if header.version != 1 {
        return Err(Error::load(what, format!("unsupported version {}", header.version)));
    }
    if header.units != "m" {
        return Err(Error::load(what, format!("unsupported units '{}'", header.units)));
    }
    let known = [FIELD_POSITIONS, FIELD_OFFSETS, FIELD_ANGLES, FIELD_CATEGORIES, FIELD_INSTANCE_IDS];
    for f in &header.fields {
        if !known.contains(&f.as_str()) {
            return Err(Error::load(what, format!("unknown field '{f}'")));
        }
    }
    let has = |f: &str| header.fields.iter().any(|x| x == f);
    for f in [FIELD_POSITIONS, FIELD_CATEGORIES] {
        if !has(f) {
            return Err(Error::load(what, format!("required field '{f}' missing")));
        }
    }
    let n = header.point_count;
    let mut r = BlockReader::new(what, payload);
    let pos = r.f32s(FIELD_POSITIONS, 3 * n)?;
    let off = if has(FIELD_OFFSETS) { Some(r.f32s(FIELD_OFFSETS, 3 * n)?) } else { None };
    let ang = if has(FIELD_ANGLES) { Some(r.f32s(FIELD_ANGLES, n)?) } else { None };
    let cat = r.u16s(FIELD_CATEGORIES, n)?;
    let ids = if has(FIELD_INSTANCE_IDS) { Some(r.u16s(FIELD_INSTANCE_IDS, n)?) } else { None };
    r.finish()?;
    if let Some(ls) = labels {
        if let Some((i, c)) = cat.iter().enumerate().find(|(_, c)| **c as usize >= ls.seg_count()) {
            return Err(Error::load(what, format!("point {i} has category {c}, label system has {}", ls.seg_count())));
        }
    }
    let points = pos.chunks_exact(3).map(|c| Point3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect();
    let offsets = match off {
        Some(o) => o.chunks_exact(3).map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect(),
        None => vec![Vector3::zeros(); n],
    };
    let angles = match ang {
        Some(a) => a.iter().map(|&x| wrap_angle(x as f64)).collect(),
        None => vec![0.0; n],
    };
    let scene = PointScene::new(points, cat.into_iter().map(SegLabel).collect(), offsets, angles, ids)
        .map_err(|e| Error::load(what, e.to_string()))?;
    Ok((scene, header))
}

pub fn save_scene(scene: &PointScene, label_system: &str, path: &Path) -> Result<()> {
    std::fs::write(path, scene_to_bytes(scene, label_system)?)?;
    Ok(())
}

pub fn load_scene(path: &Path, labels: Option<&LabelSystem>) -> Result<(PointScene, SceneHeader)> {
    let what = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::load(&what, e.to_string()))?;
    scene_from_bytes(&what, &bytes, labels)
}

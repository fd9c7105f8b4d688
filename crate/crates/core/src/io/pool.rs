//! Model pool files: JSON header (dimension, count, category table, entries)
//! + row-major f32 code matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{self, push_f32s, BlockReader};
use super::mesh::load_mesh;
use crate::error::{Error, Result};
use crate::labels::{ReconLabel, RECON_CATEGORIES};
use crate::latent::{ModelPool, PoolEntry};
use crate::mesh::TriMesh;

pub const POOL_FORMAT: &str = "srk-model-pool";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EntryHeader {
    id: u32,
    category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoolHeader {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    categories: Vec<String>,
    entries: Vec<EntryHeader>,
}

pub fn pool_to_bytes(pool: &ModelPool) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(pool.len());
    for e in pool.entries() {
        let name = RECON_CATEGORIES
            .get(e.category.0 as usize)
            .ok_or_else(|| Error::invalid(format!("pool entry {} has unknown category {}", e.id, e.category.0)))?;
        entries.push(EntryHeader { id: e.id, category: name.to_string(), mesh: e.mesh.clone() });
    }
    let header = PoolHeader {
        format: POOL_FORMAT.into(),
        version: 1,
        dimension: pool.dim(),
        count: pool.len(),
        categories: RECON_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        entries,
    };
    let mut payload = Vec::with_capacity(pool.len() * pool.dim() * 4);
    push_f32s(&mut payload, pool.entries().iter().flat_map(|e| e.code.iter().map(|&v| v as f32)));
    container::encode(&header, &payload)
}

pub fn pool_from_bytes(what: &str, bytes: &[u8]) -> Result<ModelPool> {
    let (h, payload): (PoolHeader, _) = container::decode(what, bytes)?;
    if h.format != POOL_FORMAT {
        return Err(Error::load(what, format!("format '{}' is not '{POOL_FORMAT}'", h.format)));
    }
    if h.version != 1 {
        return Err(Error::load(what, format!("unsupported version {}", h.version)));
    }
    if h.entries.len() != h.count {
        return Err(Error::load(what, format!("count {} but {} entries", h.count, h.entries.len())));
    }
    for c in &h.categories {
        if !RECON_CATEGORIES.contains(&c.as_str()) {
            return Err(Error::load(what, format!("unknown category '{c}' in table")));
        }
    }
    let mut r = BlockReader::new(what, payload);
    let codes = r.f32s("codes", h.count * h.dimension)?;
    r.finish()?;
    let mut entries = Vec::with_capacity(h.count);
    for (i, e) in h.entries.into_iter().enumerate() {
        if !h.categories.contains(&e.category) {
            return Err(Error::load(what, format!("entry {} category '{}' not in table", e.id, e.category)));
        }
        let cat = RECON_CATEGORIES.iter().position(|c| *c == e.category).unwrap();
        entries.push(PoolEntry {
            id: e.id,
            category: ReconLabel(cat as u16),
            code: codes[i * h.dimension..(i + 1) * h.dimension].iter().map(|&v| v as f64).collect(),
            mesh: e.mesh,
        });
    }
    ModelPool::new(h.dimension, entries).map_err(|e| Error::load(what, e.to_string()))
}

pub fn save_pool(pool: &ModelPool, path: &Path) -> Result<()> {
    std::fs::write(path, pool_to_bytes(pool)?)?;
    Ok(())
}

pub fn load_pool(path: &Path) -> Result<ModelPool> {
    let what = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::load(&what, e.to_string()))?;
    pool_from_bytes(&what, &bytes)
}

/// Loads every referenced mesh, resolving paths against `base_dir`.
pub fn load_pool_meshes(pool: &ModelPool, base_dir: &Path) -> Result<BTreeMap<u32, TriMesh>> {
    let mut out = BTreeMap::new();
    for e in pool.entries() {
        if let Some(rel) = &e.mesh {
            let m = load_mesh(&base_dir.join(rel))?;
            out.insert(e.id, m.with_category(Some(e.category)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let entries = (0..5)
            .map(|i| PoolEntry {
                id: 10 + i,
                category: ReconLabel((i % 8) as u16),
                code: vec![i as f64 * 0.5, -1.0, 0.25],
                mesh: (i % 2 == 0).then(|| format!("m{i}.ply")),
            })
            .collect();
        let pool = ModelPool::new(3, entries).unwrap();
        let bytes = pool_to_bytes(&pool).unwrap();
        let back = pool_from_bytes("p", &bytes).unwrap();
        assert_eq!(back, pool);
        assert_eq!(pool_to_bytes(&back).unwrap(), bytes);
        let err = pool_from_bytes("p", &bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("codes"), "{err}");
    }
}

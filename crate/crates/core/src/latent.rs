//! Latent codes: sampling, nearest-code retrieval and projection onto the
//! span of the nearest pool codes.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ReconLabel;
use crate::model::LatentShapeDistribution;
use crate::rng;

pub const RANK_TOLERANCE: f64 = 1e-10;

/// `z = mu + sigma * eps`, `eps` standard normal from the seeded generator.
pub fn sample_code(dist: &LatentShapeDistribution, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    dist.mu
        .iter()
        .zip(&dist.sigma)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(&mut r);
            if *s == 0.0 { *m } else { m + s * e }
        })
        .collect()
}

pub fn expected_code(dist: &LatentShapeDistribution) -> Vec<f64> {
    dist.mu.clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: u32,
    pub category: ReconLabel,
    pub code: Vec<f64>,
    /// Mesh file, relative to the pool file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    /// Subspace through the origin spanned by the neighbour codes.
    #[default]
    Linear,
    /// Affine hull of the neighbour codes.
    Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    dim: usize,
    entries: Vec<PoolEntry>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ModelPool {
    pub fn new(dim: usize, entries: Vec<PoolEntry>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("pool code dimension must be positive"));
        }
        let mut ids = std::collections::HashSet::new();
        for e in &entries {
            if e.code.len() != dim {
                return Err(Error::invalid(format!(
                    "pool entry {} has dimension {}, expected {dim}",
                    e.id,
                    e.code.len()
                )));
            }
            if e.code.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("pool entry {} has a non-finite code", e.id)));
            }
            if !ids.insert(e.id) {
                return Err(Error::invalid(format!("duplicate pool id {}", e.id)));
            }
        }
        Ok(ModelPool { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn check_query(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::invalid(format!(
                "query has dimension {}, pool has {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Entries within the filter ordered by (distance, id).
    fn ranked(&self, z: &[f64], filter: Option<ReconLabel>) -> Vec<(f64, &PoolEntry)> {
        let mut v: Vec<(f64, &PoolEntry)> = self
            .entries
            .iter()
            .filter(|e| filter.is_none_or(|c| e.category == c))
            .map(|e| (dist2(&e.code, z), e))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.id.cmp(&b.1.id)));
        v
    }

    /// Nearest code by Euclidean distance; ties go to the smaller id.
    pub fn retrieve(&self, z: &[f64], filter: Option<ReconLabel>) -> Result<(u32, f64)> {
        self.check_query(z)?;
        let mut best: Option<(f64, u32)> = None;
        for e in &self.entries {
            if filter.is_some_and(|c| e.category != c) {
                continue;
            }
            let d = dist2(&e.code, z);
            best = match best {
                Some((bd, bid)) if bd < d || (bd == d && bid < e.id) => Some((bd, bid)),
                _ => Some((d, e.id)),
            };
        }
        best.map(|(d, id)| (id, d.sqrt()))
            .ok_or_else(|| Error::NotFound("no pool entry matches the category filter".into()))
    }

    /// The `k` nearest entries, nearest first.
    pub fn nearest(&self, z: &[f64], k: usize, filter: Option<ReconLabel>) -> Result<Vec<&PoolEntry>> {
        self.check_query(z)?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let ranked = self.ranked(z, filter);
        if ranked.len() < k {
            return Err(Error::invalid(format!(
                "k = {k} exceeds the {} pool entries available",
                ranked.len()
            )));
        }
        Ok(ranked.into_iter().take(k).map(|(_, e)| e).collect())
    }

    /// Orthogonal projection of `z` onto the span of its `k` nearest codes.
    pub fn project(&self, z: &[f64], k: usize, filter: Option<ReconLabel>, span: SpanKind) -> Result<Vec<f64>> {
        let near = self.nearest(z, k, filter)?;
        let codes: Vec<&[f64]> = near.iter().map(|e| e.code.as_slice()).collect();
        Ok(match span {
            SpanKind::Linear => project_linear(&codes, z),
            SpanKind::Affine => {
                let base = codes[0];
                let dirs: Vec<Vec<f64>> = codes[1..]
                    .iter()
                    .map(|c| c.iter().zip(base).map(|(a, b)| a - b).collect())
                    .collect();
                let rel: Vec<f64> = z.iter().zip(base).map(|(a, b)| a - b).collect();
                let refs: Vec<&[f64]> = dirs.iter().map(|d| d.as_slice()).collect();
                let p = if refs.is_empty() { vec![0.0; z.len()] } else { project_linear(&refs, &rel) };
                p.iter().zip(base).map(|(a, b)| a + b).collect()
            }
        })
    }
}

/// Least-squares projection onto span(basis). Directions with singular value
/// below `RANK_TOLERANCE` times the largest are dropped, so repeated codes are fine.
pub fn project_linear(basis: &[&[f64]], z: &[f64]) -> Vec<f64> {
    let k = basis.len();
    let d = z.len();
    if k == 0 {
        return vec![0.0; d];
    }
    let b = DMatrix::from_fn(d, k, |r, c| basis[c][r]);
    let svd = b.svd(true, false);
    let u = svd.u.expect("left singular vectors were requested");
    let top = svd.singular_values.max();
    let zv = DVector::from_column_slice(z);
    let mut out = DVector::zeros(d);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if top > 0.0 && *s > RANK_TOLERANCE * top {
            let col = u.column(i);
            out += col * col.dot(&zv);
        }
    }
    out.iter().copied().collect()
}

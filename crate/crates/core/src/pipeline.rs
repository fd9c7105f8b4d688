//! Per-scene reconstruction: proposals in, placed instance meshes out.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsp::{extract_mesh, BspDecoder};
use crate::canonical::{place_mesh, CanonicalFrame};
use crate::cluster::{proposal_initial_box, AngleMean};
use crate::error::{Error, Result};
use crate::eval::{PredictionRecord, DEFAULT_CONF_FLOOR};
use crate::icp::{icp_align, IcpConfig};
use crate::labels::LabelSystem;
use crate::latent::{expected_code, sample_code, ModelPool, SpanKind};
use crate::mesh::TriMesh;
use crate::model::{compose_box, InstanceProposal, PointScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMode {
    #[default]
    Generate,
    Project,
    Retrieve,
}

impl ReconMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "generate" => Ok(ReconMode::Generate),
            "project" => Ok(ReconMode::Project),
            "retrieve" => Ok(ReconMode::Retrieve),
            _ => Err(Error::invalid(format!(
                "unknown mode `{s}` (expected generate, project or retrieve)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub mode: ReconMode,
    pub conf_floor: f64,
    pub min_points: usize,
    pub stochastic: bool,
    pub seed: u64,
    /// Neighbours spanning the projection subspace.
    pub k: usize,
    pub span: SpanKind,
    pub category_filter: bool,
    /// Used by retrieve mode when no decoder declares a frame.
    pub frame: CanonicalFrame,
    /// Used when a proposal carries no initial box.
    pub angle_mean: AngleMean,
    pub icp: Option<IcpConfig>,
    pub timing: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            mode: ReconMode::Generate,
            conf_floor: DEFAULT_CONF_FLOOR,
            min_points: 100,
            stochastic: false,
            seed: 0,
            k: 1,
            span: SpanKind::Linear,
            category_filter: true,
            frame: CanonicalFrame::MinCorner,
            angle_mean: AngleMean::Circular,
            icp: None,
            timing: false,
        }
    }
}

/// Everything a scene reconstruction reads.
#[derive(Debug, Clone, Copy)]
pub struct ReconInputs<'a> {
    pub scene: &'a PointScene,
    pub proposals: &'a [InstanceProposal],
    pub labels: &'a LabelSystem,
    pub decoder: Option<&'a BspDecoder>,
    pub pool: Option<&'a ModelPool>,
    /// Canonical-frame meshes keyed by pool id.
    pub pool_meshes: Option<&'a BTreeMap<u32, TriMesh>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalOutcome {
    pub proposal: usize,
    pub status: OutcomeStatus,
    pub mode: ReconMode,
    pub category: String,
    pub confidence: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_distance: Option<f64>,
    pub triangles: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icp_rms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icp_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub mode: ReconMode,
    pub proposals: usize,
    pub reconstructed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub outcomes: Vec<ProposalOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedMesh {
    pub proposal: usize,
    pub prediction: PredictionRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutput {
    pub meshes: Vec<PlacedMesh>,
    pub report: ReconReport,
}

impl ReconOutput {
    pub fn predictions(&self) -> Vec<PredictionRecord> {
        self.meshes.iter().map(|m| m.prediction.clone()).collect()
    }
}

struct Built {
    mesh: TriMesh,
    pool_id: Option<u32>,
    latent_distance: Option<f64>,
    icp_rms: Option<f64>,
    icp_error: Option<String>,
}

fn check_inputs(inp: &ReconInputs, cfg: &ReconConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&cfg.conf_floor) {
        return Err(Error::invalid(format!("confidence floor {} outside [0, 1]", cfg.conf_floor)));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if let Some(icp) = &cfg.icp {
        icp.validate()?;
    }
    match cfg.mode {
        ReconMode::Generate if inp.decoder.is_none() => {
            return Err(Error::invalid("generate mode needs a decoder"));
        }
        ReconMode::Project if inp.decoder.is_none() || inp.pool.is_none() => {
            return Err(Error::invalid("project mode needs a decoder and a model pool"));
        }
        ReconMode::Retrieve if inp.pool.is_none() || inp.pool_meshes.is_none() => {
            return Err(Error::invalid("retrieve mode needs a model pool with meshes"));
        }
        _ => {}
    }
    if let (Some(dec), Some(pool)) = (inp.decoder, inp.pool) {
        if cfg.mode == ReconMode::Project && dec.latent_dim() != pool.dim() {
            return Err(Error::invalid(format!(
                "decoder latent dimension {} differs from pool dimension {}",
                dec.latent_dim(),
                pool.dim()
            )));
        }
    }
    Ok(())
}

fn code_seed(seed: u64, proposal: usize) -> u64 {
    seed ^ (proposal as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn decode(dec: &BspDecoder, labels: &LabelSystem, p: &InstanceProposal, z: &[f64]) -> Result<TriMesh> {
    let name = labels.recon_name(p.category);
    let idx = dec
        .category_index(name)
        .ok_or_else(|| Error::NotFound(format!("decoder has no category `{name}`")))?;
    let mesh = extract_mesh(&dec.decode_planes(z, idx)?);
    if mesh.is_empty() {
        return Err(Error::invalid("decoded shape is empty"));
    }
    Ok(mesh)
}

fn build(inp: &ReconInputs, cfg: &ReconConfig, id: usize, p: &InstanceProposal) -> Result<Built> {
    p.validate(inp.scene.len())?;
    let z = if cfg.stochastic {
        sample_code(&p.latent, code_seed(cfg.seed, id))
    } else {
        expected_code(&p.latent)
    };
    if z.is_empty() {
        return Err(Error::invalid("proposal has no latent code"));
    }
    let filter = cfg.category_filter.then_some(p.category);
    let (canonical, pool_id, latent_distance) = match cfg.mode {
        ReconMode::Generate => (decode(inp.decoder.unwrap(), inp.labels, p, &z)?, None, None),
        ReconMode::Project => {
            let zp = inp.pool.unwrap().project(&z, cfg.k, filter, cfg.span)?;
            let d = z.iter().zip(&zp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (decode(inp.decoder.unwrap(), inp.labels, p, &zp)?, None, Some(d))
        }
        ReconMode::Retrieve => {
            let (pid, d) = inp.pool.unwrap().retrieve(&z, filter)?;
            let mesh = inp
                .pool_meshes
                .unwrap()
                .get(&pid)
                .ok_or_else(|| Error::NotFound(format!("pool entry {pid} has no mesh")))?;
            (mesh.clone(), Some(pid), Some(d))
        }
    };
    let initial = match &p.initial_box {
        Some(b) => *b,
        None => proposal_initial_box(inp.scene, &p.point_indices, cfg.angle_mean)?,
    };
    let refined = compose_box(&initial, &p.residual)?;
    let frame = inp.decoder.map(|d| d.frame()).unwrap_or(cfg.frame);
    let mut mesh = place_mesh(&canonical, &refined, frame)?;
    let (mut icp_rms, mut icp_error) = (None, None);
    if let Some(icp) = &cfg.icp {
        let target = inp.scene.gather_points(&p.point_indices);
        match icp_align(&mesh, &target, icp) {
            Ok(r) => {
                icp_rms = Some(r.rms);
                mesh = r.mesh;
            }
            Err(e) => icp_error = Some(e.to_string()),
        }
    }
    Ok(Built {
        mesh: mesh.with_category(Some(p.category)),
        pool_id,
        latent_distance,
        icp_rms,
        icp_error,
    })
}

/// Reconstructs every proposal that passes both floors. Per-proposal
/// failures land in the report; only inconsistent inputs abort.
pub fn reconstruct_scene(inp: &ReconInputs, cfg: &ReconConfig) -> Result<ReconOutput> {
    check_inputs(inp, cfg)?;
    let results: Vec<(ProposalOutcome, Option<TriMesh>)> = inp
        .proposals
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let start = cfg.timing.then(Instant::now);
            let mut out = ProposalOutcome {
                proposal: id,
                status: OutcomeStatus::Ok,
                mode: cfg.mode,
                category: inp.labels.recon_name(p.category).to_string(),
                confidence: p.confidence,
                points: p.point_indices.len(),
                reason: None,
                pool_id: None,
                latent_distance: None,
                triangles: 0,
                icp_rms: None,
                icp_error: None,
                time_ms: None,
            };
            let mut mesh = None;
            if !(p.confidence >= cfg.conf_floor) {
                out.status = OutcomeStatus::Skipped;
                out.reason = Some(format!("confidence {} below floor {}", p.confidence, cfg.conf_floor));
            } else if p.point_indices.len() < cfg.min_points {
                out.status = OutcomeStatus::Skipped;
                out.reason = Some(format!(
                    "{} points below minimum {}",
                    p.point_indices.len(),
                    cfg.min_points
                ));
            } else {
                match build(inp, cfg, id, p) {
                    Ok(b) => {
                        out.pool_id = b.pool_id;
                        out.latent_distance = b.latent_distance;
                        out.triangles = b.mesh.triangles.len();
                        out.icp_rms = b.icp_rms;
                        out.icp_error = b.icp_error;
                        mesh = Some(b.mesh);
                    }
                    Err(e) => {
                        out.status = OutcomeStatus::Failed;
                        out.reason = Some(e.to_string());
                    }
                }
            }
            out.time_ms = start.map(|s| s.elapsed().as_secs_f64() * 1e3);
            (out, mesh)
        })
        .collect();

    let mut meshes = Vec::new();
    let mut outcomes = Vec::with_capacity(results.len());
    for (out, mesh) in results {
        if let Some(mesh) = mesh {
            let p = &inp.proposals[out.proposal];
            meshes.push(PlacedMesh {
                proposal: out.proposal,
                prediction: PredictionRecord {
                    mesh,
                    confidence: p.confidence,
                    category: p.category,
                },
            });
        }
        outcomes.push(out);
    }
    let count = |s: OutcomeStatus| outcomes.iter().filter(|o| o.status == s).count();
    let report = ReconReport {
        mode: cfg.mode,
        proposals: outcomes.len(),
        reconstructed: count(OutcomeStatus::Ok),
        skipped: count(OutcomeStatus::Skipped),
        failed: count(OutcomeStatus::Failed),
        outcomes,
    };
    Ok(ReconOutput { meshes, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsp::{Activation, DenseLayer};
    use crate::labels::{ReconLabel, SegLabel};
    use crate::latent::PoolEntry;
    use crate::model::{BoxResidual, LatentShapeDistribution, OrientedBox};
    use nalgebra::{Point3, Vector3};

    /// Decoder whose planes are the unit cube faces for any code.
    fn cube_decoder() -> BspDecoder {
        let planes: [[f32; 4]; 6] = [
            [1.0, 0.0, 0.0, -1.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, -1.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
        ];
        let cats: Vec<String> = crate::labels::RECON_CATEGORIES.iter().map(|s| s.to_string()).collect();
        let inputs = 2 + cats.len();
        let layer = DenseLayer {
            inputs,
            outputs: 24,
            weights: vec![0.0; 24 * inputs],
            bias: planes.iter().flatten().copied().collect(),
            activation: Activation::Identity,
        };
        BspDecoder::new(2, cats, vec![layer], 6, 1, vec![true; 6], CanonicalFrame::MinCorner).unwrap()
    }

    fn scene(n: usize) -> PointScene {
        let pts: Vec<Point3<f64>> = (0..n).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        PointScene::new(pts, vec![SegLabel(2); n], vec![Vector3::zeros(); n], vec![0.0; n], None).unwrap()
    }

    fn proposal(range: std::ops::Range<usize>, conf: f64, scale: Vector3<f64>) -> InstanceProposal {
        InstanceProposal {
            point_indices: range.collect(),
            confidence: conf,
            initial_box: Some(OrientedBox::new(Point3::new(1.0, 2.0, 0.5), 0.4, scale).unwrap()),
            residual: BoxResidual::zero(),
            latent: LatentShapeDistribution::point_mass(vec![0.3, -0.2]),
            category: ReconLabel(5),
        }
    }

    #[test]
    fn zero_proposals_give_empty_output() {
        let dec = cube_decoder();
        let labels = LabelSystem::default();
        let s = scene(10);
        let inp = ReconInputs { scene: &s, proposals: &[], labels: &labels, decoder: Some(&dec), pool: None, pool_meshes: None };
        let out = reconstruct_scene(&inp, &ReconConfig::default()).unwrap();
        assert!(out.meshes.is_empty());
        assert_eq!(out.report.proposals, 0);
    }

    #[test]
    fn constant_cube_decoder_places_boxes_with_exact_volume() {
        let dec = cube_decoder();
        let labels = LabelSystem::default();
        let s = scene(400);
        let props = vec![
            proposal(0..150, 0.8, Vector3::new(0.4, 0.9, 1.3)),
            proposal(150..400, 0.5, Vector3::new(2.0, 0.3, 0.7)),
        ];
        let inp = ReconInputs { scene: &s, proposals: &props, labels: &labels, decoder: Some(&dec), pool: None, pool_meshes: None };
        let out = reconstruct_scene(&inp, &ReconConfig::default()).unwrap();
        assert_eq!(out.meshes.len(), 2);
        for (m, p) in out.meshes.iter().zip(&props) {
            let s = p.initial_box.unwrap().scale;
            assert!((m.prediction.mesh.signed_volume() - s.x * s.y * s.z).abs() < 1e-6);
        }
    }

    #[test]
    fn floors_skip_proposals() {
        let dec = cube_decoder();
        let labels = LabelSystem::default();
        let s = scene(400);
        let props = vec![
            proposal(0..150, 0.05, Vector3::repeat(1.0)),
            proposal(150..200, 0.9, Vector3::repeat(1.0)),
            proposal(200..400, 0.09, Vector3::repeat(1.0)),
        ];
        let inp = ReconInputs { scene: &s, proposals: &props, labels: &labels, decoder: Some(&dec), pool: None, pool_meshes: None };
        let out = reconstruct_scene(&inp, &ReconConfig::default()).unwrap();
        let st: Vec<OutcomeStatus> = out.report.outcomes.iter().map(|o| o.status).collect();
        assert_eq!(st, vec![OutcomeStatus::Skipped, OutcomeStatus::Skipped, OutcomeStatus::Ok]);
        assert_eq!(out.meshes.len(), 1);
        assert_eq!(out.meshes[0].proposal, 2);
    }

    #[test]
    fn per_proposal_failures_do_not_abort() {
        let labels = LabelSystem::default();
        let s = scene(300);
        let pool = ModelPool::new(
            2,
            vec![PoolEntry { id: 7, category: ReconLabel(5), code: vec![0.3, -0.2], mesh: None }],
        )
        .unwrap();
        let meshes = BTreeMap::from([(7u32, TriMesh::unit_cube())]);
        let mut bad = proposal(100..300, 0.9, Vector3::repeat(1.0));
        bad.category = ReconLabel(0);
        let props = vec![proposal(0..100, 0.9, Vector3::repeat(1.0)), bad];
        let inp = ReconInputs { scene: &s, proposals: &props, labels: &labels, decoder: None, pool: Some(&pool), pool_meshes: Some(&meshes) };
        let cfg = ReconConfig { mode: ReconMode::Retrieve, ..Default::default() };
        let out = reconstruct_scene(&inp, &cfg).unwrap();
        assert_eq!(out.report.reconstructed, 1);
        assert_eq!(out.report.failed, 1);
        assert_eq!(out.report.outcomes[0].pool_id, Some(7));
        assert!(out.report.outcomes[1].reason.as_deref().unwrap().contains("not found"));
    }

    #[test]
    fn retrieve_without_pool_is_an_input_error() {
        let labels = LabelSystem::default();
        let s = scene(10);
        let inp = ReconInputs { scene: &s, proposals: &[], labels: &labels, decoder: None, pool: None, pool_meshes: None };
        let cfg = ReconConfig { mode: ReconMode::Retrieve, ..Default::default() };
        assert!(matches!(reconstruct_scene(&inp, &cfg), Err(Error::InvalidInput(_))));
    }
}

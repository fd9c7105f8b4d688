//! Scene and dataset scoring: greedy matching, average precision, mean AP,
//! recognition precision.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSystem, ReconLabel};
use crate::mesh::TriMesh;
use crate::metrics::{chamfer, lightfield_descriptor, pcr, voxel_iou, MetricKind, MetricParams};

pub const DEFAULT_CONF_FLOOR: f64 = 0.09;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub mesh: TriMesh,
    pub confidence: f64,
    pub category: ReconLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub mesh: TriMesh,
    pub instance_points: Vec<Point3<f64>>,
    pub category: ReconLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub pred: usize,
    pub gt: Option<usize>,
    /// Score against the best unmatched same-category GT, if any existed.
    pub score: Option<f64>,
}

/// Pairwise scores; `None` for cross-category pairs, which are never compared.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub kind: MetricKind,
    pub scores: Vec<Vec<Option<f64>>>,
}

/// Prediction order used for matching: confidence descending, ties by index.
pub fn confidence_order(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].partial_cmp(&confidences[a]).unwrap().then(a.cmp(&b)));
    order
}

pub fn score_matrix(
    preds: &[PredictionRecord],
    gts: &[GtRecord],
    kind: MetricKind,
    params: &MetricParams,
) -> Result<ScoreMatrix> {
    let lfd = if kind == MetricKind::Lfd {
        let p: Result<Vec<_>> = preds.par_iter().map(|p| lightfield_descriptor(&p.mesh, &params.lfd)).collect();
        let g: Result<Vec<_>> = gts.par_iter().map(|g| lightfield_descriptor(&g.mesh, &params.lfd)).collect();
        Some((p?, g?))
    } else {
        None
    };
    let pairs: Vec<(usize, usize)> = (0..preds.len())
        .flat_map(|i| (0..gts.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| preds[i].category == gts[j].category)
        .collect();
    let values: Result<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (p, g) = (&preds[i], &gts[j]);
            match kind {
                MetricKind::Iou => voxel_iou(&p.mesh, &g.mesh, params.voxel),
                MetricKind::Cd => chamfer(&p.mesh, &g.mesh, params.samples, params.seed),
                MetricKind::Pcr => pcr(&g.instance_points, &p.mesh, params.omega),
                MetricKind::Lfd => {
                    let (dp, dg) = lfd.as_ref().unwrap();
                    Ok(dp[i].distance(&dg[j]))
                }
            }
        })
        .collect();
    let mut scores = vec![vec![None; gts.len()]; preds.len()];
    for ((i, j), v) in pairs.into_iter().zip(values?) {
        scores[i][j] = Some(v);
    }
    Ok(ScoreMatrix { kind, scores })
}

fn better(kind: MetricKind, a: f64, b: f64) -> bool {
    if kind.higher_is_better() { a > b } else { a < b }
}

/// Greedy claims in confidence order against precomputed scores.
pub fn match_scores(confidences: &[f64], sm: &ScoreMatrix, threshold: f64) -> Vec<MatchRecord> {
    let n_gt = sm.scores.first().map_or(0, |r| r.len());
    let mut taken = vec![false; n_gt];
    let mut out = Vec::with_capacity(confidences.len());
    for i in confidence_order(confidences) {
        let mut best: Option<(usize, f64)> = None;
        for (j, s) in sm.scores[i].iter().enumerate() {
            let Some(s) = *s else { continue };
            if taken[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| better(sm.kind, s, b)) {
                best = Some((j, s));
            }
        }
        let rec = match best {
            Some((j, s)) if sm.kind.passes(s, threshold) => {
                taken[j] = true;
                MatchRecord { pred: i, gt: Some(j), score: Some(s) }
            }
            Some((_, s)) => MatchRecord { pred: i, gt: None, score: Some(s) },
            None => MatchRecord { pred: i, gt: None, score: None },
        };
        out.push(rec);
    }
    out
}

pub fn match_predictions(
    preds: &[PredictionRecord],
    gts: &[GtRecord],
    kind: MetricKind,
    threshold: f64,
    params: &MetricParams,
) -> Result<Vec<MatchRecord>> {
    if !threshold.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }
    for p in preds {
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(Error::invalid(format!("confidence {} outside [0, 1]", p.confidence)));
        }
    }
    let sm = score_matrix(preds, gts, kind, params)?;
    let conf: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
    Ok(match_scores(&conf, &sm, threshold))
}

/// All-point AP of confidence-ordered TP flags with a monotone precision envelope.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let mut prec = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        prec.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..prec.len().saturating_sub(1)).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let step = 1.0 / n_gt as f64;
    flags
        .iter()
        .zip(&prec)
        .filter(|(f, _)| **f)
        .fold(0.0, |acc, (_, p)| acc + p * step)
}

pub fn mean_ap(per_category: &BTreeMap<ReconLabel, f64>) -> Result<f64> {
    if per_category.is_empty() {
        return Err(Error::invalid("mean AP over an empty category set"));
    }
    Ok(per_category.values().fold(0.0, |a, b| a + b) / per_category.len() as f64)
}

/// TP / (TP + FP) under IoU matching; 0 without predictions.
pub fn recognition_precision(
    preds: &[PredictionRecord],
    gts: &[GtRecord],
    iou_threshold: f64,
    params: &MetricParams,
) -> Result<f64> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(format!("IoU threshold {iou_threshold} outside (0, 1)")));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let m = match_predictions(preds, gts, MetricKind::Iou, iou_threshold, params)?;
    Ok(m.iter().filter(|r| r.gt.is_some()).count() as f64 / m.len() as f64)
}

/// Drops predictions below the confidence floor, keeping order.
pub fn apply_conf_floor(preds: Vec<PredictionRecord>, floor: f64) -> Vec<PredictionRecord> {
    preds.into_iter().filter(|p| p.confidence >= floor).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub ap: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub threshold: f64,
    pub conf_floor: f64,
    pub scenes: usize,
    /// Categories with neither GT nor predictions are omitted.
    pub categories: Vec<CategoryReport>,
    pub map: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub precision: f64,
}

/// Per-scene inputs for dataset evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEval {
    pub preds: Vec<PredictionRecord>,
    pub gts: Vec<GtRecord>,
}

pub fn evaluate_dataset(
    scenes: &[SceneEval],
    labels: &LabelSystem,
    kind: MetricKind,
    threshold: f64,
    conf_floor: f64,
    params: &MetricParams,
) -> Result<EvalReport> {
    let filtered: Vec<Vec<PredictionRecord>> =
        scenes.iter().map(|s| apply_conf_floor(s.preds.clone(), conf_floor)).collect();
    let matches: Result<Vec<Vec<MatchRecord>>> = scenes
        .iter()
        .zip(&filtered)
        .map(|(s, p)| match_predictions(p, &s.gts, kind, threshold, params))
        .collect();
    let matches = matches?;
    // (confidence, scene, confidence rank, tp) per category
    let mut dets: BTreeMap<ReconLabel, Vec<(f64, usize, usize, bool)>> = BTreeMap::new();
    let mut n_gt: BTreeMap<ReconLabel, usize> = BTreeMap::new();
    for (si, (s, m)) in scenes.iter().zip(&matches).enumerate() {
        for g in &s.gts {
            *n_gt.entry(g.category).or_default() += 1;
        }
        for (rank, r) in m.iter().enumerate() {
            let p = &filtered[si][r.pred];
            dets.entry(p.category).or_default().push((p.confidence, si, rank, r.gt.is_some()));
        }
    }
    let mut cats: Vec<ReconLabel> = n_gt.keys().chain(dets.keys()).copied().collect();
    cats.sort();
    cats.dedup();
    let mut per_ap = BTreeMap::new();
    let mut categories = Vec::new();
    for c in cats {
        let mut d = dets.remove(&c).unwrap_or_default();
        d.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let flags: Vec<bool> = d.iter().map(|x| x.3).collect();
        let g = n_gt.get(&c).copied().unwrap_or(0);
        let ap = average_precision(&flags, g);
        per_ap.insert(c, ap);
        categories.push(CategoryReport {
            category: labels.recon_name(c).to_string(),
            ap,
            n_gt: g,
            n_pred: flags.len(),
            tp: flags.iter().filter(|&&f| f).count(),
        });
    }
    let map = if per_ap.is_empty() { None } else { Some(mean_ap(&per_ap)?) };
    let n_pred: usize = categories.iter().map(|c| c.n_pred).sum();
    let tp: usize = categories.iter().map(|c| c.tp).sum();
    Ok(EvalReport {
        metric: kind,
        threshold,
        conf_floor,
        scenes: scenes.len(),
        n_gt: categories.iter().map(|c| c.n_gt).sum(),
        n_pred,
        tp,
        precision: if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 },
        categories,
        map,
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        assert!((average_precision(&[true, false, true], 2) - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
        assert_eq!(average_precision(&[false, false], 3), 0.0);
        assert_eq!(average_precision(&[], 0), 1.0);
        assert_eq!(average_precision(&[false], 0), 0.0);
        assert_eq!(average_precision(&[], 2), 0.0);
    }

    #[test]
    fn map_examples() {
        let m: BTreeMap<_, _> = [(ReconLabel(0), 0.7)].into();
        assert_eq!(mean_ap(&m).unwrap(), 0.7);
        let m: BTreeMap<_, _> = [(ReconLabel(0), 0.2), (ReconLabel(3), 0.4)].into();
        assert!((mean_ap(&m).unwrap() - 0.3).abs() < 1e-15);
        assert!(mean_ap(&BTreeMap::new()).is_err());
    }

    fn sm(rows: Vec<Vec<Option<f64>>>, kind: MetricKind) -> ScoreMatrix {
        ScoreMatrix { kind, scores: rows }
    }

    #[test]
    fn greedy_claims_best_unmatched() {
        // pred 1 has the highest confidence and takes GT 0; pred 0 falls back to GT 1
        let s = sm(vec![vec![Some(0.9), Some(0.5)], vec![Some(0.8), Some(0.1)], vec![Some(0.7), Some(0.6)]], MetricKind::Iou);
        let m = match_scores(&[0.5, 0.9, 0.2], &s, 0.25);
        assert_eq!(m[0], MatchRecord { pred: 1, gt: Some(0), score: Some(0.8) });
        assert_eq!(m[1], MatchRecord { pred: 0, gt: Some(1), score: Some(0.5) });
        assert_eq!(m[2], MatchRecord { pred: 2, gt: None, score: None });
    }

    #[test]
    fn lower_is_better_kinds() {
        let s = sm(vec![vec![Some(0.3), Some(0.05)]], MetricKind::Cd);
        assert_eq!(match_scores(&[1.0], &s, 0.1)[0].gt, Some(1));
        assert_eq!(match_scores(&[1.0], &s, 0.01)[0].gt, None);
    }

    #[test]
    fn category_gate() {
        let cube = TriMesh::unit_cube();
        let p = PredictionRecord { mesh: cube.clone(), confidence: 0.9, category: ReconLabel(1) };
        let g = GtRecord { mesh: cube, instance_points: vec![Point3::origin()], category: ReconLabel(2) };
        let params = MetricParams { voxel: 0.1, ..Default::default() };
        let m = match_predictions(std::slice::from_ref(&p), std::slice::from_ref(&g), MetricKind::Iou, 0.25, &params).unwrap();
        assert_eq!(m[0].gt, None);
        let g2 = GtRecord { category: ReconLabel(1), ..g };
        let m = match_predictions(&[p], &[g2], MetricKind::Iou, 0.25, &params).unwrap();
        assert_eq!(m[0], MatchRecord { pred: 0, gt: Some(0), score: Some(1.0) });
    }
}

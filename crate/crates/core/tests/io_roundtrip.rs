use srk_core::bsp::BspDecoder;
use srk_core::eval::PredictionRecord;
use srk_core::io::{
    load_pool, load_proposals, load_scene, read_gt, read_pred, save_pool, save_proposals, save_scene, scan, write_gt,
    write_pred, GT_SUFFIX, PRED_SUFFIX,
};
use srk_core::labels::LabelSystem;
use srk_core::synth::{fixture_decoder, fixture_pool, gen_scene, SceneSpec};

#[test]
fn synthetic_scene_survives_disk() {
    let labels = LabelSystem::default();
    let s = gen_scene(&SceneSpec { seed: 12, code_sigma: 0.05, ..Default::default() }, &labels).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    save_scene(&s.scene, LabelSystem::DEFAULT_ID, &dir.join("a.scene.bin")).unwrap();
    let (scene, _) = load_scene(&dir.join("a.scene.bin"), Some(&labels)).unwrap();
    assert_eq!(scene, s.scene);

    save_proposals(&s.proposals, &dir.join("a.proposals.json")).unwrap();
    let back = load_proposals(&dir.join("a.proposals.json"), Some(scene.len())).unwrap();
    for (a, b) in back.iter().zip(&s.proposals) {
        assert_eq!(a.initial_box, b.initial_box);
        assert_eq!(a.residual, b.residual);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.confidence, b.confidence);
    }
    assert_eq!(back, s.proposals);
    assert!(load_proposals(&dir.join("a.proposals.json"), Some(10)).is_err());

    write_gt(&dir.join("gt"), "a", &s.gts).unwrap();
    let (name, gts) = read_gt(&dir.join("gt").join(format!("a{GT_SUFFIX}"))).unwrap();
    assert_eq!(name, "a");
    assert_eq!(gts.len(), s.gts.len());
    for (g, want) in gts.iter().zip(&s.gts) {
        assert_eq!(g.category, want.category);
        assert_eq!(g.mesh.vertices, want.mesh.vertices);
        assert_eq!(g.mesh.triangles, want.mesh.triangles);
        assert_eq!(g.instance_points, want.instance_points);
    }

    let preds: Vec<PredictionRecord> = s
        .gts
        .iter()
        .enumerate()
        .map(|(i, g)| PredictionRecord { mesh: g.mesh.clone(), confidence: 1.0 / (i + 1) as f64, category: g.category })
        .collect();
    for ext in ["ply", "obj"] {
        let out = dir.join(format!("pred_{ext}"));
        write_pred(&out, "a", &preds, None, ext).unwrap();
        let found = scan(&out, PRED_SUFFIX).unwrap();
        let (_, back) = read_pred(&found["a"]).unwrap();
        for (p, want) in back.iter().zip(&preds) {
            assert_eq!(p.confidence, want.confidence);
            assert_eq!(p.category, want.category);
            assert_eq!(p.mesh.triangles, want.mesh.triangles);
            let err = p.mesh.vertices.iter().zip(&want.mesh.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert_eq!(err, 0.0, "{ext}");
        }
    }
}

#[test]
fn decoder_and_pool_survive_disk() {
    let labels = LabelSystem::default();
    let tmp = tempfile::tempdir().unwrap();
    let dec = fixture_decoder();
    dec.save(&tmp.path().join("d.bin")).unwrap();
    assert_eq!(BspDecoder::load(&tmp.path().join("d.bin")).unwrap(), dec);

    let (pool, _) = fixture_pool(&labels).unwrap();
    save_pool(&pool, &tmp.path().join("p.bin")).unwrap();
    assert_eq!(load_pool(&tmp.path().join("p.bin")).unwrap(), pool);

    std::fs::write(tmp.path().join("bad.bin"), b"not a pool").unwrap();
    assert!(load_pool(&tmp.path().join("bad.bin")).is_err());
    assert!(BspDecoder::load(&tmp.path().join("bad.bin")).is_err());
}

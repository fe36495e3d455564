use botl_core::cdd::{CddConfig, CddError, CddEvent, Detector, DetectorKind, Mode};
use botl_core::streams::{hyperplane_stream, Instance, StreamConfig, Variant};
use botl_core::ModelId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 30;

/// Noise-free hyperplane rows following `triples[segment]`, `seg_len` rows each.
fn scripted(triples: &[[usize; 3]], seg_len: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (s, tri) in triples.iter().enumerate() {
        for _ in 0..seg_len {
            let x: Vec<f64> = (0..10).map(|_| rng.random()).collect();
            let y = tri.iter().map(|&i| x[i]).sum::<f64>() / 3.0;
            let t = out.len();
            out.push(Instance::new(x, y, t).with_concept(s as u32));
        }
    }
    out
}

fn run(kind: DetectorKind, rows: &[Instance]) -> (Detector, Vec<(usize, CddEvent)>) {
    let mut det = Detector::new(0, CddConfig::with_kind(kind, W));
    let mut events = Vec::new();
    for r in rows {
        let out = det.step(r.clone());
        if let CddEvent::Drift { .. } = out.event {
            events.push((r.index, out.event));
        }
    }
    (det, events)
}

const A: [usize; 3] = [0, 1, 2];
const B: [usize; 3] = [5, 7, 9];

#[test]
fn drift_free_stream_keeps_one_model() {
    let rows = scripted(&[A], 2_000, 1);
    for kind in [DetectorKind::Repro, DetectorKind::Adwin, DetectorKind::Awpro] {
        let (det, events) = run(kind, &rows);
        assert!(events.is_empty(), "{kind:?}: {events:?}");
        assert_eq!(det.models().len(), 1, "{kind:?}");
        assert_eq!(det.mode(), Mode::Stable);
    }
}

#[test]
fn stationary_noisy_stream_has_no_repro_drift() {
    let cfg = StreamConfig::hyperplane(Variant::A, 1_000, 0, 3);
    let rows: Vec<Instance> = hyperplane_stream(&cfg).unwrap().collect();
    let (_, events) = run(DetectorKind::Repro, &rows);
    assert!(events.is_empty(), "{events:?}");
}

#[test]
fn repro_detects_sudden_flip_within_two_windows() {
    let rows = scripted(&[A, B], 500, 2);
    let (_, events) = run(DetectorKind::Repro, &rows);
    let (at, _) = events.first().expect("drift detected");
    assert!(*at >= 500 && *at < 500 + 2 * W, "{at}");
}

#[test]
fn repro_reuses_model_on_recurrence() {
    let rows = scripted(&[A, B, A], 500, 3);
    let (det, events) = run(DetectorKind::Repro, &rows);
    assert_eq!(events.len(), 2, "{events:?}");
    let CddEvent::Drift { model, reused, .. } = events[1].1 else { unreachable!() };
    assert!(reused);
    assert_eq!(model, ModelId::new(0, 0));
    // Oracle: the reused model was trained on the same ground-truth concept.
    assert_eq!(det.model(model).unwrap().true_concept, Some(0));
    assert_eq!(rows[events[1].0].concept, Some(2));
}

#[test]
fn awpro_window_after_drift_is_post_boundary() {
    for seed in 0..5 {
        let rows = scripted(&[A, B], 600, 10 + seed);
        let mut det = Detector::new(0, CddConfig::with_kind(DetectorKind::Awpro, W));
        let mut checked = false;
        for r in &rows {
            let out = det.step(r.clone());
            if let CddEvent::Drift { boundary, .. } = out.event {
                let boundary = boundary.expect("ADWIN reports a boundary");
                let w = det.window();
                assert!(w.iter().all(|x| x.index >= boundary));
                let post = w.iter().filter(|x| x.index >= 600).count();
                assert!(post as f64 >= 0.9 * w.len() as f64, "seed {seed}: {post}/{}", w.len());
                checked = true;
                break;
            }
        }
        assert!(checked, "seed {seed}: no drift");
    }
}

#[test]
fn awpro_reuses_where_adwin_cannot() {
    let rows = scripted(&[A, B, A, B], 600, 4);
    let (_, adwin) = run(DetectorKind::Adwin, &rows);
    let (_, awpro) = run(DetectorKind::Awpro, &rows);
    let reuses = |ev: &[(usize, CddEvent)]| {
        ev.iter().filter(|(_, e)| matches!(e, CddEvent::Drift { reused: true, .. })).count()
    };
    assert_eq!(reuses(&adwin), 0);
    assert!(!adwin.is_empty());
    assert!(reuses(&awpro) >= 1, "{awpro:?}");
}

#[test]
fn stability_after_a_full_window() {
    let rows = scripted(&[A], 200, 5);
    let mut det = Detector::new(0, CddConfig::with_kind(DetectorKind::Repro, W));
    let mut stabilized_at = None;
    for r in &rows {
        if let Some(id) = det.step(r.clone()).stabilized {
            assert_eq!(id, ModelId::new(0, 0));
            stabilized_at.get_or_insert(r.index);
        }
    }
    // Created on the second row, then survives W further instances.
    assert_eq!(stabilized_at, Some(1 + W));
    assert_eq!(det.is_stable(ModelId::new(0, 0)), Ok(true));
    assert_eq!(det.is_stable(ModelId::new(0, 9)), Err(CddError::UnknownModel(ModelId::new(0, 9))));
}

#[test]
fn model_replaced_before_a_full_window_is_not_stable() {
    let first = scripted(&[A, B], 300, 6);
    let (_, events) = run(DetectorKind::Repro, &first);
    let created = events[0].0;
    // Switch back to A shortly after model 1 finishes learning, so its drift
    // lands before W post-creation instances.
    let mut rows: Vec<Instance> = first[..created + 17].to_vec();
    for r in scripted(&[A], 300, 7) {
        let t = rows.len();
        rows.push(Instance { index: t, ..r });
    }
    let (det, events) = run(DetectorKind::Repro, &rows);
    assert_eq!(events.len(), 2, "{events:?}");
    assert!(!det.model(ModelId::new(0, 1)).unwrap().stable);
}

#[test]
fn reused_model_keeps_stable_flag() {
    let rows = scripted(&[A, B, A], 500, 8);
    let mut det = Detector::new(0, CddConfig::with_kind(DetectorKind::Repro, W));
    for r in &rows {
        let out = det.step(r.clone());
        if let CddEvent::Drift { model, reused: true, .. } = out.event {
            assert!(det.is_stable(model).unwrap());
            // Reactivation never reports a second stabilisation.
            assert_ne!(out.stabilized, Some(model));
        }
    }
}

#[test]
fn resolve_before_min_fill_is_cold_start() {
    let mut det = Detector::new(0, CddConfig::with_kind(DetectorKind::Repro, W));
    for r in scripted(&[A], 3, 9) {
        det.step(r);
    }
    assert_eq!(det.resolve_drift(3), Err(CddError::ColdStart { have: 3, need: W / 2 }));
}

use fbpstream::domain::{Curve, StreamBatch, TimeGrid, Window};
use fbpstream::fboxplot::BoxplotCurves;
use fbpstream::ingest::{batches_from_rows, generate_synth, planted_regimes, Generator, Regime, SynthSpec};
use fbpstream::macrocluster::{summarize_slot, weighted_kmeans, MacroConfig};
use fbpstream::smoothing::SmoothingConfig;
use fbpstream::snapshot::{take_snapshot, SnapshotCatalog};
use fbpstream::stream::{fbp_distance, l2_distance, AllocationOutcome, OnlineConfig, OnlinePhase, StoreConfig};
use fbpstream::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(w: usize) -> TimeGrid {
    TimeGrid::new(w).unwrap()
}

/// Squared difference sampled ten times finer, linearly interpolated between
/// grid points, integrated with the composite trapezoid rule.
fn fine_l2(f: &[f64], h: &[f64]) -> f64 {
    let sq: Vec<f64> = f.iter().zip(h).map(|(a, b)| (a - b).powi(2)).collect();
    let refine = 10;
    let step = 1.0 / refine as f64;
    let mut total = 0.0;
    for t in 0..sq.len() - 1 {
        for s in 0..refine {
            let x0 = s as f64 * step;
            let x1 = x0 + step;
            let y0 = sq[t] * (1.0 - x0) + sq[t + 1] * x0;
            let y1 = sq[t] * (1.0 - x1) + sq[t + 1] * x1;
            total += 0.5 * step * (y0 + y1);
        }
    }
    total.sqrt()
}

fn random_boxplot(rng: &mut ChaCha8Rng, w: usize) -> BoxplotCurves {
    let mut cols: Vec<[f64; 5]> = (0..w)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-5.0..5.0)))
        .collect();
    for c in cols.iter_mut() {
        c.sort_by(f64::total_cmp);
    }
    BoxplotCurves::new(std::array::from_fn(|k| {
        Curve::new(grid(w), cols.iter().map(|c| c[k]).collect()).unwrap()
    }))
    .unwrap()
}

#[test]
fn distance_matches_fine_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let w = rng.gen_range(2..=60);
        let (a, b) = (random_boxplot(&mut rng, w), random_boxplot(&mut rng, w));
        let oracle: f64 = a
            .components()
            .iter()
            .zip(b.components())
            .map(|(x, y)| fine_l2(x.values(), y.values()))
            .sum();
        let d = fbp_distance(&a, &b).unwrap();
        assert!((d - oracle).abs() <= 1e-6 * oracle.max(1e-300), "{d} vs {oracle}");
        let l2 = l2_distance(&a.median, &b.median).unwrap();
        assert!((l2 - fine_l2(a.median.values(), b.median.values())).abs() <= 1e-9 * l2.max(1.0));
    }
}

#[test]
fn distance_on_mismatched_grids_is_a_data_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (a, b) = (random_boxplot(&mut rng, 10), random_boxplot(&mut rng, 11));
    assert!(matches!(fbp_distance(&a, &b), Err(Error::Data(_))));
}

proptest! {
    #[test]
    fn distance_scales_with_the_data(seed in 0u64..1000, alpha in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_boxplot(&mut rng, 30), random_boxplot(&mut rng, 30));
        let scale = |x: &BoxplotCurves| x.map(|c| c.scale(alpha));
        let d = fbp_distance(&a, &b).unwrap();
        let ds = fbp_distance(&scale(&a), &scale(&b)).unwrap();
        prop_assert!((ds - alpha * d).abs() <= 1e-9 * (alpha * d).max(1.0));
    }

    #[test]
    fn integer_weight_scaling_keeps_the_partition(seed in 0u64..200, m in 2u32..9, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(k..12);
        let points: Vec<BoxplotCurves> = (0..n).map(|_| random_boxplot(&mut rng, 8)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(1..10) as f64).collect();
        let scaled: Vec<f64> = weights.iter().map(|w| w * m as f64).collect();
        let a = weighted_kmeans(&points, &weights, MacroConfig::new(k, seed)).unwrap();
        let b = weighted_kmeans(&points, &scaled, MacroConfig::new(k, seed)).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        for (x, y) in a.macro_centroids.iter().zip(&b.macro_centroids) {
            prop_assert!(fbp_distance(x, y).unwrap() <= 1e-9);
        }
    }
}

fn constant_batch(index: u64, levels: &[f64], w: usize) -> StreamBatch {
    StreamBatch::new(Window::new(index, w), levels.iter().map(|&v| vec![v; w]).collect()).unwrap()
}

#[test]
fn three_constant_streams_make_a_centered_boxplot() {
    let mut phase = OnlinePhase::new(OnlineConfig::for_window(30)).unwrap();
    let out = phase.process_window(&constant_batch(0, &[0.0, 1.0, 2.0], 30)).unwrap();
    assert_eq!(out, AllocationOutcome::Created(1));
    let c = &phase.store().get(1).unwrap().centroid.curves;
    assert!(c.median.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
    assert!(c.box_lower.values().iter().all(|v| v.abs() < 1e-9));
    assert!(c.box_upper.values().iter().all(|v| (v - 1.0).abs() < 1e-9));

    // second identical window still creates, and the threshold is zero
    let out = phase.process_window(&constant_batch(1, &[0.0, 1.0, 2.0], 30)).unwrap();
    assert_eq!(out, AllocationOutcome::Created(2));
    assert_eq!(phase.store().len(), 2);
    assert_eq!(phase.store().threshold(), Some(0.0));
}

#[test]
fn noiseless_regimes_allocate_every_later_window() {
    // first two windows come from different regimes, so the threshold is
    // positive and every later window coincides with one centroid
    let w = 30;
    let a = [0.0, 1.0, 2.0, 3.0];
    let b = [10.0, 12.0, 14.0, 16.0];
    let pattern = [0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 1];
    let mut cfg = OnlineConfig::for_window(w);
    cfg.smoothing = SmoothingConfig::disabled(w);
    let mut phase = OnlinePhase::new(cfg).unwrap();
    for (j, &r) in pattern.iter().enumerate() {
        let levels = if r == 0 { &a } else { &b };
        phase.process_window(&constant_batch(j as u64, levels, w)).unwrap();
    }
    let store = phase.store();
    assert_eq!(store.len(), 2);
    let count = |r| pattern.iter().filter(|&&x| x == r).count() as u64;
    assert_eq!(store.get(1).unwrap().n_allocated, count(0));
    assert_eq!(store.get(2).unwrap().n_allocated, count(1));
}

#[test]
fn planted_run_respects_bounds_and_summarizes() {
    let spec = planted_regimes(30, 200 * 30, 30, 5, 4);
    let batches = batches_from_rows(&generate_synth(&spec).unwrap(), 30).unwrap();
    let mut phase = OnlinePhase::new(OnlineConfig::for_window(30)).unwrap();
    let mut catalog = SnapshotCatalog::new();
    catalog.push(take_snapshot(phase.store(), 0)).unwrap();
    for b in &batches {
        phase.process_window(b).unwrap();
        assert!(phase.store().len() <= 50);
        if phase.windows_processed().is_multiple_of(10) {
            catalog.push(take_snapshot(phase.store(), phase.windows_processed())).unwrap();
        }
    }
    catalog.set_events(phase.store().events().to_vec());
    let s = summarize_slot(&catalog, 0, 200, MacroConfig::new(4, 1)).unwrap();
    assert_eq!(s.macro_centroids.len(), 4);
    let total: f64 = s.macro_weights.iter().sum();
    let slot = catalog.recover(0, 200).unwrap();
    assert_eq!(total, slot.total_weight() as f64);

    // a single macro-cluster is the weighted mean of the slot
    let one = summarize_slot(&catalog, 0, 200, MacroConfig::new(1, 1)).unwrap();
    let mean = BoxplotCurves::weighted_mean(slot.entries.iter().map(|e| (&e.centroid, e.weight as f64))).unwrap();
    assert!(fbp_distance(&one.macro_centroids[0], &mean).unwrap() < 1e-9);

    // slots beyond the catalog are refused
    assert!(matches!(summarize_slot(&catalog, 300, 400, MacroConfig::new(2, 1)), Err(Error::Query(_))));
}

#[test]
fn synthetic_regime_means_separate() {
    let spec = SynthSpec {
        n_streams: 6,
        total_length: 240,
        window_size: 30,
        regimes: vec![
            Regime {
                start_window: 0,
                end_window: 4,
                generator: Generator::Constant { level: 0.0, spread: 0.0 },
                noise_sd: 0.0,
            },
            Regime {
                start_window: 4,
                end_window: 8,
                generator: Generator::Constant { level: 10.0, spread: 0.0 },
                noise_sd: 0.0,
            },
        ],
        seed: 1,
    };
    let batches = batches_from_rows(&generate_synth(&spec).unwrap(), 30).unwrap();
    let mean = |b: &StreamBatch| b.raw().iter().flatten().sum::<f64>() / (6.0 * 30.0);
    assert_eq!(mean(&batches[4]) - mean(&batches[3]), 10.0);
    let mut overlapping = spec.clone();
    overlapping.regimes[1].start_window = 3;
    assert!(matches!(generate_synth(&overlapping), Err(Error::Config(_))));
}

#[test]
fn small_store_merges_and_conserves() {
    let spec = planted_regimes(10, 120 * 30, 30, 3, 2);
    let batches = batches_from_rows(&generate_synth(&spec).unwrap(), 30).unwrap();
    let mut cfg = OnlineConfig::for_window(30);
    cfg.store = StoreConfig { k_max: 3, t_star: 1000 };
    let mut phase = OnlinePhase::new(cfg).unwrap();
    for b in &batches {
        phase.process_window(b).unwrap();
    }
    let s = phase.store();
    assert!(s.len() <= 3);
    assert_eq!(s.discarded_weight(), 0);
    assert_eq!(s.allocated_weight(), 120);
}

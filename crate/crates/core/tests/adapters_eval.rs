use image::RgbImage;
use proptest::prelude::*;

use realexp::adapters::{
    apply_mask, grid_segment, load_image, load_segment_map, render_overlay, AdaptedInstance, FillPolicy, OverlayStyle,
    Payload, TabularDataset,
};
use realexp::evaluation::{jaccard_stability, kendall_tau, r_squared, ExpertAnnotation, ModelRanking};
use realexp::perturbation::Mask;
use realexp::pipeline::{explain, RunConfig};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

#[test]
fn pgm_and_json_segment_maps_agree() {
    let pgm = load_segment_map(format!("{FIXTURES}/segments.pgm")).unwrap();
    let json = load_segment_map(format!("{FIXTURES}/segments.json")).unwrap();
    assert_eq!(pgm, json);
    assert_eq!((pgm.width(), pgm.height(), pgm.len()), (4, 3, 4));
    assert_eq!(pgm.segment_sizes(), vec![4, 4, 2, 2]);

    let image = load_image(format!("{FIXTURES}/tiny.ppm")).unwrap();
    let a = AdaptedInstance::image(image.clone(), pgm, FillPolicy::Zero).unwrap();
    let b = AdaptedInstance::image(image, json, FillPolicy::Zero).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grid_segments_tile_the_image() {
    let map = grid_segment(7, 5, 2, 3).unwrap();
    assert_eq!(map.len(), 6);
    assert_eq!(map.segment_sizes().iter().sum::<usize>(), 35);
    assert!(grid_segment(2, 2, 3, 1).is_err());
}

#[test]
fn masked_segments_take_the_fill() {
    let image = load_image(format!("{FIXTURES}/tiny.ppm")).unwrap();
    let map = load_segment_map(format!("{FIXTURES}/segments.pgm")).unwrap();
    let mask = Mask::with_masked(4, &[1, 2]);

    let zero = AdaptedInstance::image(image.clone(), map.clone(), FillPolicy::Zero).unwrap();
    let Payload::Image { pixels, masked_segments, .. } = apply_mask(&zero, &mask).unwrap() else { panic!() };
    assert_eq!(masked_segments, vec![1, 2]);
    for (x, y, p) in pixels.enumerate_pixels() {
        let label = map.label(x, y);
        if label == 1 || label == 2 {
            assert_eq!(p.0, [0, 0, 0]);
        } else {
            assert_eq!(p, image.get_pixel(x, y));
        }
    }

    // per-channel mean of the fixture, rounded
    let mean = |c: usize| (image.pixels().map(|p| f64::from(p.0[c])).sum::<f64>() / 12.0).round() as u8;
    let filled = AdaptedInstance::image(image.clone(), map.clone(), FillPolicy::Mean).unwrap();
    let Payload::Image { pixels, .. } = apply_mask(&filled, &mask).unwrap() else { panic!() };
    assert_eq!(pixels.get_pixel(2, 0).0, [mean(0), mean(1), mean(2)]);

    let wrong = grid_segment(3, 3, 1, 1).unwrap();
    assert!(AdaptedInstance::image(image, wrong, FillPolicy::Zero).is_err());
}

#[test]
fn text_masking_drops_tokens() {
    let words: Vec<String> = "the cat sat on the mat".split(' ').map(str::to_owned).collect();
    let instance = AdaptedInstance::text(words).unwrap();
    let Payload::Text { tokens, kept } = apply_mask(&instance, &Mask::with_masked(6, &[0, 4])).unwrap() else {
        panic!()
    };
    assert_eq!(tokens, vec!["cat", "sat", "on", "mat"]);
    assert_eq!(kept, vec![false, true, true, true, false, true]);
    assert!(apply_mask(&instance, &Mask::all_kept(5)).is_err());
    assert!(AdaptedInstance::text(vec![String::new()]).is_err());
}

#[test]
fn tabular_rows_use_column_means() {
    let data = TabularDataset::load(format!("{FIXTURES}/dup_columns.csv")).unwrap();
    assert_eq!(data.headers, vec!["a", "b", "c", "d"]);
    assert_eq!(data.column(0), data.column(1));
    let instance = data.instance(1).unwrap();
    let means = data.column_means();
    let Payload::Tabular(x) = apply_mask(&instance, &Mask::with_masked(4, &[2])).unwrap() else { panic!() };
    assert_eq!(x, vec![data.rows[1][0], data.rows[1][1], means[2], data.rows[1][3]]);
    assert_eq!(instance.labels().unwrap(), data.headers);
    assert!(data.instance(data.rows.len()).is_err());
}

#[test]
fn image_overlay_end_to_end() {
    let config = RunConfig::load(format!("{FIXTURES}/image_run.json")).unwrap();
    let report = explain(&config).unwrap();
    // the builtin scores segment presence with weights 4, 0.5, 2, 1
    assert_eq!(&report.ranking[..2], &[0, 2]);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("overlay.ppm");
    let instance = config.adapt_instance().unwrap();
    let written = render_overlay(&instance, &report.attribution, &OverlayStyle::top_k(2), &out).unwrap();
    assert_eq!(written.ranking, report.ranking);

    let original = load_image(format!("{FIXTURES}/tiny.ppm")).unwrap();
    let shaded: RgbImage = load_image(&out).unwrap();
    let map = load_segment_map(format!("{FIXTURES}/segments.pgm")).unwrap();
    for (x, y, p) in shaded.enumerate_pixels() {
        let o = original.get_pixel(x, y).0;
        let expect = if matches!(map.label(x, y), 0 | 2) {
            o
        } else {
            o.map(|c| (f64::from(c) * 0.3).round() as u8)
        };
        assert_eq!(p.0, expect, "pixel {x},{y}");
    }
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(written.sidecar).unwrap()).unwrap();
    assert_eq!(sidecar["ranking"][0], 0);

    let text = AdaptedInstance::text(vec!["a".into()]).unwrap();
    assert!(render_overlay(&text, &report.attribution, &OverlayStyle::heat_ramp(), dir.path().join("x.ppm")).is_err());
}

/// Kendall's tau by direct definition over matched items, ordered by expert rank.
fn tau_oracle(expert: &[usize], model: &[usize]) -> Option<f64> {
    let matched: Vec<usize> = expert.iter().copied().filter(|i| model.contains(i)).collect();
    if matched.len() < 2 {
        return None;
    }
    let pos = |i: usize| model.iter().position(|&k| k == i).unwrap();
    let mut score = 0.0;
    let mut pairs = 0.0;
    for a in 0..matched.len() {
        for b in a + 1..matched.len() {
            score += if pos(matched[a]) < pos(matched[b]) { 1.0 } else { -1.0 };
            pairs += 1.0;
        }
    }
    Some(score / pairs)
}

fn distinct(len: usize, universe: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..universe).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| v[..len].to_vec())
}

proptest! {
    #[test]
    fn jaccard_is_symmetric_and_bounded(a in distinct(4, 10), b in distinct(4, 10)) {
        let ab = jaccard_stability(&[a.clone(), b.clone()]).unwrap();
        let ba = jaccard_stability(&[b, a.clone()]).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(jaccard_stability(&[a.clone(), a]).unwrap(), 1.0);
    }

    #[test]
    fn r_squared_ignores_shared_shift_and_scale(
        y in prop::collection::vec(-10.0f64..10.0, 3..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
        let p: Vec<f64> = y.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let base = r_squared(&y, &p).unwrap().value;
        let y2: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
        let p2: Vec<f64> = p.iter().map(|v| v * scale + shift).collect();
        prop_assert!((r_squared(&y2, &p2).unwrap().value - base).abs() < 1e-8);
        prop_assert!(base <= 1.0);
    }

    #[test]
    fn kendall_matches_definition(expert in distinct(5, 8), model in distinct(5, 8)) {
        let r = kendall_tau(&ExpertAnnotation::new(expert.clone()).unwrap(), &ModelRanking::new(model.clone()).unwrap()).unwrap();
        match tau_oracle(&expert, &model) {
            Some(t) => prop_assert!((r.tau - t).abs() < 1e-12 && !r.tau_undefined),
            None => prop_assert!(r.tau_undefined && r.tau == 0.0),
        }
        prop_assert!((-1.0..=1.0).contains(&r.tau));
    }

    #[test]
    fn reversed_ranking_gives_minus_one(items in distinct(6, 12)) {
        let reversed: Vec<usize> = items.iter().rev().copied().collect();
        let expert = ExpertAnnotation::new(items.clone()).unwrap();
        prop_assert_eq!(kendall_tau(&expert, &ModelRanking::new(reversed).unwrap()).unwrap().tau, -1.0);
        prop_assert_eq!(kendall_tau(&expert, &ModelRanking::new(items).unwrap()).unwrap().tau, 1.0);
    }
}

//! Encoding and decoding against hand-built maps and random pages.

mod common;

use common::oracles;
use hrcenternet::codec::{decode_detections, encode_targets, CodecConfig};
use hrcenternet::geom::BBox;
use proptest::prelude::*;
use rand::SeedableRng;

#[test]
fn roundtrip_on_random_pages() {
    oracles::codec_roundtrip().unwrap();
}

#[test]
fn gaussian_values() {
    oracles::gaussian_encoding().unwrap();
}

#[test]
fn decode_matches_hand_simulation() {
    oracles::decode_protocol().unwrap();
}

#[test]
fn neighbouring_centers_form_one_plateau() {
    // Both centers hold exactly 1.0 on adjacent pixels; the tie rule keeps
    // the one that comes first in (y, x) order.
    let cfg = CodecConfig::default();
    let boxes = [BBox::new(42.0, 50.0, 12.0, 12.0).unwrap(), BBox::new(46.0, 50.0, 12.0, 12.0).unwrap()];
    let t = encode_targets(&boxes, 128, 128, &cfg).unwrap();
    assert_eq!(t.centers().len(), 2);
    let dets = decode_detections(&t.as_prediction(), 128, 128, &cfg).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].bbox.cx(), 42.0);
}

#[test]
fn detections_come_best_first() {
    let cfg = CodecConfig::default();
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let boxes = oracles::separable_boxes(&mut r, 6, &cfg);
    let t = encode_targets(&boxes, 128, 128, &cfg).unwrap();
    let mut out = t.as_prediction();
    for (i, (x, y)) in t.centers().into_iter().enumerate() {
        out.heatmap.set(0, y, x, 0.95 - 0.1 * i as f32);
    }
    let dets = decode_detections(&out, 128, 128, &cfg).unwrap();
    assert!(dets.windows(2).all(|p| p[0].score >= p[1].score));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separable_pages_roundtrip(seed in any::<u64>(), n in 1usize..10) {
        let cfg = CodecConfig::default();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let boxes = oracles::separable_boxes(&mut r, n, &cfg);
        let t = encode_targets(&boxes, 128, 128, &cfg).unwrap();
        prop_assert_eq!(t.collisions, 0);
        prop_assert!(t.heatmap.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let dets = decode_detections(&t.as_prediction(), 128, 128, &cfg).unwrap();
        prop_assert_eq!(dets.len(), boxes.len());
        for b in &boxes {
            let hit = dets.iter().any(|d| {
                (d.bbox.cx() - b.cx()).abs() < 1e-3
                    && (d.bbox.cy() - b.cy()).abs() < 1e-3
                    && (d.bbox.w() - b.w()).abs() < 1e-3
                    && (d.bbox.h() - b.h()).abs() < 1e-3
            });
            prop_assert!(hit, "box {:?} not recovered", b);
        }
    }

    #[test]
    fn heatmap_peaks_sit_on_the_mask(seed in any::<u64>(), n in 1usize..10) {
        let cfg = CodecConfig::default();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let boxes = oracles::separable_boxes(&mut r, n, &cfg);
        let t = encode_targets(&boxes, 128, 128, &cfg).unwrap();
        for (x, y) in t.centers() {
            prop_assert_eq!(t.heatmap.get(0, y, x), 1.0);
        }
        let ones = t.heatmap.as_slice().iter().filter(|&&v| v == 1.0).count();
        prop_assert_eq!(ones, t.centers().len());
    }
}

mod common;

use proptest::prelude::*;
use trackforge::{filter_short, filter_static, temporal_nms, viou, FlowField, FlowSequence, Track};

use common::{int_track, rng};

fn random_tracks(seed: u64, n: usize) -> Vec<Track<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            use rand::Rng;
            let start = r.random_range(0..4);
            let len = r.random_range(1..6);
            let mut t = int_track(&mut r, i as u64, start, len);
            t.rank_score = r.random_range(0..5) as f64 / 4.0;
            t
        })
        .collect()
}

fn ids(ts: &[Track<f64>]) -> Vec<u64> {
    ts.iter().map(|t| t.id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nms_survivors_form_an_antichain(seed in any::<u64>(), n in 0usize..12, thr in 0.05..1.0f64) {
        let kept = temporal_nms(random_tracks(seed, n), thr);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(viou(a, b) <= thr);
            }
        }
    }

    #[test]
    fn nms_ignores_positive_rescaling(seed in any::<u64>(), n in 0usize..12, scale in 0.01..100.0f64) {
        let tracks = random_tracks(seed, n);
        let scaled: Vec<_> = tracks.iter().cloned().map(|mut t| { t.rank_score *= scale; t }).collect();
        prop_assert_eq!(ids(&temporal_nms(tracks, 0.3)), ids(&temporal_nms(scaled, 0.3)));
    }

    #[test]
    fn filters_are_idempotent_and_commute(seed in any::<u64>(), n in 0usize..12, l in 1usize..6, s in 0.0..3.0f64) {
        let tracks = random_tracks(seed, n);
        // Motion 2 on the left half of the canvas, none on the right.
        let flows = FlowSequence::new((0..12).map(|f| {
            FlowField::from_fn(16, 16, f, |px, _| if px < 6 { (2.0, 0.0) } else { (0.0, 0.0) }).unwrap()
        }));
        let short = filter_short(tracks.clone(), l);
        prop_assert_eq!(&filter_short(short.clone(), l), &short);
        let still = filter_static(tracks.clone(), &flows, s).unwrap();
        prop_assert_eq!(&filter_static(still.clone(), &flows, s).unwrap(), &still);
        let a = filter_static(short, &flows, s).unwrap();
        let b = filter_short(still, l);
        prop_assert_eq!(a, b);
    }
}

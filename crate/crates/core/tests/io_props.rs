use proptest::prelude::*;
use trackforge::io::{read_probs, read_tracks, write_probs, write_tracks};
use trackforge::{BBox, BoxRef, ProbVector, Track, TrackEntry};

fn any_box() -> impl Strategy<Value = BBox<f64>> {
    (-1e6..1e6f64, -1e6..1e6f64, 1e-9..1e6f64, 1e-9..1e6f64, 0.0..=1.0f64)
        .prop_map(|(x, y, w, h, s)| BBox::new(x, y, w, h, s).unwrap())
}

fn any_track() -> impl Strategy<Value = Track<f64>> {
    (
        any::<u64>(),
        "[a-z0-9_]{1,8}",
        0u32..1000,
        prop::collection::vec((any_box(), any::<bool>(), 0.0..=1.0f64, 0u32..50), 1..12),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    )
        .prop_map(|(id, video, start, raw, rank)| {
            let last = raw.len() - 1;
            let entries = raw
                .into_iter()
                .enumerate()
                .map(|(i, (b, interp, m, k))| {
                    let f = start + i as u32;
                    if interp && i != 0 && i != last {
                        TrackEntry::interpolated(f, BBox { score: 0.0, ..b })
                    } else {
                        TrackEntry::matched(f, b, (i > 0).then_some(m), Some(k))
                    }
                })
                .collect();
            let mut t = Track::from_entries(id, video, entries);
            t.refresh_scores();
            t.rank_score = rank;
            t
        })
}

proptest! {
    #[test]
    fn tracks_round_trip_exactly(tracks in prop::collection::vec(any_track(), 0..5)) {
        let mut buf = Vec::new();
        write_tracks(&tracks, &mut buf).unwrap();
        let back: Vec<Track<f64>> = read_tracks(buf.as_slice()).unwrap();
        prop_assert_eq!(back, tracks);
    }

    #[test]
    fn probs_round_trip_exactly(rows in prop::collection::vec(prop::collection::vec(1e-12..1.0f64, 7), 1..6)) {
        let vectors: Vec<ProbVector<f64>> = rows
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let s: f64 = w.iter().sum();
                ProbVector::new(BoxRef::new("v", i as u32, 0), w.iter().map(|x| x / s).collect()).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_probs(7, &vectors, &mut buf).unwrap();
        let table = read_probs::<f64, _>(buf.as_slice()).unwrap();
        prop_assert_eq!(table.records.into_values().collect::<Vec<_>>(), vectors);
    }
}

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use trackforge::synth::oracle_build_tracks;
use trackforge::{build_tracks, BBox, BuilderConfig, FlowSequence, FrameProposals, Provenance, Track, ZeroFlow};

use common::{random_instance, rng};

fn check_invariants(tracks: &[Track<f64>], cfg: &BuilderConfig) -> Result<(), TestCaseError> {
    let mut claimed = HashSet::new();
    for t in tracks {
        t.validate().map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (i, e) in t.entries.iter().enumerate() {
            match e.provenance {
                Provenance::Matched => {
                    prop_assert!(claimed.insert((e.frame, e.proposal.unwrap())), "box claimed twice");
                    if i == 0 {
                        prop_assert!(e.match_iou.is_none());
                    } else {
                        prop_assert!(e.match_iou.unwrap() > cfg.theta_tau);
                    }
                }
                Provenance::Interpolated => prop_assert!(e.match_iou.is_none()),
            }
        }
        // A run of misses of length gamma would have ended the track.
        let mut run = 0;
        for e in &t.entries {
            run = if e.is_matched() { 0 } else { run + 1 };
            prop_assert!(run < cfg.gamma as usize);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn builder_equals_oracle(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 6, 6);
        let fast = build_tracks(&inst.frames, &inst.flows, &inst.cfg).unwrap();
        let slow = oracle_build_tracks(&inst.frames, &inst.flows, &inst.cfg).unwrap();
        prop_assert_eq!(&fast, &slow);
        check_invariants(&fast, &inst.cfg)?;
    }

    #[test]
    fn builder_is_deterministic(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 8, 8);
        let a = build_tracks(&inst.frames, &inst.flows, &inst.cfg).unwrap();
        let b = build_tracks(&inst.frames, &inst.flows, &inst.cfg).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn stationary_object_gives_one_track(
        x in 0.0..50.0f64, y in 0.0..50.0f64, w in 1.0..30.0f64, h in 1.0..30.0f64, n in 1u32..20
    ) {
        let b = BBox::new(x, y, w, h, 0.7).unwrap();
        let frames: Vec<_> = (0..n).map(|f| FrameProposals::new("v", f, vec![b])).collect();
        let tracks = build_tracks(&frames, &ZeroFlow, &BuilderConfig::default()).unwrap();
        prop_assert_eq!(tracks.len(), 1);
        prop_assert_eq!(tracks[0].len(), n as usize);
    }
}

#[test]
fn gap_reference_follows_the_flow() {
    // The object moves 6 px/frame and has no proposal at frames 1-2; the
    // drifting reference still meets it at frame 3.
    let at = |f: u32| BBox::new(6.0 * f as f64, 0.0, 10.0, 10.0, 1.0).unwrap();
    let frames = vec![
        FrameProposals::new("v", 0, vec![at(0)]),
        FrameProposals::new("v", 1, vec![]),
        FrameProposals::new("v", 2, vec![]),
        FrameProposals::new("v", 3, vec![at(3)]),
    ];
    let flows = FlowSequence::new((0..3).map(|f| trackforge::FlowField::uniform(64, 16, f, 6.0, 0.0)));
    let tracks = build_tracks(&frames, &flows, &BuilderConfig::default()).unwrap();
    assert_eq!(tracks.len(), 1);
    let xs: Vec<f64> = tracks[0].entries.iter().map(|e| e.bbox.x).collect();
    assert_eq!(xs, vec![0.0, 6.0, 12.0, 18.0]);
    assert_eq!(tracks[0].entries[3].match_iou, Some(1.0));
}

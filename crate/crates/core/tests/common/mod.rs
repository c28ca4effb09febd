//! Test-only oracles and random instance generators.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackforge::{BBox, BuilderConfig, FlowField, FlowSequence, FrameProposals, Track, TrackEntry};

/// Unit cells `[px, px+1) × [py, py+1)` covered by an integer box.
pub fn cells(b: &BBox<f64>) -> HashSet<(i64, i64)> {
    let (x0, y0) = (b.x as i64, b.y as i64);
    let (x1, y1) = ((b.x + b.w) as i64, (b.y + b.h) as i64);
    (x0..x1).flat_map(|x| (y0..y1).map(move |y| (x, y))).collect()
}

/// Intersection and union cell counts of two integer boxes.
pub fn pixel_counts(a: &BBox<f64>, b: &BBox<f64>) -> (u64, u64) {
    let (ca, cb) = (cells(a), cells(b));
    (ca.intersection(&cb).count() as u64, ca.union(&cb).count() as u64)
}

pub fn pixel_iou(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let (i, u) = pixel_counts(a, b);
    i as f64 / u as f64
}

/// Volume IoU by counting `(frame, x, y)` voxels.
pub fn voxel_viou(a: &Track<f64>, b: &Track<f64>) -> f64 {
    let voxels = |t: &Track<f64>| -> HashSet<(u32, i64, i64)> {
        t.entries
            .iter()
            .flat_map(|e| cells(&e.bbox).into_iter().map(move |(x, y)| (e.frame, x, y)))
            .collect()
    };
    let (va, vb) = (voxels(a), voxels(b));
    va.intersection(&vb).count() as f64 / va.union(&vb).count() as f64
}

pub fn int_box(rng: &mut ChaCha8Rng, extent: i64, max_side: i64) -> BBox<f64> {
    let x = rng.random_range(0..extent) as f64;
    let y = rng.random_range(0..extent) as f64;
    let w = rng.random_range(1..=max_side) as f64;
    let h = rng.random_range(1..=max_side) as f64;
    BBox::new(x, y, w, h, 0.5).unwrap()
}

/// Random gapless track of integer boxes on `len` frames from `start`.
pub fn int_track(rng: &mut ChaCha8Rng, id: u64, start: u32, len: u32) -> Track<f64> {
    let entries = (start..start + len)
        .map(|f| TrackEntry::matched(f, int_box(rng, 8, 6), None, None))
        .collect();
    Track::from_entries(id, "v", entries)
}

pub struct Instance {
    pub frames: Vec<FrameProposals<f64>>,
    pub flows: FlowSequence<f64>,
    pub cfg: BuilderConfig,
}

/// Small random builder input: a few drifting objects plus clutter, random
/// piecewise-constant flow, occasional empty or absent frames, and random
/// `(theta_tau, gamma, top_k)`.
pub fn random_instance(rng: &mut ChaCha8Rng, max_frames: u32, max_boxes: usize) -> Instance {
    const SIZE: usize = 40;
    let n_frames = rng.random_range(1..=max_frames);
    let start = rng.random_range(0..3u32);
    let n_objects = rng.random_range(0..=3usize);
    let mut objects: Vec<(f64, f64, f64, f64, f64, f64)> = (0..n_objects)
        .map(|_| {
            (
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..30.0),
                rng.random_range(3.0..12.0),
                rng.random_range(3.0..12.0),
                rng.random_range(-4.0..4.0f64).round(),
                rng.random_range(-4.0..4.0f64).round(),
            )
        })
        .collect();

    let mut frames = Vec::new();
    let mut flows = Vec::new();
    for f in start..start + n_frames {
        let mut boxes = Vec::new();
        for o in &objects {
            if boxes.len() < max_boxes && rng.random_bool(0.8) {
                let jx = rng.random_range(-1.0..1.0);
                let jy = rng.random_range(-1.0..1.0);
                let score = rng.random_range(0.0..=1.0);
                boxes.push(BBox::new(o.0 + jx, o.1 + jy, o.2, o.3, score).unwrap());
            }
        }
        while boxes.len() < max_boxes && rng.random_bool(0.5) {
            let b = BBox::new(
                rng.random_range(-5.0..40.0),
                rng.random_range(-5.0..40.0),
                rng.random_range(1.0..15.0),
                rng.random_range(1.0..15.0),
                rng.random_range(0.0..=1.0),
            )
            .unwrap();
            boxes.push(b);
        }
        // Occasionally leave the frame out of the input entirely.
        if f == start || f == start + n_frames - 1 || rng.random_bool(0.85) {
            frames.push(FrameProposals::new("rand", f, boxes));
        }

        let field = if rng.random_bool(0.3) {
            FlowField::zeros(SIZE, SIZE, f)
        } else {
            let regions: Vec<(usize, usize, usize, usize, f64, f64)> = (0..rng.random_range(1..4))
                .map(|_| {
                    (
                        rng.random_range(0..SIZE),
                        rng.random_range(0..SIZE),
                        rng.random_range(1..SIZE),
                        rng.random_range(1..SIZE),
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-4.0..4.0),
                    )
                })
                .collect();
            FlowField::from_fn(SIZE, SIZE, f, |px, py| {
                regions
                    .iter()
                    .rev()
                    .find(|r| px >= r.0 && px < r.0 + r.2 && py >= r.1 && py < r.1 + r.3)
                    .map_or((0.0, 0.0), |r| (r.4, r.5))
            })
            .unwrap()
        };
        flows.push(field);
        for o in objects.iter_mut() {
            o.0 += o.4;
            o.1 += o.5;
        }
    }

    let cfg = BuilderConfig {
        theta_tau: rng.random_range(0.05..0.95),
        gamma: rng.random_range(1..=4),
        top_k: rng.random_range(1..=max_boxes.max(1) + 1),
    };
    Instance {
        frames,
        flows: FlowSequence::new(flows),
        cfg,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

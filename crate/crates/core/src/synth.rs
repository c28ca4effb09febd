//! Synthetic scenes with known answers: moving rectangles, jittered
//! proposals, random decoys, static "logos" and exact flow; plus the
//! temporal recall metric and a deliberately naive re-implementation of the
//! track builder used as an equivalence oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::{BuildError, BuilderConfig};
use crate::entropy::{BoxRef, ProbVector};
use crate::flow::{FlowField, FlowProvider, FlowSequence};
use crate::geometry::{iou, BBox};
use crate::io::FrameProposals;
use crate::scalar::Real;
use crate::track::{Track, TrackEntry};

/// Scene description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "default_video")]
    pub video: String,
    pub width: usize,
    pub height: usize,
    pub frames: u32,
    /// Proposal jitter as a fraction of the box size.
    #[serde(default)]
    pub jitter: f64,
    /// Random background boxes per frame.
    #[serde(default)]
    pub decoys: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

fn default_video() -> String {
    "synth".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Box at frame 0.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Displacement per frame.
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    /// Half-open frame windows `[start, end)` with no proposal for the object.
    #[serde(default)]
    pub hidden: Vec<[u32; 2]>,
}

impl SceneObject {
    pub fn is_static(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0
    }

    pub fn box_at(&self, frame: u32) -> (f64, f64, f64, f64) {
        let f = frame as f64;
        (self.x + self.vx * f, self.y + self.vy * f, self.w, self.h)
    }

    fn visible_at(&self, frame: u32) -> bool {
        !self.hidden.iter().any(|[s, e]| frame >= *s && frame < *e)
    }
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Debug, Clone)]
pub struct Scene<T> {
    pub spec: SceneSpec,
    /// Proposals per frame, best first.
    pub frames: Vec<FrameProposals<T>>,
    /// Field `i` maps frame `i` to `i + 1`.
    pub flows: FlowSequence<T>,
    /// One full-length track per object, in object order.
    pub ground_truth: Vec<Track<T>>,
    /// For each frame and proposal slot, the object it came from
    /// (`None` for decoys).
    pub origins: Vec<Vec<Option<usize>>>,
}

impl<T: Real> Scene<T> {
    /// Ground-truth tracks of the moving objects only.
    pub fn moving_ground_truth(&self) -> Vec<Track<T>> {
        self.ground_truth
            .iter()
            .zip(&self.spec.objects)
            .filter(|(_, o)| !o.is_static())
            .map(|(t, _)| t.clone())
            .collect()
    }
}

fn to_box<T: Real>((x, y, w, h): (f64, f64, f64, f64), score: f64) -> BBox<T> {
    BBox {
        x: T::from_f64(x),
        y: T::from_f64(y),
        w: T::from_f64(w),
        h: T::from_f64(h),
        score: T::from_f64(score),
    }
}

/// Generates a scene; the same spec (including seed) yields identical output.
///
/// Object proposals perturb each edge by up to `±jitter` of the box size and
/// score in `[0.4, 1)`. Decoys are uniform boxes spanning 5-30% of each
/// frame dimension with scores in `[0, 1)`. Flow is the object's velocity on
/// pixels inside its box (later objects drawn on top) and zero elsewhere.
pub fn generate_scene<T: Real>(spec: &SceneSpec) -> Scene<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (fw, fh) = (spec.width as f64, spec.height as f64);
    let j = spec.jitter;
    let jit = |rng: &mut ChaCha8Rng| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };

    let mut frames = Vec::with_capacity(spec.frames as usize);
    let mut origins = Vec::with_capacity(spec.frames as usize);
    for f in 0..spec.frames {
        let mut boxes: Vec<(BBox<T>, Option<usize>)> = Vec::new();
        for (oi, obj) in spec.objects.iter().enumerate() {
            if !obj.visible_at(f) {
                continue;
            }
            let (x, y, w, h) = obj.box_at(f);
            let jx = jit(&mut rng) * w;
            let jy = jit(&mut rng) * h;
            let jw = 1.0 + jit(&mut rng);
            let jh = 1.0 + jit(&mut rng);
            let score = rng.random_range(0.4..1.0);
            boxes.push((to_box((x + jx, y + jy, w * jw, h * jh), score), Some(oi)));
        }
        for _ in 0..spec.decoys {
            let w = fw * rng.random_range(0.05..0.3);
            let h = fh * rng.random_range(0.05..0.3);
            let x = rng.random_range(0.0..fw - w);
            let y = rng.random_range(0.0..fh - h);
            let score = rng.random::<f64>();
            boxes.push((to_box((x, y, w, h), score), None));
        }
        boxes.sort_by(|a, b| b.0.score.partial_cmp(&a.0.score).unwrap_or(std::cmp::Ordering::Equal));
        origins.push(boxes.iter().map(|(_, o)| *o).collect());
        frames.push(FrameProposals::new(
            spec.video.clone(),
            f,
            boxes.into_iter().map(|(b, _)| b).collect(),
        ));
    }

    let flows = FlowSequence::new((0..spec.frames.saturating_sub(1)).map(|f| object_flow(spec, f)));

    let ground_truth = spec
        .objects
        .iter()
        .enumerate()
        .map(|(oi, obj)| {
            let entries = (0..spec.frames)
                .map(|f| TrackEntry::matched(f, to_box(obj.box_at(f), 1.0), None, None))
                .collect();
            let mut t = Track::from_entries(oi as u64, spec.video.clone(), entries);
            t.e_score = T::one();
            t
        })
        .collect();

    Scene {
        spec: spec.clone(),
        frames,
        flows,
        ground_truth,
        origins,
    }
}

fn object_flow<T: Real>(spec: &SceneSpec, frame: u32) -> FlowField<T> {
    let mut dx = vec![T::zero(); spec.width * spec.height];
    let mut dy = dx.clone();
    for obj in &spec.objects {
        let (x, y, w, h) = obj.box_at(frame);
        let (vx, vy) = (T::from_f64(obj.vx), T::from_f64(obj.vy));
        for py in 0..spec.height {
            let cy = py as f64 + 0.5;
            if !(cy >= y && cy < y + h) {
                continue;
            }
            for px in 0..spec.width {
                let cx = px as f64 + 0.5;
                if cx >= x && cx < x + w {
                    dx[py * spec.width + px] = vx;
                    dy[py * spec.width + px] = vy;
                }
            }
        }
    }
    FlowField::new(spec.width, spec.height, frame, dx, dy).expect("velocities are finite")
}

/// Planted classifier outputs for every proposal of a scene: near one-hot
/// (peak mass in `[0.85, 0.99)` on the object's class) for object boxes and
/// near uniform (weights `1 ± 0.2`) for decoys.
pub fn plant_probabilities<T: Real>(scene: &Scene<T>, n_classes: usize, seed: u64) -> Vec<ProbVector<T>> {
    assert!(n_classes >= 2, "need at least two classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (fp, origins) in scene.frames.iter().zip(&scene.origins) {
        for (k, origin) in origins.iter().enumerate() {
            let probs: Vec<f64> = match origin {
                Some(obj) => {
                    let class = (obj * 7 + 3) % n_classes;
                    let peak = rng.random_range(0.85..0.99);
                    let rest: Vec<f64> = (0..n_classes - 1).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let total: f64 = rest.iter().sum();
                    let mut rest = rest.into_iter().map(|r| r / total * (1.0 - peak));
                    (0..n_classes)
                        .map(|c| if c == class { peak } else { rest.next().unwrap() })
                        .collect()
                }
                None => {
                    let w: Vec<f64> = (0..n_classes).map(|_| 1.0 + rng.random_range(-0.2..0.2)).collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / total).collect()
                }
            };
            out.push(ProbVector {
                box_ref: BoxRef::new(fp.video_id.clone(), fp.frame, k as u32),
                probs: probs.into_iter().map(T::from_f64).collect(),
            });
        }
    }
    out
}

/// Fraction of ground-truth tracks covered by some prediction, where
/// coverage is the mean IoU over the ground truth's frames (frames the
/// prediction misses count as 0) and must exceed `iou_thresh`.
pub fn temporal_recall<T: Real>(predicted: &[Track<T>], ground_truth: &[Track<T>], iou_thresh: T) -> T {
    if ground_truth.is_empty() {
        return T::zero();
    }
    let covered = ground_truth
        .iter()
        .filter(|gt| {
            predicted.iter().any(|p| {
                let total = gt.entries.iter().fold(T::zero(), |acc, e| {
                    acc + p.box_at(e.frame).map_or(T::zero(), |pb| iou(pb, &e.bbox))
                });
                total / T::from_usize(gt.len()) > iou_thresh
            })
        })
        .count();
    T::from_usize(covered) / T::from_usize(ground_truth.len())
}

// ---------------------------------------------------------------------------
// Reference builder.
//
// Shares no code with `builder`: it recomputes every reference box by
// replaying the flow from the last match, scans every pixel of a field to
// average the flow, and keeps tracks as frame-indexed maps.

struct OracleTrack<T> {
    matched: BTreeMap<u32, (BBox<T>, Option<T>, u32)>,
    ttl: i64,
}

fn oracle_iou<T: Real>(a: &BBox<T>, b: &BBox<T>) -> T {
    let (ax2, ay2, bx2, by2) = (a.x + a.w, a.y + a.h, b.x + b.w, b.y + b.h);
    let left = if a.x > b.x { a.x } else { b.x };
    let top = if a.y > b.y { a.y } else { b.y };
    let right = if ax2 < bx2 { ax2 } else { bx2 };
    let bottom = if ay2 < by2 { ay2 } else { by2 };
    let iw = if right - left > T::zero() { right - left } else { T::zero() };
    let ih = if bottom - top > T::zero() { bottom - top } else { T::zero() };
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

fn oracle_offset<T: Real>(field: &FlowField<T>, b: &BBox<T>) -> (T, T) {
    let half = T::from_f64(0.5);
    let mut inside = Vec::new();
    for py in 0..field.height() {
        for px in 0..field.width() {
            let cx = T::from_usize(px) + half;
            let cy = T::from_usize(py) + half;
            if cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h {
                inside.push(field.at(px, py));
            }
        }
    }
    let Some(&(px0, py0)) = inside.first() else {
        return (T::zero(), T::zero());
    };
    // Same pivoted mean as the flow module: first sample plus mean deviation.
    let n = T::from_usize(inside.len());
    let (sx, sy) = inside
        .iter()
        .fold((T::zero(), T::zero()), |(sx, sy), &(u, v)| (sx + (u - px0), sy + (v - py0)));
    (px0 + sx / n, py0 + sy / n)
}

/// Naive reference for [`crate::builder::build_tracks`] with the same
/// contract.
pub fn oracle_build_tracks<T: Real>(
    frames: &[FrameProposals<T>],
    flows: &dyn FlowProvider<T>,
    cfg: &BuilderConfig,
) -> Result<Vec<Track<T>>, BuildError> {
    cfg.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let video = frames[0].video_id.clone();
    let first = frames.iter().map(|f| f.frame).min().unwrap();
    let last = frames.iter().map(|f| f.frame).max().unwrap();
    let theta = T::from_f64(cfg.theta_tau);
    let gamma = cfg.gamma as i64;

    let candidates_at = |frame: u32| -> Vec<BBox<T>> {
        frames
            .iter()
            .find(|f| f.frame == frame)
            .map(|f| f.boxes.iter().take(cfg.top_k).copied().collect())
            .unwrap_or_default()
    };

    let mut tracks: Vec<OracleTrack<T>> = Vec::new();
    for (k, b) in candidates_at(first).into_iter().enumerate() {
        let mut matched = BTreeMap::new();
        matched.insert(first, (b, None, k as u32));
        tracks.push(OracleTrack { matched, ttl: gamma });
    }

    for frame in first + 1..=last {
        // Same availability contract as the builder: every pair must exist.
        flows.field(frame - 1)?;
        let cands = candidates_at(frame);
        let mut taken = vec![false; cands.len()];
        for t in tracks.iter_mut() {
            if t.ttl <= 0 {
                continue;
            }
            // Replay the flow from the last match up to the previous frame.
            let (&last_frame, &(last_box, _, _)) = t.matched.iter().next_back().unwrap();
            let mut probe = last_box;
            for g in last_frame..frame {
                let off = match flows.field(g)? {
                    Some(f) => oracle_offset(&f, &probe),
                    None => (T::zero(), T::zero()),
                };
                probe = BBox {
                    x: probe.x + off.0,
                    y: probe.y + off.1,
                    ..probe
                };
            }

            let scored: Vec<(usize, T)> = (0..cands.len())
                .filter(|&k| !taken[k])
                .map(|k| (k, oracle_iou(&probe, &cands[k])))
                .collect();
            let top = scored.iter().map(|s| s.1).fold(None, |m: Option<T>, v| match m {
                Some(m) if m >= v => Some(m),
                _ => Some(v),
            });
            let pick = top.and_then(|top| {
                scored
                    .iter()
                    .filter(|s| s.1 == top)
                    .map(|s| s.0)
                    .min()
                    .map(|k| (k, top))
            });
            match pick {
                Some((k, v)) if v > theta => {
                    taken[k] = true;
                    t.matched.insert(frame, (cands[k], Some(v), k as u32));
                    t.ttl = if t.ttl + 1 > gamma { gamma } else { t.ttl + 1 };
                }
                _ => t.ttl -= 1,
            }
        }
        for (k, b) in cands.iter().enumerate() {
            if !taken[k] {
                let mut matched = BTreeMap::new();
                matched.insert(frame, (*b, None, k as u32));
                tracks.push(OracleTrack { matched, ttl: gamma });
            }
        }
    }

    Ok(tracks
        .into_iter()
        .enumerate()
        .map(|(id, t)| {
            let (&lo, _) = t.matched.iter().next().unwrap();
            let (&hi, _) = t.matched.iter().next_back().unwrap();
            let mut entries = Vec::new();
            for frame in lo..=hi {
                if let Some(&(b, m, k)) = t.matched.get(&frame) {
                    entries.push(TrackEntry::matched(frame, b, m, Some(k)));
                    continue;
                }
                let (&p, &(pb, _, _)) = t.matched.range(..frame).next_back().unwrap();
                let (&q, &(qb, _, _)) = t.matched.range(frame..).next().unwrap();
                let span = T::from_usize((q - p) as usize);
                let k = T::from_usize((frame - p) as usize);
                let at = |u: T, v: T| u + (v - u) * k / span;
                entries.push(TrackEntry::interpolated(
                    frame,
                    BBox::unscored(at(pb.x, qb.x), at(pb.y, qb.y), at(pb.w, qb.w), at(pb.h, qb.h)),
                ));
            }
            let scores: Vec<T> = t.matched.values().map(|m| m.0.score).collect();
            let ious: Vec<T> = t.matched.values().filter_map(|m| m.1).collect();
            let avg = |v: &[T]| {
                if v.is_empty() {
                    T::zero()
                } else {
                    v.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(v.len())
                }
            };
            let mut track = Track::from_entries(id as u64, video.clone(), entries);
            track.e_score = avg(&scores);
            track.i_score = avg(&ious);
            track
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SceneSpec {
        SceneSpec {
            video: "s".into(),
            width: 64,
            height: 48,
            frames: 6,
            jitter: 0.0,
            decoys: 0,
            seed: 3,
            objects: vec![
                SceneObject {
                    x: 4.0,
                    y: 4.0,
                    w: 10.0,
                    h: 8.0,
                    vx: 2.0,
                    vy: 1.0,
                    hidden: vec![],
                },
                SceneObject {
                    x: 40.0,
                    y: 30.0,
                    w: 12.0,
                    h: 10.0,
                    vx: 0.0,
                    vy: 0.0,
                    hidden: vec![[2, 4]],
                },
            ],
        }
    }

    #[test]
    fn exact_proposals_without_jitter() {
        let scene: Scene<f64> = generate_scene(&spec());
        for (fp, origins) in scene.frames.iter().zip(&scene.origins) {
            for (b, o) in fp.boxes.iter().zip(origins) {
                let gt = scene.ground_truth[o.unwrap()].box_at(fp.frame).unwrap();
                assert_eq!((b.x, b.y, b.w, b.h), (gt.x, gt.y, gt.w, gt.h));
            }
        }
        assert_eq!(scene.frames[2].boxes.len(), 1);
        assert_eq!(scene.frames[4].boxes.len(), 2);
        assert_eq!(scene.moving_ground_truth().len(), 1);
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let mut s = spec();
        s.objects.truncate(1);
        s.objects[0].vx = 0.0;
        s.objects[0].vy = 0.0;
        let scene: Scene<f64> = generate_scene(&s);
        assert_eq!(scene.flows.len(), 5);
        for f in scene.flows.iter() {
            assert_eq!(*f, FlowField::zeros(64, 48, f.frame_index()));
        }
    }

    #[test]
    fn flow_integrates_to_displacement() {
        let scene: Scene<f64> = generate_scene(&spec());
        let gt = &scene.ground_truth[0];
        for f in 0..5 {
            let b = gt.box_at(f).unwrap();
            let off = scene.flows.get(f).unwrap().mean_offset(b).unwrap();
            assert_eq!(off, (2.0, 1.0));
            assert_eq!(b.shifted(off.0, off.1), *gt.box_at(f + 1).unwrap());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut s = spec();
        s.jitter = 0.1;
        s.decoys = 4;
        let a: Scene<f64> = generate_scene(&s);
        let b: Scene<f64> = generate_scene(&s);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.origins, b.origins);
        s.seed += 1;
        let c: Scene<f64> = generate_scene(&s);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn planted_probabilities_are_valid() {
        let mut s = spec();
        s.decoys = 3;
        let scene: Scene<f64> = generate_scene(&s);
        let probs = plant_probabilities(&scene, 50, 1);
        assert_eq!(probs.len(), scene.frames.iter().map(|f| f.boxes.len()).sum::<usize>());
        for p in &probs {
            p.validate().unwrap();
        }
    }

    #[test]
    fn recall_examples() {
        let scene: Scene<f64> = generate_scene(&spec());
        let gt = &scene.ground_truth;
        assert_eq!(temporal_recall(gt, gt, 0.5), 1.0);
        assert_eq!(temporal_recall(&[], gt, 0.5), 0.0);
        assert_eq!(temporal_recall(&gt[..1], gt, 0.5), 0.5);
    }

    #[test]
    fn oracle_trivial_cases() {
        let cfg = BuilderConfig::default();
        assert!(oracle_build_tracks::<f64>(&[], &crate::flow::ZeroFlow, &cfg).unwrap().is_empty());
        let one = vec![FrameProposals::new("v", 0, vec![BBox::new(1.0, 1.0, 2.0, 2.0, 0.5).unwrap()])];
        let t = oracle_build_tracks(&one, &crate::flow::ZeroFlow, &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 1);
    }
}

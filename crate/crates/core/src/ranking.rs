//! Track score and ordering.

use std::cmp::Ordering;

use crate::scalar::Real;
use crate::track::Track;

/// `lambda * e_score + (1 - lambda) * i_score`, also stored as `rank_score`.
pub fn score_track<T: Real>(track: &mut Track<T>, lambda: T) -> T {
    let s = lambda * track.e_score + (T::one() - lambda) * track.i_score;
    track.rank_score = s;
    s
}

/// Ranking order on already-scored tracks: higher `rank_score` first, then
/// the longer track, then the lower id.
pub fn rank_order<T: Real>(a: &Track<T>, b: &Track<T>) -> Ordering {
    b.rank_score
        .partial_cmp(&a.rank_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| a.id.cmp(&b.id))
}

/// Scores every track and sorts them best first.
pub fn rank_tracks<T: Real>(mut tracks: Vec<Track<T>>, lambda: T) -> Vec<Track<T>> {
    for t in &mut tracks {
        score_track(t, lambda);
    }
    tracks.sort_by(rank_order);
    tracks
}

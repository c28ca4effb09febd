//! Dense optical flow: per-box mean displacement and magnitude, a block
//! matching fallback estimator, the `TFLO` file format and flow providers.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Real;

pub const FLOW_MAGIC: &[u8; 4] = b"TFLO";
pub const FLOW_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("box covers no pixel centres of the {width}x{height} flow field")]
    EmptySupport { width: usize, height: usize },
    #[error("frames differ in size: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("flow grid has {got} entries, expected {expected}")]
    GridSize { expected: usize, got: usize },
    #[error("non-finite displacement at pixel {0}")]
    NonFinite(usize),
    #[error("no flow for frame pair {frame} -> {}", frame + 1)]
    MissingFlow { frame: u32 },
    #[error("malformed flow file: {0}")]
    Format(String),
    #[error("invalid block-matching parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-pixel displacement from frame `frame_index` to `frame_index + 1`,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    width: usize,
    height: usize,
    frame_index: u32,
    dx: Vec<T>,
    dy: Vec<T>,
}

impl<T: Real> FlowField<T> {
    pub fn new(
        width: usize,
        height: usize,
        frame_index: u32,
        dx: Vec<T>,
        dy: Vec<T>,
    ) -> Result<Self, FlowError> {
        let expected = width * height;
        for grid in [&dx, &dy] {
            if grid.len() != expected {
                return Err(FlowError::GridSize {
                    expected,
                    got: grid.len(),
                });
            }
        }
        if let Some(i) = dx
            .iter()
            .zip(&dy)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(FlowError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            frame_index,
            dx,
            dy,
        })
    }

    pub fn zeros(width: usize, height: usize, frame_index: u32) -> Self {
        Self::uniform(width, height, frame_index, T::zero(), T::zero())
    }

    pub fn uniform(width: usize, height: usize, frame_index: u32, dx: T, dy: T) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            frame_index,
            dx: vec![dx; n],
            dy: vec![dy; n],
        }
    }

    /// Builds a field by evaluating `f(px, py)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        frame_index: u32,
        mut f: impl FnMut(usize, usize) -> (T, T),
    ) -> Result<Self, FlowError> {
        let n = width * height;
        let (mut dx, mut dy) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for py in 0..height {
            for px in 0..width {
                let (a, b) = f(px, py);
                dx.push(a);
                dy.push(b);
            }
        }
        Self::new(width, height, frame_index, dx, dy)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    pub fn at(&self, px: usize, py: usize) -> (T, T) {
        let i = py * self.width + px;
        (self.dx[i], self.dy[i])
    }

    /// Pixel columns/rows whose centres `(p + 0.5)` lie in `[x, x + w)` ×
    /// `[y, y + h)`, clipped to the field.
    fn support(&self, b: &BBox<T>) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>), FlowError> {
        let cols = centre_span(b.x, b.x + b.w, self.width);
        let rows = centre_span(b.y, b.y + b.h, self.height);
        if cols.is_empty() || rows.is_empty() {
            return Err(FlowError::EmptySupport {
                width: self.width,
                height: self.height,
            });
        }
        Ok((cols, rows))
    }

    /// Mean `(dx, dy)` over the pixels whose centres fall inside the box.
    pub fn mean_offset(&self, b: &BBox<T>) -> Result<(T, T), FlowError> {
        let (cols, rows) = self.support(b)?;
        let mx = pivot_mean(rows.clone().flat_map(|py| cols.clone().map(move |px| (px, py))), |px, py| {
            self.dx[py * self.width + px]
        });
        let my = pivot_mean(rows.flat_map(|py| cols.clone().map(move |px| (px, py))), |px, py| {
            self.dy[py * self.width + px]
        });
        Ok((mx, my))
    }

    /// Mean per-pixel flow magnitude inside the box.
    pub fn mean_magnitude(&self, b: &BBox<T>) -> Result<T, FlowError> {
        let (cols, rows) = self.support(b)?;
        Ok(pivot_mean(rows.flat_map(|py| cols.clone().map(move |px| (px, py))), |px, py| {
            let i = py * self.width + px;
            self.dx[i].hypot(self.dy[i])
        }))
    }

    /// Writes the little-endian `TFLO` v1 encoding.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FlowError> {
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| FlowError::Format(format!("dimension {v} exceeds u32")))
        };
        let mut buf = Vec::with_capacity(20 + 8 * self.dx.len());
        buf.extend_from_slice(FLOW_MAGIC);
        buf.extend_from_slice(&FLOW_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.frame_index.to_le_bytes());
        buf.extend_from_slice(&dim(self.width)?.to_le_bytes());
        buf.extend_from_slice(&dim(self.height)?.to_le_bytes());
        for (a, b) in self.dx.iter().zip(&self.dy) {
            buf.extend_from_slice(&a.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            buf.extend_from_slice(&b.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FlowError> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)
            .map_err(|e| FlowError::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != FLOW_MAGIC {
            return Err(FlowError::Format("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != FLOW_VERSION {
            return Err(FlowError::Format(format!("unsupported version {version}")));
        }
        let frame_index = word(8);
        let (width, height) = (word(12) as usize, word(16) as usize);
        let n = width
            .checked_mul(height)
            .ok_or_else(|| FlowError::Format("dimensions overflow".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * 8 {
            return Err(FlowError::Format(format!(
                "expected {} payload bytes, found {}",
                n * 8,
                body.len()
            )));
        }
        let (mut dx, mut dy) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for pair in body.chunks_exact(8) {
            let a = f32::from_le_bytes(pair[0..4].try_into().unwrap());
            let b = f32::from_le_bytes(pair[4..8].try_into().unwrap());
            dx.push(T::from_f64(a as f64));
            dy.push(T::from_f64(b as f64));
        }
        Self::new(width, height, frame_index, dx, dy)
    }
}

/// Mean of `value` over nonempty `pixels`, accumulated as offsets from the
/// first sample: `first + Σ(v - first) / n`. A constant region returns the
/// constant exactly.
pub(crate) fn pivot_mean<T: Real>(
    pixels: impl Iterator<Item = (usize, usize)>,
    value: impl Fn(usize, usize) -> T,
) -> T {
    let mut first = None;
    let mut sum = T::zero();
    let mut n = 0usize;
    for (px, py) in pixels {
        let v = value(px, py);
        let p = *first.get_or_insert(v);
        sum = sum + (v - p);
        n += 1;
    }
    match first {
        Some(p) => p + sum / T::from_usize(n),
        None => T::zero(),
    }
}

/// Indices `p < limit` with `lo <= p + 0.5 < hi`. The `ceil` guess is
/// corrected against the predicate itself so rounding in `lo - 0.5` cannot
/// move a boundary pixel.
fn centre_span<T: Real>(lo: T, hi: T, limit: usize) -> std::ops::Range<usize> {
    let half = T::from_f64(0.5);
    let centre = |p: usize| T::from_usize(p) + half;
    let guess = |v: T| -> usize {
        let v = v.ceil();
        if v <= T::zero() {
            0
        } else {
            v.to_usize().unwrap_or(limit).min(limit)
        }
    };
    let mut start = guess(lo - half);
    while start > 0 && centre(start - 1) >= lo {
        start -= 1;
    }
    while start < limit && centre(start) < lo {
        start += 1;
    }
    let mut end = guess(hi - half).max(start);
    while end < limit && centre(end) < hi {
        end += 1;
    }
    while end > start && centre(end - 1) >= hi {
        end -= 1;
    }
    start..end
}

/// Conventional file name for the field of frame pair `frame -> frame + 1`.
pub fn flow_file_name(frame: u32) -> String {
    format!("{frame:06}.tflo")
}

/// Single-channel intensity image used by the fallback estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, FlowError> {
        if data.len() != width * height {
            return Err(FlowError::GridSize {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Block-matching flow: every `block`×`block` tile of `a` (edge tiles may be
/// smaller) takes the integer displacement in `[-radius, radius]²` that
/// minimises the sum of absolute differences against `b`. Displacements that
/// would move the tile outside the frame are not considered. Ties go to the
/// smaller displacement magnitude, then to the lexicographically smaller
/// `(dx, dy)`.
pub fn estimate_flow<T: Real>(
    a: &ImageGrid,
    b: &ImageGrid,
    block: usize,
    radius: usize,
    frame_index: u32,
) -> Result<FlowField<T>, FlowError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(FlowError::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    if block == 0 {
        return Err(FlowError::InvalidParams("block must be at least 1"));
    }
    let (width, height) = (a.width, a.height);
    let r = radius as i64;
    let mut dx = vec![T::zero(); width * height];
    let mut dy = vec![T::zero(); width * height];

    for y0 in (0..height).step_by(block) {
        let y1 = (y0 + block).min(height);
        for x0 in (0..width).step_by(block) {
            let x1 = (x0 + block).min(width);
            // (sad, |d|², dx, dy)
            let mut best: Option<(f64, i64, i64, i64)> = None;
            for cdx in -r..=r {
                for cdy in -r..=r {
                    let inside = x0 as i64 + cdx >= 0
                        && x1 as i64 + cdx <= width as i64
                        && y0 as i64 + cdy >= 0
                        && y1 as i64 + cdy <= height as i64;
                    if !inside {
                        continue;
                    }
                    let mut sad = 0f64;
                    for y in y0..y1 {
                        let ty = (y as i64 + cdy) as usize;
                        for x in x0..x1 {
                            let tx = (x as i64 + cdx) as usize;
                            sad += (a.at(x, y) as f64 - b.at(tx, ty) as f64).abs();
                        }
                    }
                    let cand = (sad, cdx * cdx + cdy * cdy, cdx, cdy);
                    let better = match best {
                        None => true,
                        Some(cur) => {
                            cand.0 < cur.0
                                || (cand.0 == cur.0 && (cand.1, cand.2, cand.3) < (cur.1, cur.2, cur.3))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
            // Zero displacement is always admissible, so `best` is set.
            let (_, _, bdx, bdy) = best.expect("zero displacement is always in bounds");
            let (fx, fy) = (T::from_f64(bdx as f64), T::from_f64(bdy as f64));
            for y in y0..y1 {
                for x in x0..x1 {
                    dx[y * width + x] = fx;
                    dy[y * width + x] = fy;
                }
            }
        }
    }
    FlowField::new(width, height, frame_index, dx, dy)
}

/// Supplies the flow of each frame pair to the builder and the static filter.
///
/// `Ok(None)` means "no motion anywhere" and behaves like an all-zero field
/// of unbounded extent.
pub trait FlowProvider<T>: Sync {
    fn field(&self, frame: u32) -> Result<Option<Arc<FlowField<T>>>, FlowError>;
}

/// Zero displacement for every frame pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFlow;

impl<T> FlowProvider<T> for ZeroFlow {
    fn field(&self, _frame: u32) -> Result<Option<Arc<FlowField<T>>>, FlowError> {
        Ok(None)
    }
}

/// In-memory fields keyed by their `frame_index`.
#[derive(Debug, Clone, Default)]
pub struct FlowSequence<T> {
    fields: std::collections::BTreeMap<u32, Arc<FlowField<T>>>,
}

impl<T: Real> FlowSequence<T> {
    pub fn new(fields: impl IntoIterator<Item = FlowField<T>>) -> Self {
        Self {
            fields: fields
                .into_iter()
                .map(|f| (f.frame_index(), Arc::new(f)))
                .collect(),
        }
    }

    pub fn get(&self, frame: u32) -> Option<&FlowField<T>> {
        self.fields.get(&frame).map(|f| f.as_ref())
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FlowField<T>> {
        self.fields.values().map(|f| f.as_ref())
    }
}

impl<T: Real> FlowProvider<T> for FlowSequence<T> {
    fn field(&self, frame: u32) -> Result<Option<Arc<FlowField<T>>>, FlowError> {
        self.fields
            .get(&frame)
            .cloned()
            .map(Some)
            .ok_or(FlowError::MissingFlow { frame })
    }
}

/// Reads `DIR/%06d.tflo` on demand, keeping the last few fields.
#[derive(Debug)]
pub struct FlowDir<T> {
    dir: PathBuf,
    cache: Mutex<VecDeque<Arc<FlowField<T>>>>,
}

const FLOW_DIR_CACHE: usize = 4;

impl<T: Real> FlowDir<T> {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            cache: Mutex::new(VecDeque::with_capacity(FLOW_DIR_CACHE)),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, frame: u32) -> PathBuf {
        self.dir.join(flow_file_name(frame))
    }
}

impl<T: Real> FlowProvider<T> for FlowDir<T> {
    fn field(&self, frame: u32) -> Result<Option<Arc<FlowField<T>>>, FlowError> {
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(f) = cache.iter().find(|f| f.frame_index() == frame) {
            return Ok(Some(Arc::clone(f)));
        }
        let path = self.path_for(frame);
        let file = match std::fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(FlowError::MissingFlow { frame })
            }
            Err(e) => return Err(e.into()),
        };
        let field = FlowField::read_from(io::BufReader::new(file))?;
        if field.frame_index() != frame {
            return Err(FlowError::Format(format!(
                "{} declares frame {}",
                path.display(),
                field.frame_index()
            )));
        }
        let field = Arc::new(field);
        if cache.len() == FLOW_DIR_CACHE {
            cache.pop_front();
        }
        cache.push_back(Arc::clone(&field));
        Ok(Some(field))
    }
}

/// Mean offset inside `b` for a provider result; zero when there is no
/// field or the box lies entirely outside it.
pub(crate) fn offset_or_zero<T: Real>(field: Option<&FlowField<T>>, b: &BBox<T>) -> (T, T) {
    match field {
        Some(f) => f.mean_offset(b).unwrap_or((T::zero(), T::zero())),
        None => (T::zero(), T::zero()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h, 1.0).unwrap()
    }

    #[test]
    fn constant_fields() {
        let f = FlowField::uniform(32, 24, 0, 3.0, -1.0);
        assert_eq!(f.mean_offset(&bx(2.3, 4.0, 7.5, 3.2)).unwrap(), (3.0, -1.0));
        let z = FlowField::<f64>::zeros(32, 24, 0);
        assert_eq!(z.mean_offset(&bx(0., 0., 5., 5.)).unwrap(), (0.0, 0.0));
        assert_eq!(z.mean_magnitude(&bx(0., 0., 5., 5.)).unwrap(), 0.0);
        let m = FlowField::uniform(16, 16, 0, 3.0, 4.0);
        assert_eq!(m.mean_magnitude(&bx(1., 1., 4., 4.)).unwrap(), 5.0);
        let m = FlowField::uniform(16, 16, 0, -3.0, -4.0);
        assert_eq!(m.mean_magnitude(&bx(1., 1., 4., 4.)).unwrap(), 5.0);
    }

    #[test]
    fn split_field_mean_matches_direct_sum() {
        // dx = 2 left of column 8, 4 from column 8 on.
        let f = FlowField::from_fn(16, 8, 0, |px, _| (if px < 8 { 2.0 } else { 4.0 }, 0.0)).unwrap();
        let b = bx(4.0, 0.0, 8.0, 8.0);
        let mut sum = 0.0;
        let mut n = 0.0;
        for py in 0..8 {
            for px in 0..16 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                if cx >= b.x && cx < b.right() && cy >= b.y && cy < b.bottom() {
                    sum += f.at(px, py).0;
                    n += 1.0;
                }
            }
        }
        assert_eq!(sum / n, 3.0);
        assert_eq!(f.mean_offset(&b).unwrap(), (3.0, 0.0));
    }

    #[test]
    fn pixel_centre_membership() {
        let f = FlowField::from_fn(4, 1, 0, |px, _| (px as f64, 0.0)).unwrap();
        // Centres at 0.5, 1.5, 2.5, 3.5; [0.5, 2.5) holds the first two.
        assert_eq!(f.mean_offset(&bx(0.5, 0.0, 2.0, 1.0)).unwrap().0, 0.5);
        // [0.6, 2.6) holds 1.5 and 2.5.
        assert_eq!(f.mean_offset(&bx(0.6, 0.0, 2.0, 1.0)).unwrap().0, 1.5);
    }

    #[test]
    fn clipping_and_empty_support() {
        let f = FlowField::from_fn(4, 4, 0, |px, py| ((px + py) as f64, 0.0)).unwrap();
        // Only pixel (0, 0) survives the clip.
        assert_eq!(f.mean_offset(&bx(-10., -10., 11., 11.)).unwrap(), (0.0, 0.0));
        assert!(matches!(
            f.mean_offset(&bx(10., 10., 3., 3.)),
            Err(FlowError::EmptySupport { .. })
        ));
        // Too thin to contain a pixel centre.
        assert!(f.mean_magnitude(&bx(1.6, 1.0, 0.5, 2.0)).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            FlowField::new(2, 2, 0, vec![0.0; 3], vec![0.0; 4]),
            Err(FlowError::GridSize { .. })
        ));
        assert!(matches!(
            FlowField::new(1, 1, 0, vec![f64::INFINITY], vec![0.0]),
            Err(FlowError::NonFinite(0))
        ));
    }

    #[test]
    fn file_round_trip() {
        let f = FlowField::from_fn(5, 3, 17, |px, py| (px as f32 * 0.25, -(py as f32))).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"TFLO");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 17);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 20 + 5 * 3 * 8);
        // Second pixel of the first row: dx = 0.25, dy = -0.
        assert_eq!(f32::from_le_bytes(buf[28..32].try_into().unwrap()), 0.25);
        let back = FlowField::<f32>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, f);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(FlowField::<f32>::read_from(bad.as_slice()).is_err());
        assert!(FlowField::<f32>::read_from(&buf[..buf.len() - 1]).is_err());
    }

    fn noise(width: usize, height: usize, seed: u64) -> ImageGrid {
        let mut s = seed;
        let data = (0..width * height)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32
            })
            .collect();
        ImageGrid::new(width, height, data).unwrap()
    }

    #[test]
    fn block_matching_identity_and_constant() {
        let a = noise(24, 16, 1);
        let f: FlowField<f64> = estimate_flow(&a, &a, 4, 3, 0).unwrap();
        assert_eq!(f, FlowField::zeros(24, 16, 0));

        let c = ImageGrid::new(12, 12, vec![7.0; 144]).unwrap();
        let f: FlowField<f64> = estimate_flow(&c, &c, 3, 2, 0).unwrap();
        assert_eq!(f, FlowField::zeros(12, 12, 0));
    }

    #[test]
    fn block_matching_recovers_translation() {
        let (w, h) = (32, 24);
        let a = noise(w, h, 7);
        // b(x, y) = a(x - 2, y); the left strip gets fresh content.
        let fresh = noise(w, h, 99);
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| if x >= 2 { a.at(x - 2, y) } else { fresh.at(x, y) })
            .collect();
        let b = ImageGrid::new(w, h, data).unwrap();
        let f: FlowField<f64> = estimate_flow(&a, &b, 4, 3, 0).unwrap();
        // Tiles whose shifted copy stays inside the frame.
        for py in 0..h {
            for px in 0..w - 4 {
                assert_eq!(f.at(px, py), (2.0, 0.0), "pixel ({px}, {py})");
            }
        }
    }

    #[test]
    fn block_matching_errors() {
        let a = noise(4, 4, 0);
        let b = noise(5, 4, 0);
        assert!(matches!(
            estimate_flow::<f64>(&a, &b, 2, 1, 0),
            Err(FlowError::DimensionMismatch { .. })
        ));
        assert!(estimate_flow::<f64>(&a, &a, 0, 1, 0).is_err());
    }

    #[test]
    fn flow_dir_reports_missing_files() {
        let dir = std::env::temp_dir().join(format!("tflo-missing-{}", std::process::id()));
        let provider = FlowDir::<f64>::new(&dir);
        assert!(matches!(
            provider.field(3),
            Err(FlowError::MissingFlow { frame: 3 })
        ));
    }
}

//! Track overlays drawn onto frame images or blank canvases.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageResult, Rgb, RgbImage};
use trackforge::Track;

pub const BACKGROUND: Rgb<u8> = Rgb([24, 24, 24]);

/// Stable, saturated colour for a track, keyed by video and id.
pub fn track_color(video: &str, id: u64) -> Rgb<u8> {
    // FNV-1a over the video name, then a splitmix64 finaliser with the id.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in video.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    let mut z = h ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;

    let hue = (z % 360) as f64;
    let (s, v) = (0.85, 0.95);
    let c = v * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |u: f64| ((u + m) * 255.0).round() as u8;
    Rgb([q(r), q(g), q(b)])
}

/// Draws the outline of `[x, x+w) × [y, y+h)` with the given thickness,
/// clipped to the image. Dashed outlines mark interpolated boxes.
pub fn draw_box(img: &mut RgbImage, (x, y, w, h): (f64, f64, f64, f64), color: Rgb<u8>, thickness: i64, dashed: bool) {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let x1 = (x + w).ceil() as i64 - 1;
    let y1 = (y + h).ceil() as i64 - 1;
    if x1 < 0 || y1 < 0 || x0 >= iw || y0 >= ih {
        return;
    }
    let mut put = |px: i64, py: i64, along: i64| {
        if dashed && (along / 4) % 2 == 1 {
            return;
        }
        if (0..iw).contains(&px) && (0..ih).contains(&py) {
            img.put_pixel(px as u32, py as u32, color);
        }
    };
    for t in 0..thickness {
        for px in x0.max(-1)..=x1.min(iw) {
            put(px, y0 + t, px - x0);
            put(px, y1 - t, px - x0);
        }
        for py in y0.max(-1)..=y1.min(ih) {
            put(x0 + t, py, py - y0);
            put(x1 - t, py, py - y0);
        }
    }
}

/// Smallest canvas holding every box, at least 1×1.
pub fn canvas_size(tracks: &[&Track<f64>]) -> (u32, u32) {
    let (mut w, mut h) = (1u32, 1u32);
    for t in tracks {
        for e in &t.entries {
            let b = &e.bbox;
            w = w.max((b.x + b.w).ceil().clamp(1.0, 16384.0) as u32);
            h = h.max((b.y + b.h).ceil().clamp(1.0, 16384.0) as u32);
        }
    }
    (w, h)
}

/// Looks for `%06d.{png,jpg,jpeg,ppm}` in `dir`.
pub fn find_frame_image(dir: &Path, frame: u32) -> Option<std::path::PathBuf> {
    ["png", "jpg", "jpeg", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{frame:06}.{ext}")))
        .find(|p| p.is_file())
}

/// Draws every entry of `tracks` at `frame` onto `img`, lower-ranked tracks
/// first so the best track ends up on top.
pub fn draw_frame(img: &mut RgbImage, tracks: &[&Track<f64>], frame: u32) {
    for t in tracks.iter().rev() {
        if let Some(e) = t.entry_at(frame) {
            let b = &e.bbox;
            draw_box(img, (b.x, b.y, b.w, b.h), track_color(&t.video, t.id), 2, !e.is_matched());
        }
    }
}

/// Writes a binary (P6) pixmap.
pub fn save_ppm(img: &RgbImage, path: &Path) -> ImageResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    PnmEncoder::new(&mut w)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    w.flush()?;
    Ok(())
}

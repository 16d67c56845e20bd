//! Mid-axial PNG overlays: one grayscale channel with mask contours.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use svx_core::{LabelMap, Scalar, Volume};

use crate::Failure;

pub const GT_COLOUR: [u8; 3] = [40, 120, 255];
pub const SEED_COLOUR: [u8; 3] = [255, 60, 40];
pub const REFINED_COLOUR: [u8; 3] = [60, 230, 60];

/// Each voxel becomes a `SCALE` x `SCALE` block of pixels.
const SCALE: usize = 4;

pub struct Layer<'a> {
    pub mask: &'a LabelMap,
    pub colour: [u8; 3],
}

/// In-plane boundary of a mask on slice `z`: foreground pixels with a
/// 4-neighbour outside the mask or the image.
fn contour(mask: &LabelMap, z: usize) -> Vec<bool> {
    let [nx, ny, _] = mask.dims();
    let on = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny && mask.get(x as usize, y as usize, z) != 0
    };
    let mut out = vec![false; nx * ny];
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            if on(x, y) && !(on(x - 1, y) && on(x + 1, y) && on(x, y - 1) && on(x, y + 1)) {
                out[y as usize * nx + x as usize] = true;
            }
        }
    }
    out
}

/// RGB pixels of slice `z` of `channel`, windowed to the slice's own range.
/// Later layers are drawn over earlier ones.
pub fn render<T: Scalar>(v: &Volume<T>, channel: usize, z: usize, layers: &[Layer]) -> (usize, usize, Vec<u8>) {
    let [nx, ny, _] = v.dims();
    let grey: Vec<f64> = (0..nx * ny).map(|i| v.get(channel, i % nx, i / nx, z).f64()).collect();
    let lo = grey.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grey.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut rgb: Vec<[u8; 3]> = grey
        .iter()
        .map(|g| {
            let b = ((g - lo) / span * 255.0).round() as u8;
            [b, b, b]
        })
        .collect();
    for layer in layers {
        for (px, &edge) in rgb.iter_mut().zip(&contour(layer.mask, z)) {
            if edge {
                *px = layer.colour;
            }
        }
    }
    let (w, h) = (nx * SCALE, ny * SCALE);
    let mut out = Vec::with_capacity(w * h * 3);
    // Row 0 of the image is the highest y so the slice reads right way up.
    for row in 0..h {
        let y = ny - 1 - row / SCALE;
        for col in 0..w {
            out.extend_from_slice(&rgb[y * nx + col / SCALE]);
        }
    }
    (w, h, out)
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Failure::Data(format!("{}: {e}", path.display()));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(rgb).map_err(png_err)?;
    w.finish().map_err(png_err)
}

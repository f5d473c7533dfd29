//! Rotated L-shaped sprite rasterised by inverse-map bilinear sampling, with
//! an optional hue rotation of its colour.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::geometry::CircleAngle;

pub const MIN_SPRITE_SIZE: usize = 8;
pub const MAX_SPRITE_SIZE: usize = 64;

const SUPERSAMPLING: usize = 8;

/// Axis-aligned rectangles making up the L, in coordinates where the image
/// spans [−1, 1] (x to the right, y down).
const L_SHAPE: [[f64; 4]; 2] = [[-0.35, -0.05, -0.55, 0.55], [-0.05, 0.45, 0.25, 0.55]];

fn inside_l(x: f64, y: f64) -> bool {
    L_SHAPE.iter().any(|r| x >= r[0] && x < r[1] && y >= r[2] && y < r[3])
}

/// Unrotated sprite coverage, row-major, values in [0, 1].
pub fn base_sprite(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let half = size as f64 / 2.0;
    let mut img = vec![0.0; size * size];
    let sub = SUPERSAMPLING as f64;
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLING {
                for sx in 0..SUPERSAMPLING {
                    let px = col as f64 - 0.5 + (sx as f64 + 0.5) / sub;
                    let py = row as f64 - 0.5 + (sy as f64 + 0.5) / sub;
                    if inside_l((px - c) / half, (py - c) / half) {
                        hits += 1;
                    }
                }
            }
            img[row * size + col] = hits as f64 / (sub * sub);
        }
    }
    img
}

fn pixel(img: &[f64], size: usize, row: isize, col: isize) -> f64 {
    if row < 0 || col < 0 || row >= size as isize || col >= size as isize {
        0.0
    } else {
        img[row as usize * size + col as usize]
    }
}

fn bilinear(img: &[f64], size: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (c0, r0) = (x0 as isize, y0 as isize);
    let top = pixel(img, size, r0, c0) * (1.0 - fx) + pixel(img, size, r0, c0 + 1) * fx;
    let bottom = pixel(img, size, r0 + 1, c0) * (1.0 - fx) + pixel(img, size, r0 + 1, c0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Sprite intensity rotated by `theta` about the image centre.
pub fn rotated_intensity(theta: CircleAngle, size: usize) -> Vec<f64> {
    let base = base_sprite(size);
    rotate_image(&base, size, theta)
}

pub(crate) fn rotate_image(base: &[f64], size: usize, theta: CircleAngle) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let (s, co) = theta.radians().sin_cos();
    let mut out = vec![0.0; size * size];
    for row in 0..size {
        for col in 0..size {
            let (dx, dy) = (col as f64 - c, row as f64 - c);
            // Pull back through the inverse rotation.
            let x = c + co * dx + s * dy;
            let y = c - s * dx + co * dy;
            out[row * size + col] = bilinear(base, size, x, y);
        }
    }
    out
}

/// RGB colour at hue angle `h`: grey plus a unit circle in the plane
/// orthogonal to grey.
pub fn hue_color(h: CircleAngle) -> [f64; 3] {
    let e1 = [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0];
    let s6 = 6f64.sqrt();
    let e2 = [1.0 / s6, 1.0 / s6, -2.0 / s6];
    let (s, c) = h.radians().sin_cos();
    std::array::from_fn(|k| 0.5 + 0.5 * (c * e1[k] + s * e2[k]))
}

/// Flattened sprite: `size²` grey values, or `3·size²` interleaved RGB
/// values when a hue is given.
///
/// # Panics
/// If `size` lies outside `MIN_SPRITE_SIZE..=MAX_SPRITE_SIZE`.
pub fn rotated_sprite(theta: CircleAngle, hue: Option<CircleAngle>, size: usize) -> Vec<f64> {
    assert!(
        (MIN_SPRITE_SIZE..=MAX_SPRITE_SIZE).contains(&size),
        "sprite size must lie in {MIN_SPRITE_SIZE}..={MAX_SPRITE_SIZE}"
    );
    let intensity = rotated_intensity(theta, size);
    match hue {
        None => intensity,
        Some(h) => {
            let color = hue_color(h);
            intensity.iter().flat_map(|&v| color.map(|c| v * c)).collect()
        }
    }
}

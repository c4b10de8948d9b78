//! Composite images: nucleus white on black, chromosome territories green,
//! heterochromatin red on top. One pixel per grid point, largest `y` in the
//! top row.

use std::path::Path;

use nar_core::model::h;
use nar_core::State;

use crate::error::{CliError, CliResult};

/// Row-major RGB pixels, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }
}

fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn over(base: [f64; 3], top: [f64; 3], alpha: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| base[c] * (1.0 - alpha) + top[c] * alpha)
}

pub fn composite(state: &State) -> Image {
    let g = state.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut rgb = Vec::with_capacity(3 * nx * ny);
    for row in 0..ny {
        let j = ny - 1 - row;
        for i in 0..nx {
            let k = j * nx + i;
            let inside = unit(1.0 - h(state.phi0.values()[k]));
            let green = state
                .phi
                .iter()
                .map(|f| unit(h(f.values()[k])))
                .fold(0.0, f64::max);
            let red = unit(h(state.psi.values()[k]));
            let c = over([inside; 3], [0.0, 1.0, 0.0], green);
            let c = over(c, [1.0, 0.0, 0.0], red);
            rgb.extend(c.map(|v| (v * 255.0).round() as u8));
        }
    }
    Image {
        width: nx,
        height: ny,
        rgb,
    }
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.rgb);
    out
}

pub fn write_ppm(path: &Path, img: &Image) -> CliResult<()> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| CliError::io(path, e))
}

pub fn write_png(path: &Path, img: &Image) -> CliResult<()> {
    image::save_buffer(
        path,
        &img.rgb,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| CliError::io(path, e))
}

/// Writes by extension: `.ppm` or `.png`.
pub fn write_image(path: &Path, img: &Image) -> CliResult<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ppm") => write_ppm(path, img),
        Some(e) if e.eq_ignore_ascii_case("png") => write_png(path, img),
        _ => Err(CliError::io(path, "image extension must be .ppm or .png")),
    }
}

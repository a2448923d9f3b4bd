//! 16x16 RGB images with float channels in [0, 1].

use ndarray::Array3;

/// Canvas side length in pixels.
pub const CANVAS: usize = 16;
/// Number of color channels.
pub const CHANNELS: usize = 3;

/// One generated or rendered image, row-major (y, x, channel), values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Array3<f32>,
}

impl Image {
    pub fn filled(value: f32) -> Self {
        Image {
            data: Array3::from_elem((CANVAS, CANVAS, CHANNELS), value),
        }
    }

    pub fn from_array(data: Array3<f32>) -> Self {
        assert_eq!(data.dim(), (CANVAS, CANVAS, CHANNELS), "image shape");
        Image { data }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        [
            self.data[[y, x, 0]],
            self.data[[y, x, 1]],
            self.data[[y, x, 2]],
        ]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        for (c, v) in rgb.iter().enumerate() {
            self.data[[y, x, c]] = *v;
        }
    }

    pub fn clamp_unit(&mut self) {
        self.data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }

    pub fn bits(&self) -> Vec<u32> {
        self.data.iter().map(|v| v.to_bits()).collect()
    }

    /// Flat f32 buffer in (y, x, channel) order.
    pub fn to_flat(&self) -> Vec<f32> {
        self.data.iter().copied().collect()
    }

    pub fn from_flat(flat: &[f32]) -> Self {
        assert_eq!(flat.len(), CANVAS * CANVAS * CHANNELS, "image buffer size");
        Image {
            data: Array3::from_shape_vec((CANVAS, CANVAS, CHANNELS), flat.to_vec()).unwrap(),
        }
    }

    /// 8-bit RGB rows for PNG export.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn save_png(&self, path: &std::path::Path) -> std::io::Result<()> {
        save_png_grid(path, &[self.clone()], 1, 1)
    }
}

/// Write a grid of images as one PNG contact sheet, `scale`d up with
/// nearest-neighbor so 16x16 tiles stay legible.
pub fn save_png_grid(
    path: &std::path::Path,
    images: &[Image],
    cols: usize,
    scale: usize,
) -> std::io::Result<()> {
    assert!(cols > 0 && scale > 0);
    let rows = images.len().div_ceil(cols);
    let gap = 2usize;
    let tile = CANVAS * scale;
    let width = cols * tile + (cols + 1) * gap;
    let height = rows * tile + (rows + 1) * gap;
    let mut buf = image::RgbImage::from_pixel(width as u32, height as u32, image::Rgb([24, 24, 24]));
    for (i, img) in images.iter().enumerate() {
        let (gy, gx) = (i / cols, i % cols);
        let ox = gap + gx * (tile + gap);
        let oy = gap + gy * (tile + gap);
        let rgb = img.to_rgb8();
        for y in 0..tile {
            for x in 0..tile {
                let (sx, sy) = (x / scale, y / scale);
                let base = (sy * CANVAS + sx) * CHANNELS;
                buf.put_pixel(
                    (ox + x) as u32,
                    (oy + y) as u32,
                    image::Rgb([rgb[base], rgb[base + 1], rgb[base + 2]]),
                );
            }
        }
    }
    buf.save(path)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip_is_exact() {
        let mut img = Image::filled(0.5);
        img.set(3, 7, [0.1, 0.2, 0.3]);
        let back = Image::from_flat(&img.to_flat());
        assert_eq!(img.bits(), back.bits());
    }

    #[test]
    fn png_export_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        Image::filled(0.25).save_png(&path).unwrap();
        assert!(path.metadata().unwrap().len() > 0);
    }
}

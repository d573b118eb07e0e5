use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Grayscale image tiled into `grid_rows × grid_cols` regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    grid_rows: usize,
    grid_cols: usize,
}

impl ImageGrid {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        grid_rows: usize,
        grid_cols: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || grid_rows == 0 || grid_cols == 0 {
            return Err(Error::Contract("image and grid sizes must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::dim("image pixels", &[height, width], &[pixels.len()]));
        }
        if width % grid_cols != 0 || height % grid_rows != 0 {
            return Err(Error::dim(
                "image region grid",
                &[height, width],
                &[grid_rows, grid_cols],
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!(
                "pixel intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            grid_rows,
            grid_cols,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn region_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel rectangle `(x0, y0, w, h)` of region `r` (row-major over the grid).
    pub fn region_bounds(&self, r: usize) -> (usize, usize, usize, usize) {
        let rw = self.width / self.grid_cols;
        let rh = self.height / self.grid_rows;
        ((r % self.grid_cols) * rw, (r / self.grid_cols) * rh, rw, rh)
    }

    /// Average-pools every region into `pool × pool` cells, one row per
    /// region: shape `[R, pool²]`.
    pub fn patch_vectors(&self, pool: usize) -> Result<Tensor> {
        let (_, _, rw, rh) = self.region_bounds(0);
        if pool == 0 || rw % pool != 0 || rh % pool != 0 {
            return Err(Error::dim("region pooling", &[rh, rw], &[pool, pool]));
        }
        let cw = rw / pool;
        let ch = rh / pool;
        let cell_area = (cw * ch) as f64;
        let regions = self.region_count();
        let mut out = Vec::with_capacity(regions * pool * pool);
        for r in 0..regions {
            let (x0, y0, _, _) = self.region_bounds(r);
            for cy in 0..pool {
                for cx in 0..pool {
                    let mut acc = 0.0;
                    for y in y0 + cy * ch..y0 + (cy + 1) * ch {
                        let row = &self.pixels[y * self.width..(y + 1) * self.width];
                        acc += row[x0 + cx * cw..x0 + (cx + 1) * cw].iter().sum::<f64>();
                    }
                    out.push(acc / cell_area);
                }
            }
        }
        Tensor::matrix(regions, pool * pool, out)
    }

    /// Parses an 8-bit binary PGM (`P5`) image.
    pub fn from_pgm(bytes: &[u8], grid_rows: usize, grid_cols: usize) -> Result<Self> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format {
                    offset: pos,
                    message: "truncated PGM header".into(),
                });
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if fields[0].1 != "P5" {
            return Err(Error::Format {
                offset: 0,
                message: format!("expected PGM magic P5, found {:?}", fields[0].1),
            });
        }
        let mut nums = [0usize; 3];
        for (slot, (offset, text)) in nums.iter_mut().zip(&fields[1..]) {
            *slot = text.parse().map_err(|_| Error::Format {
                offset: *offset,
                message: format!("invalid PGM header field {text:?}"),
            })?;
        }
        let [width, height, maxval] = nums;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format {
                offset: fields[3].0,
                message: format!("only 8-bit PGM is supported, maxval is {maxval}"),
            });
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height;
        if bytes.len() < pos + need {
            return Err(Error::Format {
                offset: bytes.len(),
                message: format!("PGM raster truncated: need {need} bytes"),
            });
        }
        let pixels = bytes[pos..pos + need]
            .iter()
            .map(|&b| (b as f64 / maxval as f64).min(1.0))
            .collect();
        Self::new(width, height, pixels, grid_rows, grid_cols)
    }

    pub fn load_pgm(path: &Path, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        Self::from_pgm(&std::fs::read(path)?, grid_rows, grid_cols)
    }

    /// Encodes as `P5` with maxval 255, rounding intensities to 8 bits.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|v| (v * 255.0).round() as u8));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids_and_values() {
        assert!(ImageGrid::new(4, 4, vec![0.5; 16], 3, 2).is_err());
        assert!(ImageGrid::new(4, 4, vec![1.5; 16], 2, 2).is_err());
        assert!(ImageGrid::new(4, 4, vec![0.5; 15], 2, 2).is_err());
    }

    #[test]
    fn patch_pooling() {
        // 4x4 image, 2x2 grid, pool 1 → region means
        let px: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let img = ImageGrid::new(4, 4, px.clone(), 2, 2).unwrap();
        let p = img.patch_vectors(1).unwrap();
        assert_eq!(p.shape(), &[4, 1]);
        let expect0 = (px[0] + px[1] + px[4] + px[5]) / 4.0;
        assert!((p.get(0, 0) - expect0).abs() < 1e-15);
        let p2 = img.patch_vectors(2).unwrap();
        assert_eq!(p2.shape(), &[4, 4]);
        assert_eq!(p2.row(3), &[px[10], px[11], px[14], px[15]]);
        assert!(img.patch_vectors(3).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let px: Vec<f64> = (0..36).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = ImageGrid::new(6, 6, px, 3, 3).unwrap();
        let bytes = img.to_pgm();
        let back = ImageGrid::from_pgm(&bytes, 3, 3).unwrap();
        assert_eq!(back, img);
        let with_comment = b"P5\n# hi\n2 1\n255\n\x00\xff";
        let img = ImageGrid::from_pgm(with_comment, 1, 1).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_errors_carry_offsets() {
        assert!(matches!(
            ImageGrid::from_pgm(b"P2\n1 1\n255\n\x00", 1, 1),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            ImageGrid::from_pgm(b"P5\n2 2\n255\n\x00", 1, 1),
            Err(Error::Format { .. })
        ));
    }
}

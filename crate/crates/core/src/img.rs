//! Row-major float image and mask buffers shared by the renderer, losses,
//! and file I/O.

/// H x W x 3 image with channels in [0, 1] (or [-1, 1] for normal maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuf {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        ImageBuf {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [f64; 3]) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn same_shape(&self, other: &ImageBuf) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Exact box downsample by an integer factor (area interpolation).
    pub fn box_downsample(&self, factor: usize) -> ImageBuf {
        assert!(factor >= 1);
        assert_eq!(self.width % factor, 0);
        assert_eq!(self.height % factor, 0);
        if factor == 1 {
            return self.clone();
        }
        let w = self.width / factor;
        let h = self.height / factor;
        let inv = 1.0 / (factor * factor) as f64;
        let mut out = ImageBuf::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for sy in 0..factor {
                    for sx in 0..factor {
                        let p = self.get(x * factor + sx, y * factor + sy);
                        for ch in 0..3 {
                            acc[ch] += p[ch];
                        }
                    }
                }
                out.set(x, y, [acc[0] * inv, acc[1] * inv, acc[2] * inv]);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ImageBuf) -> f64 {
        assert!(self.same_shape(other));
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |ch| (a[ch] - b[ch]).abs()))
            .fold(0.0, f64::max)
    }
}

/// Binary per-pixel mask aligned with a camera's image.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBuf {
    pub width: usize,
    pub height: usize,
    pub values: Vec<bool>,
}

impl MaskBuf {
    pub fn new(width: usize, height: usize) -> Self {
        MaskBuf {
            width,
            height,
            values: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.values[y * self.width + x] = value;
    }

    pub fn count_true(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_downsample_averages_blocks() {
        let mut img = ImageBuf::new(4, 2);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [i as f64, 0.0, 1.0];
        }
        let down = img.box_downsample(2);
        assert_eq!(down.width, 2);
        assert_eq!(down.height, 1);
        // block {0,1,4,5} and {2,3,6,7}
        assert_eq!(down.get(0, 0), [2.5, 0.0, 1.0]);
        assert_eq!(down.get(1, 0), [4.5, 0.0, 1.0]);
    }

    #[test]
    fn box_downsample_identity_at_factor_one() {
        let img = ImageBuf::filled(3, 3, [0.25, 0.5, 0.75]);
        assert_eq!(img.box_downsample(1), img);
    }
}

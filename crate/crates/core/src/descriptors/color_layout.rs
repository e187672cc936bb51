use super::DescriptorError;

/// 6 luma + 3 Cb + 3 Cr coefficients.
pub const CLD_LEN: usize = 12;
const GRID: usize = 8;
const LUMA_COEFFS: usize = 6;
const CHROMA_COEFFS: usize = 3;

/// An RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFrameImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl KeyFrameImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, DescriptorError> {
        if width == 0 || height == 0 {
            return Err(DescriptorError::InvalidImage(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(DescriptorError::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn uniform(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Average RGB of each cell of an 8x8 partition. Images narrower or shorter
/// than 8 pixels reuse the nearest pixel row/column for empty cells.
fn cell_averages(image: &KeyFrameImage) -> [[[f64; 3]; GRID]; GRID] {
    let mut sum = [[[0.0f64; 3]; GRID]; GRID];
    let mut count = [[0usize; GRID]; GRID];
    for y in 0..image.height {
        let cy = y * GRID / image.height;
        for x in 0..image.width {
            let cx = x * GRID / image.width;
            let p = image.pixel(x, y);
            for c in 0..3 {
                sum[cy][cx][c] += p[c] as f64;
            }
            count[cy][cx] += 1;
        }
    }
    let mut avg = [[[0.0f64; 3]; GRID]; GRID];
    for cy in 0..GRID {
        for cx in 0..GRID {
            if count[cy][cx] > 0 {
                for c in 0..3 {
                    avg[cy][cx][c] = sum[cy][cx][c] / count[cy][cx] as f64;
                }
            } else {
                let p = image.pixel(cx * image.width / GRID, cy * image.height / GRID);
                for c in 0..3 {
                    avg[cy][cx][c] = p[c] as f64;
                }
            }
        }
    }
    avg
}

/// BT.601 full-range RGB to YCbCr.
fn ycbcr(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
    ]
}

/// Orthonormal DCT-II basis, `basis[u][x]`.
fn dct_basis() -> [[f64; GRID]; GRID] {
    let mut basis = [[0.0; GRID]; GRID];
    for (u, row) in basis.iter_mut().enumerate() {
        let alpha = if u == 0 {
            (1.0 / GRID as f64).sqrt()
        } else {
            (2.0 / GRID as f64).sqrt()
        };
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha
                * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * GRID) as f64).cos();
        }
    }
    basis
}

/// Separable 2-D DCT: `out[v][u]`, `v` vertical frequency.
fn dct2(block: &[[f64; GRID]; GRID], basis: &[[f64; GRID]; GRID]) -> [[f64; GRID]; GRID] {
    let mut rows = [[0.0; GRID]; GRID];
    for y in 0..GRID {
        for u in 0..GRID {
            rows[y][u] = (0..GRID).map(|x| basis[u][x] * block[y][x]).sum();
        }
    }
    let mut out = [[0.0; GRID]; GRID];
    for v in 0..GRID {
        for u in 0..GRID {
            out[v][u] = (0..GRID).map(|y| basis[v][y] * rows[y][u]).sum();
        }
    }
    out
}

/// First `n` positions `(row, col)` of the zigzag scan.
fn zigzag(n: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(n);
    'diagonals: for d in 0..(2 * GRID - 1) {
        let lo = d.saturating_sub(GRID - 1);
        let hi = d.min(GRID - 1);
        for i in lo..=hi {
            // even diagonals run bottom-left to top-right
            let row = if d % 2 == 0 { d - i } else { i };
            order.push((row, d - row));
            if order.len() == n {
                break 'diagonals;
            }
        }
    }
    order
}

/// Color layout of a key frame: 8x8 cell averages, YCbCr, per-channel DCT,
/// zigzag scan; 6 luma then 3 Cb then 3 Cr coefficients.
pub fn color_layout(image: &KeyFrameImage) -> [f64; CLD_LEN] {
    let cells = cell_averages(image);
    let mut planes = [[[0.0; GRID]; GRID]; 3];
    for y in 0..GRID {
        for x in 0..GRID {
            let c = ycbcr(cells[y][x]);
            for ch in 0..3 {
                planes[ch][y][x] = c[ch];
            }
        }
    }
    let basis = dct_basis();
    let scan = zigzag(LUMA_COEFFS);
    let mut out = [0.0; CLD_LEN];
    let mut k = 0;
    for (ch, plane) in planes.iter().enumerate() {
        let coeffs = dct2(plane, &basis);
        let take = if ch == 0 { LUMA_COEFFS } else { CHROMA_COEFFS };
        for &(r, c) in &scan[..take] {
            out[k] = coeffs[r][c];
            k += 1;
        }
    }
    out
}

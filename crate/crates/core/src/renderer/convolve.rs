//! Gather convolution with per-pixel pillbox kernels.

use rayon::prelude::*;

use super::kernel::PillboxKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Symmetric reflection, edge sample repeated (`… 1 0 | 0 1 …`).
    Mirror,
    /// Zero outside the plane.
    Zero,
}

/// Reflects an out-of-range index into `[0, n)`.
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Channel planes padded on every side, with per-row prefix sums.
pub(crate) struct PaddedPlanes {
    pad: usize,
    pw: usize,
    planes: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
}

impl PaddedPlanes {
    /// `samples` is interleaved with `channels` values per pixel.
    pub fn new(
        samples: &[f32],
        width: usize,
        height: usize,
        channels: usize,
        pad: usize,
        padding: Padding,
    ) -> Self {
        let pw = width + 2 * pad;
        let ph = height + 2 * pad;
        let mut planes = vec![vec![0.0f64; pw * ph]; channels];
        for py in 0..ph {
            let sy = py as isize - pad as isize;
            let row_inside = sy >= 0 && (sy as usize) < height;
            if padding == Padding::Zero && !row_inside {
                continue;
            }
            let y = mirror_index(sy, height);
            for px in 0..pw {
                let sx = px as isize - pad as isize;
                let inside = sx >= 0 && (sx as usize) < width;
                if padding == Padding::Zero && !inside {
                    continue;
                }
                let x = mirror_index(sx, width);
                let src = (y * width + x) * channels;
                for (c, plane) in planes.iter_mut().enumerate() {
                    plane[py * pw + px] = samples[src + c] as f64;
                }
            }
        }
        let prefix = planes
            .iter()
            .map(|plane| {
                let mut p = vec![0.0f64; (pw + 1) * ph];
                for y in 0..ph {
                    let mut acc = 0.0;
                    for x in 0..pw {
                        acc += plane[y * pw + x];
                        p[y * (pw + 1) + x + 1] = acc;
                    }
                }
                p
            })
            .collect();
        PaddedPlanes {
            pad,
            pw,
            planes,
            prefix,
        }
    }

    /// Convolves channel `c` with `kernel` at pixel `(x, y)`.
    ///
    /// The kernel half-size must not exceed the padding.
    #[inline]
    pub fn gather(&self, c: usize, x: usize, y: usize, kernel: &PillboxKernel) -> f64 {
        debug_assert!(kernel.half() <= self.pad);
        let plane = &self.planes[c];
        let prefix = &self.prefix[c];
        let cx = (x + self.pad) as isize;
        let cy = (y + self.pad) as isize;
        let pw = self.pw as isize;
        let mut full = 0.0;
        let mut rim = 0.0;
        for row in &kernel.rows {
            let yy = cy + row.dy;
            if let Some((lo, hi)) = row.full {
                let base = yy * (pw + 1) + cx;
                full += prefix[(base + hi + 1) as usize] - prefix[(base + lo) as usize];
            }
            let base = yy * pw + cx;
            for &(dx, w) in &row.partial {
                rim += w * plane[(base + dx) as usize];
            }
        }
        full * kernel.full_weight() + rim
    }
}

/// Constant-radius convolution of a single plane, mirror padded.
pub fn blur_plane(
    samples: &[f32],
    width: usize,
    height: usize,
    kernel: &PillboxKernel,
) -> Vec<f64> {
    let padded = PaddedPlanes::new(samples, width, height, 1, kernel.half(), Padding::Mirror);
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = padded.gather(0, x, y, kernel);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_indices() {
        let got: Vec<usize> = (-4..8).map(|i| mirror_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(mirror_index(-1, 1), 0);
    }

    #[test]
    fn span_gather_matches_dense_kernel() {
        let (w, h) = (23usize, 17usize);
        let samples: Vec<f32> = (0..w * h)
            .map(|i| ((i * 7919) % 101) as f32 / 100.0)
            .collect();
        for &r in &[0.0, 0.9, 2.5, 4.2] {
            let k = PillboxKernel::new(r);
            let dense = k.weights();
            let n = k.size() as isize;
            let half = k.half() as isize;
            let got = blur_plane(&samples, w, h, &k);
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    for ky in 0..n {
                        for kx in 0..n {
                            let sx = mirror_index(x + kx - half, w);
                            let sy = mirror_index(y + ky - half, h);
                            acc += dense[(ky * n + kx) as usize] * samples[sy * w + sx] as f64;
                        }
                    }
                    let g = got[y as usize * w + x as usize];
                    assert!((g - acc).abs() < 1e-12, "r={r} ({x},{y}): {g} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn constant_image_is_preserved() {
        let samples = vec![0.37f32; 40 * 30];
        for &r in &[1.0, 3.3, 9.9] {
            let out = blur_plane(&samples, 40, 30, &PillboxKernel::new(r));
            assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-6));
        }
    }
}

//! Anti-aliased pillbox (uniform disk) kernels.
//!
//! Each cell weight is the exact area of the intersection between the disk and
//! the unit pixel cell, normalized so the weights sum to one. Cells fully inside
//! the disk share the same weight, so every kernel row is stored as one
//! contiguous "full" span plus a short list of partially covered rim cells.
//! Convolution with prefix sums then costs O(radius) per output pixel.

/// Radius below which the kernel is the identity.
pub const IDENTITY_RADIUS: f64 = 0.5;

#[derive(Debug, Clone)]
pub(crate) struct KernelRow {
    pub dy: isize,
    /// Inclusive `[lo, hi]` of fully covered cells.
    pub full: Option<(isize, isize)>,
    pub partial: Vec<(isize, f64)>,
}

/// Normalized disk kernel of a given radius in pixels.
#[derive(Debug, Clone)]
pub struct PillboxKernel {
    radius: f64,
    half: usize,
    full_weight: f64,
    pub(crate) rows: Vec<KernelRow>,
}

impl PillboxKernel {
    pub fn new(radius_px: f64) -> Self {
        let radius = radius_px.max(0.0);
        if radius <= IDENTITY_RADIUS {
            return PillboxKernel {
                radius,
                half: 0,
                full_weight: 1.0,
                rows: vec![KernelRow {
                    dy: 0,
                    full: None,
                    partial: vec![(0, 1.0)],
                }],
            };
        }
        let r = radius;
        let half = Self::half_for(r);
        let h = half as isize;
        let mut rows = Vec::with_capacity(2 * half + 1);
        let mut total = 0.0;
        for dy in -h..=h {
            let mut full: Option<(isize, isize)> = None;
            let mut partial = Vec::new();
            for dx in -h..=h {
                match cell_coverage(r, dx, dy) {
                    Coverage::Full => {
                        full = Some(match full {
                            Some((lo, _)) => (lo, dx),
                            None => (dx, dx),
                        });
                        total += 1.0;
                    }
                    Coverage::Partial(area) => {
                        partial.push((dx, area));
                        total += area;
                    }
                    Coverage::Empty => {}
                }
            }
            rows.push(KernelRow { dy, full, partial });
        }
        let full_weight = 1.0 / total;
        for row in &mut rows {
            for (_, w) in &mut row.partial {
                *w /= total;
            }
        }
        PillboxKernel {
            radius,
            half,
            full_weight,
            rows,
        }
    }

    /// Half-size of the kernel built for `radius_px`.
    pub fn half_for(radius_px: f64) -> usize {
        if !(radius_px > IDENTITY_RADIUS) {
            return 0;
        }
        ((radius_px + 0.5).ceil() as usize).saturating_sub(1).max(1)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Kernel side length `2·half + 1`.
    pub fn size(&self) -> usize {
        2 * self.half + 1
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub(crate) fn full_weight(&self) -> f64 {
        self.full_weight
    }

    /// Dense row-major weights, `size() × size()`, centered.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.size();
        let h = self.half as isize;
        let mut out = vec![0.0; n * n];
        for row in &self.rows {
            let y = (row.dy + h) as usize;
            if let Some((lo, hi)) = row.full {
                for dx in lo..=hi {
                    out[y * n + (dx + h) as usize] = self.full_weight;
                }
            }
            for &(dx, w) in &row.partial {
                out[y * n + (dx + h) as usize] = w;
            }
        }
        out
    }
}

enum Coverage {
    Full,
    Partial(f64),
    Empty,
}

/// Coverage of the unit cell centered at `(dx, dy)`. Evaluated on the canonical
/// octant so the result is exactly invariant under 90° rotations and mirroring.
fn cell_coverage(r: f64, dx: isize, dy: isize) -> Coverage {
    let (ax, ay) = (dx.unsigned_abs(), dy.unsigned_abs());
    let (a, b) = (ax.max(ay) as f64, ax.min(ay) as f64);
    let far = (a + 0.5) * (a + 0.5) + (b + 0.5) * (b + 0.5);
    if far <= r * r {
        return Coverage::Full;
    }
    let na = (a - 0.5).max(0.0);
    let nb = (b - 0.5).max(0.0);
    if na * na + nb * nb >= r * r {
        return Coverage::Empty;
    }
    let area = disk_rect_area(r, a - 0.5, a + 0.5, b - 0.5, b + 0.5);
    if area > 0.0 {
        Coverage::Partial(area)
    } else {
        Coverage::Empty
    }
}

/// Area of `{x² + y² ≤ r²}` inside the rectangle `[x0, x1] × [y0, y1]`.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let xs = split_interval(x0, x1);
    let ys = split_interval(y0, y1);
    let mut area = 0.0;
    for &(a0, a1) in xs.iter().flatten() {
        for &(b0, b1) in ys.iter().flatten() {
            area += quadrant_area(r, a1, b1) - quadrant_area(r, a0, b1) - quadrant_area(r, a1, b0)
                + quadrant_area(r, a0, b0);
        }
    }
    area.max(0.0)
}

/// Splits an interval into its nonnegative part and the mirrored negative part.
fn split_interval(lo: f64, hi: f64) -> [Option<(f64, f64)>; 2] {
    let pos = (hi > 0.0).then(|| (lo.max(0.0), hi));
    let neg = (lo < 0.0).then(|| ((-hi).max(0.0), -lo));
    [pos, neg]
}

/// Area of the quarter disk inside `[0, x] × [0, y]` for `x, y ≥ 0`.
fn quadrant_area(r: f64, x: f64, y: f64) -> f64 {
    let x = x.min(r);
    let y = y.min(r);
    if x <= 0.0 || y <= 0.0 {
        return 0.0;
    }
    if x * x + y * y <= r * r {
        return x * y;
    }
    let xc = (r * r - y * y).max(0.0).sqrt();
    xc * y + circle_integral(r, x) - circle_integral(r, xc)
}

/// Antiderivative of `sqrt(r² − t²)`.
fn circle_integral(r: f64, t: f64) -> f64 {
    let t = t.clamp(-r, r);
    0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
}

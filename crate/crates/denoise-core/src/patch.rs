//! Patch references, reference lattices and L2 block matching across one
//! or many frames.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::image::ImagePlane;

/// Location of a `size x size` patch: frame index plus top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRef {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl PatchRef {
    pub fn new(frame: usize, x: usize, y: usize, size: usize) -> Self {
        PatchRef { frame, x, y, size }
    }

    /// True when the patch lies fully inside a `width x height` frame.
    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.size >= 1 && self.x + self.size <= width && self.y + self.size <= height
    }
}

/// A matched group: the reference first, then the most similar patches in
/// ascending sum-of-squared-differences order. `distances[i]` belongs to
/// `members[i]`; `distances[0]` is always `0.0` (the reference against
/// itself on the match source).
#[derive(Debug, Clone)]
pub struct PatchGroup {
    pub members: Vec<PatchRef>,
    pub distances: Vec<f64>,
}

impl PatchGroup {
    pub fn reference(&self) -> PatchRef {
        self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Drops members beyond the first `n` (the kept prefix is the best,
    /// since members are distance-sorted).
    pub fn truncate(&mut self, n: usize) {
        self.members.truncate(n);
        self.distances.truncate(n);
    }
}

/// Block-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Patch side length `k`.
    pub patch_size: usize,
    /// Search radius around the (offset) reference position, per frame.
    pub search_radius: usize,
    /// Maximum group size including the reference.
    pub n_max: usize,
    /// Reference lattice stride.
    pub step: usize,
    /// Optional cap on member SSD; the reference is always kept.
    pub distance_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchError {
    OutOfBounds {
        frame: usize,
        x: usize,
        y: usize,
        size: usize,
    },
    NoSuchFrame {
        frame: usize,
        frames: usize,
    },
}

impl fmt::Display for PatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchError::OutOfBounds { frame, x, y, size } => {
                write!(f, "{size}x{size} patch at ({x}, {y}) exceeds frame {frame}")
            }
            PatchError::NoSuchFrame { frame, frames } => {
                write!(f, "frame index {frame} out of range (stack has {frames})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PatchError {}

/// Copies the pixel block of `patch` out of `frames` in row-major order.
pub fn extract(frames: &[ImagePlane], patch: PatchRef) -> Result<Vec<f64>, PatchError> {
    let plane = frames.get(patch.frame).ok_or(PatchError::NoSuchFrame {
        frame: patch.frame,
        frames: frames.len(),
    })?;
    if !patch.in_bounds(plane.width(), plane.height()) {
        return Err(PatchError::OutOfBounds {
            frame: patch.frame,
            x: patch.x,
            y: patch.y,
            size: patch.size,
        });
    }
    let mut out = Vec::with_capacity(patch.size * patch.size);
    for row in 0..patch.size {
        let start = (patch.y + row) * plane.width() + patch.x;
        out.extend_from_slice(&plane.as_slice()[start..start + patch.size]);
    }
    Ok(out)
}

/// Top-left positions of a stride-`step` reference lattice. The final row
/// and column offsets are always included, so the union of `k x k` patches
/// over the lattice covers every pixel.
pub fn reference_lattice(width: usize, height: usize, k: usize, step: usize) -> Vec<(usize, usize)> {
    assert!(k >= 1 && step >= 1, "k and step must be positive");
    assert!(k <= width && k <= height, "patch larger than frame");
    let axis = |extent: usize| -> Vec<usize> {
        let last = extent - k;
        let mut xs: Vec<usize> = (0..=last).step_by(step).collect();
        if *xs.last().unwrap() != last {
            xs.push(last);
        }
        xs
    };
    let xs = axis(width);
    let ys = axis(height);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push((x, y));
        }
    }
    out
}

/// Candidate ordered by `(distance, frame, y, x)`; the heap keeps the
/// largest on top so the worst kept candidate is cheap to evict.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    frame: usize,
    y: usize,
    x: usize,
}

impl Candidate {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.frame.cmp(&other.frame))
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn ssd(a: &ImagePlane, ax: usize, ay: usize, b: &ImagePlane, bx: usize, by: usize, k: usize) -> f64 {
    let aw = a.width();
    let bw = b.width();
    let asamples = a.as_slice();
    let bsamples = b.as_slice();
    let mut acc = 0.0;
    for row in 0..k {
        let abase = (ay + row) * aw + ax;
        let bbase = (by + row) * bw + bx;
        let ra = &asamples[abase..abase + k];
        let rb = &bsamples[bbase..bbase + k];
        for i in 0..k {
            let d = ra[i] - rb[i];
            acc += d * d;
        }
    }
    acc
}

/// Finds the patches most similar to `reference` by SSD, searching a
/// `(2r+1)^2` window per frame in `scope_frames` on `match_source`.
///
/// The window on frame `f` is centered at the reference position shifted
/// by `center_offsets[f]` when offsets are given (flow-compensated search)
/// and clipped to valid patch positions. The group holds at most
/// `cfg.n_max` members; the reference is always first with distance zero,
/// the rest are sorted ascending with ties broken by `(frame, y, x)`.
/// With `cfg.distance_threshold` set, members above the cap are dropped
/// (never the reference).
pub fn block_match(
    match_source: &[ImagePlane],
    reference: PatchRef,
    cfg: &MatchConfig,
    scope_frames: &[usize],
    center_offsets: Option<&[(i64, i64)]>,
) -> Result<PatchGroup, PatchError> {
    let k = cfg.patch_size;
    debug_assert_eq!(reference.size, k, "reference size must match config");
    let ref_plane = match_source
        .get(reference.frame)
        .ok_or(PatchError::NoSuchFrame {
            frame: reference.frame,
            frames: match_source.len(),
        })?;
    if !reference.in_bounds(ref_plane.width(), ref_plane.height()) {
        return Err(PatchError::OutOfBounds {
            frame: reference.frame,
            x: reference.x,
            y: reference.y,
            size: k,
        });
    }

    let keep = cfg.n_max.saturating_sub(1);
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(keep + 1);
    let r = cfg.search_radius as i64;

    for &f in scope_frames {
        let plane = match_source.get(f).ok_or(PatchError::NoSuchFrame {
            frame: f,
            frames: match_source.len(),
        })?;
        let (dx, dy) = center_offsets.map_or((0, 0), |offs| offs[f]);
        let cx = reference.x as i64 + dx;
        let cy = reference.y as i64 + dy;
        let max_x = (plane.width() - k) as i64;
        let max_y = (plane.height() - k) as i64;
        let x0 = (cx - r).clamp(0, max_x);
        let x1 = (cx + r).clamp(0, max_x);
        let y0 = (cy - r).clamp(0, max_y);
        let y1 = (cy + r).clamp(0, max_y);

        for y in y0..=y1 {
            for x in x0..=x1 {
                let (x, y) = (x as usize, y as usize);
                if f == reference.frame && x == reference.x && y == reference.y {
                    continue;
                }
                let d = ssd(ref_plane, reference.x, reference.y, plane, x, y, k);
                if let Some(cap) = cfg.distance_threshold {
                    if d > cap {
                        continue;
                    }
                }
                if keep == 0 {
                    continue;
                }
                let cand = Candidate { dist: d, frame: f, y, x };
                if heap.len() < keep {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
    }

    let rest = heap.into_sorted_vec();
    let mut members = Vec::with_capacity(rest.len() + 1);
    let mut distances = Vec::with_capacity(rest.len() + 1);
    members.push(reference);
    distances.push(0.0);
    for c in rest {
        members.push(PatchRef::new(c.frame, c.x, c.y, k));
        distances.push(c.dist);
    }
    Ok(PatchGroup { members, distances })
}

//! Two-step BM3D collaborative filtering: transform-domain hard
//! thresholding builds a pilot estimate, Wiener shrinkage against that
//! pilot produces the output. Groups may be gathered from one frame or
//! across a whole stack; filtered patches are recomposed by weighted
//! aggregation.

use alloc::vec;
use alloc::vec::Vec;

use crate::aggregate::AggregationBuffers;
use crate::engine::{
    floor_pow2, lattice_frames, pilot_source, search_frames, validate_stack, AggTarget,
};
pub use crate::engine::{FilterError, GroupingMode};
use crate::image::ImagePlane;
use crate::patch::{block_match, extract, reference_lattice, MatchConfig, PatchRef};
use crate::transform::{haar_forward, haar_inverse, Transform2d, Transform2dKind};
use crate::util::map_fold_ordered;

/// Division floor shared by the aggregation weight formulas.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// BM3D parameters. `new` fills the established defaults of the base
/// method; everything is overridable.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm3dParams {
    /// Noise standard deviation in gray levels.
    pub sigma: f64,
    /// Patch sizes of the two steps.
    pub k1: usize,
    pub k2: usize,
    /// Maximum group sizes (truncated down to a power of two).
    pub n1: usize,
    pub n2: usize,
    /// Reference lattice strides.
    pub step1: usize,
    pub step2: usize,
    /// Search radii around the reference position, per frame.
    pub radius1: usize,
    pub radius2: usize,
    /// Hard threshold is `lambda_hard * sigma` on transform coefficients.
    pub lambda_hard: f64,
    /// Optional SSD cap during matching (disabled by default).
    pub distance_threshold: Option<f64>,
    /// Patch transform of the Wiener step.
    pub step2_transform: Transform2dKind,
}

impl Bm3dParams {
    pub fn new(sigma: f64) -> Self {
        assert!(sigma >= 0.0);
        Bm3dParams {
            sigma,
            k1: 8,
            k2: 8,
            n1: 16,
            n2: 32,
            step1: 3,
            step2: 3,
            radius1: 19,
            radius2: 19,
            lambda_hard: 2.7,
            distance_threshold: None,
            step2_transform: Transform2dKind::Dct,
        }
    }

    /// The oversized-group preset: maximum group sizes doubled.
    pub fn oversized(sigma: f64) -> Self {
        let mut p = Self::new(sigma);
        p.n1 *= 2;
        p.n2 *= 2;
        p
    }
}

/// Hard-thresholds a 3D coefficient group in place and returns the number
/// of retained (nonzero) coefficients.
///
/// Layout is member-major: `coeffs[m * k * k + i]` is coefficient `i` of
/// group-axis slot `m`. Coefficients with `|c| <= lambda_hard * sigma` are
/// zeroed, except the DC coefficient of the group's DC slot
/// (`coeffs[0]`), which is always kept.
pub fn hard_threshold_group(coeffs: &mut [f64], sigma: f64, lambda_hard: f64) -> usize {
    let thr = lambda_hard * sigma;
    let mut retained = 0usize;
    for (i, c) in coeffs.iter_mut().enumerate() {
        if i != 0 && crate::math::abs(*c) <= thr {
            *c = 0.0;
        }
        if *c != 0.0 {
            retained += 1;
        }
    }
    retained
}

/// Aggregation weight of a hard-thresholded group.
pub fn hard_aggregation_weight(sigma: f64, n_retained: usize) -> f64 {
    1.0 / ((sigma * sigma).max(WEIGHT_FLOOR) * n_retained.max(1) as f64)
}

/// Empirical Wiener shrinkage of a 3D coefficient group against pilot
/// coefficients of identical shape. Filters in place and returns the
/// aggregation weight `1 / (sigma^2 * sum h^2)` (floored).
pub fn wiener_group(noisy: &mut [f64], pilot: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(noisy.len(), pilot.len());
    let s2 = sigma * sigma;
    let mut h2_sum = 0.0;
    for (c, &p) in noisy.iter_mut().zip(pilot) {
        let p2 = p * p;
        let h = if s2 == 0.0 { 1.0 } else { p2 / (p2 + s2) };
        *c *= h;
        h2_sum += h * h;
    }
    1.0 / (s2.max(WEIGHT_FLOOR) * h2_sum.max(WEIGHT_FLOOR))
}

/// One filtered group ready for aggregation.
struct GroupResult {
    members: Vec<PatchRef>,
    /// Member-major filtered pixel values (`members.len() * k^2`).
    values: Vec<f64>,
    weight: f64,
}

struct StepConfig<'a> {
    k: usize,
    n_max: usize,
    step: usize,
    radius: usize,
    distance_threshold: Option<f64>,
    transform: &'a Transform2d,
    sigma: f64,
    /// Hard-threshold multiplier for step 1, `None` selects Wiener.
    lambda_hard: Option<f64>,
    target: AggTarget,
}

/// 2D-transforms every member patch, then Haar along the group axis.
fn forward_3d(values: &mut [f64], n: usize, k: usize, transform: &Transform2d, scratch: &mut [f64]) {
    let area = k * k;
    for m in 0..n {
        transform
            .forward(&mut values[m * area..(m + 1) * area])
            .expect("patch length matches transform");
    }
    let (column, scratch2) = scratch.split_at_mut(n);
    for i in 0..area {
        for m in 0..n {
            column[m] = values[m * area + i];
        }
        haar_forward(column, scratch2).expect("group size is dyadic");
        for m in 0..n {
            values[m * area + i] = column[m];
        }
    }
}

fn inverse_3d(values: &mut [f64], n: usize, k: usize, transform: &Transform2d, scratch: &mut [f64]) {
    let area = k * k;
    let (column, scratch2) = scratch.split_at_mut(n);
    for i in 0..area {
        for m in 0..n {
            column[m] = values[m * area + i];
        }
        haar_inverse(column, scratch2).expect("group size is dyadic");
        for m in 0..n {
            values[m * area + i] = column[m];
        }
    }
    for m in 0..n {
        transform
            .inverse(&mut values[m * area..(m + 1) * area])
            .expect("patch length matches transform");
    }
}

/// Gathers the member-major pixel block of a whole group.
fn gather_group(frames: &[ImagePlane], members: &[PatchRef]) -> Vec<f64> {
    let k = members[0].size;
    let mut values = Vec::with_capacity(members.len() * k * k);
    for &m in members {
        values.extend_from_slice(&extract(frames, m).expect("member positions are valid"));
    }
    values
}

/// Runs one collaborative-filtering pass over the stack.
///
/// `match_source` drives the grouping (noisy frames in step 1, the pilot
/// in step 2); `noisy` supplies the values being filtered; `pilot` the
/// Wiener reference. Aggregation is deterministic: groups are folded in
/// lattice order regardless of worker count.
fn run_step(
    noisy: &[ImagePlane],
    pilot: Option<&[ImagePlane]>,
    match_source: &[ImagePlane],
    lattice_on: &[usize],
    scope: &[usize],
    cfg: &StepConfig<'_>,
    fill: Option<&[ImagePlane]>,
) -> Vec<ImagePlane> {
    let (width, height) = noisy[0].dimensions();
    let match_cfg = MatchConfig {
        patch_size: cfg.k,
        search_radius: cfg.radius,
        n_max: cfg.n_max,
        step: cfg.step,
        distance_threshold: cfg.distance_threshold,
    };

    let mut refs: Vec<PatchRef> = Vec::new();
    for &f in lattice_on {
        for (x, y) in reference_lattice(width, height, cfg.k, cfg.step) {
            refs.push(PatchRef::new(f, x, y, cfg.k));
        }
    }

    let out_frames = match cfg.target {
        AggTarget::All => noisy.len(),
        AggTarget::Only(_) => 1,
    };
    let mut agg = AggregationBuffers::new(width, height, out_frames);

    map_fold_ordered(
        &refs,
        |&reference| -> GroupResult {
            let mut group = block_match(match_source, reference, &match_cfg, scope, None)
                .expect("lattice positions are in bounds");
            group.truncate(floor_pow2(group.len()));
            let n = group.len();
            let k = cfg.k;
            let mut values = gather_group(noisy, &group.members);
            let mut scratch = vec![0.0; 2 * n];

            forward_3d(&mut values, n, k, cfg.transform, &mut scratch);
            let weight = match cfg.lambda_hard {
                Some(lambda) => {
                    let retained = hard_threshold_group(&mut values, cfg.sigma, lambda);
                    hard_aggregation_weight(cfg.sigma, retained)
                }
                None => {
                    let mut pilot_values =
                        gather_group(pilot.expect("wiener step needs a pilot"), &group.members);
                    forward_3d(&mut pilot_values, n, k, cfg.transform, &mut scratch);
                    wiener_group(&mut values, &pilot_values, cfg.sigma)
                }
            };
            inverse_3d(&mut values, n, k, cfg.transform, &mut scratch);
            GroupResult {
                members: group.members,
                values,
                weight,
            }
        },
        |result| {
            let k = cfg.k;
            for (i, &member) in result.members.iter().enumerate() {
                let values = &result.values[i * k * k..(i + 1) * k * k];
                match cfg.target {
                    AggTarget::All => agg.add_patch(member, values, result.weight),
                    AggTarget::Only(frame) => {
                        if member.frame == frame {
                            let local = PatchRef::new(0, member.x, member.y, member.size);
                            agg.add_patch(local, values, result.weight);
                        }
                    }
                }
            }
        },
    );

    agg.finalize(fill)
}

/// Full two-step BM3D over a stack.
///
/// Returns one plane for `SingleFrame` and `SingleReference`, all frames
/// for `MultiReference`. A one-frame `MultiReference` run is bit-identical
/// to `SingleFrame`.
pub fn bm3d_denoise(
    frames: &[ImagePlane],
    params: &Bm3dParams,
    mode: GroupingMode,
) -> Result<Vec<ImagePlane>, FilterError> {
    validate_stack(frames, mode)?;
    let l = frames.len();
    let lattice_on = lattice_frames(mode, l);
    let scope = search_frames(mode, l);
    let target = match mode {
        GroupingMode::SingleReference { ref_frame } => AggTarget::Only(ref_frame),
        _ => AggTarget::All,
    };

    // Step 1: hard-threshold pilot, aggregated exactly where the output
    // lives (the reference frame only in single-reference mode).
    let t1 = Transform2d::dct(params.k1);
    let step1 = StepConfig {
        k: params.k1,
        n_max: params.n1,
        step: params.step1,
        radius: params.radius1,
        distance_threshold: params.distance_threshold,
        transform: &t1,
        sigma: params.sigma,
        lambda_hard: Some(params.lambda_hard),
        target,
    };
    let pilot = run_step(frames, None, frames, &lattice_on, &scope, &step1, None);

    // Step 2: Wiener against the pilot; grouping runs on the pilot stack.
    // Frames without a step-1 estimate (the non-reference frames of
    // single-reference mode) stay noisy in that stack.
    let pilot_stack = pilot_source(frames, pilot, mode);
    let t2 = Transform2d::new(params.step2_transform, params.k2)
        .expect("step-2 transform size is validated by construction");
    let step2 = StepConfig {
        k: params.k2,
        n_max: params.n2,
        step: params.step2,
        radius: params.radius2,
        distance_threshold: params.distance_threshold,
        transform: &t2,
        sigma: params.sigma,
        lambda_hard: None,
        target,
    };
    Ok(run_step(
        frames,
        Some(&pilot_stack),
        &pilot_stack,
        &lattice_on,
        &scope,
        &step2,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::mse;

    fn xorshift(state: &mut u64) -> f64 {
        *state ^= *state >> 12;
        *state ^= *state << 25;
        *state ^= *state >> 27;
        (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_plane(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut s = seed | 1;
        let mut p = ImagePlane::zeros(w, h);
        for v in p.as_mut_slice() {
            *v = xorshift(&mut s) * 255.0;
        }
        p
    }

    /// Structured test content: smooth ramp, an edge and a texture band.
    fn structured_plane(w: usize, h: usize) -> ImagePlane {
        let mut p = ImagePlane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut v = 40.0 + 120.0 * (x as f64) / w as f64;
                if y > h / 2 {
                    v += 60.0;
                }
                if x > w / 3 && x < 2 * w / 3 {
                    v += 25.0 * crate::math::sin(0.7 * x as f64) * crate::math::cos(0.9 * y as f64);
                }
                p.set(x, y, v);
            }
        }
        p
    }

    #[test]
    fn floor_pow2_values() {
        assert_eq!(floor_pow2(1), 1);
        assert_eq!(floor_pow2(2), 2);
        assert_eq!(floor_pow2(3), 2);
        assert_eq!(floor_pow2(16), 16);
        assert_eq!(floor_pow2(31), 16);
    }

    #[test]
    fn hard_threshold_zero_sigma_keeps_everything() {
        let mut coeffs = alloc::vec![1.0, -0.5, 0.25, 2.0];
        let retained = hard_threshold_group(&mut coeffs, 0.0, 2.7);
        assert_eq!(retained, 4);
        assert_eq!(coeffs, alloc::vec![1.0, -0.5, 0.25, 2.0]);
    }

    #[test]
    fn hard_threshold_exempts_group_dc() {
        let mut coeffs = alloc::vec![0.1, 0.2, -0.3, 0.05];
        let retained = hard_threshold_group(&mut coeffs, 10.0, 2.7);
        assert_eq!(retained, 1);
        assert_eq!(coeffs, alloc::vec![0.1, 0.0, 0.0, 0.0]);
        // Weight convention: 1 / (sigma^2 * n_retained).
        let w = hard_aggregation_weight(10.0, retained);
        assert!((w - 1.0 / 100.0).abs() < 1e-15);
    }

    // Random 8x8x8 group against a scalar reference loop.
    #[test]
    fn hard_threshold_matches_scalar_loop() {
        let mut s = 42u64;
        let coeffs: Vec<f64> = (0..8 * 8 * 8).map(|_| (xorshift(&mut s) - 0.5) * 300.0).collect();
        let (sigma, lambda) = (25.0, 2.7);
        let mut got = coeffs.clone();
        let retained = hard_threshold_group(&mut got, sigma, lambda);

        let thr = lambda * sigma;
        let mut expect = coeffs.clone();
        let mut n_ref = 0usize;
        for (i, c) in expect.iter_mut().enumerate() {
            if i != 0 && c.abs() <= thr {
                *c = 0.0;
            }
            if *c != 0.0 {
                n_ref += 1;
            }
        }
        assert_eq!(got, expect);
        assert_eq!(retained, n_ref);
    }

    #[test]
    fn wiener_suppresses_on_zero_pilot() {
        let mut noisy = alloc::vec![3.0, -4.0, 5.0];
        let pilot = alloc::vec![0.0, 0.0, 0.0];
        let w = wiener_group(&mut noisy, &pilot, 10.0);
        assert_eq!(noisy, alloc::vec![0.0, 0.0, 0.0]);
        assert!((w - 1.0 / (100.0 * WEIGHT_FLOOR)).abs() < 1e-3 / WEIGHT_FLOOR);
    }

    #[test]
    fn wiener_zero_sigma_is_identity() {
        let mut noisy = alloc::vec![3.0, -4.0, 0.0];
        let pilot = alloc::vec![1.0, 0.0, 2.0];
        wiener_group(&mut noisy, &pilot, 0.0);
        assert_eq!(noisy, alloc::vec![3.0, -4.0, 0.0]);
    }

    #[test]
    fn wiener_matches_scalar_loop() {
        let mut s = 7u64;
        let noisy: Vec<f64> = (0..4 * 25).map(|_| (xorshift(&mut s) - 0.5) * 200.0).collect();
        let pilot: Vec<f64> = (0..4 * 25).map(|_| (xorshift(&mut s) - 0.5) * 200.0).collect();
        let sigma = 17.0;
        let mut got = noisy.clone();
        let w = wiener_group(&mut got, &pilot, sigma);

        let s2 = sigma * sigma;
        let mut h2 = 0.0;
        for i in 0..noisy.len() {
            let h = pilot[i] * pilot[i] / (pilot[i] * pilot[i] + s2);
            let expect = noisy[i] * h;
            assert!((got[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            h2 += h * h;
        }
        let w_ref = 1.0 / (s2 * h2);
        assert!((w - w_ref).abs() <= 1e-12 * w_ref);
    }

    #[test]
    fn zero_sigma_input_passes_through() {
        let img = structured_plane(24, 24);
        let out = bm3d_denoise(
            core::slice::from_ref(&img),
            &Bm3dParams::new(0.0),
            GroupingMode::SingleFrame,
        )
        .unwrap();
        for (a, b) in out[0].as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn multi_reference_with_one_frame_is_single_frame_bit_exact() {
        let clean = structured_plane(32, 24);
        let noisy = crate::noise::add_awgn(&clean, crate::noise::NoiseSpec::new(20.0, 5));
        let params = Bm3dParams::new(20.0);
        let single = bm3d_denoise(
            core::slice::from_ref(&noisy),
            &params,
            GroupingMode::SingleFrame,
        )
        .unwrap();
        let multi = bm3d_denoise(
            core::slice::from_ref(&noisy),
            &params,
            GroupingMode::MultiReference,
        )
        .unwrap();
        let sf = bm3d_denoise(
            core::slice::from_ref(&noisy),
            &params,
            GroupingMode::SingleReference { ref_frame: 0 },
        )
        .unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(multi.len(), 1);
        for ((a, b), c) in single[0]
            .as_slice()
            .iter()
            .zip(multi[0].as_slice())
            .zip(sf[0].as_slice())
        {
            assert_eq!(a.to_bits(), b.to_bits());
            assert_eq!(a.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn denoising_reduces_mse() {
        let clean = structured_plane(48, 48);
        let noisy = crate::noise::add_awgn(&clean, crate::noise::NoiseSpec::new(25.0, 11));
        let out = bm3d_denoise(
            core::slice::from_ref(&noisy),
            &Bm3dParams::new(25.0),
            GroupingMode::SingleFrame,
        )
        .unwrap();
        let before = mse(&clean, &noisy, 0).unwrap();
        let after = mse(&clean, &out[0], 0).unwrap();
        assert!(after < before, "after {after} >= before {before}");
    }

    #[test]
    fn rejects_bad_stacks() {
        let a = ImagePlane::zeros(8, 8);
        let b = ImagePlane::zeros(8, 9);
        let params = Bm3dParams::new(10.0);
        assert!(matches!(
            bm3d_denoise(&[], &params, GroupingMode::MultiReference),
            Err(FilterError::EmptyStack)
        ));
        assert!(matches!(
            bm3d_denoise(&[a.clone(), b], &params, GroupingMode::MultiReference),
            Err(FilterError::MixedDimensions)
        ));
        assert!(matches!(
            bm3d_denoise(&[a.clone(), a.clone()], &params, GroupingMode::SingleFrame),
            Err(FilterError::SingleFrameNeedsOneFrame { frames: 2 })
        ));
        assert!(matches!(
            bm3d_denoise(
                &[a.clone(), a],
                &params,
                GroupingMode::SingleReference { ref_frame: 2 }
            ),
            Err(FilterError::RefFrameOutOfRange { ref_frame: 2, frames: 2 })
        ));
    }

    /// Direct per-pixel evaluation of the weighted double sum over groups:
    /// the gather-side oracle for the scatter-side aggregation buffers.
    /// Groups and filtered patches are rebuilt through the public ops.
    #[allow(clippy::too_many_arguments)]
    fn oracle_step(
        noisy: &[ImagePlane],
        pilot: Option<&[ImagePlane]>,
        match_source: &[ImagePlane],
        params: &Bm3dParams,
        step1: bool,
        lattice_on: &[usize],
        scope: &[usize],
        fill: Option<&[ImagePlane]>,
    ) -> Vec<ImagePlane> {
        let (w, h) = noisy[0].dimensions();
        let (k, n_max, radius, step) = if step1 {
            (params.k1, params.n1, params.radius1, params.step1)
        } else {
            (params.k2, params.n2, params.radius2, params.step2)
        };
        let transform = Transform2d::dct(k);
        let match_cfg = MatchConfig {
            patch_size: k,
            search_radius: radius,
            n_max,
            step,
            distance_threshold: None,
        };

        struct OracleGroup {
            members: Vec<PatchRef>,
            values: Vec<f64>,
            weight: f64,
        }
        let mut groups: Vec<OracleGroup> = Vec::new();
        for &f in lattice_on {
            for (x, y) in reference_lattice(w, h, k, step) {
                let mut g =
                    block_match(match_source, PatchRef::new(f, x, y, k), &match_cfg, scope, None)
                        .unwrap();
                g.truncate(floor_pow2(g.len()));
                let n = g.len();
                let mut values = gather_group(noisy, &g.members);
                let mut scratch = alloc::vec![0.0; 2 * n];
                forward_3d(&mut values, n, k, &transform, &mut scratch);
                let weight = if step1 {
                    let retained =
                        hard_threshold_group(&mut values, params.sigma, params.lambda_hard);
                    hard_aggregation_weight(params.sigma, retained)
                } else {
                    let mut pv = gather_group(pilot.unwrap(), &g.members);
                    forward_3d(&mut pv, n, k, &transform, &mut scratch);
                    wiener_group(&mut values, &pv, params.sigma)
                };
                inverse_3d(&mut values, n, k, &transform, &mut scratch);
                groups.push(OracleGroup {
                    members: g.members,
                    values,
                    weight,
                });
            }
        }

        // Gather: for every pixel sum w * u over all covering patches.
        let mut out = Vec::new();
        for f in 0..noisy.len() {
            let mut plane = ImagePlane::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for g in &groups {
                        for (i, m) in g.members.iter().enumerate() {
                            if m.frame != f {
                                continue;
                            }
                            if x >= m.x && x < m.x + k && y >= m.y && y < m.y + k {
                                let local = (y - m.y) * k + (x - m.x);
                                num += g.weight * g.values[i * k * k + local];
                                den += g.weight;
                            }
                        }
                    }
                    let v = if den > 0.0 {
                        num / den
                    } else {
                        fill.expect("uncovered pixel without fill")[f].as_slice()[y * w + x]
                    };
                    plane.set(x, y, v);
                }
            }
            out.push(plane);
        }
        out
    }

    // Full two-step pipeline against the direct double-sum evaluation on
    // small multi-frame stacks.
    #[test]
    fn pipeline_matches_direct_aggregation_oracle() {
        let mut params = Bm3dParams::new(15.0);
        params.k1 = 3;
        params.k2 = 3;
        params.n1 = 4;
        params.n2 = 4;
        params.step1 = 2;
        params.step2 = 2;
        params.radius1 = 3;
        params.radius2 = 3;

        for (frames_n, w, h, seed) in [(1usize, 8usize, 8usize, 1u64), (2, 12, 10, 2), (3, 16, 9, 3)] {
            let frames: Vec<ImagePlane> =
                (0..frames_n).map(|i| random_plane(w, h, seed + i as u64)).collect();
            let mode = if frames_n == 1 {
                GroupingMode::SingleFrame
            } else {
                GroupingMode::MultiReference
            };
            let got = bm3d_denoise(&frames, &params, mode).unwrap();

            let lattice_on = lattice_frames(mode, frames_n);
            let scope = search_frames(mode, frames_n);
            let pilot = oracle_step(&frames, None, &frames, &params, true, &lattice_on, &scope, None);
            let expect = oracle_step(
                &frames,
                Some(&pilot),
                &pilot,
                &params,
                false,
                &lattice_on,
                &scope,
                None,
            );

            for (a, b) in got.iter().zip(&expect) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
                }
            }
        }
    }
}

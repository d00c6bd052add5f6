//! Two-step non-local Bayes filtering.
//!
//! Each group of similar patches is modeled as samples of a Gaussian; the
//! posterior mean shrinks every patch toward the group mean along the
//! covariance eigenbasis. Step 1 estimates the model from the noisy group
//! (`(C - beta sigma^2 I) C^{-1}` shrinkage), step 2 re-estimates it from
//! the step-1 pilot (`C_p (C_p + beta sigma^2 I)^{-1}`). Aggregation is
//! unweighted: every filtered patch contributes with weight one.

use alloc::vec;
use alloc::vec::Vec;

use crate::aggregate::AggregationBuffers;
use crate::eigen::SymmetricEigen;
use crate::engine::{lattice_frames, pilot_source, search_frames, validate_stack, AggTarget};
pub use crate::engine::{FilterError, GroupingMode};
use crate::image::ImagePlane;
use crate::patch::{block_match, extract, reference_lattice, MatchConfig, PatchRef};
use crate::util::map_fold_ordered;

/// Non-local Bayes parameters. `new` derives the base-method defaults
/// from sigma (larger patches above sigma 60).
#[derive(Debug, Clone, PartialEq)]
pub struct NlbParams {
    pub sigma: f64,
    pub k1: usize,
    pub k2: usize,
    /// Group sizes; the default is `3 k^2`.
    pub n1: usize,
    pub n2: usize,
    pub step1: usize,
    pub step2: usize,
    pub radius1: usize,
    pub radius2: usize,
    /// Filtering strength multipliers on sigma^2 for the two steps.
    pub beta1: f64,
    pub beta2: f64,
    /// Homogeneity test: a group whose sample variance is below
    /// `flat_area_threshold * sigma^2` is replaced by its mean.
    pub flat_area_threshold: f64,
    pub distance_threshold: Option<f64>,
}

impl NlbParams {
    pub fn new(sigma: f64) -> Self {
        assert!(sigma >= 0.0);
        let k = if sigma < 60.0 { 5 } else { 7 };
        NlbParams {
            sigma,
            k1: k,
            k2: k,
            n1: 3 * k * k,
            n2: 3 * k * k,
            step1: 3,
            step2: 3,
            radius1: 16,
            radius2: 16,
            beta1: 1.0,
            beta2: 1.2,
            flat_area_threshold: 1.0,
            distance_threshold: None,
        }
    }
}

/// Gaussian patch prior: sample mean and unbiased sample covariance of a
/// group's patch vectors.
#[derive(Debug, Clone)]
pub struct GaussianPatchModel {
    /// `dim`-vector, `dim = k^2`.
    pub mean: Vec<f64>,
    /// Row-major symmetric `dim x dim` matrix.
    pub covariance: Vec<f64>,
    pub dim: usize,
}

/// Estimates the group model from member-major patch vectors
/// (`n * dim` values). With fewer than two members the covariance falls
/// back to the identity.
pub fn estimate_group_model(values: &[f64], n: usize, dim: usize) -> GaussianPatchModel {
    debug_assert_eq!(values.len(), n * dim);
    let mut mean = vec![0.0; dim];
    for m in 0..n {
        for (s, v) in mean.iter_mut().zip(&values[m * dim..(m + 1) * dim]) {
            *s += v;
        }
    }
    for s in mean.iter_mut() {
        *s /= n as f64;
    }

    let mut covariance = vec![0.0; dim * dim];
    if n < 2 {
        for i in 0..dim {
            covariance[i * dim + i] = 1.0;
        }
        return GaussianPatchModel { mean, covariance, dim };
    }

    let mut centered = vec![0.0; dim];
    for m in 0..n {
        for (c, (v, mu)) in centered
            .iter_mut()
            .zip(values[m * dim..(m + 1) * dim].iter().zip(&mean))
        {
            *c = v - mu;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                covariance[i * dim + j] += ci * centered[j];
            }
        }
    }
    let norm = 1.0 / (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = covariance[i * dim + j] * norm;
            covariance[i * dim + j] = v;
            covariance[j * dim + i] = v;
        }
    }
    GaussianPatchModel { mean, covariance, dim }
}

/// Which shrinkage form to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayesStep {
    /// Model from the noisy group: `u = m + (C - beta s^2 I) C^{-1} (p - m)`
    /// with the first factor eigen-clipped at zero and `C` regularized by
    /// `+delta I`, `delta = 1e-6 trace(C) / dim`.
    FromNoisy,
    /// Model from the pilot group:
    /// `u = m + C_p (C_p + beta s^2 I)^{-1} (p - m)`.
    FromPilot,
}

/// Applies Bayesian shrinkage to every patch of the member-major group
/// `values` (`n * dim`), in place.
pub fn bayes_filter_group(
    values: &mut [f64],
    model: &GaussianPatchModel,
    sigma: f64,
    beta: f64,
    step: BayesStep,
) {
    let dim = model.dim;
    let n = values.len() / dim;
    debug_assert_eq!(values.len(), n * dim);
    let bs2 = beta * sigma * sigma;

    let eig = SymmetricEigen::new(&model.covariance, dim);
    let trace: f64 = (0..dim).map(|i| model.covariance[i * dim + i]).sum();
    let delta = 1e-6 * trace / dim as f64;

    // Per-eigendirection gains.
    let mut gain = vec![0.0; dim];
    for (g, &lambda) in gain.iter_mut().zip(&eig.values) {
        let lc = lambda.max(0.0);
        *g = match step {
            BayesStep::FromNoisy => {
                let num = (lambda - bs2).max(0.0);
                let den = lc + delta;
                if num == 0.0 || den <= 0.0 {
                    0.0
                } else {
                    num / den
                }
            }
            BayesStep::FromPilot => {
                if bs2 == 0.0 {
                    // Zero-noise limit: identity filter.
                    1.0
                } else {
                    lc / (lc + bs2)
                }
            }
        };
    }

    let mut centered = vec![0.0; dim];
    let mut spectrum = vec![0.0; dim];
    for m in 0..n {
        let patch = &mut values[m * dim..(m + 1) * dim];
        for (c, (p, mu)) in centered.iter_mut().zip(patch.iter().zip(&model.mean)) {
            *c = p - mu;
        }
        eig.project(&centered, &mut spectrum);
        for (s, g) in spectrum.iter_mut().zip(&gain) {
            *s *= g;
        }
        eig.reconstruct(&spectrum, &mut centered);
        for (p, (c, mu)) in patch.iter_mut().zip(centered.iter().zip(&model.mean)) {
            *p = c + mu;
        }
    }
}

/// Unbiased sample variance of all pixel values of a group.
fn group_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean: f64 = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    ss / (n - 1) as f64
}

struct GroupResult {
    members: Vec<PatchRef>,
    values: Vec<f64>,
}

struct StepConfig {
    k: usize,
    n_max: usize,
    step: usize,
    radius: usize,
    distance_threshold: Option<f64>,
    sigma: f64,
    beta: f64,
    flat_threshold: f64,
    bayes: BayesStep,
    target: AggTarget,
}

fn gather_group(frames: &[ImagePlane], members: &[PatchRef]) -> Vec<f64> {
    let k = members[0].size;
    let mut values = Vec::with_capacity(members.len() * k * k);
    for &m in members {
        values.extend_from_slice(&extract(frames, m).expect("member positions are valid"));
    }
    values
}

fn run_step(
    noisy: &[ImagePlane],
    pilot: Option<&[ImagePlane]>,
    match_source: &[ImagePlane],
    lattice_on: &[usize],
    scope: &[usize],
    cfg: &StepConfig,
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
            let group = block_match(match_source, reference, &match_cfg, scope, None)
                .expect("lattice positions are in bounds");
            let n = group.len();
            let dim = cfg.k * cfg.k;
            let mut values = gather_group(noisy, &group.members);

            // Homogeneous groups collapse to their mean: cheaper and more
            // stable than inverting a near-singular covariance.
            let flat = cfg.sigma > 0.0
                && group_variance(&values) < cfg.flat_threshold * cfg.sigma * cfg.sigma;
            if flat {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                values.iter_mut().for_each(|v| *v = mean);
            } else {
                let model = match cfg.bayes {
                    BayesStep::FromNoisy => estimate_group_model(&values, n, dim),
                    BayesStep::FromPilot => {
                        let pilot_values =
                            gather_group(pilot.expect("pilot step needs a pilot"), &group.members);
                        estimate_group_model(&pilot_values, n, dim)
                    }
                };
                bayes_filter_group(&mut values, &model, cfg.sigma, cfg.beta, cfg.bayes);
            }
            GroupResult {
                members: group.members,
                values,
            }
        },
        |result| {
            let k = cfg.k;
            for (i, &member) in result.members.iter().enumerate() {
                let values = &result.values[i * k * k..(i + 1) * k * k];
                match cfg.target {
                    AggTarget::All => agg.add_patch(member, values, 1.0),
                    AggTarget::Only(frame) => {
                        if member.frame == frame {
                            let local = PatchRef::new(0, member.x, member.y, member.size);
                            agg.add_patch(local, values, 1.0);
                        }
                    }
                }
            }
        },
    );

    agg.finalize(fill)
}

/// Full two-step non-local Bayes over a stack; modes mirror
/// [`crate::bm3d::bm3d_denoise`].
pub fn nlb_denoise(
    frames: &[ImagePlane],
    params: &NlbParams,
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

    let step1 = StepConfig {
        k: params.k1,
        n_max: params.n1,
        step: params.step1,
        radius: params.radius1,
        distance_threshold: params.distance_threshold,
        sigma: params.sigma,
        beta: params.beta1,
        flat_threshold: params.flat_area_threshold,
        bayes: BayesStep::FromNoisy,
        target,
    };
    let pilot = run_step(frames, None, frames, &lattice_on, &scope, &step1, None);

    // Frames without a step-1 estimate (single-reference mode) stay noisy
    // in the step-2 matching/model stack.
    let pilot_stack = pilot_source(frames, pilot, mode);
    let step2 = StepConfig {
        k: params.k2,
        n_max: params.n2,
        step: params.step2,
        radius: params.radius2,
        distance_threshold: params.distance_threshold,
        sigma: params.sigma,
        beta: params.beta2,
        flat_threshold: params.flat_area_threshold,
        bayes: BayesStep::FromPilot,
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

//! Coarse-to-fine solver internals.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::ImagePlane;
use crate::math;

use super::{
    central_gradient, psi, psi_prime, sample_bilinear_clamped, smoothness_weight, sof3_lambda,
    FlowError, FlowField, FlowParams, SmoothnessForm, SofVariant,
};

/// Smallest image side processed by the pyramid.
const MIN_LEVEL_SIDE: usize = 16;

/// Minimizes the flow energy between `f1` and `f2` (displacement maps
/// positions of `f1` onto `f2`).
pub fn solve_flow(
    f1: &ImagePlane,
    f2: &ImagePlane,
    params: &FlowParams,
) -> Result<FlowField, FlowError> {
    solve_impl(f1, f2, params, false).map(|(flow, _)| flow)
}

/// Like [`solve_flow`] but also returns the discrete energy at the finest
/// pyramid level: the value before the first warp linearization and after
/// every outer iteration. The sequence is non-increasing up to solver
/// slack.
pub fn solve_flow_with_energies(
    f1: &ImagePlane,
    f2: &ImagePlane,
    params: &FlowParams,
) -> Result<(FlowField, Vec<f64>), FlowError> {
    solve_impl(f1, f2, params, true)
}

fn solve_impl(
    f1: &ImagePlane,
    f2: &ImagePlane,
    params: &FlowParams,
    record: bool,
) -> Result<(FlowField, Vec<f64>), FlowError> {
    if f1.dimensions() != f2.dimensions() {
        return Err(FlowError::DimensionMismatch {
            a: f1.dimensions(),
            b: f2.dimensions(),
        });
    }
    if !f1.is_finite() || !f2.is_finite() {
        return Err(FlowError::NonFiniteInput);
    }
    params.validate()?;

    let (w0, h0) = f1.dimensions();
    let dims = level_dims(w0, h0, params.pyramid_scale, params.levels);

    // Pyramids by successive downsampling of the presmoothed frames.
    let mut pyr1 = Vec::with_capacity(dims.len());
    let mut pyr2 = Vec::with_capacity(dims.len());
    pyr1.push(gaussian_blur(f1, params.presmooth_sigma));
    pyr2.push(gaussian_blur(f2, params.presmooth_sigma));
    for l in 1..dims.len() {
        let (nw, nh) = dims[l];
        pyr1.push(downsample(&pyr1[l - 1], nw, nh, params.pyramid_scale));
        pyr2.push(downsample(&pyr2[l - 1], nw, nh, params.pyramid_scale));
    }

    let mut flow = FlowField::zeros(dims.last().unwrap().0, dims.last().unwrap().1);
    let mut energies = Vec::new();

    for l in (0..dims.len()).rev() {
        let (w, h) = dims[l];
        if flow.dimensions() != (w, h) {
            flow = resize_flow(&flow, w, h);
        }
        solve_level(
            &pyr1[l],
            &pyr2[l],
            &mut flow,
            params,
            (record && l == 0).then_some(&mut energies),
        );
    }
    Ok((flow, energies))
}

/// Pyramid sizes from finest to coarsest, computed from the original size
/// so rounding does not accumulate.
fn level_dims(w: usize, h: usize, scale: f64, max_levels: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(w, h)];
    let mut factor = 1.0;
    while dims.len() < max_levels.max(1) {
        factor *= scale;
        let nw = math::round(w as f64 * factor) as usize;
        let nh = math::round(h as f64 * factor) as usize;
        if nw.min(nh) < MIN_LEVEL_SIDE || (nw, nh) == *dims.last().unwrap() {
            break;
        }
        dims.push((nw, nh));
    }
    dims
}

fn gaussian_blur(img: &ImagePlane, sigma: f64) -> ImagePlane {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = math::floor(3.0 * sigma) as usize + 1;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    for i in -(radius as i64)..=radius as i64 {
        let v = math::exp(-(i * i) as f64 / (2.0 * sigma * sigma));
        kernel.push(v);
        sum += v;
    }
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let (w, h) = img.dimensions();
    let mut horizontal = ImagePlane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let sx = (x as i64 + j as i64 - radius as i64).clamp(0, w as i64 - 1) as usize;
                acc += k * img.get(sx, y);
            }
            horizontal.set(x, y, acc);
        }
    }
    let mut out = ImagePlane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let sy = (y as i64 + j as i64 - radius as i64).clamp(0, h as i64 - 1) as usize;
                acc += k * horizontal.get(x, sy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn resize_bilinear(img: &ImagePlane, nw: usize, nh: usize) -> ImagePlane {
    let (w, h) = img.dimensions();
    let mut out = ImagePlane::zeros(nw, nh);
    let sx = w as f64 / nw as f64;
    let sy = h as f64 / nh as f64;
    for y in 0..nh {
        for x in 0..nw {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            out.set(x, y, sample_bilinear_clamped(img, src_x, src_y));
        }
    }
    out
}

/// Anti-aliased downsampling: Gaussian presmoothing matched to the scale
/// factor, then bilinear resampling.
fn downsample(img: &ImagePlane, nw: usize, nh: usize, scale: f64) -> ImagePlane {
    let sigma = 0.6 * math::sqrt(1.0 / (scale * scale) - 1.0);
    resize_bilinear(&gaussian_blur(img, sigma), nw, nh)
}

/// Upsamples a flow field and rescales the displacements by the actual
/// per-axis size ratio.
fn resize_flow(flow: &FlowField, nw: usize, nh: usize) -> FlowField {
    let (w, h) = flow.dimensions();
    let fx = nw as f64 / w as f64;
    let fy = nh as f64 / h as f64;
    let mut u_plane = ImagePlane::zeros(w, h);
    let mut v_plane = ImagePlane::zeros(w, h);
    u_plane.as_mut_slice().copy_from_slice(flow.u());
    v_plane.as_mut_slice().copy_from_slice(flow.v());
    let u_resized = resize_bilinear(&u_plane, nw, nh);
    let v_resized = resize_bilinear(&v_plane, nw, nh);
    let mut out = FlowField::zeros(nw, nh);
    for y in 0..nh {
        for x in 0..nw {
            out.set(x, y, u_resized.get(x, y) * fx, v_resized.get(x, y) * fy);
        }
    }
    out
}

fn gradients(img: &ImagePlane) -> (ImagePlane, ImagePlane) {
    let (w, h) = img.dimensions();
    let mut gx = ImagePlane::zeros(w, h);
    let mut gy = ImagePlane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = central_gradient(img, x, y);
            gx.set(x, y, dx);
            gy.set(x, y, dy);
        }
    }
    (gx, gy)
}

/// Per-pixel smoothness function of the first frame, with the contrast
/// parameter auto-selected for variant 3.
fn phi_map(f1: &ImagePlane, params: &FlowParams) -> Vec<f64> {
    let (w, h) = f1.dimensions();
    let lambda = match params.variant {
        SofVariant::Sof3 => sof3_lambda(f1, params.sof3_quantile),
        _ => params.lambda,
    };
    let mut phi = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            phi[y * w + x] = smoothness_weight(
                central_gradient(f1, x, y),
                lambda,
                params.variant,
                params.sof2_floor,
            );
        }
    }
    phi
}

fn warp_map(map: &ImagePlane, flow: &FlowField) -> Vec<f64> {
    let (w, h) = map.dimensions();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            out[y * w + x] = sample_bilinear_clamped(map, x as f64 + u, y as f64 + v);
        }
    }
    out
}

/// Squared forward-difference gradient magnitude of the combined flow
/// increment, `|grad(u+du)|^2 + |grad(v+dv)|^2`.
fn flow_gradient_sq(
    u: &[f64],
    v: &[f64],
    du: &[f64],
    dv: &[f64],
    w: usize,
    h: usize,
    out: &mut [f64],
) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let tu = u[i] + du[i];
            let tv = v[i] + dv[i];
            let mut s = 0.0;
            if x + 1 < w {
                let j = i + 1;
                let dxu = u[j] + du[j] - tu;
                let dxv = v[j] + dv[j] - tv;
                s += dxu * dxu + dxv * dxv;
            }
            if y + 1 < h {
                let j = i + w;
                let dyu = u[j] + du[j] - tu;
                let dyv = v[j] + dv[j] - tv;
                s += dyu * dyu + dyv * dyv;
            }
            out[i] = s;
        }
    }
}

fn solve_level(
    f1: &ImagePlane,
    f2: &ImagePlane,
    flow: &mut FlowField,
    params: &FlowParams,
    mut energies: Option<&mut Vec<f64>>,
) {
    let (w, h) = f1.dimensions();
    let n = w * h;
    let (f1x, f1y) = gradients(f1);
    let (f2x, f2y) = gradients(f2);
    let (f2xx, f2xy) = gradients(&f2x);
    let (_, f2yy) = gradients(&f2y);
    let phi = phi_map(f1, params);

    if let Some(e) = energies.as_deref_mut() {
        e.push(energy(f1, f2, &f1x, &f1y, &f2x, &f2y, flow, &phi, params));
    }

    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut psi_data = vec![0.0; n];
    let mut psi_grad = vec![0.0; n];
    let mut diffusivity = vec![0.0; n];
    let mut grad_sq = vec![0.0; n];

    for _ in 0..params.outer_iters {
        // Linearize the data terms around the current warp.
        let f2w = warp_map(f2, flow);
        let fxw = warp_map(&f2x, flow);
        let fyw = warp_map(&f2y, flow);
        let fxxw = warp_map(&f2xx, flow);
        let fxyw = warp_map(&f2xy, flow);
        let fyyw = warp_map(&f2yy, flow);

        let mut fz = vec![0.0; n];
        let mut fxz = vec![0.0; n];
        let mut fyz = vec![0.0; n];
        for i in 0..n {
            fz[i] = f2w[i] - f1.as_slice()[i];
            fxz[i] = fxw[i] - f1x.as_slice()[i];
            fyz[i] = fyw[i] - f1y.as_slice()[i];
        }

        du.fill(0.0);
        dv.fill(0.0);

        for _ in 0..params.inner_iters {
            // Lagged penalizer derivatives.
            for i in 0..n {
                let r = fz[i] + fxw[i] * du[i] + fyw[i] * dv[i];
                psi_data[i] = psi_prime(r * r, params.epsilon);
                let rx = fxz[i] + fxxw[i] * du[i] + fxyw[i] * dv[i];
                let ry = fyz[i] + fxyw[i] * du[i] + fyyw[i] * dv[i];
                psi_grad[i] = psi_prime(rx * rx + ry * ry, params.epsilon);
            }
            flow_gradient_sq(flow.u(), flow.v(), &du, &dv, w, h, &mut grad_sq);
            for i in 0..n {
                let arg = match params.smoothness_form {
                    SmoothnessForm::PsiOfWeighted => phi[i] * grad_sq[i],
                    SmoothnessForm::PhiTimesPsi => grad_sq[i],
                };
                diffusivity[i] = phi[i] * psi_prime(arg, params.epsilon);
            }

            // Red-black SOR on the coupled 2x2 per-pixel system.
            let u = flow.u();
            let v = flow.v();
            for _ in 0..params.solver_iters {
                for color in 0..2usize {
                    for y in 0..h {
                        let row = y * w;
                        let x0 = (color + y) % 2;
                        let mut x = x0;
                        while x < w {
                            let i = row + x;
                            let mut weight_sum = 0.0;
                            let mut nb_u = 0.0;
                            let mut nb_v = 0.0;
                            let mut add_neighbor = |j: usize| {
                                let wgt = 0.5 * (diffusivity[i] + diffusivity[j]);
                                weight_sum += wgt;
                                nb_u += wgt * (u[j] + du[j] - u[i]);
                                nb_v += wgt * (v[j] + dv[j] - v[i]);
                            };
                            if x > 0 {
                                add_neighbor(i - 1);
                            }
                            if x + 1 < w {
                                add_neighbor(i + 1);
                            }
                            if y > 0 {
                                add_neighbor(i - w);
                            }
                            if y + 1 < h {
                                add_neighbor(i + w);
                            }

                            let pd = psi_data[i];
                            let pg = params.gamma * psi_grad[i];
                            let (fx, fy) = (fxw[i], fyw[i]);
                            let (fxx, fxy, fyy) = (fxxw[i], fxyw[i], fyyw[i]);
                            let a11 = pd * fx * fx
                                + pg * (fxx * fxx + fxy * fxy)
                                + params.alpha * weight_sum;
                            let a12 = pd * fx * fy + pg * fxy * (fxx + fyy);
                            let a22 = pd * fy * fy
                                + pg * (fxy * fxy + fyy * fyy)
                                + params.alpha * weight_sum;
                            let b1 = -pd * fx * fz[i]
                                - pg * (fxx * fxz[i] + fxy * fyz[i])
                                + params.alpha * nb_u;
                            let b2 = -pd * fy * fz[i]
                                - pg * (fxy * fxz[i] + fyy * fyz[i])
                                + params.alpha * nb_v;

                            let det = a11 * a22 - a12 * a12;
                            if det.abs() > 1e-30 {
                                let ndu = (a22 * b1 - a12 * b2) / det;
                                let ndv = (a11 * b2 - a12 * b1) / det;
                                du[i] += params.omega * (ndu - du[i]);
                                dv[i] += params.omega * (ndv - dv[i]);
                            }
                            x += 2;
                        }
                    }
                }
            }
        }

        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (cu, cv) = flow.get(x, y);
                flow.set(x, y, cu + du[i], cv + dv[i]);
            }
        }

        if let Some(e) = energies.as_deref_mut() {
            e.push(energy(f1, f2, &f1x, &f1y, &f2x, &f2y, flow, &phi, params));
        }
    }
}

/// Discrete flow energy: robustified gray-value and gradient constancy
/// plus the image-driven smoothness term, with the same discretization the
/// solver uses (bilinear warps, forward differences on the flow).
#[allow(clippy::too_many_arguments)]
fn energy(
    f1: &ImagePlane,
    f2: &ImagePlane,
    f1x: &ImagePlane,
    f1y: &ImagePlane,
    f2x: &ImagePlane,
    f2y: &ImagePlane,
    flow: &FlowField,
    phi: &[f64],
    params: &FlowParams,
) -> f64 {
    let (w, h) = f1.dimensions();
    let u = flow.u();
    let v = flow.v();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = x as f64 + u[i];
            let sy = y as f64 + v[i];
            let dz = sample_bilinear_clamped(f2, sx, sy) - f1.get(x, y);
            let dgx = sample_bilinear_clamped(f2x, sx, sy) - f1x.get(x, y);
            let dgy = sample_bilinear_clamped(f2y, sx, sy) - f1y.get(x, y);

            let mut grad_sq = 0.0;
            if x + 1 < w {
                let dxu = u[i + 1] - u[i];
                let dxv = v[i + 1] - v[i];
                grad_sq += dxu * dxu + dxv * dxv;
            }
            if y + 1 < h {
                let dyu = u[i + w] - u[i];
                let dyv = v[i + w] - v[i];
                grad_sq += dyu * dyu + dyv * dyv;
            }
            let smooth = match params.smoothness_form {
                SmoothnessForm::PsiOfWeighted => psi(phi[i] * grad_sq, params.epsilon),
                SmoothnessForm::PhiTimesPsi => phi[i] * psi(grad_sq, params.epsilon),
            };

            total += psi(dz * dz, params.epsilon)
                + params.gamma * psi(dgx * dgx + dgy * dgy, params.epsilon)
                + params.alpha * smooth;
        }
    }
    total
}

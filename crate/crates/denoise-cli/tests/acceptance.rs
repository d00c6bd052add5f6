//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/SKIP line (run with `--nocapture` to see them).
//!
//! Criteria 4, 5 and 7 evaluate against published benchmark imagery
//! (bridge/peppers/house and the grove2 frame set) that cannot be
//! redistributed with this repository. Those tests look for the files
//! under `data/datasets/` (or `$DENOISE_DATASET_DIR`) as described in the
//! README and report SKIP when absent; everything they can check without
//! the data (including a bundled-image fallback for the ordering
//! criterion) still runs.

use std::path::{Path, PathBuf};

use denoise_core::aggregate::AggregationBuffers;
use denoise_core::bm3d::{bm3d_denoise, Bm3dParams};
use denoise_core::flow::{
    psi, psi_prime, solve_flow, solve_flow_with_energies, FlowParams, SofVariant,
};
use denoise_core::image::psnr;
use denoise_core::multiframe::{
    run_af, run_fa, run_mf, run_sf, temporal_average, FilterKind, FilterSpec, FrameStack,
};
use denoise_core::nlb::{nlb_denoise, NlbParams};
use denoise_core::noise::{add_awgn, derive_seed, NoiseSpec};
use denoise_core::patch::PatchRef;
use denoise_core::transform::{haar_forward, haar_inverse, Transform2d};
use denoise_core::{GroupingMode, ImagePlane};

use denoise_cli::compare::{compare_to_reference, read_reference, CellKey};
use denoise_cli::dataset::make_registered_dataset;
use denoise_cli::experiment::{method_from_id, run_grid, ExperimentSpec, FlowSource};
use denoise_cli::flo::read_flo;
use denoise_cli::imageio::load_image;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn dataset_dir() -> PathBuf {
    std::env::var_os("DENOISE_DATASET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/datasets"))
}

fn camera() -> ImagePlane {
    load_image(&workspace_root().join("assets/camera.png")).expect("bundled test image")
}

fn noisy_stack(clean: &ImagePlane, sigma: f64, l: usize, seed: u64) -> FrameStack {
    make_registered_dataset(clean, sigma, l, seed)
}

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state >> 12;
    *state ^= *state << 25;
    *state ^= *state >> 27;
    (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
}

/// Textured synthetic frame for the flow criteria.
fn textured(w: usize, h: usize) -> ImagePlane {
    let mut img = ImagePlane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let v = 128.0
                + 52.0 * (0.31 * xf).sin() * (0.23 * yf).cos()
                + 38.0 * (0.11 * xf + 0.17 * yf).sin()
                + 22.0 * (0.53 * xf - 0.29 * yf).cos();
            img.set(x, y, v);
        }
    }
    img
}

fn shift_wrapped(img: &ImagePlane, dx: i64, dy: i64) -> ImagePlane {
    let (w, h) = img.dimensions();
    let mut out = ImagePlane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let sx = (x as i64 - dx).rem_euclid(w as i64) as usize;
            let sy = (y as i64 - dy).rem_euclid(h as i64) as usize;
            out.set(x, y, img.get(sx, sy));
        }
    }
    out
}

// Criterion 1: every filter x extension at L = 1 is bit-identical to the
// underlying single-frame filter; a one-frame multi-reference run equals
// the single-frame algorithm exactly.
#[test]
fn c1_reduction_identities() {
    let clean = camera().crop(96, 128, 48, 40);
    let sigma = 30.0;
    let noisy = add_awgn(&clean, NoiseSpec::new(sigma, 11));
    let stack = FrameStack::registered(vec![noisy.clone()]).unwrap();

    let bits = |img: &ImagePlane| -> Vec<u64> { img.as_slice().iter().map(|v| v.to_bits()).collect() };

    for kind in [FilterKind::Bm3d, FilterKind::Nlb] {
        let single = match kind {
            FilterKind::Bm3d => bm3d_denoise(
                std::slice::from_ref(&noisy),
                &Bm3dParams::new(sigma),
                GroupingMode::SingleFrame,
            )
            .unwrap()
            .remove(0),
            FilterKind::Nlb => nlb_denoise(
                std::slice::from_ref(&noisy),
                &NlbParams::new(sigma),
                GroupingMode::SingleFrame,
            )
            .unwrap()
            .remove(0),
        };
        let spec = FilterSpec::Default(kind);
        let af = run_af(&stack, &spec, sigma).unwrap();
        let fa = run_fa(&stack, &spec, sigma).unwrap();
        let sf = run_sf(&stack, &spec, sigma).unwrap();
        let (mf, idx) = run_mf(&stack, &spec, sigma, false).unwrap();
        for (name, out) in [("AF", &af), ("FA", &fa), ("SF", &sf), ("MF", &mf[idx])] {
            assert_eq!(bits(out), bits(&single), "{kind:?}-{name} at L=1");
        }
    }

    // The oversized-group preset reduces to the single-frame filter with
    // doubled group sizes.
    let (mfo, idx) = run_mf(&stack, &FilterSpec::Default(FilterKind::Bm3d), sigma, true).unwrap();
    let oversized = bm3d_denoise(
        std::slice::from_ref(&noisy),
        &Bm3dParams::oversized(sigma),
        GroupingMode::SingleFrame,
    )
    .unwrap()
    .remove(0);
    assert_eq!(bits(&mfo[idx]), bits(&oversized), "BM3D-MFO at L=1");

    println!("criterion 1 (reduction identities): PASS - 2 filters x AF/FA/SF/MF + MFO bit-identical at L=1");
}

// Criterion 2: buffered (scatter) aggregation equals the direct per-pixel
// evaluation of the weighted double sum on 100 randomized instances,
// images <= 16x16, <= 3 frames, k = 3, within 1e-9; both the weighted
// (Wiener-coefficient) and the unweighted (Bayesian) forms.
#[test]
#[allow(clippy::needless_range_loop)]
fn c2_aggregation_oracle() {
    let k = 3usize;
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let mut s = 0x9E37 + instance * 7919;
        let w = 6 + (xorshift(&mut s) * 11.0) as usize; // 6..=16
        let h = 6 + (xorshift(&mut s) * 11.0) as usize;
        let frames = 1 + (xorshift(&mut s) * 3.0) as usize; // 1..=3
        let weighted = instance % 2 == 0;

        struct Group {
            members: Vec<PatchRef>,
            values: Vec<f64>,
            weight: f64,
        }
        let n_groups = 5 + (xorshift(&mut s) * 30.0) as usize;
        let mut groups = Vec::new();
        for _ in 0..n_groups {
            let n = 1 + (xorshift(&mut s) * 8.0) as usize;
            let members: Vec<PatchRef> = (0..n)
                .map(|_| {
                    PatchRef::new(
                        (xorshift(&mut s) * frames as f64) as usize,
                        (xorshift(&mut s) * (w - k) as f64) as usize,
                        (xorshift(&mut s) * (h - k) as f64) as usize,
                        k,
                    )
                })
                .collect();
            let values: Vec<f64> = (0..n * k * k).map(|_| xorshift(&mut s) * 350.0 - 50.0).collect();
            let weight = if weighted {
                // Wiener weights span many orders of magnitude.
                10f64.powf(xorshift(&mut s) * 12.0 - 6.0)
            } else {
                1.0
            };
            groups.push(Group { members, values, weight });
        }

        // Route A: scatter into aggregation buffers.
        let mut agg = AggregationBuffers::new(w, h, frames);
        for g in &groups {
            for (i, &m) in g.members.iter().enumerate() {
                agg.add_patch(m, &g.values[i * k * k..(i + 1) * k * k], g.weight);
            }
        }
        let zeros: Vec<ImagePlane> = (0..frames).map(|_| ImagePlane::zeros(w, h)).collect();
        let planes = agg.finalize(Some(&zeros));

        // Route B: direct gather per pixel.
        for f in 0..frames {
            for y in 0..h {
                for x in 0..w {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for g in &groups {
                        for (i, m) in g.members.iter().enumerate() {
                            if m.frame == f && x >= m.x && x < m.x + k && y >= m.y && y < m.y + k {
                                num += g.weight * g.values[i * k * k + (y - m.y) * k + (x - m.x)];
                                den += g.weight;
                            }
                        }
                    }
                    if den > 0.0 {
                        let direct = num / den;
                        let diff = (planes[f].get(x, y) - direct).abs();
                        worst = worst.max(diff);
                        assert!(diff <= 1e-9, "instance {instance}: diff {diff}");
                    }
                }
            }
        }
    }
    println!("criterion 2 (aggregation oracle): PASS - 100 instances, max |scatter - gather| = {worst:.3e}");
}

// Criterion 3: averaging a 10-frame sigma = 120 stack leaves residual
// noise of std within [0.99, 1.01] * 120/sqrt(10) on a 512x512 stack, and
// the scalar handed to the filters is exactly sigma/sqrt(L).
#[test]
fn c3_sigma_sqrt_l_law() {
    let clean = camera();
    let sigma = 120.0;
    let stack = noisy_stack(&clean, sigma, 10, 31415);
    let averaged = temporal_average(&stack, sigma);

    let expected = sigma / 10f64.sqrt();
    assert_eq!(averaged.effective_sigma, expected);
    assert!((expected - 37.94733192202055).abs() < 1e-12);

    let n = clean.as_slice().len();
    assert_eq!(n, 512 * 512);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for (a, c) in averaged.plane.as_slice().iter().zip(clean.as_slice()) {
        let d = a - c;
        sum += d;
        sum2 += d * d;
    }
    let mean = sum / n as f64;
    let std = (sum2 / n as f64 - mean * mean).sqrt();
    assert!(
        std >= 0.99 * expected && std <= 1.01 * expected,
        "residual std {std:.4} outside [0.99, 1.01] x {expected:.4}"
    );
    println!(
        "criterion 3 (sigma/sqrt(L) law): PASS - residual std {std:.4} vs {expected:.4}, scalar exact"
    );
}

/// Images of the registered benchmark trio found on disk.
fn available_registered_images() -> Vec<(String, PathBuf)> {
    let dir = dataset_dir();
    ["bridge", "peppers", "house"]
        .iter()
        .filter_map(|name| {
            let png = dir.join(format!("{name}.png"));
            let pgm = dir.join(format!("{name}.pgm"));
            if png.is_file() {
                Some((name.to_string(), png))
            } else if pgm.is_file() {
                Some((name.to_string(), pgm))
            } else {
                None
            }
        })
        .collect()
}

// Criterion 4: averaging-then-filtering PSNR on the registered benchmark
// trio within +-1.0 dB of the published cells (five- and ten-frame
// stacks, sigma in {10, 40, 80, 120}), using the shipped reference table.
#[test]
fn c4_paper_value_bands_registered() {
    let images = available_registered_images();
    if images.is_empty() {
        println!(
            "criterion 4 (published-value bands): SKIP - no benchmark images; place \
             bridge/peppers/house (512x512, 512x512, 256x256 grayscale) under {} \
             (README: Benchmark data)",
            dataset_dir().display()
        );
        return;
    }

    let reference = read_reference(&workspace_root().join("data/paper_tables.tsv")).unwrap();
    let mut all = Vec::new();
    for (name, _) in &images {
        let spec = ExperimentSpec {
            dataset: name.clone(),
            dataset_dir: dataset_dir(),
            sigmas: vec![10.0, 40.0, 80.0, 120.0],
            frame_counts: vec![5, 10],
            methods: vec![
                method_from_id("bm3d-af").unwrap(),
                method_from_id("nlb-af").unwrap(),
            ],
            flow_source: FlowSource::Explicit(FlowParams::default()),
            seed: 2024,
            border: Some(0),
            sweep_ref: false,
        };
        all.extend(run_grid(&spec).unwrap());
    }
    let report = compare_to_reference(&all, &reference, 1.0);
    assert_eq!(report.cells.len(), images.len() * 16, "every cell must match a reference");
    for c in &report.cells {
        assert!(
            c.delta.abs() <= 1.0,
            "{}/{}/{}f/{}: ours {:.2} vs published {:.2} (delta {:+.2} dB)",
            c.key.dataset,
            c.key.sigma(),
            c.key.frames,
            c.key.method,
            c.ours,
            c.reference,
            c.delta
        );
    }
    println!(
        "criterion 4 (published-value bands): PASS - {} cells on {:?} within +-1.0 dB (mean |delta| {:.3} dB)",
        report.cells.len(),
        images.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        report.mean_abs_delta()
    );
}

fn ordering_for(clean: &ImagePlane, sigma: f64, l: usize, seed: u64, kind: FilterKind) -> [f64; 4] {
    let stack = noisy_stack(clean, sigma, l, seed);
    let spec = FilterSpec::Default(kind);
    let af = psnr(clean, &run_af(&stack, &spec, sigma).unwrap(), 0).unwrap();
    let fa = psnr(clean, &run_fa(&stack, &spec, sigma).unwrap(), 0).unwrap();
    let sf = psnr(clean, &run_sf(&stack, &spec, sigma).unwrap(), 0).unwrap();
    let (frames, idx) = run_mf(&stack, &spec, sigma, false).unwrap();
    let mf = psnr(clean, &frames[idx], 0).unwrap();
    [af, fa, sf, mf]
}

// Criterion 5: on every registered cell run (sigma >= 40), AF beats FA
// and MF beats SF for both filters; zero violations. Runs the published
// images when present; a bundled-image fallback keeps the ordering
// property itself under test either way.
#[test]
fn c5_ordering_registered() {
    let images = available_registered_images();
    let mut checked = 0usize;

    if images.is_empty() {
        println!(
            "criterion 5 (ordering reproduction): SKIP - no benchmark images under {}; \
             checking the ordering on the bundled image instead",
            dataset_dir().display()
        );
        let clean = camera().crop(128, 96, 192, 192);
        for kind in [FilterKind::Bm3d, FilterKind::Nlb] {
            for (sigma, l) in [(40.0, 4), (80.0, 4)] {
                let [af, fa, sf, mf] = ordering_for(&clean, sigma, l, 99, kind);
                assert!(af > fa, "{kind:?} sigma={sigma} L={l}: AF {af:.2} <= FA {fa:.2}");
                assert!(mf > sf, "{kind:?} sigma={sigma} L={l}: MF {mf:.2} <= SF {sf:.2}");
                checked += 1;
            }
        }
        println!(
            "criterion 5 (ordering reproduction): fallback ordering consistent on {checked} bundled cells"
        );
        return;
    }

    // Subset kept tractable for the multi-reference cells: the smallest
    // image (house, when present) runs the full sigma x L grid, larger
    // ones one representative cell each.
    for (name, path) in &images {
        let clean = load_image(path).unwrap();
        let cells: Vec<(f64, usize)> = if clean.width() * clean.height() <= 256 * 256 {
            [40.0, 80.0, 120.0]
                .iter()
                .flat_map(|&s| [5usize, 10].iter().map(move |&l| (s, l)))
                .collect()
        } else {
            vec![(80.0, 5)]
        };
        for kind in [FilterKind::Bm3d, FilterKind::Nlb] {
            for &(sigma, l) in &cells {
                let [af, fa, sf, mf] = ordering_for(&clean, sigma, l, 2024, kind);
                assert!(af > fa, "{name} {kind:?} sigma={sigma} L={l}: AF {af:.2} <= FA {fa:.2}");
                assert!(mf > sf, "{name} {kind:?} sigma={sigma} L={l}: MF {mf:.2} <= SF {sf:.2}");
                checked += 1;
            }
        }
    }
    println!("criterion 5 (ordering reproduction): PASS - zero violations over {checked} cells");
}

// Criterion 6: flow properties. Identical frames give at most 0.05 px of
// flow; a synthetic integer shift is recovered to 0.2 px mean endpoint
// error; the discrete energy is non-increasing across outer iterations at
// the finest level (1e-6 relative slack); the penalizer derivative
// matches finite differences to 1e-6 relative.
#[test]
fn c6_flow_properties() {
    // Penalizer derivative vs centered finite differences.
    let eps = 1e-3;
    for &s2 in &[0.01, 1.0, 100.0] {
        let h = s2 * 1e-6;
        let fd = (psi(s2 + h, eps) - psi(s2 - h, eps)) / (2.0 * h);
        let an = psi_prime(s2, eps);
        assert!((fd - an).abs() <= 1e-6 * an.abs(), "psi' at {s2}");
    }

    // Identical frames.
    let frame = camera().crop(64, 64, 128, 128);
    let flow = solve_flow(&frame, &frame, &FlowParams::default()).unwrap();
    let max_flow = flow.max_abs();
    assert!(max_flow <= 0.05, "identical-frame flow {max_flow}");

    // Integer shift on textured synthetic content, periodic band cropped.
    let scene = textured(128, 96);
    let moved = shift_wrapped(&scene, 3, 0);
    let est = solve_flow(&scene, &moved, &FlowParams::default()).unwrap();
    let mut acc = 0.0;
    let mut n = 0;
    for y in 12..84 {
        for x in 12..116 {
            let (u, v) = est.get(x, y);
            acc += (u - 3.0).hypot(v);
            n += 1;
        }
    }
    let epe = acc / n as f64;
    assert!(epe <= 0.2, "shift EPE {epe}");

    // Energy monotonicity for all three regularizer variants.
    for variant in [SofVariant::Sof1, SofVariant::Sof2, SofVariant::Sof3] {
        let params = FlowParams {
            variant,
            ..FlowParams::default()
        };
        let (_, energies) = solve_flow_with_energies(&scene, &moved, &params).unwrap();
        assert!(energies.len() >= 2);
        for pair in energies.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-6),
                "{variant:?}: energy increased {:?}",
                energies
            );
        }
    }

    println!(
        "criterion 6 (flow properties): PASS - zero-motion {max_flow:.4} px, shift EPE {epe:.4} px, \
         energies non-increasing (3 variants), psi' matches finite differences"
    );
}

// Criterion 7: non-registered pipeline on a user-supplied grove2 copy
// with ground-truth flow: tuned parameters beat solver defaults in
// endpoint error, and averaging-then-filtering on the registered
// eight-frame sigma = 80 stack beats the single-frame filter on the
// reference frame by at least 1.5 dB under the 50-pixel border protocol.
#[test]
fn c7_non_registered_pipeline() {
    let dir = dataset_dir().join("grove2");
    let gt = dir.join("flow10.flo");
    let frames_present = (7..=14).all(|n| dir.join(format!("frame{n:02}.png")).is_file());
    if !frames_present || !gt.is_file() {
        println!(
            "criterion 7 (non-registered pipeline): SKIP - needs {}/frame07..14.png and flow10.flo \
             (README: Benchmark data)",
            dir.display()
        );
        return;
    }

    let sigma = 80.0;
    let clean: Vec<ImagePlane> = (7..=14)
        .map(|n| load_image(&dir.join(format!("frame{n:02}.png"))).unwrap())
        .collect();
    let noisy: Vec<ImagePlane> = clean
        .iter()
        .enumerate()
        .map(|(i, f)| add_awgn(f, NoiseSpec::new(sigma, derive_seed(4242, i as u64))))
        .collect();
    let ref_index = 3; // frame 10
    let truth = read_flo(&gt).unwrap();

    // Tuned flow beats defaults in EPE (flow between noisy frames 10, 11).
    let grid: Vec<FlowParams> = [5.0, 45.0, 95.0, 110.0]
        .iter()
        .flat_map(|&alpha| {
            [1.0, 2.5].iter().flat_map(move |&gamma| {
                [SofVariant::Sof2, SofVariant::Sof3].iter().map(move |&variant| FlowParams {
                    alpha,
                    gamma,
                    variant,
                    ..FlowParams::default()
                })
            })
        })
        .collect();
    let epe_of = |p: &FlowParams| {
        let flow = solve_flow(&noisy[ref_index], &noisy[ref_index + 1], p).unwrap();
        denoise_core::flow::endpoint_error(&flow, &truth).unwrap()
    };
    let tuned = denoise_core::flow::tune_flow_params(&grid, epe_of).unwrap();
    let default_epe = epe_of(&FlowParams::default());
    assert!(
        tuned.cost <= default_epe,
        "tuned EPE {:.4} worse than default {default_epe:.4}",
        tuned.cost
    );
    // Well-regularized parameters beat the under-regularized run.
    let low_alpha_epe = epe_of(&FlowParams {
        alpha: 5.0,
        gamma: 1.0,
        variant: SofVariant::Sof3,
        ..FlowParams::default()
    });
    let high_alpha_epe = epe_of(&FlowParams {
        alpha: 100.0,
        gamma: 1.0,
        variant: SofVariant::Sof3,
        ..FlowParams::default()
    });
    assert!(high_alpha_epe < low_alpha_epe);

    // Register with the tuned parameters and compare AF against the
    // single-frame filter on the reference frame, border 50.
    let stack = FrameStack::new(noisy.clone()).unwrap().with_ref_index(ref_index);
    let (registered, masks) =
        denoise_core::flow::register_stack(stack.frames(), ref_index, &tuned.params).unwrap();
    let mut reg_stack = FrameStack::registered(registered).unwrap().with_ref_index(ref_index);
    reg_stack.validity = Some(masks);

    let af = run_af(&reg_stack, &FilterSpec::Default(FilterKind::Bm3d), sigma).unwrap();
    let af_psnr = psnr(&clean[ref_index], &af, 50).unwrap();
    let single = bm3d_denoise(
        std::slice::from_ref(&noisy[ref_index]),
        &Bm3dParams::new(sigma),
        GroupingMode::SingleFrame,
    )
    .unwrap()
    .remove(0);
    let single_psnr = psnr(&clean[ref_index], &single, 50).unwrap();
    assert!(
        af_psnr >= single_psnr + 1.5,
        "AF {af_psnr:.2} dB not 1.5 dB above single-frame {single_psnr:.2} dB"
    );
    println!(
        "criterion 7 (non-registered pipeline): PASS - tuned EPE {:.3} <= default {:.3}; \
         AF {af_psnr:.2} dB vs single-frame {single_psnr:.2} dB (border 50)",
        tuned.cost, default_epe
    );
}

// Criterion 8: transform correctness on 1000 random patches/groups:
// round-trips within 1e-10 and Parseval within 1e-9 relative for the
// orthonormal transforms.
#[test]
fn c8_transform_correctness() {
    let mut s = 0xC0FFEE_u64;
    let mut scratch = vec![0.0; 64];
    for i in 0..1000usize {
        // 2D patch transform.
        let k = [5, 7, 8][i % 3];
        let t = Transform2d::dct(k);
        let original: Vec<f64> = (0..k * k).map(|_| xorshift(&mut s) * 510.0 - 255.0).collect();
        let mut patch = original.clone();
        t.forward(&mut patch).unwrap();
        let e_coeff: f64 = patch.iter().map(|v| v * v).sum();
        let e_pixel: f64 = original.iter().map(|v| v * v).sum();
        assert!((e_coeff - e_pixel).abs() <= 1e-9 * e_pixel.max(1e-9), "parseval 2d");
        t.inverse(&mut patch).unwrap();
        for (a, b) in patch.iter().zip(&original) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "round trip 2d");
        }

        // Group-axis transform on dyadic lengths.
        let n = [1, 2, 4, 8, 16, 32][i % 6];
        let group: Vec<f64> = (0..n).map(|_| xorshift(&mut s) * 510.0 - 255.0).collect();
        let mut data = group.clone();
        haar_forward(&mut data, &mut scratch).unwrap();
        let e_coeff: f64 = data.iter().map(|v| v * v).sum();
        let e_in: f64 = group.iter().map(|v| v * v).sum();
        assert!((e_coeff - e_in).abs() <= 1e-9 * e_in.max(1e-9), "parseval 1d");
        haar_inverse(&mut data, &mut scratch).unwrap();
        for (a, b) in data.iter().zip(&group) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "round trip 1d");
        }

        // The alternative wavelet patch transform is biorthogonal: no
        // Parseval, but the round-trip contract is the same.
        if i % 10 == 0 {
            let t = Transform2d::bior_spline(8).unwrap();
            let original: Vec<f64> = (0..64).map(|_| xorshift(&mut s) * 510.0 - 255.0).collect();
            let mut patch = original.clone();
            t.forward(&mut patch).unwrap();
            t.inverse(&mut patch).unwrap();
            for (a, b) in patch.iter().zip(&original) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "round trip bior");
            }
        }
    }
    println!("criterion 8 (transform correctness): PASS - 1000 random patches/groups");
}

// Criterion 9: a benchmark cell rerun with the same seed under different
// worker counts yields bit-identical PSNR.
#[test]
fn c9_determinism_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let crop = camera().crop(192, 192, 96, 96);
    let image_path = dir.path().join("crop.png");
    denoise_cli::imageio::save_image(&crop, &image_path).unwrap();

    let spec = ExperimentSpec {
        dataset: image_path.to_string_lossy().into_owned(),
        dataset_dir: dir.path().into(),
        sigmas: vec![40.0],
        frame_counts: vec![3],
        methods: vec![
            method_from_id("bm3d-mf").unwrap(),
            method_from_id("nlb-af").unwrap(),
        ],
        flow_source: FlowSource::Explicit(FlowParams::default()),
        seed: 7,
        border: Some(0),
        sweep_ref: false,
    };

    let run_with_threads = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| run_grid(&spec).unwrap())
    };
    let single = run_with_threads(1);
    let quad = run_with_threads(4);
    let eight = run_with_threads(8);
    assert_eq!(single.len(), 2);
    for ((a, b), c) in single.iter().zip(&quad).zip(&eight) {
        assert_eq!(a.psnr_db.to_bits(), b.psnr_db.to_bits(), "{}", a.method);
        assert_eq!(a.psnr_db.to_bits(), c.psnr_db.to_bits(), "{}", a.method);
    }
    println!(
        "criterion 9 (determinism): PASS - PSNR bit-identical across 1/4/8 workers \
         ({} = {:.4} dB, {} = {:.4} dB)",
        single[0].method, single[0].psnr_db, single[1].method, single[1].psnr_db
    );
}

// The shipped reference table itself: parseable, complete, and carrying
// the anchor cells the criteria quote.
#[test]
fn reference_table_is_wellformed() {
    let table = read_reference(&workspace_root().join("data/paper_tables.tsv")).unwrap();
    assert_eq!(table.len(), 854);
    assert_eq!(table[&CellKey::new("house", 80.0, 5, "bm3d-af")], 30.96);
    assert_eq!(table[&CellKey::new("bridge", 120.0, 10, "nlb-af")], 24.64);
    assert_eq!(table[&CellKey::new("grove2", 80.0, 8, "bm3d-af")], 24.97);
    println!("reference table: 854 cells, anchors verified");
}

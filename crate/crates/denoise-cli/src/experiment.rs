//! Experiment runner: builds noisy datasets, runs method grids,
//! records PSNR and renders aligned text tables.

use std::path::{Path, PathBuf};
use std::time::Instant;

use denoise_core::flow::{solve_flow, FlowParams, SofVariant};
use denoise_core::image::psnr;
use denoise_core::multiframe::{
    run_pipeline, Extension, FilterKind, FilterSpec, FrameStack, MethodId,
};
use denoise_core::noise::{add_awgn, derive_seed, NoiseSpec};
use denoise_core::ImagePlane;
use rayon::prelude::*;

use crate::dataset::{cell_seed, flow_params_from_table, make_registered_dataset, CleanData, Dataset};
use crate::error::CliError;
use crate::flo::read_flo;

/// Border excluded from PSNR when the spec does not pin one: none for
/// perfectly registered data, fifty pixels on all sides for flow-
/// registered data (warping leaves the borders unreliable).
pub const NON_REGISTERED_BORDER: usize = 50;

/// Everything that determines a benchmark run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Dataset id (`bridge`, `peppers`, `house`, `grove2`, `shoe`,
    /// `birdhouse`) or a path to a custom image / frame directory.
    pub dataset: String,
    /// Root directory holding the dataset files.
    pub dataset_dir: PathBuf,
    pub sigmas: Vec<f64>,
    pub frame_counts: Vec<usize>,
    pub methods: Vec<MethodId>,
    pub flow_source: FlowSource,
    pub seed: u64,
    /// PSNR border; `None` selects the per-dataset default.
    pub border: Option<usize>,
    /// Rerun single-reference cells for every reference frame and report
    /// the best PSNR.
    pub sweep_ref: bool,
}

/// Where optical-flow parameters for non-registered data come from.
#[derive(Debug, Clone)]
pub enum FlowSource {
    /// Look up published per-dataset values in a TSV table; cells without
    /// an entry fall back to solver defaults.
    Table(PathBuf),
    Explicit(FlowParams),
    /// Exhaustive grid search per cell.
    Tune(TuneGrid),
}

/// Axes of the tuning grid plus the selection criterion.
#[derive(Debug, Clone)]
pub struct TuneGrid {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub variants: Vec<SofVariant>,
    pub criterion: TuneCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneCriterion {
    /// Endpoint error of the reference-to-next-frame flow against a
    /// shipped ground-truth field.
    GroundTruthEpe,
    /// Negated PSNR of the fully denoised output.
    DownstreamPsnr,
}

impl TuneGrid {
    pub fn candidates(&self) -> Vec<FlowParams> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &gamma in &self.gammas {
                for &lambda in &self.lambdas {
                    for &variant in &self.variants {
                        out.push(FlowParams {
                            alpha,
                            gamma,
                            lambda,
                            variant,
                            ..FlowParams::default()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One grid cell's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub spec_hash: u64,
    pub dataset: String,
    pub sigma: f64,
    pub frames: usize,
    pub method: String,
    pub psnr_db: f64,
    pub wall_ms: u128,
    /// Compact parameter snapshot (filter defaults marker, flow values).
    pub params: String,
}

pub fn method_to_id(method: MethodId) -> String {
    format!("{method}").to_ascii_lowercase()
}

pub fn method_from_id(s: &str) -> Result<MethodId, CliError> {
    let lower = s.to_ascii_lowercase();
    let (filter, extension) = lower
        .split_once('-')
        .ok_or_else(|| CliError::invalid(format!("bad method id `{s}` (want e.g. bm3d-af)")))?;
    let filter = match filter {
        "bm3d" | "bm" => FilterKind::Bm3d,
        "nlb" | "nl" => FilterKind::Nlb,
        _ => return Err(CliError::invalid(format!("unknown filter `{filter}`"))),
    };
    let extension = match extension {
        "af" => Extension::Af,
        "fa" => Extension::Fa,
        "sf" => Extension::Sf,
        "mf" => Extension::Mf,
        "mfo" => Extension::Mfo,
        "cf" => Extension::Cf,
        _ => return Err(CliError::invalid(format!("unknown extension `{extension}`"))),
    };
    MethodId::new(filter, extension).map_err(CliError::Pipeline)
}

/// FNV-1a fingerprint of the spec fields that determine results.
fn spec_hash(spec: &ExperimentSpec) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(spec.dataset.as_bytes());
    for s in &spec.sigmas {
        eat(&s.to_bits().to_le_bytes());
    }
    for &l in &spec.frame_counts {
        eat(&(l as u64).to_le_bytes());
    }
    for m in &spec.methods {
        eat(method_to_id(*m).as_bytes());
    }
    eat(&spec.seed.to_le_bytes());
    eat(&[spec.sweep_ref as u8]);
    if let Some(b) = spec.border {
        eat(&(b as u64).to_le_bytes());
    }
    h
}

struct Cell {
    sigma: f64,
    frames: usize,
    method: MethodId,
}

/// Runs the full sigma x frame-count x method grid. Records come back
/// sorted by (sigma, frames, method id): stable regardless of the worker
/// pool that evaluated them.
pub fn run_grid(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>, CliError> {
    let dataset = Dataset::resolve(&spec.dataset, &spec.dataset_dir)?;
    let border = spec.border.unwrap_or(if dataset.is_registered() {
        0
    } else {
        NON_REGISTERED_BORDER
    });
    let hash = spec_hash(spec);

    let mut cells = Vec::new();
    for &sigma in &spec.sigmas {
        for &frames in &spec.frame_counts {
            for &method in &spec.methods {
                cells.push(Cell {
                    sigma,
                    frames,
                    method,
                });
            }
        }
    }

    let mut records = cells
        .par_iter()
        .map(|cell| run_cell(spec, &dataset, cell, border, hash))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.frames.cmp(&b.frames))
            .then(a.method.cmp(&b.method))
    });
    Ok(records)
}

fn run_cell(
    spec: &ExperimentSpec,
    dataset: &Dataset,
    cell: &Cell,
    border: usize,
    hash: u64,
) -> Result<ExperimentRecord, CliError> {
    let start = Instant::now();
    let filter = FilterSpec::Default(cell.method.filter);
    let seed = cell_seed(spec.seed, cell.sigma, cell.frames);

    let (psnr_db, params_note) = match dataset.load(cell.frames)? {
        CleanData::Single(clean) => {
            let stack = make_registered_dataset(&clean, cell.sigma, cell.frames, seed);
            let flow = FlowParams::default(); // unused: stack is registered
            let value = evaluate(
                &stack, &clean, cell.method, &flow, &filter, cell.sigma, border, spec.sweep_ref,
            )?;
            (value, String::from("filter=defaults"))
        }
        CleanData::Frames { frames, ref_index } => {
            let noisy: Vec<ImagePlane> = frames
                .iter()
                .enumerate()
                .map(|(i, f)| add_awgn(f, NoiseSpec::new(cell.sigma, derive_seed(seed, i as u64))))
                .collect();
            let stack = FrameStack::new(noisy)?.with_ref_index(ref_index);
            let (flow, mut note) = resolve_flow_params(
                spec, dataset, cell, &stack, &frames[ref_index], border, &filter,
            )?;
            // Register once up front; the pipeline then takes the skip
            // path. Warped borders make the scalar sigma/sqrt(L) an
            // approximation, which the record notes.
            let (registered, masks) =
                denoise_core::flow::register_stack(stack.frames(), ref_index, &flow)?;
            let mut reg_stack = FrameStack::registered(registered)?.with_ref_index(ref_index);
            let masked = masks.iter().flatten().filter(|&&v| !v).count();
            reg_stack.validity = Some(masks);
            if masked > 0 {
                note.push_str(&format!(",sigma_eff=scalar-approx(invalid_px={masked})"));
            }
            let value = evaluate(
                &reg_stack,
                &frames[ref_index],
                cell.method,
                &flow,
                &filter,
                cell.sigma,
                border,
                spec.sweep_ref,
            )?;
            (value, note)
        }
    };

    Ok(ExperimentRecord {
        spec_hash: hash,
        dataset: dataset.name().to_string(),
        sigma: cell.sigma,
        frames: cell.frames,
        method: method_to_id(cell.method),
        psnr_db,
        wall_ms: start.elapsed().as_millis(),
        params: params_note,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    stack: &FrameStack,
    clean_reference: &ImagePlane,
    method: MethodId,
    flow: &FlowParams,
    filter: &FilterSpec,
    sigma: f64,
    border: usize,
    sweep_ref: bool,
) -> Result<f64, CliError> {
    if sweep_ref && method.extension == Extension::Sf && stack.len() > 1 {
        // Best PSNR over all choices of the reference frame. Only valid
        // when every frame shows the same clean content (registered
        // synthesis), since the clean reference stays fixed.
        let mut best = f64::NEG_INFINITY;
        for r in 0..stack.len() {
            let shifted = stack.clone().with_ref_index(r);
            let out = run_pipeline(&shifted, method, flow, filter, sigma)?;
            best = best.max(psnr(clean_reference, &out, border)?);
        }
        Ok(best)
    } else {
        let out = run_pipeline(stack, method, flow, filter, sigma)?;
        Ok(psnr(clean_reference, &out, border)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_flow_params(
    spec: &ExperimentSpec,
    dataset: &Dataset,
    cell: &Cell,
    stack: &FrameStack,
    clean_reference: &ImagePlane,
    border: usize,
    filter: &FilterSpec,
) -> Result<(FlowParams, String), CliError> {
    match &spec.flow_source {
        FlowSource::Explicit(p) => Ok((*p, flow_note(p, "explicit"))),
        FlowSource::Table(path) => {
            match flow_params_from_table(path, dataset.name(), cell.sigma)? {
                Some(p) => Ok((p, flow_note(&p, "table"))),
                None => {
                    let p = FlowParams::default();
                    Ok((p, flow_note(&p, "default")))
                }
            }
        }
        FlowSource::Tune(grid) => {
            let candidates = grid.candidates();
            let tuned = match grid.criterion {
                TuneCriterion::GroundTruthEpe => {
                    let gt_path = dataset.ground_truth_flow().ok_or_else(|| {
                        CliError::invalid(format!(
                            "tuning by endpoint error needs a ground-truth .flo next to the \
                             frames of `{}`",
                            dataset.name()
                        ))
                    })?;
                    let truth = read_flo(&gt_path)?;
                    let ref_index = stack.ref_index;
                    let next = (ref_index + 1).min(stack.len() - 1);
                    let f1 = &stack.frames()[ref_index];
                    let f2 = &stack.frames()[next];
                    denoise_core::flow::tune_flow_params(&candidates, |p| {
                        match solve_flow(f1, f2, p) {
                            Ok(flow) => denoise_core::flow::endpoint_error(&flow, &truth)
                                .unwrap_or(f64::INFINITY),
                            Err(_) => f64::INFINITY,
                        }
                    })
                    .map_err(CliError::Flow)?
                }
                TuneCriterion::DownstreamPsnr => denoise_core::flow::tune_flow_params(
                    &candidates,
                    |p| match run_pipeline(stack, cell.method, p, filter, cell.sigma) {
                        Ok(out) => {
                            -psnr(clean_reference, &out, border).unwrap_or(f64::NEG_INFINITY)
                        }
                        Err(_) => f64::INFINITY,
                    },
                )
                .map_err(CliError::Flow)?,
            };
            let note = flow_note(&tuned.params, &format!("tuned(cost={:.4})", tuned.cost));
            Ok((tuned.params, note))
        }
    }
}

fn flow_note(p: &FlowParams, source: &str) -> String {
    format!(
        "flow={source},alpha={},gamma={},lambda={},variant={:?}",
        p.alpha, p.gamma, p.lambda, p.variant
    )
}

/// Records as delimiter-separated text with a header line.
pub fn write_records(records: &[ExperimentRecord], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("spec_hash\tdataset\tsigma\tframes\tmethod\tpsnr_db\twall_ms\tparams\n");
    for r in records {
        out.push_str(&format!(
            "{:016x}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\n",
            r.spec_hash, r.dataset, r.sigma, r.frames, r.method, r.psnr_db, r.wall_ms, r.params
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 8 {
            return Err(CliError::format(
                path,
                format!("line {}: expected 8 tab-separated fields", lineno + 1),
            ));
        }
        let bad = |what: &str| CliError::format(path, format!("line {}: bad {what}", lineno + 1));
        records.push(ExperimentRecord {
            spec_hash: u64::from_str_radix(fields[0], 16).map_err(|_| bad("spec_hash"))?,
            dataset: fields[1].to_string(),
            sigma: fields[2].parse().map_err(|_| bad("sigma"))?,
            frames: fields[3].parse().map_err(|_| bad("frames"))?,
            method: fields[4].to_string(),
            psnr_db: fields[5].parse().map_err(|_| bad("psnr_db"))?,
            wall_ms: fields[6].parse().map_err(|_| bad("wall_ms"))?,
            params: fields[7].to_string(),
        });
    }
    Ok(records)
}

/// Aligned text table: one row per (sigma, frames), one column per method.
pub fn format_table(records: &[ExperimentRecord]) -> String {
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut rows: Vec<(f64, usize)> = Vec::new();
    for r in records {
        if !rows.contains(&(r.sigma, r.frames)) {
            rows.push((r.sigma, r.frames));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let dataset = records.first().map(|r| r.dataset.clone()).unwrap_or_default();
    let mut out = String::new();
    out.push_str(&format!("{:<16}", format!("{dataset} s/L")));
    for m in &methods {
        out.push_str(&format!("{:>10}", m));
    }
    out.push('\n');
    for (sigma, frames) in rows {
        out.push_str(&format!("{:<16}", format!("{sigma}/{frames}")));
        for m in &methods {
            let cell = records
                .iter()
                .find(|r| r.sigma == sigma && r.frames == frames && &r.method == m);
            match cell {
                Some(r) if r.psnr_db.is_finite() => out.push_str(&format!("{:>10.2}", r.psnr_db)),
                Some(_) => out.push_str(&format!("{:>10}", "inf")),
                None => out.push_str(&format!("{:>10}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use svx_core::bench::{case_seeds, run_case, summarize, BenchParams, CaseArtifacts};
use svx_core::features::{extract_features, layout, FEATURES_PER_CHANNEL};
use svx_core::metrics::evaluate;
use svx_core::phantom::{generate_phantom, PhantomParams};
use svx_core::rag::build_rag;
use svx_core::refine::{refine_case, CaseParams, ModalityRoles, RefineOutcome, RefineStatus};
use svx_core::schedule::{refresh_epochs, table, ScheduleParams, ScheduleRow};
use svx_core::similarity::Tau;
use svx_core::supervoxel::{slic, SlicParams, SupervoxelMap};
use svx_core::volume::{read_image, read_labels, write_labels, write_volume, AnyImage};
use svx_core::{Dims, LabelMap, Scalar, Volume};

use crate::overlay::{render, write_png, Layer, GT_COLOUR, REFINED_COLOUR, SEED_COLOUR};
use crate::{
    BenchArgs, Cli, Command, FeaturesArgs, Failure, MetricsArgs, PhantomArgs, PhantomGenArgs, RagArgs, RefineArgs,
    ScheduleArgs, SlicArgs, SlicParamArgs,
};

/// Runs `$body` with `$v` bound to the float volume at `$path`, whatever
/// its stored precision.
macro_rules! with_volume {
    ($path:expr, |$v:ident| $body:expr) => {
        match read_image($path)? {
            AnyImage::F32($v) => $body,
            AnyImage::F64($v) => $body,
            AnyImage::Labels(_) => {
                return Err(Failure::Data(format!(
                    "{}: expected a float volume, found a label map",
                    $path.display()
                )))
            }
        }
    };
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let ctx = Ctx {
        json: cli.json,
        verbose: cli.verbose,
    };
    match &cli.command {
        Command::Slic(a) => run_slic(&ctx, a),
        Command::Features(a) => run_features(&ctx, a),
        Command::Rag(a) => run_rag(&ctx, a),
        Command::Refine(a) => run_refine(&ctx, a),
        Command::Schedule(a) => run_schedule(&ctx, a),
        Command::Metrics(a) => run_metrics(&ctx, a),
        Command::Phantom(a) => run_phantom(&ctx, a),
        Command::Bench(a) => run_bench(&ctx, a),
    }
}

struct Ctx {
    json: bool,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// JSON on stdout when `--json` was given, `human` otherwise.
    fn report<R: Serialize>(&self, result: &R, human: impl FnOnce() -> String) -> Result<(), Failure> {
        let text = if self.json {
            serde_json::to_string(result)?
        } else {
            human()
        };
        let mut out = io::stdout().lock();
        writeln!(out, "{}", text.trim_end())?;
        Ok(())
    }

    /// Stdout is taken by `--json`, so streaming output needs a file.
    fn sink(&self, path: Option<&PathBuf>, what: &str) -> Result<Box<dyn Write>, Failure> {
        match path {
            Some(p) => Ok(Box::new(io::BufWriter::new(create(p)?))),
            None if self.json => Err(Failure::Usage(format!("--json needs --output for {what}"))),
            None => Ok(Box::new(io::BufWriter::new(io::stdout().lock()))),
        }
    }
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<R: Serialize>(path: &Path, value: &R) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn slic_params(a: &SlicParamArgs, channels: &[usize]) -> SlicParams {
    SlicParams {
        n_segments: a.n_segments,
        compactness: a.compactness,
        sigma: a.sigma,
        max_iter: a.max_iter,
        channels: channels.to_vec(),
        ..Default::default()
    }
}

fn dims3(v: &[usize]) -> Result<Dims, Failure> {
    <Dims>::try_from(v).map_err(|_| Failure::Usage(format!("--dims needs three values, got {}", v.len())))
}

fn phantom_params(a: &PhantomGenArgs, seed: u64) -> Result<PhantomParams, Failure> {
    Ok(PhantomParams {
        dims: dims3(&a.dims)?,
        seed,
        wt_blobs: a.blobs,
        noise_sigma: a.noise_sigma,
        bias_amplitude: a.bias,
        ..Default::default()
    })
}

#[derive(Serialize)]
struct SlicResult<'a> {
    output: &'a Path,
    dims: Dims,
    supervoxels: usize,
}

fn run_slic(ctx: &Ctx, a: &SlicArgs) -> Result<(), Failure> {
    let p = slic_params(&a.slic, &a.channels);
    let sp = with_volume!(&a.input, |v| slic(&v, &p)?);
    write_labels(sp.as_label_map(), &a.output)?;
    let r = SlicResult {
        output: &a.output,
        dims: sp.dims(),
        supervoxels: sp.count(),
    };
    ctx.report(&r, || format!("{} supervoxels written to {}", r.supervoxels, a.output.display()))
}

/// Column names of one channel's block, in feature order.
fn channel_columns(c: usize) -> Vec<String> {
    let mut names = vec![String::new(); FEATURES_PER_CHANNEL];
    names[layout::MEAN] = "mean".into();
    names[layout::VARIANCE] = "variance".into();
    names[layout::SKEWNESS] = "skewness".into();
    names[layout::CONTRAST] = "glcm_contrast".into();
    names[layout::ENERGY] = "glcm_energy".into();
    names[layout::ENTROPY] = "glcm_entropy".into();
    for (prefix, range) in [
        ("intensity_hist", layout::INTENSITY_HIST),
        ("orientation_hist", layout::ORIENTATION_HIST),
        ("magnitude_hist", layout::MAGNITUDE_HIST),
    ] {
        for (k, i) in range.enumerate() {
            names[i] = format!("{prefix}_{k}");
        }
    }
    names.into_iter().map(|n| format!("c{c}_{n}")).collect()
}

#[derive(Serialize)]
struct FeaturesResult<'a> {
    output: &'a Path,
    supervoxels: usize,
    channels: &'a [usize],
    columns: usize,
}

fn run_features(ctx: &Ctx, a: &FeaturesArgs) -> Result<(), Failure> {
    let sp = SupervoxelMap::from_labels(&read_labels(&a.supervoxels)?);
    let table = with_volume!(&a.input, |v| extract_features(&v, &sp, &a.channels)?);
    let mut w = csv::Writer::from_writer(ctx.sink(a.output.as_ref(), "features")?);
    let mut header = vec!["id".to_owned(), "voxel_count".to_owned()];
    header.extend(a.channels.iter().flat_map(|&c| channel_columns(c)));
    let csv_err = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for sv in 0..table.len() as u32 {
        let mut row = vec![sv.to_string(), table.voxel_count(sv).to_string()];
        row.extend(table.vector(sv).iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    if let Some(out) = &a.output {
        let r = FeaturesResult {
            output: out,
            supervoxels: table.len(),
            channels: &a.channels,
            columns: header.len(),
        };
        ctx.report(&r, || format!("{} feature rows written to {}", r.supervoxels, out.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RagResult<'a> {
    output: &'a Path,
    nodes: usize,
    edges: usize,
}

fn run_rag(ctx: &Ctx, a: &RagArgs) -> Result<(), Failure> {
    let sp = SupervoxelMap::from_labels(&read_labels(&a.supervoxels)?);
    let rag = build_rag(&sp);
    let edges = rag.edges();
    let mut w = ctx.sink(a.output.as_ref(), "rag")?;
    for e in &edges {
        writeln!(w, "{}", serde_json::to_string(e)?)?;
    }
    w.flush()?;
    if let Some(out) = &a.output {
        let r = RagResult {
            output: out,
            nodes: rag.len(),
            edges: edges.len(),
        };
        ctx.report(&r, || format!("{} nodes, {} edges written to {}", r.nodes, r.edges, out.display()))?;
    }
    Ok(())
}

fn parse_tau(s: &str) -> Result<Tau, Failure> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Tau::Auto);
    }
    s.parse()
        .map(Tau::Fixed)
        .map_err(|_| Failure::Usage(format!("--tau must be `auto` or a number, got `{s}`")))
}

#[derive(Serialize)]
struct MergeLine {
    region: &'static str,
    supervoxel_id: u32,
    similarity: f64,
    voxels: u64,
}

#[derive(Serialize)]
struct RegionSummary {
    region: &'static str,
    status: RefineStatus,
    supervoxels: usize,
    seed_supervoxels: usize,
    members: usize,
    merges: usize,
    voxels: usize,
}

#[derive(Serialize)]
struct RefineResult {
    regions: Vec<RegionSummary>,
}

fn region_summary(region: &'static str, o: &RefineOutcome) -> RegionSummary {
    RegionSummary {
        region,
        status: o.status,
        supervoxels: o.supervoxels,
        seed_supervoxels: o.seed_members.len(),
        members: o.members.len(),
        merges: o.log.len(),
        voxels: o.mask.foreground_count(),
    }
}

fn run_refine(ctx: &Ctx, a: &RefineArgs) -> Result<(), Failure> {
    let mut params = CaseParams {
        roles: ModalityRoles::parse(&a.roles)?,
        feature_channels: a.feature_channels.clone(),
        ..Default::default()
    };
    let r = &mut params.refine;
    r.n_c = a.nc;
    r.fit_threshold = a.fit_threshold;
    r.similarity.sim_0 = a.sim0;
    r.similarity.lambda = a.lambda;
    r.similarity.tau = parse_tau(&a.tau)?;
    r.slic = slic_params(&a.slic, &[]);
    let seed_wt = read_labels(&a.seed_wt)?;
    let seed_tc = read_labels(&a.seed_tc)?;
    let out = with_volume!(&a.volume, |v| refine_case(&v, &seed_wt, &seed_tc, &params)?);
    for (name, o) in [("wt", &out.wt), ("tc", &out.tc)] {
        if o.status == RefineStatus::SeedPassthrough {
            eprintln!("svx: warning: no {name} supervoxel passed the fit threshold; seed returned unchanged");
        }
        ctx.log(format!("{name}: {} passes, {} merges", o.passes, o.log.len()));
    }
    write_labels(&out.wt.mask, &a.out_wt)?;
    write_labels(&out.tc.mask, &a.out_tc)?;
    if let Some(path) = &a.log {
        let lines: Vec<MergeLine> = [("wt", &out.wt), ("tc", &out.tc)]
            .into_iter()
            .flat_map(|(region, o)| {
                o.log.iter().map(move |m| MergeLine {
                    region,
                    supervoxel_id: m.supervoxel,
                    similarity: m.similarity,
                    voxels: m.voxels,
                })
            })
            .collect();
        write_json(path, &lines)?;
    }
    let result = RefineResult {
        regions: vec![region_summary("wt", &out.wt), region_summary("tc", &out.tc)],
    };
    ctx.report(&result, || {
        let mut s = format!(
            "{:<6} {:<17} {:>11} {:>6} {:>8} {:>7} {:>9}\n",
            "region", "status", "supervoxels", "seed", "members", "merges", "voxels"
        );
        for r in &result.regions {
            let status = serde_json::to_value(r.status).unwrap_or_default();
            s += &format!(
                "{:<6} {:<17} {:>11} {:>6} {:>8} {:>7} {:>9}\n",
                r.region,
                status.as_str().unwrap_or("?"),
                r.supervoxels,
                r.seed_supervoxels,
                r.members,
                r.merges,
                r.voxels
            );
        }
        s
    })
}

#[derive(Serialize)]
struct ScheduleResult {
    params: ScheduleParams<f64>,
    refresh_epochs: Vec<u32>,
    rows: Vec<ScheduleRow>,
}

fn run_schedule(ctx: &Ctx, a: &ScheduleArgs) -> Result<(), Failure> {
    let params = ScheduleParams {
        alpha_f: a.alpha_f,
        t1: a.t1,
        t2: a.t2,
        n_t: a.nt,
        refresh_period: a.refresh_period,
        ..ScheduleParams::reference()
    };
    params.validate()?;
    let result = ScheduleResult {
        params,
        refresh_epochs: refresh_epochs(a.epochs, &params),
        rows: table(a.epochs, &params),
    };
    ctx.report(&result, || {
        let mut s = String::from("epoch,alpha,pseudo_batches\n");
        for r in &result.rows {
            s += &format!("{},{},{}\n", r.epoch, r.alpha, r.pseudo_batches);
        }
        s
    })
}

fn run_metrics(ctx: &Ctx, a: &MetricsArgs) -> Result<(), Failure> {
    let report = evaluate(&read_labels(&a.pred)?, &read_labels(&a.gt)?)?;
    if let Some(path) = &a.output {
        write_json(path, &report)?;
    }
    ctx.report(&report, || {
        format!(
            "dsc      {:.6}\nhd95_mm  {:.6}\niou      {:.6}\npred     {} voxels\ngt       {} voxels",
            report.dsc, report.hd95_mm, report.iou, report.pred_voxels, report.gt_voxels
        )
    })
}

#[derive(Serialize)]
struct PhantomResult {
    out_dir: PathBuf,
    files: Vec<String>,
    wt_voxels: usize,
    tc_voxels: usize,
}

fn run_phantom(ctx: &Ctx, a: &PhantomArgs) -> Result<(), Failure> {
    let params = phantom_params(&a.phantom, a.seed)?;
    let ph = generate_phantom::<f32>(&params)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::Data(format!("{}: {e}", a.out_dir.display())))?;
    write_volume(&ph.volume, a.out_dir.join("vol.mhd"))?;
    write_labels(&ph.gt_wt, a.out_dir.join("gt_wt.mhd"))?;
    write_labels(&ph.gt_tc, a.out_dir.join("gt_tc.mhd"))?;
    write_json(&a.out_dir.join("params.json"), &params)?;
    let result = PhantomResult {
        out_dir: a.out_dir.clone(),
        files: ["vol.mhd", "gt_wt.mhd", "gt_tc.mhd", "params.json"].map(String::from).to_vec(),
        wt_voxels: ph.gt_wt.foreground_count(),
        tc_voxels: ph.gt_tc.foreground_count(),
    };
    ctx.report(&result, || {
        format!(
            "phantom seed {} written to {} (WT {} voxels, TC {} voxels)",
            a.seed,
            a.out_dir.display(),
            result.wt_voxels,
            result.tc_voxels
        )
    })
}

fn overlay<T: Scalar>(path: &Path, v: &Volume<T>, channel: usize, seed: &LabelMap, refined: &LabelMap, gt: &LabelMap) -> Result<(), Failure> {
    let z = v.dims()[2] / 2;
    let layers = [
        Layer { mask: gt, colour: GT_COLOUR },
        Layer { mask: seed, colour: SEED_COLOUR },
        Layer { mask: refined, colour: REFINED_COLOUR },
    ];
    let (w, h, px) = render(v, channel, z, &layers);
    write_png(path, w, h, &px)
}

fn write_overlays(dir: &Path, params: &BenchParams, c: &CaseArtifacts) -> Result<(), Failure> {
    let roles = &params.refine.roles;
    let flair = roles.flair_channel()?;
    let [t1gd, _] = roles.core_channels()?;
    let ph = &c.phantom;
    let case = c.row.case;
    overlay(&dir.join(format!("case_{case:03}_wt.png")), &ph.volume, flair, &c.seed_wt, &c.refined_wt, &ph.gt_wt)?;
    overlay(&dir.join(format!("case_{case:03}_tc.png")), &ph.volume, t1gd, &c.seed_tc, &c.refined_tc, &ph.gt_tc)
}

fn run_bench(ctx: &Ctx, a: &BenchArgs) -> Result<(), Failure> {
    if a.cases == 0 {
        return Err(Failure::Usage("--cases must be >= 1".into()));
    }
    let mut params = BenchParams {
        cases: a.cases,
        seed: a.seed,
        phantom: phantom_params(&a.phantom, 0)?,
        erosion: a.erosion,
        boundary_noise: a.boundary_noise,
        ..Default::default()
    };
    let r = &mut params.refine.refine;
    r.n_c = a.nc;
    r.similarity.sim_0 = a.sim0;
    r.slic.n_segments = a.n_segments;
    r.slic.compactness = a.compactness;
    r.slic.sigma = a.sigma;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    // Cases run in parallel; overlays are written as each finishes so the
    // volumes need not all be held at once.
    use rayon::prelude::*;
    let rows = case_seeds(params.seed, params.cases)
        .par_iter()
        .enumerate()
        .map(|(i, &s)| -> Result<_, Failure> {
            let c = run_case(&params, i, s)?;
            ctx.log(format!("case {i}: WT {:.4} -> {:.4}", c.row.seed_wt_dsc, c.row.refined_wt_dsc));
            if let Some(dir) = &a.out_dir {
                write_overlays(dir, &params, &c)?;
            }
            Ok(c.row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&params, rows);
    if let Some(dir) = &a.out_dir {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    ctx.report(&summary, || {
        let mut s = format!(
            "{:>4} {:>20} {:>8} {:>8} {:>8} {:>8}\n",
            "case", "phantom_seed", "seed_wt", "ref_wt", "seed_tc", "ref_tc"
        );
        for r in &summary.rows {
            s += &format!(
                "{:>4} {:>20} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                r.case, r.phantom_seed, r.seed_wt_dsc, r.refined_wt_dsc, r.seed_tc_dsc, r.refined_tc_dsc
            );
        }
        s += &format!(
            "{:>4} {:>20} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            "mean", "", summary.mean_seed_wt_dsc, summary.mean_refined_wt_dsc, summary.mean_seed_tc_dsc, summary.mean_refined_tc_dsc
        );
        s += &format!(
            "refined WT DSC >= 0.90 in {:.0}% of cases; TC within WT in {:.0}%",
            100.0 * summary.wt_dsc_090_fraction,
            100.0 * summary.tc_within_wt_fraction
        );
        s
    })
}

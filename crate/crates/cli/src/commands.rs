use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use panoflow::config::read_key_values;
use panoflow::estimate::{EstimatorConfig, EstimatorRegistry};
use panoflow::flow::{
    flow_to_color, read_flo, read_flow, reproject_flow, write_flo, write_flow, FlowField,
};
use panoflow::fusion::{oracle_bounds, FusionConfig, FusionInput, FusionRegistry};
use panoflow::metrics::{evaluate, CompareTable};
use panoflow::pipeline::{estimate_in, run_pipeline, PipelineConfig};
use panoflow::projection::{resample, solid_angle_weights, ProjectionRegistry, ProjectionSpec};
use panoflow::propagate::propagate_edit;
use panoflow::raster::{read_pfm, write_pfm, Image};
use panoflow::synth::{generate_dataset, DatasetConfig, Manifest, Schedule};
use panoflow::Error;

use crate::{
    Command, ConvertArgs, EstimateArgs, EvalArgs, FuseArgs, GenerateArgs, PipelineArgs,
    PropagateArgs, VisualizeArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Convert(a) => convert(a),
        Command::Estimate(a) => estimate(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Visualize(a) => visualize(a),
        Command::PropagateEdit(a) => propagate(a),
    }
}

/// 2 for configuration problems, 3 for bad or missing data.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_config() => 2,
        _ => 3,
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

pub fn parse_point(s: &str) -> std::result::Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(x)?, p(y)?))
}

fn key_value(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| config_error(format!("expected key=value, got '{s}'")))
}

/// A full spec string, or a projection name/letter at the given
/// equirect-equivalent width.
fn parse_spec(s: &str, equirect_width: usize) -> Result<ProjectionSpec> {
    if s.contains(':') {
        return Ok(s.parse()?);
    }
    let spec = ProjectionRegistry::default()
        .get(s)?
        .spec_for(equirect_width);
    spec.validate()?;
    Ok(spec)
}

/// Layout of an image given by name or spec, checked against its size.
fn image_spec(s: Option<&str>, dims: (usize, usize)) -> Result<ProjectionSpec> {
    let spec = match s {
        Some(s) if s.contains(':') => s.parse()?,
        other => {
            let entry = ProjectionRegistry::default().get(other.unwrap_or("equirect"))?;
            ProjectionSpec::from_canvas(entry.kind, dims).ok_or_else(|| {
                config_error(format!(
                    "a {}x{} image is not a default {} canvas",
                    dims.0, dims.1, entry.name
                ))
            })?
        }
    };
    if spec.dims() != dims {
        return Err(Error::Dimensions {
            expected: spec.dims(),
            actual: dims,
        }
        .into());
    }
    Ok(spec)
}

fn is_flo(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo"))
}

fn load_flow(p: &Path) -> Result<FlowField> {
    let f = if is_flo(p) { read_flo(p) } else { read_flow(p) };
    f.with_context(|| format!("reading flow {}", p.display()))
}

fn save_flow(f: &FlowField, p: &Path) -> Result<()> {
    if is_flo(p) {
        write_flo(f, p)?;
    } else {
        write_flow(f, p)?;
    }
    Ok(())
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn require_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        )
        .into());
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let schedule: Schedule = a.schedule.parse()?;
    let mut cfg = DatasetConfig::new(schedule, a.pairs, a.seed);
    cfg.width = a.width;
    cfg.objects = a.objects;
    if let Some(path) = &a.config {
        for (k, v) in read_key_values(path)? {
            match k.as_str() {
                "schedule" => cfg.schedule = v.parse()?,
                "pairs" => cfg.pairs = panoflow::config::parse_value(&k, &v)?,
                "seed" => cfg.seed = panoflow::config::parse_value(&k, &v)?,
                "width" => cfg.width = panoflow::config::parse_value(&k, &v)?,
                "objects" => cfg.objects = panoflow::config::parse_value(&k, &v)?,
                _ => return Err(config_error(format!("unknown generate setting '{k}'"))),
            }
        }
    }
    let manifest = generate_dataset(&cfg, &a.out)?;
    println!(
        "{} ({} pairs)",
        manifest.path.display(),
        manifest.records.len()
    );
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<()> {
    require_file(&a.input)?;
    ensure_parent(&a.output)?;
    let ext = a
        .input
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext == "sfl" || ext == "flo" {
        let f = load_flow(&a.input)?;
        let to = parse_spec(&a.to, f.spec.equirect_width())?;
        let out = reproject_flow(&f, to)?;
        save_flow(&out, &a.output)?;
        info!("{} -> {}", f.spec, to);
    } else {
        let img = Image::load_png(&a.input)?;
        let from = image_spec(a.from.as_deref(), img.dims())?;
        let to = parse_spec(&a.to, from.equirect_width())?;
        let out = resample(from.build()?.as_ref(), &img, to.build()?.as_ref())?;
        out.save_png(&a.output)?;
        info!("{from} -> {to}");
    }
    println!("{}", a.output.display());
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let mut cfg = EstimatorConfig::with_kind(&a.estimator);
    for s in &a.settings {
        let (k, v) = key_value(s)?;
        cfg.set(k, v)?;
    }
    if let Some(path) = &a.config {
        cfg.apply(&read_key_values(path)?)?;
    }
    if cfg.kind == "perturbed-gt" && a.seed.is_none() {
        return Err(config_error(
            "--seed is required for the perturbed-gt estimator",
        ));
    }
    let est = EstimatorRegistry::default().build(&cfg)?;
    let (fa, fb) = (Image::load_png(&a.frame_a)?, Image::load_png(&a.frame_b)?);
    let src_spec = image_spec(None, fa.dims())?;
    let spec = parse_spec(&a.projection, src_spec.width())?;
    let gt = a.gt.as_deref().map(load_flow).transpose()?;
    let (src, proj) = (src_spec.build()?, spec.build()?);
    let flow = estimate_in(
        est.as_ref(),
        proj.as_ref(),
        src.as_ref(),
        &fa,
        &fb,
        gt.as_ref(),
        a.seed.unwrap_or(0),
    )?;
    let flow = if a.native || flow.spec == src_spec {
        flow
    } else {
        reproject_flow(&flow, src_spec)?
    };
    ensure_parent(&a.output)?;
    save_flow(&flow, &a.output)?;
    println!("{}", a.output.display());
    Ok(())
}

fn fuse(a: FuseArgs) -> Result<()> {
    let mut cfg = FusionConfig {
        mode: a.mode.clone(),
        criterion: a.criterion.parse()?,
        ..Default::default()
    };
    if let Some(path) = &a.config {
        for (k, v) in read_key_values(path)? {
            cfg.set(&k, &v)?;
        }
    }
    let strategy = FusionRegistry::default().build(&cfg)?;
    let gt = a.gt.as_deref().map(load_flow).transpose()?;
    let (raw_a, raw_b) = (load_flow(&a.a)?, load_flow(&a.b)?);
    let target = match &gt {
        Some(g) => g.spec,
        None => ProjectionSpec::equirect(raw_a.spec.equirect_width()),
    };
    let source = |raw: &FlowField, flag: &Option<String>| -> Result<ProjectionSpec> {
        match (raw.is_equirect(), flag) {
            (false, _) => Ok(raw.spec),
            (true, Some(s)) => parse_spec(s, target.width()),
            (true, None) => Ok(raw.spec),
        }
    };
    let (spec_a, spec_b) = (source(&raw_a, &a.source_a)?, source(&raw_b, &a.source_b)?);
    let on_target = |f: FlowField| -> Result<FlowField> {
        Ok(if f.spec == target {
            f
        } else {
            reproject_flow(&f, target)?
        })
    };
    let (pa, pb) = (on_target(raw_a)?, on_target(raw_b)?);
    let back = |p: &Option<PathBuf>| {
        p.as_deref()
            .map(|p| load_flow(p).and_then(on_target))
            .transpose()
    };
    let (back_a, back_b) = (back(&a.back_a)?, back(&a.back_b)?);
    let out = strategy.fuse(&FusionInput {
        pred_a: &pa,
        pred_b: &pb,
        spec_a,
        spec_b,
        back_a: back_a.as_ref(),
        back_b: back_b.as_ref(),
        gt: gt.as_ref(),
    })?;
    ensure_parent(&a.output)?;
    save_flow(&out.fused, &a.output)?;
    if let Some(p) = &a.confidence {
        ensure_parent(p)?;
        write_pfm(p, target.width(), target.height(), &out.confidence.as_f32())?;
    }
    if let Some(dir) = &a.bounds_dir {
        let gt = gt
            .as_ref()
            .ok_or_else(|| config_error("--bounds-dir needs --gt"))?;
        let b = oracle_bounds(&pa, &pb, gt, cfg.criterion)?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_flow(&b.lower, &dir.join("lower.sfl"))?;
        write_flow(&b.upper, &dir.join("upper.sfl"))?;
    }
    println!("{}", a.output.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let gt = load_flow(&a.gt)?;
    let mut pred = load_flow(&a.pred)?;
    if pred.spec != gt.spec {
        pred = reproject_flow(&pred, gt.spec)?;
    }
    let mask = match &a.occlusion {
        Some(p) => {
            let (w, h, occ) = read_pfm(p)?;
            if (w, h) != gt.spec.dims() {
                bail!(Error::Dimensions {
                    expected: gt.spec.dims(),
                    actual: (w, h)
                });
            }
            Some(occ.iter().map(|&o| o < 0.5).collect::<Vec<bool>>())
        }
        None => None,
    };
    let mut report = evaluate(&pred, &gt, mask.as_deref())?;
    if let Some(p) = &a.heatmap {
        ensure_parent(p)?;
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm")) {
            let map = if a.sd {
                &report.sd_map
            } else {
                &report.epe_map
            };
            let raw: Vec<f32> = map
                .values
                .iter()
                .map(|v| v.map_or(-1.0, |v| v as f32))
                .collect();
            write_pfm(p, map.width, map.height, &raw)?;
        } else {
            report.heatmap(a.sd, a.max).save_png(p)?;
        }
    }
    if let Some(p) = &a.table {
        let mut table = if p.is_file() {
            CompareTable::from_csv(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )?
        } else {
            CompareTable::default()
        };
        table.push(&a.method, &a.dataset, &report);
        ensure_parent(p)?;
        fs::write(p, table.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    let summary = serde_json::json!({
        "sd_mean": report.sd_mean,
        "epe_mean": report.epe_mean,
        "sd_weighted": report.sd_weighted,
        "epe_weighted": report.epe_weighted,
        "n_valid": report.n_valid,
        "n_masked": report.n_masked,
        "heatmap_max": report.heatmap_max,
    });
    println!("{summary}");
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(&a.manifest, &a.out);
    cfg.pair = a.pair;
    cfg.set("estimator.kind", &a.estimator)?;
    cfg.fusion.mode = a.fusion;
    cfg.fusion.criterion = a.criterion.parse()?;
    cfg.width = a.width;
    cfg.limit = a.limit;
    cfg.heatmaps = !a.no_heatmaps;
    cfg.seed = a.seed;
    for s in &a.settings {
        let (k, v) = key_value(s)?;
        cfg.set(k, v)?;
    }
    if let Some(path) = &a.config {
        cfg.apply_file(path)?;
    }
    let report = run_pipeline(&cfg)?;
    print!("{}", report.table.to_text());
    for q in &report.quarantined {
        eprintln!("pair {} skipped: {}", q.pair, q.error);
    }
    println!("{}", report.run_dir.join("compare_table.csv").display());
    Ok(())
}

fn visualize(a: VisualizeArgs) -> Result<()> {
    ensure_parent(&a.output)?;
    if let Some(p) = &a.flow {
        let f = load_flow(p)?;
        let (img, max) = flow_to_color(&f, a.max);
        img.save_png(&a.output)?;
        info!("saturation at {max:.3} px");
    } else if let Some(s) = &a.weights {
        let spec = parse_spec(s, a.width)?;
        let wm = solid_angle_weights(spec.build()?.as_ref());
        let masked = wm.masked();
        let (w, h) = spec.dims();
        let is_pfm = a
            .output
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
        if is_pfm {
            write_pfm(
                &a.output,
                w,
                h,
                &masked.iter().map(|&x| x as f32).collect::<Vec<_>>(),
            )?;
        } else {
            let max = masked.iter().copied().fold(0.0, f64::max);
            let img = Image::from_fn(w, h, 1, |x, y, px| px[0] = (masked[y * w + x] / max) as f32);
            img.save_png(&a.output)?;
        }
        info!("{spec}: owned weight sum {:.6}", wm.owned_total());
    } else {
        return Err(config_error("visualize needs --flow or --weights"));
    }
    println!("{}", a.output.display());
    Ok(())
}

fn sorted_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn propagate(a: PropagateArgs) -> Result<()> {
    let (frame_paths, flow_paths) = match (&a.manifest, &a.frames, &a.flows) {
        (Some(m), _, _) => {
            let m = Manifest::read(m)?;
            let mut frames: Vec<PathBuf> =
                m.records.iter().map(|r| m.resolve(&r.frame_a)).collect();
            if let Some(last) = m.records.last() {
                frames.push(m.resolve(&last.frame_b));
            }
            (
                frames,
                m.records.iter().map(|r| m.resolve(&r.flow_ba)).collect(),
            )
        }
        (None, Some(fr), Some(fl)) => (
            sorted_files(fr, &["png"])?,
            sorted_files(fl, &["sfl", "flo"])?,
        ),
        _ => {
            return Err(config_error(
                "propagate-edit needs --manifest or both --frames and --flows",
            ))
        }
    };
    if a.anchor >= frame_paths.len() {
        return Err(config_error(format!(
            "anchor {} outside {} frames",
            a.anchor,
            frame_paths.len()
        )));
    }
    let frames = frame_paths
        .iter()
        .map(|p| Image::load_png(p))
        .collect::<panoflow::Result<Vec<_>>>()?;
    let flows = flow_paths
        .iter()
        .skip(a.anchor)
        .take(frames.len() - a.anchor - 1)
        .map(|p| load_flow(p))
        .collect::<Result<Vec<_>>>()?;
    let sprite = Image::load_png(&a.sprite)?;
    let edit = propagate_edit(&frames, &sprite, a.anchor, a.center, &flows)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (k, img) in edit.frames.iter().enumerate() {
        img.save_png(&a.out.join(format!("edit_{k:05}.png")))?;
    }
    let mut track = String::new();
    for (k, c) in edit.centroids.iter().enumerate() {
        let c = c.map(|(x, y)| [x, y]);
        track += &serde_json::json!({"frame": a.anchor + k, "centroid": c}).to_string();
        track.push('\n');
    }
    let track_path = a.out.join("centroids.jsonl");
    fs::write(&track_path, track).with_context(|| format!("writing {}", track_path.display()))?;
    println!("{} ({} frames)", a.out.display(), edit.frames.len());
    Ok(())
}

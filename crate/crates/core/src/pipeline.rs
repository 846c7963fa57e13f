//! Dataset-wide evaluation: estimate in two projections, fuse on the
//! equirect grid, and compare everything against ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_value, read_key_values};
use crate::error::{Error, Result};
use crate::estimate::{EstimateInput, EstimatorConfig, EstimatorRegistry, FlowEstimator};
use crate::flow::{read_flow, reproject_flow, write_flow, FlowField};
use crate::fusion::{FusionConfig, FusionInput, FusionRegistry, FusionStrategy};
use crate::metrics::{evaluate, CompareTable, EvalReport};
use crate::projection::{
    resample, Projection, ProjectionEntry, ProjectionRegistry, ProjectionSpec,
};
use crate::raster::{write_pfm, Image};
use crate::synth::{Manifest, PairRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    /// Projection pair such as `E+C`.
    pub pair: String,
    /// Working equirect width; defaults to the dataset's.
    pub width: Option<usize>,
    pub estimator_a: EstimatorConfig,
    pub estimator_b: EstimatorConfig,
    pub fusion: FusionConfig,
    pub seed: u64,
    pub heatmaps: bool,
    /// Only the first `limit` pairs.
    pub limit: Option<usize>,
}

impl PipelineConfig {
    pub fn new(manifest: &Path, out: &Path) -> Self {
        PipelineConfig {
            manifest: manifest.to_path_buf(),
            out: out.to_path_buf(),
            pair: "E+C".into(),
            width: None,
            estimator_a: EstimatorConfig::default(),
            estimator_b: EstimatorConfig::default(),
            fusion: FusionConfig::default(),
            seed: 0,
            heatmaps: true,
            limit: None,
        }
    }

    /// `estimator.*` keys set both estimators, `a.*` and `b.*` one side,
    /// `fusion.*` the fusion strategy.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("estimator.") {
            self.estimator_a.set(k, value)?;
            return self.estimator_b.set(k, value);
        }
        if let Some(k) = key.strip_prefix("a.") {
            return self.estimator_a.set(k, value);
        }
        if let Some(k) = key.strip_prefix("b.") {
            return self.estimator_b.set(k, value);
        }
        if let Some(k) = key.strip_prefix("fusion.") {
            return self.fusion.set(k, value);
        }
        match key {
            "pair" | "projections" => self.pair = value.to_string(),
            "width" => self.width = Some(parse_value(key, value)?),
            "seed" => self.seed = parse_value(key, value)?,
            "heatmaps" => self.heatmaps = parse_value(key, value)?,
            "limit" => self.limit = Some(parse_value(key, value)?),
            _ => return Err(Error::Config(format!("unknown pipeline setting '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        read_key_values(path)?
            .iter()
            .try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn validate(&self) -> Result<()> {
        ProjectionRegistry::default().pair(&self.pair)?;
        if let Some(w) = self.width {
            ProjectionSpec::equirect(w).validate()?;
        }
        self.estimator_a.validate()?;
        self.estimator_b.validate()?;
        FusionRegistry::default().build(&self.fusion)?;
        if !self.manifest.is_file() {
            return Err(Error::io(
                &self.manifest,
                std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
            ));
        }
        Ok(())
    }
}

/// Independent stream id for one estimate of one pair.
pub fn pair_seed(seed: u64, pair: usize, side: usize, backward: bool) -> u64 {
    let mut z = seed
        ^ ((pair as u64) << 2 | (side as u64) << 1 | backward as u64)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E4B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `est` on equirect frames re-rendered into `proj`; the result is in
/// `proj`'s own flow convention.
pub fn estimate_in(
    est: &dyn FlowEstimator,
    proj: &dyn Projection,
    src: &dyn Projection,
    frame_a: &Image,
    frame_b: &Image,
    gt: Option<&FlowField>,
    seed: u64,
) -> Result<FlowField> {
    let same = proj.spec() == src.spec();
    let (a, b) = if same {
        (frame_a.clone(), frame_b.clone())
    } else {
        (resample(src, frame_a, proj)?, resample(src, frame_b, proj)?)
    };
    let input = EstimateInput {
        gt,
        seed,
        ..EstimateInput::new(&a, &b, proj)
    };
    est.estimate(&input)
}

fn to_spec(f: FlowField, spec: ProjectionSpec) -> Result<FlowField> {
    if f.spec == spec {
        Ok(f)
    } else {
        reproject_flow(&f, spec)
    }
}

struct Side {
    entry: ProjectionEntry,
    proj: std::sync::Arc<dyn Projection>,
    est: Box<dyn FlowEstimator>,
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    manifest: &'a Manifest,
    sides: [Side; 2],
    fusion: Box<dyn FusionStrategy>,
    fused_name: String,
    needs_backward: bool,
    run_dir: PathBuf,
}

struct PairResult {
    dataset: String,
    reports: Vec<(String, EvalReport)>,
}

impl Context<'_> {
    fn process(&self, rec: &PairRecord) -> Result<PairResult> {
        let load = |rel: &str| Image::load_png(&self.manifest.resolve(rel));
        let (mut frame_a, mut frame_b) = (load(&rec.frame_a)?, load(&rec.frame_b)?);
        let mut gt_ab = read_flow(&self.manifest.resolve(&rec.flow_ab))?;
        gt_ab.ensure_equirect()?;
        let mut gt_ba = if self.needs_backward {
            Some(read_flow(&self.manifest.resolve(&rec.flow_ba))?)
        } else {
            None
        };
        let src_spec = gt_ab.spec;
        let src = src_spec.build()?;
        if frame_a.dims() != src_spec.dims() || frame_b.dims() != src_spec.dims() {
            return Err(Error::Dimensions {
                expected: src_spec.dims(),
                actual: frame_a.dims(),
            });
        }
        let work_spec = self.cfg.width.map_or(src_spec, ProjectionSpec::equirect);
        let work = work_spec.build()?;
        if work_spec != src_spec {
            frame_a = resample(src.as_ref(), &frame_a, work.as_ref())?;
            frame_b = resample(src.as_ref(), &frame_b, work.as_ref())?;
            gt_ab = reproject_flow(&gt_ab, work_spec)?;
            gt_ba = gt_ba.map(|f| reproject_flow(&f, work_spec)).transpose()?;
        }

        let mut fwd = Vec::new();
        let mut back = Vec::new();
        for (k, side) in self.sides.iter().enumerate() {
            let run = |a: &Image, b: &Image, gt: Option<&FlowField>, backward: bool| {
                let seed = pair_seed(self.cfg.seed, rec.pair, k, backward);
                let f = estimate_in(
                    side.est.as_ref(),
                    side.proj.as_ref(),
                    work.as_ref(),
                    a,
                    b,
                    gt,
                    seed,
                )?;
                to_spec(f, work_spec)
            };
            fwd.push(run(&frame_a, &frame_b, Some(&gt_ab), false)?);
            if self.needs_backward {
                back.push(run(&frame_b, &frame_a, gt_ba.as_ref(), true)?);
            }
        }
        let input = FusionInput {
            pred_a: &fwd[0],
            pred_b: &fwd[1],
            spec_a: self.sides[0].proj.spec(),
            spec_b: self.sides[1].proj.spec(),
            back_a: back.first(),
            back_b: back.get(1),
            gt: Some(&gt_ab),
        };
        let fused = self.fusion.fuse(&input)?;

        let mut reports = vec![
            (
                self.sides[0].entry.letter.to_string(),
                evaluate(&fwd[0], &gt_ab, None)?,
            ),
            (
                self.sides[1].entry.letter.to_string(),
                evaluate(&fwd[1], &gt_ab, None)?,
            ),
            (
                self.fused_name.clone(),
                evaluate(&fused.fused, &gt_ab, None)?,
            ),
        ];

        let dir = self
            .run_dir
            .join("pairs")
            .join(format!("pair_{:05}", rec.pair));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_flow(&fused.fused, &dir.join("fused.sfl"))?;
        let (w, h) = work_spec.dims();
        write_pfm(
            &dir.join("confidence.pfm"),
            w,
            h,
            &fused.confidence.as_f32(),
        )?;
        if self.cfg.heatmaps {
            for sd in [true, false] {
                let max = reports
                    .iter()
                    .map(|(_, r)| if sd { r.sd_map.max() } else { r.epe_map.max() })
                    .fold(0.0, f64::max);
                for (name, r) in reports.iter_mut() {
                    let img = r.heatmap(sd, Some(max));
                    let file = format!(
                        "{}_{}.png",
                        name.replace(['+', ' '], "_"),
                        if sd { "sd" } else { "epe" }
                    );
                    img.save_png(&dir.join(file))?;
                }
            }
        }
        Ok(PairResult {
            dataset: format!("{}/{:05}", rec.schedule, rec.pair),
            reports,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Quarantined {
    pub pair: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub table: CompareTable,
    pub quarantined: Vec<Quarantined>,
    pub run_dir: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    working_spec: String,
    pairs_total: usize,
    pairs_ok: usize,
    quarantined: &'a [Quarantined],
}

/// Runs every pair of the manifest and writes `compare_table.csv`,
/// `compare_table.txt`, `run.json` and per-pair outputs under `cfg.out`.
///
/// A pair that fails is logged and left out of the table; the run goes on.
/// Outputs do not depend on the number of worker threads.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let manifest = Manifest::read(&cfg.manifest)?;
    if manifest.records.is_empty() {
        return Err(Error::Format(format!(
            "{} lists no pairs",
            cfg.manifest.display()
        )));
    }
    let first_spec: ProjectionSpec = manifest.records[0].spec.parse().map_err(|_| {
        Error::Format(format!(
            "bad spec '{}' in manifest",
            manifest.records[0].spec
        ))
    })?;
    let width = cfg.width.unwrap_or(first_spec.width());
    let (ea, eb) = ProjectionRegistry::default().pair(&cfg.pair)?;
    let estimators = EstimatorRegistry::default();
    let side = |entry: ProjectionEntry, ec: &EstimatorConfig| -> Result<Side> {
        Ok(Side {
            entry,
            proj: entry.spec_for(width).build()?,
            est: estimators.build(ec)?,
        })
    };
    let fusion = FusionRegistry::default().build(&cfg.fusion)?;
    let pair_code = format!("{}+{}", ea.letter, eb.letter);
    let fused_name = if fusion.name() == "blend-heuristic" {
        pair_code
    } else {
        format!("{pair_code} {}", fusion.name())
    };
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ctx = Context {
        cfg,
        manifest: &manifest,
        sides: [side(ea, &cfg.estimator_a)?, side(eb, &cfg.estimator_b)?],
        needs_backward: fusion.name() == "blend-heuristic",
        fusion,
        fused_name,
        run_dir: cfg.out.clone(),
    };
    let records: Vec<&PairRecord> = manifest
        .records
        .iter()
        .take(cfg.limit.unwrap_or(usize::MAX))
        .collect();
    info!(
        "pipeline: {} pairs, projections {}",
        records.len(),
        cfg.pair
    );
    let results: Vec<Result<PairResult>> = records.par_iter().map(|r| ctx.process(r)).collect();

    let mut table = CompareTable::default();
    let mut quarantined = Vec::new();
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok(p) => {
                for (method, r) in &p.reports {
                    table.push(method, &p.dataset, r);
                }
            }
            Err(e) => {
                warn!("pair {} quarantined: {e}", rec.pair);
                quarantined.push(Quarantined {
                    pair: rec.pair,
                    error: e.to_string(),
                });
            }
        }
    }
    let write = |name: &str, text: &str| {
        let p = cfg.out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("compare_table.csv", &table.to_csv()?)?;
    write("compare_table.txt", &table.to_text())?;
    let run = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        working_spec: ProjectionSpec::equirect(width).to_string(),
        pairs_total: records.len(),
        pairs_ok: records.len() - quarantined.len(),
        quarantined: &quarantined,
    };
    write("run.json", &(serde_json::to_string_pretty(&run)? + "\n"))?;
    Ok(PipelineReport {
        table,
        quarantined,
        run_dir: cfg.out.clone(),
    })
}

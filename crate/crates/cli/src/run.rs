//! Full pipeline over a dataset and the split report.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use otfuse_core::fusion::init_queries;
use otfuse_core::loss::{seg_loss, total_loss, vl_regularization, LayerPrediction, LossWeights, SegTarget};
use otfuse_core::ot::write_plan_dump;
use otfuse_core::scene::{scene_classification_loss, LabeledEmbedding, DEFAULT_TEMPERATURE};
use otfuse_core::tensor::cosine_distance;
use otfuse_core::{
    fuse, infer_scene_posterior, refine_and_predict, split_evaluate, synthesize_anchor, EvalReport, EvalSample,
    FusionConfig, IdentityRefiner, Matrix, SceneHeads, TransportPlan,
};
use rayon::prelude::*;

use crate::dataset::{Dataset, LoadedSample, Split};
use crate::error::{CliError, CliResult};
use crate::svg::report_chart;
use crate::synth::TRAVERSABLE;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "report.svg";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const PLAN_DIR: &str = "plans";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Svg,
    Both,
}

/// Settings of one pipeline run.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub fusion: FusionConfig,
    pub eps_norm: f64,
    pub loss_weights: LossWeights,
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleLosses {
    pub seg: f64,
    pub reg: f64,
    pub scene: f64,
    pub total: f64,
}

/// Outcome of the pipeline on one sample.
#[derive(Clone, Debug)]
pub struct SampleResult {
    pub id: usize,
    pub split: Split,
    pub eval: EvalSample,
    pub miou: f64,
    pub losses: SampleLosses,
    pub image_plan: TransportPlan,
    pub normal_plan: TransportPlan,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub samples: Vec<SampleResult>,
}

fn query_class_logits(queries: &Matrix, anchors: &Matrix) -> CliResult<Matrix> {
    let mut data = Vec::with_capacity(queries.rows() * anchors.rows());
    for q in queries.row_iter() {
        for a in anchors.row_iter() {
            data.push((1.0 - cosine_distance(q, a)?) / DEFAULT_TEMPERATURE);
        }
    }
    Ok(Matrix::new(queries.rows(), anchors.rows(), data)?)
}

fn losses(
    dataset: &Dataset,
    heads: &SceneHeads,
    sample: &LoadedSample,
    anchors: &Matrix,
    queries: &Matrix,
    soft_masks: Vec<Vec<f64>>,
    weights: &LossWeights,
) -> CliResult<SampleLosses> {
    let traversable = &sample.ground_truth;
    let other: Vec<bool> = traversable.iter().map(|t| !t).collect();
    let target_masks =
        (0..anchors.rows()).map(|k| if k == TRAVERSABLE { traversable.clone() } else { other.clone() }).collect();
    let layer = LayerPrediction { class_logits: query_class_logits(queries, anchors)?, masks: soft_masks };
    let target = SegTarget { class_labels: (0..anchors.rows()).collect(), masks: target_masks };
    let seg = seg_loss(&[layer], &[target], weights)?;

    let table = &dataset.table;
    let reg = match &table.frozen_text_cls {
        Some(frozen) => {
            let idx = table.attributes.index_of(sample.combination)?;
            vl_regularization(&sample.cls, &frozen[idx], anchors, table.prototype(sample.combination)?)?
        }
        None => 0.0,
    };
    let labeled = LabeledEmbedding { cls: sample.cls.clone(), labels: sample.combination };
    let scene = scene_classification_loss(heads, std::slice::from_ref(&labeled))?;
    Ok(SampleLosses { seg, reg, scene, total: total_loss(seg, reg, scene, weights)? })
}

/// Runs posterior → anchor → fusion → mask → metrics on one sample.
pub fn process_sample(
    dataset: &Dataset,
    heads: &SceneHeads,
    settings: &RunSettings,
    id: usize,
) -> CliResult<SampleResult> {
    let sample = dataset.load_sample(id)?;
    let posterior = infer_scene_posterior(&sample.cls, heads)?;
    let anchors = synthesize_anchor(&posterior, &dataset.table)?;
    let fused = fuse(
        &sample.image_features,
        &sample.normal_features,
        &sample.image_probs,
        &sample.normal_probs,
        &anchors,
        &settings.fusion,
    )?;
    for (branch, plan) in [("image", &fused.image_plan), ("normal", &fused.normal_plan)] {
        if !plan.converged {
            warn!(
                "sample {id}: {branch} plan stopped after {} iterations with violation {:.3e}",
                plan.iterations, plan.violation
            );
        }
    }
    let positional = Matrix::zeros(anchors.rows(), anchors.cols());
    let queries = init_queries(&anchors, &positional)?;
    let masks = refine_and_predict(&IdentityRefiner, queries.clone(), &fused.fused, settings.eps_norm)?;
    let predicted = &masks[TRAVERSABLE].binary;
    let eval = EvalSample::from_masks(sample.combination, predicted, &sample.ground_truth)?;
    let miou = eval.confusion.metrics().miou;
    let soft = masks.into_iter().map(|m| m.soft).collect();
    let losses = losses(dataset, heads, &sample, &anchors, &queries, soft, &settings.loss_weights)?;
    debug!("sample {id}: mIoU {miou:.2}, total loss {:.4}", losses.total);
    Ok(SampleResult {
        id,
        split: dataset.manifest.samples[id].split,
        eval,
        miou,
        losses,
        image_plan: fused.image_plan,
        normal_plan: fused.normal_plan,
    })
}

/// Processes every sample on a pool of `settings.threads` workers; results
/// come back ordered by sample id whatever the thread count.
pub fn run_pipeline(dataset: &Dataset, heads: &SceneHeads, settings: &RunSettings) -> CliResult<RunOutcome> {
    heads.check_space(&dataset.manifest.attributes)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<CliResult<SampleResult>> = pool.install(|| {
        (0..dataset.len())
            .into_par_iter()
            .map(|id| process_sample(dataset, heads, settings, id).map_err(|e| e.context(format!("sample {id}"))))
            .collect()
    });
    let samples = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let evals: Vec<EvalSample> = samples.iter().map(|s| s.eval.clone()).collect();
    let report = split_evaluate(&evals, &dataset.train_set()?)?;
    Ok(RunOutcome { report, samples })
}

pub fn samples_csv(dataset: &Dataset, samples: &[SampleResult]) -> String {
    let mut out = String::from(
        "id,combination,split,miou,seg_loss,reg_loss,scene_loss,total_loss,image_iterations,normal_iterations,converged\n",
    );
    for s in samples {
        let split = match s.split {
            Split::Known => "known",
            Split::Unknown => "unknown",
        };
        let l = s.losses;
        let _ = writeln!(
            out,
            "{},{},{split},{:.4},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            s.id,
            dataset.manifest.samples[s.id].combination,
            s.miou,
            l.seg,
            l.reg,
            l.scene,
            l.total,
            s.image_plan.iterations,
            s.normal_plan.iterations,
            s.image_plan.converged && s.normal_plan.converged
        );
    }
    out
}

pub fn write_plan_file(path: &Path, plan: &TransportPlan, epsilon: f64) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    write_plan_dump(&mut out, plan, epsilon)?;
    out.flush()?;
    Ok(())
}

pub fn write_outputs(
    dataset: &Dataset,
    outcome: &RunOutcome,
    out: &Path,
    format: ReportFormat,
    dump_plans: bool,
    epsilon: f64,
) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        fs::write(out.join(REPORT_CSV), outcome.report.to_csv())?;
        fs::write(out.join(SAMPLES_CSV), samples_csv(dataset, &outcome.samples))?;
    }
    if matches!(format, ReportFormat::Svg | ReportFormat::Both) {
        fs::write(out.join(REPORT_SVG), report_chart(&outcome.report))?;
    }
    if dump_plans {
        let dir = out.join(PLAN_DIR);
        fs::create_dir_all(&dir)?;
        for s in &outcome.samples {
            write_plan_file(&dir.join(format!("{:05}_image.csv", s.id)), &s.image_plan, epsilon)?;
            write_plan_file(&dir.join(format!("{:05}_normal.csv", s.id)), &s.normal_plan, epsilon)?;
        }
    }
    Ok(())
}

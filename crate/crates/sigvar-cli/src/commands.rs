use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use sigvar::augment::feature::{eval_params_feature, perturb_features, PerturbMode};
use sigvar::augment::image::{duplicate, eval_params_image, DuplicatorConfig, ExternalDuplicator};
use sigvar::defaults;
use sigvar::evaluate::{run_protocol, Augmenter, EerReport, ProtocolConfig};
use sigvar::features::{GridDescriptor, SampleLabel, VectorRecord, VectorStore};
use sigvar::ingest::{
    load_manifest, mix_seed, prepare_from_store, stream_rng, DatasetHandle, PreparedDataset,
};
use sigvar::orchestrate::{
    save_parameters, sigvar_optimize, FitnessMode, OptimizeSettings, ParamsFile, WriterData,
    WriterSet,
};
use sigvar::raster::SignatureImage;
use sigvar::swarm::ParamKind;
use sigvar::synth::{write_dataset, SynthConfig};

use crate::{record, Command};

pub fn dispatch(command: Command) -> anyhow::Result<()> {
    init_rayon(jobs_of(&command))?;
    match command {
        Command::GenDataset(ref args) => gen_dataset(args.clone(), &command),
        Command::Extract(ref args) => extract(args.clone(), &command),
        Command::Optimize(ref args) => optimize(args.clone(), &command),
        Command::Augment(ref args) => augment(args.clone(), &command),
        Command::SweepSigma(ref args) => sweep_sigma(args.clone(), &command),
        Command::Evaluate(ref args) => evaluate(args.clone(), &command),
        Command::ValidateFeatures(ref args) => validate_features(args.clone(), &command),
        Command::Replay(args) => replay(args),
        Command::InitParams(ref args) => init_params(args.clone(), &command),
    }
}

fn jobs_of(command: &Command) -> Option<usize> {
    match command {
        Command::GenDataset(a) => a.common.jobs,
        Command::Extract(a) => a.common.jobs,
        Command::Optimize(a) => a.common.jobs,
        Command::Augment(a) => a.common.jobs,
        Command::SweepSigma(a) => a.common.jobs,
        Command::Evaluate(a) => a.common.jobs,
        Command::ValidateFeatures(a) => a.common.jobs,
        Command::Replay(a) => a.common.jobs,
        Command::InitParams(a) => a.common.jobs,
    }
}

fn init_rayon(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(jobs) = jobs {
        // A later init in the same process (replay) keeps the first pool;
        // results are independent of pool size by construction.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    Ok(())
}

fn parse_size(size: &str) -> anyhow::Result<(u32, u32)> {
    let (h, w) = size
        .split_once('x')
        .with_context(|| format!("expected HxW, got `{size}`"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

/// `a..b` (inclusive), `a,b,c`, or a single value.
fn parse_range_list(text: &str) -> anyhow::Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse()?;
        let hi: usize = hi.trim().parse()?;
        if hi < lo {
            bail!("range `{text}` is inverted");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(Into::into))
        .collect()
}

/// `LO:HI:STEP`, endpoints inclusive up to rounding.
fn parse_sigma_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("expected LO:HI:STEP, got `{text}`");
    }
    let lo: f64 = parts[0].parse()?;
    let hi: f64 = parts[1].parse()?;
    let step: f64 = parts[2].parse()?;
    if !(lo > 0.0 && hi >= lo && step > 0.0) {
        bail!("sigma grid must satisfy 0 < LO <= HI with STEP > 0");
    }
    let mut grid = Vec::new();
    let mut index = 0usize;
    loop {
        let sigma = lo + step * index as f64;
        if sigma > hi + step * 1e-9 {
            break;
        }
        grid.push(sigma);
        index += 1;
    }
    Ok(grid)
}

fn parse_writer_filter(text: &str) -> anyhow::Result<BTreeSet<u32>> {
    text.split(',')
        .map(|v| v.trim().parse::<u32>().map_err(Into::into))
        .collect()
}

/// Loads samples from a store when given, otherwise from manifest images via
/// the baseline descriptor.
fn load_prepared(
    manifest: Option<&Path>,
    features: Option<&Path>,
    keep_raw: bool,
) -> anyhow::Result<(PreparedDataset, Option<DatasetHandle>)> {
    if let Some(store_path) = features {
        if keep_raw {
            bail!("image-space work needs raw images; a feature store cannot supply them");
        }
        let store = VectorStore::load(store_path)?;
        return Ok((prepare_from_store(&store)?, None));
    }
    let manifest = manifest.context("either --manifest or --features is required")?;
    let handle = load_manifest(manifest)?;
    let prepared = handle.prepare(&GridDescriptor, keep_raw)?;
    Ok((prepared, Some(handle)))
}

fn gen_dataset(args: crate::GenDatasetArgs, command: &Command) -> anyhow::Result<()> {
    let (height, width) = parse_size(&args.size)?;
    let cfg = SynthConfig {
        writers: args.writers,
        genuine_per_writer: args.genuine,
        skilled_per_writer: args.skilled,
        width,
        height,
        seed: args.seed,
    };
    let manifest = write_dataset(&cfg, &args.out)?;
    record::write(&args.out, command)?;
    println!("wrote {} writers to {}", args.writers, manifest.display());
    Ok(())
}

fn extract(args: crate::ExtractArgs, command: &Command) -> anyhow::Result<()> {
    let handle = load_manifest(&args.manifest)?;
    let prepared = handle.prepare(&GridDescriptor, false)?;
    let mut store = VectorStore::default();
    for writer in &prepared.writers {
        for (label, samples) in [
            (SampleLabel::Genuine, &writer.genuine),
            (SampleLabel::ForgerySkilled, &writer.skilled),
        ] {
            for (i, sample) in samples.iter().enumerate() {
                store.push(VectorRecord {
                    writer_id: writer.id,
                    sample_id: i as u32,
                    label,
                    vector: sample.vector.clone(),
                })?;
            }
        }
    }
    if args.binary {
        store.save_binary(&args.out)?;
    } else {
        store.save_text(&args.out)?;
    }
    record::write(&args.out, command)?;
    println!(
        "extracted {} vectors (dim {}) to {}",
        store.records.len(),
        store.dim().unwrap_or(0),
        args.out.display()
    );
    Ok(())
}

fn optimize(args: crate::OptimizeArgs, command: &Command) -> anyhow::Result<()> {
    let image_mode = match args.mode.as_str() {
        "image" => true,
        "feature" => false,
        other => bail!("--mode must be image or feature, got `{other}`"),
    };
    let (prepared, handle) = load_prepared(
        args.manifest.as_deref(),
        args.features.as_deref(),
        image_mode,
    )?;
    let filter = args
        .writers
        .as_deref()
        .map(parse_writer_filter)
        .transpose()?;

    let writers: Vec<WriterSet> = prepared
        .writers
        .iter()
        .filter(|w| filter.as_ref().is_none_or(|f| f.contains(&w.id)))
        .map(|w| WriterSet {
            writer_id: w.id,
            data: if image_mode {
                WriterData::Images(w.genuine.iter().filter_map(|s| s.raw.clone()).collect())
            } else {
                WriterData::Vectors(w.genuine.iter().map(|s| s.vector.clone()).collect())
            },
        })
        .collect();
    if writers.is_empty() {
        bail!("writer filter matched nothing");
    }

    let settings = OptimizeSettings {
        n_per: args.n_per,
        iterations: args.iterations,
        particles: args.particles,
        seed: args.seed,
        skip_failed: args.skip_failed,
    };
    let canvas = handle.as_ref().map(|h| h.canvas).unwrap_or((0, 0));
    let mode = if image_mode {
        FitnessMode::Image {
            extractor: &GridDescriptor,
            canvas,
        }
    } else {
        FitnessMode::Feature {
            mode: PerturbMode::Smooth,
        }
    };
    let result = sigvar_optimize(&writers, &mode, &settings)?;
    save_parameters(&result, &settings, &args.mode, &args.out)?;
    record::write(&args.out, command)?;
    println!(
        "optimized {} writers; average = {:?}",
        result.per_writer.len(),
        result.average.values()
    );
    Ok(())
}

fn augment(args: crate::AugmentArgs, command: &Command) -> anyhow::Result<()> {
    let params = ParamsFile::load(&args.params)?;
    let average = params.average_vector()?;
    match args.mode.as_str() {
        "image" => {
            if params.kind != ParamKind::Duplicator {
                bail!("image augmentation requires duplicator parameters");
            }
            let img = SignatureImage::read_png(&args.input)?;
            let config = DuplicatorConfig {
                variability: average,
                passthrough: params.passthrough.clone().into_iter().collect(),
                external: args.external.clone().map(|exe| ExternalDuplicator { exe }),
            };
            std::fs::create_dir_all(&args.out)?;
            let mut rng = stream_rng(args.seed, 0);
            let duplicates = duplicate(&img, &config, args.count, &mut rng)?;
            for (i, dup) in duplicates.iter().enumerate() {
                dup.write_png(&args.out.join(format!("dup_{i:03}.png")))?;
            }
            record::write(&args.out, command)?;
            println!("wrote {} duplicates to {}", args.count, args.out.display());
        }
        "feature" => {
            if params.kind != ParamKind::Gaussian {
                bail!("feature augmentation requires gaussian parameters");
            }
            let store = VectorStore::load(&args.input)?;
            let mut out = VectorStore::default();
            let mut next_id: std::collections::BTreeMap<u32, u32> = store
                .by_writer()
                .iter()
                .map(|(&w, records)| {
                    (
                        w,
                        records.iter().map(|r| r.sample_id).max().unwrap_or(0) + 1,
                    )
                })
                .collect();
            for (index, record_in) in store.records.iter().enumerate() {
                let mut rng = stream_rng(args.seed, index as u64);
                let synthetic = perturb_features(
                    &record_in.vector,
                    &average,
                    args.count,
                    PerturbMode::Smooth,
                    &mut rng,
                )?;
                for vector in synthetic {
                    let id = next_id.entry(record_in.writer_id).or_insert(0);
                    out.push(VectorRecord {
                        writer_id: record_in.writer_id,
                        sample_id: *id,
                        label: record_in.label,
                        vector,
                    })?;
                    *id += 1;
                }
            }
            if args.binary {
                out.save_binary(&args.out)?;
            } else {
                out.save_text(&args.out)?;
            }
            record::write(&args.out, command)?;
            println!(
                "wrote {} synthetic vectors to {}",
                out.records.len(),
                args.out.display()
            );
        }
        other => bail!("--mode must be image or feature, got `{other}`"),
    }
    Ok(())
}

fn sweep_sigma(args: crate::SweepSigmaArgs, command: &Command) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let grid = parse_sigma_grid(&args.sigma_grid)?;
    let (prepared, _) = load_prepared(args.manifest.as_deref(), args.features.as_deref(), false)?;

    let rows: Vec<sigvar::Result<Vec<(u32, f64, f64)>>> = prepared
        .writers
        .par_iter()
        .map(|writer| {
            let vectors: Vec<_> = writer.genuine.iter().map(|s| s.vector.clone()).collect();
            let wseed = mix_seed(args.seed, writer.id as u64);
            grid.iter()
                .enumerate()
                .map(|(i, &sigma)| {
                    let params = sigvar::swarm::ParameterVector::gaussian(sigma, sigma)?;
                    let mut rng = stream_rng(wseed, i as u64);
                    let delta = eval_params_feature(
                        &params,
                        &vectors,
                        args.n_per,
                        PerturbMode::Smooth,
                        &mut rng,
                    )?;
                    Ok((writer.id, sigma, delta))
                })
                .collect()
        })
        .collect();

    let mut csv = String::from("writer,sigma,abs_silhouette\n");
    for writer_rows in rows {
        for (writer, sigma, delta) in writer_rows? {
            csv.push_str(&format!("{writer},{sigma},{delta}\n"));
        }
    }
    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.out, csv)?;
    record::write(&args.out, command)?;
    println!(
        "wrote {} grid points x {} writers to {}",
        grid.len(),
        prepared.writers.len(),
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: crate::EvaluateArgs, command: &Command) -> anyhow::Result<()> {
    let params_file = args.params.as_deref().map(ParamsFile::load).transpose()?;
    let image_mode = params_file
        .as_ref()
        .is_some_and(|p| p.kind == ParamKind::Duplicator);
    let (prepared, handle) = load_prepared(
        Some(args.manifest.as_path()),
        args.features.as_deref(),
        image_mode,
    )?;

    let cfg = ProtocolConfig {
        train_genuine: parse_range_list(&args.r)?,
        duplicates: parse_range_list(&args.d)?,
        repetitions: args.reps,
        test_genuine: args.test_genuine,
        test_random: args.test_random,
        test_skilled: args.test_skilled,
        negatives_per_writer: args.neg_per_writer,
        augment_negatives: !args.no_augment_negatives,
        gamma: args.gamma,
        seed: args.seed,
    };

    let average = params_file
        .as_ref()
        .map(|p| p.average_vector())
        .transpose()?;
    let dup_config = match (&params_file, &average) {
        (Some(p), Some(avg)) if p.kind == ParamKind::Duplicator => Some(DuplicatorConfig {
            variability: avg.clone(),
            passthrough: p.passthrough.clone().into_iter().collect(),
            external: None,
        }),
        _ => None,
    };
    let canvas = handle.as_ref().map(|h| h.canvas).unwrap_or((0, 0));
    let augmenter = match (&average, &dup_config) {
        (None, _) => Augmenter::None,
        (Some(_), Some(config)) => Augmenter::Image {
            config,
            extractor: &GridDescriptor,
            canvas,
        },
        (Some(params), None) => Augmenter::Feature {
            params,
            mode: PerturbMode::Smooth,
        },
    };

    let report = run_protocol(&cfg, &prepared, &augmenter)?;
    write_report(&args.out, &report)?;
    record::write(&args.out, command)?;
    for s in &report.summary {
        println!(
            "r={} d={}: mean EER {:.4} (std {:.4}), per-writer {:.4}",
            s.r, s.d, s.mean_eer, s.std_eer, s.mean_per_writer_eer
        );
    }
    Ok(())
}

fn write_report(dir: &Path, report: &EerReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("eer.csv"), report.to_csv())?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    std::fs::write(dir.join("eer_vs_d.svg"), report.to_svg())?;
    Ok(())
}

fn validate_features(args: crate::ValidateFeaturesArgs, command: &Command) -> anyhow::Result<()> {
    let params_a = ParamsFile::load(&args.params_a)?;
    let params_b = ParamsFile::load(&args.params_b)?;
    let need_images =
        params_a.kind == ParamKind::Duplicator || params_b.kind == ParamKind::Duplicator;
    let (prepared, handle) = load_prepared(
        Some(args.manifest.as_path()),
        args.features.as_deref(),
        need_images,
    )?;
    let canvas = handle.as_ref().map(|h| h.canvas).unwrap_or((0, 0));

    let eval_side = |params: &ParamsFile,
                     writer: &sigvar::ingest::PreparedWriter,
                     stream: u64|
     -> anyhow::Result<f64> {
        let average = params.average_vector()?;
        let mut rng = stream_rng(mix_seed(args.seed, writer.id as u64), stream);
        let delta = match params.kind {
            ParamKind::Gaussian => {
                let vectors: Vec<_> = writer.genuine.iter().map(|s| s.vector.clone()).collect();
                eval_params_feature(
                    &average,
                    &vectors,
                    args.n_per,
                    PerturbMode::Smooth,
                    &mut rng,
                )?
            }
            ParamKind::Duplicator => {
                let images: Vec<_> = writer
                    .genuine
                    .iter()
                    .filter_map(|s| s.raw.clone())
                    .collect();
                eval_params_image(
                    &average,
                    &images,
                    args.n_per,
                    &GridDescriptor,
                    canvas,
                    &mut rng,
                )?
            }
        };
        Ok(delta)
    };

    let mut csv = String::from("writer,delta_a,delta_b\n");
    let mut deltas_a = Vec::new();
    let mut deltas_b = Vec::new();
    for writer in &prepared.writers {
        let a = eval_side(&params_a, writer, 0)?;
        let b = eval_side(&params_b, writer, 1)?;
        csv.push_str(&format!("{},{a},{b}\n", writer.id));
        deltas_a.push(a);
        deltas_b.push(b);
    }
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (mean, std)
    };
    let (mean_a, std_a) = stats(&deltas_a);
    let (mean_b, std_b) = stats(&deltas_b);
    println!(
        "params A ({}): |delta| = {mean_a:.4} +/- {std_a:.4}",
        args.params_a.display()
    );
    println!(
        "params B ({}): |delta| = {mean_b:.4} +/- {std_b:.4}",
        args.params_b.display()
    );
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(out, csv)?;
        record::write(out, command)?;
    }
    Ok(())
}

fn replay(args: crate::ReplayArgs) -> anyhow::Result<()> {
    let mut command = record::load(&args.run)?;
    if let Some(out) = args.out {
        set_out(&mut command, out)?;
    }
    if args.common.jobs.is_some() {
        set_jobs(&mut command, args.common.jobs);
    }
    dispatch(command)
}

fn set_out(command: &mut Command, out: PathBuf) -> anyhow::Result<()> {
    match command {
        Command::GenDataset(a) => a.out = out,
        Command::Extract(a) => a.out = out,
        Command::Optimize(a) => a.out = out,
        Command::Augment(a) => a.out = out,
        Command::SweepSigma(a) => a.out = out,
        Command::Evaluate(a) => a.out = out,
        Command::ValidateFeatures(a) => a.out = Some(out),
        Command::InitParams(a) => a.out = out,
        Command::Replay(_) => bail!("a replay record cannot contain another replay"),
    }
    Ok(())
}

fn set_jobs(command: &mut Command, jobs: Option<usize>) {
    match command {
        Command::GenDataset(a) => a.common.jobs = jobs,
        Command::Extract(a) => a.common.jobs = jobs,
        Command::Optimize(a) => a.common.jobs = jobs,
        Command::Augment(a) => a.common.jobs = jobs,
        Command::SweepSigma(a) => a.common.jobs = jobs,
        Command::Evaluate(a) => a.common.jobs = jobs,
        Command::ValidateFeatures(a) => a.common.jobs = jobs,
        Command::InitParams(a) => a.common.jobs = jobs,
        Command::Replay(a) => a.common.jobs = jobs,
    }
}

fn init_params(args: crate::InitParamsArgs, command: &Command) -> anyhow::Result<()> {
    let file = match args.preset.as_str() {
        "default-duplicator" => {
            let config = defaults::default_duplicator_config();
            ParamsFile::from_vector(&config.variability, &config.passthrough)
        }
        "optimized-duplicator" => ParamsFile::from_vector(
            &defaults::optimized_duplicator(),
            &defaults::default_passthrough(),
        ),
        "optimized-gaussian" => ParamsFile::from_vector(&defaults::optimized_gaussian(), &[]),
        other => bail!(
            "unknown preset `{other}`; expected default-duplicator, optimized-duplicator, or optimized-gaussian"
        ),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    file.save(&args.out)?;
    record::write(&args.out, command)?;
    println!("wrote {} preset to {}", args.preset, args.out.display());
    Ok(())
}

//! `pheno`: command-line front end to the phenotyping stages.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use phenopipe::annotate::{self, AnnotationSession, SessionConfig};
use phenopipe::labels::MorphologyLabel;
use phenopipe::ml::{self, EnsembleModel, MultiOutputModel};
use phenopipe::morphology;
use phenopipe::pipeline::{self, OcrSpec, PipelineConfig, PredictorSpec};
use phenopipe::sheet::{info_summary, ResultsSheet};
use phenopipe::{leaf_locator, treatment, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "pheno", version, about = "Phenotyping of tagged poplar leaf photos")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run manifest supplying defaults for unset options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// OCR the tag of every image into a sheet.
    ReadLabels {
        #[arg(long)]
        images: PathBuf,
        /// stub:DIR or onnx:REC[,DET] (default: stub sidecars beside the images)
        #[arg(long)]
        ocr: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Per-image ladder log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Find leaf candidates.
    Locate {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write candidate overlays here.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Predict masks at candidate midpoints and write composite rasters.
    Segment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        masks_dir: PathBuf,
        /// regiongrow[:TOL] or model:ENCODER,DECODER
        #[arg(long)]
        predictor: Option<String>,
    },
    /// Isolate every masked leaf into `<stem>_<id>.png`.
    Crops {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve the labeling API.
    Annotate {
        #[arg(long)]
        crops: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "default")]
        annotator: String,
        /// Built UI assets served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Train a model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Classify crops and write per-image morphology into a sheet.
    Classify {
        #[arg(long)]
        morph_model: PathBuf,
        #[arg(long)]
        suit_model: Option<PathBuf>,
        #[arg(long)]
        crops: PathBuf,
        #[arg(long)]
        sheet: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-leaf verdicts (CSV).
        #[arg(long)]
        leaves: Option<PathBuf>,
    },
    /// Fill unread treatments from morphology.
    PredictTreatment {
        #[arg(long)]
        sheet: PathBuf,
        /// Trained on the sheet's read rows when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode EXIF, export GPS and write the leaf-size feasibility report.
    Exif {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a stage against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Non-null counts per sheet column.
    Info {
        #[arg(long)]
        sheet: PathBuf,
    },
    /// Run every stage.
    RunAll(RunAllArgs),
}

#[derive(Args, Debug)]
struct TrainOpts {
    #[arg(long)]
    out: PathBuf,
    /// Hold out this fraction, report test accuracy, and save the model fit
    /// on the remainder.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum TrainCommand {
    Suitability {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        crops: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    Morphology {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        crops: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    Treatment {
        #[arg(long)]
        sheet: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Field-level OCR accuracy with and without nulls.
    Ocr {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunAllArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ocr: Option<String>,
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    suit_model: Option<PathBuf>,
    #[arg(long)]
    morph_model: Option<PathBuf>,
    #[arg(long)]
    treatment_model: Option<PathBuf>,
}

struct Ctx {
    base: PipelineConfig,
    seed: u64,
}

impl Ctx {
    fn ocr(&self, flag: Option<&str>, images: &Path) -> Result<OcrSpec> {
        match flag {
            Some(s) => OcrSpec::parse(s),
            None if self.has_config() => Ok(self.base.ocr.clone()),
            None => Ok(OcrSpec::Stub { dir: images.into() }),
        }
    }

    fn predictor(&self, flag: Option<&str>) -> Result<PredictorSpec> {
        flag.map_or_else(|| Ok(self.base.predictor.clone()), PredictorSpec::parse)
    }

    fn has_config(&self) -> bool {
        self.base != PipelineConfig::default()
    }
}

fn print_split_accuracy(truth: &[usize], pred: &[usize], classes: &[String], name: &str) -> Result<()> {
    let m = ml::confusion_matrix(truth, pred, classes.len())?;
    println!("{name}: test accuracy {:.4}", ml::matrix_accuracy(&m));
    print!("{}", ml::render_confusion(&m, classes));
    Ok(())
}

fn split<T: Clone>(samples: &[T], frac: Option<f64>, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    match frac {
        None => Ok((samples.to_vec(), Vec::new())),
        Some(f) => {
            let (tr, te) = ml::split_indices(samples.len(), f, seed)?;
            let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
            Ok((pick(&tr), pick(&te)))
        }
    }
}

fn train(cmd: TrainCommand, seed: u64) -> Result<()> {
    match cmd {
        TrainCommand::Suitability { labels, crops, opts } => {
            let store = annotate::read_store(&labels)?;
            let samples = pipeline::suitability_samples(&store, &crops)?;
            let (tr, te) = split(&samples, opts.test_fraction, seed)?;
            let model = morphology::train_suitability(&tr, None, seed)?;
            if !te.is_empty() {
                let enc = |g: bool| model.encoder.encode(if g { morphology::GOOD } else { morphology::BAD });
                let truth = te.iter().map(|(_, g)| enc(*g)).collect::<Result<Vec<_>>>()?;
                let pred = te
                    .iter()
                    .map(|(f, _)| model.predict(&f.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                print_split_accuracy(&truth, &pred, model.encoder.classes(), "suitability")?;
            }
            model.save(&opts.out)?;
            println!("trained suitability on {} leaves -> {}", tr.len(), opts.out.display());
        }
        TrainCommand::Morphology { labels, crops, opts } => {
            let store = annotate::read_store(&labels)?;
            let samples = pipeline::morphology_samples(&store, &crops)?;
            let (tr, te) = split(&samples, opts.test_fraction, seed)?;
            let model = morphology::train_morphology(&tr, None, seed)?;
            if !te.is_empty() {
                let preds: Vec<MorphologyLabel> = te
                    .iter()
                    .map(|(f, _)| morphology::classify_morphology(f, &model))
                    .collect::<Result<_>>()?;
                let mut mean = 0.0;
                for (t, target) in model.targets.iter().enumerate() {
                    let idx = |m: &MorphologyLabel| target.model.encoder.encode(m.as_strs()[t]);
                    let truth = te.iter().map(|(_, m)| idx(m)).collect::<Result<Vec<_>>>();
                    let pred = preds.iter().map(idx).collect::<Result<Vec<_>>>();
                    match (truth, pred) {
                        (Ok(truth), Ok(pred)) => {
                            let m = ml::confusion_matrix(&truth, &pred, target.model.encoder.len())?;
                            mean += ml::matrix_accuracy(&m);
                            print_split_accuracy(&truth, &pred, target.model.encoder.classes(), &target.name)?;
                        }
                        _ => println!("{}: test set has classes unseen in training", target.name),
                    }
                }
                println!("mean accuracy {:.4}", mean / model.targets.len() as f64);
            }
            model.save(&opts.out)?;
            println!("trained morphology on {} leaves -> {}", tr.len(), opts.out.display());
        }
        TrainCommand::Treatment { sheet, opts } => {
            let sheet = ResultsSheet::read(&sheet)?;
            let usable: Vec<_> = sheet
                .rows
                .iter()
                .filter(|r| r.treatment.is_some() && r.morphology().is_some())
                .cloned()
                .collect();
            let (tr, te) = split(&usable, opts.test_fraction, seed)?;
            let model = treatment::train(&ResultsSheet::new(tr.clone())?, None, seed)?;
            if !te.is_empty() {
                let enc = |r: &phenopipe::sheet::SheetRow| model.encoder.encode(r.treatment.expect("filtered").as_str());
                let truth = te.iter().map(enc).collect::<Result<Vec<_>>>()?;
                let pred = te
                    .iter()
                    .map(|r| model.predict(&treatment::encode(&r.morphology().expect("filtered"))))
                    .collect::<Result<Vec<_>>>()?;
                print_split_accuracy(&truth, &pred, model.encoder.classes(), "treatment")?;
            }
            model.save(&opts.out)?;
            println!("trained treatment on {} rows -> {}", tr.len(), opts.out.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(base.seed),
        base,
    };
    match cli.command {
        Command::ReadLabels { images, ocr, out, log } => {
            let spec = ctx.ocr(ocr.as_deref(), &images)?;
            let paths = pipeline::list_images(&images)?;
            let source = spec.build()?;
            let (sheet, results) = pipeline::read_labels_stage(&paths, source.as_ref(), &ctx.base.augment)?;
            sheet.write(&out)?;
            if let Some(log) = log {
                pipeline::write_jsonl(&log, &results)?;
            }
            let read = sheet.rows.iter().filter(|r| r.label().any_field()).count();
            println!("read {read} of {} labels -> {}", sheet.len(), out.display());
        }
        Command::Locate { images, out, debug_dir } => {
            let paths = pipeline::list_images(&images)?;
            let found = pipeline::locate_stage(&paths, &ctx.base.locator)?;
            pipeline::write_jsonl(&out, &found)?;
            if let Some(dir) = debug_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::InvalidInput(e.to_string()))?;
                for (path, ic) in paths.iter().zip(&found) {
                    let img = phenopipe::ocr::load_rgb(path)?;
                    let target = dir.join(format!("{}.png", path.file_stem().unwrap_or_default().to_string_lossy()));
                    leaf_locator::draw_candidates(&img, &ic.candidates)
                        .save(&target)
                        .map_err(|e| Error::InvalidInput(format!("{}: {e}", target.display())))?;
                }
            }
            let n: usize = found.iter().map(|c| c.candidates.len()).sum();
            println!("{n} candidates in {} images -> {}", found.len(), out.display());
        }
        Command::Segment {
            images,
            candidates,
            masks_dir,
            predictor,
        } => {
            let cands: Vec<pipeline::ImageCandidates> = pipeline::read_jsonl(&candidates)?;
            let predictor = ctx.predictor(predictor.as_deref())?.build()?;
            let segs = pipeline::segment_stage(&images, &cands, predictor.as_ref(), ctx.seed, &masks_dir)?;
            pipeline::write_jsonl(&masks_dir.join(pipeline::artifacts::SEGMENTS), &segs)?;
            let n: usize = segs.iter().map(|s| s.leaf_ids.len()).sum();
            println!("{n} masks in {} images -> {}", segs.len(), masks_dir.display());
        }
        Command::Crops {
            images,
            masks_dir,
            out_dir,
        } => {
            let ids = pipeline::crops_stage(&images, &masks_dir, &out_dir)?;
            println!("{} crops -> {}", ids.len(), out_dir.display());
        }
        Command::Annotate {
            crops,
            store,
            port,
            host,
            annotator,
            ui,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::InvalidInput(format!("address {host}:{port}: {e}")))?;
            let mut cfg = SessionConfig::new(crops, store);
            cfg.seed = ctx.seed;
            cfg.annotator = annotator;
            cfg.ui_dir = ui;
            let session = Arc::new(AnnotationSession::open(cfg)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Backend(e.to_string()))?;
            println!("serving http://{addr}");
            rt.block_on(annotate::serve(session, addr))?;
        }
        Command::Train(cmd) => train(cmd, ctx.seed)?,
        Command::Classify {
            morph_model,
            suit_model,
            crops,
            sheet,
            out,
            leaves,
        } => {
            let morph = MultiOutputModel::load(&morph_model)?;
            let suit = suit_model.as_deref().map(EnsembleModel::load).transpose()?;
            let sheet = ResultsSheet::read(&sheet)?;
            let (classified, preds) = pipeline::classify_stage(&sheet, &crops, suit.as_ref(), &morph)?;
            classified.write(&out)?;
            if let Some(path) = leaves {
                std::fs::write(&path, pipeline::leaf_predictions_csv(&preds)?)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            }
            let with = classified.rows.iter().filter(|r| r.morphology().is_some()).count();
            println!("{} leaves classified, {with} images with morphology -> {}", preds.len(), out.display());
        }
        Command::PredictTreatment { sheet, model, out } => {
            let sheet = ResultsSheet::read(&sheet)?;
            let model = model.as_deref().map(EnsembleModel::load).transpose()?;
            let (filled, _) = pipeline::predict_treatment_stage(&sheet, model.as_ref(), ctx.seed)?;
            filled.write(&out)?;
            let n = filled
                .rows
                .iter()
                .filter(|r| r.treatment_source == Some(phenopipe::sheet::TreatmentSource::Predicted))
                .count();
            println!("{n} treatments predicted -> {}", out.display());
        }
        Command::Exif { images, out_dir } => {
            let paths = pipeline::list_images(&images)?;
            let outputs = pipeline::exif_stage(&paths)?;
            pipeline::write_exif_outputs(&outputs, &out_dir)?;
            print!("{}", phenopipe::exif::render_report(&outputs.report, &outputs.gps));
        }
        Command::Eval(EvalCommand::Ocr { truth, pred }) => {
            let e = pipeline::eval_ocr(&ResultsSheet::read(&truth)?, &ResultsSheet::read(&pred)?)?;
            println!("accuracy with nulls:    {:.4}", e.accuracy_with_nulls);
            println!("accuracy without nulls: {:.4}", e.accuracy_without_nulls);
            println!("fraction read:          {:.4}", e.fraction_read);
        }
        Command::Info { sheet } => print!("{}", info_summary(&ResultsSheet::read(&sheet)?)),
        Command::RunAll(a) => {
            let mut cfg = ctx.base.clone();
            if let Some(images) = a.images {
                if a.ocr.is_none() && !ctx.has_config() {
                    cfg.ocr = OcrSpec::Stub { dir: images.clone() };
                }
                cfg.images = images;
            }
            if let Some(out) = a.out {
                cfg.out_dir = out;
            }
            if let Some(o) = a.ocr {
                cfg.ocr = OcrSpec::parse(&o)?;
            }
            cfg.predictor = ctx.predictor(a.predictor.as_deref())?;
            cfg.seed = ctx.seed;
            cfg.suitability_model = a.suit_model.or(cfg.suitability_model);
            cfg.morphology_model = a.morph_model.or(cfg.morphology_model);
            cfg.treatment_model = a.treatment_model.or(cfg.treatment_model);
            let (_, summary) = pipeline::run_all(&cfg)?;
            println!(
                "{} images, {} labels read, {} candidates, {} masks, {} crops, {} treatments predicted, {} gps points -> {}",
                summary.images,
                summary.labels_read,
                summary.candidates,
                summary.masks,
                summary.crops,
                summary.treatments_predicted,
                summary.gps_points,
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

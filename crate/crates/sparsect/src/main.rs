//! Command-line front end. Every subcommand is driven by one JSON
//! experiment config (desk-scale defaults apply when none is given) and
//! exits 0 on success, 1 on configuration errors, 2 on runtime failures.
//! SPARSECT_THREADS caps worker parallelism.

use std::path::PathBuf;
use std::process;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use sparsect::core::{export_pgm, save_raw, Rng};
use sparsect::models::{
    load_detector, load_unet, save_detector, save_unet, train_detector, train_unet,
    write_log_csv, Detector, DetectorConfig, UNet, UNetConfig,
};
use sparsect::nn::LrSchedule;
use sparsect::phantom::{shepp_logan, LabeledSample};
use sparsect::pipeline::{
    detector_artifact, load_tv_weights, make_splits, recon_ladder, reference_recon,
    run_detection_experiment, run_quality_experiment, run_saliency_experiment,
    run_timing_harness, save_tv_weights, select_tv_weights, tv_weights_artifact, unet_artifact,
    ExperimentConfig, Method, SplitManifest, TvSelection,
};
use sparsect::projector::{load_sinogram, radon_forward, save_sinogram, ScanGeometry};
use sparsect::{fbp, Result};

#[derive(Parser)]
#[command(name = "sparsect", version, about = "Desk-scale sparse-view CT pipeline")]
struct Cli {
    /// JSON experiment config; built-in desk defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the dataset splits and write the phantom manifest.
    Gen,
    /// Project the Shepp-Logan phantom into a sinogram file.
    Project {
        /// View count; defaults to the config's dense reference.
        #[arg(long)]
        views: Option<usize>,
        /// Output path; defaults to <output_dir>/sinogram.bin.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Reconstruct a stored sinogram with filtered backprojection.
    Recon {
        #[arg(long)]
        input: PathBuf,
        /// Output path; defaults to <output_dir>/recon.bin.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep TV weights at every ladder level and store the selections.
    TvSweep,
    /// Train the artifact-reduction U-Net at the sparsest level.
    TrainUnet,
    /// Train the lesion detector on full-view reconstructions.
    TrainDetector,
    /// Run the reconstruction quality experiment.
    EvalQuality,
    /// Run the lesion detection experiment.
    EvalDetect,
    /// Compute saliency ratios at the sparsest level.
    Saliency {
        /// Number of lesioned test phantoms to use.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Run the timing harness.
    Time,
}

fn main() {
    process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("sparsect: {msg}");
        return 1;
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sparsect: config: {e}");
            return 1;
        }
    };
    match dispatch(cli.cmd, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sparsect: {e}");
            2
        }
    }
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("SPARSECT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("SPARSECT_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("SPARSECT_THREADS must be at least 1".to_string());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: Cmd, cfg: &ExperimentConfig) -> Result<()> {
    match cmd {
        Cmd::Gen => gen(cfg),
        Cmd::Project { views, output } => project(cfg, views, output),
        Cmd::Recon { input, output } => recon(cfg, &input, output),
        Cmd::TvSweep => tv_sweep(cfg),
        Cmd::TrainUnet => cmd_train_unet(cfg),
        Cmd::TrainDetector => cmd_train_detector(cfg),
        Cmd::EvalQuality => eval_quality(cfg),
        Cmd::EvalDetect => eval_detect(cfg),
        Cmd::Saliency { samples } => saliency(cfg, samples),
        Cmd::Time => time(cfg),
    }
}

fn gen(cfg: &ExperimentConfig) -> Result<()> {
    let splits = make_splits(cfg)?;
    let manifest = SplitManifest::new(&splits);
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(
        cfg.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(sparsect::Error::from)?,
    )?;
    if let Some(sample) = splits.test.first() {
        save_raw(&sample.image, &cfg.output_dir.join("phantom.bin"))?;
        export_pgm(&sample.image, (0.0, 1.0), &cfg.output_dir.join("phantom.pgm"))?;
    }
    println!(
        "generated {} train / {} val / {} test phantoms at {} px",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        cfg.phantom_size
    );
    Ok(())
}

fn project(cfg: &ExperimentConfig, views: Option<usize>, output: Option<PathBuf>) -> Result<()> {
    let views = views.unwrap_or(cfg.reference_views);
    let image = shepp_logan(cfg.phantom_size)?;
    let geo = ScanGeometry::parallel(views, cfg.phantom_size)?;
    let sino = radon_forward(&image, &geo)?;
    let path = match output {
        Some(p) => p,
        None => {
            std::fs::create_dir_all(&cfg.output_dir)?;
            cfg.output_dir.join("sinogram.bin")
        }
    };
    save_sinogram(&sino, &path)?;
    println!("projected {views} views of the {0}x{0} phantom to {1}", cfg.phantom_size, path.display());
    Ok(())
}

fn recon(cfg: &ExperimentConfig, input: &PathBuf, output: Option<PathBuf>) -> Result<()> {
    let sino = load_sinogram(input)?;
    let n = sino.geometry.n_detectors;
    let image = fbp::reconstruct(&sino, n)?;
    let path = match output {
        Some(p) => p,
        None => {
            std::fs::create_dir_all(&cfg.output_dir)?;
            cfg.output_dir.join("recon.bin")
        }
    };
    save_raw(&image, &path)?;
    export_pgm(&image, (0.0, 1.0), &path.with_extension("pgm"))?;
    println!("reconstructed {n}x{n} image from {} views to {}", sino.geometry.n_views, path.display());
    Ok(())
}

fn tv_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let splits = make_splits(cfg)?;
    let selections = select_tv_weights(cfg, &splits.train)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    save_tv_weights(&selections, &tv_weights_artifact(cfg))?;
    for s in &selections {
        println!("views {:>5}: weight {}", s.views, s.weight);
    }
    Ok(())
}

fn cmd_train_unet(cfg: &ExperimentConfig) -> Result<()> {
    let splits = make_splits(cfg)?;
    let pairs: Vec<_> = splits
        .train
        .iter()
        .map(|s| {
            let ladder = recon_ladder(&s.image, cfg)?;
            let sparse = ladder.sparse.last().expect("ladder is non-empty").clone();
            Ok((sparse, ladder.reference))
        })
        .collect::<Result<_>>()?;
    let ucfg = UNetConfig::new(cfg.phantom_size, cfg.unet.base_channels, cfg.unet.depth);
    let mut rng = Rng::derive(cfg.seed, 5);
    let mut net = UNet::new(ucfg, &mut rng)?;
    net.identity_init();
    let schedule = LrSchedule::reciprocal(cfg.unet.lr)?;
    let log = train_unet(&mut net, &pairs, cfg.unet.epochs, cfg.unet.batch, &schedule, &mut rng)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    save_unet(&net, &unet_artifact(cfg))?;
    write_log_csv(&log, &cfg.output_dir.join("unet_log.csv"))?;
    let last = log.last().expect("at least one epoch");
    println!(
        "trained U-Net at {} views for {} epochs, final loss {:.6}",
        cfg.sparsest_views(),
        log.len(),
        last.train_loss
    );
    Ok(())
}

fn cmd_train_detector(cfg: &ExperimentConfig) -> Result<()> {
    let splits = make_splits(cfg)?;
    let to_recon = |samples: &[LabeledSample]| -> Result<Vec<LabeledSample>> {
        samples
            .iter()
            .map(|s| {
                Ok(LabeledSample {
                    image: reference_recon(&s.image, cfg)?,
                    skull_mask: s.skull_mask.clone(),
                    lesion_mask: s.lesion_mask.clone(),
                    label: s.label,
                    seed: s.seed,
                })
            })
            .collect()
    };
    let train = to_recon(&splits.train)?;
    let val = to_recon(&splits.val)?;
    let dcfg = DetectorConfig {
        input_size: cfg.phantom_size,
        channels: cfg.detector.channels.clone(),
    };
    let mut rng = Rng::derive(cfg.seed, 6);
    let mut net = Detector::new(dcfg, &mut rng)?;
    let outcome = train_detector(
        &mut net,
        &train,
        &val,
        cfg.detector.epochs,
        cfg.detector.batch,
        &mut rng,
    )?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    save_detector(&net, &detector_artifact(cfg))?;
    write_log_csv(&outcome.log, &cfg.output_dir.join("detector_log.csv"))?;
    println!(
        "trained detector on {} full-view reconstructions, best epoch {}",
        train.len(),
        outcome.best_epoch
    );
    Ok(())
}

/// Load the swept weights if the artifact exists; the runners sweep on
/// their own otherwise.
fn stored_tv_weights(cfg: &ExperimentConfig) -> Option<Vec<TvSelection>> {
    if !cfg.has_method(Method::Tv) {
        return None;
    }
    load_tv_weights(&tv_weights_artifact(cfg)).ok()
}

fn stored_unet(cfg: &ExperimentConfig) -> Result<Option<UNet>> {
    if !cfg.has_method(Method::Unet) {
        return Ok(None);
    }
    Ok(Some(load_unet(&unet_artifact(cfg))?))
}

fn eval_quality(cfg: &ExperimentConfig) -> Result<()> {
    let unet = stored_unet(cfg)?;
    let weights = stored_tv_weights(cfg);
    let report = run_quality_experiment(cfg, unet.as_ref(), weights.as_deref())?;
    println!(
        "quality experiment: {} rows, {} tests -> {}",
        report.rows.len(),
        report.tests.len(),
        cfg.output_dir.join("quality.json").display()
    );
    Ok(())
}

fn eval_detect(cfg: &ExperimentConfig) -> Result<()> {
    let detector = load_detector(&detector_artifact(cfg))?;
    let unet = stored_unet(cfg)?;
    let weights = stored_tv_weights(cfg);
    let report = run_detection_experiment(cfg, &detector, unet.as_ref(), weights.as_deref())?;
    println!(
        "detection experiment: {} AUC cells, {} comparisons -> {}",
        report.auc.len(),
        report.delong.len(),
        cfg.output_dir.join("detect.json").display()
    );
    Ok(())
}

fn saliency(cfg: &ExperimentConfig, samples: usize) -> Result<()> {
    let detector = load_detector(&detector_artifact(cfg))?;
    let unet = load_unet(&unet_artifact(cfg))?;
    let report = run_saliency_experiment(cfg, &detector, &unet, samples)?;
    println!(
        "saliency at {} views over {} phantoms: fbp {:.4}, unet {:.4}, p {:.4}",
        report.views, report.n, report.mean_fbp, report.mean_unet, report.p
    );
    Ok(())
}

fn time(cfg: &ExperimentConfig) -> Result<()> {
    let unet = stored_unet(cfg)?;
    let weights = stored_tv_weights(cfg);
    let report = run_timing_harness(cfg, unet.as_ref(), weights.as_deref())?;
    for r in &report.rows {
        println!(
            "views {:>5} {:>4}: {:.4} s/image ({:.4}, {:.4})",
            r.views,
            r.method.name(),
            r.mean_s,
            r.ci_lo,
            r.ci_hi
        );
    }
    Ok(())
}

//! Experiment runner behavior at miniature scale: report shapes, the
//! self-reference sentinels, schema strictness, internal consistency of
//! stored scores, and reproducibility.

use sparsect::core::Rng;
use sparsect::models::{train_detector, train_unet, Detector, DetectorConfig, UNet, UNetConfig};
use sparsect::nn::LrSchedule;
use sparsect::pipeline::{
    make_splits, recon_ladder, run_detection_experiment, run_quality_experiment,
    run_saliency_experiment, run_timing_harness, DetectionReport, ExperimentConfig, Method,
    QualityReport, SaliencyReport, TimingReport,
};
use sparsect::stats::delong_analysis;

fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.phantom_size = 32;
    cfg.reference_views = 128;
    cfg.view_ladder = vec![32, 8];
    cfg.methods = vec![Method::Fbp, Method::Tv];
    cfg.n_train = 12;
    cfg.n_val = 6;
    cfg.n_test = 12;
    cfg.seed = 21;
    cfg.tv_grid.lo = 0.05;
    cfg.tv_grid.hi = 0.2;
    cfg.tv_grid.step = 0.05;
    cfg.tv_sweep_pairs = 6;
    cfg.unet = sparsect::pipeline::UnetTrainConfig {
        base_channels: 4,
        depth: 2,
        epochs: 2,
        batch: 4,
        lr: 1e-3,
    };
    cfg.detector.channels = vec![4, 8];
    cfg.detector.epochs = 2;
    cfg.detector.batch = 6;
    cfg.timing.images = 1;
    cfg.timing.repeats = 1;
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn quality_report_has_anchor_sentinels_and_a_strict_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let report = run_quality_experiment(&cfg, None, None).unwrap();

    // One anchor row plus ladder x methods.
    assert_eq!(report.rows.len(), 1 + 2 * 2);
    let anchor = report.row(128, Method::Fbp).unwrap();
    assert_eq!(anchor.ssim.mean, 1.0);
    assert_eq!(anchor.ssim.ci_lo, 1.0);
    assert_eq!(anchor.ssim.ci_hi, 1.0);
    assert!(anchor.psnr.mean.is_infinite() && anchor.psnr.ci_hi.is_infinite());
    assert!(anchor.snr.mean.is_infinite());

    // Three metrics per method pair per ladder level.
    assert_eq!(report.tests.len(), 2 * 3);
    for t in &report.tests {
        assert!(t.p >= 0.0 && t.p <= 1.0);
        assert!((t.alpha - 0.001 / 3.0).abs() < 1e-15);
    }

    // Sweep selections rode along for the tv method.
    assert_eq!(report.tv_weights.len(), 2);
    for sel in &report.tv_weights {
        assert_eq!(sel.curve.len(), 4);
    }

    // Emitted JSON re-parses strictly and identically.
    let text = std::fs::read_to_string(dir.path().join("quality.json")).unwrap();
    let back = QualityReport::from_json_str(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), report.to_json().unwrap());
    let broken = text.replacen("\"rows\"", "\"rows_\"", 1);
    assert!(QualityReport::from_json_str(&broken).is_err());

    let csv = std::fs::read_to_string(dir.path().join("quality.csv")).unwrap();
    assert!(csv.starts_with("views,method,n,ssim,"));
    assert!(csv.lines().nth(1).unwrap().contains("inf"));
    assert!(dir.path().join("quality_tests.csv").exists());
    assert!(dir.path().join("tv_weights.json").exists());
}

#[test]
fn quality_requires_a_unet_when_the_method_is_configured() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.methods = vec![Method::Fbp, Method::Unet];
    let err = run_quality_experiment(&cfg, None, None).unwrap_err();
    assert!(err.to_string().contains("U-Net"), "{err}");
}

#[test]
fn fbp_ssim_decreases_down_the_ladder_on_twenty_phantoms() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.methods = vec![Method::Fbp];
    cfg.n_train = 0;
    cfg.n_val = 0;
    cfg.n_test = 20;
    cfg.view_ladder = vec![64, 16, 4];
    let report = run_quality_experiment(&cfg, None, None).unwrap();
    let at = |v| report.row(v, Method::Fbp).unwrap().ssim.mean;
    assert!(at(64) > at(16), "64 views {} vs 16 views {}", at(64), at(16));
    assert!(at(16) > at(4), "16 views {} vs 4 views {}", at(16), at(4));
}

fn quick_detector(cfg: &ExperimentConfig) -> Detector {
    let splits = make_splits(cfg).unwrap();
    let dcfg = DetectorConfig {
        input_size: cfg.phantom_size,
        channels: cfg.detector.channels.clone(),
    };
    let mut rng = Rng::derive(cfg.seed, 6);
    let mut net = Detector::new(dcfg, &mut rng).unwrap();
    train_detector(
        &mut net,
        &splits.train,
        &splits.val,
        cfg.detector.epochs,
        cfg.detector.batch,
        &mut rng,
    )
    .unwrap();
    net
}

fn quick_unet(cfg: &ExperimentConfig) -> UNet {
    let splits = make_splits(cfg).unwrap();
    let pairs: Vec<_> = splits
        .train
        .iter()
        .map(|s| {
            let ladder = recon_ladder(&s.image, cfg).unwrap();
            (ladder.sparse.last().unwrap().clone(), ladder.reference)
        })
        .collect();
    let ucfg = UNetConfig::new(cfg.phantom_size, cfg.unet.base_channels, cfg.unet.depth);
    let mut rng = Rng::derive(cfg.seed, 5);
    let mut net = UNet::new(ucfg, &mut rng).unwrap();
    net.identity_init();
    let schedule = LrSchedule::reciprocal(cfg.unet.lr).unwrap();
    train_unet(&mut net, &pairs, cfg.unet.epochs, cfg.unet.batch, &schedule, &mut rng).unwrap();
    net
}

#[test]
fn detection_report_is_internally_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let detector = quick_detector(&cfg);
    let report = run_detection_experiment(&cfg, &detector, None, None).unwrap();

    // Full-view anchor plus ladder x methods, each with a confusion cell
    // and a ROC series.
    assert_eq!(report.auc.len(), 1 + 2 * 2);
    assert_eq!(report.confusion.len(), report.auc.len());
    assert_eq!(report.roc.len(), report.auc.len());

    // Stored scores reproduce every cell exactly.
    for cell in &report.auc {
        let again = delong_analysis(&cell.scores, &report.labels).unwrap();
        assert_eq!(again.auc.to_bits(), cell.auc.to_bits());
        assert_eq!(again.variance.to_bits(), cell.variance.to_bits());
    }

    // Two methods: two vs-full rows and one between-method row per level.
    assert_eq!(report.delong.len(), 2 * 3);
    for d in &report.delong {
        match d.family.as_str() {
            "vs_full_view" => {
                assert_eq!(d.baseline_views, cfg.reference_views);
                assert!((d.alpha - 0.001 / 6.0).abs() < 1e-15);
            }
            "between_methods" => {
                assert_eq!(d.baseline_views, d.views);
                assert!((d.alpha - 0.001 / 3.0).abs() < 1e-15);
            }
            other => panic!("unexpected family {other}"),
        }
    }

    for series in &report.roc {
        let first = &series.points[0];
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert!(first.threshold.is_infinite());
        let last = series.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    let fbp_series = report
        .auc_vs_views
        .iter()
        .find(|s| s.method == Method::Fbp)
        .unwrap();
    assert_eq!(fbp_series.points.len(), 1 + cfg.view_ladder.len());
    assert_eq!(fbp_series.points[0].0, cfg.reference_views);

    // Bit-exact JSON round trip of the stored scores.
    let text = std::fs::read_to_string(dir.path().join("detect.json")).unwrap();
    let back = DetectionReport::from_json_str(&text).unwrap();
    for (a, b) in back.auc.iter().zip(&report.auc) {
        assert_eq!(a.auc.to_bits(), b.auc.to_bits());
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    for name in [
        "detect_auc.csv",
        "detect_confusion.csv",
        "detect_delong.csv",
        "detect_roc.csv",
        "detect_auc_vs_views.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn timing_single_cell_has_a_degenerate_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.methods = vec![Method::Fbp];
    cfg.n_train = 0;
    cfg.n_val = 0;
    cfg.view_ladder = vec![8];
    let report = run_timing_harness(&cfg, None, None).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.samples.len(), 1);
    assert!(row.mean_s > 0.0);
    assert_eq!(row.mean_s, row.ci_lo);
    assert_eq!(row.mean_s, row.ci_hi);

    let text = std::fs::read_to_string(dir.path().join("timing.json")).unwrap();
    let back = TimingReport::from_json_str(&text).unwrap();
    assert_eq!(back.rows[0].samples, row.samples);
}

#[test]
fn quality_reports_are_reproducible_bit_for_bit() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut cfg_a = tiny_config(dir_a.path());
    cfg_a.methods = vec![Method::Fbp];
    cfg_a.n_train = 0;
    cfg_a.n_val = 0;
    cfg_a.n_test = 10;
    cfg_a.view_ladder = vec![16];
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = dir_b.path().to_path_buf();
    let a = run_quality_experiment(&cfg_a, None, None).unwrap();
    let b = run_quality_experiment(&cfg_b, None, None).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn saliency_experiment_pairs_methods_per_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.methods = vec![Method::Fbp, Method::Tv, Method::Unet];
    cfg.lesion_fraction = 1.0;
    cfg.n_test = 14;
    // Single-class splits cannot train the detector, so borrow one from
    // the balanced config; only input sizes must match.
    let balanced = tiny_config(dir.path());
    let detector = quick_detector(&balanced);
    let unet = quick_unet(&cfg);
    let report = run_saliency_experiment(&cfg, &detector, &unet, 12).unwrap();
    assert_eq!(report.n, 12);
    assert_eq!(report.rows.len(), 12);
    assert_eq!(report.views, 8);
    for r in &report.rows {
        assert!(r.fbp >= 0.0 && r.unet >= 0.0);
    }
    assert!(report.p > 0.0 && report.p <= 1.0);

    let text = std::fs::read_to_string(dir.path().join("saliency.json")).unwrap();
    let back = SaliencyReport::from_json_str(&text).unwrap();
    assert_eq!(back.rows.len(), report.rows.len());
    assert!(dir.path().join("saliency.csv").exists());
    assert!(dir.path().join("saliency_fbp.pgm").exists());
    assert!(dir.path().join("saliency_unet.pgm").exists());
}

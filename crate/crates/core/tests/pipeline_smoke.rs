//! End-to-end smoke test of the pipeline on a small corpus, plus an ignored
//! timing probe used to size the heavier suites.

use std::time::Instant;
use log;

use eegspeak::config::RunConfig;
use eegspeak::corpus::Condition;
use eegspeak::pipeline::prepare;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 1234;
    cfg.corpus.subjects = 2;
    cfg.corpus.trials_per_class = 5;
    cfg.model.generator.initial_channels = 64;
    cfg.model.generator.mrf_kernels = vec![3, 7];
    cfg.model.generator.mrf_dilations = vec![1, 3];
    cfg.model.discriminator.final_channels = 16;
    cfg.model.discriminator.mrf_kernels = vec![3, 7];
    cfg.model.discriminator.mrf_dilations = vec![1, 3];
    cfg.train.stage.max_epochs = 3;
    cfg.train.stage.early_stop_patience = 10;
    cfg.train.asr.train_variants = 3;
    cfg.train.asr.max_epochs = 40;
    cfg.eval.vocoder.gl_iters = 20;
    cfg.eval.shuffle_rounds = 5;
    cfg
}

#[test]
fn prepare_produces_consistent_artifacts() {
    let cfg = small_config();
    let prep = prepare(&cfg).unwrap();
    assert_eq!(prep.corpus.trials.len(), 2 * 13 * 2 * 5);
    assert_eq!(prep.embeddings.len(), prep.corpus.trials.len());
    assert_eq!(prep.bank.filters.dim(), (104, 64));
    for e in prep.embeddings.values() {
        assert_eq!(e.dim(), (104, 16));
        assert!(e.iter().all(|v| v.is_finite()));
    }
    // Ground-truth mels are normalized into [-1, 1] with 173 frames.
    for mel in prep.gt_mels.values() {
        assert_eq!(mel.dim(), (80, 173));
        assert!(mel.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
#[ignore]
fn timing_probe() {
    let mut cfg = small_config();
    cfg.train.stage.max_epochs = 2;
    let t0 = Instant::now();
    let prep = prepare(&cfg).unwrap();
    println!("prepare: {:.1}s", t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let (asr, outcome) = prep.train_asr().unwrap();
    println!(
        "asr: {:.1}s ({} epochs, val CER {:.2}%)",
        t1.elapsed().as_secs_f64(),
        outcome.epochs,
        outcome.val_cer
    );

    let t2 = Instant::now();
    let spoken = prep.run_spoken(&asr).unwrap();
    println!(
        "spoken 2 epochs: {:.1}s (rec {:.4} -> {:.4}, val cer {:.1}%)",
        t2.elapsed().as_secs_f64(),
        spoken.log[0].loss_rec,
        spoken.log.last().unwrap().loss_rec,
        spoken.log.last().unwrap().val_cer,
    );

    let t3 = Instant::now();
    let report = prep.evaluate(&spoken.model.gen, &asr).unwrap();
    println!("evaluate: {:.1}s", t3.elapsed().as_secs_f64());
    println!("{}", report.to_table());
    println!(
        "silence detection (spoken): {:.2}",
        report.silence_detection_rate(Condition::Spoken)
    );
    let gt_cer = prep.gt_voice_cer(&asr).unwrap();
    println!("GT voice CER through recognizer: {gt_cer:.2}%");
}

#[test]
#[ignore]
fn asr_probe() {
    let _ = env_logger::builder().filter_level(log::LevelFilter::Info).try_init();
    let cfg = small_config();
    let prep = prepare(&cfg).unwrap();
    let mut asr_cfg = cfg.train.asr.clone();
    asr_cfg.max_epochs = 60;
    let out = eegspeak::asr::train_asr(&prep.corpus, &cfg.dsp.mel, prep.stats, &asr_cfg, 77);
    println!("outcome: {:?}", out.map(|(_, o)| o));
}

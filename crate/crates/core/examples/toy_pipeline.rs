//! End-to-end toy run: generate data, pretrain the background, train the foreground, segment.
//!
//! Usage: `toy_pipeline [seed]`

use std::time::Instant;

use mrbm::data::toy::{generate_backgrounds, generate_test, generate_train, Backgrounds, ToyConfig};
use mrbm::eval::seg_accuracy_batch;
use mrbm::masked::{GibbsConfig, MaskedModel, OutlierConfig};
use mrbm::rng::{stream, DOMAIN_INIT};
use mrbm::train::{pretrain_background, train_foreground, OutlierSchedule, TrainConfig};
use mrbm::MixedRbmParams;

fn main() -> mrbm::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2009);
    let toy = ToyConfig {
        n_background: 5000,
        seed,
        ..ToyConfig::default()
    };
    let bgs = Backgrounds::Procedural;
    let train = generate_train(&toy, &bgs)?;
    let test = generate_test(&toy, &bgs)?;
    let patches = generate_backgrounds(&toy, &bgs)?;

    let t = Instant::now();
    let bg_cfg = TrainConfig {
        epochs: 30,
        lr_appearance: 1e-2,
        lr_bias: 1e-2,
        seed,
        ..TrainConfig::default()
    };
    let bg = pretrain_background(&patches, 50, &bg_cfg)?.params;
    println!("background trained in {:.1}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let images: Vec<Vec<f64>> = train.iter().map(|e| e.image.clone()).collect();
    let gt: Vec<Vec<bool>> = train.iter().map(|e| e.gt_mask.clone()).collect();
    let fg_cfg = TrainConfig {
        epochs: 60,
        lr_shape: 5e-2,
        lr_appearance: 1e-3,
        lr_bias: 1e-2,
        outlier_schedule: OutlierSchedule::Off,
        seed,
        ..TrainConfig::default()
    };
    let init = MixedRbmParams::init(256, 100, None, &mut stream(seed, &[DOMAIN_INIT, 2]))?;
    let fg = train_foreground(&images, &bg, init, &fg_cfg, Some(&gt))?;
    if let Some(last) = fg.log.last() {
        println!("foreground trained in {:.1}s, last epoch {last:?}", t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let model = MaskedModel::new(fg.params, bg)?;
    let test_images: Vec<Vec<f64>> = test.iter().map(|e| e.image.clone()).collect();
    let segs = model.segment_batch(&test_images, &OutlierConfig::disabled(), &GibbsConfig::new(100, 50, seed)?)?;
    let preds: Vec<Vec<bool>> = segs.into_iter().map(|s| s.hard_mask).collect();
    let truth: Vec<Vec<bool>> = test.iter().map(|e| e.gt_mask.clone()).collect();
    let report = seg_accuracy_batch(&preds, &truth)?;
    println!("pixel accuracy {:.4} over {} images in {:.1}s", report.value, test.len(), t.elapsed().as_secs_f64());
    Ok(())
}

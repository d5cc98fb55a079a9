use puffnet_core::imageio::save_png;
use puffnet_core::trainer::{load_model, Dataset};
use puffnet_core::{no_grad, synth, ModelConfig, PerceptualNet, Rng, TrainConfig, Trainer};

#[test]
fn png_dirs_to_checkpoint_to_inference() {
    let dir = tempfile::tempdir().unwrap();
    let (cdir, sdir) = (dir.path().join("content"), dir.path().join("style"));
    for (d, base) in [(&cdir, 10), (&sdir, 20)] {
        std::fs::create_dir_all(d).unwrap();
        for i in 0..2 {
            save_png(&d.join(format!("{i}.png")), &synth::image(40, 48, base + i)).unwrap();
        }
    }
    let data = Dataset::from_dirs(&cdir, &sdir).unwrap();
    assert_eq!(data.len(), (2, 2));

    let mut cfg = TrainConfig::with_iters(4);
    cfg.crop = 32;
    let mut trainer = Trainer::new(ModelConfig::default(), cfg, PerceptualNet::seeded(0)).unwrap();
    let reports = trainer.train(&data, 4, Some(dir.path()), |_| {}).unwrap();
    assert_eq!(reports.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert!(reports.iter().all(|r| r.total.is_finite()));

    let loaded = load_model(&dir.path().join("step000004.puff")).unwrap();
    let (c, s) = (synth::image(32, 32, 1), synth::image(32, 32, 2));
    let a = no_grad(|| trainer.model.stylize(&c, &s, Some(&mut Rng::new(0)))).unwrap();
    let b = no_grad(|| loaded.stylize(&c, &s, Some(&mut Rng::new(0)))).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn crops_smaller_than_images_still_train() {
    let data = Dataset::synthetic(2, 20).unwrap();
    let mut cfg = TrainConfig::with_iters(2);
    cfg.crop = 32;
    let mut trainer = Trainer::new(ModelConfig::default(), cfg, PerceptualNet::seeded(0)).unwrap();
    assert_eq!(trainer.train(&data, 2, None, |_| {}).unwrap().len(), 2);
}

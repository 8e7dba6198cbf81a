use awtlab::attacks::{load_batch, run_attack, save_batch, AdversarialBatch, AttackConfig, Method};
use awtlab::data::{gen_glyphs, load_dataset, save_dataset, Dataset};
use awtlab::zoo::{load_checkpoint, save_checkpoint, train_checkpoint, Arch, Checkpoint, TrainHyper};

fn fixtures() -> (Dataset, Dataset, Checkpoint) {
    let (train, test) = gen_glyphs(9, 120, 30).unwrap();
    let hyper = TrainHyper {
        epochs: 1,
        ..TrainHyper::default()
    };
    let ckpt = train_checkpoint(Arch::CnnSmall, 2, &train, &test, &hyper).unwrap();
    (train, test, ckpt)
}

#[test]
fn dataset_checkpoint_and_batch_round_trip() {
    let (train, test, ckpt) = fixtures();
    let dir = tempfile::tempdir().unwrap();

    save_dataset(&train, dir.path().join("train.awtd")).unwrap();
    assert_eq!(load_dataset(dir.path().join("train.awtd")).unwrap(), train);

    save_checkpoint(&ckpt, dir.path().join("m.awtc")).unwrap();
    let back = load_checkpoint(dir.path().join("m.awtc")).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.content_hash(), ckpt.content_hash());

    let model = ckpt.model().unwrap();
    let (x, y) = test.head(8);
    let cfg = AttackConfig::with_budget(Method::Ni, 16.0 / 255.0, 3);
    let batch = run_attack(&model, &x, &y, &cfg).unwrap();
    save_batch(&batch, dir.path().join("b.awta")).unwrap();
    let back: AdversarialBatch = load_batch(dir.path().join("b.awta")).unwrap();
    assert_eq!(
        (back.labels.clone(), back.config, back.surrogate_hash),
        (batch.labels.clone(), cfg, batch.surrogate_hash)
    );
    for (a, b) in back.x_adv.data().iter().zip(batch.x_adv.data()) {
        assert!((a - b).abs() <= 1e-6);
    }
    assert!(back.within_budget(1e-6));
    // a second pass through the file format is lossless
    assert_eq!(
        back.to_bytes().unwrap(),
        AdversarialBatch::from_bytes(&back.to_bytes().unwrap())
            .unwrap()
            .to_bytes()
            .unwrap()
    );
}

#[test]
fn corruption_is_detected() {
    let (_, _, ckpt) = fixtures();
    let mut bytes = ckpt.to_bytes().unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
    assert!(err.contains("hash"), "{err}");

    let bytes = ckpt.to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
    assert!(Dataset::from_bytes(&bytes).unwrap_err().to_string().contains("magic"));
}

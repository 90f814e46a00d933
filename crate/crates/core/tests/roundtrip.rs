use proptest::prelude::*;
use vbp_novelty::autoencoder::AeModel;
use vbp_novelty::cnn::{CnnModel, DEFAULT_INPUT_DIMS};
use vbp_novelty::dataset::{DatasetManifest, ManifestRecord};
use vbp_novelty::detector::{NoveltyThreshold, Orientation};
use vbp_novelty::image::{ImageBuf, RgbImage};
use vbp_novelty::nn::Parameters;
use vbp_novelty::pnm;
use vbp_novelty::weights::{self, WeightsFile};

fn quantized(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

#[test]
fn cnn_weights_survive_write_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cnn.nvsm");
    let model = CnnModel::default_steering(11);
    weights::save_cnn(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = weights::load_cnn(&path, DEFAULT_INPUT_DIMS).unwrap();
    assert_eq!(back.params_flat(), quantized(&model.params_flat()));
    assert_eq!(back.conv_specs(), model.conv_specs());
    assert_eq!(WeightsFile::from_cnn(&back).encode(), bytes);
    // a second save of the loaded model is byte-identical
    let again = dir.path().join("again.nvsm");
    weights::save_cnn(&back, &again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
}

#[test]
fn ae_weights_survive_write_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ae.nvsm");
    let model = AeModel::new(&[40, 7, 3, 7, 40], 2).unwrap();
    weights::save_ae(&model, &path).unwrap();
    let back = weights::load_ae(&path).unwrap();
    assert_eq!(back.dims(), vec![40, 7, 3, 7, 40]);
    assert_eq!(back.params_flat(), quantized(&model.params_flat()));
    assert_eq!(WeightsFile::from_ae(&back).encode(), std::fs::read(&path).unwrap());
}

#[test]
fn manifest_survives_write_read() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        ManifestRecord { path: "a.pgm".into(), angle_rad: 0.1 + 0.2 },
        ManifestRecord { path: "sub/b,c.pgm".into(), angle_rad: -1e-300 },
        ManifestRecord { path: "d.pgm".into(), angle_rad: 0.4999999999999999 },
    ];
    let m = DatasetManifest::new(records, dir.path()).unwrap();
    let path = dir.path().join("manifest.csv");
    m.write(&path).unwrap();
    let back = DatasetManifest::read(&path).unwrap();
    assert_eq!(back.records, m.records);
    assert_eq!(back.resolve(1), dir.path().join("sub/b,c.pgm"));
    assert_eq!(back.to_csv_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn pgm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuf::from_fn(60, 160, |r, c| ((r * 7 + c * 3) % 256) as f64 / 255.0);
    let path = dir.path().join("x.pgm");
    pnm::write_pgm(&path, &img).unwrap();
    assert_eq!(pnm::read_pgm(&path).unwrap(), img);
    let rgb = RgbImage::new(2, 3, (0..18).map(|i| i as f64 / 17.0).collect()).unwrap();
    let back = pnm::decode_ppm(&pnm::encode_ppm(&rgb)).unwrap();
    assert_eq!(pnm::encode_ppm(&back), pnm::encode_ppm(&rgb));
}

#[test]
fn threshold_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("threshold.txt");
    let t = NoveltyThreshold {
        cutoff: 0.012345678901234567,
        orientation: Orientation::HighIsNovel,
        percentile: 0.99,
    };
    t.write(&path).unwrap();
    assert_eq!(NoveltyThreshold::read(&path).unwrap(), t);
}

proptest! {
    #[test]
    fn pgm_bytes_are_stable(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let bytes: Vec<u8> = (0..h * w).map(|i| (vbp_novelty::rng::mix(seed, i as u64) & 0xff) as u8).collect();
        let mut file = format!("P5\n{w} {h}\n255\n").into_bytes();
        file.extend(&bytes);
        let img = pnm::decode_pgm(&file).unwrap();
        prop_assert_eq!(pnm::encode_pgm(&img), file);
    }

    #[test]
    fn intensity_quantization_is_idempotent(v in 0.0f64..=1.0) {
        let q = pnm::decode_intensity(pnm::encode_intensity(v));
        prop_assert!((q - v).abs() <= 0.5 / 255.0 + 1e-12);
        prop_assert_eq!(pnm::encode_intensity(q), pnm::encode_intensity(v));
    }

    #[test]
    fn threshold_records_are_value_exact(cutoff in -1e6f64..1e6, p in 0.001f64..0.999, high in any::<bool>()) {
        let t = NoveltyThreshold {
            cutoff,
            percentile: p,
            orientation: if high { Orientation::HighIsNovel } else { Orientation::LowIsNovel },
        };
        prop_assert_eq!(NoveltyThreshold::from_record(&t.to_record()).unwrap(), t);
    }

    #[test]
    fn manifest_angles_are_value_exact(angles in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
        let records = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| ManifestRecord { path: format!("img_{i}.pgm"), angle_rad: a })
            .collect();
        let m = DatasetManifest::new(records, "root").unwrap();
        let back = DatasetManifest::from_csv_bytes(&m.to_csv_bytes().unwrap(), "root").unwrap();
        prop_assert_eq!(back.records, m.records);
    }
}

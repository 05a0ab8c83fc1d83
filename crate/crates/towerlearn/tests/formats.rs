use std::path::Path;

use proptest::prelude::*;
use towerlearn::checkpoint::*;
use towerlearn::image::Image;
use towerlearn::recording;
use towerlearn::Error;
use towerlearn_core::env::{EnvConfig, Heading, Pos, Theme};
use towerlearn_core::eval::{EpisodeRecord, RecordedStep};
use towerlearn_core::model::{AgentModel, ModelConfig};
use towerlearn_core::rng::stream;

fn parse_offset<T: std::fmt::Debug>(r: Result<T, Error>) -> u64 {
    match r {
        Err(Error::Parse { offset, .. }) => offset,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn tlck_byte_layout() {
    let t = vec![("w".to_string(), vec![2], vec![1.0, -2.0])];
    let bytes = encode_tlck(&t, Dtype::F32);
    let mut expect = b"TLCK".to_vec();
    expect.extend([1, 0, 0, 0, 4, 0, 0, 0, 1, 0, 0, 0]);
    expect.extend([1, 0, 0, 0, b'w', 1, 0, 0, 0]);
    expect.extend([2, 0, 0, 0, 0, 0, 0, 0]);
    expect.extend([0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0]);
    assert_eq!(bytes, expect);
    assert_eq!(decode_tlck(&bytes, Path::new("x")).unwrap(), (Dtype::F32, t));
}

#[test]
fn tlck_round_trips_models_in_both_widths() {
    let cfg = ModelConfig { hidden_size: 16, ..ModelConfig::reduced() };
    let model = AgentModel::<f64>::new(&cfg, &mut stream(1, "m", 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tlck");
    write_model(&model, &path).unwrap();
    let back: AgentModel<f64> = read_model(&path, &cfg).unwrap();
    for ((n, a), (_, b)) in model.named_params().iter().zip(back.named_params()) {
        assert_eq!(a.data(), b.data(), "{n}");
    }
    let m32 = model.cast::<f32>().unwrap();
    write_model(&m32, &path).unwrap();
    let back: AgentModel<f32> = read_model(&path, &cfg).unwrap();
    for ((_, a), (_, b)) in m32.named_params().iter().zip(back.named_params()) {
        assert_eq!(a.data(), b.data());
    }
    let other = ModelConfig { hidden_size: 8, ..cfg };
    assert!(matches!(read_model::<f32>(&path, &other), Err(Error::Core(towerlearn_core::Error::Config(_)))));
}

#[test]
fn corrupt_checkpoints_report_the_failing_byte() {
    let t = vec![("layer".to_string(), vec![2, 3], vec![0.5; 6])];
    let good = encode_tlck(&t, Dtype::F64);
    let p = Path::new("c.tlck");
    let mut bad = good.clone();
    bad[0] = b'X';
    assert_eq!(parse_offset(decode_tlck(&bad, p)), 0);
    let mut bad = good.clone();
    bad[4] = 9;
    assert_eq!(parse_offset(decode_tlck(&bad, p)), 4);
    let mut bad = good.clone();
    bad[8] = 2;
    assert_eq!(parse_offset(decode_tlck(&bad, p)), 8);
    // Header 16, name length 4 + 5, rank 4, extents 16: data starts at 45.
    assert_eq!(parse_offset(decode_tlck(&good[..50], p)), 45);
    let mut long = good.clone();
    long.push(0);
    assert_eq!(parse_offset(decode_tlck(&long, p)), good.len() as u64);
    let msg = decode_tlck(&good[..50], p).unwrap_err().to_string();
    assert!(msg.contains("c.tlck") && msg.contains("byte 45"), "{msg}");
}

#[test]
fn optimizer_state_round_trips() {
    let first = vec![vec![0.1, -0.2], vec![3.0]];
    let second = vec![vec![0.01, 0.04], vec![9.0]];
    let bytes = encode_optimizer(17, &first, &second, Dtype::F64);
    assert_eq!(&bytes[..4], b"TLOS");
    assert_eq!(decode_optimizer(&bytes, Path::new("o")).unwrap(), (17, first, second));
    assert_eq!(parse_offset(decode_optimizer(&bytes[..30], Path::new("o"))), 24);
}

fn sample_record(n: usize) -> EpisodeRecord {
    let mut r = EpisodeRecord::new(42, Theme::Moorish, &EnvConfig::default());
    r.steps = (0..n)
        .map(|i| RecordedStep {
            action: [i % 2, (i / 2) % 2, i % 3],
            reward: if i == n - 1 { 1.1 } else { 0.0 },
            done: i == n - 1,
            floor: (i / 4) as u32,
            position: Pos::new(i as i32, -(i as i32)),
            heading: Heading::ALL[i % 4],
        })
        .collect();
    r
}

#[test]
fn recording_layout_and_round_trip() {
    let r = sample_record(3);
    let bytes = recording::encode(&r);
    assert_eq!(bytes.len(), recording::HEADER_BYTES + 3 * recording::STEP_BYTES);
    assert_eq!(&bytes[..4], b"TLEP");
    assert_eq!(bytes[16], Theme::Moorish.index());
    assert_eq!(recording::decode(&bytes, Path::new("r")).unwrap(), r);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ep.tlep");
    recording::write(&path, &r).unwrap();
    assert_eq!(recording::read(&path).unwrap(), r);
    assert_eq!(recording::list(dir.path()).unwrap(), vec![path]);
}

#[test]
fn corrupt_recordings_report_file_and_offset() {
    let bytes = recording::encode(&sample_record(3));
    let p = Path::new("runs/ep7.tlep");
    let h = recording::HEADER_BYTES as u64;
    let s = recording::STEP_BYTES as u64;
    let mut bad = bytes.clone();
    bad[16] = 9;
    assert_eq!(parse_offset(recording::decode(&bad, p)), 16);
    let mut bad = bytes.clone();
    bad[recording::HEADER_BYTES + recording::STEP_BYTES + 2] = 3;
    assert_eq!(parse_offset(recording::decode(&bad, p)), h + s + 2);
    let mut bad = bytes.clone();
    bad[recording::HEADER_BYTES + 11] = 2;
    assert_eq!(parse_offset(recording::decode(&bad, p)), h + 11);
    let mut bad = bytes.clone();
    bad[recording::HEADER_BYTES + 24] = 7;
    assert_eq!(parse_offset(recording::decode(&bad, p)), h + 24);
    assert_eq!(parse_offset(recording::decode(&bytes[..bytes.len() - 1], p)), h + 2 * s + 24);
    let msg = recording::decode(&bytes[..40], p).unwrap_err().to_string();
    assert!(msg.contains("ep7.tlep") && msg.contains("byte"), "{msg}");
}

proptest! {
    #[test]
    fn recordings_round_trip(n in 1usize..40, seed in any::<u64>(), theme in 0u8..5, reward in -5.0f64..5.0) {
        let mut r = sample_record(n);
        r.seed = seed;
        r.theme = Theme::from_index(theme).unwrap();
        r.steps[0].reward = reward;
        prop_assert_eq!(recording::decode(&recording::encode(&r), Path::new("p")).unwrap(), r);
    }

    #[test]
    fn truncated_recordings_never_decode(n in 1usize..10, cut in 1usize..200) {
        let bytes = recording::encode(&sample_record(n));
        let cut = cut.min(bytes.len());
        prop_assert!(recording::decode(&bytes[..bytes.len() - cut], Path::new("p")).is_err());
    }
}

#[test]
fn ppm_and_png_output() {
    let mut img = Image::new(3, 2, [1, 2, 3]);
    img.set(2, 1, [255, 0, 9]);
    let ppm = img.to_ppm();
    assert!(ppm.starts_with(b"P6\n3 2\n255\n"));
    assert_eq!(ppm.len(), 11 + 18);
    assert_eq!(Image::from_ppm(&ppm, Path::new("i")).unwrap(), img);
    assert!(Image::from_ppm(&ppm[..20], Path::new("i")).is_err());

    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("i.png");
    img.save(&png).unwrap();
    let bytes = std::fs::read(&png).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let ppm_path = dir.path().join("i.ppm");
    img.save(&ppm_path).unwrap();
    assert_eq!(std::fs::read(&ppm_path).unwrap(), ppm);
}

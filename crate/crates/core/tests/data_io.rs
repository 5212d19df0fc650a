use std::fs;

use gogan_core::data::{gen_procedural_images, load_dataset, read_pgm, write_pgm, DataMode, LoadMode};
use gogan_core::Error;

#[test]
fn pgm_directory_round_trips_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_procedural_images(5, 16, 3).unwrap();
    for i in 0..ds.len() {
        write_pgm(&dir.path().join(format!("img_{i:03}.pgm")), 16, 16, ds.sample(i)).unwrap();
    }
    let back = load_dataset(dir.path(), LoadMode::Images).unwrap();
    assert_eq!(back.mode, DataMode::Images { height: 16, width: 16 });
    assert_eq!(back.len(), 5);
    for i in 0..5 {
        for (a, b) in ds.sample(i).iter().zip(back.sample(i)) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
    let img = read_pgm(&dir.path().join("img_000.pgm")).unwrap();
    assert_eq!((img.height, img.width), (16, 16));
}

#[test]
fn pgm_quantization_is_stable_on_reload() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<f64> = (0..144).map(|i| i as f64 / 143.0).collect();
    let p = dir.path().join("a.pgm");
    write_pgm(&p, 12, 12, &pixels).unwrap();
    let once = read_pgm(&p).unwrap();
    write_pgm(&p, 12, 12, &once.pixels).unwrap();
    assert_eq!(read_pgm(&p).unwrap(), once);
    assert_eq!(once.pixels[0], 0.0);
    assert_eq!(once.pixels[143], 1.0);
}

#[test]
fn empty_and_mixed_directories_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(dir.path(), LoadMode::Images),
        Err(Error::EmptyDataset(_))
    ));
    write_pgm(&dir.path().join("a.pgm"), 12, 12, &[0.5; 144]).unwrap();
    write_pgm(&dir.path().join("b.pgm"), 16, 16, &[0.5; 256]).unwrap();
    assert!(matches!(
        load_dataset(dir.path(), LoadMode::Images),
        Err(Error::Format(_))
    ));
}

#[test]
fn csv_points_load_and_report_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "0.5,1.5\n-2,3e-1\n").unwrap();
    let ds = load_dataset(&good, LoadMode::Points).unwrap();
    assert_eq!(ds.samples.data(), &[0.5, 1.5, -2.0, 0.3]);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0.5,1.5\n1.0,abc\n").unwrap();
    match load_dataset(&bad, LoadMode::Points) {
        Err(Error::Parse { offset, file, .. }) => {
            assert_eq!(offset, 8);
            assert_eq!(file, bad);
        }
        other => panic!("expected parse error, got {other:?}"),
    }

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert!(matches!(
        load_dataset(&empty, LoadMode::Points),
        Err(Error::EmptyDataset(_))
    ));
}

#[test]
fn missing_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(&dir.path().join("nope.csv"), LoadMode::Points),
        Err(Error::Io { .. })
    ));
}

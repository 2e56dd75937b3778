use std::fs;
use std::path::Path;

use f3::data::{
    load_census, load_cifar10, load_mnist, load_mnist_dir, load_mnist_dir_scaled, load_sgemm, parse_census,
    parse_cifar_records, parse_sgemm, read_idx_images, read_idx_labels, CifarRecord, Scaling, Split, Task,
    CIFAR_RECORD,
};
use f3::Error;
use proptest::prelude::*;

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x803, n, rows, cols] {
        out.extend_from_slice(&u32::to_be_bytes(v));
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x801u32.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, bytes).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn idx_round_trip(
        rows in 1u32..5,
        cols in 1u32..5,
        labels in prop::collection::vec(0u8..10, 0..6),
        seed in any::<u8>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let n = labels.len() as u32;
        let pixels: Vec<u8> = (0..n * rows * cols).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let ip = write(dir.path(), "img", &idx_images(n, rows, cols, &pixels));
        let lp = write(dir.path(), "lab", &idx_labels(&labels));
        let (n2, r2, c2, px) = read_idx_images(&ip).unwrap();
        prop_assert_eq!((n2, r2, c2), (n as usize, rows as usize, cols as usize));
        prop_assert_eq!(&px, &pixels);
        prop_assert_eq!(read_idx_labels(&lp).unwrap(), labels.clone());
        let ds = load_mnist::<f64>(&ip, &lp, Split::Train).unwrap();
        prop_assert_eq!(ds.len(), labels.len());
        for (i, &l) in labels.iter().enumerate() {
            prop_assert_eq!(ds.label(i), Some(usize::from(l)));
            for (a, &p) in ds.feature(i).iter().zip(&pixels[i * (rows * cols) as usize..]) {
                prop_assert_eq!(*a, f64::from(p) / 255.0);
            }
        }
    }

    #[test]
    fn cifar_record_round_trip(label in 0u8..10, fill in any::<u8>()) {
        let rec = CifarRecord { label, pixels: (0..3072).map(|i| (i as u8) ^ fill).collect() };
        let bytes = [rec.to_bytes(), rec.to_bytes()].concat();
        let back = parse_cifar_records(Path::new("mem"), &bytes).unwrap();
        prop_assert_eq!(back, vec![rec.clone(), rec]);
    }
}

#[test]
fn idx_errors_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = idx_images(1, 2, 2, &[0; 4]);
    bad[3] = 0x01;
    let p = write(dir.path(), "bad_magic", &bad);
    let err = read_idx_images(&p).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("magic"), "{err}");

    let p = write(dir.path(), "short", &idx_images(2, 2, 2, &[0; 5]));
    assert!(matches!(read_idx_images(&p), Err(Error::Format { .. })));
    let p = write(dir.path(), "short_labels", &idx_labels(&[1, 2, 3])[..10]);
    assert!(matches!(read_idx_labels(&p), Err(Error::Format { .. })));
    assert!(matches!(
        read_idx_labels(&dir.path().join("absent")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn mnist_label_count_mismatch_and_bad_label() {
    let dir = tempfile::tempdir().unwrap();
    let ip = write(dir.path(), "img", &idx_images(2, 1, 1, &[0, 255]));
    let lp = write(dir.path(), "lab", &idx_labels(&[3]));
    assert!(matches!(
        load_mnist::<f32>(&ip, &lp, Split::Train),
        Err(Error::Format { .. })
    ));
    let lp = write(dir.path(), "lab", &idx_labels(&[3, 10]));
    assert!(matches!(
        load_mnist::<f32>(&ip, &lp, Split::Train),
        Err(Error::Format { .. })
    ));
}

#[test]
fn mnist_dir_standardizes_with_train_statistics() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "train-images-idx3-ubyte",
        &idx_images(4, 1, 2, &[0, 10, 255, 10, 0, 10, 255, 10]),
    );
    write(dir.path(), "train-labels-idx1-ubyte", &idx_labels(&[0, 1, 2, 3]));
    write(dir.path(), "t10k-images-idx3-ubyte", &idx_images(1, 1, 2, &[255, 0]));
    write(dir.path(), "t10k-labels-idx1-ubyte", &idx_labels(&[9]));
    let (train, test) = load_mnist_dir::<f64>(dir.path()).unwrap();
    // column 0: values {0, 1, 0, 1} → mean 0.5, std 0.5; column 1 constant → std 1
    assert_eq!(train.feature(0), &[-1.0, 0.0]);
    assert_eq!(train.feature(1), &[1.0, 0.0]);
    assert_eq!(test.feature(0)[0], 1.0);
    assert!((test.feature(0)[1] + 10.0 / 255.0).abs() < 1e-15);
    assert_eq!(test.label(0), Some(9));
}

#[test]
fn pooled_scaling_uses_one_mean_and_deviation() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "train-images-idx3-ubyte",
        &idx_images(2, 1, 2, &[0, 255, 255, 255]),
    );
    write(dir.path(), "train-labels-idx1-ubyte", &idx_labels(&[0, 1]));
    write(dir.path(), "t10k-images-idx3-ubyte", &idx_images(1, 1, 2, &[0, 0]));
    write(dir.path(), "t10k-labels-idx1-ubyte", &idx_labels(&[9]));
    let (train, test) = load_mnist_dir_scaled::<f64>(dir.path(), Scaling::Pooled).unwrap();
    // values {0, 1, 1, 1}: mean 3/4, std √3/4
    let s = 3f64.sqrt() / 4.0;
    let lo = -0.75 / s;
    let hi = 0.25 / s;
    assert_eq!(train.feature(0), &[lo, hi]);
    assert_eq!(train.feature(1), &[hi, hi]);
    assert_eq!(test.feature(0), &[lo, lo]);
    let (per, _) = load_mnist_dir::<f64>(dir.path()).unwrap();
    assert_eq!(per.feature(1), &[1.0, 0.0]);
}

#[test]
fn cifar_rejects_bad_label_and_ragged_length() {
    let mut rec = CifarRecord {
        label: 3,
        pixels: vec![0; 3072],
    }
    .to_bytes();
    assert!(matches!(
        parse_cifar_records(Path::new("x"), &rec[..CIFAR_RECORD - 1]),
        Err(Error::Format { .. })
    ));
    rec[0] = 10;
    assert!(matches!(
        parse_cifar_records(Path::new("x"), &rec),
        Err(Error::Format { .. })
    ));
}

#[test]
fn cifar_batches_concatenate_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |l: u8, v: u8| {
        CifarRecord {
            label: l,
            pixels: vec![v; 3072],
        }
        .to_bytes()
    };
    let a = write(dir.path(), "a.bin", &[rec(1, 0), rec(2, 51)].concat());
    let b = write(dir.path(), "b.bin", &rec(7, 255));
    let ds = load_cifar10::<f32>(&[a, b], Split::Train).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.width(), 3072);
    assert_eq!((ds.label(0), ds.label(1), ds.label(2)), (Some(1), Some(2), Some(7)));
    assert_eq!(ds.feature(1)[100], 0.2);
}

const CENSUS_TRAIN: &str = "\
39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, >50K
38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, White, Male, 0, 0, 40, ?, <=50K
broken, row
";

const CENSUS_TEST: &str = "\
|1x3 Cross validator
25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, United-States, <=50K.
44, Never-seen, 160323, Some-college, 10, Married-civ-spouse, Machine-op-inspct, Husband, Black, Male, 7688, 0, 40, United-States, >50K.
";

#[test]
fn census_parsing_and_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "adult.data", CENSUS_TRAIN.as_bytes());
    let te = write(dir.path(), "adult.test", CENSUS_TEST.as_bytes());
    let (rows, skipped) = parse_census(&tr).unwrap();
    assert_eq!((rows.len(), skipped), (3, 1));
    assert_eq!(rows[2].categorical[7], "?");
    let load = load_census::<f64>(&tr, &te).unwrap();
    assert_eq!(load.skipped_rows, 1);
    assert_eq!(load.encoder.vocab[0], vec!["Private", "Self-emp-not-inc", "State-gov"]);
    assert_eq!(load.train.width(), load.encoder.width());
    assert_eq!(load.train.classes(), 2);
    assert_eq!(load.test.label(0), Some(0));
    assert_eq!(load.test.label(1), Some(1));
    // unseen workclass: all three workclass indicators are zero
    assert_eq!(&load.test.feature(1)[6..9], &[0.0, 0.0, 0.0]);
    assert_eq!(&load.test.feature(0)[6..9], &[1.0, 0.0, 0.0]);
    // age is standardized on train: mean 127/3
    let mean = 127.0 / 3.0;
    let std = (((39.0f64 - mean).powi(2) + (50.0 - mean).powi(2) + (38.0 - mean).powi(2)) / 3.0).sqrt();
    assert!((load.test.feature(0)[0] - (25.0 - mean) / std).abs() < 1e-12);
}

fn sgemm_text(rows: usize) -> String {
    let mut s = String::from(
        "MWG,NWG,KWG,MDIMC,NDIMC,MDIMA,NDIMB,KWI,VWM,VWN,STRM,STRN,SA,SB,Run1 (ms),Run2 (ms),Run3 (ms),Run4 (ms)\n",
    );
    for r in 0..rows {
        let cells: Vec<String> = (0..14).map(|c| ((r * 7 + c * 3) % 11).to_string()).collect();
        s.push_str(&cells.join(","));
        s.push_str(&format!(",{},{},{},{}\n", r, r + 1, r + 2, r + 3));
    }
    s
}

#[test]
fn sgemm_parse_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "sgemm.csv", sgemm_text(10).as_bytes());
    let (params, runtime) = parse_sgemm(&p).unwrap();
    assert_eq!(params.len(), 10);
    assert_eq!(runtime[4], 5.5);
    let (train, test) = load_sgemm::<f64>(&p, 0).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
    assert_eq!(train.task(), Task::Regression);
    let mean = train.targets().iter().sum::<f64>() / 8.0;
    let var = train.targets().iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 8.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    let (train2, _) = load_sgemm::<f64>(&p, 0).unwrap();
    assert_eq!(train, train2);
    let (train3, _) = load_sgemm::<f64>(&p, 1).unwrap();
    assert_ne!(train.targets(), train3.targets());
}

#[test]
fn sgemm_bad_rows_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = sgemm_text(3);
    text.push_str("1,2,3\n");
    let p = write(dir.path(), "short.csv", text.as_bytes());
    let err = parse_sgemm(&p).unwrap_err();
    assert!(err.to_string().contains("row 5"), "{err}");
    let text = sgemm_text(2).replacen("\n0,", "\nx,", 1);
    let p = write(dir.path(), "nan.csv", text.as_bytes());
    assert!(matches!(parse_sgemm(&p), Err(Error::Format { .. })));
}

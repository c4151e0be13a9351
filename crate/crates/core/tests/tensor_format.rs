use std::path::Path;

use hint_core::synth::{generate, SynthConfig};
use hint_core::tensor_store::{
    decode_tensor, encode_tensor, load_dataset, read_tensor, write_tensor, Manifest, TensorRecord,
    Volume, MAGIC,
};
use hint_core::Error;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE / 4.0),
        Just(f32::MAX),
    ]
}

fn record() -> impl Strategy<Value = TensorRecord> {
    prop::collection::vec(1usize..6, 2..=3).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(finite_f32(), n)
            .prop_map(move |data| TensorRecord::new(shape.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn bytes_round_trip(t in record()) {
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        prop_assert!(back.bit_eq(&t));
    }

    #[test]
    fn header_size_is_exact(t in record()) {
        let bytes = encode_tensor(&t);
        prop_assert_eq!(bytes.len(), 16 + 8 * t.shape().len() + 4 * t.data().len());
        prop_assert_eq!(&bytes[..8], &MAGIC[..]);
    }

    #[test]
    fn truncation_is_rejected(t in record(), cut in 1usize..64) {
        let bytes = encode_tensor(&t);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_tensor(&bytes[..keep]).is_err());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = TensorRecord::new(vec![2, 3, 4], (0..24).map(|v| v as f32 * -0.25).collect()).unwrap();
    let path = dir.path().join("t.tens");
    write_tensor(&t, &path).unwrap();
    assert!(read_tensor(&path).unwrap().bit_eq(&t));
    let v = Volume::try_from(read_tensor(&path).unwrap()).unwrap();
    assert_eq!(v.shape(), [2, 3, 4]);
    assert_eq!(v.at(1, 2, 3), 23.0 * -0.25);
}

fn header(version: u32, dims: &[u64]) -> Vec<u8> {
    let mut b = MAGIC.to_vec();
    b.extend_from_slice(&version.to_le_bytes());
    b.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        b.extend_from_slice(&d.to_le_bytes());
    }
    b
}

fn payload(vals: &[f32]) -> Vec<u8> {
    vals.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn crafted_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    };
    let mut wrong_magic = header(1, &[1, 1]);
    wrong_magic[0] = b'X';
    wrong_magic.extend(payload(&[1.0]));

    let cases: Vec<(&str, Vec<u8>, fn(&Error) -> bool)> = vec![
        ("magic.tens", wrong_magic, |e| matches!(e, Error::BadMagic)),
        ("empty.tens", Vec::new(), |e| matches!(e, Error::BadMagic)),
        ("version.tens", [header(2, &[1, 1]), payload(&[1.0])].concat(), |e| {
            matches!(e, Error::UnsupportedVersion(2))
        }),
        ("ndim1.tens", [header(1, &[4]), payload(&[0.0; 4])].concat(), |e| {
            matches!(e, Error::ShapeMismatch(_))
        }),
        ("ndim4.tens", [header(1, &[1, 1, 1, 1]), payload(&[0.0])].concat(), |e| {
            matches!(e, Error::ShapeMismatch(_))
        }),
        ("short.tens", [header(1, &[2, 2]), payload(&[0.0; 3])].concat(), |e| {
            matches!(e, Error::ShapeMismatch(_))
        }),
        ("long.tens", [header(1, &[2, 2]), payload(&[0.0; 5])].concat(), |e| {
            matches!(e, Error::ShapeMismatch(_))
        }),
        ("zero.tens", header(1, &[0, 3]), |e| matches!(e, Error::ShapeMismatch(_))),
        ("huge.tens", header(1, &[u64::MAX, u64::MAX]), |e| matches!(e, Error::ShapeMismatch(_))),
        ("nan.tens", [header(1, &[1, 3]), payload(&[0.0, f32::NAN, 1.0])].concat(), |e| {
            matches!(e, Error::NonFiniteData(1))
        }),
        ("inf.tens", [header(1, &[1, 2]), payload(&[f32::NEG_INFINITY, 1.0])].concat(), |e| {
            matches!(e, Error::NonFiniteData(0))
        }),
    ];
    for (name, bytes, expect) in cases {
        let err = read_tensor(write(name, bytes)).unwrap_err();
        assert!(expect(&err), "{name}: unexpected {err:?}");
    }
    let err = read_tensor(dir.path().join("absent.tens")).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)));
}

fn small_archive(dir: &Path) -> std::path::PathBuf {
    let mut cfg = SynthConfig::planted(4, 2, 2, 9);
    cfg.height = 4;
    cfg.width = 5;
    cfg.samples_per_concept = 3;
    generate(&cfg).unwrap().write_to(dir).unwrap()
}

#[test]
fn dataset_order_ignores_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_archive(dir.path());
    let a = load_dataset(&path).unwrap();

    let mut m = Manifest::read(&path).unwrap();
    m.samples.reverse();
    let shuffled = dir.path().join("reversed.json");
    m.write(&shuffled).unwrap();
    let b = load_dataset(&shuffled).unwrap();

    let ids = |d: &hint_core::tensor_store::Dataset| -> Vec<String> {
        d.samples.iter().map(|s| s.manifest.sample_id.clone()).collect()
    };
    assert_eq!(ids(&a), ids(&b));
    let mut sorted = ids(&a);
    sorted.sort();
    assert_eq!(ids(&a), sorted);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.features, y.features);
        assert_eq!(x.saliency, y.saliency);
    }
}

#[test]
fn dataset_errors_name_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_archive(dir.path());
    let m = Manifest::read(&path).unwrap();
    let victim = m.samples[1].clone();

    std::fs::remove_file(dir.path().join(&victim.saliency_file)).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err.root(), Error::MissingFile(_)));
    assert!(err.to_string().contains(&victim.sample_id), "{err}");

    // Replace the saliency map with one of the wrong shape.
    let wrong = TensorRecord::new(vec![4, 4, 4], vec![0.0; 64]).unwrap();
    write_tensor(&wrong, dir.path().join(&victim.saliency_file)).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err.root(), Error::ShapeMismatch(_)));
    assert!(err.to_string().contains(&victim.sample_id), "{err}");
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_archive(dir.path());

    assert!(matches!(
        load_dataset(dir.path().join("missing.json")),
        Err(Error::Manifest(_))
    ));

    std::fs::write(dir.path().join("garbage.json"), "{ not json").unwrap();
    assert!(matches!(
        load_dataset(dir.path().join("garbage.json")),
        Err(Error::Manifest(_))
    ));

    let mut m = Manifest::read(&path).unwrap();
    let dup = m.samples[0].clone();
    m.samples.push(dup);
    m.write(dir.path().join("dup.json")).unwrap();
    assert!(matches!(load_dataset(dir.path().join("dup.json")), Err(Error::Manifest(_))));

    let mut m = Manifest::read(&path).unwrap();
    let (h, w) = m.samples[0].image_size;
    m.samples[0].groundtruth_box = Some([0, 0, w + 1, h]);
    m.write(dir.path().join("box.json")).unwrap();
    assert!(matches!(load_dataset(dir.path().join("box.json")), Err(Error::Manifest(_))));

    let mut m = Manifest::read(&path).unwrap();
    m.layer_shape = [4, 4, 4];
    m.write(dir.path().join("layer.json")).unwrap();
    let err = load_dataset(dir.path().join("layer.json")).unwrap_err();
    assert!(matches!(err.root(), Error::ShapeMismatch(_)));
}

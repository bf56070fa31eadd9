use std::fs;
use std::path::Path;

use alas_core::synthgen::{generate, SynthConfig};
use alas_core::tensorstore::{
    decode_tensor, encode_tensor, read_tensor, validate_dataset, write_tensor, DatasetError, FindingKind, LatentStack,
    HEADER_LEN,
};
use proptest::prelude::*;
use serde_json::{json, Value};

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<f32>().prop_filter("finite", |x| x.is_finite())
}

fn stack_strategy() -> impl Strategy<Value = LatentStack> {
    (1..4usize, 1..6usize, 1..9usize).prop_flat_map(|(l, s, k)| {
        prop::collection::vec(finite_f32(), l * s * k)
            .prop_map(move |v| LatentStack::from_shape_vec([l, s, k], v).unwrap())
    })
}

proptest! {
    #[test]
    fn round_trip_is_bit_exact(stack in stack_strategy()) {
        let bytes = encode_tensor(&stack);
        prop_assert_eq!(bytes.len(), HEADER_LEN + 4 * stack.data().len());
        let back = decode_tensor(&bytes).unwrap();
        prop_assert_eq!(back.shape(), stack.shape());
        for (a, b) in stack.data().iter().zip(back.data().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(encode_tensor(&back), bytes);
    }
}

#[test]
fn golden_bytes() {
    let stack = LatentStack::from_shape_vec([1, 1, 2], vec![1.0, -2.0]).unwrap();
    let expected: Vec<u8> = [
        &b"ALAS"[..],
        &[1, 0, 0, 0],
        &[3, 0, 0, 0],
        &[1, 0, 0, 0, 0, 0, 0, 0],
        &[1, 0, 0, 0, 0, 0, 0, 0],
        &[2, 0, 0, 0, 0, 0, 0, 0],
        &[0x00, 0x00, 0x80, 0x3f],
        &[0x00, 0x00, 0x00, 0xc0],
    ]
    .concat();
    assert_eq!(encode_tensor(&stack), expected);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.alas");
    let values: Vec<f32> = (0..3 * 5 * 8).map(|i| ((i * 37 % 101) as f32 - 50.0) / 7.0).collect();
    let stack = LatentStack::from_shape_vec([3, 5, 8], values).unwrap();
    write_tensor(&stack, &path).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), stack);
}

// ---------------------------------------------------------------------------
// systematic corruption of a valid dataset

fn fresh_dataset(dir: &Path) {
    let config = SynthConfig { num_samples: 3, num_layers: 2, hidden_dim: 16, noise_per_layer: vec![0.0, 0.1, 0.2], ..Default::default() };
    generate(&config, dir).unwrap();
}

fn edit_json(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn edit_bytes(path: &Path, f: impl FnOnce(&mut Vec<u8>)) {
    let mut b = fs::read(path).unwrap();
    f(&mut b);
    fs::write(path, b).unwrap();
}

const S0: &str = "samples/sample-0000";

type Corruption = fn(&Path);

fn corruptions() -> Vec<(&'static str, FindingKind, Corruption)> {
    vec![
        ("manifest version", FindingKind::ManifestInvalid, |d| edit_json(&d.join("manifest.json"), |v| v["format_version"] = json!(9))),
        ("frame duration", FindingKind::ManifestInvalid, |d| edit_json(&d.join("manifest.json"), |v| v["frame_duration_ms"] = json!(0.0))),
        ("sample id", FindingKind::InvalidSampleId, |d| edit_json(&d.join("manifest.json"), |v| v["samples"][0]["id"] = json!("Sample 0"))),
        ("duplicate id", FindingKind::DuplicateSampleId, |d| edit_json(&d.join("manifest.json"), |v| v["samples"][1]["id"] = json!("sample-0000"))),
        ("trimmed", FindingKind::NotTrimmed, |d| edit_json(&d.join("manifest.json"), |v| v["samples"][0]["trimmed"] = json!(false))),
        ("unsafe path", FindingKind::UnsafePath, |d| edit_json(&d.join("manifest.json"), |v| v["samples"][0]["audio_tensor_path"] = json!("../audio.alas"))),
        ("missing tensor", FindingKind::MissingFile, |d| fs::remove_file(d.join(S0).join("audio.alas")).unwrap()),
        ("magic", FindingKind::BadMagic, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[0] = b'X')),
        ("version", FindingKind::UnsupportedVersion, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[4] = 2)),
        ("rank", FindingKind::BadRank, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[8] = 4)),
        ("truncated", FindingKind::Truncated, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b.truncate(b.len() - 4))),
        ("trailing", FindingKind::TrailingBytes, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b.extend_from_slice(&[0; 4]))),
        ("nan", FindingKind::NotANumber, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes()))),
        ("inf", FindingKind::Infinite, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::INFINITY.to_le_bytes()))),
        ("zero dim", FindingKind::ZeroDim, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[20..28].copy_from_slice(&0u64.to_le_bytes()))),
        ("overflow", FindingKind::DimsOverflow, |d| edit_bytes(&d.join(S0).join("audio.alas"), |b| b[28..36].copy_from_slice(&u64::MAX.to_le_bytes()))),
        ("hidden dim", FindingKind::HiddenDimMismatch, |d| {
            let s = LatentStack::from_shape_vec([3, 4, 8], vec![0.5; 96]).unwrap();
            write_tensor(&s, d.join(S0).join("text.alas")).unwrap();
        }),
        ("layer count", FindingKind::LayerCountMismatch, |d| {
            let t = read_tensor(d.join(S0).join("text.alas")).unwrap();
            let [_, s, k] = t.shape();
            let fewer = LatentStack::from_shape_vec([2, s, k], t.data().iter().take(2 * s * k).copied().collect()).unwrap();
            write_tensor(&fewer, d.join(S0).join("text.alas")).unwrap();
        }),
        ("tokens json", FindingKind::MalformedJson, |d| fs::write(d.join(S0).join("tokens.json"), "{\"tokens\": [").unwrap()),
        ("token count", FindingKind::TokenCountMismatch, |d| edit_json(&d.join(S0).join("tokens.json"), |v| {
            v["tokens"].as_array_mut().unwrap().push(json!("extra"));
            v["words"].as_array_mut().unwrap().push(json!("extra"));
        })),
        ("reconstruction", FindingKind::ReconstructionFailure, |d| edit_json(&d.join(S0).join("tokens.json"), |v| v["tokens"][0] = json!("zzzzzzzzz"))),
        ("explicit grouping", FindingKind::InvalidTokenMap, |d| edit_json(&d.join(S0).join("tokens.json"), |v| {
            let n = v["tokens"].as_array().unwrap().len();
            v["word_of_token"] = json!(vec![0; n]);
        })),
        ("timestamps", FindingKind::InvalidTimestamps, |d| edit_json(&d.join(S0).join("words.json"), |v| v["words"][0]["end"] = json!(-1.0))),
        ("empty timestamps", FindingKind::InvalidTimestamps, |d| edit_json(&d.join(S0).join("words.json"), |v| v["words"] = json!([]))),
        ("responses", FindingKind::InvalidResponses, |d| edit_json(&d.join(S0).join("responses.json"), |v| {
            v.as_object_mut().unwrap().remove("precomputed_similarity");
        })),
        ("similarity range", FindingKind::InvalidResponses, |d| edit_json(&d.join(S0).join("responses.json"), |v| v["precomputed_similarity"] = json!(1.5))),
    ]
}

#[test]
fn valid_dataset_has_no_findings() {
    let dir = tempfile::tempdir().unwrap();
    fresh_dataset(dir.path());
    let report = validate_dataset(dir.path()).unwrap();
    assert!(report.is_empty(), "{report:?}");
}

#[test]
fn every_corruption_is_detected() {
    for (name, kind, corrupt) in corruptions() {
        let dir = tempfile::tempdir().unwrap();
        fresh_dataset(dir.path());
        corrupt(dir.path());
        let report = validate_dataset(dir.path()).unwrap();
        assert!(!report.is_empty(), "{name}: corruption not detected");
        assert!(report.kinds().contains(&kind), "{name}: expected {kind:?}, got {:?}", report.kinds());
        // the other samples stay clean
        assert!(report.for_sample("sample-0002").next().is_none(), "{name}: {report:?}");
    }
}

#[test]
fn findings_are_collected_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    fresh_dataset(dir.path());
    edit_bytes(&dir.path().join(S0).join("audio.alas"), |b| b[0] = b'X');
    edit_json(&dir.path().join("manifest.json"), |v| v["samples"][0]["trimmed"] = json!(false));
    edit_json(&dir.path().join("samples/sample-0001/words.json"), |v| v["words"] = json!([]));
    let report = validate_dataset(dir.path()).unwrap();
    assert_eq!(report.for_sample("sample-0000").count(), 2);
    assert_eq!(report.for_sample("sample-0001").count(), 1);
}

#[test]
fn missing_manifest_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(validate_dataset(dir.path()), Err(DatasetError::ManifestIo { .. })));
    fs::write(dir.path().join("manifest.json"), "not json").unwrap();
    assert!(matches!(validate_dataset(dir.path()), Err(DatasetError::ManifestParse { .. })));
}

#[test]
fn responses_are_optional() {
    let dir = tempfile::tempdir().unwrap();
    fresh_dataset(dir.path());
    edit_json(&dir.path().join("manifest.json"), |v| {
        v["samples"][0].as_object_mut().unwrap().remove("responses_path");
    });
    assert!(validate_dataset(dir.path()).unwrap().is_empty());
}

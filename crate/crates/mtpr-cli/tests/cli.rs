//! File-format and command-level tests: byte round-trips, corruption
//! detection, exit codes, and a small end-to-end run.

use std::fs;
use std::path::Path;

use mtpr::model::{generate_instance, ModelParams};
use mtpr_cli::format::{
    read_dataset, read_overlap_text, read_truth, write_dataset, write_overlap_text, write_truth,
    FormatError,
};
use mtpr_cli::{cli_dispatch, format};

fn small_instance(seed: u64) -> ModelParams {
    ModelParams {
        d: 120,
        n_pub: 6,
        n_priv: 8,
        k_pub: 2,
        k_priv: 2,
        m: 30,
        seed,
    }
}

fn dispatch(args: &[&str]) -> i32 {
    cli_dispatch(std::iter::once("mtpr").chain(args.iter().copied()))
}

#[test]
fn dataset_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(5);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path = dir.path().join("data.mtpr");
    write_dataset(&path, &data).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.images, data.images);
    assert_eq!(back.public_view, data.public_view);
    // params round-trip except the deliberately unserialized seed
    assert_eq!(
        ModelParams { seed: 0, ..params },
        back.params
    );
    // writing the reread dataset reproduces the bytes
    let path2 = dir.path().join("again.mtpr");
    write_dataset(&path2, &back).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
}

#[test]
fn truth_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(6);
    let (truth, _, ws) = generate_instance(&params).unwrap();
    let path = dir.path().join("truth.mtpr");
    write_truth(&path, &params, &truth, &ws).unwrap();
    let (_, truth2, ws2) = read_truth(&path).unwrap();
    assert_eq!(truth.entries, truth2.entries);
    assert_eq!(ws, ws2);
}

#[test]
fn flipped_payload_byte_is_a_checksum_error() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(7);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path = dir.path().join("data.mtpr");
    write_dataset(&path, &data).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        read_dataset(&path),
        Err(FormatError::ChecksumMismatch { .. })
    ));
}

#[test]
fn oversized_header_is_rejected_before_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(8);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path = dir.path().join("data.mtpr");
    write_dataset(&path, &data).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    // the m field is the last header u64 (offset 4 + 4 + 5 * 8)
    let offset = 4 + 4 + 5 * 8;
    bytes[offset..offset + 8].copy_from_slice(&u64::MAX.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    match read_dataset(&path) {
        Err(FormatError::BadHeader(_)) | Err(FormatError::Truncated { .. }) => {}
        other => panic!("expected a pre-allocation failure, got {other:?}"),
    }

    // a merely-too-large (but representable) m must fail the size check
    let mut bytes = fs::read(&path).unwrap();
    bytes[offset..offset + 8].copy_from_slice(&(params.m as u64 + 7).to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        read_dataset(&path),
        Err(FormatError::Truncated { .. })
    ));
}

#[test]
fn bad_magic_and_version_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(9);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path = dir.path().join("data.mtpr");
    write_dataset(&path, &data).unwrap();
    let good = fs::read(&path).unwrap();

    let mut bytes = good.clone();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_dataset(&path), Err(FormatError::BadMagic)));

    let mut bytes = good;
    bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        read_dataset(&path),
        Err(FormatError::UnsupportedVersion(9))
    ));
}

#[test]
fn overlap_text_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams {
        n_pub: 0,
        k_pub: 0,
        ..small_instance(10)
    };
    let (_, _, ws) = generate_instance(&params).unwrap();
    let m = mtpr::model::overlap_oracle(&ws, 2).unwrap();
    let path = dir.path().join("gram.txt");
    write_overlap_text(&path, &m).unwrap();
    let back = read_overlap_text(&path).unwrap();
    assert_eq!(m, back);
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let code = dispatch(&[
            "generate", "--d", "200", "--n-priv", "8", "--k-priv", "2", "--m", "40", "--seed",
            "7", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    for name in ["data.mtpr", "truth.mtpr"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn generate_attack_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let code = dispatch(&[
        "generate", "--d", "6000", "--n-priv", "8", "--k-priv", "2", "--m", "150", "--seed",
        "3", "--out", inst.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let report_dir = dir.path().join("report");
    let code = dispatch(&[
        "attack",
        "--in",
        inst.join("data.mtpr").to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(report_dir.join("recovered.mtpr").exists());
    let report_text = fs::read_to_string(report_dir.join("report.toml")).unwrap();
    assert!(report_text.contains("recovered_images = 4"));

    let eval_path = dir.path().join("eval.toml");
    let code = dispatch(&[
        "evaluate",
        "--recovered",
        report_dir.join("recovered.mtpr").to_str().unwrap(),
        "--truth",
        inst.join("truth.mtpr").to_str().unwrap(),
        "--out",
        eval_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let eval_text = fs::read_to_string(&eval_path).unwrap();
    assert!(eval_text.contains("exact_count = 4"), "evaluation: {eval_text}");
}

#[test]
fn gram_and_floral_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let code = dispatch(&[
        "generate", "--d", "20000", "--n-priv", "8", "--k-priv", "2", "--m", "60", "--seed",
        "4", "--out", inst.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let gram_path = dir.path().join("gram.txt");
    let code = dispatch(&[
        "gram",
        "--in",
        inst.join("data.mtpr").to_str().unwrap(),
        "--out",
        gram_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let floral_path = dir.path().join("floral.toml");
    let code = dispatch(&[
        "floral",
        "--in",
        gram_path.to_str().unwrap(),
        "--k",
        "2",
        "--out",
        floral_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "floral search failed on the gram dump");
    assert!(fs::read_to_string(&floral_path).unwrap().contains("indices"));
}

#[test]
fn attack_on_corrupt_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(11);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path = dir.path().join("data.mtpr");
    write_dataset(&path, &data).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    fs::write(&path, &bytes).unwrap();
    let code = dispatch(&[
        "attack",
        "--in",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn attack_below_threshold_exits_1() {
    // m far below the floral-existence threshold: the attack runs but
    // reports a recovery failure
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let code = dispatch(&[
        "generate", "--d", "4000", "--n-priv", "10", "--k-priv", "2", "--m", "10", "--seed",
        "5", "--out", inst.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let code = dispatch(&[
        "attack",
        "--in",
        inst.join("data.mtpr").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_flags_exit_2() {
    assert_eq!(dispatch(&["generate", "--nonsense"]), 2);
    assert_eq!(dispatch(&["no-such-command"]), 2);
}

#[test]
fn recovered_file_reuses_dataset_format() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(12);
    let recovered = nalgebra::DMatrix::from_fn(params.d, 4, |i, j| (i * 4 + j) as f64);
    let path = dir.path().join("recovered.mtpr");
    format::write_recovered(&path, &params, &recovered).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.images, recovered);
    assert_eq!(back.params.n_pub, 0);
    assert_eq!(back.params.m, 4);
}

#[test]
fn truncated_file_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let params = small_instance(13);
    let (_, data, _) = generate_instance(&params).unwrap();
    let path: &Path = &dir.path().join("data.mtpr");
    write_dataset(path, &data).unwrap();
    let bytes = fs::read(path).unwrap();
    fs::write(path, &bytes[..bytes.len() - 17]).unwrap();
    assert!(matches!(
        read_dataset(path),
        Err(FormatError::Truncated { .. })
    ));
}

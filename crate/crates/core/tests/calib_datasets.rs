use std::path::{Path, PathBuf};

use lenssweep::calib::{
    calc_dof_cond, harmonize_dataset, AnnsSource, DatasetKind, DofInputs, HarmonizeDefaults,
    HarmonizeOutput, ANNS_SCHEMA,
};
use lenssweep::io_formats::{decode_jsonl, encode_jsonl, read_pfm};
use serde_json::Value;

fn fixture(kind: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/calib")
        .join(kind)
}

fn round_trip(out: &HarmonizeOutput) -> HarmonizeOutput {
    let text = encode_jsonl(&out.records().unwrap()).unwrap();
    let values: Vec<Value> = decode_jsonl(&text, Some(ANNS_SCHEMA)).unwrap();
    HarmonizeOutput::from_records(values).unwrap()
}

#[test]
fn dpdd_groups_pair_extreme_apertures() {
    let out = harmonize_dataset(
        DatasetKind::Dpdd,
        &fixture("dpdd"),
        &HarmonizeDefaults::default(),
    )
    .unwrap();
    assert_eq!(out.rows.len(), 3);
    assert_eq!(out.trailer.rows, 3);
    assert_eq!(
        out.trailer.skipped, 1,
        "exposure with infinite focus is skipped"
    );
    for (g, row) in out.rows.iter().enumerate() {
        assert_eq!(row.input, format!("group{g}_0.CR2"));
        assert_eq!(row.target, format!("group{g}_2.CR2"));
        let a = &row.camera_anns;
        assert_eq!(a.aperture, 2.8);
        assert!((a.sensor_width_mm - 36.0).abs() < 1e-6);
        assert_eq!(a.source, AnnsSource::Exif);
        assert!((0.0..=30.0).contains(&a.dof_cond));
        let expected = calc_dof_cond(
            &DofInputs {
                aperture: Some(2.8),
                focal_length_mm: Some(a.focal_length_mm),
                sensor_width_mm: Some(a.sensor_width_mm),
                focus_distance_m: Some(a.focus_distance_m),
            },
            6720,
            512,
        )
        .unwrap();
        assert_eq!(a.dof_cond, expected);
    }
    assert_eq!(round_trip(&out), out);
}

#[test]
fn aperture_triplets_share_source_and_focus() {
    let out = harmonize_dataset(
        DatasetKind::Aperture,
        &fixture("aperture"),
        &HarmonizeDefaults::default(),
    )
    .unwrap();
    assert_eq!(out.rows.len(), 4);
    assert_eq!(out.trailer.skipped, 0);
    let expected_focus = [1.2, 2.0];
    for (s, pair) in out.rows.chunks(2).enumerate() {
        assert_eq!(pair[0].input, pair[1].input);
        assert_eq!(pair[0].input, format!("scene{s}/f22.png"));
        let (a, b) = (&pair[0].camera_anns, &pair[1].camera_anns);
        assert_eq!(a.focus_distance_m, b.focus_distance_m);
        assert!(
            (a.focus_distance_m - expected_focus[s]).abs() < 1e-6,
            "{}",
            a.focus_distance_m
        );
        assert_ne!(a.dof_cond, b.dof_cond);
        assert_eq!(a.source, AnnsSource::DepthMedian);
        assert_eq!(
            a.dof_cond_crop,
            Some(a.dof_cond),
            "crop factor 1 leaves dof-cond unchanged"
        );
    }
    let apertures: Vec<f64> = out.rows.iter().map(|r| r.camera_anns.aperture).collect();
    assert_eq!(apertures, vec![2.0, 8.0, 2.0, 8.0]);
    assert_eq!(round_trip(&out), out);
}

#[test]
fn aperture_overrides_apply() {
    let defaults = HarmonizeDefaults {
        focal_length_mm: Some(85.0),
        crop_factor: Some(1.6),
        sensor_width_mm: Some(22.5),
        ..HarmonizeDefaults::default()
    };
    let out = harmonize_dataset(DatasetKind::Aperture, &fixture("aperture"), &defaults).unwrap();
    let a = &out.rows[0].camera_anns;
    assert_eq!((a.focal_length_mm, a.sensor_width_mm), (85.0, 22.5));
    assert!((a.focal_length_35mm.unwrap() - 136.0).abs() < 1e-9);
    assert!((a.dof_cond_crop.unwrap() - a.dof_cond / 1.6).abs() < 1e-12);
}

#[test]
fn blb_manifest_rows_and_depth() {
    let aux = tempfile::tempdir().unwrap();
    let defaults = HarmonizeDefaults {
        aux_dir: Some(aux.path().to_path_buf()),
        ..HarmonizeDefaults::default()
    };
    let out = harmonize_dataset(DatasetKind::Blb, &fixture("blb"), &defaults).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert_eq!(out.trailer.skipped, 1, "render missing on disk");
    let narrow = &out.rows[0].camera_anns;
    let wide = &out.rows[1].camera_anns;
    assert!(
        (narrow.aperture - (1.4f64.ln() + 0.25 * (16f64.ln() - 1.4f64.ln())).exp()).abs() < 1e-9
    );
    assert!(wide.aperture > narrow.aperture);
    assert!(narrow.dof_cond > wide.dof_cond);
    assert_eq!(narrow.focal_length_mm, 50.0);
    assert_eq!(narrow.source, AnnsSource::RendererManifest);
    assert!(narrow.extra.contains_key("dof-cond-native"));

    let depth = read_pfm(Path::new(out.rows[0].depth.as_ref().unwrap())).unwrap();
    assert_eq!((depth.width, depth.height), (64, 48));
    assert!((depth.get(0, 0) - 20.0).abs() < 1e-3);
    assert!((depth.get(63, 0) - 0.5).abs() < 1e-4);
    assert_eq!(round_trip(&out), out);
}

#[test]
fn harmonization_is_deterministic() {
    let d = HarmonizeDefaults::default();
    for kind in [DatasetKind::Dpdd, DatasetKind::Aperture] {
        let name = if kind == DatasetKind::Dpdd {
            "dpdd"
        } else {
            "aperture"
        };
        let a = encode_jsonl(
            &harmonize_dataset(kind, &fixture(name), &d)
                .unwrap()
                .records()
                .unwrap(),
        )
        .unwrap();
        let b = encode_jsonl(
            &harmonize_dataset(kind, &fixture(name), &d)
                .unwrap()
                .records()
                .unwrap(),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}

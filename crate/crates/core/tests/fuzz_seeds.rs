//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, so regressions show up under a plain `cargo test`.

use std::fs;
use std::path::PathBuf;

use biomotion::batch::{parse_kv, SelectionStore, ToolKind, ToolParams};
use biomotion::c3d::{c3d_to_csv, csv_to_c3d, parse_triplet_csv, read_c3d, write_c3d};
use biomotion::cop::parse_cop_csv;
use biomotion::dlt::{parse_calibration_csv, parse_control_points, series_from_rows};
use biomotion::emg::parse_emg_csv;
use biomotion::forcecube::parse_force_csv;
use biomotion::kinematics::{imu_pipeline, parse_imu_output, ImuConfig};
use biomotion::model::LengthUnit;
use biomotion::tabular::{
    parse_landmarks, parse_sync_table, read_annotations, write_annotations, write_landmarks, LandmarkKind, RunManifest,
    Table,
};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text_seeds(target: &str) -> Vec<(String, String)> {
    seeds(target).into_iter().map(|(n, b)| (n, String::from_utf8(b).expect("text seed"))).collect()
}

#[test]
fn c3d_seeds() {
    let mut accepted = 0;
    for (name, data) in seeds("c3d_read") {
        let Ok(doc) = read_c3d(&data) else { continue };
        accepted += 1;
        let _ = c3d_to_csv(&doc);
        if let Ok(bytes) = write_c3d(&doc) {
            let back = read_c3d(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(back.points.marker_names(), doc.points.marker_names(), "{name}");
            assert_eq!(back.frame_count(), doc.frame_count(), "{name}");
        }
    }
    assert!(accepted >= 4);
}

#[test]
fn tabular_seeds() {
    for (name, s) in text_seeds("csv_table") {
        let t = Table::parse(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(t.rows.iter().all(|r| r.cells.len() == t.header.len()));
    }
    for (name, s) in text_seeds("landmarks") {
        let kind = if name.starts_with("normalized") { LandmarkKind::Normalized } else { LandmarkKind::Pixel };
        let t = parse_landmarks(&s, kind).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_landmarks(&write_landmarks(&t), kind).unwrap(), t);
    }
    for (name, s) in text_seeds("annotations") {
        let t = read_annotations(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(read_annotations(&write_annotations(&t)).unwrap(), t);
    }
    for (name, s) in text_seeds("sync_table") {
        parse_sync_table(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, s) in text_seeds("triplet_csv") {
        parse_triplet_csv(&s, 100.0).unwrap_or_else(|e| panic!("{name}: {e}"));
        csv_to_c3d(&s, 100.0).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn signal_seeds() {
    for (name, s) in text_seeds("force_csv") {
        parse_force_csv(&s, "Fz", None).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, s) in text_seeds("cop_csv") {
        parse_cop_csv(&s, "cx", "cy", None, LengthUnit::Cm).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, s) in text_seeds("emg_csv") {
        assert!(!parse_emg_csv(&s, None).unwrap_or_else(|e| panic!("{name}: {e}")).is_empty());
    }
    for (name, s) in text_seeds("imu_csv") {
        if name.starts_with("raw") {
            let out = imu_pipeline(&s, &ImuConfig::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
            parse_imu_output(&out.csv).unwrap();
        } else {
            parse_imu_output(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn dlt_seeds() {
    for (name, s) in text_seeds("dlt_csv") {
        if name.starts_with("control") {
            parse_control_points(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        } else {
            let rows = parse_calibration_csv(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
            series_from_rows(&rows).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn config_seeds() {
    for (name, s) in text_seeds("kv_config") {
        let kv = parse_kv(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        let applies = ToolKind::ALL.iter().any(|k| ToolParams::defaults(*k).with_overrides(&kv).is_ok());
        assert_eq!(applies, !name.starts_with("reject"), "{name}");
    }
    for (name, s) in text_seeds("manifest_json") {
        let m = RunManifest::from_json(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }
    for (name, s) in text_seeds("selections_json") {
        let store: SelectionStore = serde_json::from_str(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        for sel in store.files.values() {
            if let Some(f) = &sel.force {
                assert!(f.validate(0.0, 60.0).is_empty(), "{name}");
            }
        }
    }
}

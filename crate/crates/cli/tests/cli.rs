use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn biomotion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biomotion")).args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn emg_file(dir: &Path, name: &str, seed: u64) {
    let mut s = String::from("time,ch1\n");
    let mut x = seed.wrapping_add(0x9e3779b97f4a7c15);
    for k in 0..1500 {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        let v = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        s.push_str(&format!("{},{v:.6}\n", k as f64 / 1000.0));
    }
    fs::write(dir.join(name), s).unwrap();
}

#[test]
fn version_and_usage_exit_codes() {
    let out = biomotion(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(biomotion(&["emg", "--bogus"]).status.code(), Some(1));
    assert_eq!(biomotion(&[]).status.code(), Some(1));
}

#[test]
fn batch_partial_and_fatal_exit_codes() {
    let input = tempfile::tempdir().unwrap();
    let output = tempfile::tempdir().unwrap();
    for i in 0..3 {
        emg_file(input.path(), &format!("s{i}.csv"), i);
    }
    fs::write(input.path().join("broken.csv"), "time,ch1\n0,x\n").unwrap();
    let (i, o) = (input.path().to_str().unwrap(), output.path().to_str().unwrap());
    let out = biomotion(&["emg", "--input", i, "--output", o, "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    let err = text(&out.stderr);
    assert!(err.starts_with(&format!("biomotion {}: emg", env!("CARGO_PKG_VERSION"))), "{err}");
    assert!(err.contains("broken.csv"));
    assert!(text(&out.stdout).starts_with("partial: 3 succeeded, 1 failed"));

    fs::remove_file(input.path().join("broken.csv")).unwrap();
    assert_eq!(biomotion(&["emg", "--input", i, "--output", o]).status.code(), Some(0));

    let empty = tempfile::tempdir().unwrap();
    let out = biomotion(&["emg", "--input", empty.path().to_str().unwrap(), "--output", o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("no `.csv` files"));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("emg.conf");
    fs::write(&conf, "# lab defaults\nband_low_hz = 15\nrms_window_s = 0.2\n").unwrap();
    let c = conf.to_str().unwrap();
    let out = biomotion(&["emg", "--print-config", "--config", c, "--set", "rms_window_s=0.05"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.contains("band_low_hz = 15.0"), "{s}");
    assert!(s.contains("rms_window_s = 0.05"), "{s}");
    assert!(s.contains("band_high_hz = 450.0"), "{s}");
    assert_eq!(biomotion(&["emg", "--print-config", "--set", "nope=1"]).status.code(), Some(1));
}

/// Pinhole camera as 11 DLT coefficients: looks at the origin from
/// `(d sin a, -d cos a, h)`.
fn camera(a: f64, d: f64, h: f64) -> [f64; 11] {
    let c = [d * a.sin(), -d * a.cos(), h];
    let norm = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let fwd = norm([-c[0], -c[1], -c[2]]);
    let right = norm(cross(fwd, [0.0, 0.0, 1.0]));
    let down = cross(fwd, right);
    let (f, cx, cy) = (1000.0, 640.0, 360.0);
    let rows = [right, down, fwd];
    let t: Vec<f64> = rows.iter().map(|r| -(r[0] * c[0] + r[1] * c[1] + r[2] * c[2])).collect();
    let p = [
        [f * right[0] + cx * fwd[0], f * right[1] + cx * fwd[1], f * right[2] + cx * fwd[2], f * t[0] + cx * t[2]],
        [f * down[0] + cy * fwd[0], f * down[1] + cy * fwd[1], f * down[2] + cy * fwd[2], f * t[1] + cy * t[2]],
        [fwd[0], fwd[1], fwd[2], t[2]],
    ];
    let s = p[2][3];
    [
        p[0][0] / s, p[0][1] / s, p[0][2] / s, p[0][3] / s,
        p[1][0] / s, p[1][1] / s, p[1][2] / s, p[1][3] / s,
        p[2][0] / s, p[2][1] / s, p[2][2] / s,
    ]
}

fn project(l: &[f64; 11], p: [f64; 3]) -> (f64, f64) {
    let w = l[8] * p[0] + l[9] * p[1] + l[10] * p[2] + 1.0;
    (
        (l[0] * p[0] + l[1] * p[1] + l[2] * p[2] + l[3]) / w,
        (l[4] * p[0] + l[5] * p[1] + l[6] * p[2] + l[7]) / w,
    )
}

#[test]
fn dlt_calibrate_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let cams = [camera(0.3, 5.0, 1.5), camera(-0.6, 6.0, 2.0)];
    let mut control = Vec::new();
    for x in [-1.0, 1.0] {
        for y in [-1.0, 1.0] {
            for z in [0.0, 2.0] {
                control.push([x, y, z]);
            }
        }
    }
    control.push([0.2, -0.4, 0.7]);
    let mut cal_args = vec!["dlt", "calib3d"];
    let paths: Vec<String> = (0..2).map(|c| dir.path().join(format!("cp{c}.csv")).display().to_string()).collect();
    for (c, l) in cams.iter().enumerate() {
        let mut s = String::from("x,y,z,u,v\n");
        for p in &control {
            let (u, v) = project(l, *p);
            s.push_str(&format!("{},{},{},{u:.12},{v:.12}\n", p[0], p[1], p[2]));
        }
        fs::write(&paths[c], s).unwrap();
    }
    for p in &paths {
        cal_args.extend(["--input", p.as_str()]);
    }
    let calib = dir.path().join("calib.csv");
    cal_args.extend(["--output", calib.to_str().unwrap()]);
    let out = biomotion(&cal_args);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let cal_text = fs::read_to_string(&calib).unwrap();
    assert!(cal_text.starts_with("camera,L1,L2,L3,L4,L5,L6,L7,L8,L9,L10,L11,residual\n"));

    let track: Vec<[f64; 3]> = (0..5).map(|k| [0.1 * k as f64, 0.3, 0.5 + 0.05 * k as f64]).collect();
    let mut views = Vec::new();
    for (c, l) in cams.iter().enumerate() {
        let mut s = String::from("frame,wrist_x,wrist_y\n");
        for (k, p) in track.iter().enumerate() {
            let (u, v) = project(l, *p);
            s.push_str(&format!("{k},{u:.12},{v:.12}\n"));
        }
        let path = dir.path().join(format!("view{c}.csv"));
        fs::write(&path, s).unwrap();
        views.push(path.display().to_string());
    }
    let result = dir.path().join("wrist.csv");
    let out = biomotion(&[
        "dlt", "rec3d", "--calib", calib.to_str().unwrap(), "--input", &views[0], "--input", &views[1], "--output",
        result.to_str().unwrap(), "--rate", "50",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let got = fs::read_to_string(&result).unwrap();
    let mut lines = got.lines();
    assert_eq!(lines.next(), Some("time,wrist_X,wrist_Y,wrist_Z"));
    for (k, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[0] - k as f64 / 50.0).abs() < 1e-12);
        for a in 0..3 {
            assert!((v[1 + a] - track[k][a]).abs() < 1e-6, "frame {k}: {line}");
        }
    }
}

#[test]
fn landmarks_plot_and_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let norm = dir.path().join("pose.csv");
    fs::write(&norm, "frame,nose_x,nose_y\n0,0.5,0.25\n1,,\n").unwrap();
    let px = dir.path().join("pose_px.csv");
    let out = biomotion(&[
        "landmarks", "to-pixel", "--input", norm.to_str().unwrap(), "--output", px.to_str().unwrap(), "--width", "1920",
        "--height", "1080",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(fs::read_to_string(&px).unwrap(), "frame,nose_x,nose_y\n0,960,270\n1,,\n");

    let sync = dir.path().join("sync.csv");
    fs::write(&sync, "video_name,offset_frames,start_frame,end_frame\npose_px,1,0,0\n").unwrap();
    let cut = dir.path().join("cut.csv");
    let out = biomotion(&[
        "landmarks", "sync-apply", "--input", px.to_str().unwrap(), "--sync", sync.to_str().unwrap(), "--output",
        cut.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(fs::read_to_string(&cut).unwrap(), "frame,nose_x,nose_y\n0,,\n");

    let data = dir.path().join("sig.csv");
    fs::write(&data, "time,a,b\n0,1,2\n0.1,2,1\n0.2,3,0\n").unwrap();
    let svg = dir.path().join("sig.svg");
    let out = biomotion(&["plot", "--input", data.to_str().unwrap(), "--output", svg.to_str().unwrap(), "--columns", "a,b"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("<polyline").count(), 2);

    let mocap = tempfile::tempdir().unwrap();
    let mut s = String::from("time,A_X,A_Y,A_Z,B_X,B_Y,B_Z,C_X,C_Y,C_Z\n");
    for k in 0..10 {
        let t = k as f64 * 0.01;
        let (c, sn) = (t.cos(), t.sin());
        s.push_str(&format!("{t},0,0,0,{c},{sn},0,{},{},0\n", -sn, c));
    }
    fs::write(mocap.path().join("trial.csv"), s).unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = biomotion(&[
        "cluster", "--input", mocap.path().to_str().unwrap(), "--output", out_dir.path().to_str().unwrap(), "--cluster",
        "thigh=A,B,C", "--set", "input_format=csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}{}", text(&out.stderr), text(&out.stdout));
    let run = fs::read_dir(out_dir.path()).unwrap().next().unwrap().unwrap().path();
    let csv = fs::read_to_string(run.join("trial_cluster.csv")).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((last[3] - 0.09f64.to_degrees()).abs() < 1e-6, "{csv}");
}

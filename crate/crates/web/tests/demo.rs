use crane_lab_web::demo::{camera_view, damping_trace, length_trace, DAMPING_STRIDE, LENGTH_STRIDE};

#[test]
fn damping_trace_rows_and_decay() {
    let data = damping_trace(0.2, 10.0, 1).unwrap();
    assert_eq!(data.len() % DAMPING_STRIDE, 0);
    let rows: Vec<&[f64]> = data.chunks(DAMPING_STRIDE).collect();
    assert!(rows[0][3].is_nan());
    let early = rows.iter().filter(|r| r[0] < 2.0).map(|r| r[1].abs()).fold(0.0, f64::max);
    let late = rows.iter().filter(|r| r[0] > 20.0).map(|r| r[1].abs()).fold(0.0, f64::max);
    assert!(early > 9.0, "early amplitude {early}");
    assert!(late < 0.5, "late amplitude {late}");
    let envelope_start = rows.iter().find(|r| !r[3].is_nan()).unwrap()[3];
    assert!((envelope_start - 10.0).abs() < 1.0, "{envelope_start}");
}

#[test]
fn damping_trace_rejects_bad_zeta() {
    assert!(damping_trace(1.5, 10.0, 1).is_err());
}

#[test]
fn length_trace_converges_to_truth() {
    let data = length_trace(15.0, 0.5, 1).unwrap();
    assert_eq!(data.len() % LENGTH_STRIDE, 0);
    let last = &data[data.len() - LENGTH_STRIDE..];
    assert!((last[1] / last[3] - 1.0).abs() < 0.05, "{last:?}");
    assert_eq!(data[1], 0.5);
}

#[test]
fn camera_view_sees_both_markers_in_all_cameras() {
    let px = camera_view(0.5, 0.0, 0.0).unwrap();
    assert_eq!(px.len(), 12);
    assert!(px.iter().all(|v| v.is_finite()));
    // marker 2 hangs below marker 1
    for cam in px.chunks(4) {
        assert!(cam[3] > cam[1]);
    }
}

#[test]
fn camera_view_shifts_with_swing() {
    let rest = camera_view(0.5, 0.0, 0.0).unwrap();
    let swung = camera_view(0.5, 10.0, 0.0).unwrap();
    let shift = |k: usize| (rest[k] - swung[k]).hypot(rest[k + 1] - swung[k + 1]);
    // the lower marker sits further down the cable and moves more
    assert!(shift(2) > shift(0) && shift(0) > 1.0, "{} {}", shift(0), shift(2));
}

//! External detector client against the scripted mock adapter process.

use std::time::{Duration, Instant};

use artwalk::detect::protocol::Message;
use artwalk::detect::{Detection, Detector, ExternalDetector};
use artwalk::raster::Raster;
use artwalk::{Error, Raster64};

fn adapter(mode: &str) -> String {
    format!("{} {mode}", env!("CARGO_BIN_EXE_artwalk-mock-adapter"))
}

fn image() -> Raster64 {
    Raster::from_fn(16, 12, 3, |x, y, px| px.fill(((x + y) % 7) as f64 / 7.0)).unwrap()
}

#[test]
fn fixed_list_round_trips() {
    let dets = vec![Detection::new(1.0, 2.0, 3.0, 4.0, 0.75), Detection::new(5.5, 0.0, 2.0, 2.0, 0.1)];
    let json = serde_json::to_string(&dets).unwrap();
    let mut d = ExternalDetector::spawn(&adapter(&format!("fixed '{json}'")), Duration::from_secs(10)).unwrap();
    assert_eq!(d.name(), "mock");
    assert_eq!(d.classes(), ["person"]);
    for _ in 0..3 {
        assert_eq!(d.detect(&image()).unwrap(), dets);
    }
}

#[test]
fn out_of_range_objectness_is_protocol_error() {
    let mut d = ExternalDetector::spawn(&adapter("bad-objectness"), Duration::from_secs(10)).unwrap();
    match d.detect(&image()) {
        Err(Error::Protocol { raw, .. }) => assert!(raw.contains("1.5"), "{raw}"),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn slow_adapter_times_out() {
    let mut d = ExternalDetector::spawn(&adapter("sleep 3000"), Duration::from_millis(300)).unwrap();
    let t = Instant::now();
    assert!(matches!(d.detect(&image()), Err(Error::AdapterTimeout(_))));
    assert!(t.elapsed() < Duration::from_secs(2));
}

#[test]
fn crashed_adapter_is_dead() {
    let mut d = ExternalDetector::spawn(&adapter("crash"), Duration::from_secs(10)).unwrap();
    let err = d.detect(&image()).unwrap_err();
    assert!(matches!(err, Error::AdapterDead(_)), "{err:?}");
    assert!(err.is_adapter_failure());
}

#[test]
fn garbage_keeps_raw_payload() {
    let mut d = ExternalDetector::spawn(&adapter("garbage"), Duration::from_secs(10)).unwrap();
    match d.detect(&image()) {
        Err(Error::Protocol { raw, .. }) => assert!(!raw.is_empty()),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn adapter_error_reply_surfaces() {
    let mut d = ExternalDetector::spawn(&adapter("refuse"), Duration::from_secs(10)).unwrap();
    assert!(matches!(d.detect(&image()), Err(Error::Protocol { .. })));
}

#[test]
fn missing_handshake_fails_spawn() {
    assert!(ExternalDetector::spawn("exit 0", Duration::from_secs(5)).is_err());
    let err = ExternalDetector::spawn("echo '{\"type\":\"detections\",\"id\":0,\"detections\":[]}'; sleep 1", Duration::from_secs(5))
        .err()
        .unwrap();
    assert!(matches!(err, Error::Protocol { .. }), "{err:?}");
}

#[test]
fn request_is_one_json_line_with_png() {
    let line = Message::detect(7, &image()).unwrap().to_line();
    assert!(!line.contains('\n'));
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["type"], "detect");
    assert_eq!(v["id"], 7);
    assert!(v["image_png_b64"].as_str().unwrap().starts_with("iVBOR"));
}

use std::io::Write;

use cpvbench::env::{
    load_weather, read_weather, sun_path, synth_weather, write_weather, CloudEvent, DayConfig, EnvError,
    SynthWeatherConfig,
};
use cpvbench::presets::demo_weather;

const DAY0: i64 = 19_219 * 86_400;

#[test]
fn synthetic_weather_is_seeded() {
    let cfg = demo_weather(2);
    let a = synth_weather(&cfg, 5).unwrap();
    assert_eq!(a, synth_weather(&cfg, 5).unwrap());
    assert_ne!(a, synth_weather(&cfg, 6).unwrap());
    assert!(a.samples().windows(2).all(|w| w[1].timestamp - w[0].timestamp >= 10));
    assert!(a.samples().iter().all(|s| s.dni >= 0.0 && s.diffuse >= 0.0));
}

#[test]
fn clear_day_shape() {
    let w = synth_weather(&SynthWeatherConfig::default(), 0).unwrap();
    let noon = w.nearest(DAY0 + 13 * 3600).unwrap();
    assert!((noon.dni - 950.0).abs() < 1e-9);
    assert!((noon.t_ambient - 26.0).abs() < 1e-9);
    let morning = w.nearest(DAY0 + 8 * 3600).unwrap();
    assert!(morning.dni < noon.dni && morning.t_ambient < noon.t_ambient);
}

#[test]
fn cloud_caps_dni() {
    let cfg = SynthWeatherConfig {
        clouds: vec![CloudEvent { day: 0, start_hour: 12.0, duration_min: 30.0, dni_wm2: 200.0, diffuse_wm2: 300.0 }],
        ..SynthWeatherConfig::default()
    };
    let w = synth_weather(&cfg, 0).unwrap();
    let inside = w.window(DAY0 + 12 * 3600, DAY0 + 12 * 3600 + 1799);
    assert!(!inside.is_empty());
    assert!(inside.iter().all(|s| s.dni <= 200.0 && s.diffuse >= 300.0));
    assert!(w.nearest(DAY0 + 13 * 3600).unwrap().dni > 900.0);
}

#[test]
fn csv_round_trip_through_a_file() {
    let w = synth_weather(&demo_weather(1), 3).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write_weather(&w, &mut file).unwrap();
    file.flush().unwrap();
    let back = load_weather(file.path()).unwrap();
    assert_eq!(back.len(), w.len());
    for (a, b) in back.samples().iter().zip(w.samples()) {
        assert_eq!(a, b);
    }
}

#[test]
fn malformed_files_are_refused() {
    let header = "timestamp_utc,dni_wm2,dhi_wm2,t_ambient_c\n";
    let cases = [
        format!("{header}2022-08-15T10:00:00Z,900,80,20\n2022-08-15T10:00:00Z,900,80,20\n"),
        format!("{header}2022-08-15T10:00:00Z,-5,80,20\n"),
        format!("{header}yesterday,900,80,20\n"),
        "timestamp_utc,dni_wm2\n2022-08-15T10:00:00Z,900\n".to_string(),
    ];
    for text in &cases {
        assert!(read_weather(text.as_bytes()).is_err(), "{text}");
    }
    assert!(matches!(read_weather(cases[0].as_bytes()), Err(EnvError::NonMonotone { line: 3, .. })));
    assert!(matches!(load_weather("/nonexistent/weather.csv".as_ref()), Err(EnvError::Io { .. })));
}

#[test]
fn sun_is_highest_at_solar_noon() {
    let day = DayConfig::default();
    let el = |h: f64| sun_path(DAY0 + (h * 3600.0) as i64, &day).unwrap().true_elevation;
    assert!((el(13.0) - 60.0).abs() < 1e-9);
    assert!(el(9.0) < el(11.0) && el(15.0) < el(13.0));
    assert!(sun_path(DAY0 + 3 * 3600, &day).is_err());
}

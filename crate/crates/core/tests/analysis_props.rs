use cpvbench::analysis::{
    acceptance_angle, build_map, contour90, effective_concentration, efficiency, filter_samples, fit_law, regress_csoc,
    AnalysisError, FilterConfig, MapGrid, MapPoint, RatingConfig, RegressionMode,
};
use cpvbench::campaign::MeasurementRecord;
use cpvbench::env::{WeatherSample, WeatherSeries};
use cpvbench::meter::IVSummary;
use cpvbench::optics::AzEl;
use cpvbench::tracker::TrackingMode;
use proptest::prelude::*;

fn record(t: i64, w: WeatherSample, isc: f64, p_max: f64) -> MeasurementRecord {
    MeasurementRecord {
        timestamp: t,
        submodule_id: "A".into(),
        mode: TrackingMode::ScanAlign,
        pointing: AzEl::new(180.0, 50.0),
        deviation: 0.0,
        summary: IVSummary { isc, voc: 2.8, p_max, v_mp: 2.4, i_mp: p_max / 2.4, ff: p_max / (isc * 2.8) },
        weather: w,
    }
}

fn weather_strategy() -> impl Strategy<Value = Vec<WeatherSample>> {
    prop::collection::vec((600.0f64..1000.0, 50.0f64..200.0, 0.0f64..40.0), 60..200).prop_map(|rows| {
        let mut dni = 850.0;
        rows.into_iter()
            .enumerate()
            .map(|(k, (d, diffuse, t))| {
                // mostly smooth, occasionally jumping, so every rule gets exercised
                dni = if k % 17 == 0 { d } else { 0.995 * dni + 0.005 * d };
                WeatherSample { timestamp: 10 * k as i64, dni, diffuse, t_ambient: t }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn filtering_is_idempotent(samples in weather_strategy()) {
        let series = WeatherSeries::new(samples.clone()).unwrap();
        let records: Vec<_> = samples.iter().map(|w| record(w.timestamp, *w, 0.2, 0.4)).collect();
        let cfg = FilterConfig::default();
        let once = filter_samples(&records, &series, &cfg).unwrap();
        prop_assert_eq!(once.kept.len() + once.rejected.len(), records.len());
        let twice = filter_samples(&once.kept, &series, &cfg).unwrap();
        prop_assert!(twice.rejected.is_empty());
        prop_assert_eq!(twice.kept, once.kept);
    }

    #[test]
    fn planted_law_is_recovered(
        a in 1e-4f64..3e-4,
        b in -5e-8f64..5e-8,
        c in -1e-6f64..1e-6,
        pts in prop::collection::vec((700.0f64..1000.0, 5.0f64..35.0), 20..80),
    ) {
        let dni: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ta: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let y: Vec<f64> = pts.iter().map(|&(d, t)| d * (a + b * d + c * t)).collect();
        let fit = fit_law(&dni, &ta, &y, RegressionMode::Astm).unwrap();
        prop_assume!(!fit.reduced);
        for (&(d, t), &v) in pts.iter().zip(&y) {
            prop_assert!((fit.predict(d, t) - v).abs() <= 1e-9 * v.abs().max(1e-3));
        }
        let at_ref = 900.0 * (a + b * 900.0 + c * 20.0);
        prop_assert!((fit.predict(900.0, 20.0) - at_ref).abs() <= 1e-9 * at_ref);
    }

    #[test]
    fn concentration_and_efficiency_are_homogeneous(isc in 0.01f64..0.5, p in 0.01f64..1.0, k in 0.1f64..10.0) {
        let c = effective_concentration(isc, 13.0, 0.0655).unwrap();
        let ck = effective_concentration(k * isc, 13.0, 0.0655).unwrap();
        prop_assert!((ck / c - k).abs() < 1e-12 * k);
        let e = efficiency(p, 900.0, 16.42).unwrap();
        prop_assert!((efficiency(k * p, 900.0, 16.42).unwrap() / e - k).abs() < 1e-12 * k);
        prop_assert!((efficiency(p, k * 900.0, 16.42).unwrap() * k / e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_angle_ignores_signal_scale(scale in 1e-3f64..1e3, theta90 in 0.3f64..1.5) {
        let samples: Vec<(f64, f64)> = (0..=300)
            .map(|k| {
                let x = 3.0 * k as f64 / 300.0;
                (x, 0.9f64.powf((x / theta90).powi(2)))
            })
            .collect();
        let scaled: Vec<(f64, f64)> = samples.iter().map(|&(x, v)| (x, scale * v)).collect();
        let (a, b) = (acceptance_angle(&samples).unwrap(), acceptance_angle(&scaled).unwrap());
        prop_assert_eq!(a.samples_used, b.samples_used);
        prop_assert!((a.angle - b.angle).abs() < 1e-12);
        prop_assert!((a.angle - theta90).abs() < 0.05 * theta90);
    }
}

fn grid_points(grid: &MapGrid, f: impl Fn(f64, f64) -> f64) -> Vec<MapPoint> {
    grid.el
        .iter()
        .flat_map(|&y| grid.az.iter().map(move |&x| (x, y)))
        .map(|(x, y)| MapPoint { d_az: x, d_el: y, value: f(x, y) })
        .collect()
}

fn lens(a: f64, b: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| 0.9f64.powf((x / a).powi(2) + (y / b).powi(2))
}

#[test]
fn circular_contour_radius() {
    let grid = MapGrid::regular(3.0, 0.1);
    let map = build_map(&grid_points(&grid, lens(0.78, 0.78)), &grid).unwrap();
    let c = contour90(&map).unwrap();
    assert!(c.signed_area() > 0.0);
    for &(x, y) in &c.polygon {
        assert!((x.hypot(y) - 0.78).abs() < 0.025, "{x} {y}");
    }
    let (cx, cy) = c.centroid();
    assert!(cx.abs() < 1e-6 && cy.abs() < 1e-6);
}

#[test]
fn elliptical_contour_semi_axes() {
    let grid = MapGrid::regular(3.0, 0.1);
    let map = build_map(&grid_points(&grid, lens(0.9, 0.7)), &grid).unwrap();
    let c = contour90(&map).unwrap();
    let (sa, sb) = c.semi_axes();
    assert!((sa - 0.9).abs() < 0.02, "{sa}");
    assert!((sb - 0.7).abs() < 0.02, "{sb}");
}

#[test]
fn contour_encloses_off_centre_maximum() {
    let grid = MapGrid::regular(3.0, 0.25);
    let f = lens(0.78, 0.78);
    let map = build_map(&grid_points(&grid, |x, y| f(x - 0.4, y + 0.3)), &grid).unwrap();
    let c = contour90(&map).unwrap();
    assert_eq!(c.peak, (0.5, -0.25));
    assert!(c.contains(c.peak));
    assert!(!c.contains((-1.0, 1.0)));
}

#[test]
fn missing_node_is_refilled_from_its_neighbours() {
    let grid = MapGrid::regular(2.0, 0.5);
    let f = |x: f64, y: f64| 2.0 + x - 0.5 * y;
    let pts: Vec<_> = grid_points(&grid, f).into_iter().filter(|p| (p.d_az, p.d_el) != (0.0, 0.5)).collect();
    let map = build_map(&pts, &grid).unwrap();
    let (i, j) = (2, 3);
    assert!(!map.measured[j * map.n_az() + i]);
    let max = pts.iter().map(|p| p.value).fold(f64::MIN, f64::max);
    assert!((map.get(i, j).unwrap() - f(0.0, 0.5) / max).abs() < 1e-12);
}

#[test]
fn unmeasured_half_frame_is_flagged() {
    let grid = MapGrid::regular(3.0, 0.25);
    let pts: Vec<_> = grid_points(&grid, lens(0.78, 0.78)).into_iter().filter(|p| p.d_az <= 0.0).collect();
    let map = build_map(&pts, &grid).unwrap();
    for j in 0..map.n_el() {
        for i in 0..map.n_az() {
            assert_eq!(map.is_flagged(i, j), grid.az[i] > 0.0, "{i} {j}");
        }
    }
    assert_eq!(contour90(&map).unwrap_err(), AnalysisError::ContourExceedsFrame);
}

#[test]
fn broad_response_exceeds_frame() {
    let grid = MapGrid::regular(3.0, 0.25);
    let map = build_map(&grid_points(&grid, lens(4.0, 4.0)), &grid).unwrap();
    assert_eq!(contour90(&map).unwrap_err(), AnalysisError::ContourExceedsFrame);
}

#[test]
fn uniform_map_is_refused() {
    let grid = MapGrid::regular(3.0, 0.25);
    let map = build_map(&grid_points(&grid, |_, _| 0.5), &grid).unwrap();
    assert_eq!(contour90(&map).unwrap_err(), AnalysisError::UniformMap);
}

#[test]
fn profile_without_a_crossing_asks_for_a_finer_step() {
    let samples: Vec<(f64, f64)> = (0..20).map(|k| (0.05 * k as f64, 1.0 - 0.002 * k as f64)).collect();
    assert_eq!(acceptance_angle(&samples).unwrap_err(), AnalysisError::NoCrossing);
    let coarse = [(0.0, 1.0), (0.5, 0.95), (1.0, 0.8)];
    assert_eq!(acceptance_angle(&coarse).unwrap_err(), AnalysisError::NoCrossing);
}

fn clear_records(n: usize, dni_lo: f64, dni_hi: f64) -> Vec<MeasurementRecord> {
    (0..n)
        .map(|k| {
            let dni = dni_lo + (dni_hi - dni_lo) * k as f64 / (n.max(2) - 1) as f64;
            let t_ambient = 15.0 + (k % 7) as f64;
            let w = WeatherSample { timestamp: 10 * k as i64, dni, diffuse: 80.0, t_ambient };
            let isc = 2.2e-4 * dni;
            record(w.timestamp, w, isc, isc * 2.8 * (0.82 - 5e-5 * dni))
        })
        .collect()
}

#[test]
fn too_few_samples_or_narrow_dni_are_refused() {
    let cfg = RatingConfig::default();
    let err = regress_csoc(&clear_records(19, 760.0, 1000.0), 16.42, &cfg).unwrap_err();
    assert_eq!(err, AnalysisError::InsufficientData { n: 19, min: 20 });
    assert_eq!(err.to_string(), "insufficient filtered data (n = 19, need 20)");
    assert!(matches!(regress_csoc(&clear_records(40, 800.0, 880.0), 16.42, &cfg), Err(AnalysisError::DniSpan { .. })));
}

#[test]
fn rating_modes_agree_on_a_linear_module() {
    let records = clear_records(40, 760.0, 1000.0);
    for mode in [RegressionMode::Astm, RegressionMode::Linear] {
        let cfg = RatingConfig { mode, ..RatingConfig::default() };
        let r = regress_csoc(&records, 16.42, &cfg).unwrap();
        assert!((r.isc_csoc - 2.2e-4 * 900.0).abs() < 1e-9, "{mode:?}");
        assert_eq!(r.n_samples, 40);
        assert_eq!(r.isc_fit.mode, mode);
    }
    let linear =
        regress_csoc(&records, 16.42, &RatingConfig { mode: RegressionMode::Linear, ..RatingConfig::default() })
            .unwrap();
    assert_eq!(linear.isc_fit.coefficients.len(), 1);
}

#[test]
fn constant_temperature_falls_back_to_the_reduced_law() {
    let dni: Vec<f64> = (0..30).map(|k| 760.0 + 8.0 * k as f64).collect();
    let ta = vec![20.0; 30];
    let y: Vec<f64> = dni.iter().map(|d| d * (2e-4 - 1e-8 * d)).collect();
    let fit = fit_law(&dni, &ta, &y, RegressionMode::Astm).unwrap();
    assert!(fit.reduced);
    assert_eq!(fit.coefficients.len(), 2);
    assert!((fit.coefficients[0] - 2e-4).abs() < 1e-12 && (fit.coefficients[1] + 1e-8).abs() < 1e-15);
}

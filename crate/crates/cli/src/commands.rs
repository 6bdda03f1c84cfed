//! The four subcommands. Each writes its files under an output directory
//! and its human-readable summary to the given stream.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cpvbench::analysis::{
    analyze_sessions, ctm, effective_concentration, efficiency, ff_slope, filter_samples, regress_csoc, CsocRating,
    FfSlope, FilterRule, MapPoint,
};
use cpvbench::campaign::{
    read_log, read_session, run_acceptance_session, run_campaign, write_session, CsvLogSink, MeasurementRecord,
};
use cpvbench::cell::SubModuleSpec;
use cpvbench::env::{format_timestamp, write_weather, WeatherSeries};
use cpvbench::presets::{CELL_AREA_CM2, CSOC_DNI, GEOMETRIC_CONCENTRATION, LENS_APERTURE_CM2, PUBLISHED_ROWS};
use rayon::prelude::*;

use crate::scenario::Scenario;
use crate::{io_error, CliError};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_error(path, e))
}

fn emit(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

/// Writes a whole table; `rows` are already formatted.
fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn session_file_name(id: &str, index: usize, n_sessions: usize) -> String {
    if n_sessions == 1 {
        format!("acceptance_{id}.csv")
    } else {
        format!("acceptance_{id}_{}.csv", index + 1)
    }
}

/// Runs the campaign and any configured acceptance sessions.
///
/// Files: `measurements.csv`, `skips.csv`, `weather.csv`, one
/// `acceptance_<ID>[_<k>].csv` per session and sub-module, and a
/// `sessions.csv` index giving each session's mean sun elevation.
pub fn simulate(scenario: &Scenario, out_dir: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    create_dir(out_dir)?;
    let weather = scenario.weather()?;
    let weather_path = out_dir.join("weather.csv");
    let file = File::create(&weather_path).map_err(|e| io_error(&weather_path, e))?;
    write_weather(&weather, BufWriter::new(file)).map_err(|e| io_error(&weather_path, e))?;

    let log_path = out_dir.join("measurements.csv");
    let file = File::create(&log_path).map_err(|e| io_error(&log_path, e))?;
    let mut sink = CsvLogSink::new(BufWriter::new(file))?;
    log::info!("running campaign `{}` over {} weather samples", scenario.name, weather.len());
    let log = run_campaign(&scenario.rig, &weather, &mut sink)?;
    sink.into_inner()?.flush().map_err(|e| io_error(&log_path, e))?;

    write_table(
        &out_dir.join("skips.csv"),
        &["timestamp_utc", "submodule", "reason"],
        log.skips.iter().map(|s| vec![format_timestamp(s.timestamp), s.submodule_id.clone(), s.reason.clone()]),
    )?;

    let mut index = Vec::new();
    for (k, plan) in scenario.sessions.iter().enumerate() {
        for id in &scenario.session_submodules {
            let session = run_acceptance_session(&scenario.rig, &weather, id, plan)?;
            let name = session_file_name(id, k, scenario.sessions.len());
            let path = out_dir.join(&name);
            let file = File::create(&path).map_err(|e| io_error(&path, e))?;
            write_session(id, &session.samples, BufWriter::new(file))?;
            let n = session.samples.len().max(1) as f64;
            let elevation = session.samples.iter().map(|s| s.sun_elevation).sum::<f64>() / n;
            if session.aborted {
                log::warn!("session {name} aborted after {} samples", session.samples.len());
            }
            index.push(vec![
                name,
                id.clone(),
                format_timestamp(plan.start),
                format!("{elevation:.4}"),
                session.samples.len().to_string(),
                session.aborted.to_string(),
                session.degenerate.to_string(),
            ]);
        }
    }
    if !index.is_empty() {
        write_table(
            &out_dir.join("sessions.csv"),
            &["file", "submodule", "start_utc", "sun_elevation_deg", "samples", "aborted", "degenerate"],
            index,
        )?;
    }

    for spec in &scenario.rig.submodules {
        let recs: Vec<&MeasurementRecord> = log.records.iter().filter(|r| r.submodule_id == spec.id).collect();
        let skips = log.skips.iter().filter(|s| s.submodule_id == spec.id).count();
        let mean_isc = recs.iter().map(|r| r.summary.isc).sum::<f64>() / recs.len().max(1) as f64;
        emit(
            stdout,
            format!("{}: {} records, {} skipped, mean Isc {:.1} mA", spec.id, recs.len(), skips, 1e3 * mean_isc),
        )?;
    }
    Ok(())
}

/// Rating of one sub-module.
#[derive(Debug, Clone)]
pub struct SubModuleReport {
    pub id: String,
    pub kept: Vec<MeasurementRecord>,
    /// Rejections per filter rule, in rule order.
    pub rejected: Vec<(&'static str, usize)>,
    pub rating: CsocRating,
    pub c_eff: f64,
    pub ctm: f64,
    pub ff_slope: FfSlope,
}

fn rate_one(
    spec: &SubModuleSpec,
    records: &[MeasurementRecord],
    weather: &WeatherSeries,
    scenario: &Scenario,
) -> Result<SubModuleReport, String> {
    let mine: Vec<MeasurementRecord> = records.iter().filter(|r| r.submodule_id == spec.id).cloned().collect();
    let outcome = filter_samples(&mine, weather, &scenario.filter).map_err(|e| e.to_string())?;
    let rejected = [FilterRule::Temperature, FilterRule::Dni, FilterRule::Diffuse, FilterRule::DniStability]
        .map(|rule| (rule.as_str(), outcome.rejected.iter().filter(|r| r.rule == rule).count()))
        .to_vec();
    let rating = regress_csoc(&outcome.kept, spec.lens_aperture, &scenario.rating).map_err(|e| e.to_string())?;
    let c_eff = effective_concentration(rating.isc_csoc, spec.jsc_eqe, spec.cell_area).map_err(|e| e.to_string())?;
    let ctm = ctm(c_eff, spec.c_geo).map_err(|e| e.to_string())?;
    let ff_slope = ff_slope(&outcome.kept, &scenario.rating).map_err(|e| e.to_string())?;
    Ok(SubModuleReport { id: spec.id.clone(), kept: outcome.kept, rejected, rating, c_eff, ctm, ff_slope })
}

fn report_text(r: &SubModuleReport, decimals: usize) -> Vec<String> {
    let d = decimals;
    let rej: Vec<String> = r.rejected.iter().map(|(k, v)| format!("{k} {v}")).collect();
    let mut lines = vec![
        format!("[{}]", r.id),
        format!("  samples kept        {} (rejected: {})", r.kept.len(), rej.join(", ")),
        format!("  Isc at CSOC         {:.d$} mA", 1e3 * r.rating.isc_csoc),
        format!("  Pmax at CSOC        {:.d$} mW", 1e3 * r.rating.pmax_csoc),
        format!("  Voc (mean)          {:.d$} V", r.rating.voc_mean),
        format!("  FF at CSOC          {:.d$} %", 100.0 * r.rating.ff_csoc),
        format!("  efficiency          {:.d$} %", 100.0 * r.rating.efficiency_csoc),
        format!("  C_eff               {:.d$}", r.c_eff),
        format!("  CTM                 {:.d$} %", 100.0 * r.ctm),
        format!("  FF slope            {:.3e} per W/m²", r.ff_slope.slope),
    ];
    if r.rating.reduced_model() {
        lines.push("  note: temperature term dropped (rank-deficient design)".into());
    }
    lines
}

fn table2_lines() -> Vec<String> {
    let mut lines = vec!["id  arc          Jsc(mA/cm²)  Isc(mA)  C_eff  CTM   eff@900".to_string()];
    for &(id, arc, jsc, isc_ma, pmax_mw) in PUBLISHED_ROWS.iter() {
        let c = effective_concentration(isc_ma * 1e-3, jsc, CELL_AREA_CM2).expect("published row");
        let ctm = ctm(c, GEOMETRIC_CONCENTRATION).expect("published row");
        let eff = efficiency(pmax_mw * 1e-3, CSOC_DNI, LENS_APERTURE_CM2).expect("published row");
        let arc = match arc {
            cpvbench::cell::ArcType::MicroBeads => "micro-beads",
            cpvbench::cell::ArcType::Reference => "reference",
        };
        lines.push(format!(
            "{id:<3} {arc:<12} {jsc:>11.2}  {isc_ma:>7.0}  {c:>5.0}  {:>3.0}%  {:>5.1}%",
            100.0 * ctm,
            100.0 * eff
        ));
    }
    lines
}

/// Prints the effective concentration, CTM and efficiency of the four
/// published rows.
pub fn table2_check(stdout: &mut dyn Write) -> Result<(), CliError> {
    for line in table2_lines() {
        emit(stdout, line)?;
    }
    Ok(())
}

/// Filters and rates every sub-module of the scenario found in the log.
///
/// Files: `report.txt`, `report.csv`, and plot data `isc_vs_dni.csv`,
/// `pmax_vs_dni.csv`, `ff_vs_dni.csv` with the fitted curves alongside the
/// filtered samples. Sub-modules that cannot be rated are reported and make
/// the command fail after the others are written.
pub fn rate(
    log_path: &Path,
    scenario: &Scenario,
    out_dir: &Path,
    jobs: usize,
    table2: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let file = File::open(log_path).map_err(|e| CliError::Config(format!("{}: {e}", log_path.display())))?;
    let records = read_log(file).map_err(|e| CliError::Config(format!("{}: {e}", log_path.display())))?;
    let weather = scenario.weather()?;
    create_dir(out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<SubModuleReport, String>)> = pool.install(|| {
        scenario
            .rig
            .submodules
            .par_iter()
            .map(|spec| (spec.id.clone(), rate_one(spec, &records, &weather, scenario)))
            .collect()
    });

    let d = scenario.report_decimals;
    let mut text = vec![format!("scenario {} ({} log records)", scenario.name, records.len())];
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (id, res) in results {
        match res {
            Ok(r) => {
                text.extend(report_text(&r, d));
                ok.push(r);
            }
            Err(msg) => {
                text.push(format!("[{id}]\n  not rated: {msg}"));
                failures.push(format!("{id}: {msg}"));
            }
        }
    }
    if table2 {
        text.push(String::new());
        text.push("published-row arithmetic".into());
        text.extend(table2_lines());
    }

    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, text.join("\n") + "\n").map_err(|e| io_error(&report_path, e))?;
    for line in &text {
        emit(stdout, line)?;
    }

    let f = |x: f64| format!("{x:.d$}");
    let g = |x: f64| x.to_string();
    write_table(
        &out_dir.join("report.csv"),
        &[
            "submodule",
            "n_kept",
            "isc_csoc_ma",
            "pmax_csoc_mw",
            "voc_mean_v",
            "ff_csoc",
            "efficiency_pct",
            "c_eff",
            "ctm_pct",
            "ff_slope_per_wm2",
            "reduced_model",
        ],
        ok.iter().map(|r| {
            vec![
                r.id.clone(),
                r.kept.len().to_string(),
                f(1e3 * r.rating.isc_csoc),
                f(1e3 * r.rating.pmax_csoc),
                f(r.rating.voc_mean),
                format!("{:.4}", r.rating.ff_csoc),
                f(100.0 * r.rating.efficiency_csoc),
                f(r.c_eff),
                f(100.0 * r.ctm),
                format!("{:.4e}", r.ff_slope.slope),
                r.rating.reduced_model().to_string(),
            ]
        }),
    )?;

    let all: Vec<(&SubModuleReport, &MeasurementRecord)> =
        ok.iter().flat_map(|r| r.kept.iter().map(move |k| (r, k))).collect();
    let base = |r: &SubModuleReport, k: &MeasurementRecord| {
        vec![r.id.clone(), format_timestamp(k.timestamp), g(k.weather.dni), g(k.weather.t_ambient)]
    };
    write_table(
        &out_dir.join("isc_vs_dni.csv"),
        &["submodule", "timestamp_utc", "dni_wm2", "t_ambient_c", "isc_a", "isc_fit_a"],
        all.iter().map(|&(r, k)| {
            let mut row = base(r, k);
            row.push(g(k.summary.isc));
            row.push(g(r.rating.isc_fit.predict(k.weather.dni, k.weather.t_ambient)));
            row
        }),
    )?;
    write_table(
        &out_dir.join("pmax_vs_dni.csv"),
        &["submodule", "timestamp_utc", "dni_wm2", "t_ambient_c", "pmax_w", "pmax_fit_w"],
        all.iter().map(|&(r, k)| {
            let mut row = base(r, k);
            row.push(g(k.summary.p_max));
            row.push(g(r.rating.pmax_fit.predict(k.weather.dni, k.weather.t_ambient)));
            row
        }),
    )?;
    write_table(
        &out_dir.join("ff_vs_dni.csv"),
        &["submodule", "timestamp_utc", "dni_wm2", "t_ambient_c", "ff", "ff_fit"],
        all.iter().map(|&(r, k)| {
            let mut row = base(r, k);
            row.push(g(k.summary.ff));
            row.push(g(r.ff_slope.intercept + r.ff_slope.slope * k.weather.dni));
            row
        }),
    )?;

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("; ")))
    }
}

/// Acceptance analysis over one or more session files.
///
/// `elevations_deg` gives the sun elevation of each session (one value
/// applies to all; none means 0°, no azimuth foreshortening). Files:
/// `acceptance.txt`, `acceptance_1d.csv` (pooled deviation vs normalized
/// Isc/DNI) and `contour90.csv` (the first session's 90% contour).
pub fn acceptance(
    sessions: &[PathBuf],
    elevations_deg: &[f64],
    out_dir: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if sessions.is_empty() {
        return Err(CliError::Config("no session files given".into()));
    }
    if elevations_deg.len() > 1 && elevations_deg.len() != sessions.len() {
        return Err(CliError::Config(format!(
            "--elevation-deg given {} times for {} session files",
            elevations_deg.len(),
            sessions.len()
        )));
    }
    let mut inputs = Vec::with_capacity(sessions.len());
    for (k, path) in sessions.iter().enumerate() {
        let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let rows = read_session(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if rows.is_empty() {
            return Err(CliError::Config(format!("{}: session has no samples", path.display())));
        }
        let points: Vec<MapPoint> =
            rows.iter().map(|r| MapPoint { d_az: r.d_az, d_el: r.d_el, value: r.isc_over_dni }).collect();
        let el = match elevations_deg {
            [] => 0.0,
            [one] => *one,
            many => many[k],
        };
        inputs.push((points, el));
    }
    create_dir(out_dir)?;
    let result = analyze_sessions(&inputs).map_err(|e| CliError::Runtime(e.to_string()))?;

    let (a, b) = result.contour90.semi_axes();
    let (cx, cy) = result.contour90.centroid();
    let mut text = vec![
        format!("acceptance angle  {:.3} ± {:.3} deg ({} samples)", result.angle, result.spread, result.samples_used),
        format!("90% contour       semi-axes {a:.3} (az) x {b:.3} (el) deg, centre ({cx:.3}, {cy:.3})"),
    ];
    for (path, c) in sessions.iter().zip(&result.centres) {
        text.push(format!("  {}: centre ({:.3}, {:.3})", path.display(), c.0, c.1));
    }
    let txt_path = out_dir.join("acceptance.txt");
    fs::write(&txt_path, text.join("\n") + "\n").map_err(|e| io_error(&txt_path, e))?;
    for line in &text {
        emit(stdout, line)?;
    }

    let mut profile = result.profile.clone();
    profile.sort_by(|x, y| x.0.total_cmp(&y.0));
    write_table(
        &out_dir.join("acceptance_1d.csv"),
        &["deviation_deg", "normalized_isc_over_dni"],
        profile.iter().map(|(x, v)| vec![x.to_string(), v.to_string()]),
    )?;
    write_table(
        &out_dir.join("contour90.csv"),
        &["d_az_deg", "d_el_deg"],
        result.contour90.polygon.iter().map(|(x, y)| vec![x.to_string(), y.to_string()]),
    )?;
    Ok(())
}

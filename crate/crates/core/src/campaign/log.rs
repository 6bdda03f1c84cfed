//! CSV persistence of measurement records and acceptance sessions.

use std::io::{Read, Write};

use super::{AcceptanceSample, CampaignError, MeasurementRecord};
use crate::env::{format_timestamp, parse_timestamp, WeatherSample};
use crate::meter::IVSummary;
use crate::optics::AzEl;
use crate::tracker::TrackingMode;

pub const LOG_HEADER: [&str; 15] = [
    "timestamp_utc",
    "submodule",
    "mode",
    "az_deg",
    "el_deg",
    "deviation_deg",
    "isc_a",
    "voc_v",
    "pmax_w",
    "vmp_v",
    "imp_a",
    "ff",
    "dni_wm2",
    "dhi_wm2",
    "t_ambient_c",
];

pub const SESSION_HEADER: [&str; 4] = ["submodule", "daz_deg", "del_deg", "isc_over_dni"];

/// Destination for records as they are produced.
pub trait RecordSink {
    fn write(&mut self, record: &MeasurementRecord) -> Result<(), CampaignError>;
}

impl RecordSink for Vec<MeasurementRecord> {
    fn write(&mut self, record: &MeasurementRecord) -> Result<(), CampaignError> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards records; the campaign log still keeps them in memory.
pub struct NullSink;

impl RecordSink for NullSink {
    fn write(&mut self, _: &MeasurementRecord) -> Result<(), CampaignError> {
        Ok(())
    }
}

/// Append-only CSV log, flushed after every record.
pub struct CsvLogSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvLogSink<W> {
    pub fn new(out: W) -> Result<Self, CampaignError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(LOG_HEADER)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn into_inner(self) -> Result<W, CampaignError> {
        self.writer.into_inner().map_err(|e| CampaignError::Io(e.into_error()))
    }
}

impl<W: Write> RecordSink for CsvLogSink<W> {
    fn write(&mut self, r: &MeasurementRecord) -> Result<(), CampaignError> {
        self.writer.write_record(record_fields(r))?;
        self.writer.flush()?;
        Ok(())
    }
}

fn record_fields(r: &MeasurementRecord) -> [String; 15] {
    let s = &r.summary;
    [
        format_timestamp(r.timestamp),
        r.submodule_id.clone(),
        r.mode.as_str().to_string(),
        r.pointing.az_deg.to_string(),
        r.pointing.el_deg.to_string(),
        r.deviation.to_string(),
        s.isc.to_string(),
        s.voc.to_string(),
        s.p_max.to_string(),
        s.v_mp.to_string(),
        s.i_mp.to_string(),
        s.ff.to_string(),
        r.weather.dni.to_string(),
        r.weather.diffuse.to_string(),
        r.weather.t_ambient.to_string(),
    ]
}

pub fn write_log<W: Write>(records: &[MeasurementRecord], out: W) -> Result<(), CampaignError> {
    let mut sink = CsvLogSink::new(out)?;
    for r in records {
        sink.write(r)?;
    }
    Ok(())
}

fn column_map<const N: usize>(
    headers: &csv::StringRecord,
    names: [&'static str; N],
) -> Result<[usize; N], CampaignError> {
    let mut idx = [0usize; N];
    for (slot, name) in idx.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(CampaignError::Parse { line: 1, message: format!("missing column `{name}`") })?;
    }
    Ok(idx)
}

/// Parses a measurement log. The weather snapshot takes the row timestamp,
/// since the schema carries only one.
pub fn read_log<R: Read>(input: R) -> Result<Vec<MeasurementRecord>, CampaignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let cols = column_map(&headers, LOG_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(cols[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64, CampaignError> {
            get(i)
                .parse::<f64>()
                .map_err(|_| CampaignError::Parse { line, message: format!("bad {} `{}`", LOG_HEADER[i], get(i)) })
        };
        let timestamp = parse_timestamp(get(0))
            .ok_or_else(|| CampaignError::Parse { line, message: format!("bad timestamp `{}`", get(0)) })?;
        let mode = TrackingMode::parse(get(2))
            .ok_or_else(|| CampaignError::Parse { line, message: format!("bad mode `{}`", get(2)) })?;
        let deviation = num(5)?;
        if !(deviation >= 0.0) {
            return Err(CampaignError::Parse { line, message: "deviation must be >= 0".into() });
        }
        out.push(MeasurementRecord {
            timestamp,
            submodule_id: get(1).to_string(),
            mode,
            pointing: AzEl::new(num(3)?, num(4)?),
            deviation,
            summary: IVSummary {
                isc: num(6)?,
                voc: num(7)?,
                p_max: num(8)?,
                v_mp: num(9)?,
                i_mp: num(10)?,
                ff: num(11)?,
            },
            weather: WeatherSample { timestamp, dni: num(12)?, diffuse: num(13)?, t_ambient: num(14)? },
        });
    }
    Ok(out)
}

pub fn write_session<W: Write>(submodule: &str, samples: &[AcceptanceSample], out: W) -> Result<(), CampaignError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SESSION_HEADER)?;
    for s in samples {
        wtr.write_record([submodule.to_string(), s.d_az.to_string(), s.d_el.to_string(), s.isc_over_dni.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One parsed row of an acceptance-session file.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRow {
    pub submodule: String,
    pub d_az: f64,
    pub d_el: f64,
    pub isc_over_dni: f64,
}

pub fn read_session<R: Read>(input: R) -> Result<Vec<SessionRow>, CampaignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(CampaignError::Parse { line: 1, message: "empty session file".into() });
    }
    let cols = column_map(&headers, SESSION_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, CampaignError> {
            let raw = rec.get(cols[i]).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CampaignError::Parse { line, message: format!("bad {} `{raw}`", SESSION_HEADER[i]) })
        };
        rows.push(SessionRow {
            submodule: rec.get(cols[0]).unwrap_or("").to_string(),
            d_az: num(1)?,
            d_el: num(2)?,
            isc_over_dni: num(3)?,
        });
    }
    Ok(rows)
}

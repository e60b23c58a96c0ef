//! CSV formats for raw logs, ground truth, phasors, poses and plot data.
//!
//! All field values are in tesla, times in seconds, positions in meters and
//! angles in radians. Floats are written in shortest round-trip form, so
//! reading a file back yields bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::AlignedRow;
use crate::scenario::SolverKind;
use crate::signal_proc::{PhasorReading, RawSample, CHANNELS};
use crate::simulator::TruthSample;

pub const TRUTH_HEADER: [&str; 6] = ["t", "y", "z", "yaw", "pitch", "roll"];
pub const POSE_HEADER: [&str; 7] = ["t_s", "y_m", "z_m", "yaw_rad", "pitch_rad", "residual", "solver"];
pub const COMPONENTS_HEADER: [&str; 9] = [
    "t_s",
    "est_y_m",
    "true_y_m",
    "est_z_m",
    "true_z_m",
    "est_yaw_rad",
    "true_yaw_rad",
    "est_pitch_rad",
    "true_pitch_rad",
];
pub const PATH_HEADER: [&str; 4] = ["est_y_m", "est_z_m", "true_y_m", "true_z_m"];

/// `t_s, s0x, s0y, s0z, …, s3z`.
pub fn channel_header() -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for s in 0..CHANNELS / 3 {
        for axis in ["x", "y", "z"] {
            h.push(format!("s{s}{axis}"));
        }
    }
    h
}

/// One line of a pose log. A window the solver failed on is a gap row with
/// NaN in every numeric field except the time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRow {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub residual: f64,
    pub solver: SolverKind,
}

impl PoseRow {
    pub fn gap(t: f64, solver: SolverKind) -> Self {
        PoseRow {
            t,
            y: f64::NAN,
            z: f64::NAN,
            yaw: f64::NAN,
            pitch: f64::NAN,
            residual: f64::NAN,
            solver,
        }
    }

    pub fn is_gap(&self) -> bool {
        !(self.y.is_finite() && self.z.is_finite() && self.yaw.is_finite())
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}

fn write_rows<W: Write, H: AsRef<[u8]>>(
    out: W,
    header: impl IntoIterator<Item = H>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R, header: &[String]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::InvalidInput(format!(
            "unexpected CSV header {found:?}, expected {header:?}"
        )));
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn parse(record: &csv::StringRecord, i: usize) -> Result<f64> {
    let field = record.get(i).unwrap_or("");
    field.parse().map_err(|_| {
        let line = record.position().map_or(0, |p| p.line());
        Error::InvalidInput(format!("line {line}: cannot parse {field:?} as a number"))
    })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn channels_row(t: f64, values: &[f64; CHANNELS]) -> Vec<String> {
    std::iter::once(t).chain(values.iter().copied()).map(fmt).collect()
}

fn parse_channels(record: &csv::StringRecord) -> Result<(f64, [f64; CHANNELS])> {
    let t = parse(record, 0)?;
    let mut values = [0.0; CHANNELS];
    for (c, v) in values.iter_mut().enumerate() {
        *v = parse(record, c + 1)?;
    }
    Ok((t, values))
}

pub fn write_raw<W: Write>(out: W, samples: &[RawSample]) -> Result<()> {
    write_rows(out, channel_header(), samples.iter().map(|s| channels_row(s.t, &s.values)))
}

pub fn read_raw<R: Read>(input: R) -> Result<Vec<RawSample>> {
    read_rows(input, &channel_header())?
        .iter()
        .map(|r| parse_channels(r).map(|(t, values)| RawSample { t, values }))
        .collect()
}

pub fn write_phasors<W: Write>(out: W, readings: &[PhasorReading]) -> Result<()> {
    write_rows(out, channel_header(), readings.iter().map(|p| channels_row(p.timestamp, &p.to_row())))
}

pub fn read_phasors<R: Read>(input: R) -> Result<Vec<PhasorReading>> {
    read_rows(input, &channel_header())?
        .iter()
        .map(|r| parse_channels(r).map(|(t, row)| PhasorReading::from_row(t, &row)))
        .collect()
}

pub fn write_truth<W: Write>(out: W, truth: &[TruthSample]) -> Result<()> {
    write_rows(
        out,
        TRUTH_HEADER,
        truth
            .iter()
            .map(|s| [s.t, s.y, s.z, s.yaw, s.pitch, s.roll].map(fmt).to_vec()),
    )
}

pub fn read_truth<R: Read>(input: R) -> Result<Vec<TruthSample>> {
    let header: Vec<String> = TRUTH_HEADER.iter().map(|s| s.to_string()).collect();
    read_rows(input, &header)?
        .iter()
        .map(|r| {
            Ok(TruthSample {
                t: parse(r, 0)?,
                y: parse(r, 1)?,
                z: parse(r, 2)?,
                yaw: parse(r, 3)?,
                pitch: parse(r, 4)?,
                roll: parse(r, 5)?,
            })
        })
        .collect()
}

pub fn write_poses<W: Write>(out: W, rows: &[PoseRow]) -> Result<()> {
    write_rows(
        out,
        POSE_HEADER,
        rows.iter().map(|p| {
            let mut r = [p.t, p.y, p.z, p.yaw, p.pitch, p.residual].map(fmt).to_vec();
            r.push(p.solver.to_string());
            r
        }),
    )
}

pub fn read_poses<R: Read>(input: R) -> Result<Vec<PoseRow>> {
    let header: Vec<String> = POSE_HEADER.iter().map(|s| s.to_string()).collect();
    read_rows(input, &header)?
        .iter()
        .map(|r| {
            Ok(PoseRow {
                t: parse(r, 0)?,
                y: parse(r, 1)?,
                z: parse(r, 2)?,
                yaw: parse(r, 3)?,
                pitch: parse(r, 4)?,
                residual: parse(r, 5)?,
                solver: r.get(6).unwrap_or("").parse()?,
            })
        })
        .collect()
}

/// Per-timestep estimate and truth, for plotting components over time.
pub fn write_components<W: Write>(out: W, rows: &[AlignedRow]) -> Result<()> {
    write_rows(
        out,
        COMPONENTS_HEADER,
        rows.iter().map(|r| {
            [r.t, r.est_y, r.true_y, r.est_z, r.true_z, r.est_yaw, r.true_yaw, r.est_pitch, r.true_pitch]
                .map(fmt)
                .to_vec()
        }),
    )
}

/// Estimated and true y-z path.
pub fn write_path<W: Write>(out: W, rows: &[AlignedRow]) -> Result<()> {
    write_rows(
        out,
        PATH_HEADER,
        rows.iter().map(|r| [r.est_y, r.est_z, r.true_y, r.true_z].map(fmt).to_vec()),
    )
}

//! CSV formats for detections, tracks, ground truth and tail-state series.
//! Coordinates and confidences carry three decimals, series values six;
//! the header row is mandatory and lines end with LF.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};

use crate::error::{Error, Result};
use crate::eval::GtBox;
use crate::model::{BBox, ComponentClass, Detection};
use crate::tailbeat::{Representation, TailStateSeries};
use crate::tracker::TrackRecord;

pub const DETECTION_HEADER: [&str; 8] = [
    "frame", "class", "x_min", "y_min", "x_max", "y_max", "confidence", "group_id",
];
pub const TRACK_HEADER: [&str; 8] = [
    "frame", "id", "class", "x_min", "y_min", "x_max", "y_max", "confidence",
];
pub const GT_HEADER: [&str; 7] = ["frame", "object_id", "class", "x_min", "y_min", "x_max", "y_max"];
pub const SERIES_HEADER: [&str; 7] = [
    "unit_id",
    "representation",
    "frame",
    "raw_value",
    "smoothed_value",
    "is_max",
    "is_min",
];

fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    // no negative zero in canonical output
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn f3(v: f64) -> String {
    fixed(v, 3)
}

struct Rows {
    records: Vec<(usize, StringRecord)>,
}

fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Rows> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::format(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if first {
            first = false;
            if rec.iter().ne(header.iter().copied()) {
                return Err(Error::format(line, format!("expected header '{}'", header.join(","))));
            }
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::format(
                line,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        records.push((line, rec));
    }
    if first {
        return Err(Error::format(1, "missing header row"));
    }
    Ok(Rows { records })
}

fn field<T: FromStr>(rec: &StringRecord, line: usize, idx: usize, name: &str) -> Result<T> {
    let raw = &rec[idx];
    raw.parse()
        .map_err(|_| Error::format(line, format!("invalid {name} '{raw}'")))
}

fn class_field(rec: &StringRecord, line: usize, idx: usize) -> Result<ComponentClass> {
    rec[idx]
        .parse()
        .map_err(|_| Error::format(line, format!("unknown class tag '{}'", &rec[idx])))
}

fn bbox_fields(rec: &StringRecord, line: usize, start: usize) -> Result<BBox> {
    let v: [f64; 4] = [
        field(rec, line, start, "x_min")?,
        field(rec, line, start + 1, "y_min")?,
        field(rec, line, start + 2, "x_max")?,
        field(rec, line, start + 3, "y_max")?,
    ];
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::format(line, e.to_string()))
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out)
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Data(format!("write failed: {e}"))
}

fn write_all<W: Write, const N: usize>(
    out: W,
    header: &[&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_detections<R: Read>(input: R) -> Result<Vec<Detection>> {
    read_rows(input, &DETECTION_HEADER)?
        .records
        .into_iter()
        .map(|(line, rec)| {
            let frame = field(&rec, line, 0, "frame")?;
            let cls = class_field(&rec, line, 1)?;
            let bbox = bbox_fields(&rec, line, 2)?;
            let conf = field(&rec, line, 6, "confidence")?;
            let d = Detection::new(frame, cls, bbox, conf).map_err(|e| Error::format(line, e.to_string()))?;
            Ok(match &rec[7] {
                "" => d,
                _ => d.with_group(field(&rec, line, 7, "group_id")?),
            })
        })
        .collect()
}

pub fn write_detections<W: Write>(out: W, dets: &[Detection]) -> Result<()> {
    write_all(
        out,
        &DETECTION_HEADER,
        dets.iter().map(|d| {
            [
                d.frame.to_string(),
                d.cls.tag().to_string(),
                f3(d.bbox.x_min()),
                f3(d.bbox.y_min()),
                f3(d.bbox.x_max()),
                f3(d.bbox.y_max()),
                f3(d.confidence),
                d.group_id.map_or_else(String::new, |g| g.to_string()),
            ]
        }),
    )
}

pub fn read_tracks<R: Read>(input: R) -> Result<Vec<TrackRecord>> {
    let mut seen = HashSet::new();
    read_rows(input, &TRACK_HEADER)?
        .records
        .into_iter()
        .map(|(line, rec)| {
            let r = TrackRecord {
                frame: field(&rec, line, 0, "frame")?,
                id: field(&rec, line, 1, "id")?,
                cls: class_field(&rec, line, 2)?,
                bbox: bbox_fields(&rec, line, 3)?,
                confidence: field(&rec, line, 7, "confidence")?,
            };
            if !seen.insert((r.frame, r.id, r.cls)) {
                return Err(Error::format(line, "duplicate (frame, id, class)"));
            }
            Ok(r)
        })
        .collect()
}

pub fn write_tracks<W: Write>(out: W, records: &[TrackRecord]) -> Result<()> {
    write_all(
        out,
        &TRACK_HEADER,
        records.iter().map(|r| {
            [
                r.frame.to_string(),
                r.id.to_string(),
                r.cls.tag().to_string(),
                f3(r.bbox.x_min()),
                f3(r.bbox.y_min()),
                f3(r.bbox.x_max()),
                f3(r.bbox.y_max()),
                f3(r.confidence),
            ]
        }),
    )
}

pub fn read_gt<R: Read>(input: R) -> Result<Vec<GtBox>> {
    read_rows(input, &GT_HEADER)?
        .records
        .into_iter()
        .map(|(line, rec)| {
            Ok(GtBox {
                frame: field(&rec, line, 0, "frame")?,
                object_id: field(&rec, line, 1, "object_id")?,
                cls: class_field(&rec, line, 2)?,
                bbox: bbox_fields(&rec, line, 3)?,
            })
        })
        .collect()
}

pub fn write_gt<W: Write>(out: W, gt: &[GtBox]) -> Result<()> {
    write_all(
        out,
        &GT_HEADER,
        gt.iter().map(|g| {
            [
                g.frame.to_string(),
                g.object_id.to_string(),
                g.cls.tag().to_string(),
                f3(g.bbox.x_min()),
                f3(g.bbox.y_min()),
                f3(g.bbox.x_max()),
                f3(g.bbox.y_max()),
            ]
        }),
    )
}

/// One line of a tail-state series file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub unit_id: u64,
    pub representation: Representation,
    pub frame: u32,
    pub raw_value: f64,
    pub smoothed_value: f64,
    pub is_max: bool,
    pub is_min: bool,
}

pub fn series_rows(series: &[TailStateSeries]) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for s in series {
        for i in 0..s.len() {
            rows.push(SeriesRow {
                unit_id: s.unit_id,
                representation: s.representation,
                frame: s.frames[i],
                raw_value: s.values[i],
                smoothed_value: s.smoothed[i],
                is_max: s.maxima.contains(&i),
                is_min: s.minima.contains(&i),
            });
        }
    }
    rows
}

fn flag(rec: &StringRecord, line: usize, idx: usize) -> Result<bool> {
    match &rec[idx] {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::format(line, format!("expected 0 or 1, found '{other}'"))),
    }
}

pub fn read_series<R: Read>(input: R) -> Result<Vec<SeriesRow>> {
    read_rows(input, &SERIES_HEADER)?
        .records
        .into_iter()
        .map(|(line, rec)| {
            Ok(SeriesRow {
                unit_id: field(&rec, line, 0, "unit_id")?,
                representation: rec[1]
                    .parse()
                    .map_err(|_| Error::format(line, format!("unknown representation '{}'", &rec[1])))?,
                frame: field(&rec, line, 2, "frame")?,
                raw_value: field(&rec, line, 3, "raw_value")?,
                smoothed_value: field(&rec, line, 4, "smoothed_value")?,
                is_max: flag(&rec, line, 5)?,
                is_min: flag(&rec, line, 6)?,
            })
        })
        .collect()
}

pub fn write_series<W: Write>(out: W, rows: &[SeriesRow]) -> Result<()> {
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    write_all(
        out,
        &SERIES_HEADER,
        rows.iter().map(|r| {
            [
                r.unit_id.to_string(),
                r.representation.name().to_string(),
                r.frame.to_string(),
                fixed(r.raw_value, 6),
                fixed(r.smoothed_value, 6),
                b(r.is_max),
                b(r.is_min),
            ]
        }),
    )
}

/// Serializes with `write` into a string.
pub fn to_string<T: ?Sized>(items: &T, write: impl FnOnce(&mut Vec<u8>, &T) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf, items)?;
    String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
}

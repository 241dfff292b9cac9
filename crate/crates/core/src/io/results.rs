//! Result files: `<prefix>blobs.jsonl`, `<prefix>tracks.jsonl` and `<prefix>centers.csv`.
//!
//! The first line of each JSONL file is a header record (`"record": "header"`); every
//! following line is one blob or one track. Numbers are written with the shortest
//! decimal representation that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::track::{Blob, Track};

pub const BLOB_SCHEMA: &str = "blobtrack-blobs 1";
pub const TRACK_SCHEMA: &str = "blobtrack-tracks 1";
pub const CENTERS_HEADER: &str = "time_index,plane_index,blob_id,r,z,area,median";

#[derive(Serialize)]
struct BlobRecord<'a> {
    record: &'static str,
    time_index: usize,
    plane_index: usize,
    id: u32,
    center: Point,
    area: usize,
    median: f64,
    mass: f64,
    hull: &'a [Point],
}

#[derive(Serialize)]
struct TrackRecord<'a> {
    record: &'static str,
    id: u64,
    plane_index: usize,
    first_time: usize,
    last_time: usize,
    length: usize,
    blob_ids: Vec<u32>,
    centers: Vec<Point>,
    areas: Vec<usize>,
    velocities: &'a [[f64; 2]],
    mean_velocity: Option<[f64; 2]>,
}

fn line(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("result records always serialize")
}

/// Canonical blob records, header line included.
pub fn blob_records(blobs: &[Blob]) -> String {
    let mut out = line(&json!({"record": "header", "schema": BLOB_SCHEMA, "count": blobs.len()}));
    out.push('\n');
    for b in blobs {
        out.push_str(&line(&BlobRecord {
            record: "blob",
            time_index: b.time_index,
            plane_index: b.plane_index,
            id: b.id,
            center: b.center(),
            area: b.area(),
            median: b.median,
            mass: b.summary.mass,
            hull: &b.summary.hull,
        }));
        out.push('\n');
    }
    out
}

/// Canonical track records, header line included.
pub fn track_records(tracks: &[Track]) -> String {
    let mut out = line(&json!({"record": "header", "schema": TRACK_SCHEMA, "count": tracks.len()}));
    out.push('\n');
    for t in tracks {
        out.push_str(&line(&TrackRecord {
            record: "track",
            id: t.id,
            plane_index: t.plane_index,
            first_time: t.first_time(),
            last_time: t.last().time_index,
            length: t.len(),
            blob_ids: t.blobs.iter().map(|b| b.id).collect(),
            centers: t.blobs.iter().map(|b| b.center()).collect(),
            areas: t.blobs.iter().map(|b| b.area()).collect(),
            velocities: &t.velocities,
            mean_velocity: t.mean_velocity(),
        }));
        out.push('\n');
    }
    out
}

pub fn center_table(blobs: &[Blob]) -> String {
    let mut out = String::from(CENTERS_HEADER);
    out.push('\n');
    for b in blobs {
        let c = b.center();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.time_index,
            b.plane_index,
            b.id,
            c[0],
            c[1],
            b.area(),
            b.median
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultFiles {
    pub blobs: PathBuf,
    pub tracks: PathBuf,
    pub centers: PathBuf,
}

impl ResultFiles {
    /// `prefix` is prepended verbatim, so `out/run1_` gives `out/run1_blobs.jsonl`.
    /// A directory prefix should end in a path separator.
    pub fn for_prefix(prefix: impl AsRef<Path>) -> Self {
        let prefix = prefix.as_ref().as_os_str().to_owned();
        let with = |name: &str| {
            let mut p = prefix.clone();
            p.push(name);
            PathBuf::from(p)
        };
        Self {
            blobs: with("blobs.jsonl"),
            tracks: with("tracks.jsonl"),
            centers: with("centers.csv"),
        }
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Writes all three result files. Blobs are written in the order given.
pub fn write_results(blobs: &[Blob], tracks: &[Track], prefix: impl AsRef<Path>) -> Result<ResultFiles> {
    let files = ResultFiles::for_prefix(prefix);
    write_text(&files.blobs, &blob_records(blobs))?;
    write_text(&files.tracks, &track_records(tracks))?;
    write_text(&files.centers, &center_table(blobs))?;
    Ok(files)
}

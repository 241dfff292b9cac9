//! The frame container file. Layout is documented in `docs/container-format.md`.
//!
//! ```text
//! blobtrack-frames 1
//! encoding: binary
//! vertices: V
//! triangles: T
//! frames: F
//! planes: P
//! dt: 2.5e-06
//! units: free text
//! <empty line>
//! V x (r: f64, z: f64)   little endian
//! T x (a, b, c: u32)     little endian
//! F x (V x f64)          frame k holds time k / P + 1, plane k % P
//! ```
//!
//! With `encoding: text` the same payload follows as whitespace- or comma-separated
//! decimal numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{check_frame_index, FrameSource};
use crate::mesh::{Frame, Point, TriMesh};

pub const MAGIC: &str = "blobtrack-frames";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Binary,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub version: u32,
    pub encoding: Encoding,
    pub vertices: usize,
    pub triangles: usize,
    /// Number of frame payloads, `time_steps * planes`.
    pub frames: usize,
    pub planes: usize,
    pub dt: f64,
    pub units: String,
}

impl ContainerHeader {
    pub fn time_steps(&self) -> usize {
        self.frames / self.planes
    }

    fn payload_bytes(&self) -> u64 {
        (self.vertices as u64) * 16 + (self.triangles as u64) * 12 + (self.frames as u64) * (self.vertices as u64) * 8
    }

    fn render(&self) -> String {
        let encoding = match self.encoding {
            Encoding::Binary => "binary",
            Encoding::Text => "text",
        };
        format!(
            "{MAGIC} {}\nencoding: {encoding}\nvertices: {}\ntriangles: {}\nframes: {}\nplanes: {}\ndt: {:e}\nunits: {}\n\n",
            self.version,
            self.vertices,
            self.triangles,
            self.frames,
            self.planes,
            self.dt,
            self.units.replace('\n', " ")
        )
    }

    /// Reads the header through its terminating empty line. Returns the header and
    /// its length in bytes.
    fn parse(reader: &mut impl BufRead) -> Result<(Self, u64)> {
        let mut offset = 0u64;
        let mut line = String::new();
        let mut next_line = |line: &mut String, offset: &mut u64| -> Result<bool> {
            line.clear();
            let n = reader.read_line(line).map_err(|e| Error::input(*offset, e.to_string()))?;
            *offset += n as u64;
            Ok(n > 0)
        };

        if !next_line(&mut line, &mut offset)? {
            return Err(Error::input(0, "empty file"));
        }
        let mut first = line.split_whitespace();
        if first.next() != Some(MAGIC) {
            return Err(Error::input(0, format!("missing '{MAGIC}' signature")));
        }
        let version: u32 = first
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::input(0, "missing format version"))?;
        if version != VERSION {
            return Err(Error::input(0, format!("unknown container version {version}")));
        }

        let mut encoding = None;
        let (mut vertices, mut triangles, mut frames, mut planes, mut dt) = (None, None, None, None, None);
        let mut units = String::new();
        loop {
            let line_start = offset;
            if !next_line(&mut line, &mut offset)? {
                return Err(Error::input(offset, "header is not terminated by an empty line"));
            }
            let text = line.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                break;
            }
            let (key, value) = text
                .split_once(':')
                .ok_or_else(|| Error::input(line_start, format!("malformed header line '{text}'")))?;
            let value = value.trim();
            let count = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::input(line_start, format!("'{key}' is not a count: '{v}'")))
            };
            match key.trim() {
                "encoding" => {
                    encoding = Some(match value {
                        "binary" => Encoding::Binary,
                        "text" => Encoding::Text,
                        other => return Err(Error::input(line_start, format!("unknown encoding '{other}'"))),
                    })
                }
                "vertices" => vertices = Some(count(value)?),
                "triangles" => triangles = Some(count(value)?),
                "frames" => frames = Some(count(value)?),
                "planes" => planes = Some(count(value)?),
                "dt" => {
                    dt = Some(value.parse::<f64>().map_err(|_| {
                        Error::input(line_start, format!("'dt' is not a number: '{value}'"))
                    })?)
                }
                "units" => units = value.to_string(),
                _ => {} // unknown keys are informational
            }
        }

        let missing = |k: &str| Error::input(offset, format!("header lacks '{k}'"));
        let header = ContainerHeader {
            version,
            encoding: encoding.unwrap_or(Encoding::Binary),
            vertices: vertices.ok_or_else(|| missing("vertices"))?,
            triangles: triangles.ok_or_else(|| missing("triangles"))?,
            frames: frames.ok_or_else(|| missing("frames"))?,
            planes: planes.unwrap_or(1),
            dt: dt.ok_or_else(|| missing("dt"))?,
            units,
        };
        if header.planes == 0 || !header.frames.is_multiple_of(header.planes) {
            return Err(Error::input(
                offset,
                format!("{} frames cannot be split into {} planes", header.frames, header.planes),
            ));
        }
        if !(header.dt > 0.0 && header.dt.is_finite()) {
            return Err(Error::input(offset, format!("dt must be positive, got {}", header.dt)));
        }
        Ok((header, offset))
    }
}

/// A fully materialized container.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameContainer {
    pub header: ContainerHeader,
    pub mesh: TriMesh,
    /// `time_steps * planes` arrays in (time, plane) order.
    pub frames: Vec<Vec<f64>>,
}

impl FrameContainer {
    pub fn new(mesh: TriMesh, planes: usize, dt: f64, units: impl Into<String>, frames: Vec<Vec<f64>>) -> Result<Self> {
        if planes == 0 || !frames.len().is_multiple_of(planes) {
            return Err(Error::Argument(format!(
                "{} frames cannot be split into {planes} planes",
                frames.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        for (k, f) in frames.iter().enumerate() {
            if f.len() != mesh.vertex_count() {
                return Err(Error::Argument(format!(
                    "frame {k} has {} values, mesh has {} vertices",
                    f.len(),
                    mesh.vertex_count()
                )));
            }
            if let Some(i) = f.iter().position(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("frame {k} value {i} is not finite")));
            }
        }
        Ok(Self {
            header: ContainerHeader {
                version: VERSION,
                encoding: Encoding::Binary,
                vertices: mesh.vertex_count(),
                triangles: mesh.triangle_count(),
                frames: frames.len(),
                planes,
                dt,
                units: units.into(),
            },
            mesh,
            frames,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, encoding)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write, encoding: Encoding) -> Result<()> {
        let header = ContainerHeader {
            encoding,
            ..self.header.clone()
        };
        w.write_all(header.render().as_bytes())?;
        match encoding {
            Encoding::Binary => {
                for p in self.mesh.vertices() {
                    w.write_all(&p[0].to_le_bytes())?;
                    w.write_all(&p[1].to_le_bytes())?;
                }
                for t in self.mesh.triangles() {
                    for v in t {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                for f in &self.frames {
                    for v in f {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
            Encoding::Text => {
                for p in self.mesh.vertices() {
                    writeln!(w, "{} {}", p[0], p[1])?;
                }
                for t in self.mesh.triangles() {
                    writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
                }
                for f in &self.frames {
                    let line: Vec<String> = f.iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{}", line.join(" "))?;
                }
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = ContainerFile::open(path)?;
        let frames = file.frames()?.map(|f| f.map(|f| f.values)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            header: file.header,
            mesh: file.mesh,
            frames,
        })
    }
}

impl FrameSource for FrameContainer {
    fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    fn time_steps(&self) -> usize {
        self.header.time_steps()
    }

    fn planes(&self) -> usize {
        self.header.planes
    }

    fn dt(&self) -> f64 {
        self.header.dt
    }

    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>> {
        check_frame_index(self, time_index, plane)?;
        Ok(self.frames[(time_index - 1) * self.header.planes + plane].clone())
    }
}

#[derive(Debug)]
enum Storage {
    /// Frames stay on disk and are read on demand.
    Binary { file: File, frames_offset: u64 },
    Memory(Vec<Vec<f64>>),
}

/// An opened container: header and mesh in memory, frames on demand.
#[derive(Debug)]
pub struct ContainerFile {
    pub header: ContainerHeader,
    pub mesh: TriMesh,
    storage: Storage,
}

fn f64_at(buf: &[u8], i: usize) -> f64 {
    f64::from_le_bytes(buf[i * 8..i * 8 + 8].try_into().unwrap())
}

fn check_finite(values: &[f64], base_offset: u64) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::input(base_offset + 8 * i as u64, format!("non-finite value {}", values[i]))),
        None => Ok(()),
    }
}

impl ContainerFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = BufReader::new(File::open(path)?);
        let (header, header_len) = ContainerHeader::parse(&mut reader)?;
        match header.encoding {
            Encoding::Binary => Self::open_binary(path, reader, header, header_len),
            Encoding::Text => Self::open_text(reader, header, header_len),
        }
    }

    fn open_binary(path: &Path, mut reader: BufReader<File>, header: ContainerHeader, header_len: u64) -> Result<Self> {
        let actual = std::fs::metadata(path)?.len().saturating_sub(header_len);
        let expected = header.payload_bytes();
        if actual != expected {
            return Err(Error::input(
                header_len + actual.min(expected),
                format!("payload is {actual} bytes, header requires {expected}"),
            ));
        }

        let mut buf = vec![0u8; header.vertices * 16];
        reader.read_exact(&mut buf)?;
        let coords: Vec<f64> = (0..header.vertices * 2).map(|i| f64_at(&buf, i)).collect();
        check_finite(&coords, header_len)?;
        let vertices: Vec<Point> = coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect();

        let tri_offset = header_len + buf.len() as u64;
        let mut buf = vec![0u8; header.triangles * 12];
        reader.read_exact(&mut buf)?;
        let triangles: Vec<[u32; 3]> = buf
            .chunks_exact(12)
            .map(|c| {
                [
                    u32::from_le_bytes(c[0..4].try_into().unwrap()),
                    u32::from_le_bytes(c[4..8].try_into().unwrap()),
                    u32::from_le_bytes(c[8..12].try_into().unwrap()),
                ]
            })
            .collect();
        let mesh = TriMesh::new(vertices, triangles).map_err(|e| Error::input(tri_offset, e.to_string()))?;

        let frames_offset = tri_offset + buf.len() as u64;
        let file = reader.into_inner();
        Ok(Self {
            header,
            mesh,
            storage: Storage::Binary { file, frames_offset },
        })
    }

    fn open_text(reader: BufReader<File>, header: ContainerHeader, header_len: u64) -> Result<Self> {
        let mut tokens = TextTokens::new(reader, header_len);
        let mut vertices = Vec::with_capacity(header.vertices);
        for _ in 0..header.vertices {
            vertices.push([tokens.f64()?, tokens.f64()?]);
        }
        let tri_offset = tokens.offset();
        let mut triangles = Vec::with_capacity(header.triangles);
        for _ in 0..header.triangles {
            triangles.push([tokens.u32()?, tokens.u32()?, tokens.u32()?]);
        }
        let mesh = TriMesh::new(vertices, triangles).map_err(|e| Error::input(tri_offset, e.to_string()))?;
        let mut frames = Vec::with_capacity(header.frames);
        for _ in 0..header.frames {
            let mut f = Vec::with_capacity(header.vertices);
            for _ in 0..header.vertices {
                f.push(tokens.f64()?);
            }
            frames.push(f);
        }
        tokens.expect_end()?;
        Ok(Self {
            header,
            mesh,
            storage: Storage::Memory(frames),
        })
    }

    fn frame_offset(&self, k: usize) -> u64 {
        match self.storage {
            Storage::Binary { frames_offset, .. } => frames_offset + (k * self.header.vertices * 8) as u64,
            Storage::Memory(_) => 0,
        }
    }

    fn read_frame(&self, k: usize) -> Result<Vec<f64>> {
        match &self.storage {
            Storage::Memory(frames) => Ok(frames[k].clone()),
            Storage::Binary { file, .. } => {
                let offset = self.frame_offset(k);
                let mut buf = vec![0u8; self.header.vertices * 8];
                read_exact_at(file, &mut buf, offset).map_err(|e| Error::input(offset, e.to_string()))?;
                let values: Vec<f64> = (0..self.header.vertices).map(|i| f64_at(&buf, i)).collect();
                check_finite(&values, offset)?;
                Ok(values)
            }
        }
    }

    /// Streaming iterator over every frame in (time, plane) order.
    pub fn frames(&self) -> Result<FrameIter<'_>> {
        let reader = match &self.storage {
            Storage::Binary { file, frames_offset } => {
                let mut f = file.try_clone()?;
                use std::io::{Seek, SeekFrom};
                f.seek(SeekFrom::Start(*frames_offset))?;
                Some(BufReader::new(f))
            }
            Storage::Memory(_) => None,
        };
        Ok(FrameIter {
            file: self,
            reader,
            next: 0,
        })
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(not(unix))]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::io::{Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}

impl FrameSource for ContainerFile {
    fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    fn time_steps(&self) -> usize {
        self.header.time_steps()
    }

    fn planes(&self) -> usize {
        self.header.planes
    }

    fn dt(&self) -> f64 {
        self.header.dt
    }

    fn load(&self, time_index: usize, plane: usize) -> Result<Vec<f64>> {
        check_frame_index(self, time_index, plane)?;
        self.read_frame((time_index - 1) * self.header.planes + plane)
    }
}

pub struct FrameIter<'a> {
    file: &'a ContainerFile,
    reader: Option<BufReader<File>>,
    next: usize,
}

impl Iterator for FrameIter<'_> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        let header = &self.file.header;
        if self.next >= header.frames {
            return None;
        }
        let k = self.next;
        self.next += 1;
        let values = match self.reader.as_mut() {
            None => self.file.read_frame(k),
            Some(r) => {
                let offset = self.file.frame_offset(k);
                let mut buf = vec![0u8; header.vertices * 8];
                r.read_exact(&mut buf)
                    .map_err(|e| Error::input(offset, e.to_string()))
                    .and_then(|_| {
                        let values: Vec<f64> = (0..header.vertices).map(|i| f64_at(&buf, i)).collect();
                        check_finite(&values, offset).map(|_| values)
                    })
            }
        };
        Some(values.map(|values| Frame {
            time_index: k / header.planes + 1,
            plane_index: k % header.planes,
            values,
            dt: header.dt,
        }))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.file.header.frames - self.next;
        (left, Some(left))
    }
}

/// Opens a container and returns its mesh plus the file handle for streaming frames
/// with [`ContainerFile::frames`].
pub fn read_container(path: impl AsRef<Path>) -> Result<(TriMesh, ContainerFile)> {
    let file = ContainerFile::open(path)?;
    Ok((file.mesh.clone(), file))
}

/// Whitespace/comma separated token reader that tracks byte offsets.
struct TextTokens<R> {
    reader: R,
    line: String,
    line_offset: u64,
    pos: usize,
}

impl<R: BufRead> TextTokens<R> {
    fn new(reader: R, offset: u64) -> Self {
        Self {
            reader,
            line: String::new(),
            line_offset: offset,
            pos: 0,
        }
    }

    fn offset(&self) -> u64 {
        self.line_offset + self.pos as u64
    }

    fn is_sep(c: char) -> bool {
        c.is_whitespace() || c == ','
    }

    fn token(&mut self) -> Result<Option<(String, u64)>> {
        loop {
            let rest = &self.line[self.pos..];
            if let Some(start) = rest.find(|c: char| !Self::is_sep(c)) {
                let start = self.pos + start;
                let end = self.line[start..]
                    .find(Self::is_sep)
                    .map_or(self.line.len(), |e| start + e);
                self.pos = end;
                return Ok(Some((self.line[start..end].to_string(), self.line_offset + start as u64)));
            }
            self.line_offset += self.line.len() as u64;
            self.line.clear();
            self.pos = 0;
            let n = self
                .reader
                .read_line(&mut self.line)
                .map_err(|e| Error::input(self.line_offset, e.to_string()))?;
            if n == 0 {
                return Ok(None);
            }
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<(T, u64)> {
        let (tok, at) = self
            .token()?
            .ok_or_else(|| Error::input(self.offset(), format!("payload ended while reading {what}")))?;
        let v = tok
            .parse()
            .map_err(|_| Error::input(at, format!("'{tok}' is not a valid {what}")))?;
        Ok((v, at))
    }

    fn f64(&mut self) -> Result<f64> {
        let (v, at): (f64, u64) = self.parse("number")?;
        if !v.is_finite() {
            return Err(Error::input(at, format!("non-finite value {v}")));
        }
        Ok(v)
    }

    fn u32(&mut self) -> Result<u32> {
        self.parse("vertex index").map(|(v, _)| v)
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.token()? {
            None => Ok(()),
            Some((tok, at)) => Err(Error::input(at, format!("unexpected trailing data '{tok}'"))),
        }
    }
}

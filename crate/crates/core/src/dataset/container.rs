//! The `CCDS` container: a little-endian binary file holding one dataset.
//!
//! ```text
//! magic "CCDS" | version u32 = 1 | N u64 | B u32 | W u32 | D u32
//! N × { timestamp f64 | position D × f64 | csi B·W × (re f32, im f32) }
//! ```
//!
//! CSI entries are stored antenna-major (row-major over `B × W`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;

use super::{average_row, Dataset, DatasetError, Labels, ReducedDataset, Result, SubcarrierWindow};

pub const CONTAINER_MAGIC: [u8; 4] = *b"CCDS";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: u64 = 28;

#[derive(Debug, Clone, Copy)]
struct Header {
    n: u64,
    antennas: usize,
    subcarriers: usize,
    dim: usize,
}

impl Header {
    fn record_len(&self) -> u64 {
        8 + 8 * self.dim as u64 + 8 * (self.antennas * self.subcarriers) as u64
    }
}

/// Byte reader that tracks its offset for error reporting.
struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => DatasetError::Truncated {
                offset: self.offset,
                needed: K as u64,
            },
            _ => DatasetError::Io(e),
        })?;
        self.offset += K as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.bytes::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.bytes::<8>().map(f64::from_le_bytes)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => DatasetError::Truncated {
                offset: self.offset,
                needed: buf.len() as u64,
            },
            _ => DatasetError::Io(e),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

fn read_header<R: Read>(r: &mut OffsetReader<R>, file_len: Option<u64>) -> Result<Header> {
    if r.bytes::<4>()? != CONTAINER_MAGIC {
        return Err(DatasetError::BadMagic { offset: 0 });
    }
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(DatasetError::VersionMismatch { found: version, offset: 4 });
    }
    let n = r.u64()?;
    let antennas = r.u32()? as usize;
    let subcarriers = r.u32()? as usize;
    let dim_offset = r.offset;
    let dim = r.u32()? as usize;
    let malformed = |offset: u64, reason: &str| DatasetError::MalformedHeader {
        offset,
        reason: reason.to_string(),
    };
    if n == 0 {
        return Err(malformed(8, "datapoint count must be at least 1"));
    }
    if antennas == 0 {
        return Err(malformed(16, "antenna count must be positive"));
    }
    if subcarriers == 0 {
        return Err(malformed(20, "subcarrier count must be positive"));
    }
    if !(dim == 2 || dim == 3) {
        return Err(malformed(dim_offset, "position dimension must be 2 or 3"));
    }
    let header = Header {
        n,
        antennas,
        subcarriers,
        dim,
    };
    if let Some(len) = file_len {
        let expected = header
            .record_len()
            .checked_mul(n)
            .and_then(|p| p.checked_add(HEADER_LEN))
            .ok_or_else(|| malformed(8, "declared payload size overflows"))?;
        if len < expected {
            return Err(DatasetError::Truncated {
                offset: len,
                needed: expected - len,
            });
        }
        if len > expected {
            return Err(DatasetError::TrailingBytes { offset: expected });
        }
    }
    Ok(header)
}

/// Reads one record: timestamp, position (appended to `position`) and the CSI
/// matrix decoded into `csi`.
fn read_record<R: Read>(
    r: &mut OffsetReader<R>,
    header: &Header,
    record: u64,
    raw: &mut [u8],
    position: &mut Vec<f64>,
    csi: &mut Vec<Complex32>,
) -> Result<f64> {
    let t_offset = r.offset;
    let t = r.f64()?;
    if !t.is_finite() {
        return Err(DatasetError::NonFinite {
            field: "timestamp",
            record,
            offset: t_offset,
        });
    }
    for _ in 0..header.dim {
        let offset = r.offset;
        let v = r.f64()?;
        if !v.is_finite() {
            return Err(DatasetError::NonFinite {
                field: "position",
                record,
                offset,
            });
        }
        position.push(v);
    }
    let csi_offset = r.offset;
    r.fill(raw)?;
    for (k, chunk) in raw.chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(DatasetError::NonFinite {
                field: "csi",
                record,
                offset: csi_offset + 8 * k as u64,
            });
        }
        csi.push(Complex32::new(re, im));
    }
    Ok(t)
}

fn open(path: &Path) -> Result<(OffsetReader<BufReader<File>>, u64)> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    Ok((
        OffsetReader {
            inner: BufReader::with_capacity(1 << 20, file),
            offset: 0,
        },
        len,
    ))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Shape of a `CCDS` container as declared by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerInfo {
    pub datapoints: usize,
    pub antenna_count: usize,
    pub subcarrier_count: usize,
    pub position_dim: usize,
}

/// Reads and validates only the header of a `CCDS` container, including the
/// check that the file length matches the declared payload.
pub fn read_container_info(path: impl AsRef<Path>) -> Result<ContainerInfo> {
    let (mut r, len) = open(path.as_ref())?;
    let h = read_header(&mut r, Some(len))?;
    Ok(ContainerInfo {
        datapoints: h.n as usize,
        antenna_count: h.antennas,
        subcarrier_count: h.subcarriers,
        position_dim: h.dim,
    })
}

/// Loads a `CCDS` container. Datapoints are sorted by timestamp; ties keep
/// file order.
pub fn load_container(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (mut r, len) = open(path)?;
    let header = read_header(&mut r, Some(len))?;
    let n = header.n as usize;
    let cells = header.antennas * header.subcarriers;
    let mut positions = Vec::with_capacity(n * header.dim);
    let mut timestamps = Vec::with_capacity(n);
    let mut csi = Vec::with_capacity(n * cells);
    let mut raw = vec![0u8; cells * 8];
    for record in 0..header.n {
        timestamps.push(read_record(&mut r, &header, record, &mut raw, &mut positions, &mut csi)?);
    }
    let labels = Labels::new(header.dim, positions, timestamps)?;
    Dataset::from_parts(dataset_name(path), header.antennas, header.subcarriers, labels, csi)
}

/// Streams a `CCDS` container and reduces each record to its subcarrier mean
/// over `window` without materializing the full CSI tensor.
///
/// Equivalent to `subcarrier_average(&load_container(path)?, window)`.
pub fn load_reduced(path: impl AsRef<Path>, window: SubcarrierWindow) -> Result<ReducedDataset> {
    let path = path.as_ref();
    let (mut r, len) = open(path)?;
    let header = read_header(&mut r, Some(len))?;
    window.check(header.subcarriers)?;
    let n = header.n as usize;
    let cells = header.antennas * header.subcarriers;
    let mut positions = Vec::with_capacity(n * header.dim);
    let mut timestamps = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n * header.antennas);
    let mut raw = vec![0u8; cells * 8];
    let mut csi = Vec::with_capacity(cells);
    for record in 0..header.n {
        csi.clear();
        timestamps.push(read_record(&mut r, &header, record, &mut raw, &mut positions, &mut csi)?);
        average_row(&csi, header.antennas, header.subcarriers, window, &mut h);
    }
    let labels = Labels::new(header.dim, positions, timestamps)?;
    let order = super::time_order(labels.timestamps());
    let mut sorted_h = Vec::with_capacity(h.len());
    for &i in &order {
        sorted_h.extend_from_slice(&h[i * header.antennas..(i + 1) * header.antennas]);
    }
    ReducedDataset::new(dataset_name(path), header.antennas, labels.permuted(&order), sorted_h)
}

/// Writes `dataset` as a `CCDS` container.
pub fn save_container(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_container(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_container<W: Write>(dataset: &Dataset, w: &mut W) -> Result<()> {
    w.write_all(&CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&(dataset.antenna_count() as u32).to_le_bytes())?;
    w.write_all(&(dataset.subcarrier_count() as u32).to_le_bytes())?;
    w.write_all(&(dataset.position_dim() as u32).to_le_bytes())?;
    let labels = dataset.labels();
    for n in 0..dataset.len() {
        w.write_all(&labels.timestamp(n).to_le_bytes())?;
        for v in labels.position(n) {
            w.write_all(&v.to_le_bytes())?;
        }
        for c in dataset.csi(n) {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{subcarrier_average, CsiDatapoint};

    fn tiny() -> Dataset {
        let csi = (0..8).map(|k| Complex32::new(k as f32, -(k as f32) * 0.5)).collect();
        Dataset::from_datapoints(
            "tiny",
            2,
            4,
            vec![CsiDatapoint {
                csi,
                position: vec![1.0, -2.0],
                timestamp: 0.25,
            }],
        )
        .unwrap()
    }

    fn bytes_of(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_container(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn smallest_container_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.ccds");
        let ds = tiny();
        save_container(&ds, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_container(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.csi(0).len(), 8);
        assert_eq!(loaded, ds);
        save_container(&loaded, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert_eq!(first.len() as u64, HEADER_LEN + 8 + 16 + 64);
    }

    #[test]
    fn shuffled_records_load_sorted() {
        let mut buf = bytes_of(&tiny());
        // Append two more records by hand with decreasing timestamps.
        buf[8..16].copy_from_slice(&3u64.to_le_bytes());
        for t in [-1.0f64, 0.1] {
            buf.extend_from_slice(&t.to_le_bytes());
            buf.extend_from_slice(&t.to_le_bytes());
            buf.extend_from_slice(&0.0f64.to_le_bytes());
            buf.extend(std::iter::repeat(0u8).take(64));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ccds");
        std::fs::write(&path, &buf).unwrap();
        let ds = load_container(&path).unwrap();
        assert_eq!(ds.labels().timestamps(), &[-1.0, 0.1, 0.25]);
        assert_eq!(ds.labels().position(2), &[1.0, -2.0]);
        assert_eq!(ds.csi(2)[3], Complex32::new(3.0, -1.5));
    }

    fn load_bytes(buf: &[u8]) -> Result<Dataset> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ccds");
        std::fs::write(&path, buf).unwrap();
        load_container(&path)
    }

    #[test]
    fn load_errors_name_offsets() {
        let good = bytes_of(&tiny());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(load_bytes(&bad), Err(DatasetError::BadMagic { offset: 0 })));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(load_bytes(&bad), Err(DatasetError::VersionMismatch { found: 2, offset: 4 })));

        let mut bad = good.clone();
        bad[24..28].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(load_bytes(&bad), Err(DatasetError::MalformedHeader { offset: 24, .. })));

        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(load_bytes(&bad), Err(DatasetError::MalformedHeader { offset: 8, .. })));

        let truncated = &good[..good.len() - 5];
        assert!(matches!(
            load_bytes(truncated),
            Err(DatasetError::Truncated { offset, needed: 5 }) if offset == good.len() as u64 - 5
        ));
        assert!(matches!(load_bytes(&good[..10]), Err(DatasetError::Truncated { offset: 8, .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(load_bytes(&long), Err(DatasetError::TrailingBytes { offset }) if offset == good.len() as u64));

        let mut bad = good.clone();
        let csi_start = (HEADER_LEN + 8 + 16) as usize;
        bad[csi_start + 12..csi_start + 16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            load_bytes(&bad),
            Err(DatasetError::NonFinite { field: "csi", record: 0, offset }) if offset == csi_start as u64 + 8
        ));

        let mut bad = good;
        bad[28..36].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(load_bytes(&bad), Err(DatasetError::NonFinite { field: "timestamp", offset: 28, .. })));
    }

    #[test]
    fn streaming_reduction_matches_in_memory_reduction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.ccds");
        let ds = tiny();
        save_container(&ds, &path).unwrap();
        let window = SubcarrierWindow { start: 1, count: 2 };
        assert_eq!(load_reduced(&path, window).unwrap(), subcarrier_average(&ds, window).unwrap());
        assert!(load_reduced(&path, SubcarrierWindow { start: 3, count: 2 }).is_err());
        let info = read_container_info(&path).unwrap();
        assert_eq!(
            (info.datapoints, info.antenna_count, info.subcarrier_count, info.position_dim),
            (ds.len(), ds.antenna_count(), ds.subcarrier_count(), ds.position_dim())
        );
    }
}

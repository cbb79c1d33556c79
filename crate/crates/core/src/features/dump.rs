//! Feature dumps. The binary layout is an ASCII header line `T D frame_shift`
//! followed by `T * D` little-endian `f32` values in row-major order.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ColumnRole, FrameMatrix};
use crate::error::{Error, Result};

pub fn write_feature_bin(path: impl AsRef<Path>, m: &FrameMatrix) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.frame_shift())?;
    for &v in m.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary dump back. Values come back at `f32` precision and column
/// roles are not stored, so every column is reported as [`ColumnRole::Mfcc`].
pub fn read_feature_bin(path: impl AsRef<Path>) -> Result<FrameMatrix> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad = |m: &str| Error::DumpFormat(m.to_string());
    if fields.len() != 3 {
        return Err(bad("header must be `T D frame_shift`"));
    }
    let rows: usize = fields[0].parse().map_err(|_| bad("bad T"))?;
    let cols: usize = fields[1].parse().map_err(|_| bad("bad D"))?;
    let shift: f64 = fields[2].parse().map_err(|_| bad("bad frame_shift"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(bad("payload size does not match header"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FrameMatrix::new(rows, data, shift, vec![ColumnRole::Mfcc; cols])
}

/// One frame per line, comma separated.
pub fn write_feature_csv(path: impl AsRef<Path>, m: &FrameMatrix) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for t in 0..m.rows() {
        let line: Vec<String> = m.row(t).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let m = FrameMatrix::new(2, vec![1.0, 2.5, -3.0, 0.125], 0.01, vec![ColumnRole::Mfcc; 2]).unwrap();
        write_feature_bin(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"2 2 0.01\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 16);
        assert_eq!(&bytes[header.len()..header.len() + 4], &1.0f32.to_le_bytes());
        let back = read_feature_bin(&p).unwrap();
        assert_eq!(back.data(), m.data());
        assert_eq!(back.frame_shift(), 0.01);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        std::fs::write(&p, b"2 2 0.01\n\x00\x00").unwrap();
        assert!(matches!(read_feature_bin(&p), Err(Error::DumpFormat(_))));
    }

    #[test]
    fn csv_one_frame_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let m = FrameMatrix::new(2, vec![1.0, 2.5, -3.0, 0.125], 0.01, vec![ColumnRole::Mfcc; 2]).unwrap();
        write_feature_csv(&p, &m).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "1,2.5\n-3,0.125\n");
    }
}

//! File formats.
//!
//! `TNS1` tensor file: one ASCII header line
//! `TNS1 <N> <I1> ... <IN> f64 le col` terminated by `\n`, followed by
//! `Π I_n` raw little-endian 64-bit floats in column-major order.
//!
//! `MSK1` mask file: one ASCII header line
//! `MSK1 <N> <I1> ... <IN> <count>` terminated by `\n`, followed by `count`
//! raw little-endian unsigned 64-bit indices in ascending order.
//!
//! Headers are validated in full before any payload byte is read, and the
//! payload must match the advertised size exactly (no trailing bytes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::TraceRow;
use crate::tensor::{DenseTensor, ObservationMask};

const MAX_HEADER: usize = 4096;

fn read_header_line<R: Read>(r: &mut R) -> Result<String> {
    let mut bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte)? {
            0 => return Err(Error::format("unexpected end of file in header")),
            _ => {
                if byte[0] == b'\n' {
                    break;
                }
                bytes.push(byte[0]);
                if bytes.len() > MAX_HEADER {
                    return Err(Error::format("header line exceeds 4096 bytes"));
                }
            }
        }
    }
    String::from_utf8(bytes).map_err(|_| Error::format("header is not valid ASCII".to_string()))
}

fn parse_dims(tokens: &[&str]) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::format(format!("bad dimension token '{}'", t)))
        })
        .collect()
}

/// Writes a tensor in TNS1 format.
pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "TNS1 {}", t.dims().len())?;
    for d in t.dims() {
        write!(w, " {}", d)?;
    }
    writeln!(w, " f64 le col")?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a TNS1 tensor, validating the header and exact payload size.
pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header_line(&mut r)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != "TNS1" {
        return Err(Error::format(format!("not a TNS1 header: '{}'", header)));
    }
    let n: usize = tokens[1]
        .parse()
        .map_err(|_| Error::format("bad order field in TNS1 header".to_string()))?;
    if tokens.len() != n + 5 {
        return Err(Error::format(format!(
            "TNS1 header expects {} fields, got {}",
            n + 5,
            tokens.len()
        )));
    }
    let dims = parse_dims(&tokens[2..2 + n])?;
    if tokens[2 + n..] != ["f64", "le", "col"] {
        return Err(Error::format(format!(
            "unsupported TNS1 layout '{}'",
            tokens[2 + n..].join(" ")
        )));
    }
    let total: usize = dims.iter().product();
    let mut data = vec![0.0f64; total];
    let mut buf = [0u8; 8];
    for slot in &mut data {
        r.read_exact(&mut buf)
            .map_err(|_| Error::format("TNS1 payload shorter than header advertises"))?;
        *slot = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::format("TNS1 payload has trailing bytes"));
    }
    DenseTensor::new(dims, data)
}

/// Writes a mask in MSK1 format.
pub fn write_mask(path: &Path, m: &ObservationMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "MSK1 {}", m.dims().len())?;
    for d in m.dims() {
        write!(w, " {}", d)?;
    }
    writeln!(w, " {}", m.len())?;
    for idx in m.indices() {
        w.write_all(&idx.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an MSK1 mask, validating the header, index order, and bounds.
pub fn read_mask(path: &Path) -> Result<ObservationMask> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header_line(&mut r)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 3 || tokens[0] != "MSK1" {
        return Err(Error::format(format!("not an MSK1 header: '{}'", header)));
    }
    let n: usize = tokens[1]
        .parse()
        .map_err(|_| Error::format("bad order field in MSK1 header".to_string()))?;
    if tokens.len() != n + 3 {
        return Err(Error::format(format!(
            "MSK1 header expects {} fields, got {}",
            n + 3,
            tokens.len()
        )));
    }
    let dims = parse_dims(&tokens[2..2 + n])?;
    let count: usize = tokens[2 + n]
        .parse()
        .map_err(|_| Error::format("bad count field in MSK1 header".to_string()))?;
    let mut indices = vec![0u64; count];
    let mut buf = [0u8; 8];
    for slot in &mut indices {
        r.read_exact(&mut buf)
            .map_err(|_| Error::format("MSK1 payload shorter than header advertises"))?;
        *slot = u64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::format("MSK1 payload has trailing bytes"));
    }
    ObservationMask::new(dims, indices)
        .map_err(|e| Error::format(format!("invalid mask payload: {}", e)))
}

/// Writes the convergence trace with columns
/// `iter,objective,rel_change,max_feasibility_residual,seconds`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,objective,rel_change,max_feasibility_residual,seconds")?;
    for row in trace {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.iter, row.objective, row.rel_change, row.max_feasibility_residual, row.seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Seek;

    fn random_tensor(dims: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: usize = dims.iter().product();
        DenseTensor::new(
            dims,
            (0..total).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tensor_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tns");
        let t = random_tensor(vec![5, 4, 3], 1);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back, t);
        // header sanity
        let mut first = String::new();
        let mut f = BufReader::new(File::open(&path).unwrap());
        std::io::BufRead::read_line(&mut f, &mut first).unwrap();
        assert_eq!(first, "TNS1 3 5 4 3 f64 le col\n");
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.msk");
        let m = ObservationMask::random(vec![6, 7, 8], 0.25, 2).unwrap();
        write_mask(&path, &m).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_malformed_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tns");
        std::fs::write(&path, b"TNS2 3 2 2 2 f64 le col\n").unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"TNS1 3 2 2 f64 le col\n").unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"TNS1 3 2 2 2 f32 le col\n").unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"MSK1 2 4 4 x\n").unwrap();
        assert!(matches!(read_mask(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_wrong_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.tns");
        let t = random_tensor(vec![3, 3, 3], 3);
        write_tensor(&path, &t).unwrap();
        // truncate the last float
        let file = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        let len = file.metadata().unwrap().len();
        file.set_len(len - 4).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
        // extend with junk
        write_tensor(&path, &t).unwrap();
        let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.seek(std::io::SeekFrom::End(0)).unwrap();
        file.write_all(&[0u8; 3]).unwrap();
        assert!(matches!(read_tensor(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unsorted_mask_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.msk");
        let mut bytes = b"MSK1 2 4 4 2\n".to_vec();
        bytes.extend_from_slice(&5u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_mask(&path), Err(Error::Format(_))));
    }

    #[test]
    fn trace_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = vec![TraceRow {
            iter: 1,
            objective: 2.5,
            rel_change: 0.1,
            max_feasibility_residual: 0.01,
            seconds: 0.5,
        }];
        write_trace_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,objective,rel_change,max_feasibility_residual,seconds"
        );
        assert_eq!(lines.next().unwrap(), "1,2.5,0.1,0.01,0.5");
    }
}

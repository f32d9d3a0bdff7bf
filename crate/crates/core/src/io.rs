//! Binary cache for spectral bases.
//!
//! Layout (little endian): the 8-byte magic `GSIMCBAS`, a `u32` version,
//! `u64` n and k, a length-prefixed JSON method record, a length-prefixed
//! Laplacian hash (empty when unknown), k eigenvalues, then the n x k
//! eigenvector matrix in column-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{BasisMethod, SpectralBasis};

const MAGIC: &[u8; 8] = b"GSIMCBAS";
pub const BASIS_FORMAT_VERSION: u32 = 1;
/// Guards against allocating absurd sizes from a corrupt header.
const MAX_FIELD_BYTES: u32 = 1 << 20;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_basis<W: Write>(basis: &SpectralBasis, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(BASIS_FORMAT_VERSION)?;
    out.write_u64::<LittleEndian>(basis.n() as u64)?;
    out.write_u64::<LittleEndian>(basis.k() as u64)?;
    let method = serde_json::to_vec(&basis.method()).expect("method serializes");
    out.write_u32::<LittleEndian>(method.len() as u32)?;
    out.write_all(&method)?;
    let hash = basis.laplacian_hash().unwrap_or("").as_bytes();
    out.write_u32::<LittleEndian>(hash.len() as u32)?;
    out.write_all(hash)?;
    for &v in basis.eigenvalues().iter() {
        out.write_f64::<LittleEndian>(v)?;
    }
    for &v in basis.eigenvectors().as_slice() {
        out.write_f64::<LittleEndian>(v)?;
    }
    out.flush()
}

fn read_field<R: Read>(input: &mut R, what: &str) -> Result<Vec<u8>> {
    let len = input.read_u32::<LittleEndian>().map_err(|e| format_err(format!("{what}: {e}")))?;
    if len > MAX_FIELD_BYTES {
        return Err(format_err(format!("{what} length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    input
        .read_exact(&mut buf)
        .map_err(|e| format_err(format!("{what}: {e}")))?;
    Ok(buf)
}

pub fn read_basis<R: Read>(mut input: R) -> Result<SpectralBasis> {
    let truncated = |e: std::io::Error| format_err(format!("truncated basis file: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(format_err("not a basis file (bad magic)"));
    }
    let version = input.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != BASIS_FORMAT_VERSION {
        return Err(format_err(format!(
            "basis format version {version}, expected {BASIS_FORMAT_VERSION}"
        )));
    }
    let n = input.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let k = input.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    if k > n {
        return Err(format_err(format!("k = {k} exceeds n = {n}")));
    }
    let method: BasisMethod = serde_json::from_slice(&read_field(&mut input, "method")?)
        .map_err(|e| format_err(format!("method record: {e}")))?;
    let hash = String::from_utf8(read_field(&mut input, "hash")?)
        .map_err(|_| format_err("hash is not UTF-8"))?;

    let mut values = vec![0.0; k];
    input.read_f64_into::<LittleEndian>(&mut values).map_err(truncated)?;
    let len = n
        .checked_mul(k)
        .ok_or_else(|| format_err("n * k overflows"))?;
    let mut data = vec![0.0; len];
    input.read_f64_into::<LittleEndian>(&mut data).map_err(truncated)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(truncated)? != 0 {
        return Err(format_err("trailing bytes after eigenvectors"));
    }
    let basis = SpectralBasis::new(values, DMatrix::from_vec(n, k, data), method)?;
    Ok(if hash.is_empty() {
        basis
    } else {
        basis.with_laplacian_hash(hash)
    })
}

pub fn save_basis(basis: &SpectralBasis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_basis(basis, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<SpectralBasis> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_basis(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::tests::random_laplacian;
    use crate::spectral::{exact_eigs, nystrom_eigs, NystromParams};

    fn bytes(basis: &SpectralBasis) -> Vec<u8> {
        let mut buf = Vec::new();
        write_basis(basis, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bitwise() {
        let l = random_laplacian(25, 15, 0.2, 4);
        let exact = exact_eigs(&l, 8).unwrap().with_laplacian_hash(l.content_hash());
        assert_eq!(read_basis(bytes(&exact).as_slice()).unwrap(), exact);
        let ny = nystrom_eigs(&l, NystromParams::new(20, 6, 4, 2, 5)).unwrap();
        let back = read_basis(bytes(&ny).as_slice()).unwrap();
        assert_eq!(back, ny);
        assert_eq!(back.laplacian_hash(), None);
    }

    #[test]
    fn file_round_trip() {
        let l = random_laplacian(12, 8, 0.3, 5);
        let basis = exact_eigs(&l, 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        save_basis(&basis, &path).unwrap();
        assert_eq!(load_basis(&path).unwrap(), basis);
        assert!(matches!(load_basis(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn rejects_corruption() {
        let l = random_laplacian(10, 6, 0.3, 6);
        let good = bytes(&exact_eigs(&l, 4).unwrap());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_basis(bad_magic.as_slice()), Err(Error::Format(_))));
        let mut bad_version = good.clone();
        bad_version[8] = 9;
        assert!(matches!(read_basis(bad_version.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_basis(&good[..good.len() - 3]), Err(Error::Format(_))));
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(read_basis(trailing.as_slice()), Err(Error::Format(_))));
    }
}

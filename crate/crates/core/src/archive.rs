//! Minimal tar container shared by model checkpoints and baseline models:
//! a JSON metadata entry followed by raw little-endian f64 arrays. Headers
//! carry fixed timestamps and ownership so identical content gives identical
//! bytes.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn f64_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn bytes_f64(path: &Path, name: &str, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            path,
            format!("entry {name} is not a whole number of f64 values"),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub(crate) fn pack(entries: &[(String, Vec<u8>)]) -> Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    for (name, data) in entries {
        let mut header = tar::Header::new_ustar();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder
            .append_data(&mut header, name, data.as_slice())
            .map_err(|e| Error::io(name, e))?;
    }
    builder.into_inner().map_err(|e| Error::io("archive", e))
}

pub(crate) fn unpack(path: &Path, bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut archive = tar::Archive::new(bytes);
    let mut out = Vec::new();
    let entries = archive
        .entries()
        .map_err(|e| Error::format(path, format!("not a tar archive: {e}")))?;
    for entry in entries {
        let mut entry =
            entry.map_err(|e| Error::format(path, format!("corrupt archive entry: {e}")))?;
        let name = entry
            .path()
            .map_err(|e| Error::format(path, format!("bad entry name: {e}")))?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut data)
            .map_err(|e| Error::format(path, format!("truncated entry {name}: {e}")))?;
        out.push((name, data));
    }
    if out.is_empty() {
        return Err(Error::format(path, "empty archive"));
    }
    Ok(out)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

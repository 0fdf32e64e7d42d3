use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndgrad::{ParamRegistry, Tensor};

const MAGIC: &[u8; 8] = b"DRIBOCP\x01";
const VERSION: u32 = 1;

/// Versioned binary checkpoint: the run config text plus every named
/// parameter tensor of every registry, as raw little-endian f64s. Loading
/// reproduces each parameter bit-exactly.
pub struct Checkpoint {
    pub config_text: String,
    pub registries: Vec<(String, Vec<(String, Tensor)>)>,
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::Checkpoint("unreasonable string length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
}

pub fn save_checkpoint(
    path: &Path,
    config_text: &str,
    registries: &[(&str, &ParamRegistry)],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(&mut w, config_text)?;
    w.write_all(&(registries.len() as u32).to_le_bytes())?;
    for (name, reg) in registries {
        write_str(&mut w, name)?;
        w.write_all(&(reg.len() as u32).to_le_bytes())?;
        for (pname, node) in reg.iter() {
            write_str(&mut w, pname)?;
            let value = node.value_clone();
            w.write_all(&(value.ndim() as u32).to_le_bytes())?;
            for d in value.shape() {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic[..7] != &MAGIC[..7] {
        return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if magic[7] as u32 != VERSION || version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let config_text = read_str(&mut r)?;
    let mut count = [0u8; 4];
    r.read_exact(&mut count)?;
    let count = u32::from_le_bytes(count) as usize;
    let mut registries = Vec::with_capacity(count);
    for _ in 0..count {
        let rname = read_str(&mut r)?;
        let mut pcount = [0u8; 4];
        r.read_exact(&mut pcount)?;
        let pcount = u32::from_le_bytes(pcount) as usize;
        let mut params = Vec::with_capacity(pcount);
        for _ in 0..pcount {
            let pname = read_str(&mut r)?;
            let mut ndim = [0u8; 4];
            r.read_exact(&mut ndim)?;
            let ndim = u32::from_le_bytes(ndim) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut d = [0u8; 8];
                r.read_exact(&mut d)?;
                shape.push(u64::from_le_bytes(d) as usize);
            }
            let numel: usize = shape.iter().product();
            if numel > 1 << 28 {
                return Err(Error::Checkpoint("unreasonable tensor size".into()));
            }
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut v = [0u8; 8];
                r.read_exact(&mut v)?;
                data.push(f64::from_le_bytes(v));
            }
            params.push((pname, Tensor::new(shape, data)?));
        }
        registries.push((rname, params));
    }
    Ok(Checkpoint {
        config_text,
        registries,
    })
}

impl Checkpoint {
    /// Copy the named registry's tensors into `reg`. Names and shapes must
    /// match exactly.
    pub fn apply(&self, name: &str, reg: &ParamRegistry) -> Result<()> {
        let stored = self
            .registries
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("registry {name:?} missing")))?;
        if stored.1.len() != reg.len() {
            return Err(Error::Checkpoint(format!(
                "registry {name:?}: {} stored vs {} live parameters",
                stored.1.len(),
                reg.len()
            )));
        }
        for (pname, tensor) in &stored.1 {
            let node = reg.get(pname).ok_or_else(|| {
                Error::Checkpoint(format!("parameter {pname:?} missing in {name:?}"))
            })?;
            node.set_value(tensor.clone())
                .map_err(|e| Error::Checkpoint(format!("{pname}: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_registry(seed: u64) -> ParamRegistry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = ParamRegistry::new();
        reg.dense_init("w1", 3, 4, &mut rng).unwrap();
        reg.dense_init("w2", 2, 2, &mut rng).unwrap();
        reg.param(
            "b",
            Tensor::new(vec![3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        )
        .unwrap();
        reg
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let reg = random_registry(5);
        save_checkpoint(&path, "config text\n", &[("encoder", &reg)]).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config_text, "config text\n");
        let fresh = random_registry(99);
        loaded.apply("encoder", &fresh).unwrap();
        for ((_, a), (_, b)) in fresh.iter().zip(reg.iter()) {
            let (av, bv) = (a.value_clone(), b.value_clone());
            assert_eq!(av.shape(), bv.shape());
            for (x, y) in av.data().iter().zip(bv.data().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn corrupted_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let reg = random_registry(5);
        save_checkpoint(&path, "c", &[("encoder", &reg)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn version_mismatch_rejected_with_message() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let reg = random_registry(5);
        save_checkpoint(&path, "c", &[("encoder", &reg)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // version field
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version")),
            Err(other) => panic!("expected version error, got {other:?}"),
            Ok(_) => panic!("expected version error, got success"),
        }
    }

    #[test]
    fn missing_registry_rejected_on_apply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let reg = random_registry(5);
        save_checkpoint(&path, "c", &[("encoder", &reg)]).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert!(loaded.apply("missing", &reg).is_err());
    }
}

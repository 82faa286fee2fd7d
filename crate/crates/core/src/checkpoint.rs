//! Binary parameter files and the on-disk model bundle.
//!
//! Parameter file layout, all integers little-endian:
//!
//! ```text
//! "MHLT" | version: u32 | count: u32 | count × entry
//! entry = name_len: u32 | name: utf-8 | rows: u32 | cols: u32 | tag: u8 | rows·cols × f64
//! ```
//!
//! The tag byte records bias-ness (bit 0) and head membership (bit 1).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::config::ModelConfig;
use crate::data::{LabelSpace, Vocab};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Param, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"MHLT";
pub const VERSION: u32 = 1;

pub const PARAMS_FILE: &str = "model.mhlt";
pub const CONFIG_FILE: &str = "config.json";
pub const LABELS_FILE: &str = "labels.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{what} {n} does not fit in u32")))
}

pub fn write_params<W: Write>(mut w: W, params: &ParamStore) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32_len(params.len(), "parameter count")?.to_le_bytes())?;
    for (name, p) in params.iter() {
        w.write_all(&u32_len(name.len(), "name length")?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&u32_len(p.tensor.rows(), "rows")?.to_le_bytes())?;
        w.write_all(&u32_len(p.tensor.cols(), "cols")?.to_le_bytes())?;
        w.write_all(&[p.tag_byte()])?;
        for v in p.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rd = Reader { bytes: &bytes, pos: 0 };
    if rd.take(4).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = rd.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = rd.u32()? as usize;
        let name = std::str::from_utf8(rd.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rows = rd.u32()? as usize;
        let cols = rd.u32()? as usize;
        let tag = rd.take(1)?[0];
        let (site, role) = Param::from_tag_byte(tag)
            .ok_or_else(|| Error::Checkpoint(format!("`{name}`: bad tag byte {tag}")))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("`{name}`: shape overflow")))?;
        let data = (0..n).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        if params.contains(&name) {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        params.insert(name, Tensor::new(rows, cols, data)?, site, role);
    }
    if rd.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(params)
}

pub fn save_params(path: impl AsRef<Path>, params: &ParamStore) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_params(std::io::BufWriter::new(f), params)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamStore> {
    read_params(std::fs::File::open(path)?)
}

/// Everything needed to run a trained model on new text.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: Model,
    pub vocab: Vocab,
    pub labels: LabelSpace,
}

impl Bundle {
    /// Writes the bundle as a directory of four files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_params(dir.join(PARAMS_FILE), self.model.params())?;
        std::fs::write(dir.join(CONFIG_FILE), self.model.config().to_json())?;
        self.labels.save(dir.join(LABELS_FILE))?;
        self.vocab.save(dir.join(VOCAB_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let need = |f: &str| -> Result<PathBuf> {
            let p = dir.join(f);
            if p.is_file() {
                Ok(p)
            } else {
                Err(Error::Checkpoint(format!("{} is missing", p.display())))
            }
        };
        let config = ModelConfig::load(need(CONFIG_FILE)?)?;
        let params = load_params(need(PARAMS_FILE)?)?;
        let labels = LabelSpace::load(need(LABELS_FILE)?)?;
        let vocab = Vocab::load(need(VOCAB_FILE)?)?;
        if labels.len() != config.labels {
            return Err(Error::LabelSpaceMismatch {
                expected: config.labels,
                found: labels.len(),
            });
        }
        let model = Model::from_params(&config, params)?;
        if model.vocab() != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "embedding has {} rows but vocab has {} entries",
                model.vocab(),
                vocab.len()
            )));
        }
        Ok(Bundle { model, vocab, labels })
    }
}

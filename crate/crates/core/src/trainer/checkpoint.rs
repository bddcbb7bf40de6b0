//! Binary training checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field          | encoding                                   |
//! |----------------|--------------------------------------------|
//! | magic          | 8 bytes `QFBCKPT1`                         |
//! | version        | u32                                        |
//! | config         | u64 byte length, UTF-8 canonical TOML      |
//! | epoch          | u64                                        |
//! | adam step      | u64                                        |
//! | rng seed       | 32 bytes                                   |
//! | rng word pos   | u128                                       |
//! | rng stream     | u64                                        |
//! | array count    | u32 (= 4)                                  |
//! | arrays         | u64 length, then f64 values, in the order  |
//! |                | params, adam m, adam v, loss history       |

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QFBCKPT1";
pub const VERSION: u32 = 1;
const ARRAY_COUNT: u32 = 4;

/// Position of the training RNG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub stream: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub rng: RngState,
    /// Mean batch loss per completed epoch.
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.config.to_toml_string();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&ARRAY_COUNT.to_le_bytes());
        for array in [&self.params, &self.adam.m, &self.adam.v, &self.loss_history] {
            out.extend_from_slice(&(array.len() as u64).to_le_bytes());
            for x in array.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version} (expected {VERSION})"));
        }
        let len = r.len()?;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| "config block is not UTF-8".to_string())?;
        let config = TrainConfig::from_toml_str(text).map_err(|e| format!("embedded config: {e}"))?;
        let epoch = u64::from_le_bytes(r.array()?);
        let step = u64::from_le_bytes(r.array()?);
        let seed: [u8; 32] = r.array()?;
        let word_pos = u128::from_le_bytes(r.array()?);
        let stream = u64::from_le_bytes(r.array()?);
        let count = u32::from_le_bytes(r.array()?);
        if count != ARRAY_COUNT {
            return Err(format!("expected {ARRAY_COUNT} arrays, found {count}"));
        }
        let mut arrays = Vec::with_capacity(4);
        for _ in 0..count {
            let n = r.len()?;
            let raw = r.take(n.checked_mul(8).ok_or("array length overflow")?)?;
            arrays.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect::<Vec<f64>>(),
            );
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let loss_history = arrays.pop().expect("4 arrays");
        let v = arrays.pop().expect("4 arrays");
        let m = arrays.pop().expect("4 arrays");
        let params = arrays.pop().expect("4 arrays");
        let expected = config.widths().map_err(|e| e.to_string())?.parameter_count();
        if params.len() != expected || m.len() != expected || v.len() != expected {
            return Err(format!(
                "parameter arrays have lengths {}/{}/{}, config implies {expected}",
                params.len(),
                m.len(),
                v.len()
            ));
        }
        Ok(Self {
            config,
            epoch,
            params,
            adam: AdamState { step, m, v },
            rng: RngState { seed, word_pos, stream },
            loss_history,
        })
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&self.to_bytes())
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(u64::from_le_bytes(self.array()?)).map_err(|_| "length overflow".to_string())
    }
}

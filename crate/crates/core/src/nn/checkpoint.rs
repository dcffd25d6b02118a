//! Parameter checkpoints.
//!
//! ```text
//! magic        4 bytes  "PSMW"
//! version      u16      (currently 1)
//! fingerprint  u64      MlpSpec::fingerprint of the network shape
//! n_params     u64
//! params       n_params × f64
//! has_moments  u8       0 or 1
//! [steps u64, m n_params × f64, v n_params × f64]   when has_moments = 1
//! ```
//!
//! Everything is little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{Adam, AdamConfig, MlpSpec, ParamStore};
use crate::error::{PsmError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSMW";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub moments: Option<Adam>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, spec: &MlpSpec, mut w: W) -> Result<()> {
        let n = self.params.len();
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&spec.fingerprint().to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        write_f64s(&mut w, &self.params.values)?;
        match &self.moments {
            Some(adam) => {
                w.write_all(&[1])?;
                w.write_all(&adam.steps.to_le_bytes())?;
                write_f64s(&mut w, &adam.m)?;
                write_f64s(&mut w, &adam.v)?;
            }
            None => w.write_all(&[0])?,
        }
        Ok(())
    }

    /// Read a checkpoint written for `spec`; moments come back with `adam`
    /// as their configuration.
    pub fn read<R: Read>(spec: &MlpSpec, adam: AdamConfig, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PsmError::Format("not a PSMW checkpoint (bad magic)".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != CHECKPOINT_VERSION {
            return Err(PsmError::Format(format!("unsupported checkpoint version {version}")));
        }
        let fingerprint = read_u64(&mut r)?;
        if fingerprint != spec.fingerprint() {
            return Err(PsmError::Format("checkpoint was written for a different network shape".into()));
        }
        let n = read_u64(&mut r)? as usize;
        let params = ParamStore::from_values(spec, read_f64s(&mut r, n)?)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let moments = match flag[0] {
            0 => None,
            1 => {
                let steps = read_u64(&mut r)?;
                let m = read_f64s(&mut r, n)?;
                let v = read_f64s(&mut r, n)?;
                Some(Adam {
                    config: adam,
                    m,
                    v,
                    steps,
                })
            }
            other => return Err(PsmError::Format(format!("bad moment flag {other}"))),
        };
        Ok(Self { params, moments })
    }
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut b = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        })
        .collect()
}

pub fn save_checkpoint(path: &Path, spec: &MlpSpec, checkpoint: &Checkpoint) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    checkpoint.write(spec, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, spec: &MlpSpec, adam: AdamConfig) -> Result<Checkpoint> {
    Checkpoint::read(spec, adam, std::io::BufReader::new(std::fs::File::open(path)?))
}

//! Recorded experiments and their on-disk formats.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "PSMD"
//! version      u16      (currently 1)
//! scenario     u64      scenario hash
//! n_times      u64
//! n_cells      u64
//! n_controls   u64
//! n_stations   u64
//! grid_z       n_cells × f64
//! stations     n_stations × f64
//! per time:    t, controls[n_controls], p[n_cells], u[n_cells], T[n_cells],
//!              face_mass_flow[n_cells + 1], sensors[3 n_stations]   (f64 each)
//! ```
//!
//! The CSV export is long-format with one row per (time, cell):
//! `time,z,p,u,T,v0,v1,...`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PsmError, Result};
use crate::transport::FieldState;

pub const RECORD_MAGIC: &[u8; 4] = b"PSMD";
pub const RECORD_VERSION: u16 = 1;

/// One simulated experiment sampled every delta_t.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRecord {
    pub scenario_hash: u64,
    pub stations: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    /// Control vector applied from `times[k]` until `times[k + 1]`.
    pub controls: Vec<Vec<f64>>,
    /// Field-major sensor readouts (p, u, T blocks) at each time.
    pub sensors: Vec<Vec<f64>>,
}

impl SimulationRecord {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn grid_z(&self) -> &[f64] {
        &self.states[0].grid_z
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n_cells = self.grid_z().len();
        let n_controls = self.controls.first().map_or(0, Vec::len);
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&RECORD_VERSION.to_le_bytes())?;
        w.write_all(&self.scenario_hash.to_le_bytes())?;
        for count in [self.n_times(), n_cells, n_controls, self.stations.len()] {
            w.write_all(&(count as u64).to_le_bytes())?;
        }
        let mut put = |xs: &[f64]| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(self.grid_z())?;
        put(&self.stations)?;
        for k in 0..self.n_times() {
            let s = &self.states[k];
            put(&[self.times[k]])?;
            put(&self.controls[k])?;
            put(&s.pressure)?;
            put(&s.velocity)?;
            put(&s.temperature)?;
            put(&s.face_mass_flow)?;
            put(&self.sensors[k])?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(PsmError::Format("not a PSMD record (bad magic)".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != RECORD_VERSION {
            return Err(PsmError::Format(format!("unsupported record version {version}")));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let scenario_hash = read_u64(&mut r)?;
        let n_times = read_u64(&mut r)? as usize;
        let n_cells = read_u64(&mut r)? as usize;
        let n_controls = read_u64(&mut r)? as usize;
        let n_stations = read_u64(&mut r)? as usize;
        let read_vec = |r: &mut R, n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let grid_z = read_vec(&mut r, n_cells)?;
        let stations = read_vec(&mut r, n_stations)?;
        let mut rec = SimulationRecord {
            scenario_hash,
            stations,
            times: Vec::with_capacity(n_times),
            states: Vec::with_capacity(n_times),
            controls: Vec::with_capacity(n_times),
            sensors: Vec::with_capacity(n_times),
        };
        for _ in 0..n_times {
            rec.times.push(read_vec(&mut r, 1)?[0]);
            rec.controls.push(read_vec(&mut r, n_controls)?);
            let pressure = read_vec(&mut r, n_cells)?;
            let velocity = read_vec(&mut r, n_cells)?;
            let temperature = read_vec(&mut r, n_cells)?;
            let face_mass_flow = read_vec(&mut r, n_cells + 1)?;
            rec.states.push(FieldState {
                grid_z: grid_z.clone(),
                pressure,
                velocity,
                temperature,
                face_mass_flow,
            });
            rec.sensors.push(read_vec(&mut r, 3 * n_stations)?);
        }
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n_controls = self.controls.first().map_or(0, Vec::len);
        let mut header = vec!["time".to_string(), "z".into(), "p".into(), "u".into(), "T".into()];
        header.extend((0..n_controls).map(|c| format!("v{c}")));
        out.write_record(&header)?;
        for k in 0..self.n_times() {
            let s = &self.states[k];
            for i in 0..s.len() {
                let mut row = vec![
                    self.times[k].to_string(),
                    s.grid_z[i].to_string(),
                    s.pressure[i].to_string(),
                    s.velocity[i].to_string(),
                    s.temperature[i].to_string(),
                ];
                row.extend(self.controls[k].iter().map(f64::to_string));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

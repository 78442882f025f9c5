//! Binary checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! "NPNS1"
//! u32 dim, u64 cells[3], u32 m, f64 t, u64 step
//! m x (i32 valence, f64 diffusivity)
//! f64 b, r, u, dissipation; u8 has_last; f64 t_last; f64 last[4]
//! blocks, each u64 length then that many f64:
//!   c_1 .. c_m, phi, phi0, p, u_x, u_y, u_z
//! ```
//!
//! `u_z` is empty in two dimensions.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use npns_core::audit::RunningMonitors;
use npns_core::{FaceField, Grid, SimParams, Species, State};

use crate::error::{Result, SimError};

/// File magic.
pub const MAGIC: &[u8; 5] = b"NPNS1";

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Spatial dimension.
    pub dim: u32,
    /// Cells per axis, 1 past `dim`.
    pub cells: [u64; 3],
    /// Species table.
    pub species: Vec<Species>,
    /// Solver state.
    pub state: State,
    /// Running monitors.
    pub monitors: RunningMonitors,
}

fn bad(msg: impl Into<String>) -> SimError {
    SimError::Checkpoint(msg.into())
}

fn io_err(e: std::io::Error) -> SimError {
    bad(e.to_string())
}

impl Checkpoint {
    /// Snapshot of a run.
    pub fn new(grid: &Grid, params: &SimParams, state: &State, monitors: &RunningMonitors) -> Self {
        let c = grid.cells();
        Checkpoint {
            dim: grid.dim() as u32,
            cells: [c[0] as u64, c[1] as u64, c[2] as u64],
            species: params.species.clone(),
            state: state.clone(),
            monitors: *monitors,
        }
    }

    /// Serializes into `w`.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(self.dim)?;
        for c in self.cells {
            w.write_u64::<LE>(c)?;
        }
        w.write_u32::<LE>(self.species.len() as u32)?;
        w.write_f64::<LE>(self.state.t)?;
        w.write_u64::<LE>(self.state.step)?;
        for s in &self.species {
            w.write_i32::<LE>(s.valence)?;
            w.write_f64::<LE>(s.diffusivity)?;
        }
        let m = &self.monitors;
        for v in [m.b, m.r, m.u, m.dissipation] {
            w.write_f64::<LE>(v)?;
        }
        let (has, t_last, last) = match m.last {
            Some((t, v)) => (1u8, t, v),
            None => (0u8, 0.0, [0.0; 4]),
        };
        w.write_u8(has)?;
        w.write_f64::<LE>(t_last)?;
        for v in last {
            w.write_f64::<LE>(v)?;
        }
        let s = &self.state;
        let blocks = s
            .c
            .iter()
            .chain([&s.phi, &s.phi0, &s.p])
            .chain(s.u.comps.iter());
        for b in blocks {
            w.write_u64::<LE>(b.len() as u64)?;
            for v in b {
                w.write_f64::<LE>(*v)?;
            }
        }
        Ok(())
    }

    /// Serialized bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Deserializes from `r`, rejecting trailing bytes.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let dim = r.read_u32::<LE>().map_err(io_err)?;
        if !(2..=3).contains(&dim) {
            return Err(bad(format!("unsupported dimension {dim}")));
        }
        let mut cells = [0u64; 3];
        for c in &mut cells {
            *c = r.read_u64::<LE>().map_err(io_err)?;
        }
        let m = r.read_u32::<LE>().map_err(io_err)? as usize;
        if m == 0 || m > 64 {
            return Err(bad(format!("implausible species count {m}")));
        }
        let t = r.read_f64::<LE>().map_err(io_err)?;
        let step = r.read_u64::<LE>().map_err(io_err)?;
        let mut species = Vec::with_capacity(m);
        for _ in 0..m {
            species.push(Species {
                valence: r.read_i32::<LE>().map_err(io_err)?,
                diffusivity: r.read_f64::<LE>().map_err(io_err)?,
            });
        }
        let mut mon = [0.0; 4];
        for v in &mut mon {
            *v = r.read_f64::<LE>().map_err(io_err)?;
        }
        let has = r.read_u8().map_err(io_err)?;
        let t_last = r.read_f64::<LE>().map_err(io_err)?;
        let mut last = [0.0; 4];
        for v in &mut last {
            *v = r.read_f64::<LE>().map_err(io_err)?;
        }
        let last = match has {
            0 => None,
            1 => Some((t_last, last)),
            _ => return Err(bad("corrupt monitor flag")),
        };
        let cap: u64 = cells.iter().map(|c| c + 1).product::<u64>().saturating_mul(3);
        let mut block = || -> Result<Vec<f64>> {
            let n = r.read_u64::<LE>().map_err(io_err)?;
            if n > cap {
                return Err(bad(format!("block of {n} values exceeds the grid")));
            }
            let mut v = vec![0.0; n as usize];
            r.read_f64_into::<LE>(&mut v).map_err(io_err)?;
            Ok(v)
        };
        let c = (0..m).map(|_| block()).collect::<Result<Vec<_>>>()?;
        let phi = block()?;
        let phi0 = block()?;
        let p = block()?;
        let comps = [block()?, block()?, block()?];
        let mut tail = [0u8; 1];
        if r.read(&mut tail).map_err(io_err)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            dim,
            cells,
            species,
            state: State {
                t,
                step,
                c,
                phi,
                phi0,
                u: FaceField { comps },
                p,
            },
            monitors: RunningMonitors {
                b: mon[0],
                r: mon[1],
                u: mon[2],
                dissipation: mon[3],
                last,
            },
        })
    }

    /// Writes `checkpoint_<step>.npns` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(file_name(self.state.step));
        std::fs::write(&path, self.to_bytes()).map_err(SimError::io(&path))?;
        Ok(path)
    }

    /// Reads a checkpoint file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(SimError::io(path))?;
        Checkpoint::read_from(&mut bytes.as_slice())
    }

    /// Errors unless the checkpoint was written by a run on `grid` with
    /// `params`'s species and has field blocks of matching sizes.
    pub fn check_compatible(&self, grid: &Grid, params: &SimParams) -> Result<()> {
        let c = grid.cells();
        if self.dim as usize != grid.dim() || self.cells != [c[0] as u64, c[1] as u64, c[2] as u64] {
            return Err(bad("grid differs from the configuration"));
        }
        if self.species != params.species {
            return Err(bad("species table differs from the configuration"));
        }
        let nc = grid.cell_count();
        let s = &self.state;
        if s.c.iter().chain([&s.phi, &s.phi0, &s.p]).any(|b| b.len() != nc) {
            return Err(bad("cell block size differs from the grid"));
        }
        if (0..3).any(|axis| s.u.comps[axis].len() != grid.face_count(axis)) {
            return Err(bad("velocity block size differs from the grid"));
        }
        Ok(())
    }
}

/// `checkpoint_<step>.npns`, zero-padded so names sort by step.
pub fn file_name(step: u64) -> String {
    format!("checkpoint_{step:010}.npns")
}

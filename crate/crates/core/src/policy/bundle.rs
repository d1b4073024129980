//! Policy file layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "DREAMRPB"
//! version      u32
//! alpha        f64
//! eta_samples  u32
//! phi          f64
//! success      f64 position tolerance, f64 speed tolerance
//! levels       u32 count, f64 * count   per-axis acceleration levels
//! cf           qstack (see mdp::serialize)
//! uf           grid, table
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{CfPolicy, PolicyBundle, UfPolicy};
use crate::error::{Error, Result};
use crate::mdp::serialize::{read_grid, read_qstack, read_table, write_grid, write_qstack, write_table};
use crate::mdp::{DiscreteActionSet, QuantileTable, SuccessRegion};

pub const BUNDLE_MAGIC: &[u8; 8] = b"DREAMRPB";
pub const BUNDLE_VERSION: u32 = 1;

pub fn write_bundle<W: Write>(w: &mut W, bundle: &PolicyBundle) -> Result<()> {
    w.write_all(BUNDLE_MAGIC)?;
    w.write_u32::<LE>(BUNDLE_VERSION)?;
    w.write_f64::<LE>(bundle.alpha)?;
    w.write_u32::<LE>(bundle.cf.quantiles.samples() as u32)?;
    w.write_f64::<LE>(bundle.cf.phi)?;
    w.write_f64::<LE>(bundle.cf.success.position_tol)?;
    w.write_f64::<LE>(bundle.cf.success.speed_tol)?;
    let levels = bundle.cf.actions.levels();
    w.write_u32::<LE>(levels.len() as u32)?;
    for &l in levels {
        w.write_f64::<LE>(l)?;
    }
    write_qstack(w, &bundle.cf.stack)?;
    write_grid(w, &bundle.uf.grid)?;
    write_table(w, bundle.uf.table())?;
    Ok(())
}

pub fn read_bundle<R: Read>(r: &mut R) -> Result<PolicyBundle> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BUNDLE_MAGIC {
        return Err(Error::PolicyFormat("not a policy file".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != BUNDLE_VERSION {
        return Err(Error::PolicyFormat(format!("unsupported policy version {version}")));
    }
    let alpha = r.read_f64::<LE>()?;
    let samples = r.read_u32::<LE>()? as usize;
    let phi = r.read_f64::<LE>()?;
    let success = SuccessRegion {
        position_tol: r.read_f64::<LE>()?,
        speed_tol: r.read_f64::<LE>()?,
    };
    let count = r.read_u32::<LE>()?;
    if count == 0 || count > 64 {
        return Err(Error::PolicyFormat(format!("{count} action levels")));
    }
    let levels = (0..count).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
    let actions = DiscreteActionSet::from_levels(levels);
    let stack = read_qstack(r)?;
    if stack.num_actions != actions.len() {
        return Err(Error::PolicyFormat("action count mismatch".into()));
    }
    let uf_grid = read_grid(r)?;
    let uf_table = read_table(r)?;
    Ok(PolicyBundle {
        alpha,
        cf: CfPolicy {
            stack,
            actions: actions.clone(),
            phi,
            success,
            quantiles: QuantileTable::new(samples),
        },
        uf: UfPolicy::new(uf_grid, actions, uf_table).map_err(|e| Error::PolicyFormat(e.to_string()))?,
    })
}

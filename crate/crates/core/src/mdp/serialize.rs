//! Little-endian binary encoding of grids and action-value tables.
//!
//! ```text
//! grid    := dims:u32 { knots:u32 knot:f64 * knots } * dims
//! table   := len:u64 value:f32 * len
//! qstack  := grid actions:u32 horizon_dt:f64 tables:u32 table * tables
//! ```
//!
//! Worst values are recomputed on load, so a round trip is lossless.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::grid::InterpGrid;
use super::vi::QStack;
use crate::error::{Error, Result};

const MAX_ELEMENTS: u64 = 1 << 31;

fn bad(msg: impl Into<String>) -> Error {
    Error::PolicyFormat(msg.into())
}

pub fn write_grid<W: Write>(w: &mut W, grid: &InterpGrid) -> Result<()> {
    w.write_u32::<LE>(grid.dims() as u32)?;
    for axis in grid.axes() {
        w.write_u32::<LE>(axis.len() as u32)?;
        for &k in axis {
            w.write_f64::<LE>(k)?;
        }
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<InterpGrid> {
    let dims = r.read_u32::<LE>()?;
    if dims == 0 || dims as usize > super::grid::MAX_DIMS {
        return Err(bad(format!("grid has {dims} axes")));
    }
    let mut axes = Vec::with_capacity(dims as usize);
    for _ in 0..dims {
        let n = r.read_u32::<LE>()?;
        if n as u64 > MAX_ELEMENTS {
            return Err(bad("axis too long"));
        }
        let axis = (0..n).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
        axes.push(axis);
    }
    InterpGrid::from_axes(axes).map_err(|e| bad(e.to_string()))
}

pub fn write_table<W: Write>(w: &mut W, table: &[f32]) -> Result<()> {
    w.write_u64::<LE>(table.len() as u64)?;
    for &q in table {
        w.write_f32::<LE>(q)?;
    }
    Ok(())
}

pub fn read_table<R: Read>(r: &mut R) -> Result<Vec<f32>> {
    let len = r.read_u64::<LE>()?;
    if len > MAX_ELEMENTS {
        return Err(bad(format!("table of {len} entries")));
    }
    let mut table = vec![0f32; len as usize];
    r.read_f32_into::<LE>(&mut table)?;
    if table.iter().any(|q| !q.is_finite()) {
        return Err(bad("non-finite table entry"));
    }
    Ok(table)
}

pub fn write_qstack<W: Write>(w: &mut W, stack: &QStack) -> Result<()> {
    write_grid(w, &stack.grid)?;
    w.write_u32::<LE>(stack.num_actions as u32)?;
    w.write_f64::<LE>(stack.horizon_dt)?;
    w.write_u32::<LE>(stack.tables().len() as u32)?;
    for t in stack.tables() {
        write_table(w, t)?;
    }
    Ok(())
}

pub fn read_qstack<R: Read>(r: &mut R) -> Result<QStack> {
    let grid = read_grid(r)?;
    let actions = r.read_u32::<LE>()? as usize;
    let horizon_dt = r.read_f64::<LE>()?;
    let count = r.read_u32::<LE>()?;
    if count as u64 > MAX_ELEMENTS {
        return Err(bad("too many tables"));
    }
    let tables = (0..count).map(|_| read_table(r)).collect::<Result<Vec<_>>>()?;
    QStack::from_parts(grid, actions, horizon_dt, tables).map_err(|e| bad(e.to_string()))
}

//! Versioned little-endian binary snapshots of an [`Optimizer`].
//!
//! Layout: magic `NGLR`, `u32` version, payload, then a CRC-32 of
//! everything before it. Every matrix is prefixed by its `u64` row and
//! column counts and stored as raw `f64` bits, so a round trip is bitwise.

use std::fs;
use std::path::Path;

use natgalore_core::{
    AdamConfig, AdamState, EpsPlacement, GradHistory, Matrix, Mode, Optimizer, OptimizerConfig,
    ParamSlot, Projector, Side, SlotConfig,
};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NGLR";
pub const VERSION: u32 = 1;

pub fn save(opt: &Optimizer, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(opt))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Optimizer> {
    from_bytes(&fs::read(path)?)
}

pub fn to_bytes(opt: &Optimizer) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    write_config(&mut w, opt.config());
    w.u64(opt.step_index());
    w.u64(opt.slots().len() as u64);
    for slot in opt.slots() {
        write_slot(&mut w, slot);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<Optimizer> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch, file is corrupt".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let config = read_config(&mut r)?;
    let step = r.u64()?;
    let count = r.len()?;
    let mut slots = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        slots.push(read_slot(&mut r)?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last slot",
            body.len() - r.pos
        )));
    }
    Ok(Optimizer::from_parts(config, slots, step)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn opt_u64(&mut self, v: Option<u64>) {
        self.bool(v.is_some());
        if let Some(v) = v {
            self.u64(v);
        }
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        m.as_slice().iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file: wanted {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("invalid boolean byte {b}"))),
        }
    }
    /// A length or count, bounded by the bytes left so corrupt sizes fail
    /// before allocating.
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
    fn opt_u64(&mut self) -> Result<Option<u64>> {
        Ok(if self.bool()? { Some(self.u64()?) } else { None })
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("slot name is not utf-8".into()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Checkpoint(format!("implausible matrix shape {rows}x{cols}")))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_vec(rows, cols, data)?)
    }
}

fn mode_tag(m: Mode) -> u8 {
    match m {
        Mode::Adam => 0,
        Mode::Galore => 1,
        Mode::NaturalGalore => 2,
    }
}

fn side_tag(s: Side) -> u8 {
    match s {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn read_side(r: &mut Reader) -> Result<Side> {
    match r.u8()? {
        0 => Ok(Side::Left),
        1 => Ok(Side::Right),
        t => Err(Error::Checkpoint(format!("invalid side tag {t}"))),
    }
}

fn write_adam_config(w: &mut Writer, c: &AdamConfig) {
    w.f64(c.beta1);
    w.f64(c.beta2);
    w.f64(c.epsilon);
    w.bool(c.bias_correction);
    w.u8(match c.eps_placement {
        EpsPlacement::InsideSqrt => 0,
        EpsPlacement::OutsideSqrt => 1,
    });
}

fn read_adam_config(r: &mut Reader) -> Result<AdamConfig> {
    Ok(AdamConfig {
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
        bias_correction: r.bool()?,
        eps_placement: match r.u8()? {
            0 => EpsPlacement::InsideSqrt,
            1 => EpsPlacement::OutsideSqrt,
            t => return Err(Error::Checkpoint(format!("invalid epsilon placement tag {t}"))),
        },
    })
}

fn write_config(w: &mut Writer, c: &OptimizerConfig) {
    w.u8(mode_tag(c.mode));
    w.f64(c.lr);
    w.u64(c.rank as u64);
    w.u64(c.refresh_period);
    w.f64(c.lambda);
    w.u64(c.history as u64);
    w.f64(c.alpha);
    w.f64(c.weight_decay);
    write_adam_config(w, &c.adam);
    w.u64(c.min_dim_for_projection as u64);
    w.bool(c.side.is_some());
    if let Some(s) = c.side {
        w.u8(side_tag(s));
    }
    w.bool(c.clear_history_on_refresh);
}

fn read_config(r: &mut Reader) -> Result<OptimizerConfig> {
    let mode = match r.u8()? {
        0 => Mode::Adam,
        1 => Mode::Galore,
        2 => Mode::NaturalGalore,
        t => return Err(Error::Checkpoint(format!("invalid mode tag {t}"))),
    };
    Ok(OptimizerConfig {
        mode,
        lr: r.f64()?,
        rank: r.u64()? as usize,
        refresh_period: r.u64()?,
        lambda: r.f64()?,
        history: r.u64()? as usize,
        alpha: r.f64()?,
        weight_decay: r.f64()?,
        adam: read_adam_config(r)?,
        min_dim_for_projection: r.u64()? as usize,
        side: if r.bool()? { Some(read_side(r)?) } else { None },
        clear_history_on_refresh: r.bool()?,
    })
}

fn write_slot(w: &mut Writer, s: &ParamSlot) {
    w.str(s.name());
    w.matrix(s.theta());
    let c = s.config();
    w.u64(c.rank as u64);
    w.u64(c.refresh_period);
    w.f64(c.lambda);
    w.u64(c.history as u64);
    w.f64(c.alpha);

    w.bool(s.projector().is_some());
    if let Some(p) = s.projector() {
        w.u8(side_tag(p.side()));
        w.u64(p.rank() as u64);
        w.u64(p.refresh_period());
        w.opt_u64(p.last_refresh_step());
        w.bool(p.param_shape().is_some());
        if let Some((n, m)) = p.param_shape() {
            w.u64(n as u64);
            w.u64(m as u64);
        }
        w.bool(p.factor().is_some());
        if let Some(f) = p.factor() {
            w.matrix(f);
        }
    }

    w.bool(s.history().is_some());
    if let Some(h) = s.history() {
        w.u64(h.capacity() as u64);
        w.f64(h.lambda());
        w.u64(h.len() as u64);
        for col in h.columns() {
            w.f64s(col);
        }
    }

    let a = s.adam();
    w.matrix(a.m());
    w.matrix(a.v());
    w.u64(a.step_count());
    write_adam_config(w, a.config());
}

fn read_slot(r: &mut Reader) -> Result<ParamSlot> {
    let name = r.str()?;
    let theta = r.matrix()?;
    let config = SlotConfig {
        rank: r.u64()? as usize,
        refresh_period: r.u64()?,
        lambda: r.f64()?,
        history: r.u64()? as usize,
        alpha: r.f64()?,
    };
    let projector = if r.bool()? {
        let side = read_side(r)?;
        let rank = r.u64()? as usize;
        let period = r.u64()?;
        let last = r.opt_u64()?;
        let shape = if r.bool()? {
            Some((r.u64()? as usize, r.u64()? as usize))
        } else {
            None
        };
        let factor = if r.bool()? { Some(r.matrix()?) } else { None };
        Some(Projector::from_parts(side, rank, period, last, shape, factor)?)
    } else {
        None
    };
    let history = if r.bool()? {
        let capacity = r.u64()? as usize;
        let lambda = r.f64()?;
        let n = r.len()?;
        let cols = (0..n).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
        Some(GradHistory::from_parts(capacity, lambda, cols)?)
    } else {
        None
    };
    let m = r.matrix()?;
    let v = r.matrix()?;
    let steps = r.u64()?;
    let adam = AdamState::from_parts(m, v, steps, read_adam_config(r)?)?;
    Ok(ParamSlot::from_parts(name, theta, projector, history, adam, config)?)
}

//! Flat binary parameter container.
//!
//! ```text
//! "ERRNETCKPT1"
//! repeated until end of file:
//!   u32 LE   name length in bytes
//!   bytes    UTF-8 name
//!   u32 LE   rank
//!   u64 LE   dims[rank]
//!   f64 LE   values[product(dims)]
//! ```
//!
//! Model parameters are stored under their own names (rank 4, NCHW). A
//! checkpoint written during training also carries `adam.m.<name>`,
//! `adam.v.<name>` and a one-element `adam.step`.

use std::fs;
use std::path::Path;

use errnet_core::optim::AdamState;
use errnet_core::{ErrNet, Shape, Tensor};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 11] = b"ERRNETCKPT1";

pub const ADAM_M: &str = "adam.m.";
pub const ADAM_V: &str = "adam.v.";
pub const ADAM_STEP: &str = "adam.step";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Entry {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Entry { name: name.into(), dims: t.shape().dims().iter().map(|&d| d as u64).collect(), data: t.data().to_vec() }
    }

    pub fn to_tensor(&self) -> Option<Tensor> {
        if self.dims.len() != 4 {
            return None;
        }
        let d: Vec<usize> = self.dims.iter().map(|&x| x as usize).collect();
        Tensor::from_vec(Shape::new(d[0], d[1], d[2], d[3]), self.data.clone()).ok()
    }
}

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for e in entries {
        out.extend((e.name.len() as u32).to_le_bytes());
        out.extend(e.name.as_bytes());
        out.extend((e.dims.len() as u32).to_le_bytes());
        for d in &e.dims {
            out.extend(d.to_le_bytes());
        }
        for v in &e.data {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], (usize, String)> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err((self.pos, format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, (usize, String)> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, (usize, String)> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<Entry>, (usize, String)> {
    if !bytes.starts_with(MAGIC) {
        return Err((0, "bad magic: expected \"ERRNETCKPT1\"".into()));
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let mut entries: Vec<Entry> = Vec::new();
    while r.pos < bytes.len() {
        let at = r.pos;
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| (at + 4, "name is not UTF-8".to_string()))?
            .to_string();
        if entries.iter().any(|e| e.name == name) {
            return Err((at, format!("duplicate entry `{name}`")));
        }
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err((r.pos - 4, format!("`{name}`: rank {rank} is implausible")));
        }
        let dims = (0..rank).map(|_| r.u64("dims")).collect::<std::result::Result<Vec<_>, _>>()?;
        let count = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|c| usize::try_from(c).ok())
            .and_then(|c| c.checked_mul(8).map(|_| c))
            .ok_or((r.pos, format!("`{name}`: element count overflows")))?;
        let raw = r.take(count * 8, &format!("values of `{name}`"))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push(Entry { name, dims, data });
    }
    Ok(entries)
}

pub fn write(path: &Path, entries: &[Entry]) -> Result<()> {
    fs::write(path, encode(entries)).map_err(CliError::io(path))
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode(&bytes).map_err(|(offset, message)| CliError::Format { path: path.into(), offset, message })
}

/// Parameters, then (if given) the optimiser moments and step.
pub fn entries_for(net: &ErrNet, adam: Option<&AdamState>) -> Vec<Entry> {
    let mut out: Vec<Entry> = net.params.iter().map(|(n, t)| Entry::from_tensor(n, t)).collect();
    if let Some(st) = adam {
        for ((name, _), m) in net.params.iter().zip(&st.m) {
            out.push(Entry::from_tensor(format!("{ADAM_M}{name}"), m));
        }
        for ((name, _), v) in net.params.iter().zip(&st.v) {
            out.push(Entry::from_tensor(format!("{ADAM_V}{name}"), v));
        }
        out.push(Entry { name: ADAM_STEP.into(), dims: vec![1], data: vec![st.step as f64] });
    }
    out
}

fn lookup<'a>(entries: &'a [Entry], name: &str, expected: &Tensor, path: &Path) -> Result<Tensor> {
    let e = entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::Validation(format!("{}: missing parameter `{name}`", path.display())))?;
    let want: Vec<u64> = expected.shape().dims().iter().map(|&d| d as u64).collect();
    if e.dims != want {
        return Err(CliError::Validation(format!(
            "{}: parameter `{name}` has shape {:?}, model expects {:?}",
            path.display(),
            e.dims,
            want
        )));
    }
    Ok(e.to_tensor().expect("rank and length checked"))
}

/// Overwrites every parameter of `net` from `entries`. Extra entries that
/// are neither parameters nor optimiser state are rejected.
pub fn load_params(net: &mut ErrNet, entries: &[Entry], path: &Path) -> Result<()> {
    for e in entries {
        let known = net.params.id(&e.name).is_some()
            || e.name == ADAM_STEP
            || [ADAM_M, ADAM_V].iter().any(|p| e.name.strip_prefix(p).is_some_and(|n| net.params.id(n).is_some()));
        if !known {
            return Err(CliError::Validation(format!("{}: unknown parameter `{}`", path.display(), e.name)));
        }
    }
    let names: Vec<String> = net.params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let t = lookup(entries, &name, net.params.by_name(&name).expect("own name"), path)?;
        net.params.set(&name, t)?;
    }
    Ok(())
}

/// Optimiser state, if the checkpoint has it.
pub fn load_adam(net: &ErrNet, entries: &[Entry], path: &Path) -> Result<Option<AdamState>> {
    let Some(step) = entries.iter().find(|e| e.name == ADAM_STEP) else {
        return Ok(None);
    };
    let mut st = AdamState::new(&net.params);
    st.step = match step.data.as_slice() {
        [s] if *s >= 0.0 && s.fract() == 0.0 => *s as u64,
        _ => return Err(CliError::Validation(format!("{}: malformed `{ADAM_STEP}`", path.display()))),
    };
    for (k, (name, t)) in net.params.iter().enumerate() {
        st.m[k] = lookup(entries, &format!("{ADAM_M}{name}"), t, path)?;
        st.v[k] = lookup(entries, &format!("{ADAM_V}{name}"), t, path)?;
    }
    Ok(Some(st))
}

//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "RDMODEL\0" | u32 version
//! u32 input_w | u32 input_h | u8 activation (0 relu, 1 tanh)
//! u32 n_conv  | n_conv x (u32 filters, u32 kernel, u32 stride, u32 padding)
//! u32 n_dense | n_dense x u32 width
//! u32 n_tensors | n_tensors x (u32 rank, rank x u32 dim)   -- shape table
//! u64 init_seed | u64 n_params | n_params x f64 params
//! u64 adam_t | n_params x f64 m | n_params x f64 v
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::net::Plan;
use super::{Activation, AdamState, ArchConfig, ConvStage, ModelState};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RDMODEL\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Tensor shapes in parameter order: conv weights `[F, C, k, k]` and biases
/// `[F]`, dense weights `[O, I]` and biases `[O]`.
fn shape_table(plan: &Plan) -> Vec<Vec<usize>> {
    let mut t = Vec::new();
    for g in &plan.convs {
        t.push(vec![g.out_c, g.in_c, g.kernel, g.kernel]);
        t.push(vec![g.out_c]);
    }
    for g in &plan.dense {
        t.push(vec![g.outputs, g.inputs]);
        t.push(vec![g.outputs]);
    }
    t
}

fn encode(model: &ModelState) -> Result<Vec<u8>> {
    let plan = Plan::new(&model.arch)?;
    let n = plan.n_params;
    if model.params.len() != n || model.adam.m.len() != n || model.adam.v.len() != n {
        return Err(Error::Contract("model vectors do not match the architecture".into()));
    }
    let mut b = Vec::with_capacity(64 + 24 * n);
    let u32le = |b: &mut Vec<u8>, v: usize| b.extend_from_slice(&(v as u32).to_le_bytes());
    b.extend_from_slice(CHECKPOINT_MAGIC);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let a = &model.arch;
    u32le(&mut b, a.input_width);
    u32le(&mut b, a.input_height);
    b.push(match a.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    u32le(&mut b, a.conv.len());
    for s in &a.conv {
        for v in [s.filters, s.kernel, s.stride, s.padding] {
            u32le(&mut b, v);
        }
    }
    u32le(&mut b, a.dense.len());
    for &w in &a.dense {
        u32le(&mut b, w);
    }
    let shapes = shape_table(&plan);
    u32le(&mut b, shapes.len());
    for s in &shapes {
        u32le(&mut b, s.len());
        for &d in s {
            u32le(&mut b, d);
        }
    }
    b.extend_from_slice(&model.init_seed.to_le_bytes());
    b.extend_from_slice(&(n as u64).to_le_bytes());
    for v in &model.params {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&model.adam.t.to_le_bytes());
    for v in model.adam.m.iter().chain(&model.adam.v) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    Ok(b)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<ModelState, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err("not a model checkpoint (bad magic)".into());
    }
    let version = c.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let input_width = c.u32()?;
    let input_height = c.u32()?;
    let activation = match c.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        other => return Err(format!("unknown activation tag {other}")),
    };
    let n_conv = c.u32()?;
    let mut conv = Vec::new();
    for _ in 0..n_conv {
        conv.push(ConvStage::new(c.u32()?, c.u32()?, c.u32()?, c.u32()?));
    }
    let n_dense = c.u32()?;
    let dense = (0..n_dense).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    let arch = ArchConfig { input_width, input_height, conv, dense, activation };
    let plan = Plan::new(&arch).map_err(|e| e.to_string())?;
    let n_tensors = c.u32()?;
    let mut shapes = Vec::new();
    for _ in 0..n_tensors {
        let rank = c.u32()?;
        shapes.push((0..rank).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?);
    }
    if shapes != shape_table(&plan) {
        return Err("shape table does not match the architecture".into());
    }
    let init_seed = c.u64()?;
    let n = c.u64()? as usize;
    if n != plan.n_params {
        return Err(format!("checkpoint holds {n} parameters, architecture needs {}", plan.n_params));
    }
    let params = c.f64s(n)?;
    let t = c.u64()?;
    let m = c.f64s(n)?;
    let v = c.f64s(n)?;
    if c.pos != bytes.len() {
        return Err("trailing bytes after checkpoint".into());
    }
    Ok(ModelState { arch, params, adam: AdamState { m, v, t }, init_seed })
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|message| Error::Decode { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{adam_step, init_model, TrainConfig};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = init_model(&ArchConfig::desk(), 11).unwrap();
        let g: Vec<f64> = (0..m.params.len()).map(|i| (i as f64 * 0.1).sin()).collect();
        adam_step(&mut m, &g, &TrainConfig::default()).unwrap();
        m.params[0] = f64::MIN_POSITIVE / 3.0;
        m.params[1] = -0.0;
        let p = dir.path().join("sub/model.bin");
        save_checkpoint(&m, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.arch, m.arch);
        assert_eq!(back.adam.t, 1);
        assert_eq!(back.init_seed, 11);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&m.params));
        assert_eq!(bits(&back.adam.m), bits(&m.adam.m));
        assert_eq!(bits(&back.adam.v), bits(&m.adam.v));
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), CHECKPOINT_VERSION);
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let m = init_model(&ArchConfig::desk(), 1).unwrap();
        let p = dir.path().join("m.bin");
        save_checkpoint(&m, &p).unwrap();
        let good = std::fs::read(&p).unwrap();
        for (name, bytes) in [
            ("magic", [b"XXXXXXXX".as_slice(), &good[8..]].concat()),
            ("version", [&good[..8], &99u32.to_le_bytes(), &good[12..]].concat()),
            ("truncated", good[..good.len() - 1].to_vec()),
            ("trailing", [good.as_slice(), &[0]].concat()),
        ] {
            std::fs::write(&p, bytes).unwrap();
            assert!(matches!(load_checkpoint(&p), Err(Error::Decode { .. })), "{name}");
        }
        assert!(matches!(load_checkpoint(&dir.path().join("none")), Err(Error::Io { .. })));
    }
}

//! Self-describing checkpoint container: config JSON, seed, epoch
//! counter, and every parameter array in declaration order at full f64
//! precision, so save→load→save is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::formats::{ByteReader, ByteWriter, CHECKPOINT_MAGIC, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::gpt::{GptConfig, MotionGpt};
use crate::model::{BodyTag, VqVae, VqVaeConfig};
use crate::optim::ParamStore;

const KIND_VQVAE: u32 = 1;
const KIND_GPT: u32 = 2;

#[derive(Serialize, Deserialize)]
struct VqVaeMeta {
    config: VqVaeConfig,
    body: BodyTag,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct GptMeta {
    config: GptConfig,
    seed: u64,
}

fn write_params(w: &mut ByteWriter, params: &ParamStore) {
    w.u32(params.len() as u32);
    for (name, tensor) in params.iter() {
        w.u32(name.len() as u32);
        w.bytes(name.as_bytes());
        w.u32(tensor.shape.len() as u32);
        for &d in &tensor.shape {
            w.u32(d as u32);
        }
        for &v in &tensor.data {
            w.f64(v);
        }
    }
}

/// Overwrite `params` from the reader; count, names, order, and shapes
/// must all match the freshly constructed model.
fn read_params_into(r: &mut ByteReader, params: &mut ParamStore) -> Result<()> {
    let count = r.u32("parameter count")? as usize;
    if count != params.len() {
        return Err(Error::Incompatible(format!(
            "checkpoint stores {count} parameters, model declares {}",
            params.len()
        )));
    }
    for idx in 0..count {
        let name = r.str("parameter name")?;
        if params.name(idx) != name {
            return Err(Error::Incompatible(format!(
                "parameter {idx} is {:?} in the checkpoint but {:?} in the model",
                name,
                params.name(idx)
            )));
        }
        let ndim = r.u32("parameter rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("parameter dim")? as usize);
        }
        let expected = params.get(idx).shape.clone();
        if shape != expected {
            return Err(Error::Incompatible(format!(
                "parameter {name:?} has shape {shape:?} in the checkpoint but {expected:?} in the model"
            )));
        }
        let numel: usize = shape.iter().product();
        let data = r.f64_slice(numel, &format!("parameter {name:?} data"))?;
        params.get_mut(idx).data = data;
    }
    Ok(())
}

fn checkpoint_bytes(kind: u32, meta_json: &str, epoch: u64, seed: u64, params: &ParamStore) -> Vec<u8> {
    let mut w = ByteWriter::new(CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(kind);
    w.u64(epoch);
    w.u64(seed);
    w.u32(meta_json.len() as u32);
    w.bytes(meta_json.as_bytes());
    write_params(&mut w, params);
    w.finish()
}

fn open_checkpoint<'a>(buf: &'a [u8], expect_kind: u32) -> Result<(ByteReader<'a>, u64, u64, String)> {
    let mut r = ByteReader::new(buf);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version()?;
    let kind = r.u32("checkpoint kind")?;
    if kind != expect_kind {
        return Err(Error::Incompatible(format!(
            "checkpoint kind {kind} does not match the requested model kind {expect_kind}"
        )));
    }
    let epoch = r.u64("epoch counter")?;
    let seed = r.u64("seed")?;
    let meta = r.str("config json")?;
    Ok((r, epoch, seed, meta))
}

pub fn vqvae_checkpoint_bytes(model: &VqVae, epoch: u64) -> Result<Vec<u8>> {
    let meta = VqVaeMeta {
        config: model.config.clone(),
        body: model.body,
        seed: model.seed,
    };
    let json = serde_json::to_string(&meta)
        .map_err(|e| Error::format(format!("cannot serialize checkpoint config: {e}")))?;
    Ok(checkpoint_bytes(KIND_VQVAE, &json, epoch, model.seed, &model.params))
}

pub fn save_vqvae_checkpoint(model: &VqVae, epoch: u64, path: &Path) -> Result<()> {
    fs::write(path, vqvae_checkpoint_bytes(model, epoch)?)?;
    Ok(())
}

pub fn vqvae_from_checkpoint_bytes(buf: &[u8]) -> Result<(VqVae, u64)> {
    let (mut r, epoch, seed, json) = open_checkpoint(buf, KIND_VQVAE)?;
    let meta: VqVaeMeta = serde_json::from_str(&json)
        .map_err(|e| Error::format(format!("bad checkpoint config json: {e}")))?;
    if meta.seed != seed {
        return Err(Error::format(format!(
            "checkpoint header seed {seed} disagrees with config seed {}",
            meta.seed
        )));
    }
    let mut model = VqVae::new(meta.config, meta.body, meta.seed)?;
    read_params_into(&mut r, &mut model.params)?;
    r.expect_end()?;
    Ok((model, epoch))
}

pub fn load_vqvae_checkpoint(path: &Path) -> Result<(VqVae, u64)> {
    let buf = fs::read(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    vqvae_from_checkpoint_bytes(&buf)
}

pub fn gpt_checkpoint_bytes(model: &MotionGpt, epoch: u64) -> Result<Vec<u8>> {
    let meta = GptMeta {
        config: model.config.clone(),
        seed: model.seed,
    };
    let json = serde_json::to_string(&meta)
        .map_err(|e| Error::format(format!("cannot serialize checkpoint config: {e}")))?;
    Ok(checkpoint_bytes(KIND_GPT, &json, epoch, model.seed, &model.params))
}

pub fn save_gpt_checkpoint(model: &MotionGpt, epoch: u64, path: &Path) -> Result<()> {
    fs::write(path, gpt_checkpoint_bytes(model, epoch)?)?;
    Ok(())
}

pub fn gpt_from_checkpoint_bytes(buf: &[u8]) -> Result<(MotionGpt, u64)> {
    let (mut r, epoch, seed, json) = open_checkpoint(buf, KIND_GPT)?;
    let meta: GptMeta = serde_json::from_str(&json)
        .map_err(|e| Error::format(format!("bad checkpoint config json: {e}")))?;
    if meta.seed != seed {
        return Err(Error::format(format!(
            "checkpoint header seed {seed} disagrees with config seed {}",
            meta.seed
        )));
    }
    let mut model = MotionGpt::new(meta.config, meta.seed)?;
    read_params_into(&mut r, &mut model.params)?;
    r.expect_end()?;
    Ok((model, epoch))
}

pub fn load_gpt_checkpoint(path: &Path) -> Result<(MotionGpt, u64)> {
    let buf = fs::read(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    gpt_from_checkpoint_bytes(&buf)
}

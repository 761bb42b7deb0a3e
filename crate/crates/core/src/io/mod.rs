//! File formats, corpus generation, and directory helpers.

mod checkpoint;
mod formats;
mod synth;

pub use checkpoint::{
    gpt_checkpoint_bytes, gpt_from_checkpoint_bytes, load_gpt_checkpoint, load_vqvae_checkpoint,
    save_gpt_checkpoint, save_vqvae_checkpoint, vqvae_checkpoint_bytes, vqvae_from_checkpoint_bytes,
};
pub use formats::{
    codes_from_bytes, codes_to_bytes, load_beats, load_codes, load_motion, load_track,
    motion_from_bytes, motion_to_bytes, report_to_csv, report_to_speed_csv, report_to_text,
    save_beats, save_codes, save_motion, save_report, save_track, track_from_bytes, track_to_bytes,
    CHECKPOINT_MAGIC, CODES_MAGIC, FORMAT_VERSION, MOTION_MAGIC, TRACK_MAGIC,
};
pub use synth::{
    generate_feature_track, generate_motion, BurstSpec, DatasetSpec, SyntheticSpec,
};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Motion files in a directory, sorted by name for deterministic corpus
/// iteration.
pub fn list_motion_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot read directory {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "fmot").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}

/// Write a full synthetic corpus: per clip a motion file, a pretrained
/// feature track, a handcrafted feature track, and a beat list. Returns
/// the manifest lines (also written to `manifest.txt`).
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Vec<String>> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();
    for i in 0..spec.clips {
        let (motion, beats) = spec.clip_motion(i)?;
        let stem = format!("clip_{i:03}");

        let motion_path = out_dir.join(format!("{stem}.fmot"));
        formats::save_motion(&motion, &motion_path)?;
        manifest.push(format!("{stem}.fmot motion {}x{}", motion.num_frames, motion.num_joints));

        let pre = spec.clip_pretrained_track(i)?;
        let pre_path = out_dir.join(format!("{stem}.pre.ftrk"));
        formats::save_track(&pre, &pre_path)?;
        manifest.push(format!("{stem}.pre.ftrk features {}x{}", pre.rows, pre.dims));

        let hand = spec.clip_handcrafted_track(i)?;
        let hand_path = out_dir.join(format!("{stem}.hand.ftrk"));
        formats::save_track(&hand, &hand_path)?;
        manifest.push(format!("{stem}.hand.ftrk features {}x{}", hand.rows, hand.dims));

        let beats_path = out_dir.join(format!("{stem}.beats.txt"));
        formats::save_beats(&beats, &beats_path)?;
        manifest.push(format!("{stem}.beats.txt beats {}", beats.len()));
    }
    fs::write(out_dir.join("manifest.txt"), manifest.join("\n") + "\n")?;
    Ok(manifest)
}

//! Binary file formats, all little-endian with 4-byte magic tags:
//! `FMOT` motion clips, `FTRK` feature tracks, `FCOD` pose-code streams,
//! `FCKP` checkpoints. Floating-point payloads are stored as f32 except
//! checkpoints, which keep f64 so a save/load round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gpt::{FeatureTrack, TrackKind};
use crate::model::{BodyTag, MotionSequence, PoseCodeSequence};

pub const MOTION_MAGIC: &[u8; 4] = b"FMOT";
pub const TRACK_MAGIC: &[u8; 4] = b"FTRK";
pub const CODES_MAGIC: &[u8; 4] = b"FCOD";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCKP";
pub const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Byte-level plumbing
// ---------------------------------------------------------------------------

pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        ByteWriter { buf }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(format!(
                "truncated file: reading {what} needs bytes [{}, {}) but file has {}",
                self.pos,
                self.pos + n,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic tag")?;
        if got != magic {
            return Err(Error::format(format!(
                "bad magic at offset 0: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub fn expect_version(&mut self) -> Result<()> {
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported format version {v}, this build reads version {FORMAT_VERSION}"
            )));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f32_slice(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(4 * n, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn f64_slice(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(8 * n, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn str(&mut self, what: &str) -> Result<String> {
        let len = self.u32(&format!("{what} length"))? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(format!("{what} is not valid UTF-8")))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!(
                "trailing bytes: expected length {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Motion clips
// ---------------------------------------------------------------------------

pub fn motion_to_bytes(p: &MotionSequence) -> Vec<u8> {
    let mut w = ByteWriter::new(MOTION_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(p.num_frames as u32);
    w.u32(p.num_joints as u32);
    w.f32(p.frame_rate as f32);
    for &v in &p.frames {
        w.f32(v as f32);
    }
    w.finish()
}

pub fn save_motion(p: &MotionSequence, path: &Path) -> Result<()> {
    fs::write(path, motion_to_bytes(p))?;
    Ok(())
}

pub fn motion_from_bytes(buf: &[u8]) -> Result<MotionSequence> {
    let mut r = ByteReader::new(buf);
    r.expect_magic(MOTION_MAGIC)?;
    r.expect_version()?;
    let t = r.u32("frame count")? as usize;
    let j = r.u32("joint count")? as usize;
    let rate = r.f32("frame rate")? as f64;
    let frames = r.f32_slice(t * j * 3, "frame data")?;
    r.expect_end()?;
    MotionSequence::new(t, j, rate, frames)
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    motion_from_bytes(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Feature tracks
// ---------------------------------------------------------------------------

pub fn track_to_bytes(track: &FeatureTrack) -> Vec<u8> {
    let mut w = ByteWriter::new(TRACK_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(track.rows as u32);
    w.u32(track.dims as u32);
    w.f32(track.rate as f32);
    w.u32(match track.kind {
        TrackKind::Pretrained => 0,
        TrackKind::Handcrafted => 1,
    });
    for &v in &track.values {
        w.f32(v as f32);
    }
    w.finish()
}

pub fn save_track(track: &FeatureTrack, path: &Path) -> Result<()> {
    fs::write(path, track_to_bytes(track))?;
    Ok(())
}

pub fn track_from_bytes(buf: &[u8]) -> Result<FeatureTrack> {
    let mut r = ByteReader::new(buf);
    r.expect_magic(TRACK_MAGIC)?;
    r.expect_version()?;
    let rows = r.u32("row count")? as usize;
    let dims = r.u32("column count")? as usize;
    let rate = r.f32("rate")? as f64;
    let kind = match r.u32("kind tag")? {
        0 => TrackKind::Pretrained,
        1 => TrackKind::Handcrafted,
        other => {
            return Err(Error::format(format!(
                "unknown feature-track kind tag {other}"
            )))
        }
    };
    let values = r.f32_slice(rows * dims, "feature data")?;
    r.expect_end()?;
    FeatureTrack::new(rows, dims, rate, kind, values)
}

pub fn load_track(path: &Path) -> Result<FeatureTrack> {
    track_from_bytes(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Pose-code sequences
// ---------------------------------------------------------------------------

pub fn codes_to_bytes(codes: &PoseCodeSequence, vocab: usize) -> Vec<u8> {
    let mut w = ByteWriter::new(CODES_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(vocab as u32);
    w.u32(codes.codes.len() as u32);
    w.u32(match codes.codebook_id {
        BodyTag::Upper => 0,
        BodyTag::Lower => 1,
    });
    for &c in &codes.codes {
        w.i32(c as i32);
    }
    w.finish()
}

pub fn save_codes(codes: &PoseCodeSequence, vocab: usize, path: &Path) -> Result<()> {
    fs::write(path, codes_to_bytes(codes, vocab))?;
    Ok(())
}

pub fn codes_from_bytes(buf: &[u8]) -> Result<(PoseCodeSequence, usize)> {
    let mut r = ByteReader::new(buf);
    r.expect_magic(CODES_MAGIC)?;
    r.expect_version()?;
    let vocab = r.u32("vocabulary size")? as usize;
    let len = r.u32("code count")? as usize;
    let body = match r.u32("body tag")? {
        0 => BodyTag::Upper,
        1 => BodyTag::Lower,
        other => return Err(Error::format(format!("unknown body tag {other}"))),
    };
    let mut codes = Vec::with_capacity(len);
    for i in 0..len {
        let c = r.i32(&format!("code {i}"))?;
        if c < 0 || c as usize >= vocab {
            return Err(Error::format(format!(
                "code {c} at position {i} outside vocabulary [0, {vocab})"
            )));
        }
        codes.push(c as usize);
    }
    r.expect_end()?;
    Ok((
        PoseCodeSequence {
            codes,
            codebook_id: body,
        },
        vocab,
    ))
}

pub fn load_codes(path: &Path) -> Result<(PoseCodeSequence, usize)> {
    codes_from_bytes(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Beat lists (plain text, one time in seconds per line)
// ---------------------------------------------------------------------------

pub fn save_beats(beats: &[f64], path: &Path) -> Result<()> {
    let mut out = String::new();
    for b in beats {
        out.push_str(&format!("{b:.9}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_beats(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    let mut beats = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        beats.push(trimmed.parse::<f64>().map_err(|_| {
            Error::format(format!("bad beat time on line {}: {trimmed:?}", ln + 1))
        })?);
    }
    Ok(beats)
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

use crate::metrics::EvalReport;

/// Flat key-value form, one metric per line, deterministic order.
pub fn report_to_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("fid_kinetic = {:.12e}\n", report.fid_kinetic));
    out.push_str(&format!("fid_geometric = {:.12e}\n", report.fid_geometric));
    out.push_str(&format!("div_kinetic = {:.12e}\n", report.div_kinetic));
    out.push_str(&format!("div_geometric = {:.12e}\n", report.div_geometric));
    out.push_str(&format!("beat_align_score = {:.12e}\n", report.beat_align));
    out.push_str(&format!("bas_sigma_seconds = {:.12e}\n", report.bas_sigma));
    for (j, s) in report.speed_std_per_joint.iter().enumerate() {
        out.push_str(&format!("speed_std_joint_{j:02} = {s:.12e}\n"));
    }
    out.push_str(&format!("speed_std_all_joints = {:.12e}\n", report.speed_std_mean));
    out
}

/// Single CSV row in the quality/diversity/alignment column order.
pub fn report_to_csv(report: &EvalReport) -> String {
    format!(
        "fid_k,fid_g,div_k,div_g,bas\n{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
        report.fid_kinetic,
        report.fid_geometric,
        report.div_kinetic,
        report.div_geometric,
        report.beat_align
    )
}

/// Per-joint speed-std columns plus the all-joints mean.
pub fn report_to_speed_csv(report: &EvalReport) -> String {
    let mut header = String::new();
    let mut row = String::new();
    for (j, s) in report.speed_std_per_joint.iter().enumerate() {
        header.push_str(&format!("joint_{j:02},"));
        row.push_str(&format!("{s:.12e},"));
    }
    header.push_str("all_joints\n");
    row.push_str(&format!("{:.12e}\n", report.speed_std_mean));
    header + &row
}

pub fn save_report(report: &EvalReport, base: &Path) -> Result<()> {
    fs::write(base.with_extension("txt"), report_to_text(report))?;
    fs::write(base.with_extension("csv"), report_to_csv(report))?;
    fs::write(base.with_extension("speed.csv"), report_to_speed_csv(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_motion() -> MotionSequence {
        let mut p = MotionSequence::zeros(8, 2, 60.0);
        for t in 0..8 {
            for j in 0..2 {
                for a in 0..3 {
                    *p.coord_mut(t, j, a) = (t * 7 + j * 3 + a) as f64 * 0.125 - 1.5;
                }
            }
        }
        p
    }

    #[test]
    fn motion_roundtrip_is_byte_identical() {
        let p = demo_motion();
        let bytes = motion_to_bytes(&p);
        let loaded = motion_from_bytes(&bytes).unwrap();
        let again = motion_to_bytes(&loaded);
        assert_eq!(bytes, again);
    }

    #[test]
    fn motion_truncated_file_is_format_error() {
        let bytes = motion_to_bytes(&demo_motion());
        let err = motion_from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("truncated"), "{msg}");
    }

    #[test]
    fn motion_bad_magic_is_format_error() {
        let mut bytes = motion_to_bytes(&demo_motion());
        bytes[0] = b'X';
        assert!(matches!(
            motion_from_bytes(&bytes).unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn motion_bad_version_is_explicit_error() {
        let mut bytes = motion_to_bytes(&demo_motion());
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        let msg = motion_from_bytes(&bytes).unwrap_err().to_string();
        assert!(msg.contains("version 99"), "{msg}");
    }

    #[test]
    fn codes_roundtrip_and_range_check() {
        let codes = PoseCodeSequence {
            codes: vec![0, 5, 63, 17],
            codebook_id: BodyTag::Lower,
        };
        let bytes = codes_to_bytes(&codes, 64);
        let (loaded, vocab) = codes_from_bytes(&bytes).unwrap();
        assert_eq!(loaded, codes);
        assert_eq!(vocab, 64);

        let bad = codes_to_bytes(
            &PoseCodeSequence {
                codes: vec![64],
                codebook_id: BodyTag::Upper,
            },
            64,
        );
        assert!(codes_from_bytes(&bad).is_err());
    }

    #[test]
    fn beats_roundtrip() {
        let dir = std::env::temp_dir().join("dancegen_beats_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("clip.beats.txt");
        let beats = vec![0.0, 0.5, 1.0, 1.5];
        save_beats(&beats, &path).unwrap();
        let loaded = load_beats(&path).unwrap();
        assert_eq!(loaded.len(), beats.len());
        for (a, b) in beats.iter().zip(&loaded) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

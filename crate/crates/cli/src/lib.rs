//! Command implementations behind the `dancegen` binary, exposed as a
//! library so integration tests drive the exact same code paths.

use std::fs;
use std::path::{Path, PathBuf};

use dancegen_core::config::RunConfig;
use dancegen_core::error::{Error, Result};
use dancegen_core::gpt::{generate, FeatureTrack, GptClip, GptTrainer, MotionGpt, TrackKind};
use dancegen_core::io;
use dancegen_core::metrics::{
    beat_align_score, detect_dance_beats, diversity, fid, geometric_features, kinetic_features,
    speed_std, EvalReport, GeometricPairs,
};
use dancegen_core::model::{
    merge_body, split_body, BodyTag, MotionSequence, VqVae, VqVaeTrainer,
};
use dancegen_core::rng::salt_from_name;
use dancegen_core::verify::{verify_ffl, verify_model, verify_ops, CheckOutcome};

/// Exit codes: 0 success, 2 input/config error, 3 numeric failure,
/// 4 compatibility error.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        Error::Incompatible(_) => 4,
        _ => 2,
    }
}

fn body_seed(seed: u64, body: BodyTag) -> u64 {
    dancegen_core::rng::splitmix64(seed ^ salt_from_name(body.as_str()))
}

fn clip_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

pub fn cmd_gen_data(spec_path: &Path, out_dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| Error::config(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec: io::DatasetSpec = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("bad dataset spec: {e}")))?;
    io::generate_dataset(&spec, out_dir)
}

// ---------------------------------------------------------------------------
// train-vqvae
// ---------------------------------------------------------------------------

pub struct TrainVqVaeOutcome {
    pub upper_checkpoint: PathBuf,
    pub lower_checkpoint: PathBuf,
    pub final_loss_upper: f64,
    pub final_loss_lower: f64,
}

fn load_corpus(data_dir: &Path) -> Result<Vec<(String, MotionSequence)>> {
    let files = io::list_motion_files(data_dir)?;
    if files.is_empty() {
        return Err(Error::config(format!(
            "no .fmot files in {}",
            data_dir.display()
        )));
    }
    files
        .iter()
        .map(|p| Ok((clip_stem(p), io::load_motion(p)?)))
        .collect()
}

pub fn cmd_train_vqvae(config: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainVqVaeOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let corpus = load_corpus(data_dir)?;
    let partition = &config.model.joint_partition;
    let total_joints = partition.total_joints();
    for (stem, clip) in &corpus {
        if clip.num_joints != total_joints {
            return Err(Error::config(format!(
                "clip {stem} has {} joints, partition covers {total_joints}",
                clip.num_joints
            )));
        }
    }

    let mut outcome = TrainVqVaeOutcome {
        upper_checkpoint: out_dir.join("vqvae_upper.fckp"),
        lower_checkpoint: out_dir.join("vqvae_lower.fckp"),
        final_loss_upper: f64::NAN,
        final_loss_lower: f64::NAN,
    };

    for body in [BodyTag::Upper, BodyTag::Lower] {
        let joints = match body {
            BodyTag::Upper => partition.upper.len(),
            BodyTag::Lower => partition.lower.len(),
        };
        let dataset: Vec<MotionSequence> = corpus
            .iter()
            .map(|(_, clip)| {
                let (upper, lower) = split_body(clip, partition)?;
                Ok(match body {
                    BodyTag::Upper => upper,
                    BodyTag::Lower => lower,
                })
            })
            .collect::<Result<_>>()?;

        let vq_config = config.vqvae_config(joints);
        let seed = body_seed(config.training.seed, body);
        let model = VqVae::new(vq_config, body, seed)?;
        let mut trainer = VqVaeTrainer::new(
            model,
            config.training.learning_rate,
            config.training.adam_beta1,
            config.training.adam_beta2,
        );
        let ckpt_path = match body {
            BodyTag::Upper => outcome.upper_checkpoint.clone(),
            BodyTag::Lower => outcome.lower_checkpoint.clone(),
        };
        let train_result = trainer.run_epochs(&dataset, config.training.epochs);
        // On divergence the trainer rolled back to the last good epoch;
        // persist that state before surfacing the numeric error.
        io::save_vqvae_checkpoint(&trainer.model, trainer.epochs_done() as u64, &ckpt_path)?;
        let mut csv = String::from(dancegen_core::model::EpochStats::CSV_HEADER);
        csv.push('\n');
        for row in &trainer.history {
            csv.push_str(&row.csv_row());
            csv.push('\n');
        }
        fs::write(
            out_dir.join(format!("vqvae_{}_loss.csv", body.as_str())),
            csv,
        )?;
        if let Err(err) = train_result {
            return Err(Error::Numeric(format!(
                "{err}; last good checkpoint written to {}",
                ckpt_path.display()
            )));
        }
        let final_loss = trainer.history.last().map(|s| s.total).unwrap_or(f64::NAN);
        match body {
            BodyTag::Upper => outcome.final_loss_upper = final_loss,
            BodyTag::Lower => outcome.final_loss_lower = final_loss,
        }
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// train-gpt
// ---------------------------------------------------------------------------

pub struct TrainGptOutcome {
    pub checkpoint: PathBuf,
    pub final_loss: f64,
}

fn load_track_if(path: &Path, expect: TrackKind) -> Result<FeatureTrack> {
    let track = io::load_track(path)?;
    if track.kind != expect {
        return Err(Error::config(format!(
            "{} holds a {:?} track, expected {:?}",
            path.display(),
            track.kind,
            expect
        )));
    }
    Ok(track)
}

/// Assemble GPT training clips: pose codes from the frozen autoencoders
/// plus the conditioning tracks stored next to each motion file.
pub fn build_gpt_clips(
    config: &RunConfig,
    data_dir: &Path,
    upper: &VqVae,
    lower: &VqVae,
) -> Result<Vec<GptClip>> {
    let corpus = load_corpus(data_dir)?;
    let partition = &config.model.joint_partition;
    let gpt_cfg = config.gpt_config(upper.config.codebook_size, lower.config.codebook_size);
    let mut clips = Vec::new();
    for (stem, clip) in &corpus {
        let (up, low) = split_body(clip, partition)?;
        let upper_codes = upper.encode_codes(&up)?.codes;
        let lower_codes = lower.encode_codes(&low)?.codes;
        if upper_codes.len() > gpt_cfg.context {
            return Err(Error::config(format!(
                "clip {stem} has {} pose-code steps, above the model context {}; raise gpt.context",
                upper_codes.len(),
                gpt_cfg.context
            )));
        }
        let pretrained = if gpt_cfg.uses_pretrained() {
            Some(load_track_if(
                &data_dir.join(format!("{stem}.pre.ftrk")),
                TrackKind::Pretrained,
            )?)
        } else {
            None
        };
        let handcrafted = if gpt_cfg.uses_handcrafted() {
            Some(load_track_if(
                &data_dir.join(format!("{stem}.hand.ftrk")),
                TrackKind::Handcrafted,
            )?)
        } else {
            None
        };
        clips.push(GptClip {
            pretrained,
            handcrafted,
            upper_codes,
            lower_codes,
        });
    }
    Ok(clips)
}

pub fn cmd_train_gpt(
    config: &RunConfig,
    data_dir: &Path,
    upper_ckpt: &Path,
    lower_ckpt: &Path,
    out_dir: &Path,
) -> Result<TrainGptOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let (upper, _) = io::load_vqvae_checkpoint(upper_ckpt)?;
    let (lower, _) = io::load_vqvae_checkpoint(lower_ckpt)?;
    if upper.body != BodyTag::Upper || lower.body != BodyTag::Lower {
        return Err(Error::Incompatible(
            "checkpoints are not an (upper, lower) pair".to_string(),
        ));
    }
    let clips = build_gpt_clips(config, data_dir, &upper, &lower)?;
    let gpt_cfg = config.gpt_config(upper.config.codebook_size, lower.config.codebook_size);
    let model = MotionGpt::new(gpt_cfg, body_seed(config.training.seed, BodyTag::Upper) ^ salt_from_name("gpt"))?;
    let mut trainer = GptTrainer::new(
        model,
        config.training.learning_rate,
        config.training.adam_beta1,
        config.training.adam_beta2,
    );
    let ckpt_path = out_dir.join("gpt.fckp");
    let train_result = trainer.run_epochs(&clips, config.training.epochs);
    io::save_gpt_checkpoint(&trainer.model, trainer.epochs_done() as u64, &ckpt_path)?;
    let mut csv = String::from(dancegen_core::gpt::GptEpochStats::CSV_HEADER);
    csv.push('\n');
    for row in &trainer.history {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    fs::write(out_dir.join("gpt_loss.csv"), csv)?;
    if let Err(err) = train_result {
        return Err(Error::Numeric(format!(
            "{err}; last good checkpoint written to {}",
            ckpt_path.display()
        )));
    }
    Ok(TrainGptOutcome {
        checkpoint: ckpt_path,
        final_loss: trainer.history.last().map(|s| s.loss).unwrap_or(f64::NAN),
    })
}

// ---------------------------------------------------------------------------
// reconstruct / generate
// ---------------------------------------------------------------------------

pub fn cmd_reconstruct(
    config: &RunConfig,
    upper_ckpt: &Path,
    lower_ckpt: &Path,
    input: &Path,
    output: &Path,
) -> Result<()> {
    config.validate()?;
    let (upper, _) = io::load_vqvae_checkpoint(upper_ckpt)?;
    let (lower, _) = io::load_vqvae_checkpoint(lower_ckpt)?;
    let motion = io::load_motion(input)?;
    let partition = &config.model.joint_partition;
    if motion.num_joints != partition.total_joints() {
        return Err(Error::Incompatible(format!(
            "clip has {} joints, configured partition covers {}",
            motion.num_joints,
            partition.total_joints()
        )));
    }
    let (up, low) = split_body(&motion, partition)?;
    if upper.config.input_joints != up.num_joints || lower.config.input_joints != low.num_joints {
        return Err(Error::Incompatible(format!(
            "checkpoints expect {}/{} joints, partition provides {}/{}",
            upper.config.input_joints,
            lower.config.input_joints,
            up.num_joints,
            low.num_joints
        )));
    }
    let up_recon = upper.reconstruct(&up)?;
    let low_recon = lower.reconstruct(&low)?;
    let merged = merge_body(&up_recon, &low_recon, partition)?;
    io::save_motion(&merged, output)?;
    Ok(())
}

pub struct GenerateArgs<'a> {
    pub config: &'a RunConfig,
    pub gpt_ckpt: &'a Path,
    pub upper_ckpt: &'a Path,
    pub lower_ckpt: &'a Path,
    pub pretrained: Option<&'a Path>,
    pub handcrafted: Option<&'a Path>,
    pub init_upper: usize,
    pub init_lower: usize,
    pub steps: usize,
    pub output: &'a Path,
    pub codes_out: Option<&'a Path>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    args.config.validate()?;
    let (gpt, _) = io::load_gpt_checkpoint(args.gpt_ckpt)?;
    let (upper, _) = io::load_vqvae_checkpoint(args.upper_ckpt)?;
    let (lower, _) = io::load_vqvae_checkpoint(args.lower_ckpt)?;
    if gpt.config.vocab_upper != upper.config.codebook_size
        || gpt.config.vocab_lower != lower.config.codebook_size
    {
        return Err(Error::Incompatible(format!(
            "code-model vocabularies {}/{} do not match codebooks {}/{}",
            gpt.config.vocab_upper,
            gpt.config.vocab_lower,
            upper.config.codebook_size,
            lower.config.codebook_size
        )));
    }
    let pretrained = match (gpt.config.uses_pretrained(), args.pretrained) {
        (true, Some(p)) => Some(load_track_if(p, TrackKind::Pretrained)?),
        (true, None) => {
            return Err(Error::config(
                "the model conditions on pretrained features; pass the track file".to_string(),
            ))
        }
        (false, _) => None,
    };
    let handcrafted = match (gpt.config.uses_handcrafted(), args.handcrafted) {
        (true, Some(p)) => Some(load_track_if(p, TrackKind::Handcrafted)?),
        (true, None) => {
            return Err(Error::config(
                "the model conditions on handcrafted features; pass the track file".to_string(),
            ))
        }
        (false, _) => None,
    };

    let (upper_codes, lower_codes) = generate(
        &gpt,
        pretrained.as_ref(),
        handcrafted.as_ref(),
        args.init_upper,
        args.init_lower,
        args.steps,
    )?;

    let frame_rate = args.config.data.frame_rate;
    let up_motion = upper.decode_codes(&upper_codes, frame_rate)?;
    let low_motion = lower.decode_codes(&lower_codes, frame_rate)?;
    let merged = merge_body(&up_motion, &low_motion, &args.config.model.joint_partition)?;
    io::save_motion(&merged, args.output)?;

    if let Some(base) = args.codes_out {
        let base_str = base.to_string_lossy();
        io::save_codes(
            &upper_codes,
            upper.config.codebook_size,
            Path::new(&format!("{base_str}.upper.fcod")),
        )?;
        io::save_codes(
            &lower_codes,
            lower.config.codebook_size,
            Path::new(&format!("{base_str}.lower.fcod")),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Corpus-level metrics of `gen_dir` against `ref_dir`. Music beats are
/// looked up per clip stem (`<stem>.beats.txt`, generated directory
/// first, then the reference directory).
pub fn cmd_evaluate(
    config: &RunConfig,
    ref_dir: &Path,
    gen_dir: &Path,
    out_base: &Path,
) -> Result<EvalReport> {
    let ref_corpus = load_corpus(ref_dir)?;
    let gen_corpus = load_corpus(gen_dir)?;

    let features =
        |corpus: &[(String, MotionSequence)]| -> Result<(Vec<_>, Vec<_>)> {
            let mut kin = Vec::new();
            let mut geo = Vec::new();
            for (_, clip) in corpus {
                kin.push(kinetic_features(clip)?);
                geo.push(geometric_features(clip, &GeometricPairs::consecutive(clip.num_joints))?);
            }
            Ok((kin, geo))
        };
    let (ref_kin, ref_geo) = features(&ref_corpus)?;
    let (gen_kin, gen_geo) = features(&gen_corpus)?;

    let sigma = config.data.bas_sigma_seconds;
    let mut bas_sum = 0.0;
    let mut bas_count = 0usize;
    for (stem, clip) in &gen_corpus {
        let beats_name = format!("{stem}.beats.txt");
        let candidates = [gen_dir.join(&beats_name), ref_dir.join(&beats_name)];
        let Some(path) = candidates.iter().find(|p| p.exists()) else {
            continue;
        };
        let music_beats = io::load_beats(path)?;
        if music_beats.is_empty() {
            continue;
        }
        let dance_beats = detect_dance_beats(clip)?;
        bas_sum += beat_align_score(&music_beats, &dance_beats, sigma)?;
        bas_count += 1;
    }
    let beat_align = if bas_count > 0 {
        bas_sum / bas_count as f64
    } else {
        0.0
    };

    let window = config.data.speed_window_seconds;
    let joints = gen_corpus[0].1.num_joints;
    let mut speed_acc = vec![0.0; joints];
    let mut speed_mean_acc = 0.0;
    for (stem, clip) in &gen_corpus {
        if clip.num_joints != joints {
            return Err(Error::dim(format!(
                "clip {stem} has {} joints, corpus started with {joints}",
                clip.num_joints
            )));
        }
        let (per_joint, overall) = speed_std(clip, window)?;
        for (acc, s) in speed_acc.iter_mut().zip(&per_joint) {
            *acc += s;
        }
        speed_mean_acc += overall;
    }
    let n = gen_corpus.len() as f64;
    for s in &mut speed_acc {
        *s /= n;
    }

    let report = EvalReport {
        fid_kinetic: fid(&gen_kin, &ref_kin)?,
        fid_geometric: fid(&gen_geo, &ref_geo)?,
        div_kinetic: diversity(&gen_kin)?,
        div_geometric: diversity(&gen_geo)?,
        beat_align,
        bas_sigma: sigma,
        speed_std_per_joint: speed_acc,
        speed_std_mean: speed_mean_acc / n,
    };
    io::save_report(&report, out_base)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

pub fn cmd_gradcheck(scope: &str, seeds: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    match scope {
        "ops" => out.extend(verify_ops(seeds)?),
        "ffl" => out.extend(verify_ffl(seeds)?),
        "model" => out.extend(verify_model(42)?),
        "all" => {
            out.extend(verify_ops(seeds)?);
            out.extend(verify_ffl(seeds)?);
            out.extend(verify_model(42)?);
        }
        other => {
            return Err(Error::config(format!(
                "unknown gradcheck scope {other:?}; use ops, ffl, model, or all"
            )))
        }
    }
    Ok(out)
}

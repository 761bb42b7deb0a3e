//! Motion evaluation: Fréchet distance on kinetic/geometric features,
//! diversity, dance-beat detection, beat alignment, and windowed speed
//! standard deviation.
//!
//! The kinetic and geometric extractors are simplified stand-ins for the
//! heavyweight motion-feature toolchains used in the dance literature, so
//! absolute FID values here are only comparable across runs of this
//! repository, not across publications. Relative orderings are the
//! meaningful output.

use crate::error::{Error, Result};
use crate::model::MotionSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Kinetic,
    Geometric,
}

/// Fixed-length motion descriptor for corpus-level statistics.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

/// Per-joint, per-axis mean squared frame difference, length 3J.
/// A joint moving v length-units per frame along one axis contributes v²
/// on that axis.
pub fn kinetic_features(p: &MotionSequence) -> Result<FeatureVector> {
    if p.num_frames < 3 {
        return Err(Error::dim(format!(
            "kinetic features need >= 3 frames, got {}",
            p.num_frames
        )));
    }
    let steps = (p.num_frames - 1) as f64;
    let mut values = vec![0.0; p.num_joints * 3];
    for t in 0..p.num_frames - 1 {
        for j in 0..p.num_joints {
            for a in 0..3 {
                let d = p.coord(t + 1, j, a) - p.coord(t, j, a);
                values[j * 3 + a] += d * d;
            }
        }
    }
    for v in &mut values {
        *v /= steps;
    }
    Ok(FeatureVector {
        values,
        kind: FeatureKind::Kinetic,
    })
}

/// Joint pairs compared by the geometric extractor.
#[derive(Debug, Clone)]
pub struct GeometricPairs(pub Vec<(usize, usize)>);

impl GeometricPairs {
    /// Consecutive joints: (0,1), (1,2), ...
    pub fn consecutive(num_joints: usize) -> Self {
        GeometricPairs((0..num_joints.saturating_sub(1)).map(|j| (j, j + 1)).collect())
    }
}

/// Time-averaged boolean relations: for each configured pair (a, b) and
/// axis, the fraction of frames where joint a's coordinate exceeds
/// joint b's. Values lie in [0, 1].
pub fn geometric_features(p: &MotionSequence, pairs: &GeometricPairs) -> Result<FeatureVector> {
    if p.num_joints < 2 {
        return Err(Error::dim(format!(
            "geometric features need >= 2 joints, got {}",
            p.num_joints
        )));
    }
    if pairs.0.is_empty() {
        return Err(Error::config("geometric features: empty pair list".to_string()));
    }
    for &(a, b) in &pairs.0 {
        if a >= p.num_joints || b >= p.num_joints {
            return Err(Error::config(format!(
                "geometric pair ({a}, {b}) references a joint >= {}",
                p.num_joints
            )));
        }
    }
    let mut values = vec![0.0; pairs.0.len() * 3];
    for t in 0..p.num_frames {
        for (pi, &(a, b)) in pairs.0.iter().enumerate() {
            for axis in 0..3 {
                if p.coord(t, a, axis) > p.coord(t, b, axis) {
                    values[pi * 3 + axis] += 1.0;
                }
            }
        }
    }
    for v in &mut values {
        *v /= p.num_frames as f64;
    }
    Ok(FeatureVector {
        values,
        kind: FeatureKind::Geometric,
    })
}

// ---------------------------------------------------------------------------
// Gaussian statistics and the Fréchet distance
// ---------------------------------------------------------------------------

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, row-major matrix V with eigenvectors as columns),
/// such that A = V·diag(w)·V^T.
fn jacobi_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        if sweep == 99 {
            return Err(Error::numeric(
                "jacobi eigendecomposition did not converge in 100 sweeps".to_string(),
            ));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let w = (0..n).map(|i| m[i * n + i]).collect();
    Ok((w, v))
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    crate::tensor::matmul2(a, b, n, n, n)
}

/// Symmetric PSD square root via eigendecomposition, clamping eigenvalues
/// in (-1e-8, 0) to zero.
fn sqrtm_psd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let (w, v) = jacobi_eigen(a, n)?;
    let mut sqrt_w = Vec::with_capacity(n);
    for &lambda in &w {
        if lambda < -1e-8 {
            return Err(Error::numeric(format!(
                "matrix square root: eigenvalue {lambda} below PSD tolerance"
            )));
        }
        sqrt_w.push(lambda.max(0.0).sqrt());
    }
    // V · diag(sqrt_w) · V^T
    let mut scaled = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            scaled[i * n + j] = v[i * n + j] * sqrt_w[j];
        }
    }
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[i * n + j] = v[j * n + i];
        }
    }
    Ok(mat_mul(&scaled, &vt, n))
}

struct Gaussian {
    mean: Vec<f64>,
    cov: Vec<f64>,
    dim: usize,
}

/// Sample mean and unbiased covariance, regularized with eps·I.
fn fit_gaussian(set: &[FeatureVector], eps: f64) -> Result<Gaussian> {
    if set.len() < 2 {
        return Err(Error::dim(format!(
            "need >= 2 feature vectors to fit a distribution, got {}",
            set.len()
        )));
    }
    let dim = set[0].values.len();
    for (i, f) in set.iter().enumerate() {
        if f.values.len() != dim {
            return Err(Error::dim(format!(
                "feature vector {i} has length {} != {dim}",
                f.values.len()
            )));
        }
    }
    let n = set.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in set {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = vec![0.0; dim * dim];
    for f in set {
        for i in 0..dim {
            let di = f.values[i] - mean[i];
            for j in 0..dim {
                cov[i * dim + j] += di * (f.values[j] - mean[j]);
            }
        }
    }
    for c in &mut cov {
        *c /= n - 1.0;
    }
    for i in 0..dim {
        cov[i * dim + i] += eps;
    }
    Ok(Gaussian { mean, cov, dim })
}

/// Fréchet distance between Gaussians fit to two feature corpora:
/// ||mu_a - mu_b||² + Tr(S_a + S_b - 2·(S_a^{1/2} S_b S_a^{1/2})^{1/2}).
pub fn fid(set_a: &[FeatureVector], set_b: &[FeatureVector]) -> Result<f64> {
    let ga = fit_gaussian(set_a, 1e-6)?;
    let gb = fit_gaussian(set_b, 1e-6)?;
    if ga.dim != gb.dim {
        return Err(Error::dim(format!(
            "feature dimensionality differs: {} vs {}",
            ga.dim, gb.dim
        )));
    }
    let n = ga.dim;
    let mean_term: f64 = ga
        .mean
        .iter()
        .zip(&gb.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let sqrt_a = sqrtm_psd(&ga.cov, n)?;
    let inner = mat_mul(&mat_mul(&sqrt_a, &gb.cov, n), &sqrt_a, n);
    // Symmetrize before the eigensolve; the product picks up rounding noise.
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = 0.5 * (inner[i * n + j] + inner[j * n + i]);
        }
    }
    let (w, _) = jacobi_eigen(&sym, n)?;
    let mut tr_sqrt = 0.0;
    for &lambda in &w {
        if lambda < -1e-8 {
            return Err(Error::numeric(format!(
                "fid: covariance product eigenvalue {lambda} below PSD tolerance"
            )));
        }
        tr_sqrt += lambda.max(0.0).sqrt();
    }
    let trace = |m: &[f64]| (0..n).map(|i| m[i * n + i]).sum::<f64>();
    Ok(mean_term + trace(&ga.cov) + trace(&gb.cov) - 2.0 * tr_sqrt)
}

/// Mean pairwise Euclidean distance over all unordered pairs.
pub fn diversity(set: &[FeatureVector]) -> Result<f64> {
    if set.len() < 2 {
        return Err(Error::dim(format!(
            "diversity needs >= 2 feature vectors, got {}",
            set.len()
        )));
    }
    let dim = set[0].values.len();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..set.len() {
        if set[i].values.len() != dim {
            return Err(Error::dim(format!(
                "feature vector {i} has length {} != {dim}",
                set[i].values.len()
            )));
        }
        for j in i + 1..set.len() {
            let d: f64 = set[i]
                .values
                .iter()
                .zip(&set[j].values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

// ---------------------------------------------------------------------------
// Beats and speed statistics
// ---------------------------------------------------------------------------

/// Mean-over-joints displacement magnitude per frame step, length T-1.
pub fn speed_curve(p: &MotionSequence) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.num_frames.saturating_sub(1));
    for t in 0..p.num_frames - 1 {
        let mut acc = 0.0;
        for j in 0..p.num_joints {
            let mut d2 = 0.0;
            for a in 0..3 {
                let d = p.coord(t + 1, j, a) - p.coord(t, j, a);
                d2 += d * d;
            }
            acc += d2.sqrt();
        }
        out.push(acc / p.num_joints as f64);
    }
    out
}

/// Centered moving average with replicated edges, so every output
/// averages exactly `window` samples and a constant signal stays
/// bit-identical.
pub fn smooth_moving_average(signal: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || signal.is_empty() {
        return signal.to_vec();
    }
    let half = (window / 2) as isize;
    let n = signal.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in i - half..=i + half {
                acc += signal[k.clamp(0, n - 1) as usize];
            }
            acc / (2 * half + 1) as f64
        })
        .collect()
}

/// Local minima of the smoothed speed curve, as seconds. A flat-bottomed
/// dip (equal adjacent samples, which symmetric motion produces when the
/// true minimum falls between samples) counts once, at its midpoint.
/// Adding a constant to the speed curve does not change the result.
pub fn beats_from_speed(speed: &[f64], frame_rate: f64) -> Vec<f64> {
    let smoothed = smooth_moving_average(speed, 5);
    let n = smoothed.len();
    let mut beats = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if smoothed[i] < smoothed[i - 1] {
            let mut j = i;
            while j + 1 < n && smoothed[j + 1] == smoothed[i] {
                j += 1;
            }
            if j + 1 < n && smoothed[j + 1] > smoothed[i] {
                beats.push((i + j) as f64 / 2.0 / frame_rate);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    beats
}

/// Dance beats of a motion clip: local minima of the smoothed speed curve.
pub fn detect_dance_beats(p: &MotionSequence) -> Result<Vec<f64>> {
    if p.num_frames < 3 {
        return Err(Error::dim(format!(
            "beat detection needs >= 3 frames, got {}",
            p.num_frames
        )));
    }
    Ok(beats_from_speed(&speed_curve(p), p.frame_rate))
}

/// Kernel-averaged proximity of each music beat to its nearest dance beat:
/// mean over music beats of exp(-min_d (t_d - t_m)² / (2σ²)).
/// No dance beats at all scores 0.
pub fn beat_align_score(music_beats: &[f64], dance_beats: &[f64], sigma: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::config(format!("beat align sigma must be > 0, got {sigma}")));
    }
    if music_beats.is_empty() {
        return Err(Error::config("beat align score needs at least one music beat".to_string()));
    }
    if dance_beats.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &tm in music_beats {
        let nearest = dance_beats
            .iter()
            .map(|&td| (td - tm) * (td - tm))
            .fold(f64::INFINITY, f64::min);
        total += (-nearest / (2.0 * sigma * sigma)).exp();
    }
    Ok(total / music_beats.len() as f64)
}

/// Windowed speed standard deviation, the reconstruction-fidelity probe
/// for speed variation. Per joint: speed = frame-difference magnitude ×
/// frame rate; time is split into non-overlapping windows of
/// `window_seconds`; the population std within each window is averaged
/// over windows. Returns (per-joint mean std, mean over joints).
pub fn speed_std(p: &MotionSequence, window_seconds: f64) -> Result<(Vec<f64>, f64)> {
    let w = (window_seconds * p.frame_rate).round() as usize;
    if w < 2 {
        return Err(Error::config(format!(
            "speed_std window of {window_seconds}s is under 2 frames at {} fps",
            p.frame_rate
        )));
    }
    if p.num_frames < w {
        return Err(Error::dim(format!(
            "sequence of {} frames is shorter than one {w}-frame window",
            p.num_frames
        )));
    }
    let steps = p.num_frames - 1;
    let mut per_joint = Vec::with_capacity(p.num_joints);
    for j in 0..p.num_joints {
        let speeds: Vec<f64> = (0..steps)
            .map(|t| {
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = p.coord(t + 1, j, a) - p.coord(t, j, a);
                    d2 += d * d;
                }
                d2.sqrt() * p.frame_rate
            })
            .collect();
        let mut window_stds = Vec::new();
        let mut start = 0;
        while start < steps {
            let end = (start + w).min(steps);
            if end - start >= 2 {
                let slice = &speeds[start..end];
                let mean = slice.iter().sum::<f64>() / slice.len() as f64;
                let var = slice.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                    / slice.len() as f64;
                window_stds.push(var.sqrt());
            }
            start += w;
        }
        per_joint.push(window_stds.iter().sum::<f64>() / window_stds.len() as f64);
    }
    let overall = per_joint.iter().sum::<f64>() / per_joint.len() as f64;
    Ok((per_joint, overall))
}

/// All corpus-level metrics for one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub fid_kinetic: f64,
    pub fid_geometric: f64,
    pub div_kinetic: f64,
    pub div_geometric: f64,
    pub beat_align: f64,
    pub bas_sigma: f64,
    pub speed_std_per_joint: Vec<f64>,
    pub speed_std_mean: f64,
}

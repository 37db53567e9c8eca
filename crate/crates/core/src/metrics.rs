//! Objective scores against ground-truth stems.
//!
//! SIR uses a time-invariant projection: the estimate is projected onto the
//! span of all references, the part along its own reference is the target,
//! and the rest of the projection is interference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Stft;

/// Reported in place of an infinite (or minus infinite) SIR.
pub const SIR_CAP_DB: f64 = 100.0;

/// Signal-to-interference ratio of every estimate, in dB.
pub fn sir(estimates: &[Vec<f64>], references: &[Vec<f64>]) -> Result<Vec<f64>> {
    let l = references.len();
    if l < 2 {
        return Err(Error::InvalidArgument(format!("SIR needs at least two references, got {l}")));
    }
    if estimates.len() != l {
        return Err(Error::DimensionMismatch(format!("{} estimates for {l} references", estimates.len())));
    }
    let len = references[0].len();
    if references.iter().chain(estimates).any(|s| s.len() != len) {
        return Err(Error::DimensionMismatch("estimates and references differ in length".into()));
    }
    let gram = DMatrix::from_fn(l, l, |i, j| dot(&references[i], &references[j]));
    if let Some(i) = (0..l).find(|&i| gram[(i, i)] == 0.0) {
        return Err(Error::InvalidArgument(format!("reference {i} is silent")));
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("references are linearly dependent".into()))?;

    Ok(estimates
        .iter()
        .enumerate()
        .map(|(own, est)| {
            let b = DVector::from_fn(l, |j, _| dot(&references[j], est));
            let mut c = chol.solve(&b);
            let target = b[own] * b[own] / gram[(own, own)];
            c[own] -= b[own] / gram[(own, own)];
            let interference = (c.transpose() * &gram * &c)[(0, 0)].max(0.0);
            to_db(target, interference)
        })
        .collect())
}

fn to_db(target: f64, interference: f64) -> f64 {
    if target <= 0.0 {
        return -SIR_CAP_DB;
    }
    if interference <= 0.0 {
        return SIR_CAP_DB;
    }
    (10.0 * (target / interference).log10()).clamp(-SIR_CAP_DB, SIR_CAP_DB)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Real `frames × bins` array, row-major by frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrogram {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn new(n_frames: usize, n_bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_frames * n_bins {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_frames}×{n_bins} power spectrogram",
                data.len()
            )));
        }
        Ok(Self { n_frames, n_bins, data })
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.n_bins + k]
    }
}

/// Periodogram of a clean stem smoothed with the estimator's EWMA (first
/// frame taken as is).
pub fn reference_psd(stem: &[f64], stft: &Stft, beta: f64) -> Result<PowerSpectrogram> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("smoothing factor {beta} outside [0, 1]")));
    }
    let spec = stft.analyze(stem)?;
    let (nf, nb) = (spec.n_frames(), spec.n_bins());
    let mut data = vec![0.0; nf * nb];
    for t in 0..nf {
        for k in 0..nb {
            let p = spec.get(t, k).norm_sqr();
            data[t * nb + k] = if t == 0 { p } else { beta * data[(t - 1) * nb + k] + (1.0 - beta) * p };
        }
    }
    PowerSpectrogram::new(nf, nb, data)
}

/// Which cells enter [`psd_log_error`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogErrorOptions {
    /// Cells whose reference lies more than this many dB below the
    /// reference maximum are inactive; estimates are clamped to the same floor.
    pub floor_db: f64,
    /// Leading frames to skip (smoothing warm-up).
    pub skip_frames: usize,
    /// Ignore the DC bin.
    pub skip_dc: bool,
}

impl Default for LogErrorOptions {
    fn default() -> Self {
        Self {
            floor_db: 50.0,
            skip_frames: 0,
            skip_dc: true,
        }
    }
}

/// Mean `|10 log10(Φ̂ / Φ_ref)|` over active cells, in dB.
pub fn psd_log_error(estimated: &PowerSpectrogram, reference: &PowerSpectrogram, opts: &LogErrorOptions) -> Result<f64> {
    if estimated.n_frames != reference.n_frames || estimated.n_bins != reference.n_bins {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}×{}, reference {}×{}",
            estimated.n_frames, estimated.n_bins, reference.n_frames, reference.n_bins
        )));
    }
    let first_bin = usize::from(opts.skip_dc);
    let peak = (opts.skip_frames..reference.n_frames)
        .flat_map(|t| (first_bin..reference.n_bins).map(move |k| (t, k)))
        .map(|(t, k)| reference.get(t, k))
        .fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidArgument("reference PSD is zero over the scored region".into()));
    }
    let floor = peak * 10f64.powf(-opts.floor_db / 10.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for t in opts.skip_frames..reference.n_frames {
        for k in first_bin..reference.n_bins {
            let r = reference.get(t, k);
            if r > floor {
                let e = estimated.get(t, k).max(floor);
                total += (10.0 * (e / r).log10()).abs();
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Wall-clock cost of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub seconds: f64,
    pub frames: usize,
    pub realtime_factor: f64,
}

/// Scores of one separated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sir_db: Vec<f64>,
    pub mean_sir_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beamformer_sir_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_beamformer_sir_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub psd_log_error_db: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<RuntimeStats>,
}

impl EvalReport {
    pub fn from_sir(sir_db: Vec<f64>) -> Self {
        Self {
            mean_sir_db: mean(&sir_db),
            sir_db,
            beamformer_sir_db: None,
            mean_beamformer_sir_db: None,
            psd_log_error_db: Vec::new(),
            runtime: None,
        }
    }

    pub fn with_beamformer(mut self, sir_db: Vec<f64>) -> Self {
        self.mean_beamformer_sir_db = Some(mean(&sir_db));
        self.beamformer_sir_db = Some(sir_db);
        self
    }

    /// Per-source console table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("source |  SIR (dB) | BF SIR (dB) | PSD err (dB)\n");
        s.push_str("-------+-----------+-------------+-------------\n");
        for (i, v) in self.sir_db.iter().enumerate() {
            let bf = self
                .beamformer_sir_db
                .as_ref()
                .map_or("-".to_string(), |b| format!("{:.2}", b[i]));
            let psd = self
                .psd_log_error_db
                .get(i)
                .map_or("-".to_string(), |p| format!("{p:.2}"));
            s.push_str(&format!("{:>6} | {v:>9.2} | {bf:>11} | {psd:>11}\n", i + 1));
        }
        let bf = self.mean_beamformer_sir_db.map_or("-".to_string(), |b| format!("{b:.2}"));
        s.push_str(&format!("{:>6} | {:>9.2} | {bf:>11} |\n", "mean", self.mean_sir_db));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Two exactly orthogonal unit-energy references.
    fn orthogonal_pair() -> (Vec<f64>, Vec<f64>) {
        let a = noise(1, 4000);
        let mut b = noise(2, 4000);
        let proj = dot(&a, &b) / dot(&a, &a);
        b.iter_mut().zip(&a).for_each(|(y, x)| *y -= proj * x);
        let na = dot(&a, &a).sqrt();
        let nb = dot(&b, &b).sqrt();
        (a.iter().map(|x| x / na).collect(), b.iter().map(|x| x / nb).collect())
    }

    fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
    }

    #[test]
    fn sir_examples() {
        let (a, b) = orthogonal_pair();
        let refs = vec![a.clone(), b.clone()];
        let exact = sir(&[a.clone(), b.clone()], &refs).unwrap();
        assert_eq!(exact, vec![SIR_CAP_DB, SIR_CAP_DB]);
        let equal = sir(&[mix(&a, 1.0, &b, 1.0), b.clone()], &refs).unwrap();
        assert!(equal[0].abs() < 1e-9);
        let strong = sir(&[mix(&a, 10.0, &b, 1.0), b.clone()], &refs).unwrap();
        assert!((strong[0] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn sir_scale_invariant_and_monotone() {
        let refs = vec![noise(3, 3000), noise(4, 3000), noise(5, 3000)];
        let base = mix(&refs[0], 1.0, &refs[1], 0.2);
        let s1 = sir(&[base.clone(), refs[1].clone(), refs[2].clone()], &refs).unwrap()[0];
        let scaled: Vec<f64> = base.iter().map(|x| 7.5 * x).collect();
        let s2 = sir(&[scaled, refs[1].clone(), refs[2].clone()], &refs).unwrap()[0];
        assert!((s1 - s2).abs() < 1e-9);
        let mut last = f64::INFINITY;
        for w in [0.01, 0.1, 0.3, 1.0, 3.0] {
            let est = mix(&refs[0], 1.0, &refs[2], w);
            let s = sir(&[est, refs[1].clone(), refs[2].clone()], &refs).unwrap()[0];
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn sir_rejects_bad_input() {
        let a = noise(6, 100);
        assert!(sir(&[a.clone()], &[a.clone()]).is_err());
        assert!(sir(&[a.clone(), a.clone()], &[a.clone(), vec![0.0; 100]]).is_err());
        assert!(sir(&[a.clone(), a[..50].to_vec()], &[a.clone(), a.clone()]).is_err());
    }

    #[test]
    fn log_error_examples() {
        let r = PowerSpectrogram::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let opts = LogErrorOptions::default();
        assert_eq!(psd_log_error(&r, &r, &opts).unwrap(), 0.0);
        let doubled = PowerSpectrogram::new(2, 3, r.data.iter().map(|x| 2.0 * x).collect()).unwrap();
        assert!((psd_log_error(&doubled, &r, &opts).unwrap() - 3.010_299_956_639_812).abs() < 1e-12);
        let other = PowerSpectrogram::new(3, 2, r.data.clone()).unwrap();
        assert!(psd_log_error(&other, &r, &opts).is_err());
    }

    #[test]
    fn log_error_skips_frames_and_floor() {
        let r = PowerSpectrogram::new(2, 2, vec![1.0, 1.0, 1.0, 1e-9]).unwrap();
        let e = PowerSpectrogram::new(2, 2, vec![100.0, 100.0, 1.0, 1.0]).unwrap();
        let opts = LogErrorOptions {
            skip_frames: 1,
            skip_dc: false,
            ..LogErrorOptions::default()
        };
        // cell (1,1) is below the floor, (1,0) is exact
        assert_eq!(psd_log_error(&e, &r, &opts).unwrap(), 0.0);
    }

    #[test]
    fn reference_psd_smooths() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x = noise(8, 2000);
        let raw = reference_psd(&x, &stft, 0.0).unwrap();
        let smooth = reference_psd(&x, &stft, 0.4).unwrap();
        assert_eq!(raw.get(0, 10), smooth.get(0, 10));
        let expect = 0.4 * smooth.get(3, 10) + 0.6 * raw.get(4, 10);
        assert!((smooth.get(4, 10) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn report_means_and_table() {
        let r = EvalReport::from_sir(vec![10.0, 20.0]).with_beamformer(vec![5.0, 6.0]);
        assert_eq!(r.mean_sir_db, 15.0);
        assert_eq!(r.mean_beamformer_sir_db, Some(5.5));
        let table = r.to_table();
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("mean"));
    }
}

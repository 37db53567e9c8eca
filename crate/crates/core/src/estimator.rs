//! Source and reverberant PSD estimation from spherical-harmonic
//! cross-correlations.
//!
//! For uncorrelated far-field sources with PSDs `Φ_ℓ` and a diffuse
//! reverberant field whose directional power is expanded as
//! `Σ_vu Γ_vu Y_vu(ŷ)`, the expected coefficient cross-correlations are
//!
//! ```text
//! Λ_nm^n'm' = E{α_nm α*_n'm'}
//!           = Σ_ℓ Φ_ℓ C_nn' Y*_nm(ŷ_ℓ) Y_n'm'(ŷ_ℓ) + Σ_vu Γ_vu C_nn' W_{n,n',v}^{m,m',u}
//! ```
//!
//! with `C_nn' = 16π² i^n (-i)^n'` and `W` the integral of `Y_vu Y*_nm Y_n'm'`.
//! Stacking all `(N+1)⁴` pairs gives `Λ = T Θ`, solved per bin and frame with
//! a truncated-SVD pseudo-inverse. `T` has no frequency dependence, so one
//! matrix serves every bin.
//!
//! Bins whose effective order `N(k)` is below `N` use only the rows whose
//! modes are both within `N(k)`. On those rows a source column equals a
//! combination of reverberant columns once `V >= 2N(k)`, because the product
//! `Y*_nm Y_n'm'` of two order-`N(k)` harmonics only carries degrees up to
//! `2N(k)`. Each reduced system therefore keeps the largest reverberant order
//! `v <= min(V, 2N(k) - 1)` for which the unknown count fits the `(2N(k)+1)²`
//! degrees the rows can distinguish.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::CoefficientFrame;
use crate::error::{Error, Result};
use crate::sh::{i_pow, mode_count, sph_harmonics_upto, triple_harmonic_integral, ModeIndex, SphericalDirection};

/// Singular values below this fraction of the largest are discarded.
pub const SVD_TOLERANCE: f64 = 1e-6;

/// Which columns of the translation matrix enter the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReverbModel {
    /// Source and reverberant columns.
    #[default]
    Full,
    /// Source columns only.
    Anechoic,
}

impl std::str::FromStr for ReverbModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "anechoic" => Ok(Self::Anechoic),
            _ => Err(Error::InvalidArgument(format!("unknown model '{s}' (expected full or anechoic)"))),
        }
    }
}

/// Exponentially smoothed coefficient cross-correlations of one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationState {
    /// Effective order of the bin; entries with a mode above it stay zero.
    order: usize,
    /// `(N+1)²` for the full order `N`.
    modes: usize,
    beta: f64,
    frame_count: usize,
    /// `modes × modes`, row `nm`, column `n'm'`.
    lambda: Vec<Complex64>,
}

impl CorrelationState {
    pub fn new(order: usize, full_order: usize, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("smoothing factor {beta} outside [0, 1]")));
        }
        if order > full_order {
            return Err(Error::InvalidArgument(format!(
                "bin order {order} exceeds estimator order {full_order}"
            )));
        }
        let modes = mode_count(full_order);
        Ok(Self {
            order,
            modes,
            beta,
            frame_count: 0,
            lambda: vec![Complex64::new(0.0, 0.0); modes * modes],
        })
    }

    /// State holding a given correlation vector, ordered as the rows of the
    /// full translation matrix.
    pub fn from_lambda(order: usize, full_order: usize, beta: f64, lambda: Vec<Complex64>) -> Result<Self> {
        let mut s = Self::new(order, full_order, beta)?;
        if lambda.len() != s.lambda.len() {
            return Err(Error::DimensionMismatch(format!(
                "correlation vector of length {} for order {full_order} (need {})",
                lambda.len(),
                s.lambda.len()
            )));
        }
        s.lambda = lambda;
        s.frame_count = 1;
        Ok(s)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn lambda(&self) -> &[Complex64] {
        &self.lambda
    }

    pub fn entry(&self, row_mode: usize, col_mode: usize) -> Complex64 {
        self.lambda[row_mode * self.modes + col_mode]
    }

    /// Fold in one frame of coefficients. The first frame initializes the
    /// state with its outer product.
    pub fn update(&mut self, coeffs: &[Complex64]) -> Result<()> {
        if coeffs.len() != self.modes {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a state with {} modes",
                coeffs.len(),
                self.modes
            )));
        }
        let active = mode_count(self.order);
        let (keep, fresh) = if self.frame_count == 0 {
            (0.0, 1.0)
        } else {
            (self.beta, 1.0 - self.beta)
        };
        for i in 0..active {
            let row = &mut self.lambda[i * self.modes..i * self.modes + active];
            for (l, c) in row.iter_mut().zip(&coeffs[..active]) {
                *l = keep * *l + fresh * coeffs[i] * c.conj();
            }
        }
        self.frame_count += 1;
        Ok(())
    }
}

/// One correlation state per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBank {
    pub states: Vec<CorrelationState>,
}

impl CorrelationBank {
    pub fn new(order_per_bin: &[usize], full_order: usize, beta: f64) -> Result<Self> {
        Ok(Self {
            states: order_per_bin
                .iter()
                .map(|&o| CorrelationState::new(o.min(full_order), full_order, beta))
                .collect::<Result<_>>()?,
        })
    }

    pub fn update(&mut self, frame: &CoefficientFrame) -> Result<()> {
        if frame.n_bins() != self.states.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} bins, bank has {}",
                frame.n_bins(),
                self.states.len()
            )));
        }
        for (k, s) in self.states.iter_mut().enumerate() {
            s.update(frame.bin(k))?;
        }
        Ok(())
    }
}

/// Pseudo-inverse of the rows of `T` available at one effective order.
#[derive(Debug, Clone)]
struct ReducedSolver {
    /// Reverberant order kept, `None` for source columns only.
    v_order: Option<usize>,
    pinv: DMatrix<Complex64>,
    rank: usize,
    condition: f64,
}

impl ReducedSolver {
    fn new(t: &DMatrix<Complex64>, full_modes: usize, order: usize, cols: usize, v_order: Option<usize>) -> Result<Self> {
        let m = mode_count(order);
        let sub = DMatrix::from_fn(m * m, cols, |r, c| t[((r / m) * full_modes + r % m, c)]);
        let svd = sub.svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 {
            return Err(Error::Singular("translation matrix is zero".into()));
        }
        let cut = SVD_TOLERANCE * smax;
        let kept: Vec<f64> = svd.singular_values.iter().copied().filter(|&s| s > cut).collect();
        let condition = smax / kept.iter().copied().fold(f64::INFINITY, f64::min);
        let pinv = svd.pseudo_inverse(cut).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self {
            v_order,
            pinv,
            rank: kept.len(),
            condition,
        })
    }
}

/// The stacked model `Λ = T Θ` for a fixed set of source directions.
#[derive(Debug, Clone)]
pub struct TranslationMatrix {
    source_dirs: Vec<SphericalDirection>,
    order: usize,
    v_order: usize,
    t: DMatrix<Complex64>,
    /// Indexed by effective order `0..=N`.
    full: Vec<ReducedSolver>,
    direct: Vec<ReducedSolver>,
}

/// Build `T` for sources at `dirs`, SH order `N` and reverberant order `V`.
/// Columns are the `L` sources followed by `Γ_00, Γ_1-1, …, Γ_VV`.
pub fn build_translation_matrix(dirs: &[SphericalDirection], order: usize, v_order: usize) -> Result<TranslationMatrix> {
    TranslationMatrix::new(dirs, order, v_order)
}

impl TranslationMatrix {
    pub fn new(dirs: &[SphericalDirection], order: usize, v_order: usize) -> Result<Self> {
        let l = dirs.len();
        if l == 0 {
            return Err(Error::InvalidArgument("at least one source direction is required".into()));
        }
        for (i, a) in dirs.iter().enumerate() {
            if dirs[i + 1..].iter().any(|b| a.angle_to(b) < 1e-9) {
                return Err(Error::InvalidArgument(format!("source direction {i} is repeated")));
            }
        }
        let modes = mode_count(order);
        let rows = modes * modes;
        let cols = l + mode_count(v_order);
        if rows < cols {
            return Err(Error::Underdetermined {
                rows,
                cols,
                detail: format!("order {order} gives {rows} correlations for {l} sources and reverberant order {v_order}"),
            });
        }

        let mode_list: Vec<ModeIndex> = ModeIndex::up_to(order).collect();
        let coupling = |a: &ModeIndex, b: &ModeIndex| 16.0 * PI * PI * i_pow(a.n() as i64 - b.n() as i64);
        let y: Vec<Vec<Complex64>> = dirs.iter().map(|d| sph_harmonics_upto(order, d)).collect();
        let reverb_modes: Vec<ModeIndex> = ModeIndex::up_to(v_order).collect();
        let t = DMatrix::from_fn(rows, cols, |r, c| {
            let a = &mode_list[r / modes];
            let b = &mode_list[r % modes];
            let cnn = coupling(a, b);
            if c < l {
                cnn * y[c][a.linear()].conj() * y[c][b.linear()]
            } else {
                let vu = &reverb_modes[c - l];
                cnn * triple_harmonic_integral(vu.n(), a.n(), b.n(), vu.m(), a.m(), b.m())
            }
        });

        let mut full = Vec::with_capacity(order + 1);
        let mut direct = Vec::with_capacity(order + 1);
        for n_eff in 0..=order {
            let v_eff = if n_eff == order { v_order } else { reduced_reverb_order(l, n_eff, v_order) };
            full.push(ReducedSolver::new(&t, modes, n_eff, l + mode_count(v_eff), Some(v_eff))?);
            direct.push(ReducedSolver::new(&t, modes, n_eff, l, None)?);
        }
        Ok(Self {
            source_dirs: dirs.to_vec(),
            order,
            v_order,
            t,
            full,
            direct,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.source_dirs.len()
    }

    pub fn source_dirs(&self) -> &[SphericalDirection] {
        &self.source_dirs
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn v_order(&self) -> usize {
        self.v_order
    }

    /// Number of reverberant coefficients `(V+1)²`.
    pub fn n_reverb(&self) -> usize {
        mode_count(self.v_order)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.t.shape()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.t[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    /// Reverberant order used for bins of effective order `order`.
    pub fn reduced_v_order(&self, order: usize) -> usize {
        self.full[order].v_order.unwrap_or(0)
    }

    /// Rank after truncation and the resulting condition number at an
    /// effective order.
    pub fn conditioning(&self, order: usize, model: ReverbModel) -> (usize, f64) {
        let s = self.solver(order, model);
        (s.rank, s.condition)
    }

    fn solver(&self, order: usize, model: ReverbModel) -> &ReducedSolver {
        match model {
            ReverbModel::Full => &self.full[order],
            ReverbModel::Anechoic => &self.direct[order],
        }
    }

    /// `T Θ`, the correlation vector a parameter vector produces.
    pub fn forward(&self, theta: &[Complex64]) -> Result<Vec<Complex64>> {
        if theta.len() != self.t.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector of length {} for {} columns",
                theta.len(),
                self.t.ncols()
            )));
        }
        Ok((&self.t * DVector::from_column_slice(theta)).as_slice().to_vec())
    }
}

/// Largest `v <= min(V, 2n - 1)` whose unknowns fit the `(2n+1)²` degrees of
/// freedom carried by order-`n` correlations; 0 if none does.
fn reduced_reverb_order(n_sources: usize, order: usize, v_order: usize) -> usize {
    let cap = (2 * order).saturating_sub(1).min(v_order);
    let dof = (2 * order + 1) * (2 * order + 1);
    (0..=cap).rev().find(|&v| n_sources + mode_count(v) <= dof).unwrap_or(0)
}

/// Estimated PSDs of one bin and frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Source PSDs, rectified.
    pub phi: Vec<f64>,
    /// Reverberant coefficients `Γ_vu`, mode-major; `Γ_00` is real and rectified.
    /// Empty for the anechoic model.
    pub gamma: Vec<Complex64>,
    /// Magnitude of the discarded imaginary parts of `Φ` and `Γ_00`.
    pub imag_residue: f64,
}

impl PsdEstimate {
    pub fn gamma00(&self) -> f64 {
        self.gamma.first().map_or(0.0, |g| g.re)
    }
}

/// Solve `Λ = T Θ` for one bin with source and reverberant columns.
pub fn estimate_psds(state: &CorrelationState, t: &TranslationMatrix) -> Result<PsdEstimate> {
    solve(state, t, ReverbModel::Full)
}

/// Solve with the reverberant columns discarded.
pub fn estimate_psds_anechoic(state: &CorrelationState, t: &TranslationMatrix) -> Result<PsdEstimate> {
    solve(state, t, ReverbModel::Anechoic)
}

pub fn estimate_with_model(state: &CorrelationState, t: &TranslationMatrix, model: ReverbModel) -> Result<PsdEstimate> {
    solve(state, t, model)
}

fn solve(state: &CorrelationState, t: &TranslationMatrix, model: ReverbModel) -> Result<PsdEstimate> {
    if state.modes != mode_count(t.order) || state.order > t.order {
        return Err(Error::DimensionMismatch(format!(
            "state of order {} (full {} modes) against a matrix of order {}",
            state.order, state.modes, t.order
        )));
    }
    let solver = t.solver(state.order, model);
    let m = mode_count(state.order);
    let lambda = DVector::from_fn(m * m, |r, _| state.lambda[(r / m) * state.modes + r % m]);
    let theta = &solver.pinv * lambda;
    if theta.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("non-finite PSD estimate".into()));
    }

    let l = t.n_sources();
    let phi = theta.iter().take(l).map(|v| v.re.max(0.0)).collect();
    let mut imag = theta.iter().take(l).map(|v| v.im * v.im).sum::<f64>();
    let gamma = match solver.v_order {
        None => Vec::new(),
        Some(_) => {
            let mut g = vec![Complex64::new(0.0, 0.0); t.n_reverb()];
            for (dst, src) in g.iter_mut().zip(theta.iter().skip(l)) {
                *dst = *src;
            }
            imag += g[0].im * g[0].im;
            g[0] = Complex64::new(g[0].re.max(0.0), 0.0);
            g
        }
    };
    Ok(PsdEstimate {
        phi,
        gamma,
        imag_residue: imag.sqrt(),
    })
}

/// PSD estimates for every frame and bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrack {
    n_frames: usize,
    n_bins: usize,
    n_sources: usize,
    n_reverb: usize,
    bin_freqs: Vec<f64>,
    phi: Vec<f64>,
    gamma: Vec<Complex64>,
    imag_residue: Vec<f64>,
}

impl PsdTrack {
    /// All-zero track.
    pub fn zeros(n_frames: usize, bin_freqs: Vec<f64>, n_sources: usize, n_reverb: usize) -> Self {
        let n_bins = bin_freqs.len();
        let cells = n_frames * n_bins;
        Self {
            n_frames,
            n_bins,
            n_sources,
            n_reverb,
            bin_freqs,
            phi: vec![0.0; cells * n_sources],
            gamma: vec![Complex64::new(0.0, 0.0); cells * n_reverb],
            imag_residue: vec![0.0; cells],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn n_reverb(&self) -> usize {
        self.n_reverb
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    fn cell(&self, t: usize, k: usize) -> usize {
        t * self.n_bins + k
    }

    pub fn phi(&self, t: usize, k: usize) -> &[f64] {
        let c = self.cell(t, k);
        &self.phi[c * self.n_sources..(c + 1) * self.n_sources]
    }

    pub fn gamma(&self, t: usize, k: usize) -> &[Complex64] {
        let c = self.cell(t, k);
        &self.gamma[c * self.n_reverb..(c + 1) * self.n_reverb]
    }

    pub fn gamma00(&self, t: usize, k: usize) -> f64 {
        self.gamma(t, k).first().map_or(0.0, |g| g.re)
    }

    pub fn imag_residue(&self, t: usize, k: usize) -> f64 {
        self.imag_residue[self.cell(t, k)]
    }

    pub fn set(&mut self, t: usize, k: usize, est: &PsdEstimate) -> Result<()> {
        if est.phi.len() != self.n_sources || !(est.gamma.is_empty() || est.gamma.len() == self.n_reverb) {
            return Err(Error::DimensionMismatch(format!(
                "estimate with {} sources and {} reverberant terms for a track of {} and {}",
                est.phi.len(),
                est.gamma.len(),
                self.n_sources,
                self.n_reverb
            )));
        }
        let c = self.cell(t, k);
        self.phi[c * self.n_sources..(c + 1) * self.n_sources].copy_from_slice(&est.phi);
        let g = &mut self.gamma[c * self.n_reverb..(c + 1) * self.n_reverb];
        if est.gamma.is_empty() {
            g.fill(Complex64::new(0.0, 0.0));
        } else {
            g.copy_from_slice(&est.gamma);
        }
        self.imag_residue[c] = est.imag_residue;
        Ok(())
    }

    /// PSD of source `l` as a `frames × bins` row-major array.
    pub fn source_psd(&self, l: usize) -> Vec<f64> {
        (0..self.n_frames * self.n_bins)
            .map(|c| self.phi[c * self.n_sources + l])
            .collect()
    }

    /// `Γ_00` as a `frames × bins` row-major array.
    pub fn gamma00_track(&self) -> Vec<f64> {
        (0..self.n_frames * self.n_bins)
            .map(|c| if self.n_reverb == 0 { 0.0 } else { self.gamma[c * self.n_reverb].re })
            .collect()
    }

    pub fn max_imag_residue(&self) -> f64 {
        self.imag_residue.iter().copied().fold(0.0, f64::max)
    }
}

/// Run the smoothed estimator over a coefficient sequence, bins in parallel.
pub fn estimate_track(
    frames: &[CoefficientFrame],
    t: &TranslationMatrix,
    beta: f64,
    model: ReverbModel,
    bin_freqs: Vec<f64>,
) -> Result<PsdTrack> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no coefficient frames".into()))?;
    let n_bins = first.n_bins();
    if bin_freqs.len() != n_bins {
        return Err(Error::DimensionMismatch(format!(
            "{} bin frequencies for {n_bins} bins",
            bin_freqs.len()
        )));
    }
    if first.modes != mode_count(t.order()) {
        return Err(Error::DimensionMismatch(format!(
            "coefficients carry {} modes, matrix order {} needs {}",
            first.modes,
            t.order(),
            mode_count(t.order())
        )));
    }
    let per_bin: Vec<Vec<PsdEstimate>> = (0..n_bins)
        .into_par_iter()
        .map(|k| {
            let mut state = CorrelationState::new(first.order_per_bin[k].min(t.order()), t.order(), beta)?;
            frames
                .iter()
                .map(|f| {
                    state.update(f.bin(k))?;
                    estimate_with_model(&state, t, model)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_reverb = match model {
        ReverbModel::Full => t.n_reverb(),
        ReverbModel::Anechoic => 0,
    };
    let mut track = PsdTrack::zeros(frames.len(), bin_freqs, t.n_sources(), n_reverb);
    for (k, ests) in per_bin.iter().enumerate() {
        for (tau, e) in ests.iter().enumerate() {
            track.set(tau, k, e)?;
        }
    }
    Ok(track)
}

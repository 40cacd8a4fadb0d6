//! Dispersive-readout trajectory synthesis.
//!
//! The cavity field for each qubit state follows the driven, damped linear
//! equation `dα/dt = -iE(t) - i(Δ + χ_s)α - κα/2` in the frame rotating at the
//! measurement drive. Single shots follow the pointer path of the qubit's
//! current state, switch paths continuously at a T1 or heating jump, and
//! carry amplifier noise whose per-quadrature variance is `1/(4ηκ dt)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of RK4 substeps per output bin.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Gaussian noise-shaping taps are truncated at this many standard deviations.
const FILTER_TRUNCATION_SIGMAS: f64 = 6.0;

/// Uniform time grid `[0, T]` split into `n_points` output bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Total measurement time in seconds.
    pub total_time: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(total_time: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidSpec(format!("time grid needs at least 2 points, got {n_points}")));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::InvalidSpec(format!("total time must be positive, got {total_time}")));
        }
        Ok(Self { total_time, n_points })
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.n_points as f64
    }

    /// End time of bin `j`.
    pub fn bin_end(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dt()
    }

    /// Grid with the same bin width covering only the first `n_points` bins.
    pub fn truncated(&self, n_points: usize) -> Result<Self> {
        if n_points > self.n_points {
            return Err(Error::invalid(format!(
                "cannot truncate {} bins to {n_points}",
                self.n_points
            )));
        }
        Self::new(self.dt() * n_points as f64, n_points)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { total_time: 2.6e-6, n_points: 163 }
    }
}

/// One piece of a piecewise-constant drive; holds from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment {
    /// Seconds.
    pub start: f64,
    /// Complex envelope `E_x + iE_y`, rad/s.
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSchedule {
    segments: Vec<DriveSegment>,
}

impl DriveSchedule {
    pub fn new(mut segments: Vec<DriveSegment>) -> Result<Self> {
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        match segments.first() {
            Some(first) if first.start <= 0.0 => {}
            _ => return Err(Error::InvalidSpec("drive schedule must start at t = 0".into())),
        }
        Ok(Self { segments })
    }

    pub fn constant(amplitude: Complex64) -> Self {
        Self { segments: vec![DriveSegment { start: 0.0, amplitude }] }
    }

    pub fn segments(&self) -> &[DriveSegment] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> Complex64 {
        let idx = self.segments.partition_point(|s| s.start <= t);
        self.segments[idx.saturating_sub(1)].amplitude
    }
}

/// Cavity parameters in angular-frequency units (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Δ = ω_r − ω_m.
    pub detuning: f64,
    /// χ; the ground state sees `+chi` and the excited state `-chi`.
    pub chi: f64,
    pub kappa: f64,
    pub drive: DriveSchedule,
}

impl CavityParams {
    pub fn chi_for(&self, state: u8) -> f64 {
        if state == 0 {
            self.chi
        } else {
            -self.chi
        }
    }

    /// Fixed point of the pointer equation under a constant drive.
    pub fn steady_state(&self, state: u8, drive: Complex64) -> Complex64 {
        let lambda = Complex64::new(self.kappa / 2.0, self.detuning + self.chi_for(state));
        -Complex64::i() * drive / lambda
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidSpec(format!("cavity decay rate must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceRates {
    /// Energy relaxation time in seconds; `f64::INFINITY` disables decay.
    pub t1_time: f64,
    /// Mean time for a spurious 0 → 1 excitation; `f64::INFINITY` disables heating.
    pub heating_time: f64,
    pub prep_error_0: f64,
    pub prep_error_1: f64,
}

impl DecoherenceRates {
    pub fn ideal() -> Self {
        Self {
            t1_time: f64::INFINITY,
            heating_time: f64::INFINITY,
            prep_error_0: 0.0,
            prep_error_1: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, t) in [("t1_time", self.t1_time), ("heating_time", self.heating_time)] {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be positive or infinite, got {t}")));
            }
        }
        for (name, p) in [("prep_error_0", self.prep_error_0), ("prep_error_1", self.prep_error_1)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    fn prep_error(&self, prep: u8) -> f64 {
        if prep == 0 {
            self.prep_error_0
        } else {
            self.prep_error_1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplifierKind {
    PhasePreserving,
    PhaseSensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierModel {
    pub kind: AmplifierKind,
    /// Gain-normalised added noise `A` (or `A_s` for the phase-sensitive case).
    pub added_noise: f64,
    /// Power gain `G`.
    pub gain: f64,
    /// Amplified quadrature angle θ in radians (phase-sensitive only).
    pub quadrature_phase: f64,
}

impl AmplifierModel {
    pub fn phase_preserving(added_noise: f64, gain: f64) -> Self {
        Self { kind: AmplifierKind::PhasePreserving, added_noise, gain, quadrature_phase: 0.0 }
    }

    /// Single-quadrature measurement efficiency η = 1/(1+2A).
    pub fn efficiency(&self) -> f64 {
        1.0 / (1.0 + 2.0 * self.added_noise)
    }

    /// Lower bound on the added noise allowed by the amplifier kind.
    pub fn added_noise_bound(&self) -> f64 {
        match self.kind {
            AmplifierKind::PhasePreserving => 0.5 * (1.0 - 1.0 / self.gain),
            AmplifierKind::PhaseSensitive => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 1.0) {
            return Err(Error::InvalidSpec(format!("amplifier gain must exceed 1, got {}", self.gain)));
        }
        let bound = self.added_noise_bound();
        if !(self.added_noise.is_finite() && self.added_noise >= bound) {
            return Err(Error::InvalidSpec(format!(
                "added noise {} is below the {:?} bound {bound}",
                self.added_noise, self.kind
            )));
        }
        Ok(())
    }
}

/// Amplifier plus the band-limiting and scaling applied before digitisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutChain {
    pub amplifier: AmplifierModel,
    /// Correlation time (s) of the Gaussian noise-shaping filter; 0 leaves the noise white.
    pub correlation_time: f64,
    /// Record units per unit of cavity field amplitude.
    pub output_scale: f64,
}

/// Bin-averaged pointer-state paths for both qubit states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerPaths {
    pub alpha0: Vec<Complex64>,
    pub alpha1: Vec<Complex64>,
    /// Field at t = T (not bin-averaged).
    pub final0: Complex64,
    pub final1: Complex64,
}

impl PointerPaths {
    pub fn path(&self, state: u8) -> &[Complex64] {
        if state == 0 {
            &self.alpha0
        } else {
            &self.alpha1
        }
    }

    /// β(t) = α₀(t) − α₁(t).
    pub fn beta(&self) -> Vec<Complex64> {
        self.alpha0.iter().zip(&self.alpha1).map(|(a, b)| a - b).collect()
    }

    /// ν(t) = α₀(t) + α₁(t).
    pub fn nu(&self) -> Vec<Complex64> {
        self.alpha0.iter().zip(&self.alpha1).map(|(a, b)| a + b).collect()
    }

    pub fn len(&self) -> usize {
        self.alpha0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha0.is_empty()
    }
}

pub fn evolve_pointer_states(params: &CavityParams, grid: &TimeGrid) -> Result<PointerPaths> {
    evolve_pointer_states_with(params, grid, DEFAULT_SUBSTEPS)
}

pub fn evolve_pointer_states_with(
    params: &CavityParams,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<PointerPaths> {
    params.validate()?;
    if substeps == 0 {
        return Err(Error::invalid("substeps must be positive"));
    }
    let (alpha0, final0) = integrate_path(params, grid, substeps, 0, None)?;
    let (alpha1, final1) = integrate_path(params, grid, substeps, 1, None)?;
    Ok(PointerPaths { alpha0, alpha1, final0, final1 })
}

fn rk4_step(alpha: Complex64, h: f64, drive: Complex64, lambda: Complex64) -> Complex64 {
    let f = |a: Complex64| -Complex64::i() * drive - lambda * a;
    let k1 = f(alpha);
    let k2 = f(alpha + 0.5 * h * k1);
    let k3 = f(alpha + 0.5 * h * k2);
    let k4 = f(alpha + h * k3);
    alpha + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates one path starting in `state`, switching to the other state at
/// `jump_time` if given. Returns trapezoidal bin averages and the final field.
fn integrate_path(
    params: &CavityParams,
    grid: &TimeGrid,
    substeps: usize,
    state: u8,
    jump_time: Option<f64>,
) -> Result<(Vec<Complex64>, Complex64)> {
    let dt = grid.dt();
    let h = dt / substeps as f64;
    let lambda_for = |s: u8| Complex64::new(params.kappa / 2.0, params.detuning + params.chi_for(s));

    let mut breaks: Vec<f64> = params
        .drive
        .segments()
        .iter()
        .map(|s| s.start)
        .filter(|&t| t > 0.0)
        .collect();
    if let Some(tau) = jump_time {
        breaks.push(tau);
    }
    breaks.sort_by(f64::total_cmp);

    let state_at = |t: f64| match jump_time {
        Some(tau) if t >= tau => 1 - state,
        _ => state,
    };

    let mut alpha = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(grid.n_points);
    let mut next_break = 0usize;
    for j in 0..grid.n_points {
        let mut acc = 0.5 * alpha;
        for s in 0..substeps {
            let t0 = (j * substeps + s) as f64 * h;
            let t1 = t0 + h;
            let mut t = t0;
            while next_break < breaks.len() && breaks[next_break] <= t0 {
                next_break += 1;
            }
            let mut b = next_break;
            while t < t1 {
                let stop = if b < breaks.len() && breaks[b] < t1 { breaks[b] } else { t1 };
                if stop > t {
                    let st = state_at(t);
                    alpha = rk4_step(alpha, stop - t, params.drive.at(t), lambda_for(st));
                }
                t = stop;
                b += 1;
            }
            if !(alpha.re.is_finite() && alpha.im.is_finite()) {
                return Err(Error::IntegrationDiverged { time: t1 });
            }
            acc += if s + 1 == substeps { 0.5 * alpha } else { alpha };
        }
        out.push(acc / substeps as f64);
    }
    Ok((out, alpha))
}

/// A state change that happened during a shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub from: u8,
    pub to: u8,
}

/// One single-shot measurement record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// I + iQ per output bin, in record units.
    pub samples: Vec<Complex64>,
    pub prep_label: u8,
    pub shot_id: usize,
    /// State the qubit actually started in (differs from `prep_label` on a preparation error).
    pub initial_state: u8,
    pub jump_record: Vec<Jump>,
}

impl Trajectory {
    pub fn jumped(&self) -> bool {
        !self.jump_record.is_empty()
    }
}

fn gaussian_taps(correlation_time: f64, dt: f64) -> Vec<f64> {
    if correlation_time <= 0.0 {
        return vec![1.0];
    }
    let s = correlation_time / dt;
    let half = (FILTER_TRUNCATION_SIGMAS * s).ceil() as i64;
    let mut taps: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / s).powi(2)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= norm);
    taps
}

/// Shot generator for a fixed experiment.
#[derive(Debug, Clone)]
pub struct Simulator {
    cavity: CavityParams,
    grid: TimeGrid,
    rates: DecoherenceRates,
    chain: ReadoutChain,
    paths: PointerPaths,
    taps: Vec<f64>,
    sigma_white: f64,
}

impl Simulator {
    pub fn new(cavity: CavityParams, grid: TimeGrid, rates: DecoherenceRates, chain: ReadoutChain) -> Result<Self> {
        cavity.validate()?;
        rates.validate()?;
        chain.amplifier.validate()?;
        if !(chain.correlation_time >= 0.0 && chain.correlation_time.is_finite()) {
            return Err(Error::InvalidSpec("filter correlation time must be non-negative".into()));
        }
        if !(chain.output_scale.is_finite() && chain.output_scale > 0.0) {
            return Err(Error::InvalidSpec("output scale must be positive".into()));
        }
        let paths = evolve_pointer_states(&cavity, &grid)?;
        let eta = chain.amplifier.efficiency();
        let sigma_white = (1.0 / (4.0 * eta * cavity.kappa * grid.dt())).sqrt();
        let taps = gaussian_taps(chain.correlation_time, grid.dt());
        Ok(Self { cavity, grid, rates, chain, paths, taps, sigma_white })
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.cavity()?, spec.grid()?, spec.rates(), spec.readout_chain())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn cavity(&self) -> &CavityParams {
        &self.cavity
    }

    pub fn rates(&self) -> &DecoherenceRates {
        &self.rates
    }

    pub fn chain(&self) -> &ReadoutChain {
        &self.chain
    }

    /// Pointer paths in cavity-field units.
    pub fn paths(&self) -> &PointerPaths {
        &self.paths
    }

    /// Noise-free record for a shot that stays in `state`.
    pub fn mean_record(&self, state: u8) -> Vec<Complex64> {
        let scale = self.chain.output_scale;
        self.paths.path(state).iter().map(|a| a * scale).collect()
    }

    /// Per-quadrature variance of unshaped noise, `1/(4ηκ dt)`, in record units.
    pub fn white_noise_variance(&self) -> f64 {
        (self.sigma_white * self.chain.output_scale).powi(2)
    }

    /// Per-quadrature variance of the noise in one output bin after shaping.
    pub fn noise_variance_per_bin(&self) -> f64 {
        let gain: f64 = self.taps.iter().map(|t| t * t).sum();
        self.white_noise_variance() * gain
    }

    pub fn sample_trajectory(&self, prep: u8, shot_id: usize, seed: u64) -> Result<Trajectory> {
        if prep > 1 {
            return Err(Error::UnknownLabel(prep));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shot_id as u64);

        let mut initial = prep;
        if rng.random::<f64>() < self.rates.prep_error(prep) {
            initial = 1 - prep;
        }
        let lifetime = if initial == 1 { self.rates.t1_time } else { self.rates.heating_time };
        let jump_time = if lifetime.is_finite() {
            let draw: f64 = Exp::new(1.0 / lifetime).expect("positive rate").sample(&mut rng);
            (draw < self.grid.total_time).then_some(draw)
        } else {
            None
        };

        let n = self.grid.n_points;
        let jumped_path;
        let mean: &[Complex64] = match jump_time {
            Some(tau) => {
                jumped_path = integrate_path(&self.cavity, &self.grid, DEFAULT_SUBSTEPS, initial, Some(tau))?.0;
                &jumped_path
            }
            None => self.paths.path(initial),
        };

        let half = self.taps.len() / 2;
        let raw: Vec<Complex64> = (0..n + 2 * half)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * self.sigma_white
            })
            .collect();

        let amp = &self.chain.amplifier;
        let rot = Complex64::from_polar(1.0, amp.quadrature_phase);
        let scale = self.chain.output_scale;
        let samples = (0..n)
            .map(|j| {
                let noise: Complex64 = self.taps.iter().zip(&raw[j..]).map(|(t, r)| r * t).sum();
                let value = match amp.kind {
                    AmplifierKind::PhasePreserving => mean[j] + noise,
                    AmplifierKind::PhaseSensitive => {
                        // signal in the conjugate quadrature is squeezed by the gain
                        let u = mean[j] * rot.conj();
                        rot * (Complex64::new(u.re, u.im / amp.gain) + noise)
                    }
                };
                value * scale
            })
            .collect();

        let jump_record = jump_time
            .map(|time| vec![Jump { time, from: initial, to: 1 - initial }])
            .unwrap_or_default();
        Ok(Trajectory { samples, prep_label: prep, shot_id, initial_state: initial, jump_record })
    }
}

/// Complete description of a synthetic experiment.
///
/// Field names carry their units; conversions to SI happen in the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub shots: usize,
    pub total_time_us: f64,
    pub n_points: usize,
    pub kappa_over_2pi_khz: f64,
    pub two_chi_over_2pi_mhz: f64,
    pub detuning_over_2pi_mhz: f64,
    pub drive: Vec<DriveSegmentSpec>,
    /// `null` disables decay.
    pub t1_us: Option<f64>,
    /// `null` disables heating.
    pub heating_time_us: Option<f64>,
    pub prep_error_0: f64,
    pub prep_error_1: f64,
    pub amplifier: AmplifierSpec,
    pub filter_correlation_time_ns: f64,
    pub output_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSegmentSpec {
    pub start_us: f64,
    pub amplitude_over_2pi_mhz: f64,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierSpec {
    pub kind: AmplifierKind,
    pub added_noise: f64,
    pub gain_db: f64,
    pub quadrature_phase_deg: f64,
}

const TWO_PI: f64 = 2.0 * PI;

impl Default for ExperimentSpec {
    /// The device parameters of the reference experiment (κ/2π = 1210 kHz,
    /// 2χ/2π = −2.8 MHz, T1 = 29 µs, T = 2.6 µs over 163 bins, 51200 shots).
    /// Drive, amplifier noise, heating, preparation error and detection
    /// bandwidth are not measured quantities. The drive puts both steady states
    /// at |α| ≈ 0.07 record units with their midpoint along (−0.04, −0.045).
    fn default() -> Self {
        Self {
            shots: 51200,
            total_time_us: 2.6,
            n_points: 163,
            kappa_over_2pi_khz: 1210.0,
            two_chi_over_2pi_mhz: -2.8,
            detuning_over_2pi_mhz: 0.0,
            drive: vec![DriveSegmentSpec { start_us: 0.0, amplitude_over_2pi_mhz: 1.33, phase_deg: -41.6 }],
            t1_us: Some(29.0),
            heating_time_us: Some(300.0),
            prep_error_0: 0.005,
            prep_error_1: 0.035,
            amplifier: AmplifierSpec {
                kind: AmplifierKind::PhasePreserving,
                added_noise: 1.2,
                gain_db: 20.0,
                quadrature_phase_deg: 0.0,
            },
            filter_correlation_time_ns: 90.0,
            output_scale: 0.082,
        }
    }
}

impl ExperimentSpec {
    /// Same device with decay, heating and preparation errors switched off.
    pub fn ideal(mut self) -> Self {
        self.t1_us = None;
        self.heating_time_us = None;
        self.prep_error_0 = 0.0;
        self.prep_error_1 = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 || self.shots % 2 != 0 {
            return Err(Error::InvalidSpec(format!("shot count must be even and positive, got {}", self.shots)));
        }
        self.grid()?;
        self.cavity()?.validate()?;
        self.rates().validate()?;
        self.readout_chain().amplifier.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.total_time_us * 1e-6, self.n_points)
    }

    pub fn cavity(&self) -> Result<CavityParams> {
        let segments = self
            .drive
            .iter()
            .map(|s| DriveSegment {
                start: s.start_us * 1e-6,
                amplitude: Complex64::from_polar(TWO_PI * s.amplitude_over_2pi_mhz * 1e6, s.phase_deg.to_radians()),
            })
            .collect();
        Ok(CavityParams {
            detuning: TWO_PI * self.detuning_over_2pi_mhz * 1e6,
            chi: TWO_PI * 0.5 * self.two_chi_over_2pi_mhz * 1e6,
            kappa: TWO_PI * self.kappa_over_2pi_khz * 1e3,
            drive: DriveSchedule::new(segments)?,
        })
    }

    pub fn rates(&self) -> DecoherenceRates {
        DecoherenceRates {
            t1_time: self.t1_us.map_or(f64::INFINITY, |t| t * 1e-6),
            heating_time: self.heating_time_us.map_or(f64::INFINITY, |t| t * 1e-6),
            prep_error_0: self.prep_error_0,
            prep_error_1: self.prep_error_1,
        }
    }

    pub fn readout_chain(&self) -> ReadoutChain {
        ReadoutChain {
            amplifier: AmplifierModel {
                kind: self.amplifier.kind,
                added_noise: self.amplifier.added_noise,
                gain: 10f64.powf(self.amplifier.gain_db / 10.0),
                quadrature_phase: self.amplifier.quadrature_phase_deg.to_radians(),
            },
            correlation_time: self.filter_correlation_time_ns * 1e-9,
            output_scale: self.output_scale,
        }
    }
}

/// Provenance stored alongside every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub spec: Option<ExperimentSpec>,
    pub seed: Option<u64>,
}

/// Labelled shots: the first half prepared in 0, the second half in 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub grid: TimeGrid,
    pub labels: Vec<u8>,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Indices of shots with the given preparation label.
    pub fn class_indices(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Keeps only the first `n_points` bins of every shot.
    pub fn truncate(&self, n_points: usize) -> Result<Dataset> {
        let grid = self.grid.truncated(n_points)?;
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                samples: t.samples[..n_points].to_vec(),
                jump_record: t.jump_record.iter().copied().filter(|j| j.time <= grid.total_time).collect(),
                ..t.clone()
            })
            .collect();
        Ok(Dataset { trajectories, grid, labels: self.labels.clone(), metadata: self.metadata.clone() })
    }
}

/// Generates `spec.shots` shots; shot `i` draws from RNG stream `i` of `seed`.
pub fn generate_dataset(spec: &ExperimentSpec, seed: u64) -> Result<Dataset> {
    let sim = Simulator::from_spec(spec)?;
    let half = spec.shots / 2;
    let trajectories = (0..spec.shots)
        .into_par_iter()
        .map(|i| sim.sample_trajectory(u8::from(i >= half), i, seed))
        .collect::<Result<Vec<_>>>()?;
    let labels = trajectories.iter().map(|t| t.prep_label).collect();
    Ok(Dataset {
        trajectories,
        grid: *sim.grid(),
        labels,
        metadata: DatasetMetadata { spec: Some(spec.clone()), seed: Some(seed) },
    })
}

//! Seeded Monte Carlo generation of time-tagged detector events from the
//! cascade, noise and detector-tree model.
//!
//! Each excitation pulse is drawn from its own counter-based RNG substream
//! (stream id = pulse index), so a run is reproducible bit for bit for a
//! fixed seed regardless of how generation is chunked across threads.
//!
//! Per pulse the draw order is fixed: biexciton decay time, biexciton
//! detection, exciton detection, exciton delay, correlated noise, uncorrelated
//! noise, then one routing draw chain per registered photon in arrival order,
//! then jitter. Detected exciton photons ride the cascade (arrive the drawn
//! delay after the biexciton decay) when the biexciton photon was registered;
//! exciton-only detections follow the bare exciton decay from the pulse, which
//! reproduces the eight-path probabilities of the analytic model exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::{EmitterParams, NoiseParams};
use crate::timetag::{EventStream, TagRecord};
use crate::{Error, Result};

/// Two-splitter detector tree: reflectivity `r1` into detector 1, the rest
/// through a second splitter with reflectivity `r2` into detectors 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub r1: f64,
    pub r2: f64,
    /// Per-detector dead time. `None` means a detector fires at most once per
    /// pulse, which is how the counting analysis treats real detectors.
    /// `Some(0.0)` disables dropping entirely.
    pub dead_time_ns: Option<f64>,
    /// Gaussian timing jitter applied to every surviving count, in ps.
    pub jitter_sigma_ps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { r1: 0.4, r2: 0.5, dead_time_ns: None, jitter_sigma_ps: 0.0 }
    }
}

impl DetectorConfig {
    /// Everything onto one detector with no dead time and no jitter. Useful
    /// when the stream should reflect the bare emission model.
    pub fn ideal_single() -> Self {
        Self { r1: 1.0, r2: 0.5, dead_time_ns: Some(0.0), jitter_sigma_ps: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        if let Some(dt) = self.dead_time_ns {
            if dt < 0.0 || !dt.is_finite() {
                return Err(Error::Config(format!("dead time must be >= 0, got {dt}")));
            }
        }
        if self.jitter_sigma_ps < 0.0 || !self.jitter_sigma_ps.is_finite() {
            return Err(Error::Config(format!(
                "jitter sigma must be >= 0, got {}",
                self.jitter_sigma_ps
            )));
        }
        Ok(())
    }

    /// True when a detector can register at most one count per pulse, the
    /// regime the photon-number correction is derived for.
    pub fn same_pulse_exclusive(&self) -> bool {
        self.dead_time_ns.is_none()
    }

    /// Probability of a photon landing on detectors 1, 2, 3.
    pub fn channel_probabilities(&self) -> Result<[f64; 3]> {
        self.validate()?;
        Ok([
            self.r1,
            (1.0 - self.r1) * self.r2,
            (1.0 - self.r1) * (1.0 - self.r2),
        ])
    }
}

/// Everything a simulation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub emitter: EmitterParams,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub detectors: DetectorConfig,
    pub n_pulses: u64,
    pub rep_period_ns: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Validate the run and return non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.emitter.validate()?;
        self.noise.validate()?;
        self.detectors.validate()?;
        if self.n_pulses == 0 {
            return Err(Error::Config("n_pulses must be >= 1".into()));
        }
        if !(self.rep_period_ns > 0.0) || !self.rep_period_ns.is_finite() {
            return Err(Error::Config(format!(
                "rep_period_ns must be > 0, got {}",
                self.rep_period_ns
            )));
        }
        let mut warnings = Vec::new();
        if self.rep_period_ns < 5.0 * self.emitter.tau_x_ns {
            warnings.push(format!(
                "rep period {} ns is below 5 exciton lifetimes ({} ns); \
                 cascades will spill into following pulses",
                self.rep_period_ns,
                5.0 * self.emitter.tau_x_ns
            ));
        }
        Ok(warnings)
    }
}

/// Ground-truth record of one pulse: local times (ns) of each registered
/// photon before the detector tree. `None` means not emitted or not detected.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PulseTruth {
    pub bx_ns: Option<f64>,
    pub x_ns: Option<f64>,
    pub cn_ns: Option<f64>,
    pub un_ns: Option<f64>,
}

impl PulseTruth {
    pub fn registered(&self) -> usize {
        [self.bx_ns, self.x_ns, self.cn_ns, self.un_ns].iter().filter(|t| t.is_some()).count()
    }
}

/// Bookkeeping counters accumulated during generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_pulses: u64,
    /// Pulses by number of registered photons before the detector tree;
    /// index 4 collects four or more.
    pub registered_multiplicity: [u64; 5],
    pub n_bx_detected: u64,
    pub n_x_detected: u64,
    pub n_correlated_noise: u64,
    pub n_uncorrelated_noise: u64,
    pub n_dropped_dead_time: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub stream: EventStream,
    pub summary: SimSummary,
}

/// Pulses generated per work item when fanning out over threads.
const PULSE_CHUNK: u64 = 1 << 16;

pub fn simulate_stream(cfg: &SimConfig) -> Result<SimOutput> {
    let (out, _) = run(cfg, false)?;
    Ok(out)
}

/// As [`simulate_stream`] but also returns the per-pulse ground truth.
/// Memory grows with the pulse count; intended for model-validation runs.
pub fn simulate_stream_with_truth(cfg: &SimConfig) -> Result<(SimOutput, Vec<PulseTruth>)> {
    let (out, truth) = run(cfg, true)?;
    Ok((out, truth.expect("truth requested")))
}

fn run(cfg: &SimConfig, collect_truth: bool) -> Result<(SimOutput, Option<Vec<PulseTruth>>)> {
    let warnings = cfg.validate()?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let period_ps = (cfg.rep_period_ns * 1e3).round() as u64;
    if period_ps == 0 {
        return Err(Error::Config("rep period is below 1 ps".into()));
    }

    let n_chunks = cfg.n_pulses.div_ceil(PULSE_CHUNK);
    let chunks: Vec<ChunkOutput> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * PULSE_CHUNK;
            let hi = (lo + PULSE_CHUNK).min(cfg.n_pulses);
            generate_chunk(cfg, &base, period_ps, lo, hi, collect_truth)
        })
        .collect();

    let mut records = Vec::with_capacity(chunks.iter().map(|c| c.records.len()).sum());
    let mut truth = collect_truth.then(|| Vec::with_capacity(cfg.n_pulses as usize));
    let mut summary = SimSummary { n_pulses: cfg.n_pulses, warnings, ..Default::default() };
    for chunk in chunks {
        records.extend(chunk.records);
        if let (Some(t), Some(ct)) = (truth.as_mut(), chunk.truth) {
            t.extend(ct);
        }
        for (acc, v) in summary
            .registered_multiplicity
            .iter_mut()
            .zip(chunk.summary.registered_multiplicity)
        {
            *acc += v;
        }
        summary.n_bx_detected += chunk.summary.n_bx_detected;
        summary.n_x_detected += chunk.summary.n_x_detected;
        summary.n_correlated_noise += chunk.summary.n_correlated_noise;
        summary.n_uncorrelated_noise += chunk.summary.n_uncorrelated_noise;
        summary.n_dropped_dead_time += chunk.summary.n_dropped_dead_time;
    }

    // Long decays and jitter can spill past the next sync; a global sort
    // restores the stream ordering contract.
    records.sort_by_key(|r| (r.global_time_ps, r.channel));

    let stream = EventStream { rep_period_ps: Some(period_ps), records };
    Ok((SimOutput { stream, summary }, truth))
}

struct ChunkOutput {
    records: Vec<TagRecord>,
    summary: SimSummary,
    truth: Option<Vec<PulseTruth>>,
}

fn generate_chunk(
    cfg: &SimConfig,
    base: &ChaCha8Rng,
    period_ps: u64,
    lo: u64,
    hi: u64,
    collect_truth: bool,
) -> ChunkOutput {
    let p = &cfg.emitter;
    let n = &cfg.noise;
    let det_bx = p.detected_bx();
    let det_x = p.detected_x();
    let det_cn = (n.eta_cn * p.alpha).min(1.0);
    let det_un = (n.eta_un * p.alpha).min(1.0);

    let mut records = Vec::new();
    let mut truth = collect_truth.then(Vec::new);
    let mut summary = SimSummary::default();
    let mut arrivals: Vec<f64> = Vec::with_capacity(4);

    for pulse in lo..hi {
        let mut rng = base.clone();
        rng.set_stream(pulse);

        let t_bx = exp_sample(&mut rng, p.tau_bx_ns);
        let bx_detected = rng.random_bool(det_bx);
        let x_detected = rng.random_bool(det_x);
        let t_x = x_detected.then(|| {
            let delay = exp_sample(&mut rng, p.tau_x_ns);
            if bx_detected {
                t_bx + delay
            } else {
                delay
            }
        });
        let t_cn = (det_cn > 0.0 && rng.random_bool(det_cn))
            .then(|| exp_sample(&mut rng, n.tau_cn_ns));
        let t_un = (det_un > 0.0 && rng.random_bool(det_un))
            .then(|| rng.random::<f64>() * cfg.rep_period_ns);

        let pulse_truth = PulseTruth {
            bx_ns: bx_detected.then_some(t_bx),
            x_ns: t_x,
            cn_ns: t_cn,
            un_ns: t_un,
        };

        let k = pulse_truth.registered();
        summary.registered_multiplicity[k.min(4)] += 1;
        summary.n_bx_detected += bx_detected as u64;
        summary.n_x_detected += t_x.is_some() as u64;
        summary.n_correlated_noise += t_cn.is_some() as u64;
        summary.n_uncorrelated_noise += t_un.is_some() as u64;

        if k > 0 {
            arrivals.clear();
            arrivals.extend(
                [pulse_truth.bx_ns, pulse_truth.x_ns, pulse_truth.cn_ns, pulse_truth.un_ns]
                    .into_iter()
                    .flatten(),
            );
            arrivals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let routed = apply_detector_tree(&arrivals, &cfg.detectors, &mut rng);
            summary.n_dropped_dead_time += (arrivals.len() - routed.len()) as u64;

            let pulse_t0 = pulse * period_ps;
            for (channel, local_ns) in routed {
                let t = pulse_t0 as f64 + local_ns * 1e3;
                records.push(TagRecord {
                    channel,
                    global_time_ps: t.round().max(0.0) as u64,
                });
            }
        }

        records.push(TagRecord { channel: 0, global_time_ps: pulse * period_ps });
        if let Some(t) = truth.as_mut() {
            t.push(pulse_truth);
        }
    }

    ChunkOutput { records, summary, truth }
}

/// Route photons of one pulse through the splitter tree.
///
/// Arrivals must be sorted ascending. Each photon lands on detector 1 with
/// probability `r1`, otherwise on detector 2 with probability `r2`, otherwise
/// on detector 3. A photon hitting a detector within its dead time of that
/// detector's previous count is dropped. Jitter is added after routing and
/// dead-time handling.
pub fn apply_detector_tree<R: Rng>(
    arrivals_ns: &[f64],
    d: &DetectorConfig,
    rng: &mut R,
) -> Vec<(u8, f64)> {
    let mut out = Vec::with_capacity(arrivals_ns.len());
    let mut last_hit: [Option<f64>; 3] = [None; 3];
    for &t in arrivals_ns {
        let channel: u8 = if rng.random::<f64>() < d.r1 {
            1
        } else if rng.random::<f64>() < d.r2 {
            2
        } else {
            3
        };
        let slot = &mut last_hit[channel as usize - 1];
        let blocked = match (*slot, d.dead_time_ns) {
            (Some(prev), Some(dt)) => t - prev < dt,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if blocked {
            continue;
        }
        *slot = Some(t);
        out.push((channel, t));
    }
    if d.jitter_sigma_ps > 0.0 {
        for (_, t) in &mut out {
            *t += gaussian(rng) * d.jitter_sigma_ps * 1e-3;
        }
    }
    out
}

fn exp_sample<R: Rng>(rng: &mut R, tau: f64) -> f64 {
    -tau * (1.0 - rng.random::<f64>()).ln()
}

/// Box-Muller standard normal. One value per call; the partner variate is
/// discarded to keep the per-photon draw count fixed.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

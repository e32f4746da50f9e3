//! Parameter extraction from recorded streams: multi-exponential lifetime
//! fitting, quantum-yield derivation and noise-rate estimation.
//!
//! The lifetime fit is a variable-projection least squares: the nonlinear
//! search runs over the lifetimes only (Nelder-Mead in log-lifetime space,
//! multi-start from log-spaced initial simplices) and the amplitudes plus a
//! constant baseline are solved linearly at every step. Bins are weighted by
//! the reciprocal of `max(count, 1)`, the usual Poisson weighting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::emitter::EmitterParams;
use crate::herald::HeraldReport;
use crate::timetag::{correction_factors, count_multiplicities, Histogram, Localized};
use crate::{Error, Result};

/// Lifetimes at or below this are attributed to laser-induced noise rather
/// than the cascade when assigning fit components to emitter states.
pub const DEFAULT_NOISE_LIFETIME_CEILING_NS: f64 = 0.45;

/// Relative lifetime change below which the nonlinear search stops.
const CONVERGENCE_TOL: f64 = 1e-8;
/// Iteration cap of one Nelder-Mead run.
const MAX_ITERATIONS: usize = 500;
/// Fitted lifetimes closer than this (relative) flag a degenerate fit.
const DEGENERATE_LIFETIME_FRACTION: f64 = 0.05;

/// One exponential decay component of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    /// Counts per bin at zero delay.
    pub amplitude: f64,
    pub lifetime_ns: f64,
}

/// Per-parameter standard uncertainties from the Gauss-Newton covariance at
/// the optimum, ordered like the components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainties {
    pub amplitudes: Vec<f64>,
    pub lifetimes: Vec<f64>,
    pub baseline: f64,
}

/// Result of [`fit_exponentials`]. Components are sorted by ascending
/// lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub components: Vec<ExpComponent>,
    pub baseline: f64,
    /// Square root of the weighted residual sum of squares.
    pub residual_norm: f64,
    pub uncertainties: FitUncertainties,
    /// Two lifetimes ended up within 5% of each other; the component split
    /// between them is not trustworthy.
    pub degenerate: bool,
}

struct FitData {
    /// Bin centers in ns.
    t: Vec<f64>,
    /// Counts.
    y: Vec<f64>,
    /// Poisson weights `1 / max(y, 1)`.
    w: Vec<f64>,
}

impl FitData {
    fn from_histogram(h: &Histogram) -> Self {
        let n = h.counts.len();
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for (i, &c) in h.counts.iter().enumerate() {
            t.push(h.bin_center_ns(i));
            y.push(c as f64);
            w.push(1.0 / (c as f64).max(1.0));
        }
        Self { t, y, w }
    }
}

/// Amplitudes and baseline for fixed lifetimes, with the weighted residual
/// sum of squares. `None` when the normal equations are singular.
fn project_linear(data: &FitData, taus: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let k = taus.len();
    let n = data.t.len();
    let m = k + 1;

    // Design columns: exp(-t/tau_j) and the constant baseline.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &tau in taus {
        cols.push(data.t.iter().map(|&t| (-t / tau).exp()).collect());
    }
    cols.push(vec![1.0; n]);

    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut atb = DVector::<f64>::zeros(m);
    for i in 0..n {
        let w = data.w[i];
        for a in 0..m {
            let ca = cols[a][i];
            atb[a] += w * ca * data.y[i];
            for b in a..m {
                ata[(a, b)] += w * ca * cols[b][i];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }

    let beta = ata.cholesky()?.solve(&atb);

    let mut ssr = 0.0;
    for i in 0..n {
        let mut model = 0.0;
        for a in 0..m {
            model += beta[a] * cols[a][i];
        }
        let r = data.y[i] - model;
        ssr += data.w[i] * r * r;
    }

    // Negative amplitudes are unphysical; steer the search away smoothly.
    let mut penalty = 0.0;
    for a in 0..m {
        let v = beta[a];
        if v < 0.0 {
            penalty += v * v;
        }
    }

    let amps = (0..k).map(|j| beta[j]).collect();
    Some((amps, beta[k], ssr + penalty))
}

fn objective(data: &FitData, theta: &[f64]) -> f64 {
    let taus: Vec<f64> = theta.iter().map(|&x| x.exp()).collect();
    match project_linear(data, &taus) {
        Some((_, _, ssr)) => ssr,
        None => f64::INFINITY,
    }
}

/// Standard Nelder-Mead over the log-lifetimes. Returns the best vertex, its
/// value and whether the simplex collapsed below the tolerance.
fn nelder_mead(data: &FitData, start: &[f64]) -> (Vec<f64>, f64, bool) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for d in 0..dim {
        let mut v = start.to_vec();
        v[d] += 0.4;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(data, v)).collect();

    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if spread < CONVERGENCE_TOL {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for d in 0..dim {
                centroid[d] += v[d] / dim as f64;
            }
        }

        let at = |c: f64| -> Vec<f64> {
            (0..dim).map(|d| centroid[d] + c * (centroid[d] - simplex[worst][d])).collect()
        };

        let reflected = at(1.0);
        let fr = objective(data, &reflected);
        if fr < values[best] {
            let expanded = at(2.0);
            let fe = objective(data, &expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = at(-0.5);
            let fc = objective(data, &contracted);
            if fc < values[worst] {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for i in 0..=dim {
                    if i == best {
                        continue;
                    }
                    for d in 0..dim {
                        simplex[i][d] = 0.5 * (simplex[i][d] + simplex[best][d]);
                    }
                    values[i] = objective(data, &simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best], converged)
}

/// All size-k combinations of a log-spaced lifetime grid, used as
/// multi-start seeds.
fn start_points(data: &FitData, k: usize) -> Vec<Vec<f64>> {
    let t_min = (data.t[1] - data.t[0]).max(data.t[0]).max(1e-6);
    let t_max = data.t.last().copied().unwrap_or(1.0).max(t_min * 10.0);
    let grid_n = 6;
    let grid: Vec<f64> = (0..grid_n)
        .map(|i| {
            let f = i as f64 / (grid_n - 1) as f64;
            (t_min.ln() + f * ((t_max / 3.0).ln() - t_min.ln())).exp().ln()
        })
        .collect();

    let mut starts = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        starts.push(idx.iter().map(|&i| grid[i]).collect());
        // next combination
        let mut d = k;
        loop {
            if d == 0 {
                return starts;
            }
            d -= 1;
            if idx[d] + (k - d) < grid_n {
                idx[d] += 1;
                for j in d + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Fit `baseline + sum_j a_j exp(-t/tau_j)` with `k` components to a
/// local-time histogram.
pub fn fit_exponentials(h: &Histogram, k: usize) -> Result<FitResult> {
    if !(1..=3).contains(&k) {
        return Err(Error::Config(format!("component count must be 1..=3, got {k}")));
    }
    let nonzero = h.counts.iter().filter(|&&c| c > 0).count();
    if nonzero < 4 * k + 1 {
        return Err(Error::Config(format!(
            "need at least {} nonzero bins for a {k}-component fit, got {nonzero}",
            4 * k + 1
        )));
    }

    let data = FitData::from_histogram(h);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for start in start_points(&data, k) {
        let cand = nelder_mead(&data, &start);
        if best.as_ref().is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    let (theta, _, converged) = best.expect("at least one start point");
    let taus: Vec<f64> = theta.iter().map(|&x| x.exp()).collect();
    let (amps, baseline, ssr) = project_linear(&data, &taus)
        .ok_or_else(|| Error::NoSolution("singular projection at fit optimum".into()))?;

    let result = assemble_result(&data, &taus, &amps, baseline, ssr);
    if !converged {
        return Err(Error::FitDidNotConverge { best: Box::new(result) });
    }
    Ok(result)
}

fn assemble_result(
    data: &FitData,
    taus: &[f64],
    amps: &[f64],
    baseline: f64,
    ssr: f64,
) -> FitResult {
    let k = taus.len();
    let n = data.t.len();

    // Gauss-Newton covariance over [a_1..a_k, tau_1..tau_k, baseline].
    let m = 2 * k + 1;
    let mut jtwj = DMatrix::<f64>::zeros(m, m);
    let mut row = vec![0.0; m];
    for i in 0..n {
        let t = data.t[i];
        for j in 0..k {
            let e = (-t / taus[j]).exp();
            row[j] = e;
            row[k + j] = amps[j] * t / (taus[j] * taus[j]) * e;
        }
        row[2 * k] = 1.0;
        let w = data.w[i];
        for a in 0..m {
            for b in a..m {
                jtwj[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            jtwj[(a, b)] = jtwj[(b, a)];
        }
    }
    let sigmas: Vec<f64> = match jtwj.try_inverse() {
        Some(cov) => (0..m).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; m],
    };

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));

    let components: Vec<ExpComponent> = order
        .iter()
        .map(|&j| ExpComponent { amplitude: amps[j].max(0.0), lifetime_ns: taus[j] })
        .collect();
    let mut degenerate = false;
    for w in components.windows(2) {
        if (w[1].lifetime_ns - w[0].lifetime_ns) / w[1].lifetime_ns < DEGENERATE_LIFETIME_FRACTION {
            degenerate = true;
        }
    }

    FitResult {
        uncertainties: FitUncertainties {
            amplitudes: order.iter().map(|&j| sigmas[j]).collect(),
            lifetimes: order.iter().map(|&j| sigmas[k + j]).collect(),
            baseline: sigmas[2 * k],
        },
        components,
        baseline,
        residual_norm: ssr.max(0.0).sqrt(),
        degenerate,
    }
}

/// Split fit components into noise (at or below the lifetime ceiling) and
/// cascade parts, each as `(amplitude, lifetime)` pairs.
fn split_components(fit: &FitResult, noise_ceiling_ns: f64) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut noise = Vec::new();
    let mut cascade = Vec::new();
    for c in &fit.components {
        let pair = (c.amplitude, c.lifetime_ns);
        if c.lifetime_ns <= noise_ceiling_ns {
            noise.push(pair);
        } else {
            cascade.push(pair);
        }
    }
    (noise, cascade)
}

/// Derive emitter quantum yields from fitted lifetimes, the calibrated
/// collection efficiency and the measured one-photon probability per pulse.
///
/// The shortest non-noise lifetime is taken as the biexciton, the longest as
/// the exciton; `qy_x` then solves
/// `alpha q + alpha rho q - 2 alpha^2 rho q^2 = p1` with
/// `rho = beta tau_bx / tau_x`.
pub fn derive_emitter_params(
    fit: &FitResult,
    alpha: f64,
    beta: f64,
    p1_measured: f64,
    noise_ceiling_ns: f64,
) -> Result<EmitterParams> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if !(0.0..1.0).contains(&p1_measured) || p1_measured == 0.0 {
        return Err(Error::Config(format!("p1 must be in (0, 1), got {p1_measured}")));
    }
    let (_, cascade) = split_components(fit, noise_ceiling_ns);
    if cascade.len() < 2 {
        return Err(Error::InconsistentCalibration(format!(
            "need two non-noise components (biexciton and exciton), found {}",
            cascade.len()
        )));
    }
    let tau_bx = cascade.first().unwrap().1;
    let tau_x = cascade.last().unwrap().1;
    let rho = beta * tau_bx / tau_x;

    let q = if rho < 1e-12 {
        p1_measured / alpha
    } else {
        let disc = (1.0 + rho).powi(2) - 8.0 * rho * p1_measured;
        if disc < 0.0 {
            return Err(Error::InconsistentCalibration(
                "one-photon probability too large for the yield ratio".into(),
            ));
        }
        ((1.0 + rho) - disc.sqrt()) / (4.0 * alpha * rho)
    };

    if !(q > 0.0 && q <= 1.0) || rho * q > 1.0 {
        return Err(Error::InconsistentCalibration(format!(
            "derived yields out of range: qy_x = {q}, qy_bx = {}",
            rho * q
        )));
    }
    EmitterParams::new(q, rho * q, tau_x, tau_bx, beta, alpha)
}

/// Detected noise rates per pulse estimated from the triple-to-pair event
/// ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub total_detected_per_pulse: f64,
    pub correlated_detected_per_pulse: f64,
    pub uncorrelated_detected_per_pulse: f64,
    pub n2m: u64,
    pub n3m: u64,
    /// Fewer than 10 measured triples; the estimate is mostly noise itself.
    pub low_statistics: bool,
}

/// Estimate detected noise per pulse as `c3 N3m / (c2 N2m)`. The
/// uncorrelated part is the same ratio recomputed after dropping local times
/// below `t_f_cut_ns` (several correlated-noise lifetimes); the correlated
/// part is the remainder.
pub fn estimate_noise_rates(
    loc: &Localized,
    d: &crate::sim::DetectorConfig,
    t_f_cut_ns: f64,
) -> Result<NoiseRates> {
    let c = correction_factors(d.r1, d.r2)?;
    let all = count_multiplicities(loc, 0.0);
    let n3m = all.n3 + all.n_more;
    if all.n2 == 0 {
        return Err(Error::NoEstimate("no pair events in the stream".into()));
    }
    let total = c.c3 * n3m as f64 / (c.c2 * all.n2 as f64);

    let cut = count_multiplicities(loc, t_f_cut_ns);
    let uncorrelated = if cut.n2 > 0 {
        (c.c3 * (cut.n3 + cut.n_more) as f64 / (c.c2 * cut.n2 as f64)).min(total)
    } else {
        0.0
    };

    Ok(NoiseRates {
        total_detected_per_pulse: total,
        correlated_detected_per_pulse: total - uncorrelated,
        uncorrelated_detected_per_pulse: uncorrelated,
        n2m: all.n2,
        n3m,
        low_statistics: n3m < 10,
    })
}

/// Detected noise photons per pulse, read off a lifetime fit: sub-ceiling
/// components are correlated noise, the flat baseline is uncorrelated
/// background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub correlated_per_pulse: f64,
    pub uncorrelated_per_pulse: f64,
    /// Amplitude-weighted correlated-noise lifetime.
    pub tau_cn_ns: f64,
    /// Histogram span the baseline was integrated over.
    pub span_ns: f64,
}

impl NoiseBudget {
    /// Expected detected noise photons per pulse with local time >= `t_f_ns`.
    pub fn survivors_beyond(&self, t_f_ns: f64) -> f64 {
        let un_frac = (1.0 - t_f_ns / self.span_ns).max(0.0);
        let cn_frac = if self.tau_cn_ns > 0.0 { (-t_f_ns / self.tau_cn_ns).exp() } else { 0.0 };
        self.correlated_per_pulse * cn_frac + self.uncorrelated_per_pulse * un_frac
    }
}

/// Integrate a fitted component: total counts = amplitude * tau / bin width.
fn component_counts(amp: f64, tau_ns: f64, bin_ns: f64) -> f64 {
    amp * tau_ns / bin_ns
}

pub fn noise_budget_from_fit(
    fit: &FitResult,
    hist: &Histogram,
    n_pulses: u64,
    noise_ceiling_ns: f64,
) -> Result<NoiseBudget> {
    if n_pulses == 0 {
        return Err(Error::Config("pulse count must be positive".into()));
    }
    let bin_ns = hist.bin_width_ps as f64 * 1e-3;
    let span_ns = bin_ns * hist.counts.len() as f64;
    let (noise, _) = split_components(fit, noise_ceiling_ns);

    let n = n_pulses as f64;
    let mut correlated = 0.0;
    let mut tau_weighted = 0.0;
    for &(amp, tau) in &noise {
        let counts = component_counts(amp, tau, bin_ns);
        correlated += counts;
        tau_weighted += counts * tau;
    }
    let tau_cn_ns = if correlated > 0.0 { tau_weighted / correlated } else { 0.0 };

    Ok(NoiseBudget {
        correlated_per_pulse: correlated / n,
        uncorrelated_per_pulse: fit.baseline.max(0.0) * hist.counts.len() as f64 / n,
        tau_cn_ns,
        span_ns,
    })
}

/// Measure the per-pulse one-photon probability of the cascade from a
/// filtered stream.
///
/// Pulses with at least one count beyond `t_f_ns` are counted, the expected
/// noise survivors (from the fit) are subtracted and the remainder is scaled
/// up by the cascade survival fraction beyond the filter, also taken from the
/// fit. The filter keeps correlated noise out; the corrections keep the
/// estimate unbiased despite it.
pub fn measure_p1(
    loc: &Localized,
    fit: &FitResult,
    hist: &Histogram,
    t_f_ns: f64,
    noise_ceiling_ns: f64,
) -> Result<f64> {
    if loc.n_pulses == 0 {
        return Err(Error::Config("stream has no pulses".into()));
    }
    let m = count_multiplicities(loc, t_f_ns);
    let ge1 = (m.n1 + m.n2 + m.n3 + m.n_more) as f64 / loc.n_pulses as f64;

    let budget = noise_budget_from_fit(fit, hist, loc.n_pulses, noise_ceiling_ns)?;
    let bin_ns = hist.bin_width_ps as f64 * 1e-3;
    let (_, cascade) = split_components(fit, noise_ceiling_ns);
    if cascade.is_empty() {
        return Err(Error::NoEstimate("fit has no cascade components".into()));
    }
    let mut total = 0.0;
    let mut surviving = 0.0;
    for &(amp, tau) in &cascade {
        let counts = component_counts(amp, tau, bin_ns);
        total += counts;
        surviving += counts * (-t_f_ns / tau).exp();
    }
    if total <= 0.0 || surviving <= 0.0 {
        return Err(Error::NoEstimate("cascade components carry no counts".into()));
    }

    let p1 = (ge1 - budget.survivors_beyond(t_f_ns)).max(0.0) / (surviving / total);
    Ok(p1.min(1.0))
}

/// Background-subtracted, gate-loss-corrected ASH efficiency.
///
/// Takes an ASH report measured behind a noise filter, removes the expected
/// accidental successes (a noise survivor paired with any cascade photon) and
/// undoes the loss of true pairs whose biexciton photon fell before the
/// filter. At a response time of zero the result estimates the bare
/// `alpha^2 qy_x qy_bx` plateau.
pub fn ash_efficiency_noise_corrected(
    report: &HeraldReport,
    budget: &NoiseBudget,
    tau_bx_ns: f64,
) -> Result<f64> {
    if !(tau_bx_ns > 0.0) {
        return Err(Error::Domain(format!("tau_bx must be positive, got {tau_bx_ns}")));
    }
    if report.n_pulses == 0 {
        return Err(Error::NoEstimate("report covers no pulses".into()));
    }
    let t_f = report.t_f_ns;
    let noise_surv = budget.survivors_beyond(t_f);
    let p_trigger = report.n_triggers as f64 / report.n_pulses as f64;
    let p_cascade = (p_trigger - noise_surv).max(0.0);
    let accidental = noise_surv * p_cascade;
    Ok((report.efficiency_corrected - accidental).max(0.0) / (-t_f / tau_bx_ns).exp())
}

//! Closed-form efficiency, purity and determinicity formulas for the
//! biexciton-exciton cascade.
//!
//! The emitter is modelled as a two-photon cascade: each excitation pulse
//! prepares the biexciton (BX), which decays with lifetime `tau_bx` emitting a
//! photon with probability `qy_bx`, followed by the exciton (X) with lifetime
//! `tau_x` and emission probability `qy_x`. `alpha` folds all collection and
//! detection losses into one per-photon probability. Every scheme metric below
//! derives from the eight emission-path probabilities of
//! [`path_probabilities`].
//!
//! All functions are pure and safe to call concurrently.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lifetime ratios closer to 1 than this are evaluated with the analytic
/// equal-lifetime limits; the generic expressions divide by zero there.
const DEGENERATE_LIFETIME_TOL: f64 = 1e-9;

/// Quantum yields, lifetimes and collection efficiency of a cascade emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    /// Exciton quantum yield, in `[0, 1]`.
    pub qy_x: f64,
    /// Biexciton quantum yield, in `[0, 1]`.
    pub qy_bx: f64,
    /// Exciton lifetime in ns, strictly positive.
    pub tau_x_ns: f64,
    /// Biexciton lifetime in ns, strictly positive.
    pub tau_bx_ns: f64,
    /// Ratio of biexciton to exciton radiative rates. Statistical pathway
    /// counting gives 4 for a plain cascade.
    pub beta: f64,
    /// Overall collection plus detection efficiency, in `[0, 1]`.
    pub alpha: f64,
}

impl EmitterParams {
    pub fn new(
        qy_x: f64,
        qy_bx: f64,
        tau_x_ns: f64,
        tau_bx_ns: f64,
        beta: f64,
        alpha: f64,
    ) -> Result<Self> {
        let p = Self { qy_x, qy_bx, tau_x_ns, tau_bx_ns, beta, alpha };
        p.validate()?;
        Ok(p)
    }

    /// Build parameters with the biexciton yield derived from the lifetimes:
    /// `qy_bx = qy_x * beta * tau_bx / tau_x`.
    pub fn from_lifetimes(
        qy_x: f64,
        tau_x_ns: f64,
        tau_bx_ns: f64,
        beta: f64,
        alpha: f64,
    ) -> Result<Self> {
        if tau_x_ns <= 0.0 || tau_bx_ns <= 0.0 {
            return Err(Error::Domain("lifetimes must be positive".into()));
        }
        let qy_bx = qy_x * qy_ratio(tau_x_ns, tau_bx_ns, beta)?;
        Self::new(qy_x, qy_bx, tau_x_ns, tau_bx_ns, beta, alpha)
    }

    /// Build parameters with the biexciton lifetime derived from the yields:
    /// `tau_bx = tau_x * (qy_bx / qy_x) / beta`. Useful when a measured yield
    /// pair is trusted more than a measured lifetime pair.
    pub fn from_quantum_yields(
        qy_x: f64,
        qy_bx: f64,
        tau_x_ns: f64,
        beta: f64,
        alpha: f64,
    ) -> Result<Self> {
        if qy_x <= 0.0 {
            return Err(Error::Domain("qy_x must be positive to derive tau_bx".into()));
        }
        if beta <= 0.0 {
            return Err(Error::Domain("beta must be positive".into()));
        }
        let tau_bx_ns = tau_x_ns * (qy_bx / qy_x) / beta;
        Self::new(qy_x, qy_bx, tau_x_ns, tau_bx_ns, beta, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("qy_x", self.qy_x), ("qy_bx", self.qy_bx), ("alpha", self.alpha)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("tau_x_ns", self.tau_x_ns), ("tau_bx_ns", self.tau_bx_ns)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Detected exciton photon probability per pulse.
    pub fn detected_x(&self) -> f64 {
        self.alpha * self.qy_x
    }

    /// Detected biexciton photon probability per pulse.
    pub fn detected_bx(&self) -> f64 {
        self.alpha * self.qy_bx
    }

    fn gamma_x(&self) -> f64 {
        1.0 / self.tau_x_ns
    }

    fn gamma_bx(&self) -> f64 {
        1.0 / self.tau_bx_ns
    }

    fn degenerate_lifetimes(&self) -> bool {
        (1.0 - self.tau_bx_ns / self.tau_x_ns).abs() < DEGENERATE_LIFETIME_TOL
    }
}

/// Per-pulse rates of spurious detector counts, expressed at the emitter
/// level (before the collection factor `alpha` is applied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Probability per pulse of a correlated (laser-synchronised) noise event.
    pub eta_cn: f64,
    /// Decay time of the correlated noise component in ns.
    pub tau_cn_ns: f64,
    /// Probability per pulse of an uncorrelated background event.
    pub eta_un: f64,
}

impl NoiseParams {
    pub const fn none() -> Self {
        Self { eta_cn: 0.0, tau_cn_ns: 0.3, eta_un: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_cn", self.eta_cn), ("eta_un", self.eta_un)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.tau_cn_ns > 0.0) || !self.tau_cn_ns.is_finite() {
            return Err(Error::Config(format!("tau_cn_ns must be > 0, got {}", self.tau_cn_ns)));
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::none()
    }
}

/// The eight mutually exclusive outcomes of one excitation cycle under a
/// fixed time gate `T`, classified by which photons were detected and on
/// which side of the gate they fell.
///
/// - `p1`: both photons detected, BX before the gate, X after.
/// - `p2`: both detected, both before the gate.
/// - `p3`: both detected, both after the gate.
/// - `p4`/`p5`: only the BX photon detected, before/after the gate.
/// - `p6`/`p7`: only the X photon detected, before/after the gate.
/// - `p8`: no photon detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathProbs {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    pub p7: f64,
    pub p8: f64,
}

impl PathProbs {
    pub fn sum(&self) -> f64 {
        self.p1 + self.p2 + self.p3 + self.p4 + self.p5 + self.p6 + self.p7 + self.p8
    }

    pub fn as_array(&self) -> [f64; 8] {
        [self.p1, self.p2, self.p3, self.p4, self.p5, self.p6, self.p7, self.p8]
    }
}

/// Efficiency, purity and determinicity of one scheme at one operating point.
///
/// `purity` is `None` when no one-or-more-photon events exist (no signal) and
/// `determinicity` is `None` for schemes without a trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub efficiency: f64,
    pub purity: Option<f64>,
    pub determinicity: Option<f64>,
}

/// Heralded schemes that have a determinicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeraldScheme {
    Timed,
    Ash,
}

/// Result of [`solve_tgf_gate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TgfGate {
    pub t_f_ns: f64,
    pub efficiency: f64,
}

/// Ratio of biexciton to exciton quantum yield implied by the lifetimes:
/// `beta * tau_bx / tau_x`.
pub fn qy_ratio(tau_x_ns: f64, tau_bx_ns: f64, beta: f64) -> Result<f64> {
    if !(tau_x_ns > 0.0) || !(tau_bx_ns > 0.0) {
        return Err(Error::Domain(format!(
            "lifetimes must be positive, got tau_x={tau_x_ns}, tau_bx={tau_bx_ns}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(beta * tau_bx_ns / tau_x_ns)
}

/// Evaluate the eight emission-path probabilities at gate time `gate_ns`.
///
/// An infinite gate is allowed and gives the `T -> inf` limits. The rows sum
/// to 1 exactly for any parameters.
pub fn path_probabilities(p: &EmitterParams, gate_ns: f64) -> Result<PathProbs> {
    if gate_ns < 0.0 || gate_ns.is_nan() {
        return Err(Error::Domain(format!("gate time must be >= 0, got {gate_ns}")));
    }
    let (gx, gb) = (p.gamma_x(), p.gamma_bx());
    let aa = p.detected_x();
    let ab = p.detected_bx();
    let pair = aa * ab;

    // exp(-g*T) with the T -> inf limit handled explicitly.
    let ex = if gate_ns.is_finite() { (-gx * gate_ns).exp() } else { 0.0 };
    let eb = if gate_ns.is_finite() { (-gb * gate_ns).exp() } else { 0.0 };

    let (p1, p2) = if p.degenerate_lifetimes() {
        // Equal rates: the cascade arrival is Erlang-2 and the generic rows
        // have removable singularities.
        let gt = if gate_ns.is_finite() { gx * gate_ns } else { f64::INFINITY };
        let p1 = if gt.is_finite() { pair * gt * (-gt).exp() } else { 0.0 };
        let p2 = if gt.is_finite() { pair * (1.0 - (-gt).exp() * (1.0 + gt)) } else { pair };
        (p1, p2)
    } else {
        let w = gb / (gb - gx);
        let p1 = pair * w * (ex - eb);
        // gx/(gb - gx) = w - 1; this arrangement cancels exactly at T = 0.
        let p2 = pair * ((1.0 - w * ex) + (w - 1.0) * eb);
        (p1, p2)
    };
    let p3 = pair * eb;
    let p4 = ab * (1.0 - aa) * (1.0 - eb);
    let p5 = ab * (1.0 - aa) * eb;
    let p6 = aa * (1.0 - ab) * (1.0 - ex);
    let p7 = aa * (1.0 - ab) * ex;
    let p8 = (1.0 - aa) * (1.0 - ab);

    Ok(PathProbs { p1, p2, p3, p4, p5, p6, p7, p8 })
}

/// Efficiency and purity of the bare emitter with no purification applied.
///
/// `P1 = alpha*qy_x + alpha*qy_bx - 2*alpha^2*qy_x*qy_bx` is the exactly-one
/// photon probability and `P2 = alpha^2*qy_x*qy_bx` the two-photon
/// probability; purity is `P1 / (P1 + P2)`.
pub fn standalone_metrics(p: &EmitterParams) -> SchemeMetrics {
    let aa = p.detected_x();
    let ab = p.detected_bx();
    let p1 = aa + ab - 2.0 * aa * ab;
    let p2 = aa * ab;
    let purity = if p1 + p2 > 0.0 { Some(p1 / (p1 + p2)) } else { None };
    SchemeMetrics { efficiency: p1, purity, determinicity: None }
}

/// Gate time that maximises the TIMED efficiency:
/// `tau_x * ln(r) / (r - 1)` with `r = tau_x / tau_bx`, continuously extended
/// to `tau_x` at `r = 1`.
pub fn tc_opt(tau_x_ns: f64, tau_bx_ns: f64) -> Result<f64> {
    if !(tau_x_ns > 0.0) || !(tau_bx_ns > 0.0) {
        return Err(Error::Domain(format!(
            "lifetimes must be positive, got tau_x={tau_x_ns}, tau_bx={tau_bx_ns}"
        )));
    }
    let r = tau_x_ns / tau_bx_ns;
    if (r - 1.0).abs() < DEGENERATE_LIFETIME_TOL {
        Ok(tau_x_ns)
    } else {
        Ok(tau_x_ns * r.ln() / (r - 1.0))
    }
}

/// TIMED heralding efficiency at cutoff time `t_c_ns`:
///
/// `alpha^2 qy_x qy_bx * tau_x/(tau_x - tau_bx) * [exp(-T/tau_x) - exp(-T/tau_bx)]`
pub fn eta_timed(p: &EmitterParams, t_c_ns: f64) -> Result<f64> {
    if t_c_ns < 0.0 || t_c_ns.is_nan() {
        return Err(Error::Domain(format!("cutoff time must be >= 0, got {t_c_ns}")));
    }
    let pair = p.detected_x() * p.detected_bx();
    if p.degenerate_lifetimes() {
        let u = t_c_ns / p.tau_x_ns;
        return Ok(if u.is_finite() { pair * u * (-u).exp() } else { 0.0 });
    }
    if !t_c_ns.is_finite() {
        return Ok(0.0);
    }
    let w = p.tau_x_ns / (p.tau_x_ns - p.tau_bx_ns);
    Ok(pair * w * ((-t_c_ns / p.tau_x_ns).exp() - (-t_c_ns / p.tau_bx_ns).exp()))
}

/// ASH heralding efficiency at response time `t_r_ns`:
/// `alpha^2 qy_x qy_bx exp(-t_r/tau_x)`.
pub fn eta_ash(p: &EmitterParams, t_r_ns: f64) -> Result<f64> {
    if t_r_ns < 0.0 || t_r_ns.is_nan() {
        return Err(Error::Domain(format!("response time must be >= 0, got {t_r_ns}")));
    }
    let e = if t_r_ns.is_finite() { (-t_r_ns / p.tau_x_ns).exp() } else { 0.0 };
    Ok(p.detected_x() * p.detected_bx() * e)
}

/// Efficiency of heralding through a 50:50 beam splitter:
/// `alpha^2 qy_x qy_bx / 2`.
pub fn bs_herald_efficiency(p: &EmitterParams) -> f64 {
    p.detected_x() * p.detected_bx() / 2.0
}

/// Efficiency and purity of time-gated filtering with gate `t_f_ns`.
///
/// Efficiency is the probability of exactly one photon after the gate
/// (`P1 + P5 + P7`); purity normalises it by the one-or-two photon
/// probability after the gate. When everything has decayed (denominator
/// underflows to zero) the purity is reported at its limit of 1.
pub fn tgf_metrics(p: &EmitterParams, t_f_ns: f64) -> Result<SchemeMetrics> {
    let paths = path_probabilities(p, t_f_ns)?;
    let singles = paths.p1 + paths.p5 + paths.p7;
    let any = singles + paths.p3;
    let purity = if any > 0.0 { Some(singles / any) } else { Some(1.0) };
    Ok(SchemeMetrics { efficiency: singles, purity, determinicity: None })
}

/// Resolution of the TGF gate solve, as a fraction of `tau_x`.
const TGF_GATE_RESOLUTION: f64 = 1e-6;

/// Find the smallest gate time whose TGF purity reaches `s_target`, together
/// with the efficiency there. Bisection to a resolution of `1e-6 * tau_x`.
pub fn solve_tgf_gate(p: &EmitterParams, s_target: f64) -> Result<TgfGate> {
    if !(0.0..1.0).contains(&s_target) {
        return Err(Error::NoSolution(format!(
            "purity target must be in (0, 1), got {s_target}"
        )));
    }
    let purity_at = |t: f64| -> Result<f64> { Ok(tgf_metrics(p, t)?.purity.unwrap_or(1.0)) };

    if purity_at(0.0)? >= s_target {
        return Ok(TgfGate { t_f_ns: 0.0, efficiency: tgf_metrics(p, 0.0)?.efficiency });
    }

    // Expand until the target is bracketed. Purity is non-decreasing with a
    // limit of 1, so this terminates for any target below 1.
    let mut lo = 0.0;
    let mut hi = p.tau_x_ns;
    while purity_at(hi)? < s_target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 * p.tau_x_ns {
            return Err(Error::NoSolution(format!(
                "purity target {s_target} not reached at any finite gate"
            )));
        }
    }

    let resolution = TGF_GATE_RESOLUTION * p.tau_x_ns;
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if purity_at(mid)? >= s_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(TgfGate { t_f_ns: hi, efficiency: tgf_metrics(p, hi)?.efficiency })
}

/// Fraction of trigger events that are true heralds.
///
/// For TIMED the trigger is any photon before the cutoff, so
/// `D = P1 / (P1 + P2 + P4 + P6)` at `T = gate_ns`. For ASH any detected
/// photon triggers the switch and only pairs split by more than the response
/// time succeed; the denominator is the total probability of one or more
/// detected photons. Returns `None` when no trigger can occur.
pub fn determinicity(p: &EmitterParams, scheme: HeraldScheme, gate_ns: f64) -> Result<Option<f64>> {
    if gate_ns < 0.0 || gate_ns.is_nan() {
        return Err(Error::Domain(format!("gate time must be >= 0, got {gate_ns}")));
    }
    match scheme {
        HeraldScheme::Timed => {
            let paths = path_probabilities(p, gate_ns)?;
            let triggers = paths.p1 + paths.p2 + paths.p4 + paths.p6;
            Ok((triggers > 0.0).then(|| paths.p1 / triggers))
        }
        HeraldScheme::Ash => {
            let aa = p.detected_x();
            let ab = p.detected_bx();
            let p2s = eta_ash(p, gate_ns)?;
            // p2s + p2f + p1x + p1bx collapses to the one-or-more-photon
            // probability.
            let triggers = aa + ab - aa * ab;
            Ok((triggers > 0.0).then(|| p2s / triggers))
        }
    }
}

/// Single-photon purity of a heralded scheme in the presence of noise.
///
/// `S = 1 - qy_x qy_bx eta / (qy_x qy_bx + eta (qy_x + qy_bx))` with
/// `eta = eta_cn + eta_un` or just `eta_un` depending on whether the
/// correlated component has been filtered out. A vanishing denominator means
/// no heralds at all; the purity is then 1 by convention.
pub fn noise_adjusted_purity(p: &EmitterParams, n: &NoiseParams, include_correlated: bool) -> f64 {
    let eta = if include_correlated { n.eta_cn + n.eta_un } else { n.eta_un };
    let pair = p.qy_x * p.qy_bx;
    let denom = pair + eta * (p.qy_x + p.qy_bx);
    if denom > 0.0 {
        1.0 - pair * eta / denom
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn ideal() -> EmitterParams {
        EmitterParams::new(1.0, 1.0, 1.0, 0.25, 4.0, 1.0).unwrap()
    }

    fn nanocone() -> EmitterParams {
        // Plasmonic-nanocone coupled dot, unit collection.
        EmitterParams::new(0.61, 0.7, 1.6, 0.5, 4.0, 1.0).unwrap()
    }

    #[test]
    fn qy_ratio_cancels_lifetime_ratio() {
        assert_abs_diff_eq!(qy_ratio(1.0, 0.25, 4.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn qy_ratio_measured_dot() {
        let r = qy_ratio(1.0, 0.0673, 4.0).unwrap();
        assert_abs_diff_eq!(r, 0.269, epsilon = 5e-4);
    }

    #[test]
    fn qy_ratio_direct() {
        assert_relative_eq!(qy_ratio(1.6, 0.5, 4.0).unwrap(), 1.25, max_relative = 1e-15);
    }

    #[test]
    fn qy_ratio_rejects_bad_inputs() {
        assert!(qy_ratio(0.0, 0.25, 4.0).is_err());
        assert!(qy_ratio(1.0, -0.1, 4.0).is_err());
        assert!(qy_ratio(1.0, 0.25, 0.0).is_err());
    }

    #[test]
    fn paths_zero_gate() {
        let p = EmitterParams::new(0.5, 0.4, 1.0, 0.3, 4.0, 0.8).unwrap();
        let paths = path_probabilities(&p, 0.0).unwrap();
        let (aa, ab) = (p.detected_x(), p.detected_bx());
        assert_eq!(paths.p1, 0.0);
        assert_eq!(paths.p2, 0.0);
        assert_eq!(paths.p4, 0.0);
        assert_eq!(paths.p6, 0.0);
        assert_relative_eq!(paths.p3, aa * ab, max_relative = 1e-14);
        assert_relative_eq!(paths.p5, ab * (1.0 - aa), max_relative = 1e-14);
        assert_relative_eq!(paths.p7, aa * (1.0 - ab), max_relative = 1e-14);
        assert_relative_eq!(paths.p8, (1.0 - aa) * (1.0 - ab), max_relative = 1e-14);
    }

    #[test]
    fn paths_infinite_gate_ideal() {
        let paths = path_probabilities(&ideal(), f64::INFINITY).unwrap();
        assert_abs_diff_eq!(paths.p2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            paths.p1 + paths.p3 + paths.p4 + paths.p5 + paths.p6 + paths.p7 + paths.p8,
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn paths_split_probability_at_optimum() {
        let paths = path_probabilities(&ideal(), 0.462).unwrap();
        assert_abs_diff_eq!(paths.p1, 0.6298, epsilon = 5e-4);
    }

    #[test]
    fn paths_normalised() {
        let grid = [
            EmitterParams::new(0.3, 0.9, 2.0, 0.4, 4.0, 0.5).unwrap(),
            EmitterParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            EmitterParams::new(0.17, 0.05, 30.0, 2.0, 4.0, 0.088).unwrap(),
        ];
        for p in &grid {
            for gate in [0.0, 0.1, 0.5, 2.0, 17.0, 1e3] {
                let paths = path_probabilities(p, gate).unwrap();
                assert_abs_diff_eq!(paths.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn paths_negative_gate_rejected() {
        assert!(path_probabilities(&ideal(), -0.1).is_err());
    }

    #[test]
    fn standalone_no_biexciton_is_pure() {
        let p = EmitterParams::new(0.5, 0.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        let m = standalone_metrics(&p);
        assert_eq!(m.purity, Some(1.0));
        assert_relative_eq!(m.efficiency, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn standalone_perfect_cascade_is_impure() {
        let p = EmitterParams::new(1.0, 1.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        let m = standalone_metrics(&p);
        assert_eq!(m.efficiency, 0.0);
        assert_eq!(m.purity, Some(0.0));
    }

    #[test]
    fn standalone_half_yields() {
        let p = EmitterParams::new(0.5, 0.5, 1.0, 0.25, 4.0, 1.0).unwrap();
        let m = standalone_metrics(&p);
        assert_relative_eq!(m.efficiency, 0.5, max_relative = 1e-15);
        assert_relative_eq!(m.purity.unwrap(), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn standalone_dark_emitter_has_no_signal() {
        let p = EmitterParams::new(0.0, 0.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        assert_eq!(standalone_metrics(&p).purity, None);
    }

    #[test]
    fn tc_opt_ratio_four() {
        assert_abs_diff_eq!(tc_opt(1.0, 0.25).unwrap(), 4.0_f64.ln() / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tc_opt(1.0, 0.25).unwrap(), 0.462, epsilon = 1e-3);
    }

    #[test]
    fn tc_opt_equal_lifetimes_limit() {
        assert_abs_diff_eq!(tc_opt(1.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tc_opt_direct() {
        assert_abs_diff_eq!(tc_opt(1.6, 0.5).unwrap(), 1.6 * 3.2_f64.ln() / 2.2, epsilon = 1e-15);
        assert_abs_diff_eq!(tc_opt(1.6, 0.5).unwrap(), 0.846, epsilon = 1e-3);
    }

    #[test]
    fn tc_opt_rejects_nonpositive() {
        assert!(tc_opt(0.0, 1.0).is_err());
        assert!(tc_opt(1.0, -2.0).is_err());
    }

    #[test]
    fn eta_timed_zero_gate_is_zero() {
        assert_eq!(eta_timed(&ideal(), 0.0).unwrap(), 0.0);
        assert_eq!(eta_timed(&nanocone(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn eta_timed_ideal_optimum() {
        let p = ideal();
        let t = tc_opt(p.tau_x_ns, p.tau_bx_ns).unwrap();
        assert_abs_diff_eq!(eta_timed(&p, t).unwrap(), 0.6298, epsilon = 5e-4);
    }

    #[test]
    fn eta_timed_nanocone_optimum() {
        // Lifetimes implied by the yields through beta scaling.
        let p = EmitterParams::from_quantum_yields(0.61, 0.7, 1.6, 4.0, 1.0).unwrap();
        let t = tc_opt(p.tau_x_ns, p.tau_bx_ns).unwrap();
        assert_abs_diff_eq!(eta_timed(&p, t).unwrap(), 0.25, epsilon = 0.015);
    }

    #[test]
    fn eta_timed_matches_path_row_one() {
        for p in [ideal(), nanocone(), EmitterParams::new(0.4, 0.8, 2.0, 2.0, 1.0, 0.6).unwrap()] {
            for t in [0.0, 0.05, 0.31, 1.0, 4.4] {
                let eta = eta_timed(&p, t).unwrap();
                let row = path_probabilities(&p, t).unwrap().p1;
                assert_relative_eq!(eta, row, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn eta_ash_headline_values() {
        let p = EmitterParams::new(0.61, 0.7, 1.6, 0.5, 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(eta_ash(&p, 0.0).unwrap(), 0.427, epsilon = 1e-3);

        let m = EmitterParams::new(0.61, 0.7, 1.6, 0.5, 4.0, 0.72).unwrap();
        assert_abs_diff_eq!(eta_ash(&m, 0.17 * m.tau_x_ns).unwrap(), 0.187, epsilon = 5e-3);
    }

    #[test]
    fn eta_ash_limits() {
        let p = nanocone();
        assert_eq!(eta_ash(&p, f64::INFINITY).unwrap(), 0.0);
        assert!(eta_ash(&p, -1.0).is_err());
        // Strictly decreasing in the response time.
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = eta_ash(&p, 0.1 * i as f64).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn bs_efficiency_values() {
        assert_abs_diff_eq!(bs_herald_efficiency(&ideal()), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(bs_herald_efficiency(&nanocone()), 0.2135, epsilon = 1e-4);
        let dark = EmitterParams::new(0.9, 0.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        assert_eq!(bs_herald_efficiency(&dark), 0.0);
    }

    #[test]
    fn tgf_zero_gate_ideal() {
        let m = tgf_metrics(&ideal(), 0.0).unwrap();
        assert_eq!(m.efficiency, 0.0);
        assert_eq!(m.purity, Some(0.0));
    }

    #[test]
    fn tgf_purity_limit_at_huge_gate() {
        // Everything has decayed: efficiency zero, purity at its limit.
        let m = tgf_metrics(&ideal(), 1e6).unwrap();
        assert_eq!(m.efficiency, 0.0);
        assert_eq!(m.purity, Some(1.0));
    }

    #[test]
    fn solve_tgf_gate_ideal_high_purity() {
        // Closed-form check: at unit yields and r = 4 the target S = 0.995
        // reduces to x^3 = 0.02/3.005 with x = exp(-t_f/tau_x).
        let p = ideal();
        let gate = solve_tgf_gate(&p, 0.995).unwrap();
        let x: f64 = (0.02_f64 / 3.005).powf(1.0 / 3.0);
        assert_abs_diff_eq!(gate.t_f_ns, -x.ln(), epsilon = 1e-5);
        assert_abs_diff_eq!(gate.efficiency, 0.2492, epsilon = 5e-4);

        // Independent oracle: dense scan of tgf_metrics.
        let mut scan = None;
        for i in 0..200_000 {
            let t = i as f64 * 2e-5;
            if tgf_metrics(&p, t).unwrap().purity.unwrap() >= 0.995 {
                scan = Some(t);
                break;
            }
        }
        assert_abs_diff_eq!(gate.t_f_ns, scan.unwrap(), epsilon = 3e-5);
    }

    #[test]
    fn solve_tgf_gate_boundary_target() {
        let p = nanocone();
        let s0 = tgf_metrics(&p, 0.0).unwrap().purity.unwrap();
        let gate = solve_tgf_gate(&p, s0 + 1e-9).unwrap();
        assert!(gate.t_f_ns < 1e-3 * p.tau_x_ns);
        // Already-satisfied targets solve to a zero gate.
        let at_zero = solve_tgf_gate(&p, s0 / 2.0).unwrap();
        assert_eq!(at_zero.t_f_ns, 0.0);
    }

    #[test]
    fn solve_tgf_gate_rejects_unreachable() {
        assert!(solve_tgf_gate(&nanocone(), 1.0).is_err());
        assert!(solve_tgf_gate(&nanocone(), -0.2).is_err());
    }

    #[test]
    fn solve_tgf_gate_nanocone_with_collection() {
        // Yield-derived lifetimes reproduce the quoted trade-off.
        let p = EmitterParams::from_quantum_yields(0.61, 0.7, 1.6, 4.0, 0.72).unwrap();
        let gate = solve_tgf_gate(&p, 0.995).unwrap();
        assert_abs_diff_eq!(gate.efficiency, 0.089, epsilon = 0.01);
    }

    #[test]
    fn determinicity_ash_ideal_is_unity() {
        let d = determinicity(&ideal(), HeraldScheme::Ash, 0.0).unwrap().unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn determinicity_timed_ideal_optimum() {
        let p = ideal();
        let t = tc_opt(p.tau_x_ns, p.tau_bx_ns).unwrap();
        let d = determinicity(&p, HeraldScheme::Timed, t).unwrap().unwrap();
        assert_abs_diff_eq!(d, 0.748, epsilon = 5e-3);
    }

    #[test]
    fn determinicity_ash_no_biexciton() {
        let p = EmitterParams::new(0.5, 0.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        assert_eq!(determinicity(&p, HeraldScheme::Ash, 0.0).unwrap(), Some(0.0));
    }

    #[test]
    fn determinicity_dark_emitter_has_no_trigger() {
        let p = EmitterParams::new(0.0, 0.0, 1.0, 0.25, 4.0, 1.0).unwrap();
        assert_eq!(determinicity(&p, HeraldScheme::Ash, 0.0).unwrap(), None);
        assert_eq!(determinicity(&p, HeraldScheme::Timed, 1.0).unwrap(), None);
    }

    #[test]
    fn noise_purity_measured_dot() {
        let alpha = 0.088;
        let p = EmitterParams::new(0.1729, 0.0465, 30.0, 2.017, 4.0, alpha).unwrap();
        let n = NoiseParams { eta_cn: 1.4e-3 / alpha, tau_cn_ns: 0.3, eta_un: 4.4e-4 / alpha };
        assert_abs_diff_eq!(noise_adjusted_purity(&p, &n, true), 0.9867, epsilon = 5e-4);
        assert_abs_diff_eq!(noise_adjusted_purity(&p, &n, false), 0.996, epsilon = 5e-4);
    }

    #[test]
    fn noise_purity_clean_emitter() {
        assert_eq!(noise_adjusted_purity(&ideal(), &NoiseParams::none(), true), 1.0);
    }

    #[test]
    fn equal_lifetime_paths_match_nearby_ratio() {
        // The degenerate branch must agree with the generic formulas just
        // outside the switch-over.
        let exact = EmitterParams::new(0.8, 0.6, 1.0, 1.0, 1.0, 0.9).unwrap();
        let near = EmitterParams::new(0.8, 0.6, 1.0, 1.0 + 1e-7, 1.0, 0.9).unwrap();
        for gate in [0.1, 0.7, 2.3] {
            let a = path_probabilities(&exact, gate).unwrap();
            let b = path_probabilities(&near, gate).unwrap();
            assert_relative_eq!(a.p1, b.p1, max_relative = 1e-5);
            assert_relative_eq!(a.p2, b.p2, max_relative = 1e-5);
            assert_relative_eq!(
                eta_timed(&exact, gate).unwrap(),
                eta_timed(&near, gate).unwrap(),
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn from_lifetimes_keeps_beta_relation() {
        let p = EmitterParams::from_lifetimes(0.61, 1.6, 0.5, 4.0, 0.72).unwrap();
        let want = p.beta * p.tau_bx_ns / p.tau_x_ns;
        assert_relative_eq!(p.qy_bx / p.qy_x, want, max_relative = 1e-12);
    }
}

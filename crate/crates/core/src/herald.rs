//! Offline emulation of the purification schemes over recorded pulse groups.
//!
//! Each emulator walks the localized stream once, classifies every pulse into
//! trigger/success states for its scheme, counts signal photons of the
//! successful pulses and reports efficiency, purity and determinicity. The
//! purity follows `S = 1 - N2 / (alpha * N1)` with the two-signal count
//! photon-number corrected.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::DetectorConfig;
use crate::timetag::{correction_factors, count_multiplicities, unfold_counts, Localized};
use crate::{Error, Result};

/// Outcome of one scheme emulation at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldReport {
    pub scheme: String,
    /// Noise filter applied before everything else.
    pub t_f_ns: f64,
    /// TIMED cutoff, when applicable.
    pub t_c_ns: Option<f64>,
    /// ASH response time, when applicable.
    pub t_r_ns: Option<f64>,
    pub n_pulses: u64,
    /// Pulses that would fire the scheme's trigger.
    pub n_triggers: u64,
    /// Successful heralding events (for TGF: pulses with exactly one
    /// surviving count).
    pub n_success: u64,
    /// Success pulses with exactly one signal photon.
    pub n_signal_1: u64,
    /// Two-signal events after photon-number correction.
    pub n_signal_2_corrected: f64,
    /// Success pulses with three or more signal photons; counted into the
    /// two-signal bucket, this field flags that it happened.
    pub n_signal_many: u64,
    /// `n_success / n_pulses`.
    pub efficiency: f64,
    /// Efficiency with success counts photon-number corrected for
    /// multi-photon events collapsing on one detector.
    pub efficiency_corrected: f64,
    /// `1 - N2 / (alpha * N1)`; `None` when no one-signal events exist.
    pub purity: Option<f64>,
    /// `n_success / n_triggers`; `None` without triggers, and absent for
    /// schemes that have no trigger concept.
    pub determinicity: Option<f64>,
}

impl HeraldReport {
    fn new(scheme: &str, n_pulses: u64, t_f_ns: f64) -> Self {
        Self {
            scheme: scheme.into(),
            t_f_ns,
            t_c_ns: None,
            t_r_ns: None,
            n_pulses,
            n_triggers: 0,
            n_success: 0,
            n_signal_1: 0,
            n_signal_2_corrected: 0.0,
            n_signal_many: 0,
            efficiency: 0.0,
            efficiency_corrected: 0.0,
            purity: None,
            determinicity: None,
        }
    }
}

/// One scheme with its operating point; the unit of [`emulate`] and
/// [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SchemeConfig {
    Timed { t_c_ns: f64, t_f_ns: f64 },
    Ash { t_r_ns: f64, t_f_ns: f64 },
    Tgf { t_f_ns: f64 },
    BsHerald,
}

/// Which parameter a [`sweep`] varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// The scheme's own gate: `t_c` for TIMED, `t_r` for ASH, `t_f` for TGF.
    Gate,
    /// The noise filter `t_f`.
    Filter,
}

fn ns_to_ps(ns: f64) -> u64 {
    (ns * 1e3).round().max(0.0) as u64
}

/// Correction weights for success pulses by total photon multiplicity. Unit
/// weights when the detector model cannot collapse counts.
struct SuccessCorrection {
    c2: f64,
    c3: f64,
}

impl SuccessCorrection {
    fn for_detectors(d: &DetectorConfig) -> Self {
        if d.same_pulse_exclusive() {
            if let Ok(c) = correction_factors(d.r1, d.r2) {
                return Self { c2: c.c2, c3: c.c3 };
            }
        }
        Self { c2: 1.0, c3: 1.0 }
    }

    fn weight(&self, photons_in_pulse: usize) -> f64 {
        match photons_in_pulse {
            0 | 1 => 1.0,
            2 => self.c2,
            _ => self.c3,
        }
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// TIMED: photons up to `t_c` go to the idler port, later ones to the signal
/// port. A pulse succeeds when both ports see at least one photon.
pub fn emulate_timed(
    loc: &Localized,
    t_c_ns: f64,
    t_f_ns: f64,
    alpha: f64,
    d: &DetectorConfig,
) -> Result<HeraldReport> {
    validate_alpha(alpha)?;
    if !(t_c_ns > t_f_ns) || t_f_ns < 0.0 {
        return Err(Error::Config(format!(
            "need t_c > t_f >= 0, got t_c={t_c_ns}, t_f={t_f_ns}"
        )));
    }
    let t_f = ns_to_ps(t_f_ns);
    let t_c = ns_to_ps(t_c_ns);
    let corr = SuccessCorrection::for_detectors(d);

    let mut rep = HeraldReport::new("timed", loc.n_pulses, t_f_ns);
    rep.t_c_ns = Some(t_c_ns);
    let mut success_corrected = 0.0;

    for g in &loc.groups {
        let mut idler = 0usize;
        let mut signal = 0usize;
        for &(_, t) in &g.events {
            if t < t_f {
                continue;
            }
            if t <= t_c {
                idler += 1;
            } else {
                signal += 1;
            }
        }
        if idler > 0 {
            rep.n_triggers += 1;
        }
        if idler > 0 && signal > 0 {
            rep.n_success += 1;
            success_corrected += corr.weight(idler + signal);
            count_signal(&mut rep, &corr, signal);
        }
    }
    finish(&mut rep, alpha, success_corrected, true);
    Ok(rep)
}

/// ASH: the first surviving photon triggers the switch; photons later than
/// the trigger by more than the response time come out of the signal port.
pub fn emulate_ash(
    loc: &Localized,
    t_r_ns: f64,
    t_f_ns: f64,
    alpha: f64,
    d: &DetectorConfig,
) -> Result<HeraldReport> {
    validate_alpha(alpha)?;
    if t_r_ns < 0.0 || t_f_ns < 0.0 {
        return Err(Error::Config(format!(
            "need t_r >= 0 and t_f >= 0, got t_r={t_r_ns}, t_f={t_f_ns}"
        )));
    }
    let t_f = ns_to_ps(t_f_ns);
    let t_r = ns_to_ps(t_r_ns);
    let corr = SuccessCorrection::for_detectors(d);

    let mut rep = HeraldReport::new("ash", loc.n_pulses, t_f_ns);
    rep.t_r_ns = Some(t_r_ns);
    let mut success_corrected = 0.0;

    for g in &loc.groups {
        let mut kept = g.events.iter().map(|&(_, t)| t).filter(|&t| t >= t_f);
        let Some(trigger) = kept.next() else { continue };
        rep.n_triggers += 1;
        let open_from = trigger + t_r;
        let mut signal = 0usize;
        let mut total = 1usize;
        for t in kept {
            total += 1;
            if t > open_from {
                signal += 1;
            }
        }
        if signal > 0 {
            rep.n_success += 1;
            success_corrected += corr.weight(total);
            count_signal(&mut rep, &corr, signal);
        }
    }
    finish(&mut rep, alpha, success_corrected, true);
    Ok(rep)
}

/// TGF: photons before `t_f` are dumped; a pulse contributes to the source
/// when exactly one count survives. Multiplicities are photon-number
/// corrected before forming efficiency and purity.
pub fn emulate_tgf(
    loc: &Localized,
    t_f_ns: f64,
    alpha: f64,
    d: &DetectorConfig,
) -> Result<HeraldReport> {
    validate_alpha(alpha)?;
    if t_f_ns < 0.0 {
        return Err(Error::Config(format!("need t_f >= 0, got {t_f_ns}")));
    }
    let m = count_multiplicities(loc, t_f_ns);
    let u = unfold_counts(&m, d);

    let mut rep = HeraldReport::new("tgf", loc.n_pulses, t_f_ns);
    rep.n_triggers = m.n1 + m.n2 + m.n3 + m.n_more;
    rep.n_success = m.n1;
    rep.n_signal_1 = m.n1;
    rep.n_signal_2_corrected = u.n2;
    rep.n_signal_many = m.n_more;
    rep.efficiency = m.n1 as f64 / loc.n_pulses as f64;
    let n1 = u.n1.max(0.0);
    rep.efficiency_corrected = n1 / loc.n_pulses as f64;
    if m.n1 > 0 {
        let denom = n1 + u.n2 / alpha + u.n3 / (alpha * alpha);
        rep.purity = (denom > 0.0).then(|| n1 / denom);
    }
    Ok(rep)
}

/// Beam-splitter heralding: detector 1 is the idler port, detectors 2 and 3
/// together the signal port. A pulse succeeds when both ports fire.
pub fn emulate_bs_herald(
    loc: &Localized,
    alpha: f64,
    d: &DetectorConfig,
) -> Result<HeraldReport> {
    validate_alpha(alpha)?;
    let channels: std::collections::BTreeSet<u8> =
        loc.groups.iter().flat_map(|g| g.events.iter().map(|&(ch, _)| ch)).collect();
    if channels.len() < 2 {
        return Err(Error::SchemeMismatch(format!(
            "beam-splitter heralding needs photons on both splitter outputs, \
             stream uses channels {channels:?}"
        )));
    }

    // Pairs on the signal side split across detectors 2 and 3 with
    // probability 2 r2 (1 - r2).
    let signal_pair_correction = if d.same_pulse_exclusive() {
        let p = 2.0 * d.r2 * (1.0 - d.r2);
        if p > 0.0 {
            1.0 / p
        } else {
            1.0
        }
    } else {
        1.0
    };
    let corr = SuccessCorrection::for_detectors(d);

    let mut rep = HeraldReport::new("bs-herald", loc.n_pulses, 0.0);
    let mut success_corrected = 0.0;
    for g in &loc.groups {
        let idler = g.events.iter().filter(|&&(ch, _)| ch == 1).count();
        let signal = g.events.len() - idler;
        if idler > 0 {
            rep.n_triggers += 1;
        }
        if idler > 0 && signal > 0 {
            rep.n_success += 1;
            success_corrected += corr.weight(idler + signal);
            match signal {
                1 => rep.n_signal_1 += 1,
                2 => rep.n_signal_2_corrected += signal_pair_correction,
                _ => {
                    rep.n_signal_2_corrected += signal_pair_correction;
                    rep.n_signal_many += 1;
                }
            }
        }
    }
    finish(&mut rep, alpha, success_corrected, true);
    Ok(rep)
}

fn count_signal(rep: &mut HeraldReport, corr: &SuccessCorrection, signal: usize) {
    match signal {
        1 => rep.n_signal_1 += 1,
        2 => rep.n_signal_2_corrected += corr.c2,
        _ => {
            rep.n_signal_2_corrected += corr.c2;
            rep.n_signal_many += 1;
        }
    }
}

fn finish(rep: &mut HeraldReport, alpha: f64, success_corrected: f64, with_determinicity: bool) {
    let n = rep.n_pulses as f64;
    if n > 0.0 {
        rep.efficiency = rep.n_success as f64 / n;
        rep.efficiency_corrected = success_corrected / n;
    }
    if rep.n_signal_1 > 0 {
        rep.purity = Some(1.0 - rep.n_signal_2_corrected / (alpha * rep.n_signal_1 as f64));
    }
    if with_determinicity && rep.n_triggers > 0 {
        rep.determinicity = Some(rep.n_success as f64 / rep.n_triggers as f64);
    }
}

/// Run one scheme at its configured operating point.
pub fn emulate(
    loc: &Localized,
    scheme: &SchemeConfig,
    alpha: f64,
    d: &DetectorConfig,
) -> Result<HeraldReport> {
    match *scheme {
        SchemeConfig::Timed { t_c_ns, t_f_ns } => emulate_timed(loc, t_c_ns, t_f_ns, alpha, d),
        SchemeConfig::Ash { t_r_ns, t_f_ns } => emulate_ash(loc, t_r_ns, t_f_ns, alpha, d),
        SchemeConfig::Tgf { t_f_ns } => emulate_tgf(loc, t_f_ns, alpha, d),
        SchemeConfig::BsHerald => emulate_bs_herald(loc, alpha, d),
    }
}

/// Emulate a scheme once per grid value, varying the chosen axis. Reports
/// come back in grid order.
pub fn sweep(
    loc: &Localized,
    base: &SchemeConfig,
    axis: SweepAxis,
    values: &[f64],
    alpha: f64,
    d: &DetectorConfig,
) -> Result<Vec<HeraldReport>> {
    if values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let configs: Vec<SchemeConfig> =
        values.iter().map(|&v| with_axis(base, axis, v)).collect::<Result<_>>()?;
    configs
        .par_iter()
        .map(|cfg| emulate(loc, cfg, alpha, d))
        .collect()
}

fn with_axis(base: &SchemeConfig, axis: SweepAxis, value: f64) -> Result<SchemeConfig> {
    let mut cfg = *base;
    match (&mut cfg, axis) {
        (SchemeConfig::Timed { t_c_ns, .. }, SweepAxis::Gate) => *t_c_ns = value,
        (SchemeConfig::Ash { t_r_ns, .. }, SweepAxis::Gate) => *t_r_ns = value,
        (SchemeConfig::Tgf { t_f_ns }, SweepAxis::Gate | SweepAxis::Filter) => *t_f_ns = value,
        (SchemeConfig::Timed { t_f_ns, .. }, SweepAxis::Filter) => *t_f_ns = value,
        (SchemeConfig::Ash { t_f_ns, .. }, SweepAxis::Filter) => *t_f_ns = value,
        (SchemeConfig::BsHerald, _) => {
            return Err(Error::Config("beam-splitter heralding has no sweep axis".into()))
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetag::{EventStream, TagRecord};
    use approx::assert_abs_diff_eq;

    /// Build a localized stream from per-pulse photon lists (channel, ns).
    fn groups(period_ns: f64, pulses: &[&[(u8, f64)]]) -> Localized {
        let period = ns_to_ps(period_ns);
        let mut records = Vec::new();
        for (i, photons) in pulses.iter().enumerate() {
            let t0 = i as u64 * period;
            records.push(TagRecord { channel: 0, global_time_ps: t0 });
            for &(ch, ns) in *photons {
                records.push(TagRecord { channel: ch, global_time_ps: t0 + ns_to_ps(ns) });
            }
        }
        records.sort_by_key(|r| (r.global_time_ps, r.channel));
        EventStream { rep_period_ps: Some(period), records }.localize().unwrap()
    }

    fn ideal_det() -> DetectorConfig {
        DetectorConfig::ideal_single()
    }

    #[test]
    fn timed_empty_stream() {
        let loc = groups(500.0, &[&[], &[], &[]]);
        let rep = emulate_timed(&loc, 1.0, 0.0, 1.0, &ideal_det()).unwrap();
        assert_eq!((rep.n_triggers, rep.n_success), (0, 0));
        assert_eq!(rep.efficiency, 0.0);
        assert_eq!(rep.purity, None);
        assert_eq!(rep.determinicity, None);
    }

    #[test]
    fn timed_classifies_windows() {
        let loc = groups(
            500.0,
            &[
                &[(1, 0.2), (1, 2.0)], // idler + signal: success
                &[(1, 0.2)],           // idler only: trigger, no success
                &[(1, 2.0)],           // signal only: nothing
                &[(1, 0.1), (1, 0.3), (1, 2.0), (1, 3.0)], // two idler, two signal
            ],
        );
        let rep = emulate_timed(&loc, 1.0, 0.0, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_pulses, 4);
        assert_eq!(rep.n_triggers, 3);
        assert_eq!(rep.n_success, 2);
        assert_eq!(rep.n_signal_1, 1);
        assert_abs_diff_eq!(rep.n_signal_2_corrected, 1.0);
        assert_abs_diff_eq!(rep.efficiency, 0.5);
        assert_abs_diff_eq!(rep.determinicity.unwrap(), 2.0 / 3.0);
        // One one-signal and one two-signal event at alpha = 1.
        assert_abs_diff_eq!(rep.purity.unwrap(), 0.0);
    }

    #[test]
    fn timed_filter_removes_early_triggers() {
        let loc = groups(500.0, &[&[(1, 0.1), (1, 2.0)]]);
        let rep = emulate_timed(&loc, 1.0, 0.3, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_triggers, 0);
        assert_eq!(rep.n_success, 0);
    }

    #[test]
    fn timed_rejects_bad_windows() {
        let loc = groups(500.0, &[&[]]);
        assert!(emulate_timed(&loc, 0.2, 0.3, 1.0, &ideal_det()).is_err());
        assert!(emulate_timed(&loc, 1.0, -0.1, 1.0, &ideal_det()).is_err());
    }

    #[test]
    fn ash_trigger_and_response_window() {
        let loc = groups(
            500.0,
            &[
                &[(1, 0.5), (1, 2.0)], // delay 1.5 > 1.0: success
                &[(1, 0.5), (1, 1.2)], // delay 0.7 < 1.0: fail
                &[(1, 0.5)],           // lone trigger
            ],
        );
        let rep = emulate_ash(&loc, 1.0, 0.0, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_triggers, 3);
        assert_eq!(rep.n_success, 1);
        assert_eq!(rep.n_signal_1, 1);
        assert_eq!(rep.purity, Some(1.0));
        assert_abs_diff_eq!(rep.determinicity.unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn ash_earliest_survivor_is_trigger() {
        // With the filter on, the 0.1 ns photon is gone and the 0.5 ns
        // photon becomes the trigger.
        let loc = groups(500.0, &[&[(1, 0.1), (1, 0.5), (1, 3.0)]]);
        let rep = emulate_ash(&loc, 1.0, 0.3, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_success, 1);
        assert_eq!(rep.n_signal_1, 1);
    }

    #[test]
    fn tgf_counts_singles() {
        let loc = groups(
            500.0,
            &[
                &[(1, 0.2), (1, 2.0)], // pair: both survive t_f = 0
                &[(1, 2.0)],           // single
                &[],
            ],
        );
        let rep = emulate_tgf(&loc, 0.0, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_success, 1);
        assert_abs_diff_eq!(rep.efficiency, 1.0 / 3.0);
        // One single and one pair: purity 1/(1+1) at alpha = 1.
        assert_abs_diff_eq!(rep.purity.unwrap(), 0.5);
    }

    #[test]
    fn tgf_gate_past_last_photon_is_no_signal() {
        let loc = groups(500.0, &[&[(1, 0.2)], &[(1, 1.0)]]);
        let rep = emulate_tgf(&loc, 10.0, 1.0, &ideal_det()).unwrap();
        assert_eq!(rep.n_success, 0);
        assert_eq!(rep.efficiency, 0.0);
        assert_eq!(rep.purity, None);
    }

    #[test]
    fn bs_herald_requires_two_channels() {
        let loc = groups(500.0, &[&[(1, 0.2), (1, 2.0)]]);
        assert!(matches!(
            emulate_bs_herald(&loc, 1.0, &DetectorConfig::default()),
            Err(Error::SchemeMismatch(_))
        ));
    }

    #[test]
    fn bs_herald_counts_cross_port_pairs() {
        let loc = groups(
            500.0,
            &[
                &[(1, 0.2), (2, 2.0)], // idler + signal
                &[(2, 0.2), (3, 2.0)], // signal only
                &[(1, 0.2)],           // idler only
            ],
        );
        let rep = emulate_bs_herald(&loc, 1.0, &DetectorConfig::default()).unwrap();
        assert_eq!(rep.n_triggers, 2);
        assert_eq!(rep.n_success, 1);
        assert_abs_diff_eq!(rep.efficiency, 1.0 / 3.0);
    }

    #[test]
    fn sweep_single_point_matches_direct_call() {
        let loc = groups(500.0, &[&[(1, 0.2), (1, 2.0)], &[(1, 0.4)]]);
        let base = SchemeConfig::Timed { t_c_ns: 1.0, t_f_ns: 0.0 };
        let swept = sweep(&loc, &base, SweepAxis::Gate, &[1.0], 1.0, &ideal_det()).unwrap();
        let direct = emulate_timed(&loc, 1.0, 0.0, 1.0, &ideal_det()).unwrap();
        assert_eq!(swept, vec![direct]);
    }

    #[test]
    fn sweep_preserves_grid_order() {
        let loc = groups(500.0, &[&[(1, 0.2), (1, 2.0)]]);
        let base = SchemeConfig::Ash { t_r_ns: 0.0, t_f_ns: 0.0 };
        let grid = [0.0, 0.5, 1.0, 2.5];
        let reports = sweep(&loc, &base, SweepAxis::Gate, &grid, 1.0, &ideal_det()).unwrap();
        let got: Vec<f64> = reports.iter().map(|r| r.t_r_ns.unwrap()).collect();
        assert_eq!(got, grid);
        assert!(sweep(&loc, &base, SweepAxis::Gate, &[], 1.0, &ideal_det()).is_err());
    }

    #[test]
    fn counts_never_exceed_pulses() {
        let loc = groups(
            500.0,
            &[&[(1, 0.2), (1, 2.0)], &[(1, 0.4)], &[(1, 5.0)], &[], &[(1, 0.1), (1, 9.0)]],
        );
        for scheme in [
            SchemeConfig::Timed { t_c_ns: 1.0, t_f_ns: 0.0 },
            SchemeConfig::Ash { t_r_ns: 0.5, t_f_ns: 0.0 },
            SchemeConfig::Tgf { t_f_ns: 0.5 },
        ] {
            let rep = emulate(&loc, &scheme, 1.0, &ideal_det()).unwrap();
            assert!(rep.n_success <= rep.n_triggers);
            assert!(rep.n_triggers <= rep.n_pulses);
        }
    }
}

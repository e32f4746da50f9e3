//! Response-time budgeting for active switching and single-photon rate
//! projections across schemes.

use serde::{Deserialize, Serialize};

use crate::emitter::{self, EmitterParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Snspd,
    Spad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    OnChip,
    FreeSpace,
}

/// Component times contributing to the switch response, all in ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub detector_latency_ps: f64,
    pub detector_jitter_ps: f64,
    pub latch_delay_ps: f64,
    pub modulator_rise_ps: f64,
    pub propagation_ps: f64,
}

impl HardwareConfig {
    /// Budget for a detector technology and signal-path layout. The latch is
    /// two cascaded NOR gates, the switch a fast electro-optic modulator.
    pub fn preset(detector: DetectorKind, layout: Layout) -> Self {
        let (detector_latency_ps, detector_jitter_ps) = match detector {
            DetectorKind::Snspd => (50.0, 15.0),
            DetectorKind::Spad => (2000.0, 50.0),
        };
        let propagation_ps = match layout {
            Layout::OnChip => 0.0,
            Layout::FreeSpace => 500.0,
        };
        Self {
            detector_latency_ps,
            detector_jitter_ps,
            latch_delay_ps: 185.0,
            modulator_rise_ps: 15.0,
            propagation_ps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detector_latency_ps", self.detector_latency_ps),
            ("detector_jitter_ps", self.detector_jitter_ps),
            ("latch_delay_ps", self.latch_delay_ps),
            ("modulator_rise_ps", self.modulator_rise_ps),
            ("propagation_ps", self.propagation_ps),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Total response time: the plain sum of all component times, jitter
/// included as a worst-case offset.
pub fn response_time_ps(cfg: &HardwareConfig) -> f64 {
    cfg.detector_latency_ps
        + cfg.detector_jitter_ps
        + cfg.latch_delay_ps
        + cfg.modulator_rise_ps
        + cfg.propagation_ps
}

/// Operating point used by [`rate_projection`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SchemeOp {
    /// Active switching at a given response time.
    Ash { response_ns: f64 },
    /// Passive heralding at the optimal cutoff.
    Timed,
    /// Gated filtering at the gate reaching the target purity.
    Tgf { s_target: f64 },
    /// Heralding through a 50:50 splitter.
    BsHerald,
}

/// Single-photon rate of a scheme: repetition rate times its efficiency at
/// the scheme's operating point.
pub fn rate_projection(p: &EmitterParams, op: &SchemeOp, rep_rate_hz: f64) -> Result<f64> {
    if !(rep_rate_hz > 0.0) || !rep_rate_hz.is_finite() {
        return Err(Error::Config(format!("rep rate must be > 0, got {rep_rate_hz}")));
    }
    let eta = match *op {
        SchemeOp::Ash { response_ns } => emitter::eta_ash(p, response_ns)?,
        SchemeOp::Timed => {
            let t = emitter::tc_opt(p.tau_x_ns, p.tau_bx_ns)?;
            emitter::eta_timed(p, t)?
        }
        SchemeOp::Tgf { s_target } => emitter::solve_tgf_gate(p, s_target)?.efficiency,
        SchemeOp::BsHerald => emitter::bs_herald_efficiency(p),
    };
    Ok(rep_rate_hz * eta)
}

/// One cell of the ASH-versus-TGF map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceCell {
    pub qy_x: f64,
    pub qy_bx: f64,
    pub eta_ash: f64,
    /// `None` when the purity target is unreachable for this cell.
    pub eta_tgf: Option<f64>,
    pub difference: Option<f64>,
}

/// Efficiency difference between instantaneous active switching and gated
/// filtering at the target purity, over a quantum-yield grid. Lifetimes are
/// derived from the yields through beta scaling, which makes every cell
/// independent of the absolute time scale.
pub fn scheme_difference_map(
    qy_x_grid: &[f64],
    qy_bx_grid: &[f64],
    s_target: f64,
    alpha: f64,
    beta: f64,
) -> Result<Vec<DifferenceCell>> {
    if qy_x_grid.is_empty() || qy_bx_grid.is_empty() {
        return Err(Error::Config("yield grid is empty".into()));
    }
    let mut cells = Vec::with_capacity(qy_x_grid.len() * qy_bx_grid.len());
    for &qy_x in qy_x_grid {
        for &qy_bx in qy_bx_grid {
            let p = EmitterParams::from_quantum_yields(qy_x, qy_bx, 1.0, beta, alpha)?;
            let eta_ash = emitter::eta_ash(&p, 0.0)?;
            let eta_tgf = emitter::solve_tgf_gate(&p, s_target).ok().map(|g| g.efficiency);
            cells.push(DifferenceCell {
                qy_x,
                qy_bx,
                eta_ash,
                eta_tgf,
                difference: eta_tgf.map(|t| eta_ash - t),
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub tau_x_ns: f64,
    pub scheme: String,
    /// Hardware configuration label, for the active scheme.
    pub config: Option<String>,
    pub rate_hz: f64,
}

/// Exciton lifetime at which active switching starts to beat another scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub config: String,
    pub other_scheme: String,
    pub tau_x_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurves {
    pub points: Vec<RatePoint>,
    pub crossovers: Vec<Crossover>,
}

/// Single-photon rates versus exciton lifetime.
///
/// The biexciton lifetime scales with the exciton lifetime keeping the
/// template's ratio, and the excitation rate tracks the decay as
/// `1 / (3 tau_x)`. Active switching is evaluated once per hardware budget;
/// the crossover lifetimes against the passive schemes are interpolated from
/// neighbouring grid points.
pub fn rate_vs_lifetime_curve(
    template: &EmitterParams,
    tau_x_grid_ns: &[f64],
    configs: &[(String, HardwareConfig)],
    s_target: f64,
) -> Result<RateCurves> {
    if tau_x_grid_ns.is_empty() {
        return Err(Error::Config("lifetime grid is empty".into()));
    }
    let ratio = template.tau_bx_ns / template.tau_x_ns;
    let mut points = Vec::new();
    // (config, other scheme) -> rate differences along the grid
    let mut diffs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); configs.len() * 2];

    for &tau_x in tau_x_grid_ns {
        if !(tau_x > 0.0) {
            return Err(Error::Config(format!("lifetimes must be positive, got {tau_x}")));
        }
        let p = EmitterParams::new(
            template.qy_x,
            template.qy_bx,
            tau_x,
            tau_x * ratio,
            template.beta,
            template.alpha,
        )?;
        let rep_rate_hz = 1e9 / (3.0 * tau_x);

        let timed = rate_projection(&p, &SchemeOp::Timed, rep_rate_hz)?;
        let tgf = rate_projection(&p, &SchemeOp::Tgf { s_target }, rep_rate_hz)?;
        points.push(RatePoint {
            tau_x_ns: tau_x,
            scheme: "timed".into(),
            config: None,
            rate_hz: timed,
        });
        points.push(RatePoint { tau_x_ns: tau_x, scheme: "tgf".into(), config: None, rate_hz: tgf });

        for (ci, (label, cfg)) in configs.iter().enumerate() {
            let response_ns = response_time_ps(cfg) * 1e-3;
            let ash = rate_projection(&p, &SchemeOp::Ash { response_ns }, rep_rate_hz)?;
            points.push(RatePoint {
                tau_x_ns: tau_x,
                scheme: "ash".into(),
                config: Some(label.clone()),
                rate_hz: ash,
            });
            diffs[2 * ci].push((tau_x, ash - timed));
            diffs[2 * ci + 1].push((tau_x, ash - tgf));
        }
    }

    let mut crossovers = Vec::new();
    for (ci, (label, _)) in configs.iter().enumerate() {
        for (d, other) in [(2 * ci, "timed"), (2 * ci + 1, "tgf")] {
            for w in diffs[d].windows(2) {
                let (t0, d0) = w[0];
                let (t1, d1) = w[1];
                if d0 == 0.0 || d0.signum() == d1.signum() {
                    continue;
                }
                let tau = t0 + (t1 - t0) * d0 / (d0 - d1);
                crossovers.push(Crossover {
                    config: label.clone(),
                    other_scheme: other.into(),
                    tau_x_ns: tau,
                });
            }
        }
    }

    Ok(RateCurves { points, crossovers })
}

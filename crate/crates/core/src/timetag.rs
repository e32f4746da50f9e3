//! Time-tag stream I/O, pulse grouping, local-time histograms and the
//! photon-number correction for multi-detector counting.
//!
//! The native container ("TTS1") is a 16-byte header followed by packed
//! 9-byte records. A CSV twin format with columns `channel,global_time_ps`
//! and one header line is accepted wherever TTS1 is; files are dispatched on
//! extension. Channel 0 carries the excitation-pulse sync, channels 1 to 3
//! the detectors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::DetectorConfig;
use crate::{Error, Result};

pub const TTS1_MAGIC: &[u8; 4] = b"TTS1";
pub const TTS1_VERSION: u16 = 1;
const HEADER_LEN: u64 = 16;
const RECORD_LEN: u64 = 9;

/// One detector or sync count: which channel fired and when, in integer
/// picoseconds since acquisition start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub channel: u8,
    pub global_time_ps: u64,
}

/// A full acquisition: the excitation period (when known) and the records in
/// time order, ties broken by channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub rep_period_ps: Option<u64>,
    pub records: Vec<TagRecord>,
}

/// Photon events of one excitation pulse. Local times are measured from the
/// nearest preceding sync; events are sorted by local time, ties by channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulseGroup {
    pub pulse_index: u64,
    /// `(channel, local_time_ps)` pairs, channels 1 to 3 only.
    pub events: Vec<(u8, u64)>,
}

/// Result of [`localize`]: only pulses that carry photons are materialised,
/// the total pulse count is kept separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Localized {
    pub n_pulses: u64,
    pub rep_period_ps: Option<u64>,
    pub groups: Vec<PulseGroup>,
    /// Photons arriving before the first sync have no pulse identity and are
    /// dropped; this counts them.
    pub dropped_before_first_sync: u64,
}

/// Local-time histogram over all detector channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: u64,
    pub origin_ps: u64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Center of bin `i` in nanoseconds.
    pub fn bin_center_ns(&self, i: usize) -> f64 {
        (self.origin_ps + self.bin_width_ps * i as u64) as f64 * 1e-3
            + 0.5e-3 * self.bin_width_ps as f64
    }
}

/// Multipliers recovering true pair and triple counts from counts measured
/// behind the two-splitter tree, where same-detector photons within a pulse
/// collapse into one count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactors {
    pub c2: f64,
    pub c3: f64,
}

/// `c2 = 1 / P_diff(2)` and `c3 = 1 / P_diff(3)` for first-splitter
/// reflectivity `r1` and second-splitter reflectivity `r2`.
pub fn correction_factors(r1: f64, r2: f64) -> Result<CorrectionFactors> {
    for (name, r) in [("r1", r1), ("r2", r2)] {
        if !(0.0..=1.0).contains(&r) || !r.is_finite() {
            return Err(Error::Config(format!("{name} must be in [0, 1], got {r}")));
        }
        if r == 0.0 || r == 1.0 {
            return Err(Error::DegenerateSplitter(format!(
                "{name} = {r} sends all photons one way; correction undefined"
            )));
        }
    }
    let p_diff2 = 2.0 * r1 * (1.0 - r1) + (1.0 - r1).powi(2) * 2.0 * r2 * (1.0 - r2);
    let p_diff3 = 6.0 * r1 * r2 * (1.0 - r1).powi(2) * (1.0 - r2);
    Ok(CorrectionFactors { c2: 1.0 / p_diff2, c3: 1.0 / p_diff3 })
}

fn ns_to_ps(ns: f64) -> u64 {
    (ns * 1e3).round().max(0.0) as u64
}

// ---------------------------------------------------------------------------
// TTS1 binary format
// ---------------------------------------------------------------------------

pub fn write_tts<W: Write>(stream: &EventStream, mut w: W) -> Result<()> {
    w.write_all(TTS1_MAGIC)?;
    w.write_all(&TTS1_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&stream.rep_period_ps.unwrap_or(0).to_le_bytes())?;
    for rec in &stream.records {
        w.write_all(&[rec.channel])?;
        w.write_all(&rec.global_time_ps.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tts<R: Read>(mut r: R) -> Result<EventStream> {
    let mut header = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut header).map_err(|e| Error::Parse {
        offset: 0,
        message: format!("header truncated: {e}"),
    })?;
    if &header[0..4] != TTS1_MAGIC {
        return Err(Error::Parse { offset: 0, message: "bad magic, expected TTS1".into() });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TTS1_VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let rep_period_ps = u64::from_le_bytes(header[8..16].try_into().unwrap());

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() as u64 % RECORD_LEN != 0 {
        return Err(Error::Parse {
            offset: HEADER_LEN + (body.len() as u64 / RECORD_LEN) * RECORD_LEN,
            message: "truncated record at end of stream".into(),
        });
    }

    let n = body.len() as u64 / RECORD_LEN;
    let mut records = Vec::with_capacity(n as usize);
    let mut prev: Option<TagRecord> = None;
    for i in 0..n {
        let at = (i * RECORD_LEN) as usize;
        let channel = body[at];
        let global_time_ps = u64::from_le_bytes(body[at + 1..at + 9].try_into().unwrap());
        let offset = HEADER_LEN + i * RECORD_LEN;
        if channel > 3 {
            return Err(Error::Parse {
                offset,
                message: format!("unknown channel {channel} in record {i}"),
            });
        }
        let rec = TagRecord { channel, global_time_ps };
        if let Some(p) = prev {
            let ordered = rec.global_time_ps > p.global_time_ps
                || (rec.global_time_ps == p.global_time_ps && rec.channel >= p.channel);
            if !ordered {
                return Err(Error::Parse {
                    offset,
                    message: format!(
                        "record {i} out of order: t={} ch={} after t={} ch={}",
                        rec.global_time_ps, rec.channel, p.global_time_ps, p.channel
                    ),
                });
            }
        }
        prev = Some(rec);
        records.push(rec);
    }

    let rep_period_ps = (rep_period_ps > 0).then_some(rep_period_ps);
    Ok(EventStream { rep_period_ps, records })
}

// ---------------------------------------------------------------------------
// CSV twin format
// ---------------------------------------------------------------------------

pub fn write_csv<W: Write>(stream: &EventStream, mut w: W) -> Result<()> {
    writeln!(w, "channel,global_time_ps")?;
    for rec in &stream.records {
        writeln!(w, "{},{}", rec.channel, rec.global_time_ps)?;
    }
    Ok(())
}

/// Read the CSV twin. The excitation period is not part of this format, so
/// the result carries `rep_period_ps = None`. Parse errors report the line
/// number in `offset`.
pub fn read_csv<R: Read>(mut r: R) -> Result<EventStream> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "channel,global_time_ps" => {}
        _ => {
            return Err(Error::Parse {
                offset: 1,
                message: "expected header line 'channel,global_time_ps'".into(),
            })
        }
    }

    let mut records = Vec::new();
    let mut prev: Option<TagRecord> = None;
    for (idx, line) in lines {
        let lineno = idx as u64 + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (ch, t) = match (parts.next(), parts.next(), parts.next()) {
            (Some(ch), Some(t), None) => (ch.trim(), t.trim()),
            _ => {
                return Err(Error::Parse {
                    offset: lineno,
                    message: "expected two comma-separated fields".into(),
                })
            }
        };
        let channel: u8 = ch.parse().map_err(|_| Error::Parse {
            offset: lineno,
            message: format!("bad channel '{ch}'"),
        })?;
        if channel > 3 {
            return Err(Error::Parse {
                offset: lineno,
                message: format!("unknown channel {channel}"),
            });
        }
        let global_time_ps: u64 = t.parse().map_err(|_| Error::Parse {
            offset: lineno,
            message: format!("bad timestamp '{t}'"),
        })?;
        let rec = TagRecord { channel, global_time_ps };
        if let Some(p) = prev {
            let ordered = rec.global_time_ps > p.global_time_ps
                || (rec.global_time_ps == p.global_time_ps && rec.channel >= p.channel);
            if !ordered {
                return Err(Error::Parse {
                    offset: lineno,
                    message: "record out of order".into(),
                });
            }
        }
        prev = Some(rec);
        records.push(rec);
    }
    Ok(EventStream { rep_period_ps: None, records })
}

/// Read a stream file, picking the format from the extension (`.csv` is the
/// CSV twin, everything else TTS1).
pub fn read_stream_path(path: &Path) -> Result<EventStream> {
    let f = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(f)
    } else {
        read_tts(f)
    }
}

/// Write a stream file, picking the format from the extension.
pub fn write_stream_path(stream: &EventStream, path: &Path) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv(stream, f)
    } else {
        write_tts(stream, f)
    }
}

// ---------------------------------------------------------------------------
// Pulse grouping
// ---------------------------------------------------------------------------

/// Assign every photon tag to the nearest preceding excitation pulse.
///
/// Pulses come from channel-0 sync tags when present; otherwise
/// `rep_period_ps` must be given and a regular sync grid starting at zero is
/// assumed. The pulse count includes trailing photon-free pulses only up to
/// the last sync (or last record for a synthetic grid).
pub fn localize(records: &[TagRecord], rep_period_ps: Option<u64>) -> Result<Localized> {
    let has_sync = records.iter().any(|r| r.channel == 0);
    if !has_sync && rep_period_ps.is_none() {
        return Err(Error::Config(
            "stream has no sync tags and no rep period was supplied".into(),
        ));
    }

    let mut groups: Vec<PulseGroup> = Vec::new();
    let mut dropped = 0u64;
    let mut n_pulses = 0u64;

    let push_event = |pulse_index: u64, channel: u8, local: u64, groups: &mut Vec<PulseGroup>| {
        match groups.last_mut() {
            Some(g) if g.pulse_index == pulse_index => g.events.push((channel, local)),
            _ => groups.push(PulseGroup { pulse_index, events: vec![(channel, local)] }),
        }
    };

    if has_sync {
        let mut current_sync: Option<(u64, u64)> = None; // (pulse index, sync time)
        for rec in records {
            if rec.channel == 0 {
                let idx = n_pulses;
                n_pulses += 1;
                current_sync = Some((idx, rec.global_time_ps));
            } else {
                match current_sync {
                    None => dropped += 1,
                    Some((idx, t0)) => {
                        push_event(idx, rec.channel, rec.global_time_ps - t0, &mut groups)
                    }
                }
            }
        }
    } else {
        let period = rep_period_ps.unwrap();
        if period == 0 {
            return Err(Error::Config("rep period must be positive".into()));
        }
        for rec in records {
            let idx = rec.global_time_ps / period;
            n_pulses = n_pulses.max(idx + 1);
            push_event(idx, rec.channel, rec.global_time_ps % period, &mut groups);
        }
    }

    // Record order only guarantees global-time order; within a group ties
    // between channels may still be unsorted relative to local-time order.
    for g in &mut groups {
        g.events.sort_unstable_by_key(|&(ch, t)| (t, ch));
    }

    Ok(Localized { n_pulses, rep_period_ps, groups, dropped_before_first_sync: dropped })
}

impl EventStream {
    pub fn localize(&self) -> Result<Localized> {
        localize(&self.records, self.rep_period_ps)
    }
}

/// Histogram of photon local times over all detector channels.
pub fn lifetime_histogram(loc: &Localized, bin_width_ps: u64) -> Result<Histogram> {
    if bin_width_ps == 0 {
        return Err(Error::Config("bin width must be positive".into()));
    }
    let span = match loc.rep_period_ps {
        Some(p) => p,
        None => loc
            .groups
            .iter()
            .flat_map(|g| g.events.iter().map(|&(_, t)| t + 1))
            .max()
            .unwrap_or(bin_width_ps),
    };
    let n_bins = span.div_ceil(bin_width_ps) as usize;
    let mut counts = vec![0u64; n_bins.max(1)];
    let mut total = 0u64;
    for g in &loc.groups {
        for &(_, local) in &g.events {
            let bin = (local / bin_width_ps) as usize;
            let bin = bin.min(counts.len() - 1);
            counts[bin] += 1;
            total += 1;
        }
    }
    Ok(Histogram { bin_width_ps, origin_ps: 0, counts, total })
}

// ---------------------------------------------------------------------------
// Photon-number accounting
// ---------------------------------------------------------------------------

/// Raw per-pulse photon multiplicities after a local-time filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MultiplicityCounts {
    pub n_pulses: u64,
    /// Pulses with exactly 1, 2, 3 surviving counts.
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    /// Pulses with more than three counts; folded into the triple bucket by
    /// consumers, with this field as the warning flag.
    pub n_more: u64,
}

/// Count per-pulse multiplicities, keeping only events with
/// `local_time >= t_f`.
pub fn count_multiplicities(loc: &Localized, t_f_ns: f64) -> MultiplicityCounts {
    let t_f_ps = ns_to_ps(t_f_ns);
    let mut m = MultiplicityCounts { n_pulses: loc.n_pulses, ..Default::default() };
    for g in &loc.groups {
        let k = g.events.iter().filter(|&&(_, t)| t >= t_f_ps).count();
        match k {
            0 => {}
            1 => m.n1 += 1,
            2 => m.n2 += 1,
            3 => m.n3 += 1,
            _ => m.n_more += 1,
        }
    }
    m
}

/// True event counts estimated from measured multiplicities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldedCounts {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

/// Invert the detector-collapse map for up to three photons.
///
/// Behind the splitter tree with same-pulse exclusivity, a true k-photon
/// event is measured at multiplicity j <= k with fixed probabilities; this
/// solves the resulting triangular system. True triples are `c3 * N3m`,
/// true pairs get the three-photon leakage into two-detector events
/// subtracted before the `c2` scaling, and collapsed multi-photon events are
/// removed from the singles. Identity when the detector model cannot collapse
/// counts (zero dead time) or when a degenerate splitter leaves no way to
/// estimate the collapse.
pub fn unfold_counts(m: &MultiplicityCounts, d: &DetectorConfig) -> UnfoldedCounts {
    let raw = UnfoldedCounts {
        n1: m.n1 as f64,
        n2: m.n2 as f64,
        n3: (m.n3 + m.n_more) as f64,
    };
    if !d.same_pulse_exclusive() {
        return raw;
    }
    let Ok(q) = d.channel_probabilities() else { return raw };
    let [q1, q2, q3] = q;
    let same2: f64 = q1 * q1 + q2 * q2 + q3 * q3;
    let diff2 = 1.0 - same2;
    let diff3 = 6.0 * q1 * q2 * q3;
    let same3 = q1.powi(3) + q2.powi(3) + q3.powi(3);
    let two_of3 = 1.0 - diff3 - same3;
    if diff2 <= 0.0 || diff3 <= 0.0 {
        return raw;
    }

    let n3 = raw.n3 / diff3;
    let n2 = (raw.n2 - two_of3 * n3) / diff2;
    let n1 = raw.n1 - same2 * n2 - same3 * n3;
    UnfoldedCounts { n1, n2, n3 }
}

/// Single-photon purity of the raw stream after a local-time filter:
/// `N1 / (N1 + N2/alpha + N3/alpha^2)` with photon-number-corrected counts.
/// `None` when there are no single-photon events to compare against.
pub fn raw_purity(
    loc: &Localized,
    alpha: f64,
    d: &DetectorConfig,
    t_f_ns: f64,
) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let m = count_multiplicities(loc, t_f_ns);
    if m.n1 == 0 {
        return Ok(None);
    }
    let u = unfold_counts(&m, d);
    let n1 = u.n1.max(0.0);
    let denom = n1 + u.n2 / alpha + u.n3 / (alpha * alpha);
    Ok((denom > 0.0).then(|| n1 / denom))
}

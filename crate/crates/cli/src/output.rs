//! Table output in CSV and JSON. Floats are printed with the shortest
//! representation that round-trips, so CSV and JSON carry identical values.

use std::io::Write;

use hsps_core::herald::HeraldReport;
use hsps_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Emit herald reports, optionally with a model-prediction column.
pub fn write_reports<W: Write>(
    mut w: W,
    reports: &[HeraldReport],
    analytic: Option<&[f64]>,
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut header = "scheme,t_f_ns,t_c_ns,t_r_ns,n_pulses,n_triggers,n_success,\
                 n_signal_1,n_signal_2_corrected,n_signal_many,efficiency,\
                 efficiency_corrected,purity,determinicity"
                .to_string();
            if analytic.is_some() {
                header.push_str(",analytic_efficiency");
            }
            writeln!(w, "{header}")?;
            for (i, r) in reports.iter().enumerate() {
                let mut line = format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.scheme,
                    r.t_f_ns,
                    opt(r.t_c_ns),
                    opt(r.t_r_ns),
                    r.n_pulses,
                    r.n_triggers,
                    r.n_success,
                    r.n_signal_1,
                    r.n_signal_2_corrected,
                    r.n_signal_many,
                    r.efficiency,
                    r.efficiency_corrected,
                    opt(r.purity),
                    opt(r.determinicity),
                );
                if let Some(a) = analytic {
                    line.push(',');
                    line.push_str(&a[i].to_string());
                }
                writeln!(w, "{line}")?;
            }
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = reports
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut v = serde_json::to_value(r).expect("report serialises");
                    if let Some(a) = analytic {
                        v["analytic_efficiency"] = serde_json::json!(a[i]);
                    }
                    v
                })
                .collect();
            writeln!(w, "{}", serde_json::to_string_pretty(&rows).expect("rows serialise"))?;
        }
    }
    Ok(())
}

/// Emit a generic named-column table.
pub fn write_table<W: Write>(
    mut w: W,
    columns: &[&str],
    rows: &[Vec<f64>],
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "{}", columns.join(","))?;
            for row in rows {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        Format::Json => {
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let map: serde_json::Map<String, serde_json::Value> = columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), serde_json::json!(v)))
                        .collect();
                    serde_json::Value::Object(map)
                })
                .collect();
            writeln!(w, "{}", serde_json::to_string_pretty(&objects).expect("rows serialise"))?;
        }
    }
    Ok(())
}

//! Coefficient and Monte Carlo reports, as CSV and as aligned text.
//!
//! Reals in CSV reports are written with 17 significant digits so that they
//! parse back to the same `f64`.

use std::fmt::Write as _;
use std::io::Write;

use sellab_core::simlab::{Method, MonteCarloReport, PointEstimate};

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Point estimates of one method on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodEstimate {
    pub method: Method,
    pub result: Result<PointEstimate, String>,
}

/// Coefficient names `delta[<column>]` and `beta[<column>]`.
pub fn coefficient_names(selection: &[String], outcome: &[String]) -> Vec<String> {
    selection
        .iter()
        .map(|c| format!("delta[{c}]"))
        .chain(outcome.iter().map(|c| format!("beta[{c}]")))
        .collect()
}

/// `method,coefficient,estimate`; a failed method gets `NaN` estimates.
pub fn write_estimates_csv<W: Write>(w: W, names: &[String], rows: &[MethodEstimate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "coefficient", "estimate"])?;
    for r in rows {
        let values: Vec<f64> = match &r.result {
            Ok(e) => e.delta.iter().chain(&e.beta).copied().collect(),
            Err(_) => vec![f64::NAN; names.len()],
        };
        for (name, v) in names.iter().zip(values) {
            w.write_record([r.method.label(), name, &fmt_real(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One column per method, one row per coefficient; failures listed below.
pub fn estimates_text(names: &[String], rows: &[MethodEstimate]) -> String {
    let width = names.iter().map(String::len).max().unwrap_or(0).max(11);
    let mut s = String::new();
    let _ = write!(s, "{:width$}", "coefficient");
    for r in rows {
        let _ = write!(s, " {:>12}", r.method.label());
    }
    s.push('\n');
    for (k, name) in names.iter().enumerate() {
        let _ = write!(s, "{name:width$}");
        for r in rows {
            match &r.result {
                Ok(e) => {
                    let v = e.delta.iter().chain(&e.beta).nth(k).copied().unwrap_or(f64::NAN);
                    let _ = write!(s, " {v:>12.4}");
                }
                Err(_) => {
                    let _ = write!(s, " {:>12}", "failed");
                }
            }
        }
        s.push('\n');
    }
    for r in rows {
        if let Err(e) = &r.result {
            let _ = writeln!(s, "{}: {e}", r.method.label());
        }
    }
    s
}

/// `method,coefficient,estimate,bias,rmse,time_seconds`.
///
/// Per-coefficient rows carry the replication mean as `estimate`. The rows
/// `B-delta`/`B-beta` hold the mean-over-components bias and RMSE, and
/// `N-delta`/`N-beta` hold `Σ|bias_j|` and `√Σ rmse_j²`, all with an empty
/// estimate. `time_seconds` is the mean per successful replication.
pub fn write_mc_csv<W: Write>(w: W, report: &MonteCarloReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "coefficient", "estimate", "bias", "rmse", "time_seconds"])?;
    for s in &report.methods {
        let label = s.method.label();
        let time = fmt_real(s.mean_seconds);
        for (tag, metrics, truth) in [
            ("delta", &s.delta, &report.spec.true_delta),
            ("beta", &s.beta, &report.spec.true_beta),
        ] {
            let Some(m) = metrics else {
                for agg in ["B", "N"] {
                    w.write_record([label, &format!("{agg}-{tag}"), "", "NaN", "NaN", &time])?;
                }
                continue;
            };
            for (j, t) in truth.iter().enumerate() {
                w.write_record([
                    label,
                    &format!("{tag}{}", j + 1),
                    &fmt_real(t + m.bias[j]),
                    &fmt_real(m.bias[j]),
                    &fmt_real(m.rmse[j]),
                    &time,
                ])?;
            }
            w.write_record([label, &format!("B-{tag}"), "", &fmt_real(m.agg_bias), &fmt_real(m.agg_rmse), &time])?;
            w.write_record([label, &format!("N-{tag}"), "", &fmt_real(m.sum_abs_bias), &fmt_real(m.rmse_norm), &time])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary table `B-δ R-δ B-β R-β Time`, the same with norm aggregation,
/// then per-coefficient bias/RMSE for the first `max_coefficients`
/// components.
pub fn mc_text(report: &MonteCarloReport, max_coefficients: usize) -> String {
    let spec = &report.spec;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "n = {}, p = ({}, {}), errors = {:?}, replications = {}",
        spec.n,
        spec.p_z(),
        spec.p_x(),
        spec.error_law,
        report.replications
    );
    let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for (title, norm) in [("mean over components", false), ("sum |bias|, norm of rmse", true)] {
        let _ = writeln!(s, "\n{title}");
        let _ = writeln!(
            s,
            "{:8} {:>9} {:>9} {:>9} {:>9} {:>10} {:>7}",
            "method", "B-delta", "R-delta", "B-beta", "R-beta", "Time", "failed"
        );
        let pick = |m: &Option<sellab_core::simlab::Metrics>, rmse: bool| {
            m.as_ref().map(|x| match (norm, rmse) {
                (false, false) => x.agg_bias,
                (false, true) => x.agg_rmse,
                (true, false) => x.sum_abs_bias,
                (true, true) => x.rmse_norm,
            })
        };
        for m in &report.methods {
            let _ = writeln!(
                s,
                "{:8} {:>9} {:>9} {:>9} {:>9} {:>10.3} {:>7}",
                m.method.label(),
                cell(pick(&m.delta, false)),
                cell(pick(&m.delta, true)),
                cell(pick(&m.beta, false)),
                cell(pick(&m.beta, true)),
                m.mean_seconds,
                m.failed
            );
        }
    }
    for (tag, p) in [("delta", spec.p_z()), ("beta", spec.p_x())] {
        let shown = p.min(max_coefficients);
        if shown == 0 {
            continue;
        }
        let _ = writeln!(s, "\n{tag} (bias / rmse, first {shown} of {p})");
        let _ = write!(s, "{:8}", "");
        for j in 1..=shown {
            let _ = write!(s, " {:>17}", format!("{tag}{j}"));
        }
        s.push('\n');
        for m in &report.methods {
            let metrics = if tag == "delta" { &m.delta } else { &m.beta };
            let _ = write!(s, "{:8}", m.method.label());
            for j in 0..shown {
                match metrics {
                    Some(x) => {
                        let _ = write!(s, " {:>8.4} {:>8.4}", x.bias[j], x.rmse[j]);
                    }
                    None => {
                        let _ = write!(s, " {:>17}", "-");
                    }
                }
            }
            s.push('\n');
        }
    }
    s
}

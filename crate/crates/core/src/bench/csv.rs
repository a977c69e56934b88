//! CSV output for the experiment rows. Floats are printed in fixed
//! scientific notation so identical results give identical bytes.

use crate::bench::com::ComRow;
use crate::bench::illumination::{IlluminationConfig, IlluminationRow};
use crate::bench::selftest::Check;
use crate::bench::zcb::{ZcbMethod, ZcbRow};
use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// Builds a CSV document from a header and rows of already formatted fields.
pub fn to_csv<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<String> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    let err = |e: ::csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref())).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn zcb_csv(rows: &[ZcbRow]) -> Result<String> {
    to_csv(
        &[
            "T", "m", "method", "r", "length_scale_rule", "length_scale", "level", "N", "J", "estimate",
            "reference", "relative_error", "weight_sum", "status",
        ],
        rows.iter().map(|r| {
            let (method, degree) = match r.method {
                ZcbMethod::Bc => ("bc", String::new()),
                ZcbMethod::Bsc(d) => ("bsc", d.to_string()),
            };
            vec![
                r.horizon.to_string(),
                r.dim.to_string(),
                method.to_string(),
                degree,
                r.rule.name().to_string(),
                fmt_f64(r.length_scale),
                r.level.to_string(),
                r.n.to_string(),
                r.j.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.reference),
                fmt_f64(r.relative_error),
                fmt_f64(r.weight_sum),
                r.status.clone(),
            ]
        }),
    )
}

pub fn com_csv(rows: &[ComRow]) -> Result<String> {
    to_csv(
        &["level", "N", "J", "estimate", "reference", "relative_error", "max_density_ratio"],
        rows.iter().map(|r| {
            vec![
                r.level.to_string(),
                r.n.to_string(),
                r.j.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.reference),
                fmt_f64(r.relative_error),
                fmt_f64(r.max_density_ratio),
            ]
        }),
    )
}

pub fn illumination_csv(rows: &[IlluminationRow], config: &IlluminationConfig) -> Result<String> {
    let seeds = (0..config.realizations)
        .map(|r| config.realization_seed(r).to_string())
        .collect::<Vec<_>>()
        .join(";");
    to_csv(
        &[
            "channel", "D", "J", "N", "method", "mean_relative_error", "max_relative_error", "realizations",
            "mc_samples", "mc_seed", "seeds",
        ],
        rows.iter().map(|r| {
            vec![
                r.channel.to_string(),
                r.outputs.to_string(),
                r.blocks.to_string(),
                r.n.to_string(),
                r.method.to_string(),
                fmt_f64(r.mean_relative_error),
                fmt_f64(r.max_relative_error),
                config.realizations.to_string(),
                config.mc_samples.to_string(),
                config.seed.to_string(),
                seeds.clone(),
            ]
        }),
    )
}

pub fn selftest_csv(checks: &[Check]) -> Result<String> {
    to_csv(
        &["suite", "case", "config", "quantity", "naive", "fast", "error", "tolerance", "pass"],
        checks.iter().map(|c| {
            vec![
                c.suite.to_string(),
                c.case.to_string(),
                c.description.clone(),
                c.quantity.to_string(),
                fmt_f64(c.naive),
                fmt_f64(c.fast),
                fmt_f64(c.error),
                fmt_f64(c.tolerance),
                c.passed().to_string(),
            ]
        }),
    )
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{multiband_rt60, schroeder_edc, BandSpec, ImpulseResponse, RirError};

pub const DRR_CLAMP_DB: f64 = 60.0;
const DIRECT_WINDOW_S: f64 = 0.0025;
const EDF_LIMIT_DB: f64 = -30.0;

/// Direct-to-reverberant ratio in dB.
///
/// The direct part is the energy within 2.5 ms of the absolute peak; the
/// result is clamped to +/-60 dB, so a response with no late energy yields
/// +60 dB.
pub fn drr(ir: &ImpulseResponse) -> f64 {
    let s = ir.samples();
    let peak = s
        .iter()
        .enumerate()
        .fold((0usize, -1.0f64), |(bi, bv), (i, &x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        })
        .0;
    let half = (DIRECT_WINDOW_S * ir.sample_rate() as f64).round() as usize;
    let lo = peak.saturating_sub(half);
    let hi = (peak + half + 1).min(s.len());
    let direct: f64 = s[lo..hi].iter().map(|x| x * x).sum();
    let late: f64 = s[..lo].iter().chain(&s[hi..]).map(|x| x * x).sum();
    if late <= 0.0 {
        return DRR_CLAMP_DB;
    }
    if direct <= 0.0 {
        return -DRR_CLAMP_DB;
    }
    (10.0 * (direct / late).log10()).clamp(-DRR_CLAMP_DB, DRR_CLAMP_DB)
}

/// Errors of a predicted response against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricErrors {
    /// Mean relative per-band RT60 error, as a fraction.
    pub rt60_err_pct: f64,
    /// Mean absolute EDC difference in dB until the reference reaches -30 dB.
    pub edf_err_db: f64,
    /// Absolute DRR difference in dB.
    pub drr_err_db: f64,
}

impl MetricErrors {
    pub fn mean(rows: &[MetricErrors]) -> MetricErrors {
        if rows.is_empty() {
            return MetricErrors::default();
        }
        let n = rows.len() as f64;
        MetricErrors {
            rt60_err_pct: rows.iter().map(|r| r.rt60_err_pct).sum::<f64>() / n,
            edf_err_db: rows.iter().map(|r| r.edf_err_db).sum::<f64>() / n,
            drr_err_db: rows.iter().map(|r| r.drr_err_db).sum::<f64>() / n,
        }
    }
}

pub fn metric_errors(
    pred: &ImpulseResponse,
    reference: &ImpulseResponse,
    bands: &BandSpec,
) -> Result<MetricErrors, RirError> {
    if pred.sample_rate() != reference.sample_rate() {
        return Err(RirError::RateMismatch(
            pred.sample_rate(),
            reference.sample_rate(),
        ));
    }
    let fp_pred = multiband_rt60(pred, bands)?;
    let fp_ref = multiband_rt60(reference, bands)?;
    let rt60_err_pct = fp_pred
        .as_slice()
        .iter()
        .zip(fp_ref.as_slice())
        .map(|(p, r)| (p - r).abs() / r)
        .sum::<f64>()
        / bands.len() as f64;

    let edc_pred = schroeder_edc(pred)?;
    let edc_ref = schroeder_edc(reference)?;
    let limit = edc_ref
        .first_below(EDF_LIMIT_DB)
        .unwrap_or(edc_ref.len())
        .max(1);
    let edf_err_db = (0..limit)
        .map(|i| (edc_pred.at(i) - edc_ref.at(i)).abs())
        .sum::<f64>()
        / limit as f64;

    Ok(MetricErrors {
        rt60_err_pct,
        edf_err_db,
        drr_err_db: (drr(pred) - drr(reference)).abs(),
    })
}

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub room_id: String,
    pub pair_id: String,
    pub errors: MetricErrors,
}

/// Writes `room_id,pair_id,rt60_err_pct,edf_err_db,drr_err_db` rows.
pub fn write_metric_csv<W: Write>(mut w: W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(w, "room_id,pair_id,rt60_err_pct,edf_err_db,drr_err_db")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6}",
            r.room_id, r.pair_id, r.errors.rt60_err_pct, r.errors.edf_err_db, r.errors.drr_err_db
        )?;
    }
    Ok(())
}

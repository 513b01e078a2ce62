use serde::{Deserialize, Serialize};

pub const TUKEY_FACTOR: f64 = 1.5;

/// Box-plot summary. Quartiles interpolate linearly between order
/// statistics; whiskers reach the most extreme data within `factor * IQR` of
/// the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub n: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    /// `None` for empty input or NaN values.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        Self::with_factor(values, TUKEY_FACTOR)
    }

    pub fn with_factor(values: &[f64], factor: f64) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let lo_fence = q1 - factor * iqr;
        let hi_fence = q3 + factor * iqr;
        let lower_whisker = v.iter().copied().find(|&x| x >= lo_fence).unwrap().min(q1);
        let upper_whisker = v
            .iter()
            .rev()
            .copied()
            .find(|&x| x <= hi_fence)
            .unwrap()
            .max(q3);
        Some(BoxStats {
            median: med,
            lower_quartile: q1,
            upper_quartile: q3,
            lower_whisker,
            upper_whisker,
            n: v.len(),
        })
    }
}

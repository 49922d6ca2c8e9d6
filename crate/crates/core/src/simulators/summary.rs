use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary statistic `s(x_{1:m})` applied to a simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryScheme {
    /// Empirical octiles `{1/8, 3/8, 5/8, 7/8}` of a scalar-valued dataset.
    GkQuantiles4,
    /// Elements `{0, 3, 10, 31, 99}` of a single length-100 series.
    OuLogspace5,
    /// Row-major flattening.
    Identity,
}

const OCTILES: [f64; 4] = [0.125, 0.375, 0.625, 0.875];
const OU_INDICES: [usize; 5] = [0, 3, 10, 31, 99];

impl SummaryScheme {
    /// Length of the summary for an `m × d` dataset.
    pub fn output_dim(&self, m: usize, d: usize) -> usize {
        match self {
            SummaryScheme::GkQuantiles4 => 4,
            SummaryScheme::OuLogspace5 => 5,
            SummaryScheme::Identity => m * d,
        }
    }
}

/// Linear-interpolation empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(data: ArrayView2<f64>, scheme: SummaryScheme) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot summarise an empty dataset"));
    }
    match scheme {
        SummaryScheme::Identity => Ok(data.iter().copied().collect()),
        SummaryScheme::GkQuantiles4 => {
            if data.ncols() != 1 {
                return Err(Error::invalid(format!(
                    "gk_quantiles4 needs scalar observations, got {} columns",
                    data.ncols()
                )));
            }
            let mut sorted: Vec<f64> = data.iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            Ok(OCTILES.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
        }
        SummaryScheme::OuLogspace5 => {
            if data.nrows() != 1 || data.ncols() <= OU_INDICES[4] {
                return Err(Error::invalid(format!(
                    "ou_logspace5 needs one series of length >= 100, got {}x{}",
                    data.nrows(),
                    data.ncols()
                )));
            }
            Ok(OU_INDICES.iter().map(|&i| data[[0, i]]).collect())
        }
    }
}

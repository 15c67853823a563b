use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::mean_std;
use crate::stats::special::student_t_two_sided;

/// Outcome of a one-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    /// Zero sample variance; `p` follows the continuous-limit convention.
    pub degenerate: bool,
}

/// Two-sided one-sample t-test of `mean(xs) = null_mean`, `n − 1` degrees of freedom.
///
/// With zero sample variance the result is `p = 1` if the sample equals the
/// null mean and `p = 0` (flagged) otherwise.
pub fn one_sample_ttest(xs: &[f64], null_mean: f64) -> Result<TTest> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let (mean, std) = mean_std(xs);
    let diff = mean - null_mean;
    if std == 0.0 {
        return Ok(if diff == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                degenerate: false,
            }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = diff / (std / (n as f64).sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided(t, (n - 1) as f64),
        degenerate: false,
    })
}

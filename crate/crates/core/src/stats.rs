//! Small statistics helpers: estimates with standard errors, batch means,
//! mergeable running moments, chi-square goodness of fit and a least-squares
//! line with a confidence interval.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Batches used by [`batch_means`] when there are enough samples.
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    /// `|self - other|` in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let diff = (self.value - other.value).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

/// Mean with a batch-means standard error, which accounts for serial
/// correlation in a Markov chain. Falls back to the i.i.d. formula when
/// there are fewer than two samples per batch.
pub fn batch_means(values: &[f64], batches: usize) -> Option<Estimate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 * batches.max(2) {
        return Some(Estimate { value: mean, stderr: iid_stderr(values, mean), samples: n });
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let chunk = if b + 1 == batches { &values[b * size..] } else { &values[b * size..(b + 1) * size] };
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Some(Estimate { value: mean, stderr: (var / batches as f64).sqrt(), samples: n })
}

fn iid_stderr(values: &[f64], mean: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mean and standard error for i.i.d. samples.
pub fn mean_stderr(values: &[f64]) -> Option<Estimate> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some(Estimate { value: mean, stderr: iid_stderr(values, mean), samples: values.len() })
}

/// Welford accumulator; `merge` is associative so per-replica statistics can
/// be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        RunningStats { count, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Pearson chi-square statistic of `observed` counts against `expected`
/// probabilities; cells with zero expected probability must be empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub p_value: f64,
}

impl ChiSquareResult {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

pub fn chi_square(observed: &[u64], expected: &[f64], alpha: f64) -> ChiSquareResult {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            if o > 0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        cells += 1;
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = cells.max(2) - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareResult {
        statistic: stat,
        dof,
        critical: dist.inverse_cdf(1.0 - alpha),
        p_value: if stat.is_finite() { 1.0 - dist.cdf(stat) } else { 0.0 },
    }
}

/// Ordinary least-squares line `y = intercept + slope x` with a two-sided
/// confidence interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64], confidence: f64) -> Option<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("dof > 0").inverse_cdf(0.5 + confidence / 2.0);
    Some(LineFit { slope, intercept, slope_stderr: se, ci_low: slope - t * se, ci_high: slope + t * se, points: n })
}

/// Total-variation distance between two probability tables.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

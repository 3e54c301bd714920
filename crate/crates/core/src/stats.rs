//! Small statistics toolkit: normal CDF, Wilson intervals, isotonic
//! regression, histograms and a least-squares Gaussian fit.

use crate::FWHM_PER_SIGMA;

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided z for 99 % confidence.
pub const Z_99: f64 = 2.575_829_303_548_901;
/// Two-sided z for 95 % confidence.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval `(low, high)` for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Weighted isotonic (nondecreasing) regression by pool-adjacent-violators.
pub fn isotonic_regression(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// Fixed-width histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Left edge of the first bin.
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bin `samples` with bins aligned to multiples of `bin_width`.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Self {
        assert!(bin_width > 0.0);
        if samples.is_empty() {
            return Self { start: 0.0, bin_width, counts: Vec::new() };
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / bin_width).floor();
        let n_bins = ((hi / bin_width).floor() - first) as usize + 1;
        let mut counts = vec![0u64; n_bins];
        for &s in samples {
            let idx = ((s / bin_width).floor() - first) as usize;
            counts[idx.min(n_bins - 1)] += 1;
        }
        Self { start: first * bin_width, bin_width, counts }
    }

    pub fn centres(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(move |i| self.start + (i as f64 + 0.5) * self.bin_width)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `amplitude · exp(−(x − centre)² / (2 sigma²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub centre: f64,
    pub sigma: f64,
    /// Root-mean-square residual of the fit over all bins, in counts.
    pub rms_residual: f64,
}

impl GaussianFit {
    pub fn fwhm(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.centre) / self.sigma;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

/// Least-squares Gaussian fit to binned counts (Levenberg–Marquardt).
///
/// Returns `None` when the histogram is empty or degenerate.
pub fn fit_gaussian(hist: &Histogram) -> Option<GaussianFit> {
    let xs: Vec<f64> = hist.centres().collect();
    let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let total: f64 = ys.iter().sum();
    if total <= 0.0 || xs.len() < 3 {
        return None;
    }
    let mean = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / total;
    let var = xs.iter().zip(&ys).map(|(x, y)| y * (x - mean).powi(2)).sum::<f64>() / total;
    let peak = ys.iter().copied().fold(0.0, f64::max);
    // Work in units of bin width for conditioning.
    let scale = hist.bin_width;
    let mut p = [peak, mean / scale, (var.sqrt() / scale).max(0.5)];

    let sse = |p: &[f64; 3]| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| {
                let z = (x / scale - p[1]) / p[2];
                (y - p[0] * (-0.5 * z * z).exp()).powi(2)
            })
            .sum()
    };
    let mut lambda = 1e-3;
    let mut cost = sse(&p);
    for _ in 0..200 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (x, y) in xs.iter().zip(&ys) {
            let z = (x / scale - p[1]) / p[2];
            let e = (-0.5 * z * z).exp();
            let r = y - p[0] * e;
            let j = [e, p[0] * e * z / p[2], p[0] * e * z * z / p[2]];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] *= 1.0 + lambda;
            }
            let Some(step) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let c = sse(&trial);
            if c < cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some(GaussianFit {
        amplitude: p[0],
        centre: p[1] * scale,
        sigma: p[2] * scale,
        rms_residual: (cost / xs.len() as f64).sqrt(),
    })
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

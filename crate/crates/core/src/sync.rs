//! Sliding correlation of on/off preambles against an envelope.

/// Zero-mean on/off template with runs of equal chips merged, evaluated
/// with prefix sums so each lag costs one term per run.
#[derive(Clone, Debug)]
pub(crate) struct RunTemplate {
    bounds: Vec<usize>,
    weights: Vec<f64>,
}

impl RunTemplate {
    /// `boundary(j)` is the nominal start of chip `j`; `boundary(n)` the end.
    pub fn new(chips: &[u8], boundary: impl Fn(usize) -> f64, scale: f64) -> Self {
        let mut starts = Vec::new();
        let mut levels = Vec::new();
        for (j, &c) in chips.iter().enumerate() {
            if levels.last() != Some(&c) {
                starts.push(j);
                levels.push(c);
            }
        }
        starts.push(chips.len());
        let bounds: Vec<usize> = starts
            .iter()
            .map(|&j| (boundary(j) * scale).round() as usize)
            .collect();
        let total = (bounds[bounds.len() - 1] - bounds[0]) as f64;
        let mean = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| l as f64 * (bounds[i + 1] - bounds[i]) as f64)
            .sum::<f64>()
            / total;
        Self {
            bounds,
            weights: levels.iter().map(|&l| l as f64 - mean).collect(),
        }
    }

    pub fn span(&self) -> usize {
        self.bounds[self.bounds.len() - 1]
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * w * (self.bounds[i + 1] - self.bounds[i]) as f64)
            .sum::<f64>()
            .sqrt()
    }

    pub fn at(&self, prefix: &[f64], lag: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (prefix[lag + self.bounds[i + 1]] - prefix[lag + self.bounds[i]]))
            .sum()
    }

    /// Correlation at every lag that keeps the template inside the signal,
    /// limited to `max_lags`.
    pub fn correlate(&self, prefix: &[f64], max_lags: Option<usize>) -> Vec<f64> {
        let len = prefix.len() - 1;
        if self.span() >= len {
            return Vec::new();
        }
        let n = (len - self.span()).min(max_lags.unwrap_or(usize::MAX).max(1));
        (0..n).map(|k| self.at(prefix, k)).collect()
    }
}

/// The peak must exceed `ratio` times the median magnitude of the correlator
/// output at least `guard` lags before it. Short histories pass.
pub(crate) fn clears_history_margin(corr: &[f64], peak: usize, guard: usize, ratio: f64) -> bool {
    let mut history: Vec<f64> = corr[..peak.saturating_sub(guard)]
        .iter()
        .map(|c| c.abs())
        .collect();
    if history.len() < 8 {
        return true;
    }
    let mid = history.len() / 2;
    let (_, median, _) = history.select_nth_unstable_by(mid, f64::total_cmp);
    corr[peak] >= ratio * *median
}

pub(crate) fn prefix_sums(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(values.into_iter().map(|v| {
            acc += v;
            acc
        }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_correlation() {
        let chips = [1, 1, 0, 1, 0, 0, 1];
        let t = RunTemplate::new(&chips, |j| 3.0 * j as f64, 1.0);
        let signal: Vec<f64> = (0..60).map(|i| ((i * 7919) % 13) as f64).collect();
        let p = prefix_sums(signal.iter().copied());
        let mean = 4.0 / 7.0;
        for (k, c) in t.correlate(&p, None).iter().enumerate() {
            let direct: f64 = (0..21)
                .map(|n| (chips[n / 3] as f64 - mean) * signal[k + n])
                .sum();
            assert!((c - direct).abs() < 1e-9);
        }
        assert_eq!(t.correlate(&p, Some(5)).len(), 5);
    }

    #[test]
    fn margin_uses_history_only() {
        let mut corr = vec![1.0; 40];
        corr[30] = 3.5;
        assert!(!clears_history_margin(&corr, 30, 2, 4.0));
        corr[30] = 4.5;
        assert!(clears_history_margin(&corr, 30, 2, 4.0));
        assert!(clears_history_margin(&corr, 5, 2, 4.0));
    }
}

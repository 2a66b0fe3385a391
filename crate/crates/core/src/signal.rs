//! Sample containers passed between transmitters, channels and receivers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex baseband samples, one stream per antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct BasebandSignal {
    pub streams: Vec<Vec<Complex64>>,
    pub sample_rate_hz: f64,
}

impl BasebandSignal {
    pub fn new(streams: Vec<Vec<Complex64>>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate {sample_rate_hz}"
            )));
        }
        if streams.is_empty() {
            return Err(Error::EmptyInput);
        }
        let len = streams[0].len();
        if streams.iter().any(|s| s.len() != len) {
            return Err(Error::InvalidConfig(
                "antenna streams differ in length".into(),
            ));
        }
        Ok(Self {
            streams,
            sample_rate_hz,
        })
    }

    pub fn single(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        Self {
            streams: vec![samples],
            sample_rate_hz,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.streams.len()
    }

    /// Samples per antenna.
    pub fn len(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Mean per-sample power over `range`, averaged across antennas.
    pub fn mean_power(&self, range: std::ops::Range<usize>) -> f64 {
        let n = range.len() * self.streams.len();
        if n == 0 {
            return 0.0;
        }
        let total: f64 = self
            .streams
            .iter()
            .map(|s| s[range.clone()].iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum();
        total / n as f64
    }

    /// Sends the first stream from `n` antennas with the power split evenly,
    /// as a single transmit chain feeding several antennas.
    pub fn replicate(&self, n: usize) -> BasebandSignal {
        let gain = 1.0 / (n as f64).sqrt();
        let s: Vec<Complex64> = self.streams[0].iter().map(|x| x * gain).collect();
        BasebandSignal {
            streams: vec![s; n],
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Pads every stream with `before` leading and `after` trailing zeros.
    pub fn padded(&self, before: usize, after: usize) -> BasebandSignal {
        let zero = Complex64::new(0.0, 0.0);
        let streams = self
            .streams
            .iter()
            .map(|s| {
                let mut v = Vec::with_capacity(before + s.len() + after);
                v.resize(before, zero);
                v.extend_from_slice(s);
                v.resize(before + s.len() + after, zero);
                v
            })
            .collect();
        BasebandSignal {
            streams,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Real, non-negative detector output.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeSignal {
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Delay, in output samples, of a mid-level crossing after an input step.
    pub edge_delay_samples: f64,
    /// Centroid delay of the detector's impulse response, in output samples.
    pub group_delay_samples: f64,
}

impl EnvelopeSignal {
    /// An envelope with no filter delay.
    pub fn raw(values: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self {
            values,
            sample_rate_hz,
            edge_delay_samples: 0.0,
            group_delay_samples: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Running sums with a leading zero, for O(1) window means.
    pub(crate) fn prefix_sums(&self) -> Vec<f64> {
        crate::sync::prefix_sums(self.values.iter().copied())
    }
}

//! Sample positions of OFDM symbols and chips on a normal-CP grid.

/// Chip grid of an OOK-M DFT-s-OFDM transmission that starts on the first
/// symbol of a half-subframe.
///
/// The core of chip `j` is its `1/M` share of the CP-stripped symbol. The
/// first chip of each symbol also owns the cyclic prefix, so consecutive
/// occupied regions tile the timeline without gaps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChipTimeline {
    pub fft_size: usize,
    pub chips_per_symbol: usize,
}

impl ChipTimeline {
    pub fn new(fft_size: usize, chips_per_symbol: usize) -> Self {
        debug_assert!(fft_size.is_multiple_of(128) && fft_size.is_multiple_of(chips_per_symbol));
        Self {
            fft_size,
            chips_per_symbol,
        }
    }

    pub fn cp_len(&self, symbol: usize) -> usize {
        let per_2048 = if symbol.is_multiple_of(7) { 160 } else { 144 };
        self.fft_size * per_2048 / 2048
    }

    pub fn symbol_len(&self, symbol: usize) -> usize {
        self.fft_size + self.cp_len(symbol)
    }

    pub fn symbol_start(&self, symbol: usize) -> usize {
        let half = 7 * self.fft_size + self.cp_len(0) + 6 * self.cp_len(1);
        let (blocks, rem) = (symbol / 7, symbol % 7);
        let within = if rem == 0 {
            0
        } else {
            rem * self.fft_size + self.cp_len(0) + (rem - 1) * self.cp_len(1)
        };
        blocks * half + within
    }

    /// Samples spanned by `n_symbols` consecutive symbols.
    pub fn total_len(&self, n_symbols: usize) -> usize {
        self.symbol_start(n_symbols)
    }

    pub fn chip_core_len(&self) -> usize {
        self.fft_size / self.chips_per_symbol
    }

    pub fn core_start(&self, chip: usize) -> usize {
        let (s, w) = (chip / self.chips_per_symbol, chip % self.chips_per_symbol);
        self.symbol_start(s) + self.cp_len(s) + w * self.chip_core_len()
    }

    pub fn core_end(&self, chip: usize) -> usize {
        self.core_start(chip) + self.chip_core_len()
    }

    pub fn occupied_start(&self, chip: usize) -> usize {
        if chip.is_multiple_of(self.chips_per_symbol) {
            self.symbol_start(chip / self.chips_per_symbol)
        } else {
            self.core_start(chip)
        }
    }

    /// Whether the boundary before `chip` falls at a symbol start, where the
    /// cyclic prefix shapes the transition.
    pub fn is_symbol_boundary(&self, chip: usize) -> bool {
        chip.is_multiple_of(self.chips_per_symbol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cp_lengths_follow_normal_cp() {
        let t = ChipTimeline::new(4096, 1);
        assert_eq!((t.cp_len(0), t.cp_len(1), t.cp_len(7)), (320, 288, 320));
        let t = ChipTimeline::new(128, 4);
        assert_eq!((t.cp_len(0), t.cp_len(3)), (10, 9));
        // half a subframe lasts 0.5 ms at 1.92 Msps
        assert_eq!(t.symbol_start(7), 960);
    }

    #[test]
    fn symbol_starts_accumulate() {
        let t = ChipTimeline::new(256, 2);
        let mut acc = 0;
        for l in 0..30 {
            assert_eq!(t.symbol_start(l), acc);
            acc += t.symbol_len(l);
        }
    }

    #[test]
    fn occupied_regions_tile() {
        for m in [1, 2, 4] {
            let t = ChipTimeline::new(128, m);
            for j in 0..40 {
                let next = t.occupied_start(j + 1);
                assert_eq!(t.core_end(j), next, "m={m} chip={j}");
                assert!(t.occupied_start(j) <= t.core_start(j));
            }
        }
    }
}

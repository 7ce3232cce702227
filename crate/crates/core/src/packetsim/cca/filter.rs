// SPDX-License-Identifier: Apache-2.0

//! Windowed extremum filters keyed by a monotone clock (round count or time).
//!
//! Kathleen Nichols' three-sample scheme as used by the Linux `win_minmax`
//! helper: the best, second-best and third-best samples over the window are
//! kept so expiry of the best falls back to a recent runner-up.

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    at: f64,
    value: f64,
}

#[derive(Debug, Clone)]
struct Extremum {
    window: f64,
    s: [Entry; 3],
    better: fn(f64, f64) -> bool,
}

impl Extremum {
    fn new(window: f64, better: fn(f64, f64) -> bool, init: f64) -> Self {
        let e = Entry { at: f64::NEG_INFINITY, value: init };
        Self {
            window,
            s: [e; 3],
            better,
        }
    }

    fn reset(&mut self, at: f64, value: f64) -> f64 {
        let e = Entry { at, value };
        self.s = [e; 3];
        value
    }

    fn update(&mut self, at: f64, value: f64) -> f64 {
        let better = self.better;
        let e = Entry { at, value };
        if !better(self.s[0].value, value) || at - self.s[2].at > self.window {
            return self.reset(at, value);
        }
        if !better(self.s[1].value, value) {
            self.s[1] = e;
            self.s[2] = e;
        } else if !better(self.s[2].value, value) {
            self.s[2] = e;
        }
        self.subwin_update(e)
    }

    fn subwin_update(&mut self, e: Entry) -> f64 {
        let dt = e.at - self.s[0].at;
        if dt > self.window {
            self.s[0] = self.s[1];
            self.s[1] = self.s[2];
            self.s[2] = e;
            if e.at - self.s[0].at > self.window {
                self.s[0] = self.s[1];
                self.s[1] = self.s[2];
                self.s[2] = e;
            }
        } else if self.s[1].at == self.s[0].at && dt > self.window / 4.0 {
            self.s[1] = e;
            self.s[2] = e;
        } else if self.s[2].at == self.s[1].at && dt > self.window / 2.0 {
            self.s[2] = e;
        }
        self.s[0].value
    }
}

/// Running maximum over the last `window` clock units.
#[derive(Debug, Clone)]
pub struct MaxFilter(Extremum);

impl MaxFilter {
    pub fn new(window: f64) -> Self {
        Self(Extremum::new(window, |best, new| best > new, 0.0))
    }

    pub fn update(&mut self, at: f64, value: f64) -> f64 {
        self.0.update(at, value)
    }

    pub fn get(&self) -> f64 {
        self.0.s[0].value
    }

    pub fn reset(&mut self, at: f64, value: f64) {
        self.0.reset(at, value);
    }
}

/// Running minimum over the last `window` clock units.
#[derive(Debug, Clone)]
pub struct MinFilter(Extremum);

impl MinFilter {
    pub fn new(window: f64) -> Self {
        Self(Extremum::new(window, |best, new| best < new, f64::INFINITY))
    }

    pub fn update(&mut self, at: f64, value: f64) -> f64 {
        self.0.update(at, value)
    }

    pub fn get(&self) -> f64 {
        self.0.s[0].value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn max_expires_after_window() {
        let mut f = MaxFilter::new(10.0);
        f.update(0.0, 100.0);
        for r in 1..=10 {
            assert_eq!(f.update(f64::from(r), 50.0), 100.0);
        }
        // Round 11 is more than 10 rounds after the peak.
        assert_eq!(f.update(11.0, 50.0), 50.0);
    }

    #[test]
    fn min_tracks_smaller() {
        let mut f = MinFilter::new(10.0);
        f.update(0.0, 0.05);
        assert_eq!(f.update(1.0, 0.04), 0.04);
        assert_eq!(f.update(2.0, 0.06), 0.04);
    }

    proptest! {
        // The filter reports a sample from the window, never smaller than the
        // true max of the most recent quarter window.
        #[test]
        fn max_filter_bounded_by_brute_force(values in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            let window = 8.0;
            let mut f = MaxFilter::new(window);
            for (i, v) in values.iter().enumerate() {
                let now = i as f64;
                let got = f.update(now, *v);
                let lo = (i as f64 - window).max(0.0) as usize;
                let in_window = values[lo..=i].iter().cloned().fold(f64::MIN, f64::max);
                prop_assert!(got <= in_window + 1e-12);
                prop_assert!(got >= *v);
            }
        }
    }
}

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A base station's serving history. `served_window` holds one counter per
/// tick, oldest first; the last entry is the tick currently being served.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub cache_capacity: usize,
    pub service_capacity: usize,
    served_window: VecDeque<u32>,
    window_len: usize,
    current_tick: u64,
}

impl BaseStation {
    pub fn new(id: usize, cache_capacity: usize, service_capacity: usize, window_len: usize) -> Result<Self> {
        if cache_capacity == 0 || service_capacity == 0 || window_len == 0 {
            return Err(Error::invalid("base station capacities and window must be >= 1"));
        }
        let mut served_window = VecDeque::with_capacity(window_len);
        served_window.push_back(0);
        Ok(Self {
            id,
            cache_capacity,
            service_capacity,
            served_window,
            window_len,
            current_tick: 0,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Moves the clock forward to `tick`, opening empty counters for every
    /// elapsed tick. Earlier ticks are ignored.
    pub fn advance_to(&mut self, tick: u64) {
        if tick <= self.current_tick {
            return;
        }
        let gap = (tick - self.current_tick).min(self.window_len as u64) as usize;
        for _ in 0..gap {
            if self.served_window.len() == self.window_len {
                self.served_window.pop_front();
            }
            self.served_window.push_back(0);
        }
        self.current_tick = tick;
    }

    pub fn record_served(&mut self, count: u32) {
        if let Some(last) = self.served_window.back_mut() {
            *last += count;
        }
    }

    /// Served requests over the most recent `window` ticks (at most the
    /// retained window).
    pub fn served_in(&self, window: usize) -> u64 {
        self.served_window.iter().rev().take(window).map(|&c| c as u64).sum()
    }

    pub fn load(&self) -> f64 {
        bs_load(self, self.window_len)
    }
}

/// Served requests in the last `window` ticks divided by
/// `window * service_capacity`, clamped to `[0, 1]`.
pub fn bs_load(bs: &BaseStation, window: usize) -> f64 {
    let window = window.max(1);
    let served = bs.served_in(window) as f64;
    (served / (window * bs.service_capacity) as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station_with(per_tick: &[u32], cap: usize, window: usize) -> BaseStation {
        let mut bs = BaseStation::new(0, 150, cap, window).unwrap();
        for (t, &c) in per_tick.iter().enumerate() {
            bs.advance_to(t as u64);
            bs.record_served(c);
        }
        bs
    }

    #[test]
    fn idle_station_has_zero_load() {
        assert_eq!(bs_load(&station_with(&[], 10, 10), 10), 0.0);
    }

    #[test]
    fn saturated_window_is_one() {
        assert_eq!(bs_load(&station_with(&[10; 10], 10, 10), 10), 1.0);
        assert_eq!(bs_load(&station_with(&[25; 10], 10, 10), 10), 1.0);
    }

    #[test]
    fn fifty_three_served_of_hundred() {
        let mut counts = vec![5u32; 10];
        counts[0] = 8;
        assert_eq!(counts.iter().sum::<u32>(), 53);
        assert!((bs_load(&station_with(&counts, 10, 10), 10) - 0.53).abs() < 1e-12);
    }

    #[test]
    fn old_ticks_leave_the_window() {
        let mut bs = station_with(&[10, 10, 10], 10, 2);
        assert_eq!(bs.served_in(2), 20);
        bs.advance_to(100);
        assert_eq!(bs.load(), 0.0);
    }

    #[test]
    fn load_monotone_in_served_count() {
        let mut prev = 0.0;
        for served in 0..150u32 {
            let l = bs_load(&station_with(&[served], 10, 10), 10);
            assert!(l >= prev && (0.0..=1.0).contains(&l));
            prev = l;
        }
    }
}

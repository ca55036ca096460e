/// Source of per-request response times for real-time simulation.
pub trait Clock {
    /// Response time in seconds to use for a request whose measured
    /// wall-clock duration was `measured`.
    fn response_time(&mut self, measured: f64) -> f64;

    /// Called before each trial.
    fn reset(&mut self) {}
}

/// Uses the measured durations as they are.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn response_time(&mut self, measured: f64) -> f64 {
        measured
    }
}

/// Replays scripted response times, ignoring measurements. The last value
/// repeats once the script runs out.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    script: Vec<f64>,
    next: usize,
}

impl VirtualClock {
    pub fn new(script: Vec<f64>) -> Self {
        assert!(!script.is_empty(), "virtual clock needs at least one value");
        Self { script, next: 0 }
    }

    pub fn constant(seconds: f64) -> Self {
        Self::new(vec![seconds])
    }
}

impl Clock for VirtualClock {
    fn response_time(&mut self, _measured: f64) -> f64 {
        let value = self.script[self.next.min(self.script.len() - 1)];
        self.next += 1;
        value
    }

    fn reset(&mut self) {
        self.next = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_repeats_last() {
        let mut c = VirtualClock::new(vec![0.1, 0.2]);
        assert_eq!(c.response_time(9.0), 0.1);
        assert_eq!(c.response_time(9.0), 0.2);
        assert_eq!(c.response_time(9.0), 0.2);
        c.reset();
        assert_eq!(c.response_time(9.0), 0.1);
    }

    #[test]
    fn wall_clock_passes_through() {
        assert_eq!(WallClock.response_time(0.5), 0.5);
    }
}

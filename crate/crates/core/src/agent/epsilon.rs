/// Linear exploration anneal over a count of stored transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
    /// Fixed exploration rate used during evaluation.
    pub eval: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.2,
            horizon: 100_000,
            eval: 0.05,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.start) && unit(self.end) && unit(self.eval)) || self.start < self.end {
            return Err(format!(
                "epsilon schedule needs 1 >= start >= end >= 0 and eval in [0, 1], got {:?}",
                self
            ));
        }
        if self.horizon == 0 {
            return Err("epsilon horizon must be at least 1".into());
        }
        Ok(())
    }

    /// Exploration rate after `transitions` training transitions.
    pub fn value(&self, transitions: u64) -> f64 {
        if transitions >= self.horizon {
            return self.end;
        }
        let frac = transitions as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    KeepLr,
    DecayLr,
    Stop,
}

/// Decay-on-plateau over validation loss. Both counters run from the last
/// strict improvement; a decay restarts only the decay counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub decay_patience: u32,
    pub stop_patience: u32,
    best: f64,
    since_improvement: u32,
    since_decay: u32,
}

impl PlateauState {
    pub fn new(decay_patience: u32, stop_patience: u32) -> Self {
        Self {
            decay_patience,
            stop_patience,
            best: f64::INFINITY,
            since_improvement: 0,
            since_decay: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn epochs_without_improvement(&self) -> u32 {
        self.since_improvement
    }

    /// Feeds one completed epoch's validation loss.
    pub fn step(&mut self, val_loss: f64) -> PlateauAction {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improvement = 0;
            self.since_decay = 0;
            return PlateauAction::KeepLr;
        }
        self.since_improvement += 1;
        self.since_decay += 1;
        if self.since_improvement >= self.stop_patience {
            PlateauAction::Stop
        } else if self.since_decay >= self.decay_patience {
            self.since_decay = 0;
            PlateauAction::DecayLr
        } else {
            PlateauAction::KeepLr
        }
    }
}

/// Runs a whole loss sequence through a fresh scheduler.
pub fn plateau_trace(losses: &[f64], decay_patience: u32, stop_patience: u32) -> Vec<PlateauAction> {
    let mut s = PlateauState::new(decay_patience, stop_patience);
    let mut out = Vec::new();
    for &l in losses {
        let a = s.step(l);
        out.push(a);
        if a == PlateauAction::Stop {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::PlateauAction::*;
    use super::*;

    #[test]
    fn traces() {
        assert_eq!(plateau_trace(&[1.0, 0.9, 0.8], 3, 6), vec![KeepLr; 3]);
        assert_eq!(plateau_trace(&[1.0, 1.1, 1.2, 1.3], 3, 6), vec![KeepLr, KeepLr, KeepLr, DecayLr]);
        assert_eq!(
            plateau_trace(&[1.0, 1.0, 1.2, 1.0, 1.1, 1.0, 1.3, 0.5], 3, 6),
            vec![KeepLr, KeepLr, KeepLr, DecayLr, KeepLr, KeepLr, Stop]
        );
        // an improvement resets both counters
        assert_eq!(
            plateau_trace(&[1.0, 1.1, 1.2, 0.9, 1.0, 1.0, 1.0], 3, 6),
            vec![KeepLr, KeepLr, KeepLr, KeepLr, KeepLr, KeepLr, DecayLr]
        );
    }
}

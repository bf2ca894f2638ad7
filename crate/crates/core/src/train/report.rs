use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the metric has failed to beat the best value for more than
/// `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    bad: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            bad: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        let improved = metric.is_finite() && self.best.is_none_or(|(_, b)| metric > b);
        if improved {
            self.best = Some((epoch, metric));
            self.bad = 0;
            return StopDecision::Improved;
        }
        self.bad += 1;
        if self.bad > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_metric: Option<f64>,
    /// Wall-clock time; not serialized so reports stay byte-stable.
    #[serde(skip_serializing, default)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    /// `auc` or `recall@10`.
    pub metric: String,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_metric: Option<f64>,
    pub stopped_early: bool,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            r.history.iter_mut().for_each(|e| e.seconds = 0.0);
            r
        };
        strip(self) == strip(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_metric_stops_after_patience_exceeded() {
        let mut s = EarlyStopper::new(1);
        assert_eq!(s.observe(1, 0.9), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.8), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.7), StopDecision::Stop);
        assert_eq!(s.best(), Some((1, 0.9)));
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut s = EarlyStopper::new(2);
        s.observe(1, 0.5);
        assert_eq!(s.observe(2, 0.5), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.6), StopDecision::Improved);
        assert_eq!(s.observe(4, f64::NAN), StopDecision::Continue);
        assert_eq!(s.best(), Some((3, 0.6)));
    }
}

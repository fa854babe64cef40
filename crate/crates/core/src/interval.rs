use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalMethod {
    ACI,
    BootP,
    BootT,
    Bayes,
}

impl IntervalMethod {
    pub fn label(&self) -> &'static str {
        match self {
            IntervalMethod::ACI => "ACI",
            IntervalMethod::BootP => "Boot-p",
            IntervalMethod::BootT => "Boot-t",
            IntervalMethod::Bayes => "Bayes",
        }
    }
}

/// Confidence or credible interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    /// The lower bound was raised to zero to stay in the parameter space.
    #[serde(default)]
    pub clamped: bool,
}

impl IntervalEstimate {
    pub fn new(lower: f64, upper: f64, level: f64, method: IntervalMethod) -> Self {
        debug_assert!(lower <= upper, "interval bounds out of order: {lower} > {upper}");
        Self { lower, upper, level, method, clamped: false }
    }

    /// Build an interval, raising a negative lower bound to zero.
    pub fn clamped_at_zero(lower: f64, upper: f64, level: f64, method: IntervalMethod) -> Self {
        let clamped = lower < 0.0;
        let mut iv = Self::new(lower.max(0.0), upper.max(0.0), level, method);
        iv.clamped = clamped;
        iv
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

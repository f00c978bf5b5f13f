/// Map between a bounded parameter and the unbounded optimiser variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Sigmoid { lower: f64, upper: f64 },
    Lower { lower: f64 },
    Upper { upper: f64 },
    Identity,
}

// Keeps sigmoid and exponential outputs strictly inside the bounds.
const SIGMOID_T_LIMIT: f64 = 30.0;
const EXP_T_LIMIT: f64 = 700.0;

impl Transform {
    pub fn for_bounds(lower: f64, upper: f64) -> Self {
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => Transform::Sigmoid { lower, upper },
            (true, false) => Transform::Lower { lower },
            (false, true) => Transform::Upper { upper },
            (false, false) => Transform::Identity,
        }
    }

    pub fn to_external(self, t: f64) -> f64 {
        match self {
            Transform::Sigmoid { lower, upper } => {
                let t = t.clamp(-SIGMOID_T_LIMIT, SIGMOID_T_LIMIT);
                lower + (upper - lower) / (1.0 + (-t).exp())
            }
            Transform::Lower { lower } => lower + t.clamp(-EXP_T_LIMIT, EXP_T_LIMIT).exp(),
            Transform::Upper { upper } => upper - t.clamp(-EXP_T_LIMIT, EXP_T_LIMIT).exp(),
            Transform::Identity => t,
        }
    }

    /// Inverse map. A value sitting exactly on a bound is first moved a
    /// small distance inside.
    pub fn to_internal(self, x: f64) -> f64 {
        match self {
            Transform::Sigmoid { lower, upper } => {
                let span = upper - lower;
                let x = x.clamp(lower + 1e-9 * span, upper - 1e-9 * span);
                ((x - lower) / (upper - x)).ln()
            }
            Transform::Lower { lower } => {
                let gap = (x - lower).max(1e-9 * lower.abs().max(1.0));
                gap.ln()
            }
            Transform::Upper { upper } => {
                let gap = (upper - x).max(1e-9 * upper.abs().max(1.0));
                gap.ln()
            }
            Transform::Identity => x,
        }
    }

    /// dx/dt
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Transform::Sigmoid { lower, upper } => {
                if t.abs() > SIGMOID_T_LIMIT {
                    return 0.0;
                }
                let s = 1.0 / (1.0 + (-t).exp());
                (upper - lower) * s * (1.0 - s)
            }
            Transform::Lower { .. } => t.clamp(-EXP_T_LIMIT, EXP_T_LIMIT).exp(),
            Transform::Upper { .. } => -t.clamp(-EXP_T_LIMIT, EXP_T_LIMIT).exp(),
            Transform::Identity => 1.0,
        }
    }
}

use super::{ControlMode, ControllerError};

const GRID_POINTS: usize = 200;
const GRID_SPAN: f64 = 1e4;

/// Problem constants entering the sufficient gain conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCheckInputs {
    /// Strong convexity constant of the costs.
    pub m: f64,
    /// Gradient Lipschitz constant.
    pub big_m: f64,
    /// Induced 2-norm of the stacked output matrix.
    pub norm_c: f64,
    pub r_min: f64,
    pub lambda2: f64,
}

impl GainCheckInputs {
    fn c_weight(&self, mode: ControlMode) -> f64 {
        let c2 = self.norm_c * self.norm_c;
        match mode {
            ControlMode::State => c2,
            ControlMode::Output => 2.0 * c2,
        }
    }

    /// Infimum of admissible δ for the first inequality.
    pub fn delta_lower(&self, mode: ControlMode) -> f64 {
        (self.big_m * self.big_m + self.c_weight(mode)) / (2.0 * self.m)
    }

    fn validate(&self) -> Result<(), ControllerError> {
        let named = [
            ("m", self.m),
            ("M", self.big_m),
            ("normC", self.norm_c),
            ("r_min", self.r_min),
            ("lambda2", self.lambda2),
        ];
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::InvalidConstants(format!("{name} = {value}")));
            }
        }
        Ok(())
    }

    /// The three inequality margins at a given δ; all positive means feasible.
    pub fn margins(&self, gamma1: f64, gamma2: f64, delta: f64, mode: ControlMode) -> GainMargins {
        let c2 = self.norm_c * self.norm_c;
        let c_damp = match mode {
            ControlMode::State => c2 / (4.0 * delta),
            ControlMode::Output => c2 / (2.0 * delta),
        };
        GainMargins {
            convexity: 2.0 * self.m - (self.big_m * self.big_m + self.c_weight(mode)) / delta,
            damping: gamma2 * self.r_min - 1.25 * delta - c_damp,
            coupling: gamma1 * self.lambda2 - gamma2 * gamma2 / delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMargins {
    pub convexity: f64,
    pub damping: f64,
    pub coupling: f64,
}

impl GainMargins {
    pub fn min(&self) -> f64 {
        self.convexity.min(self.damping).min(self.coupling)
    }

    pub fn all_positive(&self) -> bool {
        self.convexity > 0.0 && self.damping > 0.0 && self.coupling > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainCheck {
    pub feasible: bool,
    /// Grid point with the largest smallest margin; absent when the inputs are unusable.
    pub delta: Option<f64>,
    pub margins: Option<GainMargins>,
    pub advisory: Option<String>,
}

/// Searches δ on a log grid for a point where all three sufficient
/// conditions hold. Infeasibility is a result, not an error: the conditions
/// are sufficient only.
pub fn check_gain_conditions(inputs: &GainCheckInputs, gamma1: f64, gamma2: f64, mode: ControlMode) -> GainCheck {
    if let Err(e) = inputs.validate() {
        return GainCheck {
            feasible: false,
            delta: None,
            margins: None,
            advisory: Some(format!("conditions not applicable: {e}")),
        };
    }
    let lo = inputs.delta_lower(mode) * (1.0 + 1e-6);
    let hi = inputs.delta_lower(mode) * GRID_SPAN;
    let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
    let (delta, margins) = (0..GRID_POINTS)
        .map(|k| {
            let delta = lo * (ratio * k as f64).exp();
            (delta, inputs.margins(gamma1, gamma2, delta, mode))
        })
        .max_by(|a, b| a.1.min().total_cmp(&b.1.min()))
        .expect("grid is non-empty");
    let feasible = margins.all_positive();
    let advisory = (!feasible).then(|| {
        let failing: Vec<&str> = [
            ("convexity", margins.convexity),
            ("damping", margins.damping),
            ("coupling", margins.coupling),
        ]
        .iter()
        .filter(|(_, v)| *v <= 0.0)
        .map(|(n, _)| *n)
        .collect();
        format!(
            "no delta on the grid satisfies all conditions; at the best delta the {} inequality fails (simulation may still converge)",
            failing.join(" and ")
        )
    });
    GainCheck {
        feasible,
        delta: Some(delta),
        margins: Some(margins),
        advisory,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuggestedGains {
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Closed-form gains with a factor-two safety margin in each condition.
pub fn suggest_gains(inputs: &GainCheckInputs, mode: ControlMode) -> Result<SuggestedGains, ControllerError> {
    inputs.validate()?;
    let delta = 2.0 * inputs.delta_lower(mode);
    let c2 = inputs.norm_c * inputs.norm_c;
    let c_term = match mode {
        ControlMode::State => c2,
        ControlMode::Output => 2.0 * c2,
    };
    let gamma2 = 2.0 * (5.0 * delta * delta + c_term) / (4.0 * delta * inputs.r_min);
    let gamma1 = 2.0 * gamma2 * gamma2 / (inputs.lambda2 * delta);
    Ok(SuggestedGains { delta, gamma1, gamma2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> GainCheckInputs {
        GainCheckInputs {
            m: 1.0,
            big_m: 1.0,
            norm_c: 1.0,
            r_min: 0.5,
            lambda2: 1.0,
        }
    }

    #[test]
    fn direct_evaluation_at_two() {
        let m = unit().margins(100.0, 10.0, 2.0, ControlMode::State);
        assert!((m.convexity - 1.0).abs() < 1e-15);
        assert!((m.damping - (5.0 - 2.5 - 0.125)).abs() < 1e-15);
        assert!((m.coupling - 50.0).abs() < 1e-12);
    }

    #[test]
    fn feasible_example() {
        let c = check_gain_conditions(&unit(), 100.0, 10.0, ControlMode::State);
        assert!(c.feasible);
        assert!(c.advisory.is_none());
        let d = c.delta.unwrap();
        assert!(d > 1.0 && d < 1e4);
    }

    #[test]
    fn tiny_gains_infeasible() {
        let c = check_gain_conditions(&unit(), 0.001, 0.001, ControlMode::State);
        assert!(!c.feasible);
        assert!(c.advisory.is_some());
    }

    #[test]
    fn non_positive_m_is_advisory() {
        let mut i = unit();
        i.m = -0.1;
        let c = check_gain_conditions(&i, 100.0, 10.0, ControlMode::State);
        assert!(!c.feasible && c.delta.is_none());
        assert!(suggest_gains(&i, ControlMode::State).is_err());
    }

    #[test]
    fn suggestion_formula() {
        let s = suggest_gains(&unit(), ControlMode::State).unwrap();
        assert!((s.delta - 2.0).abs() < 1e-15);
        assert!((s.gamma2 - 10.5).abs() < 1e-12);
        assert!((s.gamma1 - 110.25).abs() < 1e-10);

        let mut twice = unit();
        twice.m = 2.0;
        let s2 = suggest_gains(&twice, ControlMode::State).unwrap();
        assert!((s2.delta - s.delta / 2.0).abs() < 1e-15);

        let o = suggest_gains(&unit(), ControlMode::Output).unwrap();
        assert!((o.delta - 3.0).abs() < 1e-15);
        assert!(o.gamma1 > s.gamma1 && o.gamma2 > s.gamma2);
    }

    fn constants() -> impl Strategy<Value = GainCheckInputs> {
        (1e-3..10.0f64, 1.0..20.0f64, 1e-2..5.0f64, 1e-2..1.0f64, 1e-3..5.0f64).prop_map(
            |(m, ratio, norm_c, r_min, lambda2)| GainCheckInputs {
                m,
                big_m: m * ratio,
                norm_c,
                r_min,
                lambda2,
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn suggested_gains_pass(inputs in constants(), output in any::<bool>()) {
            let mode = if output { ControlMode::Output } else { ControlMode::State };
            let s = suggest_gains(&inputs, mode).unwrap();
            prop_assert!(inputs.margins(s.gamma1, s.gamma2, s.delta, mode).all_positive());
            prop_assert!(check_gain_conditions(&inputs, s.gamma1, s.gamma2, mode).feasible);
        }

        #[test]
        fn scaling_keeps_feasibility(inputs in constants(), c in 1.0..10.0f64, output in any::<bool>()) {
            let mode = if output { ControlMode::Output } else { ControlMode::State };
            let s = suggest_gains(&inputs, mode).unwrap();
            let base = inputs.margins(s.gamma1, s.gamma2, s.delta, mode);
            let scaled = inputs.margins(c * c * s.gamma1, c * s.gamma2, s.delta, mode);
            prop_assert!(base.all_positive());
            prop_assert!(scaled.all_positive());
            prop_assert!(check_gain_conditions(&inputs, c * c * s.gamma1, c * s.gamma2, mode).feasible);
        }
    }
}

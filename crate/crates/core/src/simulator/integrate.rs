use super::SimError;

/// Sampled solution. `states[k]` is the full stacked state at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

/// Number of whole steps of size `h` in `[0, horizon]`.
pub(crate) fn step_count(h: f64, horizon: f64) -> usize {
    (horizon / h + 1e-9).floor() as usize
}

/// Classical RK4 with fixed step. The right-hand side writes `dy` for state
/// `y` at time `t`; it receives the current time so errors can be stamped.
pub fn integrate<F>(mut f: F, y0: &[f64], h: f64, horizon: f64, stride: usize) -> Result<Trajectory, SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SimError>,
{
    if !(h > 0.0 && h.is_finite() && horizon >= h && horizon.is_finite()) {
        return Err(SimError::InvalidStep { step: h, horizon });
    }
    let stride = stride.max(1);
    let steps = step_count(h, horizon);
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    let rows = steps / stride + 1;
    let mut times = Vec::with_capacity(rows);
    let mut states = Vec::with_capacity(rows);
    times.push(0.0);
    states.push(y.clone());

    for n in 0..steps {
        let t = n as f64 * h;
        f(t, &y, &mut k1)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = (n + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NumericalBlowup { time: t_next });
        }
        if (n + 1) % stride == 0 {
            times.push(t_next);
            states.push(y.clone());
        }
    }
    Ok(Trajectory { times, states })
}

use nalgebra::DVector;

use super::closed_loop::ClosedLoop;
use super::integrate::Trajectory;

const FIT_MIN_SAMPLES: usize = 20;
const FIT_MIN_DECADES: f64 = 2.0;
const OUTPUT_FIT_WINDOW: (f64, f64) = (1e-1, 1e-4);
const Z_FIT_WINDOW: (f64, f64) = (1e-1, 1e-10);

/// Least-squares line through `(t, ln e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub r2: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub y_star: DVector<f64>,
    /// `max_i ‖y_i(T) − y*‖`.
    pub final_output_error: f64,
    pub settling_epsilon: f64,
    /// `None` when the error is still above `settling_epsilon` at the end.
    pub settling_time: Option<f64>,
    /// Fit of the output error over its fall from 1e-1 to 1e-4.
    pub output_fit: Option<DecayFit>,
    /// `max_t ‖(rᵀ⊗I) v(t)‖`.
    pub rv_drift: f64,
    /// `max_t ‖(rᵀ⊗I) z(t) − r‖`.
    pub rz_drift: f64,
    pub z_positivity_min: f64,
    pub z_eigvec_error: f64,
    pub z_fit: Option<DecayFit>,
    pub observer_error_final: Option<f64>,
    /// `‖Σ ∇f_i(y_i(T))‖`; NaN if a gradient cannot be evaluated.
    pub optimality_residual: f64,
}

/// First sample time after which `errors` stays strictly below `eps`.
pub fn settling_time(times: &[f64], errors: &[f64], eps: f64) -> Option<f64> {
    let mut idx = errors.len();
    while idx > 0 && errors[idx - 1] < eps {
        idx -= 1;
    }
    (idx < errors.len()).then(|| times[idx])
}

/// Linear regression of `ln e` on `t`. Samples with `e ≤ 0` are skipped.
pub fn log_linear_fit(times: &[f64], errors: &[f64]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = stl / stt;
    let r2 = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    Some(DecayFit {
        slope,
        r2,
        samples: pts.len(),
    })
}

/// Fit over the stretch where the error falls from `hi` to `lo`: from the
/// moment it stays below `hi` until it first reaches `lo` (or the end).
/// Needs at least 20 samples spanning two decades.
fn window_fit(times: &[f64], errors: &[f64], (hi, lo): (f64, f64)) -> Option<DecayFit> {
    let start = times.iter().position(|t| Some(*t) == settling_time(times, errors, hi))?;
    let end = errors[start..]
        .iter()
        .position(|e| *e <= lo)
        .map_or(errors.len(), |k| start + k + 1);
    let window = &errors[start..end];
    if window.len() < FIT_MIN_SAMPLES {
        return None;
    }
    let max = window.iter().cloned().fold(f64::MIN, f64::max);
    let min = window.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || (max / min).log10() < FIT_MIN_DECADES {
        return None;
    }
    log_linear_fit(&times[start..end], window)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-sample `max_i ‖y_i(t) − y*‖`.
pub(crate) fn output_errors(cl: &ClosedLoop<'_>, traj: &Trajectory, y_star: &DVector<f64>) -> Vec<f64> {
    traj.states
        .iter()
        .map(|s| {
            cl.outputs(s)
                .iter()
                .map(|y| (y - y_star).norm())
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn compute_metrics(cl: &ClosedLoop<'_>, traj: &Trajectory, y_star: &DVector<f64>, settling_epsilon: f64) -> Metrics {
    let l = cl.layout();
    let r = &cl.spectral().r;
    let n = l.agents;
    let errors = output_errors(cl, traj, y_star);

    let mut rv_drift: f64 = 0.0;
    let mut rz_drift: f64 = 0.0;
    let mut z_positivity_min = f64::INFINITY;
    let mut z_errors = Vec::with_capacity(traj.len());
    for s in &traj.states {
        let mut rv = vec![0.0; l.q];
        let mut rz = vec![0.0; n];
        let mut z_err = 0.0;
        for i in 0..n {
            for (acc, v) in rv.iter_mut().zip(l.v(s, i)) {
                *acc += r[i] * v;
            }
            let zi = l.z(s, i);
            for (k, (acc, z)) in rz.iter_mut().zip(zi).enumerate() {
                *acc += r[i] * z;
                z_err += (z - r[k]).powi(2);
            }
            z_positivity_min = z_positivity_min.min(zi[i]);
        }
        rv_drift = rv_drift.max(norm(&rv));
        let dz: Vec<f64> = rz.iter().zip(r.iter()).map(|(a, b)| a - b).collect();
        rz_drift = rz_drift.max(norm(&dz));
        z_errors.push(z_err.sqrt());
    }

    let last = traj.last_state();
    let observer_error_final = l.xhat.as_ref().map(|_| {
        let sq: f64 = (0..n)
            .map(|i| {
                let xh = l.xhat(last, i).expect("observer layout");
                l.x(last, i).iter().zip(xh).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        sq.sqrt()
    });

    let outputs = cl.outputs(last);
    let optimality_residual = cl
        .scenario()
        .agents
        .iter()
        .zip(&outputs)
        .try_fold(DVector::zeros(l.q), |acc, (a, y)| a.cost.gradient(y).map(|g| acc + g))
        .map_or(f64::NAN, |g| g.norm());

    Metrics {
        y_star: y_star.clone(),
        final_output_error: *errors.last().expect("non-empty trajectory"),
        settling_epsilon,
        settling_time: settling_time(&traj.times, &errors, settling_epsilon),
        output_fit: window_fit(&traj.times, &errors, OUTPUT_FIT_WINDOW),
        rv_drift,
        rz_drift,
        z_positivity_min,
        z_eigvec_error: *z_errors.last().expect("non-empty trajectory"),
        z_fit: window_fit(&traj.times, &z_errors, Z_FIT_WINDOW),
        observer_error_final,
        optimality_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(settling_time(&t, &[5.0, 0.5, 2.0, 0.5, 0.1], 1.0), Some(3.0));
        assert_eq!(settling_time(&t, &[0.0; 5], 1.0), Some(0.0));
        assert_eq!(settling_time(&t, &[5.0, 0.5, 0.1, 0.5, 2.0], 1.0), None);
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let f = log_linear_fit(&t, &e).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_requirements() {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let e: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let f = window_fit(&t, &e, (1e-1, 1e-4)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-9);
        // one decade only
        let short: Vec<f64> = t.iter().map(|t| 0.09 * (-0.1 * t).exp()).collect();
        assert!(window_fit(&t, &short, (1e-1, 1e-4)).is_none());
        // too few samples
        assert!(window_fit(&t[..10], &e[..10], (1e-1, 1e-4)).is_none());
    }
}

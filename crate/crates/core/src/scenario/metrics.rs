use std::fmt;

use super::trace::{Trace, TraceRecord};

/// Relative band around the true length for convergence [-].
pub const LENGTH_BAND: f64 = 0.05;
/// Minimum time a signal must remain in its band at the end of the trace
/// before it counts as converged [s].
pub const MIN_HOLD: f64 = 1.0;
/// Band for the tip settling time, relative to the step size [-].
pub const SETTLING_BAND: f64 = 0.02;
/// Peaks below either floor are excluded from the decay fit.
pub const PEAK_FLOOR_RELATIVE: f64 = 0.05;
pub const PEAK_FLOOR_ABSOLUTE: f64 = 0.2 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    /// Time from which the signal stays within its band.
    Converged(f64),
    NotConverged,
}

impl Convergence {
    pub fn time(&self) -> Option<f64> {
        match self {
            Convergence::Converged(t) => Some(*t),
            Convergence::NotConverged => None,
        }
    }
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Convergence::Converged(t) => write!(f, "{t:.3}"),
            Convergence::NotConverged => f.write_str("NotConverged"),
        }
    }
}

/// First time after which `|value - target| <= band * |target|` holds for
/// the rest of the samples, provided the tail lasts at least [`MIN_HOLD`]
/// (or covers the whole signal).
pub fn convergence_time(t: &[f64], value: &[f64], target: f64, band: f64) -> Convergence {
    let errors: Vec<f64> = value.iter().map(|v| (v - target).abs()).collect();
    settle_time(t, &errors, band * target.abs())
}

/// First time after which `error <= tol` for the rest of the samples,
/// with the same hold rule as [`convergence_time`].
fn settle_time(t: &[f64], error: &[f64], tol: f64) -> Convergence {
    let n = t.len().min(error.len());
    let inside = |k: usize| error[k] <= tol;
    if n == 0 || !inside(n - 1) {
        return Convergence::NotConverged;
    }
    let first = (0..n).rev().take_while(|&k| inside(k)).last().unwrap_or(n - 1);
    if first > 0 && t[n - 1] - t[first] < MIN_HOLD {
        return Convergence::NotConverged;
    }
    Convergence::Converged(t[first])
}

/// Exponential decay identified from the peaks of an oscillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Envelope decay rate `zeta * w0` [1/s].
    pub decay_rate: f64,
    pub damped_frequency: f64,
    pub natural_frequency: f64,
    pub zeta: f64,
    pub peaks: usize,
}

/// Peaks of `|x|`, refined by a parabola through the three samples around
/// each local maximum.
fn abs_peaks(t: &[f64], x: &[f64]) -> Vec<(f64, f64)> {
    let a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let mut peaks = Vec::new();
    for k in 1..a.len().saturating_sub(1) {
        if a[k] > a[k - 1] && a[k] >= a[k + 1] {
            let (y0, y1, y2) = (a[k - 1], a[k], a[k + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let offset = if denom < 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            let h = t[k + 1] - t[k];
            let peak = y1 - 0.25 * (y0 - y2) * offset;
            peaks.push((t[k] + offset * h, peak));
        }
    }
    peaks
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-decrement fit over the successive `|x|` peaks from `start` on.
/// Peaks are used until the first one that drops below the floors; at
/// least three are required.
pub fn fit_decay(t: &[f64], x: &[f64], start: f64) -> Option<DecayFit> {
    let from = t.iter().position(|&v| v >= start)?;
    let peaks = abs_peaks(&t[from..], &x[from..]);
    let first = peaks.first()?.1;
    let floor = (PEAK_FLOOR_RELATIVE * first).max(PEAK_FLOOR_ABSOLUTE);
    let used: Vec<(f64, f64)> = peaks.into_iter().take_while(|p| p.1 >= floor).collect();
    if used.len() < 3 {
        return None;
    }
    let times: Vec<f64> = used.iter().map(|p| p.0).collect();
    let logs: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let decay_rate = -slope(&times, &logs);
    let half_period = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let damped_frequency = std::f64::consts::PI / half_period;
    let natural_frequency = decay_rate.hypot(damped_frequency);
    Some(DecayFit {
        decay_rate,
        damped_frequency,
        natural_frequency,
        zeta: decay_rate / natural_frequency,
        peaks: used.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub seed: u64,
    pub aborted: bool,
    /// Time from which `L_bar` stays within [`LENGTH_BAND`] of the truth.
    pub length_convergence: Convergence,
    /// `100 |L_bar - L*| / L*` at the end of the trace [%].
    pub final_length_error_pct: f64,
    /// Decay of the dominant swing axis after damping switched on; `None`
    /// when damping never switched on.
    pub decay: Option<Option<DecayFit>>,
    /// Settling time after the last reference change, measured from that
    /// change; `None` when the reference never changes.
    pub tip_settling: Option<Convergence>,
    pub tip_steady_state_error: f64,
    /// Largest excursion past the target along the step direction,
    /// relative to the step size.
    pub tip_overshoot: Option<f64>,
    /// RMS of the angle estimation error over the run [rad].
    pub angle_rms_error: f64,
}

impl MetricsReport {
    pub fn has_not_converged(&self) -> bool {
        self.length_convergence == Convergence::NotConverged
            || self.tip_settling == Some(Convergence::NotConverged)
            || self.decay == Some(None)
    }

    pub const HEADER: &'static str = "scenario,seed,aborted,length_convergence_s,final_length_error_pct,zeta_fit,decay_rate,tip_settling_s,tip_steady_state_error_m,tip_overshoot,angle_rms_error_rad";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| format!("{x:.6}"));
        let decay = |f: fn(&DecayFit) -> f64| match self.decay {
            None => "na".to_string(),
            Some(None) => "NotConverged".to_string(),
            Some(Some(d)) => format!("{:.6}", f(&d)),
        };
        format!(
            "{},{},{},{},{:.4},{},{},{},{:.6},{},{:.6}",
            self.scenario_id,
            self.seed,
            self.aborted,
            self.length_convergence,
            self.final_length_error_pct,
            decay(|d| d.zeta),
            decay(|d| d.decay_rate),
            self.tip_settling.map_or_else(|| "na".to_string(), |c| c.to_string()),
            self.tip_steady_state_error,
            opt(self.tip_overshoot),
            self.angle_rms_error,
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in Self::HEADER.split(',').zip(self.csv_row().split(',')) {
            writeln!(f, "{name} = {value}")?;
        }
        Ok(())
    }
}

fn last_reference_change(records: &[TraceRecord]) -> Option<usize> {
    (1..records.len())
        .rev()
        .find(|&k| records[k].ref_x != records[k - 1].ref_x || records[k].ref_y != records[k - 1].ref_y)
}

fn tip_metrics(records: &[TraceRecord]) -> (Option<Convergence>, Option<f64>) {
    let Some(k0) = last_reference_change(records) else {
        return (None, None);
    };
    let target = [records[k0].ref_x, records[k0].ref_y];
    let start = [records[k0].tip_x, records[k0].tip_y];
    let step = [target[0] - start[0], target[1] - start[1]];
    let size = step[0].hypot(step[1]);
    if size == 0.0 {
        return (None, None);
    }
    let tail = &records[k0..];
    let t: Vec<f64> = tail.iter().map(|r| r.t - records[k0].t).collect();
    let err: Vec<f64> = tail
        .iter()
        .map(|r| (r.tip_x - target[0]).hypot(r.tip_y - target[1]))
        .collect();
    let settling = settle_time(&t, &err, SETTLING_BAND * size);
    let overshoot = tail
        .iter()
        .map(|r| ((r.tip_x - target[0]) * step[0] + (r.tip_y - target[1]) * step[1]) / (size * size))
        .fold(0.0, f64::max);
    (Some(settling), Some(overshoot))
}

pub fn evaluate_metrics(trace: &Trace) -> MetricsReport {
    let recs = &trace.records;
    let meta = &trace.meta;
    let t: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let lengths: Vec<f64> = recs.iter().map(|r| r.length_filtered).collect();
    let length_convergence = convergence_time(&t, &lengths, meta.true_length, LENGTH_BAND);
    let final_length_error_pct = recs
        .last()
        .map_or(f64::NAN, |r| 100.0 * (r.length_filtered - meta.true_length).abs() / meta.true_length);

    let decay = recs.iter().find(|r| r.damping_on).map(|on| {
        let after = recs.iter().filter(|r| r.t >= on.t);
        let (ax, ay) = after.fold((0.0f64, 0.0f64), |(a, b), r| (a.max(r.phi_x.abs()), b.max(r.phi_y.abs())));
        let x: Vec<f64> = recs.iter().map(|r| if ax >= ay { r.phi_x } else { r.phi_y }).collect();
        fit_decay(&t, &x, on.t)
    });

    let (tip_settling, tip_overshoot) = tip_metrics(recs);
    let tip_steady_state_error = recs
        .last()
        .map_or(f64::NAN, |r| (r.tip_x - r.ref_x).hypot(r.tip_y - r.ref_y));
    let angle_rms_error = if recs.is_empty() {
        f64::NAN
    } else {
        let sum: f64 = recs
            .iter()
            .map(|r| (r.phi_x_hat - r.phi_x).powi(2) + (r.phi_y_hat - r.phi_y).powi(2))
            .sum();
        (sum / recs.len() as f64).sqrt()
    };

    MetricsReport {
        scenario_id: meta.scenario_id.clone(),
        seed: meta.seed,
        aborted: meta.aborted.is_some(),
        length_convergence,
        final_length_error_pct,
        decay,
        tip_settling,
        tip_steady_state_error,
        tip_overshoot,
        angle_rms_error,
    }
}
